use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use gluing_bench::towers;
use gluing_core::diff::{AdamConfig, ParameterStore, Tape};
use gluing_core::gn::{GNConfig, GraphBatch, GraphNet};
use gluing_core::oracle;
use gluing_core::rng::stream_rng;
use gluing_core::scene::{graph_view, GraphMode};
use gluing_core::stability::settle;
use gluing_core::GlueConfig;

fn bench_settle(c: &mut Criterion) {
    let mut g = c.benchmark_group("settle");
    for n in [2, 5, 10] {
        let ts = towers(n, 8);
        g.bench_with_input(BenchmarkId::from_parameter(n), &ts, |b, ts| {
            b.iter(|| {
                for t in ts {
                    black_box(settle(t, &GlueConfig::empty(t.contacts().len())).unwrap());
                }
            })
        });
    }
    g.finish();
}

fn bench_oracle(c: &mut Criterion) {
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    for n in [4, 7, 10] {
        let t = towers(n, 1).remove(0);
        g.bench_with_input(BenchmarkId::from_parameter(n), &t, |b, t| b.iter(|| black_box(oracle::solve(t).unwrap())));
    }
    g.finish();
}

fn graph_net(mode: GraphMode) -> (ParameterStore, GraphNet) {
    let mut store = ParameterStore::new();
    let net = GraphNet::new(&mut store, GNConfig { mode, ..GNConfig::default() }, &mut stream_rng(1, 0));
    (store, net)
}

fn bench_gn(c: &mut Criterion) {
    let ts = towers(5, 16);
    let mut g = c.benchmark_group("gn_batch16_5blocks");
    for mode in [GraphMode::Sparse, GraphMode::Full] {
        let graphs: Vec<_> = ts.iter().map(|t| graph_view(t, &GlueConfig::empty(t.contacts().len()), mode)).collect();
        let refs: Vec<_> = graphs.iter().collect();
        let batch = GraphBatch::new(&refs);
        let (store, net) = graph_net(mode);
        g.bench_function(BenchmarkId::new("q_values", format!("{mode:?}")), |b| {
            b.iter(|| black_box(net.decode_q(&store, &batch)))
        });
        g.bench_function(BenchmarkId::new("update", format!("{mode:?}")), |b| {
            b.iter_batched(
                || store.clone(),
                |mut s| {
                    let grads = {
                        let mut tape = Tape::new(&s);
                        let q = net.forward(&mut tape, &batch).edges;
                        let n = tape.value(q).len();
                        let loss = tape.squared_error(q, vec![0.0; n]);
                        tape.backward(loss)
                    };
                    s.adam_step(&grads, &AdamConfig::default());
                    s
                },
                BatchSize::LargeInput,
            )
        });
    }
    g.finish();
}

criterion_group!(benches, bench_settle, bench_oracle, bench_gn);
criterion_main!(benches);
