use std::rc::Rc;

use super::*;
use crate::rng::stream_rng;

/// Compare analytic gradients against central differences for every scalar.
fn check_grads(store: &mut ParameterStore, f: &dyn Fn(&mut Tape<'_>) -> Var) {
    let r = gradient_check(store, 1e-5, f);
    assert!(r.max_rel_err < 1e-4, "{r:?}");
    assert!(r.n_checked > 0);
}

#[test]
fn square_gradient() {
    let mut store = ParameterStore::new();
    let x = store.add("x", Tensor::scalar(3.0));
    let mut tape = Tape::new(&store);
    let xv = tape.param(x);
    let y = tape.mul(xv, xv);
    let g = tape.backward(y);
    assert_eq!(g.get(x).item(), 6.0);
}

#[test]
fn segment_sum_forward_and_backward() {
    let mut store = ParameterStore::new();
    let a = store.add("a", Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]));
    let mut tape = Tape::new(&store);
    let av = tape.param(a);
    let s = tape.segment_sum(av, Rc::from(vec![1, 0, 1]), 3);
    assert_eq!(tape.value(s).data(), &[3.0, 4.0, 6.0, 8.0, 0.0, 0.0]);
    let w = tape.input(Tensor::from_rows(&[[1.0, 10.0], [2.0, 20.0], [3.0, 30.0]]));
    let p = tape.mul(s, w);
    let l = tape.sum(p);
    let g = tape.backward(l);
    assert_eq!(g.get(a).data(), &[2.0, 20.0, 1.0, 10.0, 2.0, 20.0]);
}

#[test]
fn gather_accumulates_repeated_rows() {
    let mut store = ParameterStore::new();
    let a = store.add("a", Tensor::from_rows(&[[1.0], [2.0]]));
    let mut tape = Tape::new(&store);
    let av = tape.param(a);
    let g = tape.gather(av, Rc::from(vec![0, 0, 1, 0]));
    let l = tape.sum(g);
    let grads = tape.backward(l);
    assert_eq!(grads.get(a).data(), &[3.0, 1.0]);
}

#[test]
fn finite_differences_match_on_mixed_graph() {
    for seed in 0..3 {
        let mut rng = stream_rng(seed, 0);
        let mut store = ParameterStore::new();
        let mlp = Mlp::new(&mut store, "mlp", 3, &[5, 4], true, &mut rng);
        let gru = GruCell::new(&mut store, "gru", 4, 4, &mut rng);
        let head = Linear::new(&mut store, "head", 8, 1, &mut rng);
        // Nonzero biases so every path is exercised.
        for id in store.ids().collect::<Vec<_>>() {
            if store.name(id).ends_with("/b") {
                for (i, x) in store.value_mut(id).data_mut().iter_mut().enumerate() {
                    *x = 0.1 * (i as f64 + 1.0) - 0.2;
                }
            }
        }
        let x = Tensor::from_rows(&[[0.3, -0.2, 0.9], [1.1, 0.4, -0.5], [-0.7, 0.8, 0.2]]);
        let senders: Rc<[usize]> = Rc::from(vec![0, 1, 2, 0]);
        let receivers: Rc<[usize]> = Rc::from(vec![1, 2, 0, 2]);
        let f = |tape: &mut Tape<'_>| {
            let xv = tape.input(x.clone());
            let hn = mlp.apply(tape, xv);
            let h0 = tape.scale(hn, 0.5);
            let h1 = gru.step(tape, hn, h0);
            let s = tape.gather(h1, senders.clone());
            let r = tape.gather(h1, receivers.clone());
            let e = tape.concat(&[s, r]);
            let logits = head.apply(tape, e);
            let agg = tape.segment_sum(logits, receivers.clone(), 3);
            let t = tape.tanh(agg);
            let m = tape.mean(t);
            let bce = tape.bce_with_logits(logits, vec![1.0, 0.0, 1.0, 0.0]);
            let sq = tape.squared_error(agg, vec![0.5, -0.5, 0.1]);
            let a = tape.add(bce, sq);
            let b = tape.sub(a, m);
            let rows = tape.concat_rows(&[b, m]);
            let rows = tape.reshape(rows, &[1, 2]);
            tape.sum(rows)
        };
        check_grads(&mut store, &f);
    }
}

#[test]
fn adam_first_step_moves_each_weight_by_lr() {
    let mut store = ParameterStore::new();
    let w = store.add("w", Tensor::from_rows(&[[1.0, -2.0, 0.5]]));
    let mut tape = Tape::new(&store);
    let wv = tape.param(w);
    let c = tape.input(Tensor::from_rows(&[[3.0, -1.0, 0.25]]));
    let p = tape.mul(wv, c);
    let l = tape.sum(p);
    let g = tape.backward(l);
    let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
    store.adam_step(&g, &cfg);
    let got = store.value(w).data();
    let want = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
    for (a, b) in got.iter().zip(want) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn adam_with_zero_gradient_is_a_no_op() {
    let mut store = ParameterStore::new();
    let w = store.add("w", Tensor::from_rows(&[[1.0, 2.0]]));
    let g = Gradients::zeros_like(&store);
    store.adam_step(&g, &AdamConfig::default());
    assert_eq!(store.value(w).data(), &[1.0, 2.0]);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut rng = stream_rng(7, 1);
    let mut store = ParameterStore::new();
    let mlp = Mlp::new(&mut store, "m", 2, &[3, 1], false, &mut rng);
    let mut tape = Tape::new(&store);
    let x = tape.input(Tensor::from_rows(&[[0.1, 0.2]]));
    let y = mlp.apply(&mut tape, x);
    let l = tape.squared_error(y, vec![1.0]);
    let g = tape.backward(l);
    store.adam_step(&g, &AdamConfig::default());

    let mut bytes = Vec::new();
    write_store(&mut bytes, &store).unwrap();
    assert_eq!(&bytes[..8], b"GLUECKPT");

    let mut fresh = ParameterStore::new();
    let mut rng2 = stream_rng(99, 1);
    Mlp::new(&mut fresh, "m", 2, &[3, 1], false, &mut rng2);
    read_store(&mut bytes.as_slice(), &mut fresh).unwrap();
    let mut again = Vec::new();
    write_store(&mut again, &fresh).unwrap();
    assert_eq!(bytes, again);
    assert_eq!(fresh.step_count(), 1);
}

#[test]
fn checkpoint_rejects_layout_mismatch() {
    let mut store = ParameterStore::new();
    store.add("a", Tensor::zeros(&[2, 2]));
    let mut bytes = Vec::new();
    write_store(&mut bytes, &store).unwrap();
    let mut other = ParameterStore::new();
    other.add("a", Tensor::zeros(&[3, 2]));
    assert!(read_store(&mut bytes.as_slice(), &mut other).is_err());
}

#[test]
fn gru_with_saturated_update_gate_keeps_state() {
    let mut rng = stream_rng(3, 0);
    let mut store = ParameterStore::new();
    let gru = GruCell::new(&mut store, "g", 2, 2, &mut rng);
    store.value_mut(gru.xz.b).data_mut().fill(60.0);
    let mut tape = Tape::new(&store);
    let x = tape.input(Tensor::from_rows(&[[0.4, -0.3]]));
    let h = tape.input(Tensor::from_rows(&[[0.25, -0.75]]));
    let h2 = gru.step(&mut tape, x, h);
    for (a, b) in tape.value(h2).data().iter().zip([0.25, -0.75]) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn three_chained_gru_steps_match_finite_differences() {
    for seed in 0..3 {
        let mut rng = stream_rng(seed, 2);
        let mut store = ParameterStore::new();
        let gru = GruCell::new(&mut store, "g", 3, 4, &mut rng);
        let xs = [
            Tensor::from_rows(&[[0.2, -0.4, 0.9], [1.0, 0.1, -0.3]]),
            Tensor::from_rows(&[[-0.5, 0.3, 0.0], [0.4, 0.4, 0.8]]),
            Tensor::from_rows(&[[0.7, -0.9, 0.2], [-0.1, 0.6, -0.6]]),
        ];
        let f = |tape: &mut Tape<'_>| {
            let mut h = tape.input(Tensor::zeros(&[2, 4]));
            for x in &xs {
                let xv = tape.input(x.clone());
                h = gru.step(tape, xv, h);
            }
            tape.squared_error(h, vec![0.5, -0.5, 0.25, 0.0, 0.1, 0.2, -0.3, 0.4])
        };
        check_grads(&mut store, &f);
    }
}

#[test]
fn mlp_shapes_and_zero_output() {
    let mut rng = stream_rng(1, 0);
    let mut store = ParameterStore::new();
    let mlp = Mlp::new(&mut store, "m", 64, &[64, 64, 64], false, &mut rng);
    let mut tape = Tape::new(&store);
    let x = tape.input(Tensor::full(&[3, 64], 0.1));
    let y = mlp.apply(&mut tape, x);
    assert_eq!(tape.value(y).shape(), &[3, 64]);
    drop(tape);
    for id in store.ids().collect::<Vec<_>>() {
        store.value_mut(id).data_mut().fill(0.0);
    }
    let mut tape = Tape::new(&store);
    let x = tape.input(Tensor::full(&[3, 64], 0.1));
    let y = mlp.apply(&mut tape, x);
    assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn zero_gru_gives_zero_state() {
    let mut rng = stream_rng(1, 0);
    let mut store = ParameterStore::new();
    let gru = GruCell::new(&mut store, "g", 2, 3, &mut rng);
    for id in store.ids().collect::<Vec<_>>() {
        store.value_mut(id).data_mut().fill(0.0);
    }
    let mut tape = Tape::new(&store);
    let x = tape.input(Tensor::zeros(&[1, 2]));
    let h = tape.input(Tensor::zeros(&[1, 3]));
    let h2 = gru.step(&mut tape, x, h);
    assert!(tape.value(h2).data().iter().all(|&v| v == 0.0));
}
