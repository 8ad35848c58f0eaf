use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{AdamConfig, ParameterStore, Tape};
use crate::generator::{generate, GeneratorConfig};
use crate::gn::{GNConfig, GraphBatch, GraphNet};
use crate::oracle;
use crate::rng::{derive_seed, stream_rng, StreamRng};
use crate::scene::{graph_view, GraphMode, SceneGraph};
use crate::stability::settle;
use crate::{Error, GlueConfig, Result, Tower};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupervisedTask {
    /// Does a randomly glued tower stand? One logit per graph.
    Stability,
    /// Which contacts belong to the minimal glue set? One logit per edge.
    Glue,
}

impl std::str::FromStr for SupervisedTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stability" => Ok(Self::Stability),
            "glue" => Ok(Self::Glue),
            other => Err(Error::Config(format!("unknown task {other:?} (stability|glue)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupervisedConfig {
    pub task: SupervisedTask,
    pub mode: GraphMode,
    /// Recurrent core steps.
    pub steps: usize,
    pub size: usize,
    pub train_scenes: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub max_updates: usize,
    pub eval_every: usize,
    /// Stop once held-out accuracy reaches this value.
    pub stop_at: Option<f64>,
    pub seed: u64,
    pub latent: usize,
    pub mlp_hidden: Vec<usize>,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        Self {
            task: SupervisedTask::Stability,
            mode: GraphMode::Sparse,
            steps: 3,
            size: 5,
            train_scenes: 5_000,
            batch_size: 16,
            lr: 1e-4,
            max_updates: 20_000,
            eval_every: 250,
            stop_at: None,
            seed: 0,
            latent: 64,
            mlp_hidden: vec![64, 64],
        }
    }
}

impl SupervisedConfig {
    /// Held-out scenes: one for every nine training scenes.
    pub fn test_scenes(&self) -> usize {
        self.train_scenes.div_ceil(9)
    }

    fn gn(&self) -> GNConfig {
        GNConfig { latent: self.latent, mlp_hidden: self.mlp_hidden.clone(), steps: self.steps, mode: self.mode }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub update: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct SupervisedReport {
    pub config: SupervisedConfig,
    pub curve: Vec<CurvePoint>,
    pub net: GraphNet,
    pub store: ParameterStore,
    /// Fraction of positive labels in the held-out set.
    pub test_positive_rate: f64,
}

impl SupervisedReport {
    /// First evaluated update count at which accuracy reached `threshold`.
    pub fn steps_to(&self, threshold: f64) -> Option<usize> {
        self.curve.iter().find(|p| p.test_accuracy >= threshold).map(|p| p.update)
    }

    pub fn best_accuracy(&self) -> f64 {
        self.curve.iter().map(|p| p.test_accuracy).fold(0.0, f64::max)
    }

    pub fn final_accuracy(&self) -> f64 {
        self.curve.last().map_or(0.0, |p| p.test_accuracy)
    }
}

struct Example {
    graph: SceneGraph,
    /// One label per graph (stability) or per edge (glue).
    labels: Vec<f64>,
}

/// Random fair-coin glue and the resulting stability label.
pub fn stability_example(tower: &Tower, rng: &mut StreamRng, mode: GraphMode) -> Result<(SceneGraph, bool)> {
    let bits = (0..tower.contacts().len()).map(|_| rng.random_bool(0.5)).collect();
    let glue = GlueConfig::from_bits(bits);
    let stable = settle(tower, &glue)?.stable;
    Ok((graph_view(tower, &glue, mode), stable))
}

/// Per-edge membership in the oracle's minimal glue witness, on the unglued
/// tower.
pub fn glue_labels(tower: &Tower, mode: GraphMode) -> Result<(SceneGraph, Vec<f64>)> {
    let witness = oracle::solve(tower)?.min_glue_witness;
    let graph = graph_view(tower, &GlueConfig::empty(tower.contacts().len()), mode);
    let labels = graph
        .edge_contact
        .iter()
        .map(|c| match c {
            Some(i) if witness.is_glued(*i) => 1.0,
            _ => 0.0,
        })
        .collect();
    Ok((graph, labels))
}

fn build_examples(cfg: &SupervisedConfig) -> Result<Vec<Example>> {
    let total = cfg.train_scenes + cfg.test_scenes();
    let gcfg = GeneratorConfig {
        sizes: vec![cfg.size],
        count_per_size: total,
        seed: derive_seed(cfg.seed, &[0x5c]),
        ..GeneratorConfig::default()
    };
    let (towers, _) = generate(&gcfg)?;
    let mut rng = stream_rng(derive_seed(cfg.seed, &[0x91]), 0);
    towers
        .iter()
        .map(|t| match cfg.task {
            SupervisedTask::Stability => {
                let (graph, stable) = stability_example(t, &mut rng, cfg.mode)?;
                Ok(Example { graph, labels: vec![if stable { 1.0 } else { 0.0 }] })
            }
            SupervisedTask::Glue => {
                let (graph, labels) = glue_labels(t, cfg.mode)?;
                Ok(Example { graph, labels })
            }
        })
        .collect()
}

fn logits(net: &GraphNet, tape: &mut Tape<'_>, task: SupervisedTask, batch: &GraphBatch, steps: usize) -> crate::diff::Var {
    let out = net.forward_steps(tape, batch, steps);
    match task {
        SupervisedTask::Stability => out.globals,
        SupervisedTask::Glue => out.edges,
    }
}

fn accuracy(net: &GraphNet, store: &ParameterStore, cfg: &SupervisedConfig, test: &[Example]) -> f64 {
    let (mut correct, mut total) = (0usize, 0usize);
    for chunk in test.chunks(64) {
        let graphs: Vec<&SceneGraph> = chunk.iter().map(|e| &e.graph).collect();
        let batch = GraphBatch::new(&graphs);
        let mut tape = Tape::new(store);
        let out = logits(net, &mut tape, cfg.task, &batch, cfg.steps);
        let labels = chunk.iter().flat_map(|e| e.labels.iter());
        for (&z, &y) in tape.value(out).data().iter().zip(labels) {
            correct += usize::from((z > 0.0) == (y > 0.5));
            total += 1;
        }
    }
    correct as f64 / total.max(1) as f64
}

/// Train a graph network on one supervised sub-task and record held-out
/// accuracy every `eval_every` updates.
pub fn run_supervised(cfg: &SupervisedConfig) -> Result<SupervisedReport> {
    if cfg.batch_size == 0 || cfg.eval_every == 0 || cfg.train_scenes == 0 {
        return Err(Error::Config("batch size, eval interval and scene count must be positive".into()));
    }
    let examples = build_examples(cfg)?;
    let (train, test) = examples.split_at(cfg.train_scenes);
    let test_labels: Vec<f64> = test.iter().flat_map(|e| e.labels.iter().copied()).collect();
    let test_positive_rate = test_labels.iter().sum::<f64>() / test_labels.len().max(1) as f64;

    let seed = derive_seed(cfg.seed, &[0x7a]);
    let mut store = ParameterStore::new();
    let net = GraphNet::new(&mut store, cfg.gn(), &mut stream_rng(seed, 0));
    let mut rng = stream_rng(seed, 1);
    let adam = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    let mut curve = Vec::new();
    let (mut loss_sum, mut n_loss) = (0.0, 0usize);
    for update in 1..=cfg.max_updates {
        let mut idx = Vec::with_capacity(cfg.batch_size);
        while idx.len() < cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let graphs: Vec<&SceneGraph> = idx.iter().map(|&i| &train[i].graph).collect();
        let labels: Vec<f64> = idx.iter().flat_map(|&i| train[i].labels.iter().copied()).collect();
        let batch = GraphBatch::new(&graphs);
        let grads = {
            let mut tape = Tape::new(&store);
            let z = logits(&net, &mut tape, cfg.task, &batch, cfg.steps);
            let loss = tape.bce_with_logits(z, labels);
            loss_sum += tape.value(loss).item();
            n_loss += 1;
            tape.backward(loss)
        };
        store.adam_step(&grads, &adam);
        if update % cfg.eval_every == 0 || update == cfg.max_updates {
            let acc = accuracy(&net, &store, cfg, test);
            curve.push(CurvePoint { update, train_loss: loss_sum / n_loss as f64, test_accuracy: acc });
            loss_sum = 0.0;
            n_loss = 0;
            if cfg.stop_at.is_some_and(|t| acc >= t) {
                break;
            }
        }
    }
    Ok(SupervisedReport { config: cfg.clone(), curve, net, store, test_positive_rate })
}

pub fn write_curve<W: Write>(w: W, curve: &[CurvePoint]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for p in curve {
        wr.serialize(p)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::sample_tower;

    #[test]
    fn all_glued_scenes_are_labelled_stable() {
        let mut rng = stream_rng(0, 0);
        let t = sample_tower(5, &GeneratorConfig::default(), &mut rng).unwrap();
        let g = GlueConfig::full(5);
        assert!(settle(&t, &g).unwrap().stable);
    }

    #[test]
    fn glue_labels_sum_to_min_glue_size() {
        let mut rng = stream_rng(1, 0);
        for _ in 0..10 {
            let t = sample_tower(4, &GeneratorConfig::default(), &mut rng).unwrap();
            let (g, labels) = glue_labels(&t, GraphMode::Sparse).unwrap();
            assert_eq!(labels.len(), g.n_edges());
            let min = oracle::solve(&t).unwrap().min_glue_size;
            assert_eq!(labels.iter().sum::<f64>() as usize, min);
            let (gf, lf) = glue_labels(&t, GraphMode::Full).unwrap();
            assert_eq!(lf.len(), gf.n_edges());
            assert_eq!(lf.iter().sum::<f64>() as usize, min);
        }
    }

    #[test]
    fn small_run_is_reproducible() {
        let cfg = SupervisedConfig {
            train_scenes: 45,
            max_updates: 12,
            eval_every: 4,
            size: 3,
            latent: 8,
            mlp_hidden: vec![8],
            steps: 1,
            lr: 1e-3,
            ..Default::default()
        };
        let a = run_supervised(&cfg).unwrap();
        let b = run_supervised(&cfg).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.curve.len(), 3);
        assert_eq!(cfg.test_scenes(), 5);
        let glue = SupervisedConfig { task: SupervisedTask::Glue, ..cfg };
        let r = run_supervised(&glue).unwrap();
        assert!(r.final_accuracy() > 0.0);
        let mut out = Vec::new();
        write_curve(&mut out, &r.curve).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with("update,train_loss,test_accuracy\n"));
    }
}
