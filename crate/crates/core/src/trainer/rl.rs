use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::rc::Rc;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::pool::TowerPool;
use super::replay::ReplayBuffer;
use crate::agents::{epsilon_greedy, Agent, AgentKind, GnAgent, MlpAgent, QModel, MLP_HIDDEN};
use crate::diff::{AdamConfig, ParameterStore, Tape};
use crate::env::{reset_with_cap, DEFAULT_MAX_STEPS};
use crate::gn::GNConfig;
use crate::oracle::scaled_reward;
use crate::rng::{derive_seed, stream_rng, StreamRng};
use crate::scene::GraphMode;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub lr: f64,
    /// Replayed transitions learned per new environment transition.
    pub replay_ratio: usize,
    pub replay_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_steps: u64,
    pub curriculum_interval: u64,
    /// Episodes per run (per size for MLP agents).
    pub episodes: u64,
    pub sizes: Vec<usize>,
    pub seed: u64,
    /// Copy parameters into a target network every this many updates.
    pub target_period: Option<u64>,
    pub max_steps: usize,
    pub gn: GNConfig,
    pub mlp_hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            batch_size: 16,
            lr: 1e-4,
            replay_ratio: 16,
            replay_capacity: 100_000,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_steps: 100_000,
            curriculum_interval: 10_000,
            episodes: 300_000,
            sizes: (2..=10).collect(),
            seed: 0,
            target_period: None,
            max_steps: DEFAULT_MAX_STEPS,
            gn: GNConfig::default(),
            mlp_hidden: MLP_HIDDEN.to_vec(),
        }
    }
}

impl TrainConfig {
    /// 300k episodes over sizes 2-10.
    pub fn full_scale(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    /// 10k episodes over sizes 2-4 with the curriculum and exploration
    /// schedule shrunk to fit.
    pub fn desk(seed: u64) -> Self {
        Self {
            episodes: 10_000,
            sizes: vec![2, 3, 4],
            curriculum_interval: 2_500,
            epsilon_steps: 20_000,
            seed,
            ..Self::default()
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "full" => Ok(Self::full_scale(seed)),
            "desk" => Ok(Self::desk(seed)),
            other => Err(Error::Config(format!("unknown training preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.batch_size == 0 || self.replay_ratio == 0 {
            return Err(Error::Config("batch size and replay ratio must be positive".into()));
        }
        if self.sizes.is_empty() || self.curriculum_interval == 0 {
            return Err(Error::Config("need at least one size and a positive curriculum interval".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, ..AdamConfig::default() }
    }

    /// Minibatch updates per environment step.
    fn updates_per_step(&self) -> usize {
        (self.replay_ratio / self.batch_size).max(1)
    }
}

/// Linear anneal from `epsilon_start` to `epsilon_end`, then flat.
pub fn epsilon_at(cfg: &TrainConfig, step: u64) -> f64 {
    if step >= cfg.epsilon_steps {
        return cfg.epsilon_end;
    }
    let frac = step as f64 / cfg.epsilon_steps as f64;
    cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac
}

/// Sizes available at `episode`: one more of the sorted list every
/// `interval` episodes.
pub fn unlocked_sizes(sizes: &[usize], episode: u64, interval: u64) -> Vec<usize> {
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    let n = ((episode / interval) as usize + 1).min(sorted.len());
    sorted.truncate(n);
    sorted
}

#[derive(Clone, Debug)]
pub struct Transition<O> {
    pub obs: O,
    pub action: usize,
    pub reward: f64,
    /// `None` for terminal transitions.
    pub next: Option<O>,
}

/// One Q-learning step on a minibatch. Returns the loss before the update.
pub fn q_update<M: QModel>(
    model: &mut M,
    target: Option<&ParameterStore>,
    batch: &[&Transition<M::Obs>],
    gamma: f64,
    adam: &AdamConfig,
) -> f64 {
    let next_obs: Vec<&M::Obs> = batch.iter().filter_map(|t| t.next.as_ref()).collect();
    let next_q = if next_obs.is_empty() {
        Vec::new()
    } else {
        model.q_values_with(target.unwrap_or(model.store()), &next_obs)
    };
    let mut next_iter = next_q.iter();
    let targets: Vec<f64> = batch
        .iter()
        .map(|t| match t.next {
            Some(_) => {
                let q = next_iter.next().expect("one row per non-terminal transition");
                t.reward + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
            None => t.reward,
        })
        .collect();
    let (loss, grads) = {
        let mut tape = Tape::new(model.store());
        let obs: Vec<&M::Obs> = batch.iter().map(|t| &t.obs).collect();
        let (col, offsets) = model.q_column(&mut tape, &obs);
        let idx: Vec<usize> = batch.iter().zip(&offsets).map(|(t, &o)| o + t.action).collect();
        let picked = tape.gather(col, Rc::from(idx));
        let loss = tape.squared_error(picked, targets);
        (tape.value(loss).item(), tape.backward(loss))
    };
    model.store_mut().adam_step(&grads, adam);
    loss
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: u64,
    pub size: usize,
    #[serde(rename = "return")]
    pub ret: i64,
    pub scaled_return: f64,
    pub epsilon: f64,
    /// Mean loss of the updates made during the episode.
    pub loss: Option<f64>,
}

#[derive(Debug)]
pub struct RlReport {
    pub agent: Agent,
    pub log: Vec<EpisodeLog>,
}

struct Learner<'a, M: QModel> {
    model: M,
    target: Option<ParameterStore>,
    buffer: ReplayBuffer<Transition<M::Obs>>,
    cfg: &'a TrainConfig,
    adam: AdamConfig,
    step: u64,
    updates: u64,
    act_rng: StreamRng,
    replay_rng: StreamRng,
}

impl<M: QModel> Learner<'_, M> {
    fn episode(&mut self, pool: &TowerPool, size: usize, index: usize, episode: u64) -> Result<EpisodeLog> {
        let tower = Arc::clone(pool.tower(size, index)?);
        let oracle = pool.oracle(size, index)?;
        let mut state = reset_with_cap(tower, oracle.min_glue_size, self.cfg.max_steps);
        let mut obs = self.model.observe(&state)?;
        let epsilon = epsilon_at(self.cfg, self.step);
        let (mut loss_sum, mut n_loss) = (0.0, 0usize);
        loop {
            let eps = epsilon_at(self.cfg, self.step);
            let q = self.model.q_values_with(self.model.store(), &[&obs]).remove(0);
            let (index, _) = epsilon_greedy(&q, eps, &mut self.act_rng);
            let r = state.step(self.model.action(&obs, index))?;
            let next = if r.done { None } else { Some(self.model.observe(&state)?) };
            self.buffer.push(Transition { obs, action: index, reward: r.reward as f64, next: next.clone() });
            self.step += 1;
            if self.buffer.len() >= self.cfg.batch_size {
                for _ in 0..self.cfg.updates_per_step() {
                    let batch = self.buffer.sample(self.cfg.batch_size, &mut self.replay_rng)?;
                    loss_sum += q_update(&mut self.model, self.target.as_ref(), &batch, self.cfg.gamma, &self.adam);
                    n_loss += 1;
                    self.updates += 1;
                    if let (Some(period), Some(t)) = (self.cfg.target_period, self.target.as_mut()) {
                        if self.updates % period == 0 {
                            t.copy_values_from(self.model.store())?;
                        }
                    }
                }
            }
            match next {
                Some(o) => obs = o,
                None => break,
            }
        }
        Ok(EpisodeLog {
            episode,
            size,
            ret: state.points,
            scaled_return: scaled_reward(&oracle, state.points),
            epsilon,
            loss: (n_loss > 0).then(|| loss_sum / n_loss as f64),
        })
    }
}

fn learner<M: QModel>(model: M, cfg: &TrainConfig, seed: u64) -> Result<Learner<'_, M>> {
    let target = cfg.target_period.map(|_| model.store().clone());
    Ok(Learner {
        model,
        target,
        buffer: ReplayBuffer::new(cfg.replay_capacity)?,
        cfg,
        adam: cfg.adam(),
        step: 0,
        updates: 0,
        act_rng: stream_rng(seed, 1),
        replay_rng: stream_rng(seed, 2),
    })
}

fn train_curriculum<M: QModel>(
    l: &mut Learner<'_, M>,
    pool: &TowerPool,
    sizes: &[usize],
    seed: u64,
    log: &mut Vec<EpisodeLog>,
) -> Result<()> {
    let mut pick = stream_rng(seed, 3);
    for ep in 0..l.cfg.episodes {
        let unlocked = unlocked_sizes(sizes, ep, l.cfg.curriculum_interval);
        let size = unlocked[pick.random_range(0..unlocked.len())];
        let index = pick.random_range(0..pool.count(size));
        log.push(l.episode(pool, size, index, ep)?);
    }
    Ok(())
}

/// Train a learned agent on towers from `pool`.
///
/// Graph-network agents train one parameter set with the size curriculum;
/// MLP agents train an independent network per size for `episodes` each.
pub fn run_rl(kind: AgentKind, pool: &TowerPool, cfg: &TrainConfig) -> Result<RlReport> {
    cfg.validate()?;
    pool.require_sizes(&cfg.sizes)?;
    let mut log = Vec::new();
    let agent = match kind {
        AgentKind::Gn | AgentKind::GnFull => {
            let mode = if kind == AgentKind::Gn { GraphMode::Sparse } else { GraphMode::Full };
            let seed = derive_seed(cfg.seed, &[kind as u64]);
            let model = GnAgent::new(GNConfig { mode, ..cfg.gn.clone() }, &mut stream_rng(seed, 0));
            let mut l = learner(model, cfg, seed)?;
            train_curriculum(&mut l, pool, &cfg.sizes, seed, &mut log)?;
            Agent::Gn(l.model)
        }
        AgentKind::Mlp => {
            let mut nets = BTreeMap::new();
            for &n in &cfg.sizes {
                let seed = derive_seed(cfg.seed, &[kind as u64, n as u64]);
                let model = MlpAgent::new(n, &cfg.mlp_hidden, &mut stream_rng(seed, 0));
                let mut l = learner(model, cfg, seed)?;
                train_curriculum(&mut l, pool, &[n], seed, &mut log)?;
                nets.insert(n, l.model);
            }
            Agent::Mlp(nets)
        }
        AgentKind::Random | AgentKind::Sim => {
            return Err(Error::Config(format!("agent {kind} has nothing to train")));
        }
    };
    Ok(RlReport { agent, log })
}

pub fn write_rl_log<W: Write>(w: W, log: &[EpisodeLog]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for row in log {
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}

impl RlReport {
    /// `agent/` checkpoint directory plus `train_log.csv` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.agent.save(&dir.join("agent"))?;
        write_rl_log(std::fs::File::create(dir.join("train_log.csv"))?, &self.log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Action;
    use crate::generator::{generate, GeneratorConfig};

    #[test]
    fn epsilon_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(epsilon_at(&cfg, 0), 1.0);
        assert_eq!(epsilon_at(&cfg, 100_000), 0.01);
        assert_eq!(epsilon_at(&cfg, 250_000), 0.01);
        assert!((epsilon_at(&cfg, 50_000) - 0.505).abs() < 1e-12);
    }

    #[test]
    fn curriculum_unlocks_one_size_per_interval() {
        let sizes: Vec<usize> = (2..=10).collect();
        assert_eq!(unlocked_sizes(&sizes, 0, 10_000), vec![2]);
        assert_eq!(unlocked_sizes(&sizes, 25_000, 10_000), vec![2, 3, 4]);
        assert_eq!(unlocked_sizes(&sizes, 10_000_000, 10_000), sizes);
        assert_eq!(unlocked_sizes(&[5, 2, 3], 12_000, 10_000), vec![2, 3]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { gamma: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::desk(0).validate().is_ok());
        let cfg = TrainConfig::default();
        assert_eq!(cfg.updates_per_step(), 1);
        assert_eq!((cfg.gamma, cfg.batch_size, cfg.lr, cfg.replay_ratio), (0.9, 16, 1e-4, 16));
    }

    /// A one-state bandit: stop pays 3, "glue" pays -1 and leads to a state
    /// where stop pays 3 again.
    struct Bandit {
        store: ParameterStore,
        q: crate::diff::ParamId,
    }

    impl QModel for Bandit {
        type Obs = usize;

        fn observe(&self, _: &crate::env::EpisodeState) -> Result<usize> {
            Ok(0)
        }
        fn n_actions(&self, _: &usize) -> usize {
            2
        }
        fn action(&self, _: &usize, i: usize) -> Action {
            if i == 0 {
                Action::GluePair { a: 0, b: 1 }
            } else {
                Action::Stop
            }
        }
        fn store(&self) -> &ParameterStore {
            &self.store
        }
        fn store_mut(&mut self) -> &mut ParameterStore {
            &mut self.store
        }
        fn q_column(&self, tape: &mut Tape<'_>, obs: &[&usize]) -> (crate::diff::Var, Vec<usize>) {
            let q = tape.param(self.q);
            let rows: Vec<_> = obs.iter().map(|_| q).collect();
            let col = tape.concat_rows(&rows);
            let n = obs.len();
            (tape.reshape(col, &[2 * n, 1]), (0..n).map(|i| 2 * i).collect())
        }
    }

    fn bandit() -> Bandit {
        let mut store = ParameterStore::new();
        let q = store.add("q", crate::diff::Tensor::matrix(2, 1, vec![0.0, 0.0]));
        Bandit { store, q }
    }

    #[test]
    fn terminal_and_zero_gamma_targets() {
        let mut m = bandit();
        let t = Transition { obs: 0usize, action: 1, reward: 5.0, next: None };
        // Loss against a terminal target of exactly 5 from Q = 0.
        let loss = q_update(&mut m, None, &[&t], 0.9, &AdamConfig::default());
        assert_eq!(loss, 25.0);
        let mut m = bandit();
        m.store.value_mut(m.q).data_mut().copy_from_slice(&[7.0, 7.0]);
        let t = Transition { obs: 0usize, action: 0, reward: -1.0, next: Some(0) };
        let loss = q_update(&mut m, None, &[&t], 0.0, &AdamConfig::default());
        assert!((loss - 64.0).abs() < 1e-9);
    }

    #[test]
    fn bandit_q_converges_to_best_return() {
        // Returns: stop = 3; glue then stop = -1 + 0.9 * 3 = 1.7.
        let mut m = bandit();
        let stop = Transition { obs: 0usize, action: 1, reward: 3.0, next: None };
        let glue = Transition { obs: 0usize, action: 0, reward: -1.0, next: Some(0) };
        let adam = AdamConfig { lr: 0.05, ..AdamConfig::default() };
        let batch = [&stop, &glue, &stop, &glue];
        let first = q_update(&mut m, None, &batch, 0.9, &adam);
        let mut last = first;
        for _ in 0..2000 {
            last = q_update(&mut m, None, &batch, 0.9, &adam);
        }
        let q = m.store.value(m.q).data().to_vec();
        assert!((q[1] - 3.0).abs() < 1e-2, "{q:?}");
        assert!((q[0] - 1.7).abs() < 1e-2, "{q:?}");
        assert!(q[1] > q[0]);
        assert!(last < first);
    }

    #[test]
    fn held_out_loss_falls_over_first_hundred_updates() {
        let mut m = bandit();
        let stop = Transition { obs: 0usize, action: 1, reward: 3.0, next: None };
        let adam = AdamConfig { lr: 1e-2, ..AdamConfig::default() };
        let held = [&stop];
        let eval = |m: &Bandit| {
            let q = m.q_values_with(&m.store, &[&0usize]).remove(0);
            (q[1] - 3.0).powi(2)
        };
        let before = eval(&m);
        for _ in 0..100 {
            q_update(&mut m, None, &held, 0.9, &adam);
        }
        assert!(eval(&m) < before);
    }

    fn tiny_pool() -> TowerPool {
        let gcfg = GeneratorConfig { sizes: vec![2, 3], count_per_size: 20, seed: 4, ..Default::default() };
        TowerPool::new(generate(&gcfg).unwrap().0)
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            episodes: 30,
            sizes: vec![2, 3],
            curriculum_interval: 15,
            epsilon_steps: 50,
            gn: GNConfig { latent: 8, mlp_hidden: vec![8], steps: 1, ..Default::default() },
            mlp_hidden: vec![16],
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn runs_are_reproducible_and_respect_the_curriculum() {
        let pool = tiny_pool();
        let cfg = tiny_cfg();
        let a = run_rl(AgentKind::Gn, &pool, &cfg).unwrap();
        let b = run_rl(AgentKind::Gn, &pool, &cfg).unwrap();
        let (mut la, mut lb) = (Vec::new(), Vec::new());
        write_rl_log(&mut la, &a.log).unwrap();
        write_rl_log(&mut lb, &b.log).unwrap();
        assert_eq!(la, lb);
        assert!(a.log[..15].iter().all(|e| e.size == 2));
        assert_eq!(a.log.len(), 30);
        let header = String::from_utf8(la).unwrap();
        assert!(header.starts_with("episode,size,return,scaled_return,epsilon,loss\n"));
    }

    #[test]
    fn mlp_trains_one_network_per_size() {
        let pool = tiny_pool();
        let cfg = TrainConfig { episodes: 10, ..tiny_cfg() };
        let r = run_rl(AgentKind::Mlp, &pool, &cfg).unwrap();
        let Agent::Mlp(nets) = &r.agent else { panic!() };
        assert_eq!(nets.keys().copied().collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(r.log.len(), 20);
        assert!(run_rl(AgentKind::Sim, &pool, &cfg).is_err());
        let missing = TrainConfig { sizes: vec![2, 7], ..cfg };
        assert!(run_rl(AgentKind::Gn, &pool, &missing).is_err());
    }

    #[test]
    fn target_network_option_runs() {
        let pool = tiny_pool();
        let cfg = TrainConfig { episodes: 5, target_period: Some(3), ..tiny_cfg() };
        assert_eq!(run_rl(AgentKind::GnFull, &pool, &cfg).unwrap().log.len(), 5);
    }
}
