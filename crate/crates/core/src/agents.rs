//! Policies for the gluing task.
//!
//! - `random`: uniform over the contact actions and stop.
//! - `mlp`: a Q-network per tower size over a flat feature vector.
//! - `gn` / `gn-fc`: one graph-network Q-function for every size, on the
//!   contact graph or on the fully connected graph.
//! - `sim`: greedy search with the stability solver as a perfect simulator.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::rc::Rc;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{load_store, save_store, Mlp, ParameterStore, Tape, Tensor, Var};
use crate::env::{Action, EpisodeState};
use crate::gn::{GNConfig, GraphBatch, GraphNet};
use crate::rng::StreamRng;
use crate::scene::{pair_list, GraphMode, SceneGraph};
use crate::stability::settle;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentKind {
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "mlp")]
    Mlp,
    #[serde(rename = "gn-fc")]
    GnFull,
    #[serde(rename = "gn")]
    Gn,
    #[serde(rename = "sim")]
    Sim,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [Self::Random, Self::Mlp, Self::GnFull, Self::Gn, Self::Sim];

    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Mlp => "mlp",
            Self::GnFull => "gn-fc",
            Self::Gn => "gn",
            Self::Sim => "sim",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Self::Mlp | Self::GnFull | Self::Gn)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown agent {s:?} (random|mlp|gn-fc|gn|sim)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyDecision {
    pub action: Action,
    /// Index into the agent's action space.
    pub index: usize,
    pub scores: Option<Vec<f64>>,
    pub was_exploratory: bool,
}

/// Lowest index among the maxima.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// With probability `epsilon` a uniform index, otherwise the greedy one.
pub fn epsilon_greedy(q: &[f64], epsilon: f64, rng: &mut StreamRng) -> (usize, bool) {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        (rng.random_range(0..q.len()), true)
    } else {
        (argmax(q), false)
    }
}

/// Action `i` of a graph's action space: edges then stop.
pub fn graph_action(graph: &SceneGraph, i: usize) -> Action {
    if i < graph.n_edges() {
        Action::GluePair { a: graph.senders[i], b: graph.receivers[i] }
    } else {
        Action::Stop
    }
}

pub fn random_act(state: &EpisodeState, rng: &mut StreamRng) -> PolicyDecision {
    let contacts = state.tower.contacts();
    let i = rng.random_range(0..=contacts.len());
    let action = match contacts.get(i) {
        Some(c) => Action::GluePair { a: c.lower_id, b: c.upper_id },
        None => Action::Stop,
    };
    PolicyDecision { action, index: i, scores: None, was_exploratory: true }
}

/// Glue the contact that leaves the fewest blocks fallen until nothing falls.
pub fn simulation_act(state: &EpisodeState) -> Result<PolicyDecision> {
    let contacts = state.tower.contacts();
    let k = contacts.len();
    let stop = PolicyDecision { action: Action::Stop, index: k, scores: None, was_exploratory: false };
    if settle(&state.tower, &state.glue)?.stable {
        return Ok(stop);
    }
    let mut scores = vec![f64::INFINITY; k + 1];
    let mut best: Option<(usize, usize)> = None;
    for i in 0..k {
        if state.glue.is_glued(i) {
            continue;
        }
        let mut g = state.glue.clone();
        g.set(i, true);
        let fallen = settle(&state.tower, &g)?.n_fallen();
        scores[i] = fallen as f64;
        if best.is_none_or(|(_, f)| fallen < f) {
            best = Some((i, fallen));
        }
    }
    Ok(match best {
        Some((i, _)) => PolicyDecision {
            action: Action::GluePair { a: contacts[i].lower_id, b: contacts[i].upper_id },
            index: i,
            scores: Some(scores),
            was_exploratory: false,
        },
        None => stop,
    })
}

/// A Q-function over some observation of an episode state.
pub trait QModel {
    type Obs: Clone;

    fn observe(&self, state: &EpisodeState) -> Result<Self::Obs>;
    fn n_actions(&self, obs: &Self::Obs) -> usize;
    fn action(&self, obs: &Self::Obs, index: usize) -> Action;
    fn store(&self) -> &ParameterStore;
    fn store_mut(&mut self) -> &mut ParameterStore;
    /// Q-values of every observation flattened into one column, plus the
    /// offset of each observation's block.
    fn q_column(&self, tape: &mut Tape<'_>, obs: &[&Self::Obs]) -> (Var, Vec<usize>);

    /// Greedy Q-values of each observation evaluated with `store`.
    fn q_values_with(&self, store: &ParameterStore, obs: &[&Self::Obs]) -> Vec<Vec<f64>> {
        let mut tape = Tape::new(store);
        let (col, offsets) = self.q_column(&mut tape, obs);
        let data = tape.value(col).data();
        obs.iter()
            .zip(&offsets)
            .map(|(o, &off)| data[off..off + self.n_actions(o)].to_vec())
            .collect()
    }

    fn decide(&self, state: &EpisodeState, epsilon: f64, rng: &mut StreamRng) -> Result<PolicyDecision> {
        let obs = self.observe(state)?;
        let q = self.q_values_with(self.store(), &[&obs]).remove(0);
        let (index, was_exploratory) = epsilon_greedy(&q, epsilon, rng);
        Ok(PolicyDecision { action: self.action(&obs, index), index, scores: Some(q), was_exploratory })
    }
}

#[derive(Clone, Debug)]
pub struct GnAgent {
    pub net: GraphNet,
    pub store: ParameterStore,
}

impl GnAgent {
    pub fn new(config: GNConfig, rng: &mut StreamRng) -> Self {
        let mut store = ParameterStore::new();
        let net = GraphNet::new(&mut store, config, rng);
        Self { net, store }
    }

    pub fn mode(&self) -> GraphMode {
        self.net.config.mode
    }
}

impl QModel for GnAgent {
    type Obs = SceneGraph;

    fn observe(&self, state: &EpisodeState) -> Result<SceneGraph> {
        Ok(state.observation(self.mode()))
    }

    fn n_actions(&self, obs: &SceneGraph) -> usize {
        obs.n_edges() + 1
    }

    fn action(&self, obs: &SceneGraph, index: usize) -> Action {
        graph_action(obs, index)
    }

    fn store(&self) -> &ParameterStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    fn q_column(&self, tape: &mut Tape<'_>, obs: &[&SceneGraph]) -> (Var, Vec<usize>) {
        let batch = GraphBatch::new(obs);
        let out = self.net.forward(tape, &batch);
        // Reorder to [edges of g0, stop of g0, edges of g1, stop of g1, ...].
        let n_edges = batch.n_edges();
        let all = tape.concat_rows(&[out.edges, out.globals]);
        let mut order = Vec::with_capacity(n_edges + batch.n_graphs);
        let mut offsets = Vec::with_capacity(batch.n_graphs);
        for b in 0..batch.n_graphs {
            offsets.push(order.len());
            order.extend(batch.edge_offsets[b]..batch.edge_offsets[b + 1]);
            order.push(n_edges + b);
        }
        (tape.gather(all, Rc::from(order)), offsets)
    }
}

pub const MLP_HIDDEN: [usize; 3] = [256, 256, 256];

/// Flat Q-network for one tower size.
#[derive(Clone, Debug)]
pub struct MlpAgent {
    pub n_blocks: usize,
    pub mlp: Mlp,
    pub store: ParameterStore,
}

impl MlpAgent {
    pub fn n_objects(&self) -> usize {
        self.n_blocks + 1
    }

    pub fn e_fc(&self) -> usize {
        let n = self.n_objects();
        n * (n - 1) / 2
    }

    pub fn input_width(n_blocks: usize) -> usize {
        let n = n_blocks + 1;
        3 * n + n * (n - 1) / 2
    }

    pub fn new(n_blocks: usize, hidden: &[usize], rng: &mut StreamRng) -> Self {
        let n = n_blocks + 1;
        let e_fc = n * (n - 1) / 2;
        let mut widths = hidden.to_vec();
        widths.push(e_fc + 1);
        let mut store = ParameterStore::new();
        let mlp = Mlp::new(&mut store, "mlp", Self::input_width(n_blocks), &widths, false, rng);
        Self { n_blocks, mlp, store }
    }
}

/// Floor then blocks as (x, y, angle), then one glue flag per object pair in
/// lexicographic order.
pub fn mlp_features(state: &EpisodeState) -> Vec<f64> {
    let tower = &state.tower;
    let n = tower.n_objects();
    let mut f = Vec::with_capacity(MlpAgent::input_width(tower.n_blocks()));
    f.extend_from_slice(&[0.0, 0.0, 0.0]);
    for b in tower.blocks() {
        f.extend_from_slice(&[b.center.x, b.center.y, b.angle]);
    }
    for (a, b) in pair_list(n) {
        let glued = tower.contact_index(a, b).is_some_and(|i| state.glue.is_glued(i));
        f.push(if glued { 1.0 } else { 0.0 });
    }
    f
}

impl QModel for MlpAgent {
    type Obs = Vec<f64>;

    fn observe(&self, state: &EpisodeState) -> Result<Vec<f64>> {
        if state.tower.n_blocks() != self.n_blocks {
            return Err(Error::Config(format!(
                "MLP agent for {} blocks given a {}-block tower",
                self.n_blocks,
                state.tower.n_blocks()
            )));
        }
        Ok(mlp_features(state))
    }

    fn n_actions(&self, _obs: &Vec<f64>) -> usize {
        self.e_fc() + 1
    }

    fn action(&self, _obs: &Vec<f64>, index: usize) -> Action {
        match pair_list(self.n_objects()).get(index) {
            Some(&(a, b)) => Action::GluePair { a, b },
            None => Action::Stop,
        }
    }

    fn store(&self) -> &ParameterStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    fn q_column(&self, tape: &mut Tape<'_>, obs: &[&Vec<f64>]) -> (Var, Vec<usize>) {
        let width = Self::input_width(self.n_blocks);
        let data: Vec<f64> = obs.iter().flat_map(|o| o.iter().copied()).collect();
        let x = tape.input(Tensor::matrix(obs.len(), width, data));
        let q = self.mlp.apply(tape, x);
        let a = self.e_fc() + 1;
        let col = tape.reshape(q, &[obs.len() * a, 1]);
        (col, (0..obs.len()).map(|i| i * a).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentManifest {
    pub kind: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gn: Option<GNConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mlp_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mlp_hidden: Vec<usize>,
}

/// Any agent behind one interface.
#[derive(Clone, Debug)]
pub enum Agent {
    Random,
    Sim,
    Gn(GnAgent),
    /// One network per tower size.
    Mlp(BTreeMap<usize, MlpAgent>),
}

impl Agent {
    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Random => AgentKind::Random,
            Agent::Sim => AgentKind::Sim,
            Agent::Gn(g) if g.mode() == GraphMode::Full => AgentKind::GnFull,
            Agent::Gn(_) => AgentKind::Gn,
            Agent::Mlp(_) => AgentKind::Mlp,
        }
    }

    pub fn act(&self, state: &EpisodeState, epsilon: f64, rng: &mut StreamRng) -> Result<PolicyDecision> {
        match self {
            Agent::Random => Ok(random_act(state, rng)),
            Agent::Sim => simulation_act(state),
            Agent::Gn(g) => g.decide(state, epsilon, rng),
            Agent::Mlp(m) => {
                let n = state.tower.n_blocks();
                let agent = m
                    .get(&n)
                    .ok_or_else(|| Error::Config(format!("no MLP agent trained for {n} blocks")))?;
                agent.decide(state, epsilon, rng)
            }
        }
    }

    /// Write `agent.json` and parameter files into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let manifest = match self {
            Agent::Random | Agent::Sim => {
                AgentManifest { kind: self.kind(), gn: None, mlp_sizes: vec![], mlp_hidden: vec![] }
            }
            Agent::Gn(g) => {
                save_store(&dir.join("params.ckpt"), &g.store)?;
                AgentManifest {
                    kind: self.kind(),
                    gn: Some(g.net.config.clone()),
                    mlp_sizes: vec![],
                    mlp_hidden: vec![],
                }
            }
            Agent::Mlp(m) => {
                let mut hidden = Vec::new();
                for (n, a) in m {
                    save_store(&dir.join(format!("mlp_{n}.ckpt")), &a.store)?;
                    hidden = a.mlp.layers[..a.mlp.layers.len() - 1].iter().map(|l| l.fan_out).collect();
                }
                AgentManifest { kind: self.kind(), gn: None, mlp_sizes: m.keys().copied().collect(), mlp_hidden: hidden }
            }
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(dir.join("agent.json"), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("agent.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let m: AgentManifest = serde_json::from_str(&text)?;
        let mut rng = crate::rng::stream_rng(0, 0);
        Ok(match m.kind {
            AgentKind::Random => Agent::Random,
            AgentKind::Sim => Agent::Sim,
            AgentKind::Gn | AgentKind::GnFull => {
                let cfg = m.gn.ok_or_else(|| Error::Checkpoint("missing graph-network config".into()))?;
                let mut g = GnAgent::new(cfg, &mut rng);
                load_store(&dir.join("params.ckpt"), &mut g.store)?;
                Agent::Gn(g)
            }
            AgentKind::Mlp => {
                let mut map = BTreeMap::new();
                for n in m.mlp_sizes {
                    let mut a = MlpAgent::new(n, &m.mlp_hidden, &mut rng);
                    load_store(&dir.join(format!("mlp_{n}.ckpt")), &mut a.store)?;
                    map.insert(n, a);
                }
                Agent::Mlp(map)
            }
        })
    }
}
