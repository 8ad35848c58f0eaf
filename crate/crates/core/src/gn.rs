//! Encode-process-decode graph network.
//!
//! Linear encoders lift node and edge features to the latent width and the
//! global latent starts at zero. The core applies a full graph-network block
//! (edge, node, global updates with sum aggregation) `T` times, feeding each
//! result through gated recurrent cells that hold the edge, node and global
//! state. A second block with its own parameters decodes, followed by an
//! edge head and a global head.

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{GruCell, Linear, Mlp, ParameterStore, Tape, Tensor, Var};
use crate::scene::{GraphMode, SceneGraph, NODE_FEATURES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GNConfig {
    pub latent: usize,
    /// Hidden layer widths of each edge/node/global MLP; the output layer
    /// has `latent` units.
    pub mlp_hidden: Vec<usize>,
    /// Recurrent message-passing steps.
    pub steps: usize,
    pub mode: GraphMode,
}

impl Default for GNConfig {
    fn default() -> Self {
        Self { latent: 64, mlp_hidden: vec![64, 64], steps: 3, mode: GraphMode::Sparse }
    }
}

/// Several graphs packed into one disjoint union.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub nodes: Tensor,
    pub edges: Tensor,
    pub senders: Rc<[usize]>,
    pub receivers: Rc<[usize]>,
    pub node_graph: Rc<[usize]>,
    pub edge_graph: Rc<[usize]>,
    pub n_graphs: usize,
    /// Start of each graph's edges; one extra entry at the end.
    pub edge_offsets: Vec<usize>,
}

impl GraphBatch {
    pub fn new(graphs: &[&SceneGraph]) -> Self {
        let (mut nodes, mut edges) = (Vec::new(), Vec::new());
        let (mut senders, mut receivers) = (Vec::new(), Vec::new());
        let (mut node_graph, mut edge_graph) = (Vec::new(), Vec::new());
        let mut edge_offsets = vec![0];
        let mut base = 0;
        for (gi, g) in graphs.iter().enumerate() {
            for f in &g.node_features {
                nodes.extend_from_slice(f);
                node_graph.push(gi);
            }
            edges.extend_from_slice(&g.edge_features);
            senders.extend(g.senders.iter().map(|s| s + base));
            receivers.extend(g.receivers.iter().map(|r| r + base));
            edge_graph.extend(std::iter::repeat_n(gi, g.n_edges()));
            base += g.n_nodes();
            edge_offsets.push(edges.len());
        }
        let n_nodes = node_graph.len();
        let n_edges = edge_graph.len();
        Self {
            nodes: Tensor::matrix(n_nodes, NODE_FEATURES, nodes),
            edges: Tensor::matrix(n_edges, 1, edges),
            senders: senders.into(),
            receivers: receivers.into(),
            node_graph: node_graph.into(),
            edge_graph: edge_graph.into(),
            n_graphs: graphs.len(),
            edge_offsets,
        }
    }

    pub fn single(g: &SceneGraph) -> Self {
        Self::new(&[g])
    }

    pub fn n_nodes(&self) -> usize {
        self.node_graph.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edge_graph.len()
    }
}

/// Edge, node and global latents.
#[derive(Clone, Copy, Debug)]
pub struct Latent {
    pub edges: Var,
    pub nodes: Var,
    pub globals: Var,
}

#[derive(Clone, Debug)]
pub struct BlockParams {
    pub f_e: Mlp,
    pub f_n: Mlp,
    pub f_g: Mlp,
}

impl BlockParams {
    fn new<R: Rng + ?Sized>(store: &mut ParameterStore, name: &str, cfg: &GNConfig, rng: &mut R) -> Self {
        let l = cfg.latent;
        let mut widths = cfg.mlp_hidden.clone();
        widths.push(l);
        // Every input is [state, encoded] (2l wide) except aggregates (l).
        Self {
            f_e: Mlp::new(store, &format!("{name}/f_e"), 8 * l, &widths, false, rng),
            f_n: Mlp::new(store, &format!("{name}/f_n"), 5 * l, &widths, false, rng),
            f_g: Mlp::new(store, &format!("{name}/f_g"), 4 * l, &widths, false, rng),
        }
    }
}

/// Outputs of the heads: one value per edge and one per graph.
#[derive(Clone, Copy, Debug)]
pub struct GnOutput {
    pub edges: Var,
    pub globals: Var,
}

#[derive(Clone, Debug)]
pub struct GraphNet {
    pub config: GNConfig,
    pub enc_n: Linear,
    pub enc_e: Linear,
    pub core: BlockParams,
    pub gru_e: GruCell,
    pub gru_n: GruCell,
    pub gru_g: GruCell,
    pub decoder: BlockParams,
    pub edge_head: Mlp,
    pub global_head: Mlp,
}

impl GraphNet {
    pub fn new<R: Rng + ?Sized>(store: &mut ParameterStore, config: GNConfig, rng: &mut R) -> Self {
        let l = config.latent;
        let mut head = config.mlp_hidden.clone();
        head.push(1);
        Self {
            enc_n: Linear::new(store, "gn/enc_n", NODE_FEATURES, l, rng),
            enc_e: Linear::new(store, "gn/enc_e", 1, l, rng),
            core: BlockParams::new(store, "gn/core", &config, rng),
            gru_e: GruCell::new(store, "gn/gru_e", l, l, rng),
            gru_n: GruCell::new(store, "gn/gru_n", l, l, rng),
            gru_g: GruCell::new(store, "gn/gru_g", l, l, rng),
            decoder: BlockParams::new(store, "gn/dec", &config, rng),
            edge_head: Mlp::new(store, "gn/head_e", l, &head, false, rng),
            global_head: Mlp::new(store, "gn/head_g", l, &head, false, rng),
            config,
        }
    }

    pub fn encode(&self, tape: &mut Tape<'_>, batch: &GraphBatch) -> Latent {
        let n = tape.input(batch.nodes.clone());
        let e = tape.input(batch.edges.clone());
        Latent {
            nodes: self.enc_n.apply(tape, n),
            edges: self.enc_e.apply(tape, e),
            globals: tape.input(Tensor::zeros(&[batch.n_graphs, self.config.latent])),
        }
    }

    /// One graph-network block over `[state, encoded]` inputs.
    pub fn gn_block(
        &self,
        tape: &mut Tape<'_>,
        params: &BlockParams,
        batch: &GraphBatch,
        state: Latent,
        encoded: Latent,
    ) -> Latent {
        let nodes = tape.concat(&[state.nodes, encoded.nodes]);
        let edges = tape.concat(&[state.edges, encoded.edges]);
        let globals = tape.concat(&[state.globals, encoded.globals]);

        let snd = tape.gather(nodes, batch.senders.clone());
        let rcv = tape.gather(nodes, batch.receivers.clone());
        let g_e = tape.gather(globals, batch.edge_graph.clone());
        let e_in = tape.concat(&[edges, snd, rcv, g_e]);
        let new_e = params.f_e.apply(tape, e_in);

        let n_nodes = batch.n_nodes();
        let out_agg = tape.segment_sum(new_e, batch.senders.clone(), n_nodes);
        let in_agg = tape.segment_sum(new_e, batch.receivers.clone(), n_nodes);
        let agg = tape.add(out_agg, in_agg);
        let g_n = tape.gather(globals, batch.node_graph.clone());
        let n_in = tape.concat(&[nodes, agg, g_n]);
        let new_n = params.f_n.apply(tape, n_in);

        let sum_n = tape.segment_sum(new_n, batch.node_graph.clone(), batch.n_graphs);
        let sum_e = tape.segment_sum(new_e, batch.edge_graph.clone(), batch.n_graphs);
        let g_in = tape.concat(&[globals, sum_n, sum_e]);
        let new_g = params.f_g.apply(tape, g_in);

        Latent { edges: new_e, nodes: new_n, globals: new_g }
    }

    /// `steps` recurrent core iterations starting from the encoded graph.
    pub fn process(&self, tape: &mut Tape<'_>, batch: &GraphBatch, encoded: Latent, steps: usize) -> Latent {
        let mut h = encoded;
        for _ in 0..steps {
            let m = self.gn_block(tape, &self.core, batch, h, encoded);
            h = Latent {
                edges: self.gru_e.step(tape, m.edges, h.edges),
                nodes: self.gru_n.step(tape, m.nodes, h.nodes),
                globals: self.gru_g.step(tape, m.globals, h.globals),
            };
        }
        h
    }

    pub fn decode(&self, tape: &mut Tape<'_>, batch: &GraphBatch, processed: Latent, encoded: Latent) -> GnOutput {
        let d = self.gn_block(tape, &self.decoder, batch, processed, encoded);
        GnOutput { edges: self.edge_head.apply(tape, d.edges), globals: self.global_head.apply(tape, d.globals) }
    }

    /// Encode, process with the configured step count, decode.
    pub fn forward(&self, tape: &mut Tape<'_>, batch: &GraphBatch) -> GnOutput {
        self.forward_steps(tape, batch, self.config.steps)
    }

    pub fn forward_steps(&self, tape: &mut Tape<'_>, batch: &GraphBatch, steps: usize) -> GnOutput {
        let enc = self.encode(tape, batch);
        let h = self.process(tape, batch, enc, steps);
        self.decode(tape, batch, h, enc)
    }

    /// Per graph: edge Q-values followed by the stop Q-value.
    pub fn decode_q(&self, store: &ParameterStore, batch: &GraphBatch) -> Vec<Vec<f64>> {
        let mut tape = Tape::new(store);
        let out = self.forward(&mut tape, batch);
        split_q(batch, tape.value(out.edges).data(), tape.value(out.globals).data())
    }

    pub fn q_values(&self, store: &ParameterStore, graph: &SceneGraph) -> Vec<f64> {
        self.decode_q(store, &GraphBatch::single(graph)).remove(0)
    }
}

/// Split flat per-edge and per-graph outputs into `E_b + 1` vectors.
pub fn split_q(batch: &GraphBatch, edges: &[f64], globals: &[f64]) -> Vec<Vec<f64>> {
    (0..batch.n_graphs)
        .map(|b| {
            let mut q = edges[batch.edge_offsets[b]..batch.edge_offsets[b + 1]].to_vec();
            q.push(globals[b]);
            q
        })
        .collect()
}
