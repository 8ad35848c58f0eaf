use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::contact::GlueConfig;
use super::geometry::Tower;
use crate::Error;

/// Node feature width: x, y, angle, is-floor flag.
pub const NODE_FEATURES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphMode {
    /// One edge per physical contact.
    Sparse,
    /// One edge per unordered object pair.
    Full,
}

impl FromStr for GraphMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "sparse" => Ok(Self::Sparse),
            "full" => Ok(Self::Full),
            other => Err(Error::Config(format!("unknown graph mode {other:?}"))),
        }
    }
}

/// Input graph for the graph network. Node `i` is object `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneGraph {
    pub node_features: Vec<[f64; NODE_FEATURES]>,
    /// Glue indicator per edge.
    pub edge_features: Vec<f64>,
    pub senders: Vec<usize>,
    pub receivers: Vec<usize>,
    /// Raw global feature; always zero on input.
    pub global_features: Vec<f64>,
    /// Contact index backing each edge, if the pair touches.
    pub edge_contact: Vec<Option<usize>>,
}

impl SceneGraph {
    pub fn n_nodes(&self) -> usize {
        self.node_features.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edge_features.len()
    }
}

/// All unordered object pairs `(a, b)` with `a < b`, lexicographically.
pub fn pair_list(n_objects: usize) -> Vec<(usize, usize)> {
    (0..n_objects)
        .flat_map(|a| (a + 1..n_objects).map(move |b| (a, b)))
        .collect()
}

/// Position of `(a, b)` in [`pair_list`], in either argument order.
pub fn pair_index(n_objects: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    debug_assert!(b < n_objects && a != b);
    // Pairs before row `a`: sum_{r<a} (n - 1 - r).
    a * (2 * n_objects - a - 1) / 2 + (b - a - 1)
}

pub fn graph_view(tower: &Tower, glue: &GlueConfig, mode: GraphMode) -> SceneGraph {
    let mut node_features = Vec::with_capacity(tower.n_objects());
    node_features.push([0.0, 0.0, 0.0, 1.0]);
    for b in tower.blocks() {
        node_features.push([b.center.x, b.center.y, b.angle, 0.0]);
    }

    let contacts = tower.contacts();
    let (mut senders, mut receivers, mut edge_features, mut edge_contact) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    match mode {
        GraphMode::Sparse => {
            for (i, c) in contacts.iter().enumerate() {
                senders.push(c.lower_id);
                receivers.push(c.upper_id);
                edge_features.push(if glue.is_glued(i) { 1.0 } else { 0.0 });
                edge_contact.push(Some(i));
            }
        }
        GraphMode::Full => {
            for (a, b) in pair_list(tower.n_objects()) {
                let ci = tower.contact_index(a, b);
                senders.push(a);
                receivers.push(b);
                edge_features.push(match ci {
                    Some(i) if glue.is_glued(i) => 1.0,
                    _ => 0.0,
                });
                edge_contact.push(ci);
            }
        }
    }
    SceneGraph {
        node_features,
        edge_features,
        senders,
        receivers,
        global_features: vec![0.0],
        edge_contact,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain5() -> Tower {
        Tower::stacked(&[0.0, 0.3, 0.1, -0.2, 0.0], 0.4, 0.2).unwrap()
    }

    #[test]
    fn sparse_and_full_edge_counts() {
        let t = chain5();
        let g = GlueConfig::empty(5);
        let s = graph_view(&t, &g, GraphMode::Sparse);
        assert_eq!((s.n_nodes(), s.n_edges()), (6, 5));
        let f = graph_view(&t, &g, GraphMode::Full);
        assert_eq!((f.n_nodes(), f.n_edges()), (6, 15));
        assert_eq!(f.edge_contact.iter().filter(|c| c.is_some()).count(), 5);
    }

    #[test]
    fn global_is_zero_and_floor_is_flagged() {
        let g = graph_view(&chain5(), &GlueConfig::full(5), GraphMode::Sparse);
        assert_eq!(g.global_features, vec![0.0]);
        assert_eq!(g.node_features[0], [0.0, 0.0, 0.0, 1.0]);
        assert_eq!(g.node_features[1][3], 0.0);
        assert!(g.edge_features.iter().all(|&u| u == 1.0));
    }

    #[test]
    fn full_mode_marks_only_glued_contacts() {
        let t = chain5();
        let glue = GlueConfig::from_bits(vec![false, true, false, false, false]);
        let f = graph_view(&t, &glue, GraphMode::Full);
        let glued: Vec<_> = (0..f.n_edges())
            .filter(|&e| f.edge_features[e] == 1.0)
            .map(|e| (f.senders[e], f.receivers[e]))
            .collect();
        assert_eq!(glued, vec![(1, 2)]);
    }

    #[test]
    fn pair_index_matches_list() {
        for n in 2..8 {
            for (i, (a, b)) in pair_list(n).into_iter().enumerate() {
                assert_eq!(pair_index(n, a, b), i);
                assert_eq!(pair_index(n, b, a), i);
            }
        }
    }
}
