//! Core algorithms for the tower gluing task.
//!
//! A tower is a stack of axis-aligned blocks resting on a floor. An agent may
//! glue pairs of touching objects before gravity is applied; points are lost
//! for every glue action and earned for every block left standing, with a
//! bonus for using the minimal stabilizing amount of glue.
//!
//! Module map:
//!
//! - [`scene`]: blocks, towers, contacts, glue composites and graph views.
//! - [`lp`]: dense two-phase simplex used by the stability solver.
//! - [`stability`]: quasi-static equilibrium and the iterative settle.
//! - [`generator`]: random unstable tower datasets.
//! - [`env`]: the episodic gluing environment and its scoring.
//! - [`oracle`]: exhaustive glue-configuration search.
//! - [`diff`]: small reverse-mode tensor engine, layers and Adam.
//! - [`gn`]: the recurrent encode-process-decode graph network.
//! - [`agents`]: random, MLP, graph-network and simulation policies.
//! - [`trainer`]: Q-learning with replay plus the supervised sub-tasks.
//! - [`eval`]: agent evaluation, generalization hold-outs and reports.

pub mod agents;
pub mod diff;
pub mod env;
pub mod error;
pub mod eval;
pub mod generator;
pub mod gn;
pub mod lp;
pub mod oracle;
pub mod rng;
pub mod scene;
pub mod stability;
pub mod trainer;

pub use error::{Error, Result};
pub use scene::{
    Block, CompositeBody, Contact, GlueConfig, GraphMode, SceneGraph, Tower, Vec2,
};
