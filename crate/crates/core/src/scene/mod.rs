//! Geometric scene representation shared by every other module.
//!
//! Object id 0 is the floor (the half-plane `y <= 0`); blocks carry ids
//! `1..=N`. All blocks are axis-aligned rectangles.

mod composite;
mod contact;
mod geometry;
pub mod io;
mod view;

pub use composite::{merge_composites, CompositeBody};
pub use contact::{detect_contacts, Contact, GlueConfig};
pub use geometry::{snap_height, Block, Tower, Vec2, BLOCK_DENSITY, FLOOR_ID, HEIGHT_GRID};
pub use view::{graph_view, pair_index, pair_list, GraphMode, SceneGraph, NODE_FEATURES};

/// Two surfaces closer than this are considered touching (meters).
pub const CONTACT_TOLERANCE: f64 = 1e-6;
/// Overlaps deeper than this are rejected as interpenetration (meters).
pub const PENETRATION_TOLERANCE: f64 = 1e-6;
