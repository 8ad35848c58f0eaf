use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::contact::{detect_contacts, Contact};
use crate::{Error, Result};

/// Object id reserved for the floor.
pub const FLOOR_ID: usize = 0;

/// Areal density used to derive block masses (kg/m²).
pub const BLOCK_DENSITY: f64 = 1.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// z-component of the 2D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub id: usize,
    pub center: Vec2,
    /// Radians. Always zero for generated towers.
    pub angle: f64,
    pub half_width: f64,
    pub half_height: f64,
    pub mass: f64,
}

impl Block {
    /// Axis-aligned block of uniform density.
    pub fn new(id: usize, center: Vec2, half_width: f64, half_height: f64) -> Self {
        Self {
            id,
            center,
            angle: 0.0,
            half_width,
            half_height,
            mass: 4.0 * half_width * half_height * BLOCK_DENSITY,
        }
    }

    pub fn left(&self) -> f64 {
        self.center.x - self.half_width
    }

    pub fn right(&self) -> f64 {
        self.center.x + self.half_width
    }

    pub fn bottom(&self) -> f64 {
        self.center.y - self.half_height
    }

    pub fn top(&self) -> f64 {
        self.center.y + self.half_height
    }
}

/// A validated tower. Contacts are computed once at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Tower {
    blocks: Vec<Block>,
    contacts: Vec<Contact>,
    seed: u64,
}

/// Vertical grid (2^-40 m) for stacked heights. Sums and differences of
/// grid values below a few thousand metres are exact in `f64`, so a block
/// placed at `top + hh` has its bottom at `top` bit for bit.
pub const HEIGHT_GRID: f64 = 1.0 / (1u64 << 40) as f64;

pub fn snap_height(v: f64) -> f64 {
    (v / HEIGHT_GRID).round() * HEIGHT_GRID
}

impl Tower {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        Self::with_seed(blocks, 0)
    }

    pub fn with_seed(blocks: Vec<Block>, seed: u64) -> Result<Self> {
        for (i, b) in blocks.iter().enumerate() {
            if b.id != i + 1 {
                return Err(Error::InvalidTower(format!(
                    "block at position {i} has id {}, expected {}",
                    b.id,
                    i + 1
                )));
            }
            let finite = [b.center.x, b.center.y, b.angle, b.half_width, b.half_height, b.mass]
                .iter()
                .all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidTower(format!("block {} has non-finite fields", b.id)));
            }
            if b.half_width <= 0.0 || b.half_height <= 0.0 || b.mass <= 0.0 {
                return Err(Error::InvalidTower(format!(
                    "block {} needs positive extents and mass",
                    b.id
                )));
            }
            if b.angle != 0.0 {
                return Err(Error::InvalidTower(format!(
                    "block {} is rotated; only axis-aligned blocks are supported",
                    b.id
                )));
            }
        }
        let contacts = detect_contacts(&blocks)?;
        Ok(Self { blocks, contacts, seed })
    }

    /// Blocks stacked with the given horizontal centers, each resting on the
    /// previous one (the first on the floor).
    pub fn stacked(xs: &[f64], half_width: f64, half_height: f64) -> Result<Self> {
        let half_height = snap_height(half_height);
        let mut top = 0.0;
        let blocks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = top + half_height;
                let b = Block::new(i + 1, Vec2::new(x, y), half_width, half_height);
                top = b.top();
                b
            })
            .collect();
        Self::new(blocks)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Block with the given id (`1..=N`).
    pub fn block(&self, id: usize) -> &Block {
        &self.blocks[id - 1]
    }

    pub fn contacts(&self) -> &[Contact] {
        &self.contacts
    }

    /// Index of the contact between `a` and `b`, in either order.
    pub fn contact_index(&self, a: usize, b: usize) -> Option<usize> {
        self.contacts.iter().position(|c| {
            (c.lower_id == a && c.upper_id == b) || (c.lower_id == b && c.upper_id == a)
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Blocks plus the floor.
    pub fn n_objects(&self) -> usize {
        self.blocks.len() + 1
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn total_mass(&self) -> f64 {
        self.blocks.iter().map(|b| b.mass).sum()
    }
}
