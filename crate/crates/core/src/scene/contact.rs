use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::geometry::{Block, Vec2, FLOOR_ID};
use super::{CONTACT_TOLERANCE, PENETRATION_TOLERANCE};
use crate::{Error, Result};

/// A horizontal support interface between two objects.
#[derive(Clone, Debug, PartialEq)]
pub struct Contact {
    /// The supporting (lower) object.
    pub lower_id: usize,
    /// The supported (upper) object.
    pub upper_id: usize,
    /// Endpoints of the shared surface, left to right.
    pub segment: [Vec2; 2],
    /// Unit normal pointing from the lower to the upper object.
    pub normal: Vec2,
}

impl Contact {
    pub fn involves(&self, id: usize) -> bool {
        self.lower_id == id || self.upper_id == id
    }

    pub fn other(&self, id: usize) -> usize {
        if self.lower_id == id {
            self.upper_id
        } else {
            self.lower_id
        }
    }

    pub fn width(&self) -> f64 {
        (self.segment[1] - self.segment[0]).norm()
    }
}

/// Every pair of touching objects, sorted by `(lower_id, upper_id)`.
///
/// Only horizontal support surfaces produce contacts; blocks touching side
/// by side do not. Fails if any two objects overlap by more than the
/// penetration tolerance.
pub fn detect_contacts(blocks: &[Block]) -> Result<Vec<Contact>> {
    let mut contacts = Vec::new();
    for b in blocks {
        let depth = -b.bottom();
        if depth > PENETRATION_TOLERANCE {
            return Err(Error::Interpenetration { a: FLOOR_ID, b: b.id, depth });
        }
        if depth.abs() <= CONTACT_TOLERANCE {
            contacts.push(Contact {
                lower_id: FLOOR_ID,
                upper_id: b.id,
                segment: [Vec2::new(b.left(), 0.0), Vec2::new(b.right(), 0.0)],
                normal: Vec2::new(0.0, 1.0),
            });
        }
    }
    for (i, a) in blocks.iter().enumerate() {
        for b in &blocks[i + 1..] {
            let x_overlap = a.right().min(b.right()) - a.left().max(b.left());
            let y_overlap = a.top().min(b.top()) - a.bottom().max(b.bottom());
            if x_overlap > PENETRATION_TOLERANCE && y_overlap > PENETRATION_TOLERANCE {
                return Err(Error::Interpenetration {
                    a: a.id,
                    b: b.id,
                    depth: x_overlap.min(y_overlap),
                });
            }
            if x_overlap <= CONTACT_TOLERANCE || y_overlap.abs() > CONTACT_TOLERANCE {
                continue;
            }
            let (lower, upper) = if a.center.y <= b.center.y { (a, b) } else { (b, a) };
            let y = 0.5 * (lower.top() + upper.bottom());
            let left = a.left().max(b.left());
            contacts.push(Contact {
                lower_id: lower.id,
                upper_id: upper.id,
                segment: [Vec2::new(left, y), Vec2::new(left + x_overlap, y)],
                normal: Vec2::new(0.0, 1.0),
            });
        }
    }
    contacts.sort_by_key(|c| (c.lower_id, c.upper_id));
    Ok(contacts)
}

/// Per-contact glue bits in canonical contact order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct GlueConfig {
    bits: Vec<bool>,
}

impl GlueConfig {
    pub fn empty(k: usize) -> Self {
        Self { bits: vec![false; k] }
    }

    pub fn full(k: usize) -> Self {
        Self { bits: vec![true; k] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Bit `i` of `mask` is the glue state of contact `i`.
    pub fn from_mask(mask: u64, k: usize) -> Self {
        Self { bits: (0..k).map(|i| mask >> i & 1 == 1).collect() }
    }

    pub fn mask(&self) -> u64 {
        self.bits
            .iter()
            .enumerate()
            .fold(0, |m, (i, &b)| if b { m | 1 << i } else { m })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_glued(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, glued: bool) {
        self.bits[i] = glued;
    }

    pub fn toggle(&mut self, i: usize) {
        self.bits[i] = !self.bits[i];
    }

    /// Number of glued contacts.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn glued_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// Number of contacts whose glue state differs.
    pub fn hamming(&self, other: &GlueConfig) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }
}

impl fmt::Display for GlueConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for GlueConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Dataset(format!("bad glue bit {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::from_bits)
    }
}

impl Serialize for GlueConfig {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GlueConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
