//! Fixtures shared by the benchmarks.

use gluing_core::generator::{generate, GeneratorConfig};
use gluing_core::Tower;

/// `count` generated towers of `size` blocks from a fixed seed.
pub fn towers(size: usize, count: usize) -> Vec<Tower> {
    let cfg = GeneratorConfig { sizes: vec![size], count_per_size: count, seed: 0xbe7c, ..GeneratorConfig::default() };
    generate(&cfg).expect("benchmark towers").0
}
