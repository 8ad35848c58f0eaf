//! Random unstable towers.
//!
//! Towers are chains: block 1 sits on the floor and block `i + 1` sits on
//! block `i` with a random horizontal offset. Datasets keep only towers that
//! lose at least one block when nothing is glued.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, stream_rng};
use crate::scene::{io::format_tower, snap_height, Block, Tower, Vec2};
use crate::stability::settle;
use crate::{Error, GlueConfig, Result};

pub const DEFAULT_HALF_WIDTH: f64 = 0.4;
pub const DEFAULT_HALF_HEIGHT: f64 = 0.2;
pub const DEFAULT_MIN_OVERLAP: f64 = 0.08;
/// Horizontal range for block 1's centre.
pub const FLOOR_OFFSET: f64 = 0.5;

/// Rejection budget: a size fails if fewer than 0.1% of this many attempts
/// are kept.
pub const REJECTION_ATTEMPTS: u64 = 1_000_000;
pub const MAX_REJECTION_RATE: f64 = 0.999;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub block_half_width: f64,
    pub block_half_height: f64,
    pub min_overlap: f64,
    pub sizes: Vec<usize>,
    pub count_per_size: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            block_half_width: DEFAULT_HALF_WIDTH,
            block_half_height: DEFAULT_HALF_HEIGHT,
            min_overlap: DEFAULT_MIN_OVERLAP,
            sizes: (2..=10).collect(),
            count_per_size: 15,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    /// 15 towers of each size 2-10.
    pub fn human(seed: u64) -> Self {
        Self { count_per_size: 15, seed, ..Self::default() }
    }

    /// One tower of each size 2-10, ascending.
    pub fn practice(seed: u64) -> Self {
        Self { count_per_size: 1, seed, ..Self::default() }
    }

    /// 100k towers of each size 2-10.
    pub fn training(seed: u64) -> Self {
        Self { count_per_size: 100_000, seed, ..Self::default() }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "human" => Ok(Self::human(seed)),
            "practice" => Ok(Self::practice(seed)),
            "training" => Ok(Self::training(seed)),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }

    /// Largest centre-to-centre offset between a block and its support.
    pub fn max_offset(&self) -> f64 {
        2.0 * self.block_half_width - self.min_overlap
    }

    pub fn validate(&self) -> Result<()> {
        let hw = self.block_half_width;
        if !(hw > 0.0 && self.block_half_height > 0.0) {
            return Err(Error::Config("block extents must be positive".into()));
        }
        if !(self.min_overlap > 0.0 && self.min_overlap < 2.0 * hw) {
            return Err(Error::Config(format!(
                "min_overlap must lie in (0, {}), got {}",
                2.0 * hw,
                self.min_overlap
            )));
        }
        if self.sizes.iter().any(|&n| n == 0) {
            return Err(Error::Config("tower sizes must be at least 1".into()));
        }
        Ok(())
    }
}

/// One random chain tower (not filtered for stability).
pub fn sample_tower<R: Rng + ?Sized>(n: usize, cfg: &GeneratorConfig, rng: &mut R) -> Result<Tower> {
    sample_tower_with_seed(n, cfg, rng, 0)
}

fn sample_tower_with_seed<R: Rng + ?Sized>(
    n: usize,
    cfg: &GeneratorConfig,
    rng: &mut R,
    seed: u64,
) -> Result<Tower> {
    if n == 0 {
        return Err(Error::Config("a tower needs at least one block".into()));
    }
    let hw = cfg.block_half_width;
    let hh = snap_height(cfg.block_half_height);
    let d = cfg.max_offset();
    let mut blocks = Vec::with_capacity(n);
    let mut x = rng.random_range(-FLOOR_OFFSET..=FLOOR_OFFSET);
    let mut top = 0.0;
    for id in 1..=n {
        if id > 1 {
            x += rng.random_range(-d..=d);
        }
        let b = Block::new(id, Vec2::new(x, top + hh), hw, hh);
        top = b.top();
        blocks.push(b);
    }
    Tower::with_seed(blocks, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeStats {
    pub size: usize,
    pub accepted: u64,
    pub attempts: u64,
    pub rejection_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: GeneratorConfig,
    pub total: usize,
    pub per_size: Vec<SizeStats>,
}

/// Rejection-sample `count` unstable towers of size `n` from the size's own
/// stream. Tower `i` gets seed `derive_seed(seed, [n, i])`.
pub fn generate_size(cfg: &GeneratorConfig, n: usize, count: usize) -> Result<(Vec<Tower>, SizeStats)> {
    let mut rng = stream_rng(cfg.seed, n as u64);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0u64;
    while out.len() < count {
        attempts += 1;
        let seed = derive_seed(cfg.seed, &[n as u64, out.len() as u64]);
        let tower = sample_tower_with_seed(n, cfg, &mut rng, seed)?;
        if !settle(&tower, &GlueConfig::empty(tower.contacts().len()))?.stable {
            out.push(tower);
        }
        if attempts >= REJECTION_ATTEMPTS {
            let rate = 1.0 - out.len() as f64 / attempts as f64;
            if rate > MAX_REJECTION_RATE && out.len() < count {
                return Err(Error::Rejection { size: n, attempts, accepted: out.len() as u64 });
            }
        }
    }
    let stats = SizeStats {
        size: n,
        accepted: count as u64,
        attempts,
        rejection_rate: 1.0 - count as f64 / attempts.max(1) as f64,
    };
    Ok((out, stats))
}

/// All towers in canonical (size, index) order.
pub fn generate(cfg: &GeneratorConfig) -> Result<(Vec<Tower>, Manifest)> {
    cfg.validate()?;
    let mut towers = Vec::with_capacity(cfg.sizes.len() * cfg.count_per_size);
    let mut per_size = Vec::with_capacity(cfg.sizes.len());
    for &n in &cfg.sizes {
        let (t, stats) = generate_size(cfg, n, cfg.count_per_size)?;
        towers.extend(t);
        per_size.push(stats);
    }
    let manifest = Manifest { config: cfg.clone(), total: towers.len(), per_size };
    Ok((towers, manifest))
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Write the scene file to `out` and the manifest next to it. Returns the
/// manifest.
pub fn generate_dataset(cfg: &GeneratorConfig, out: &Path) -> Result<Manifest> {
    let (towers, manifest) = generate(cfg)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(out)?);
    for t in &towers {
        writeln!(w, "{}", format_tower(t))?;
    }
    w.flush()?;
    let mut m = serde_json::to_string_pretty(&manifest)?;
    m.push('\n');
    std::fs::write(manifest_path(out), m)?;
    Ok(manifest)
}

/// Towers streamed on demand for training: size `n`, episode `i`.
pub fn training_tower(cfg: &GeneratorConfig, n: usize, index: u64) -> Result<Tower> {
    let mut rng = stream_rng(derive_seed(cfg.seed, &[n as u64, index]), 1);
    loop {
        let tower = sample_tower_with_seed(n, cfg, &mut rng, derive_seed(cfg.seed, &[n as u64, index]))?;
        if !settle(&tower, &GlueConfig::empty(tower.contacts().len()))?.stable {
            return Ok(tower);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::io::parse_tower;

    #[test]
    fn single_block_rests_on_floor() {
        let cfg = GeneratorConfig::default();
        let t = sample_tower(1, &cfg, &mut stream_rng(1, 0)).unwrap();
        assert_eq!(t.n_blocks(), 1);
        assert_eq!(t.block(1).bottom(), 0.0);
        assert!(t.block(1).center.x.abs() <= FLOOR_OFFSET);
    }

    #[test]
    fn five_blocks_stack_exactly() {
        let cfg = GeneratorConfig::default();
        let t = sample_tower(5, &cfg, &mut stream_rng(42, 0)).unwrap();
        assert_eq!(t.n_blocks(), 5);
        for w in t.blocks().windows(2) {
            assert_eq!(w[1].bottom(), w[0].top());
        }
        assert!(t.blocks().iter().all(|b| b.angle == 0.0));
        assert_eq!(t.contacts().len(), 5);
    }

    #[test]
    fn offsets_respect_the_overlap_bound() {
        let cfg = GeneratorConfig::default();
        assert!((cfg.max_offset() - 0.72).abs() < 1e-15);
        let mut rng = stream_rng(3, 0);
        for _ in 0..200 {
            let t = sample_tower(6, &cfg, &mut rng).unwrap();
            for w in t.blocks().windows(2) {
                assert!((w[1].center.x - w[0].center.x).abs() <= 0.72 + 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_overlap() {
        let cfg = GeneratorConfig { min_overlap: 0.8, ..GeneratorConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = GeneratorConfig { min_overlap: 0.0, ..GeneratorConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn presets_have_expected_counts() {
        assert_eq!(GeneratorConfig::human(0).count_per_size * 9, 135);
        assert_eq!(GeneratorConfig::practice(0).count_per_size * 9, 9);
        assert_eq!(GeneratorConfig::training(0).count_per_size * 9, 900_000);
    }

    #[test]
    fn dataset_is_unstable_chain_and_reproducible() {
        let cfg = GeneratorConfig { sizes: vec![2, 3, 4], count_per_size: 4, seed: 11, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        let m = generate_dataset(&cfg, &a).unwrap();
        generate_dataset(&cfg, &b).unwrap();
        let bytes = std::fs::read(&a).unwrap();
        assert_eq!(bytes, std::fs::read(&b).unwrap());
        assert_eq!(m.total, 12);
        let text = String::from_utf8(bytes).unwrap();
        let towers: Vec<Tower> = text.lines().map(|l| parse_tower(l).unwrap()).collect();
        for (i, t) in towers.iter().enumerate() {
            assert_eq!(t.n_blocks(), 2 + i / 4);
            assert_eq!(t.contacts().len(), t.n_blocks());
            assert!(!settle(t, &GlueConfig::empty(t.n_blocks())).unwrap().stable);
        }
        assert!(manifest_path(&a).exists());
    }

    #[test]
    fn impossible_geometry_hits_the_rejection_error() {
        // A single block always rests fully on the floor, so nothing is kept.
        let cfg = GeneratorConfig { sizes: vec![1], count_per_size: 1, ..Default::default() };
        match generate(&cfg) {
            Err(Error::Rejection { size: 1, accepted: 0, .. }) => {}
            other => panic!("expected rejection error, got {other:?}"),
        }
    }
}
