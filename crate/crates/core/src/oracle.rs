//! Exhaustive search over glue configurations.
//!
//! A tower with `k` contacts has `2^k` glue subsets. Each is settled once;
//! the optimum, the minimal stabilizing glue and the do-nothing baseline all
//! come out of the same table.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::STABLE_BONUS;
use crate::stability::{settle, SettleOutcome};
use crate::{Error, GlueConfig, Result, Tower};

pub const MAX_ORACLE_CONTACTS: usize = 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub n_blocks: usize,
    pub k: usize,
    pub min_glue_size: usize,
    pub min_glue_witness: GlueConfig,
    pub optimal_reward: i64,
    pub optimal_config: GlueConfig,
    pub baseline_reward: i64,
    /// Every configuration that reaches `optimal_reward`.
    pub optimal_configs: Vec<GlueConfig>,
}

/// Gray code of `i`.
pub fn gray(i: u64) -> u64 {
    i ^ (i >> 1)
}

/// Settle every glue subset, in Gray-code order (consecutive configurations
/// differ by one contact).
pub fn enumerate_configs(tower: &Tower) -> Result<Vec<(GlueConfig, SettleOutcome)>> {
    let k = tower.contacts().len();
    if k > MAX_ORACLE_CONTACTS {
        return Err(Error::OracleCap { k, cap: MAX_ORACLE_CONTACTS });
    }
    let mut out = Vec::with_capacity(1 << k);
    let mut glue = GlueConfig::empty(k);
    for i in 0..(1u64 << k) {
        if i > 0 {
            glue.toggle((gray(i) ^ gray(i - 1)).trailing_zeros() as usize);
        }
        let outcome = settle(tower, &glue)?;
        out.push((glue.clone(), outcome));
    }
    Ok(out)
}

fn config_reward(n: usize, glue: &GlueConfig, outcome: &SettleOutcome, min_glue: usize) -> i64 {
    let bonus = if outcome.stable && glue.count() == min_glue { STABLE_BONUS } else { 0 };
    -(glue.count() as i64) + outcome.standing(n) as i64 + bonus
}

/// Smaller glue count first, then lexicographic bits with unglued first.
fn tie_key(g: &GlueConfig) -> (usize, &[bool]) {
    (g.count(), g.bits())
}

pub fn solve(tower: &Tower) -> Result<OracleResult> {
    let table = enumerate_configs(tower)?;
    Ok(solve_table(tower.n_blocks(), &table))
}

/// Reduce a full enumeration table to the oracle summary.
pub fn solve_table(n: usize, table: &[(GlueConfig, SettleOutcome)]) -> OracleResult {
    let k = table[0].0.len();
    let witness = table
        .iter()
        .filter(|(_, o)| o.stable)
        .map(|(g, _)| g)
        .min_by(|a, b| tie_key(a).cmp(&tie_key(b)))
        .expect("the fully glued configuration is always stable")
        .clone();
    let min_glue = witness.count();
    let rewards: Vec<i64> = table.iter().map(|(g, o)| config_reward(n, g, o, min_glue)).collect();
    let optimal_reward = *rewards.iter().max().expect("non-empty table");
    let mut optimal_configs: Vec<GlueConfig> = table
        .iter()
        .zip(&rewards)
        .filter(|(_, &r)| r == optimal_reward)
        .map(|((g, _), _)| g.clone())
        .collect();
    optimal_configs.sort_by(|a, b| tie_key(a).cmp(&tie_key(b)));
    let empty = table.iter().zip(&rewards).find(|((g, _), _)| g.count() == 0).expect("empty config");
    OracleResult {
        n_blocks: n,
        k,
        min_glue_size: min_glue,
        min_glue_witness: witness,
        optimal_reward,
        optimal_config: optimal_configs[0].clone(),
        baseline_reward: *empty.1,
        optimal_configs,
    }
}

/// 0 for the do-nothing reward, 1 for the optimum.
pub fn scaled_reward(oracle: &OracleResult, achieved: i64) -> f64 {
    let span = oracle.optimal_reward - oracle.baseline_reward;
    if span == 0 {
        if achieved >= oracle.baseline_reward {
            return 1.0;
        }
        return (achieved - oracle.baseline_reward) as f64;
    }
    (achieved - oracle.baseline_reward) as f64 / span as f64
}

#[derive(Serialize, Deserialize)]
struct OracleRow {
    tower_id: usize,
    size: usize,
    k: usize,
    min_glue_size: usize,
    optimal_reward: i64,
    baseline_reward: i64,
    optimal_config: String,
    min_glue_witness: String,
    /// Space-separated bit strings of every optimal configuration.
    optimal_configs: String,
}

pub fn write_csv<W: Write>(w: W, results: &[OracleResult]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for (i, r) in results.iter().enumerate() {
        wr.serialize(OracleRow {
            tower_id: i,
            size: r.n_blocks,
            k: r.k,
            min_glue_size: r.min_glue_size,
            optimal_reward: r.optimal_reward,
            baseline_reward: r.baseline_reward,
            optimal_config: r.optimal_config.to_string(),
            min_glue_witness: r.min_glue_witness.to_string(),
            optimal_configs: r.optimal_configs.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(" "),
        })?;
    }
    wr.flush()?;
    Ok(())
}

pub fn save_csv(path: &Path, results: &[OracleResult]) -> Result<()> {
    write_csv(std::fs::File::create(path)?, results)
}

/// Read results written by [`write_csv`], in tower order.
pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<OracleResult>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rd.deserialize::<OracleRow>().enumerate() {
        let row = row?;
        if row.tower_id != i {
            return Err(Error::Dataset(format!("oracle row {i} has tower_id {}", row.tower_id)));
        }
        let parse = |s: &str| s.parse::<GlueConfig>();
        let optimal_configs = row.optimal_configs.split_whitespace().map(parse).collect::<Result<Vec<_>>>()?;
        out.push(OracleResult {
            n_blocks: row.size,
            k: row.k,
            min_glue_size: row.min_glue_size,
            min_glue_witness: parse(&row.min_glue_witness)?,
            optimal_reward: row.optimal_reward,
            optimal_config: parse(&row.optimal_config)?,
            baseline_reward: row.baseline_reward,
            optimal_configs,
        });
    }
    Ok(out)
}

pub fn load_csv(path: &Path) -> Result<Vec<OracleResult>> {
    read_csv(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{sample_tower, GeneratorConfig};
    use crate::rng::stream_rng;

    fn two_block() -> Tower {
        Tower::stacked(&[0.0, 0.45], 0.4, 0.2).unwrap()
    }

    #[test]
    fn gray_code_visits_every_subset_once() {
        let t = Tower::stacked(&[0.0, 0.1, 0.2, 0.3], 0.4, 0.2).unwrap();
        let table = enumerate_configs(&t).unwrap();
        assert_eq!(table.len(), 16);
        let mut masks: Vec<u64> = table.iter().map(|(g, _)| g.mask()).collect();
        for w in masks.windows(2) {
            assert_eq!((w[0] ^ w[1]).count_ones(), 1);
        }
        masks.sort();
        assert_eq!(masks, (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn two_block_example() {
        let t = two_block();
        assert_eq!(enumerate_configs(&t).unwrap().len(), 4);
        let r = solve(&t).unwrap();
        assert_eq!(r.min_glue_size, 1);
        assert_eq!(r.min_glue_witness, "01".parse().unwrap());
        assert_eq!(r.optimal_reward, 11);
        assert_eq!(r.optimal_config, "01".parse().unwrap());
        assert_eq!(r.baseline_reward, 1);
        assert_eq!(scaled_reward(&r, 11), 1.0);
        assert_eq!(scaled_reward(&r, 1), 0.0);
        assert!((scaled_reward(&r, 6) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ties_prefer_fewer_then_lexicographically_smaller() {
        // Only the top contact needs glue; every superset of it also
        // stabilizes, so the witness must be the single-bit one.
        let t = Tower::stacked(&[0.0, 0.0, 0.45], 0.4, 0.2).unwrap();
        let r = solve(&t).unwrap();
        assert_eq!(r.min_glue_size, 1);
        assert_eq!(r.min_glue_witness, "001".parse().unwrap());
        let a: GlueConfig = "010".parse().unwrap();
        let b: GlueConfig = "001".parse().unwrap();
        assert!(tie_key(&b) < tie_key(&a));
    }

    #[test]
    fn degenerate_denominator() {
        let t = Tower::stacked(&[0.0, 0.0], 0.4, 0.2).unwrap();
        let r = solve(&t).unwrap();
        assert_eq!(r.optimal_reward, r.baseline_reward);
        assert_eq!(r.optimal_reward, 12);
        assert_eq!(scaled_reward(&r, 12), 1.0);
        assert_eq!(scaled_reward(&r, 10), -2.0);
    }

    #[test]
    fn cap_is_enforced() {
        let xs = vec![0.0; 25];
        let t = Tower::stacked(&xs, 0.4, 0.2).unwrap();
        assert!(matches!(enumerate_configs(&t), Err(Error::OracleCap { k: 25, cap: 24 })));
    }

    #[test]
    fn optimum_dominates_minimal_stabilizing_glue() {
        let cfg = GeneratorConfig::default();
        let mut rng = stream_rng(9, 0);
        for n in 2..=6 {
            let t = sample_tower(n, &cfg, &mut rng).unwrap();
            let r = solve(&t).unwrap();
            assert!(r.optimal_reward >= -(r.min_glue_size as i64) + n as i64 + 10);
            assert!(r.optimal_reward >= r.baseline_reward);
            assert!(r.min_glue_size <= r.k);
            assert_eq!(solve(&t).unwrap(), r);
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let r = solve(&two_block()).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "tower_id,size,k,min_glue_size,optimal_reward,baseline_reward,optimal_config,min_glue_witness,optimal_configs\n0,2,2,1,11,1,01,01,01\n"
        );
        assert_eq!(read_csv(text.as_bytes()).unwrap(), vec![solve(&two_block()).unwrap()]);
    }
}
