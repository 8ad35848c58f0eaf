//! Agent evaluation, generalization hold-outs and reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::agents::Agent;
use crate::env::{reset, StepKind};
use crate::oracle::{scaled_reward, OracleResult};
use crate::rng::{derive_seed, stream_rng};
use crate::{Error, GlueConfig, Result, Tower};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub tower_id: usize,
    pub size: usize,
    pub agent: String,
    pub reward: i64,
    pub scaled: f64,
    /// Pair actions taken.
    pub actions: usize,
    pub invalid: usize,
    #[serde(skip)]
    pub unglue: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub stable: bool,
}

/// Glued contacts missing from, and optimal contacts missing in, the
/// optimal configuration nearest to `glue` by symmetric difference.
pub fn glue_errors(glue: &GlueConfig, oracle: &OracleResult) -> (usize, usize) {
    let nearest = oracle
        .optimal_configs
        .iter()
        .min_by_key(|g| g.hamming(glue))
        .unwrap_or(&oracle.optimal_config);
    let mut fp = 0;
    let mut fn_ = 0;
    for (&have, &want) in glue.bits().iter().zip(nearest.bits()) {
        match (have, want) {
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    (fp, fn_)
}

/// One greedy (or `epsilon`) rollout per tower.
pub fn evaluate(
    agent: &Agent,
    towers: &[Arc<Tower>],
    oracles: &[OracleResult],
    epsilon: f64,
    seed: u64,
) -> Result<Vec<EvalRecord>> {
    if towers.len() != oracles.len() {
        return Err(Error::Dataset(format!("{} towers but {} oracle results", towers.len(), oracles.len())));
    }
    let name = agent.kind().name().to_string();
    towers
        .iter()
        .zip(oracles)
        .enumerate()
        .map(|(id, (tower, oracle))| {
            if oracle.k != tower.contacts().len() || oracle.n_blocks != tower.n_blocks() {
                return Err(Error::Dataset(format!("oracle result {id} does not match its tower")));
            }
            let mut rng = stream_rng(derive_seed(seed, &[id as u64]), 0);
            let mut state = reset(Arc::clone(tower), oracle.min_glue_size);
            let (mut invalid, mut unglue) = (0, 0);
            let stable = loop {
                let d = agent.act(&state, epsilon, &mut rng)?;
                let r = state.step(d.action)?;
                match r.kind {
                    StepKind::Invalid => invalid += 1,
                    StepKind::Unglued => unglue += 1,
                    _ => {}
                }
                if let Some(t) = r.terminal {
                    break t.fallen.is_empty();
                }
            };
            let (fp, fn_) = glue_errors(&state.glue, oracle);
            Ok(EvalRecord {
                tower_id: id,
                size: tower.n_blocks(),
                agent: name.clone(),
                reward: state.points,
                scaled: scaled_reward(oracle, state.points),
                actions: state.steps_taken,
                invalid,
                unglue,
                fp,
                fn_,
                stable,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub agent: String,
    /// `None` for all sizes together.
    pub size: Option<usize>,
    pub n: usize,
    pub mean_reward: f64,
    pub mean_scaled: f64,
    pub median_scaled: f64,
    /// Percentage of pair actions that named non-touching objects.
    pub invalid_pct: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub stable_rate: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

fn aggregate_group(agent: &str, size: Option<usize>, recs: &[&EvalRecord]) -> Aggregate {
    let n = recs.len();
    let nf = n.max(1) as f64;
    let actions: usize = recs.iter().map(|r| r.actions).sum();
    let invalid: usize = recs.iter().map(|r| r.invalid).sum();
    let mut scaled: Vec<f64> = recs.iter().map(|r| r.scaled).collect();
    Aggregate {
        agent: agent.to_string(),
        size,
        n,
        mean_reward: recs.iter().map(|r| r.reward).sum::<i64>() as f64 / nf,
        mean_scaled: scaled.iter().sum::<f64>() / nf,
        median_scaled: median(&mut scaled),
        invalid_pct: if actions == 0 { 0.0 } else { 100.0 * invalid as f64 / actions as f64 },
        fp: recs.iter().map(|r| r.fp).sum(),
        fn_: recs.iter().map(|r| r.fn_).sum(),
        stable_rate: recs.iter().filter(|r| r.stable).count() as f64 / nf,
    }
}

/// Per agent overall and per size. Records are reduced in (agent, tower)
/// order, so the result does not depend on input order.
pub fn aggregate(records: &[EvalRecord]) -> Vec<Aggregate> {
    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (&a.agent, a.tower_id).cmp(&(&b.agent, b.tower_id)));
    let mut by_agent: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in sorted {
        by_agent.entry(&r.agent).or_default().push(r);
    }
    let mut out = Vec::new();
    for (agent, recs) in by_agent {
        out.push(aggregate_group(agent, None, &recs));
        let mut by_size: BTreeMap<usize, Vec<&EvalRecord>> = BTreeMap::new();
        for r in &recs {
            by_size.entry(r.size).or_default().push(r);
        }
        for (size, group) in by_size {
            out.push(aggregate_group(agent, Some(size), &group));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldoutComparison {
    pub size: usize,
    pub full_mean_scaled: f64,
    pub holdout_mean_scaled: f64,
    /// Full-curriculum minus hold-out.
    pub difference: f64,
}

/// Scaled reward on the held-out sizes for an agent trained on every size
/// and one trained without them.
pub fn generalization_protocol(
    full: &Agent,
    holdout: &Agent,
    towers: &[Arc<Tower>],
    oracles: &[OracleResult],
    holdout_sizes: &[usize],
    seed: u64,
) -> Result<Vec<HoldoutComparison>> {
    let mut out = Vec::new();
    for &size in holdout_sizes {
        let (ts, os): (Vec<Arc<Tower>>, Vec<OracleResult>) = towers
            .iter()
            .zip(oracles)
            .filter(|(t, _)| t.n_blocks() == size)
            .map(|(t, o)| (Arc::clone(t), o.clone()))
            .unzip();
        if ts.is_empty() {
            return Err(Error::Dataset(format!("no evaluation towers of held-out size {size}")));
        }
        let mean = |agent: &Agent| -> Result<f64> {
            let recs = evaluate(agent, &ts, &os, 0.0, seed)?;
            Ok(recs.iter().map(|r| r.scaled).sum::<f64>() / recs.len() as f64)
        };
        let (f, h) = (mean(full)?, mean(holdout)?);
        out.push(HoldoutComparison { size, full_mean_scaled: f, holdout_mean_scaled: h, difference: f - h });
    }
    Ok(out)
}

pub fn write_records<W: Write>(w: W, records: &[EvalRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in records {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct AggregateRow<'a> {
    agent: &'a str,
    size: String,
    n: usize,
    mean_reward: f64,
    mean_scaled: f64,
    median_scaled: f64,
    invalid_pct: f64,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    stable_rate: f64,
}

pub fn write_aggregates<W: Write>(w: W, aggs: &[Aggregate]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for a in aggs {
        wr.serialize(AggregateRow {
            agent: &a.agent,
            size: a.size.map_or_else(|| "all".to_string(), |s| s.to_string()),
            n: a.n,
            mean_reward: a.mean_reward,
            mean_scaled: a.mean_scaled,
            median_scaled: a.median_scaled,
            invalid_pct: a.invalid_pct,
            fp: a.fp,
            fn_: a.fn_,
            stable_rate: a.stable_rate,
        })?;
    }
    wr.flush()?;
    Ok(())
}

const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
];

/// Grouped bar chart: one group per size, one bar per agent (agents in
/// sorted order, colours from a fixed palette). A grey line marks zero.
pub fn bar_chart(groups: &[Vec<f64>], width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let all = groups.iter().flatten().copied().filter(|v| v.is_finite());
    let (lo, hi) = all.fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = if hi - lo > 0.0 { hi - lo } else { 1.0 };
    let margin = 10u32;
    let plot_h = (height - 2 * margin) as f64;
    let y_of = |v: f64| margin as f64 + (hi - v) / span * plot_h;
    let zero = y_of(0.0).round() as u32;
    let n_groups = groups.len().max(1) as u32;
    let group_w = (width - 2 * margin) / n_groups;
    for (gi, g) in groups.iter().enumerate() {
        let bars = g.len().max(1) as u32;
        let bar_w = (group_w.saturating_sub(8) / bars).max(1);
        for (bi, &v) in g.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            let x0 = margin + gi as u32 * group_w + 4 + bi as u32 * bar_w;
            let y = y_of(v).round() as u32;
            let (top, bottom) = if y < zero { (y, zero) } else { (zero, y) };
            let c = PALETTE[bi % PALETTE.len()];
            for x in x0..(x0 + bar_w.saturating_sub(1)).min(width) {
                for yy in top..=bottom.min(height - 1) {
                    img.put_pixel(x, yy, Rgb(c));
                }
            }
        }
    }
    for x in margin..width - margin {
        img.put_pixel(x, zero.min(height - 1), Rgb([128, 128, 128]));
    }
    img
}

/// Write `records.csv`, `summary.csv` and one PNG per metric into `dir`.
/// Returns the files written.
pub fn report(records: &[EvalRecord], dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    if records.is_empty() {
        return Err(Error::Dataset("no evaluation records to report".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let p = dir.join("records.csv");
    write_records(std::fs::File::create(&p)?, records)?;
    files.push(p);
    let aggs = aggregate(records);
    let p = dir.join("summary.csv");
    write_aggregates(std::fs::File::create(&p)?, &aggs)?;
    files.push(p);

    let sizes: Vec<usize> = {
        let mut s: Vec<usize> = aggs.iter().filter_map(|a| a.size).collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    let agents: Vec<&str> = {
        let mut a: Vec<&str> = aggs.iter().map(|a| a.agent.as_str()).collect();
        a.dedup();
        a
    };
    let metrics: [(&str, fn(&Aggregate) -> f64); 3] = [
        ("mean_reward", |a| a.mean_reward),
        ("mean_scaled", |a| a.mean_scaled),
        ("invalid_pct", |a| a.invalid_pct),
    ];
    for (name, f) in metrics {
        let groups: Vec<Vec<f64>> = sizes
            .iter()
            .map(|&s| {
                agents
                    .iter()
                    .map(|&ag| {
                        aggs.iter().find(|a| a.agent == ag && a.size == Some(s)).map_or(f64::NAN, f)
                    })
                    .collect()
            })
            .collect();
        let p = dir.join(format!("{name}_by_size.png"));
        bar_chart(&groups, 640, 360).save(&p)?;
        files.push(p);
    }
    Ok(files)
}
