//! Line-delimited scene files.
//!
//! One tower per line:
//! `{"blocks":[{"x":..,"y":..,"angle":..,"hw":..,"hh":..}],"seed":S}`.
//! Floats are written with 17 significant digits so files round-trip
//! bit-exactly.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::Deserialize;

use super::geometry::{Block, Tower, Vec2};
use crate::{Error, Result};

#[derive(Deserialize)]
struct BlockRecord {
    x: f64,
    y: f64,
    angle: f64,
    hw: f64,
    hh: f64,
}

#[derive(Deserialize)]
struct TowerRecord {
    blocks: Vec<BlockRecord>,
    seed: u64,
}

fn push_float(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String cannot fail");
}

pub fn format_tower(tower: &Tower) -> String {
    let mut s = String::from("{\"blocks\":[");
    for (i, b) in tower.blocks().iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str("{\"x\":");
        push_float(&mut s, b.center.x);
        s.push_str(",\"y\":");
        push_float(&mut s, b.center.y);
        s.push_str(",\"angle\":");
        push_float(&mut s, b.angle);
        s.push_str(",\"hw\":");
        push_float(&mut s, b.half_width);
        s.push_str(",\"hh\":");
        push_float(&mut s, b.half_height);
        s.push('}');
    }
    write!(s, "],\"seed\":{}}}", tower.seed()).expect("writing to a String cannot fail");
    s
}

pub fn parse_tower(line: &str) -> Result<Tower> {
    let rec: TowerRecord = serde_json::from_str(line)?;
    let blocks = rec
        .blocks
        .into_iter()
        .enumerate()
        .map(|(i, b)| {
            let mut block = Block::new(i + 1, Vec2::new(b.x, b.y), b.hw, b.hh);
            block.angle = b.angle;
            block
        })
        .collect();
    Tower::with_seed(blocks, rec.seed)
}

pub fn write_scenes<W: Write>(mut w: W, towers: &[Tower]) -> Result<()> {
    for t in towers {
        writeln!(w, "{}", format_tower(t))?;
    }
    Ok(())
}

pub fn read_scenes<R: BufRead>(r: R) -> Result<Vec<Tower>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            parse_tower(&line)
                .map_err(|e| Error::Dataset(format!("line {}: {e}", lineno + 1)))?,
        );
    }
    Ok(out)
}

pub fn load_scenes(path: impl AsRef<std::path::Path>) -> Result<Vec<Tower>> {
    let f = std::fs::File::open(path)?;
    read_scenes(std::io::BufReader::new(f))
}

pub fn save_scenes(path: impl AsRef<std::path::Path>, towers: &[Tower]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_scenes(&mut w, towers)?;
    w.flush()?;
    Ok(())
}
