//! Deterministic writers for the documented CSV and JSON schemas. Each CSV
//! carries a version comment ahead of the header; the header itself never
//! changes without a bump there.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use subdiff::tracks::{MsdCurve, TrajectorySet};

pub fn write_tracks_csv(path: &Path, set: &TrajectorySet) -> anyhow::Result<()> {
    let mut out = buffered(path)?;
    writeln!(out, "# subdiff tracks csv v1")?;
    let header = match set.dim() {
        1 => "id,frame,x",
        2 => "id,frame,x,y",
        _ => "id,frame,x,y,z",
    };
    writeln!(out, "{header}")?;
    for p in set.paths() {
        for (frame, row) in p.positions.rows().into_iter().enumerate() {
            write!(out, "{},{frame}", p.id)?;
            for v in row.iter() {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    out.flush().context("flushing tracks csv")
}

pub fn write_msd_csv(path: &Path, msd: &MsdCurve, dt: f64) -> anyhow::Result<()> {
    let mut out = buffered(path)?;
    writeln!(out, "# subdiff msd csv v1")?;
    writeln!(out, "lag,t_seconds,msd_um2")?;
    for (lag, value) in msd.lags().iter().zip(msd.values()) {
        writeln!(out, "{lag},{},{value}", *lag as f64 * dt)?;
    }
    out.flush().context("flushing msd csv")
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut out = buffered(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush().context("flushing json")
}

pub fn write_csv_rows(path: &Path, version: &str, header: &str, rows: &[String]) -> anyhow::Result<()> {
    let mut out = buffered(path)?;
    writeln!(out, "# {version}")?;
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    out.flush().context("flushing csv")
}

fn buffered(path: &Path) -> anyhow::Result<std::io::BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    Ok(std::io::BufWriter::new(file))
}

/// Reads a `lag,g` ratio table (comments allowed), returning g indexed by
/// lag−1.
pub fn read_g_table(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut pairs: Vec<(usize, f64)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == "lag,g" {
            continue;
        }
        let (lag, g) = line
            .split_once(',')
            .with_context(|| format!("{}:{}: expected `lag,g`", path.display(), idx + 1))?;
        let lag: usize = lag.trim().parse().context("bad lag")?;
        let g: f64 = g.trim().parse().context("bad ratio")?;
        pairs.push((lag, g));
    }
    pairs.sort_by_key(|p| p.0);
    let mut out = Vec::with_capacity(pairs.len());
    for (i, (lag, g)) in pairs.iter().enumerate() {
        if *lag != i + 1 {
            anyhow::bail!("g table must cover contiguous lags from 1; missing lag {}", i + 1);
        }
        out.push(*g);
    }
    if out.is_empty() {
        anyhow::bail!("g table is empty");
    }
    Ok(out)
}
