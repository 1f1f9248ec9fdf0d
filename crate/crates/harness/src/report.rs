//! Result files.
//!
//! | file | header |
//! |---|---|
//! | `results.csv` | `method,target,seed,accuracy,recon_w2,gamma,wall_time_s` |
//! | `summary.csv` | `method,target,runs,mean_accuracy,std_accuracy,mean_recon_w2,mean_gamma,mean_wall_time_s` |
//! | `interpolation.csv` | `alpha_0,...,alpha_{K-1},w2,acc_r,acc_e` |
//! | `correlations.csv` | `seed,corr_r,corr_e` (last row `pooled`) |
//! | `trace.csv` | `seed,epoch,loss,delta_x,delta_y,delta_a` |
//! | `sparsity.csv` | `n_atoms,mean_sparsity,seed_<s>...` |
//! | `simplex_heatmap.svg` | three-atom interpolation study as coloured simplices |
//!
//! Floats are written in Rust's shortest round-trip form; missing values are
//! empty cells. Accuracies are percentages, times seconds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dadil_core::dictionary::TrainTrace;

use crate::config::Method;
use crate::error::{HarnessError, Result};
use crate::experiment::{ResultRow, TRAIN_FRACTION};
use crate::study::{InterpolationTable, SparsityRow};

pub const RESULTS_HEADER: [&str; 7] = ["method", "target", "seed", "accuracy", "recon_w2", "gamma", "wall_time_s"];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.target.clone(),
            r.seed.to_string(),
            r.accuracy.to_string(),
            opt(r.recon_w2),
            opt(r.gamma),
            r.wall_time_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cell<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path, line: u64) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse()
        .map_err(|_| HarnessError::Parse(format!("{}:{line}: bad {} value {raw:?}", path.display(), RESULTS_HEADER[i])))
}

fn opt_cell(rec: &csv::StringRecord, i: usize, path: &Path, line: u64) -> Result<Option<f64>> {
    if rec.get(i).is_none_or(str::is_empty) {
        Ok(None)
    } else {
        cell(rec, i, path, line).map(Some)
    }
}

/// Reads a `results.csv` written by [`write_results`].
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(RESULTS_HEADER) {
        return Err(HarnessError::Parse(format!("{}: unexpected header", path.display())));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != RESULTS_HEADER.len() {
            return Err(HarnessError::Parse(format!("{}:{line}: expected 7 fields", path.display())));
        }
        rows.push(ResultRow {
            method: rec[0].parse().map_err(|e| HarnessError::Parse(format!("{}:{line}: {e}", path.display())))?,
            target: rec[1].to_string(),
            seed: cell(&rec, 2, path, line)?,
            accuracy: cell(&rec, 3, path, line)?,
            recon_w2: opt_cell(&rec, 4, path, line)?,
            gamma: opt_cell(&rec, 5, path, line)?,
            wall_time_s: cell(&rec, 6, path, line)?,
        });
    }
    Ok(rows)
}

/// Mean and standard deviation of a method's runs on one target.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub target: String,
    pub runs: usize,
    pub mean_accuracy: f64,
    /// Sample standard deviation (0 for a single run).
    pub std_accuracy: f64,
    pub mean_recon_w2: Option<f64>,
    pub mean_gamma: Option<f64>,
    pub mean_wall_time_s: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_some(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let xs: Vec<f64> = v.flatten().collect();
    (!xs.is_empty()).then(|| mean(&xs))
}

/// Groups rows by (method, target), in that order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Method, &str), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method, r.target.as_str())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, target), g)| {
            let acc: Vec<f64> = g.iter().map(|r| r.accuracy).collect();
            let m = mean(&acc);
            let var = if acc.len() > 1 {
                acc.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (acc.len() - 1) as f64
            } else {
                0.0
            };
            SummaryRow {
                method,
                target: target.to_string(),
                runs: g.len(),
                mean_accuracy: m,
                std_accuracy: var.sqrt(),
                mean_recon_w2: mean_some(g.iter().map(|r| r.recon_w2)),
                mean_gamma: mean_some(g.iter().map(|r| r.gamma)),
                mean_wall_time_s: mean(&g.iter().map(|r| r.wall_time_s).collect::<Vec<_>>()),
            }
        })
        .collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "method",
        "target",
        "runs",
        "mean_accuracy",
        "std_accuracy",
        "mean_recon_w2",
        "mean_gamma",
        "mean_wall_time_s",
    ])?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.target.clone(),
            r.runs.to_string(),
            r.mean_accuracy.to_string(),
            r.std_accuracy.to_string(),
            opt(r.mean_recon_w2),
            opt(r.mean_gamma),
            r.mean_wall_time_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the grid rows of one study; `k` fixes the number of alpha columns
/// so that an empty table still gets a full header.
pub fn write_interpolation(path: &Path, k: usize, table: &InterpolationTable) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = (0..k).map(|i| format!("alpha_{i}")).collect();
    header.extend(["w2", "acc_r", "acc_e"].map(String::from));
    w.write_record(&header)?;
    for r in &table.rows {
        if r.alpha.len() != k {
            return Err(HarnessError::Config(format!("grid point with {} coordinates, expected {k}", r.alpha.len())));
        }
        let mut rec: Vec<String> = r.alpha.iter().map(f64::to_string).collect();
        rec.extend([r.w2.to_string(), r.acc_r.to_string(), r.acc_e.to_string()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-seed correlations followed by the pooled row.
pub fn write_correlations(path: &Path, per_seed: &[(u64, &InterpolationTable)], pooled: &InterpolationTable) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["seed", "corr_r", "corr_e"])?;
    for (s, t) in per_seed {
        w.write_record([s.to_string(), opt(t.corr_r), opt(t.corr_e)])?;
    }
    w.write_record(["pooled".to_string(), opt(pooled.corr_r), opt(pooled.corr_e)])?;
    w.flush()?;
    Ok(())
}

/// Per-epoch mean batch loss and update magnitudes.
pub fn write_trace(path: &Path, traces: &[(u64, &TrainTrace)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["seed", "epoch", "loss", "delta_x", "delta_y", "delta_a"])?;
    for (seed, t) in traces {
        for e in 0..t.loss.len() {
            w.write_record([
                seed.to_string(),
                e.to_string(),
                t.epoch_loss(e).to_string(),
                t.delta_x[e].to_string(),
                t.delta_y[e].to_string(),
                t.delta_a[e].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_sparsity(path: &Path, seeds: &[u64], rows: &[SparsityRow]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["n_atoms".to_string(), "mean_sparsity".to_string()];
    header.extend(seeds.iter().map(|s| format!("seed_{s}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.n_atoms.to_string(), r.mean_sparsity.to_string()];
        rec.extend(r.per_seed.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text description of how a run was produced.
pub fn write_run_info(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = format!(
        "protocol: seeded stratified split of the target domain, {:.0}% unlabeled for fitting, {:.0}% held out for accuracy\n",
        TRAIN_FRACTION * 100.0,
        (1.0 - TRAIN_FRACTION) * 100.0
    );
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// Colour for `t` in [0, 1] on a dark-blue to yellow ramp.
fn ramp(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 3] = [(68.0, 1.0, 84.0), (33.0, 145.0, 140.0), (253.0, 231.0, 37.0)];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 } * 2.0;
    let i = (t.floor() as usize).min(1);
    let f = t - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let c = |x: f64, y: f64| (x + (y - x) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(a.0, b.0), c(a.1, b.1), c(a.2, b.2))
}

/// Three panels (reconstruction cost, reconstruction accuracy, ensemble
/// accuracy) over the triangle of a three-atom grid. Each grid point is a
/// dot coloured by its value, scaled per panel between the panel's min and
/// max. Returns an error for tables that are not three-atom.
pub fn simplex_heatmap_svg(table: &InterpolationTable) -> Result<String> {
    if table.rows.iter().any(|r| r.alpha.len() != 3) || table.rows.is_empty() {
        return Err(HarnessError::Config("simplex heatmap needs a non-empty three-atom study".into()));
    }
    const SIDE: f64 = 240.0;
    const PAD: f64 = 30.0;
    let height = SIDE * 3f64.sqrt() / 2.0;
    let panel_w = SIDE + 2.0 * PAD;
    let total_h = height + 2.0 * PAD + 20.0;
    let corners = [(PAD, PAD + 20.0 + height), (PAD + SIDE, PAD + 20.0 + height), (PAD + SIDE / 2.0, PAD + 20.0)];
    let panels: [(&str, fn(&crate::study::InterpolationRow) -> f64); 3] =
        [("reconstruction cost", |r| r.w2), ("reconstruction accuracy", |r| r.acc_r), ("ensemble accuracy", |r| r.acc_e)];

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" font-family="sans-serif" font-size="12">"#,
        panel_w * 3.0,
        total_h
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (p, (title, value)) in panels.iter().enumerate() {
        let dx = p as f64 * panel_w;
        let vals: Vec<f64> = table.rows.iter().map(value).collect();
        let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let _ = writeln!(svg, r#"<g transform="translate({dx:.1},0)">"#);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="16" text-anchor="middle">{title} [{lo:.3}, {hi:.3}]</text>"#, panel_w / 2.0);
        let _ = writeln!(
            svg,
            r#"<polygon points="{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}" fill="none" stroke="black"/>"#,
            corners[0].0, corners[0].1, corners[1].0, corners[1].1, corners[2].0, corners[2].1
        );
        for (k, (cx, cy)) in corners.iter().enumerate() {
            let _ = writeln!(svg, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">atom {k}</text>"#, cy + if k == 2 { -6.0 } else { 16.0 });
        }
        for (r, v) in table.rows.iter().zip(&vals) {
            let x: f64 = r.alpha.iter().zip(&corners).map(|(a, c)| a * c.0).sum();
            let y: f64 = r.alpha.iter().zip(&corners).map(|(a, c)| a * c.1).sum();
            let _ = writeln!(svg, r#"<circle cx="{x:.1}" cy="{y:.1}" r="7" fill="{}"/>"#, ramp((v - lo) / span));
        }
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
