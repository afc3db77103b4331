//! Summary table over the aggregates in a results directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::config::Experiment;
use crate::experiments::{Aggregate, AGGREGATE_FILE};

/// `dir/aggregate.json` and those of its immediate subdirectories, sorted.
pub fn find_aggregates(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let top = dir.join(AGGREGATE_FILE);
    if top.is_file() {
        found.push(top);
    }
    let entries = fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    for e in entries {
        let p = e?.path().join(AGGREGATE_FILE);
        if p.is_file() {
            found.push(p);
        }
    }
    found.sort();
    if found.is_empty() {
        bail!("no {AGGREGATE_FILE} under {}", dir.display());
    }
    Ok(found)
}

pub fn load(path: &Path) -> Result<Aggregate> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn fmt_value(v: Option<f64>) -> String {
    match v {
        None => "n/a".into(),
        Some(x) if x != 0.0 && (x.abs() >= 1e4 || x.abs() < 1e-3) => format!("{x:.3e}"),
        Some(x) => format!("{x:.4}"),
    }
}

/// One row per aggregate: experiment, seed count and every metric as
/// `mean ± std`. Resources rows are followed by the measurement ratios.
pub fn render(dir: &Path) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "{:<20} {:>5}  metrics (mean ± std)", "experiment", "seeds")?;
    for path in find_aggregates(dir)? {
        let agg = load(&path)?;
        let cells: Vec<String> = agg
            .mean
            .iter()
            .map(|(k, m)| {
                let s = agg.std.get(k).copied().flatten();
                format!("{k}={} ± {}", fmt_value(*m), fmt_value(s))
            })
            .collect();
        writeln!(
            out,
            "{:<20} {:>5}  {}",
            experiment_label(&agg, &path, dir),
            agg.per_seed.len(),
            cells.join("  ")
        )?;
        if agg.experiment == Experiment::Resources {
            for (k, m) in &agg.mean {
                if let Some(n) = k.strip_prefix('n').and_then(|r| r.strip_suffix("_ratio")) {
                    writeln!(out, "  n={n}: SA-QITE / VarQITE measurements = {}", fmt_value(*m))?;
                }
            }
        }
    }
    Ok(out)
}

fn experiment_label(agg: &Aggregate, path: &Path, root: &Path) -> String {
    let name = agg.experiment.name();
    match path.parent().filter(|p| *p != root).and_then(|p| p.file_name()) {
        Some(sub) => format!("{name} ({})", sub.to_string_lossy()),
        None => name.to_string(),
    }
}
