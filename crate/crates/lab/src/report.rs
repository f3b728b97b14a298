//! SVG plot sets and plain-text summaries for run and sweep directories.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use nvi_core::regret::exponent_fit;

use crate::config::ExperimentConfig;
use crate::error::LabError;
use crate::output;
use crate::runner::{self, SweepIndex};
use crate::svg::{Chart, Series};

pub const REGRET_SVG: &str = "regret.svg";
pub const OCCUPANCY_SVG: &str = "occupancy.svg";
pub const APPROXIMATION_SVG: &str = "approximation.svg";
pub const SUMMARY_TXT: &str = "summary.txt";

fn missing_files(dir: &Path) -> LabError {
    LabError::Report(format!(
        "{} is neither a run nor a sweep directory; expected {}, {} and {} (run) or {} and {} (sweep)",
        dir.display(),
        output::LEDGER_FILE,
        output::DIAGNOSTICS_FILE,
        output::CONFIG_FILE,
        output::SUMMARY_FILE,
        output::SWEEP_FILE,
    ))
}

/// Writes the report for `dir` and returns the files created.
pub fn report(dir: &Path) -> Result<Vec<PathBuf>, LabError> {
    if dir.join(output::SUMMARY_FILE).is_file() && dir.join(output::SWEEP_FILE).is_file() {
        report_sweep(dir)
    } else if [output::LEDGER_FILE, output::DIAGNOSTICS_FILE, output::CONFIG_FILE]
        .iter()
        .all(|f| dir.join(f).is_file())
    {
        report_run(dir)
    } else {
        Err(missing_files(dir))
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value, LabError> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| LabError::Report(format!("{}: {e}", path.display())))
}

fn write_svg(path: PathBuf, chart: &Chart, created: &mut Vec<PathBuf>) -> Result<(), LabError> {
    output::write_file(&path, chart.render().as_bytes())?;
    created.push(path);
    Ok(())
}

fn report_run(dir: &Path) -> Result<Vec<PathBuf>, LabError> {
    let cfg = ExperimentConfig::load(&dir.join(output::CONFIG_FILE))?;
    let ledger = output::read_ledger_csv(&dir.join(output::LEDGER_FILE))?;
    let diagnostics = read_json(&dir.join(output::DIAGNOSTICS_FILE))?;
    let summary = &diagnostics["summary"];
    let mut created = Vec::new();

    let cumulative = ledger.cumulative();
    let fit = exponent_fit(&cumulative, cumulative.len().div_ceil(2)).ok();
    let mut chart = Chart::new("Cumulative regret", "episode t", "regret").log_log();
    chart.series.push(Series::new(
        "cumulative regret",
        cumulative.iter().enumerate().map(|(i, &r)| ((i + 1) as f64, r)).collect(),
    ));
    if let Some(f) = &fit {
        let n = cumulative.len() as f64;
        let last = *cumulative.last().unwrap_or(&0.0);
        let anchor = (n / 2.0).max(1.0);
        let at_anchor = last * (anchor / n).powf(f.slope);
        chart
            .series
            .push(Series::new(format!("fit slope {:.3}", f.slope), vec![(anchor, at_anchor), (n, last)]).dashed());
        chart
            .notes
            .push(format!("slope {:.3} [{:.3}, {:.3}]", f.slope, f.lower, f.upper));
    }
    write_svg(dir.join(REGRET_SVG), &chart, &mut created)?;

    let a = cfg.action_count() as f64;
    let k = cfg.agent.myopia as i32;
    let occ: Vec<(f64, f64)> = ledger
        .rows
        .iter()
        .filter_map(|r| r.min_occ.map(|m| (r.t as f64, m)))
        .collect();
    let reference: Vec<(f64, f64)> = ledger
        .rows
        .iter()
        .filter(|r| r.min_occ.is_some())
        .map(|r| (r.t as f64, (r.epsilon / a).powi(k)))
        .collect();
    let mut chart = Chart::new("Minimum cell frequency", "episode t", "frequency");
    chart.series.push(Series::new("min frequency", occ));
    chart
        .series
        .push(Series::new(format!("(eps/A)^{k}"), reference).dashed());
    write_svg(dir.join(OCCUPANCY_SVG), &chart, &mut created)?;

    let probes_path = dir.join(output::PROBES_FILE);
    let probes = if probes_path.is_file() {
        output::read_probes_csv(&probes_path)?
    } else {
        Vec::new()
    };
    let mut chart = Chart::new("Approximation error", "capacity N", "L4 error").log_log();
    chart.series.push(Series::new(
        "error",
        probes.iter().map(|p| (p.capacity as f64, p.error)).collect(),
    ));
    chart.series.push(Series::new(
        "isotonic",
        probes.iter().map(|p| (p.capacity as f64, p.smoothed)).collect(),
    ));
    let rate = cfg.mdp.alpha / cfg.state_dim() as f64;
    if let (Some(first), Some(last)) = (probes.first(), probes.last()) {
        let (n0, n1) = (first.capacity as f64, last.capacity as f64);
        chart.series.push(
            Series::new(
                format!("slope -{rate:.2}"),
                vec![(n0, first.error), (n1, first.error * (n1 / n0).powf(-rate))],
            )
            .dashed(),
        );
    }
    write_svg(dir.join(APPROXIMATION_SVG), &chart, &mut created)?;

    let mut text = String::new();
    let _ = writeln!(text, "episodes: {}", ledger.rows.len());
    let _ = writeln!(text, "final cumulative regret: {:.6}", ledger.final_cumulative());
    match &fit {
        Some(f) => {
            let _ = writeln!(
                text,
                "regret exponent: {:.4} (2-SE band [{:.4}, {:.4}])",
                f.slope, f.lower, f.upper
            );
        }
        None => {
            let _ = writeln!(text, "regret exponent: n/a");
        }
    }
    let field = |v: &serde_json::Value| match v {
        serde_json::Value::Null => "n/a".to_string(),
        other => other.to_string(),
    };
    let _ = writeln!(text, "martingale envelope slope: {}", field(&summary["azuma"]["slope"]));
    let _ = writeln!(text, "occupancy violations: {}", field(&summary["occupancy_violations"]));
    let _ = writeln!(text, "estimated myopia exponent: {}", field(&summary["myopia_estimate"]));
    let _ = writeln!(text, "max identity residual: {}", field(&summary["max_identity_residual"]));
    let _ = writeln!(text, "oracle cells: {}", field(&summary["oracle_cells"]));
    let _ = writeln!(text, "architecture: {}", field(&summary["plan"]));
    if !probes.is_empty() {
        let xs: Vec<f64> = probes.iter().map(|p| p.capacity as f64).collect();
        let ys: Vec<f64> = probes.iter().map(|p| p.smoothed).collect();
        if let Ok(f) = nvi_core::math::log_log_fit(&xs, &ys) {
            let _ = writeln!(text, "approximation slope: {:.4} (reference -{rate:.4})", f.slope);
        }
    }
    let path = dir.join(SUMMARY_TXT);
    output::write_file(&path, text.as_bytes())?;
    created.push(path);
    Ok(created)
}

fn report_sweep(dir: &Path) -> Result<Vec<PathBuf>, LabError> {
    let index_path = dir.join(output::SWEEP_FILE);
    let text = std::fs::read_to_string(&index_path).map_err(|e| LabError::io(&index_path, e))?;
    let index: SweepIndex = serde_json::from_str(&text).map_err(|e| LabError::Report(e.to_string()))?;
    let rows = runner::read_summary(&dir.join(output::SUMMARY_FILE))?;
    let axis = index.axis.name();
    let mut chart = Chart::new(format!("Cumulative regret across {axis}"), "episode t", "regret").log_log();
    for (cell, value) in index.cells.iter().zip(&index.values) {
        let ledger = output::read_ledger_csv(&dir.join(cell).join(output::LEDGER_FILE))?;
        chart.series.push(Series::new(
            format!("{axis} = {value}"),
            ledger.rows.iter().map(|r| (r.t as f64, r.cum_regret)).collect(),
        ));
    }
    let mut created = Vec::new();
    write_svg(dir.join(format!("sweep_{axis}.svg")), &chart, &mut created)?;

    let mut text = String::new();
    let _ = writeln!(text, "sweep over {axis}: {} cells", index.cells.len());
    for r in &rows {
        let _ = writeln!(
            text,
            "{} = {}: final regret {:.4}, exponent {}{}",
            r.axis,
            r.value,
            r.final_cum_regret,
            r.exponent.map_or("n/a".into(), |e| format!("{e:.4}")),
            r.regret_std.map_or(String::new(), |s| format!(", regret std {s:.4}")),
        );
    }
    let path = dir.join(SUMMARY_TXT);
    output::write_file(&path, text.as_bytes())?;
    created.push(path);
    Ok(created)
}
