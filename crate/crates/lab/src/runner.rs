//! Single runs and parameter sweeps.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nvi_core::agent::{run_experiment, ExperimentOutput};
use nvi_core::approx::{approximation_probe, ProbePoint};
use nvi_core::math::{fnv1a, hash64, log_log_fit, mean, variance};
use nvi_core::regret::exponent_fit;
use serde::{Deserialize, Serialize};

use crate::config::{EpsilonKind, ExperimentConfig, Format};
use crate::error::LabError;
use crate::output::{self, Manifest};

/// Environment variable overriding `output.directory`.
pub const OUTPUT_DIR_ENV: &str = "NVI_OUTPUT_DIR";

pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from(&cfg.output.directory),
    }
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub output: ExperimentOutput,
    pub probes: Vec<ProbePoint>,
}

fn create_dir(dir: &Path) -> Result<(), LabError> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))
}

/// Runs one experiment and writes its artifacts into `dir`.
pub fn run_into(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutcome, LabError> {
    cfg.validate()?;
    create_dir(dir)?;
    let mdp = cfg.build_mdp()?;
    let output = run_experiment(&mdp, &cfg.agent_config(), &cfg.diagnostics_config())?;
    let probes = if cfg.probe.enabled {
        let target = |x: &[f64]| mdp.reward(1, x, 0).unwrap_or(0.0);
        approximation_probe(target, cfg.state_dim(), &cfg.probe.capacities, &cfg.probe_config())?
    } else {
        Vec::new()
    };

    let config_json = cfg.to_json();
    output::write_file(&dir.join(output::CONFIG_FILE), config_json.as_bytes())?;
    output::write_ledger_csv(&dir.join(output::LEDGER_FILE), &output.ledger, cfg.state_dim())?;
    let mut files = vec![output::CONFIG_FILE, output::LEDGER_FILE];
    if cfg.output.formats.contains(&Format::Json) {
        output::write_json(&dir.join(output::LEDGER_JSON_FILE), &output.ledger)?;
        files.push(output::LEDGER_JSON_FILE);
    }
    #[derive(Serialize)]
    struct Diagnostics<'a> {
        summary: &'a nvi_core::agent::RunSummary,
        points: &'a [nvi_core::agent::DiagnosticPoint],
        visit_counts: &'a [u64],
    }
    output::write_json(
        &dir.join(output::DIAGNOSTICS_FILE),
        &Diagnostics {
            summary: &output.summary,
            points: &output.diagnostics,
            visit_counts: &output.histogram.counts,
        },
    )?;
    output::write_json(&dir.join(output::QSTACK_FILE), &output.qstack)?;
    files.extend([output::DIAGNOSTICS_FILE, output::QSTACK_FILE]);
    if cfg.probe.enabled {
        output::write_probes_csv(&dir.join(output::PROBES_FILE), &probes)?;
        files.push(output::PROBES_FILE);
    }
    let manifest = Manifest::build(dir, &config_json, cfg.agent.seed, cfg.mdp.seed, &files)?;
    output::write_json(&dir.join(output::MANIFEST_FILE), &manifest)?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        output,
        probes,
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome, LabError> {
    run_into(cfg, &output_dir(cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "T")]
    Episodes,
    #[serde(rename = "alpha")]
    Alpha,
    #[serde(rename = "epsilon")]
    Epsilon,
    #[serde(rename = "m")]
    Width,
    #[serde(rename = "L")]
    Depth,
    #[serde(rename = "seed")]
    Seed,
}

impl Axis {
    pub fn parse(name: &str) -> Result<Self, LabError> {
        Ok(match name {
            "T" | "episodes" => Axis::Episodes,
            "alpha" => Axis::Alpha,
            "epsilon" => Axis::Epsilon,
            "m" | "width" => Axis::Width,
            "L" | "depth" => Axis::Depth,
            "seed" => Axis::Seed,
            other => {
                return Err(LabError::Validation {
                    field: "axis".into(),
                    message: format!("{other:?} is not sweepable; use one of T, alpha, epsilon, m, L, seed"),
                })
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::Episodes => "T",
            Axis::Alpha => "alpha",
            Axis::Epsilon => "epsilon",
            Axis::Width => "m",
            Axis::Depth => "L",
            Axis::Seed => "seed",
        }
    }

    fn integral(self) -> bool {
        matches!(self, Axis::Episodes | Axis::Width | Axis::Depth | Axis::Seed)
    }

    /// Cell configuration for `value` at position `index`.
    pub fn apply(self, base: &ExperimentConfig, value: f64, index: usize) -> Result<ExperimentConfig, LabError> {
        if self.integral() && (value < 0.0 || value.fract() != 0.0) {
            return Err(LabError::Validation {
                field: "values".into(),
                message: format!("axis {} needs non-negative integers, got {value}", self.name()),
            });
        }
        let mut cfg = base.clone();
        let tag = fnv1a(self.name().as_bytes());
        let mut seed_base = base.agent.seed;
        match self {
            Axis::Episodes => cfg.agent.episodes = value as usize,
            Axis::Alpha => {
                cfg.mdp.alpha = value;
                if cfg.agent.alpha.is_some() {
                    cfg.agent.alpha = Some(value);
                }
            }
            Axis::Epsilon => {
                cfg.agent.epsilon_mode = EpsilonKind::Fixed;
                cfg.agent.epsilon = Some(value);
            }
            Axis::Width => cfg.agent.width = Some(value as usize),
            Axis::Depth => cfg.agent.depth = Some(value as usize),
            Axis::Seed => seed_base = value as u64,
        }
        cfg.agent.seed = hash64(&[seed_base, tag, index as u64]);
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_values(list: &str) -> Result<Vec<f64>, LabError> {
    let values: Result<Vec<f64>, _> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>())
        .collect();
    match values {
        Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(LabError::Validation {
            field: "values".into(),
            message: format!("expected a comma-separated list of numbers, got {list:?}"),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub axis: String,
    pub value: String,
    pub cell: String,
    pub seed: String,
    pub episodes: String,
    pub final_cum_regret: f64,
    pub regret_std: Option<f64>,
    pub exponent: Option<f64>,
    pub exponent_lower: Option<f64>,
    pub exponent_upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepIndex {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub base_seed: u64,
    pub cells: Vec<String>,
}

struct CellResult {
    seed: u64,
    episodes: usize,
    final_regret: f64,
    cumulative: Vec<f64>,
    exponent: Option<(f64, f64, f64)>,
}

/// Runs one experiment per value on up to `jobs` threads and writes
/// `summary.csv` with a trailing pooled row.
pub fn sweep(
    base: &ExperimentConfig,
    axis: Axis,
    values: &[f64],
    jobs: usize,
    dir: &Path,
) -> Result<Vec<SummaryRow>, LabError> {
    base.validate()?;
    let cells: Vec<ExperimentConfig> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| axis.apply(base, v, i))
        .collect::<Result<_, _>>()?;
    create_dir(dir)?;
    let names: Vec<String> = (0..cells.len()).map(|i| format!("cell_{i:03}")).collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<CellResult, LabError>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, cells.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let cfg = &cells[i];
                let res = run_into(cfg, &dir.join(&names[i])).map(|o| {
                    let cumulative = o.output.ledger.cumulative();
                    CellResult {
                        seed: cfg.agent.seed,
                        episodes: cfg.agent.episodes,
                        final_regret: o.output.summary.final_cum_regret,
                        exponent: o.output.summary.exponent.map(|e| (e.slope, e.lower, e.upper)),
                        cumulative,
                    }
                });
                results.lock().expect("results lock")[i] = Some(res);
            });
        }
    });
    let results: Vec<CellResult> = results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect::<Result<_, _>>()?;

    let mut rows: Vec<SummaryRow> = results
        .iter()
        .zip(values)
        .zip(&names)
        .map(|((r, v), name)| SummaryRow {
            axis: axis.name().into(),
            value: v.to_string(),
            cell: name.clone(),
            seed: r.seed.to_string(),
            episodes: r.episodes.to_string(),
            final_cum_regret: r.final_regret,
            regret_std: None,
            exponent: r.exponent.map(|e| e.0),
            exponent_lower: r.exponent.map(|e| e.1),
            exponent_upper: r.exponent.map(|e| e.2),
        })
        .collect();
    rows.push(pooled_row(axis, &results));
    write_summary(&dir.join(output::SUMMARY_FILE), &rows)?;
    output::write_json(
        &dir.join(output::SWEEP_FILE),
        &SweepIndex {
            axis,
            values: values.to_vec(),
            base_seed: base.agent.seed,
            cells: names,
        },
    )?;
    output::write_file(&dir.join(output::CONFIG_FILE), base.to_json().as_bytes())?;
    Ok(rows)
}

fn pooled_row(axis: Axis, results: &[CellResult]) -> SummaryRow {
    let finals: Vec<f64> = results.iter().map(|r| r.final_regret).collect();
    let same_length = results.windows(2).all(|w| w[0].episodes == w[1].episodes);
    let exponent = if same_length {
        let n = results[0].cumulative.len();
        let avg: Vec<f64> = (0..n)
            .map(|t| results.iter().map(|r| r.cumulative[t]).sum::<f64>() / results.len() as f64)
            .collect();
        exponent_fit(&avg, n.div_ceil(2)).ok().map(|e| (e.slope, e.lower, e.upper))
    } else {
        let xs: Vec<f64> = results.iter().map(|r| r.episodes as f64).collect();
        log_log_fit(&xs, &finals)
            .ok()
            .map(|f| (f.slope, f.slope - 2.0 * f.slope_se, f.slope + 2.0 * f.slope_se))
    };
    SummaryRow {
        axis: axis.name().into(),
        value: "pooled".into(),
        cell: String::new(),
        seed: String::new(),
        episodes: if same_length {
            results[0].episodes.to_string()
        } else {
            String::new()
        },
        final_cum_regret: mean(&finals),
        regret_std: (finals.len() > 1).then(|| variance(&finals).sqrt()),
        exponent: exponent.map(|e| e.0),
        exponent_lower: exponent.map(|e| e.1),
        exponent_upper: exponent.map(|e| e.2),
    }
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), LabError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, LabError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(LabError::from)).collect()
}
