//! Ledger CSV, JSON artifacts and the run manifest.

use std::fs;
use std::io::Write;
use std::path::Path;

use nvi_core::approx::ProbePoint;
use nvi_core::regret::{LedgerRow, RegretLedger};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::LabError;

pub const LEDGER_FILE: &str = "ledger.csv";
pub const LEDGER_JSON_FILE: &str = "ledger.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const QSTACK_FILE: &str = "qstack.json";
pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PROBES_FILE: &str = "probes.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SWEEP_FILE: &str = "sweep.json";

const FIXED_COLUMNS: [&str; 6] = ["v_star", "v_realized", "regret", "cum_regret", "epsilon", "t_tilde"];
const DIAG_COLUMNS: [&str; 5] = ["term_i", "term_ii", "td_l2_max_h", "min_occ", "gap_h1"];

pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), LabError> {
    let mut f = fs::File::create(path).map_err(|e| LabError::io(path, e))?;
    f.write_all(contents).map_err(|e| LabError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), LabError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| LabError::Report(e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn ledger_header(state_dim: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=state_dim).map(|i| format!("s1_{i}")));
    h.extend(FIXED_COLUMNS.iter().map(|s| s.to_string()));
    h.extend(DIAG_COLUMNS.iter().map(|s| s.to_string()));
    h
}

/// One row per episode; diagnostic columns are empty off cadence.
pub fn write_ledger_csv(path: &Path, ledger: &RegretLedger, state_dim: usize) -> Result<(), LabError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ledger_header(state_dim))?;
    for r in &ledger.rows {
        let mut rec = vec![r.t.to_string()];
        rec.extend(r.s1.iter().map(|x| x.to_string()));
        rec.extend([
            r.v_star.to_string(),
            r.v_realized.to_string(),
            r.regret.to_string(),
            r.cum_regret.to_string(),
            r.epsilon.to_string(),
            r.t_tilde.to_string(),
            opt(r.term_i),
            opt(r.term_ii),
            opt(r.td_l2_max_h),
            opt(r.min_occ),
            opt(r.gap_h1),
        ]);
        w.write_record(rec)?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

fn parse_f64(s: &str, path: &Path) -> Result<f64, LabError> {
    s.parse()
        .map_err(|_| LabError::Report(format!("{}: bad number {s:?}", path.display())))
}

fn parse_opt(s: &str, path: &Path) -> Result<Option<f64>, LabError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s, path).map(Some)
    }
}

pub fn read_ledger_csv(path: &Path) -> Result<RegretLedger, LabError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let state_dim = header.iter().filter(|h| h.starts_with("s1_")).count();
    if header.len() != ledger_header(state_dim).len() {
        return Err(LabError::Report(format!("{}: unexpected ledger columns", path.display())));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let base = 1 + state_dim;
        let t = f(0)
            .parse()
            .map_err(|_| LabError::Report(format!("{}: bad episode index", path.display())))?;
        let s1 = (1..base).map(|i| parse_f64(f(i), path)).collect::<Result<Vec<_>, _>>()?;
        rows.push(LedgerRow {
            t,
            s1,
            v_star: parse_f64(f(base), path)?,
            v_realized: parse_f64(f(base + 1), path)?,
            regret: parse_f64(f(base + 2), path)?,
            cum_regret: parse_f64(f(base + 3), path)?,
            epsilon: parse_f64(f(base + 4), path)?,
            t_tilde: parse_f64(f(base + 5), path)? as usize,
            term_i: parse_opt(f(base + 6), path)?,
            term_ii: parse_opt(f(base + 7), path)?,
            td_l2_max_h: parse_opt(f(base + 8), path)?,
            min_occ: parse_opt(f(base + 9), path)?,
            gap_h1: parse_opt(f(base + 10), path)?,
        });
    }
    Ok(RegretLedger { rows })
}

pub fn write_probes_csv(path: &Path, points: &[ProbePoint]) -> Result<(), LabError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["capacity", "error", "smoothed"])?;
    for p in points {
        w.write_record([p.capacity.to_string(), p.error.to_string(), p.smoothed.to_string()])?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

pub fn read_probes_csv(path: &Path) -> Result<Vec<ProbePoint>, LabError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| parse_f64(rec.get(i).unwrap_or(""), path);
        out.push(ProbePoint {
            capacity: f(0)? as usize,
            error: f(1)?,
            smoothed: f(2)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

/// What is needed to reproduce a run directory bitwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_sha256: String,
    pub agent_seed: u64,
    pub mdp_seed: u64,
    pub files: Vec<FileDigest>,
}

impl Manifest {
    pub fn build(dir: &Path, config_json: &str, agent_seed: u64, mdp_seed: u64, files: &[&str]) -> Result<Self, LabError> {
        let mut digests = Vec::new();
        for name in files {
            let path = dir.join(name);
            let bytes = fs::read(&path).map_err(|e| LabError::io(&path, e))?;
            digests.push(FileDigest {
                name: name.to_string(),
                sha256: sha256_hex(&bytes),
            });
        }
        Ok(Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(config_json.as_bytes()),
            agent_seed,
            mdp_seed,
            files: digests,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_round_trips_through_csv() {
        let mut ledger = RegretLedger::new();
        ledger.push(vec![0.25], 1.0, 0.7, 1.0, 0).unwrap();
        let row = ledger.push(vec![0.75], 1.0, 0.9, 0.3, 1).unwrap();
        row.term_i = Some(0.1);
        row.min_occ = Some(1.0 / 3.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(LEDGER_FILE);
        write_ledger_csv(&path, &ledger, 1).unwrap();
        let back = read_ledger_csv(&path).unwrap();
        assert_eq!(back, ledger);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "t,s1_1,v_star,v_realized,regret,cum_regret,epsilon,t_tilde,term_i,term_ii,td_l2_max_h,min_occ,gap_h1\n"
        ));
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
