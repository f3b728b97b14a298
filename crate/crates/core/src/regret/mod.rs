//! Regret accounting against the tabular oracle and the diagnostics that
//! follow the regret analysis: TD errors, the per-episode decomposition with
//! its martingale terms, occupancy, generalization gap and slope fits.
//!
//! Everything here works on oracle cells. A learned Q-stack is first
//! evaluated at the cell centers into a [`ValueTables`] (see
//! [`crate::agent::QStack::on_cells`]), after which all expectations are exact
//! table sums.

mod decomposition;
mod diagnostics;
mod fits;

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

pub use decomposition::{
    decompose_episode, empirical_l2_td_norm, greedy_rollout, td_error_table, td_field,
    verify_decomposition_identity, CellStep, DecompositionRecord, TdErrorField,
};
pub use diagnostics::{
    azuma_diagnostic, estimate_myopia, generalization_gap_estimate, occupancy_burn_in,
    occupancy_diagnostic, AzumaReport, GapEstimate, OccupancyReport, VisitHistogram,
};
pub use fits::{exponent_fit, ExponentFit};

#[allow(unused_imports)]
use crate::oracle::ValueTables;
use crate::{Error, Result};

/// Slack allowed for a negative episode regret (oracle round-off).
pub const ORACLE_TOLERANCE: f64 = 1e-9;

/// One episode of the ledger. Diagnostic columns are filled on cadence
/// episodes only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: usize,
    pub s1: Vec<f64>,
    pub v_star: f64,
    /// Exact value of the executed (epsilon-greedy) policy at `s1`.
    pub v_realized: f64,
    pub regret: f64,
    pub cum_regret: f64,
    pub epsilon: f64,
    pub t_tilde: usize,
    pub term_i: Option<f64>,
    pub term_ii: Option<f64>,
    pub td_l2_max_h: Option<f64>,
    pub min_occ: Option<f64>,
    pub gap_h1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    pub rows: Vec<LedgerRow>,
}

impl RegretLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends episode `t = len + 1`; fills `regret` and `cum_regret`.
    pub fn push(&mut self, s1: Vec<f64>, v_star: f64, v_realized: f64, epsilon: f64, t_tilde: usize) -> Result<&mut LedgerRow> {
        let regret = v_star - v_realized;
        if regret < -ORACLE_TOLERANCE {
            return Err(Error::Numeric(alloc::format!(
                "episode regret {regret} is below the oracle tolerance"
            )));
        }
        let cum_regret = self.final_cumulative() + regret;
        self.rows.push(LedgerRow {
            t: self.rows.len() + 1,
            s1,
            v_star,
            v_realized,
            regret,
            cum_regret,
            epsilon,
            t_tilde,
            term_i: None,
            term_ii: None,
            td_l2_max_h: None,
            min_occ: None,
            gap_h1: None,
        });
        Ok(self.rows.last_mut().expect("just pushed"))
    }

    pub fn final_cumulative(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cum_regret)
    }

    pub fn cumulative(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.cum_regret).collect()
    }

    /// Checks the prefix-sum and sign invariants.
    pub fn check(&self) -> Result<()> {
        let mut acc = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            acc += row.regret;
            if row.t != i + 1 || (row.cum_regret - acc).abs() > 1e-9 * (1.0 + acc.abs()) {
                return Err(Error::Numeric(alloc::format!("ledger row {} is inconsistent", i + 1)));
            }
            if row.regret < -ORACLE_TOLERANCE {
                return Err(Error::Numeric(alloc::format!("negative regret at row {}", i + 1)));
            }
        }
        Ok(())
    }
}
