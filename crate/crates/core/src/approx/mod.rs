//! Norm-constrained ReLU function classes and their least-squares fitting.
//!
//! Two families share the [`Regressor`] interface: [`TwoLayerNet`] under an
//! l1 path-norm budget and the sparse, entrywise bounded [`DeepReluNet`].
//! Both truncate their output to `[0, h_cap]` on evaluation.

mod deep;
mod fit;
mod plan;
mod probe;
mod shallow;

use alloc::vec::Vec;

pub use deep::{project_deep_constraints, DeepArchitecture, DeepNetData, DeepReluNet};
pub use fit::{fit_least_squares, FitConfig, FitReport};
pub use plan::{
    default_path_budget, approximation_architecture, plan_architecture_barron,
    plan_architecture_besov, ArchitecturePlan, Family,
};
pub use plan::plan_architecture_besov_with;
pub use probe::{
    approximation_probe, rademacher_bound, rademacher_probe, ProbeConfig, ProbePoint, RademacherEstimate,
};
pub use shallow::{path_norm, project_path_norm, TwoLayerNet};

/// A parametric regressor on `[0,1]^d` trained on its untruncated output.
pub trait Regressor {
    fn input_dim(&self) -> usize;

    /// Truncation level of [`Regressor::eval`].
    fn h_cap(&self) -> f64;

    /// Network output before truncation.
    fn raw(&self, x: &[f64]) -> f64;

    /// `min{raw, h_cap}^+`.
    fn eval(&self, x: &[f64]) -> f64 {
        self.raw(x).clamp(0.0, self.h_cap())
    }

    /// Number of free (trainable) parameters.
    fn param_count(&self) -> usize;

    fn params(&self) -> Vec<f64>;

    fn set_params(&mut self, p: &[f64]);

    /// Adds `scale * d raw(x) / d theta` into `grad` and returns `raw(x)`.
    fn accumulate_grad(&self, x: &[f64], scale: f64, grad: &mut [f64]) -> f64;

    /// Projects the parameters back onto the constraint set.
    fn project(&mut self);

    /// Features that the output layer combines linearly (a trailing `1.0`
    /// marks a trainable output bias).
    fn output_features(&self, x: &[f64], out: &mut Vec<f64>);

    fn set_output_weights(&mut self, weights: &[f64]);

    fn satisfies_constraints(&self, tol: f64) -> bool;
}
