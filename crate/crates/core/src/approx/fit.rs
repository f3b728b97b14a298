use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::Regressor;
use crate::math::solve_spd;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Initial step size; halved on every rejected step, grown by 5% on
    /// every accepted one.
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub min_epochs: usize,
    /// Stop when the risk improved by less than `tolerance^2` over the last
    /// `patience` epochs.
    pub tolerance: f64,
    pub patience: usize,
    /// Project every this many epochs (and always at the end).
    pub projection_every: usize,
    pub seed: u64,
    /// Start from a ridge least-squares solve of the output layer.
    pub ls_init: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            max_epochs: 2000,
            min_epochs: 10,
            tolerance: 1e-3,
            patience: 50,
            projection_every: 1,
            seed: 0,
            ls_init: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::config("fit tolerance must be positive"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.projection_every == 0 || self.patience == 0 {
            return Err(Error::config("projection cadence and patience must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Mean squared error of the truncated output.
    pub risk: f64,
    /// Mean squared error of the raw output (the optimized objective).
    pub raw_risk: f64,
    pub epochs: usize,
    pub converged: bool,
}

/// Distinct inputs with their multiplicity and mean target.
struct Dataset {
    inputs: Vec<Vec<f64>>,
    weights: Vec<f64>,
    targets: Vec<f64>,
    /// Within-group sum of squares, constant in the parameters.
    offset: f64,
    n: f64,
}

fn group(inputs: &[Vec<f64>], targets: &[f64]) -> Dataset {
    let mut index: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    let mut member = Vec::with_capacity(inputs.len());
    let mut data = Dataset {
        inputs: Vec::new(),
        weights: Vec::new(),
        targets: Vec::new(),
        offset: 0.0,
        n: inputs.len() as f64,
    };
    for (x, &y) in inputs.iter().zip(targets) {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        let g = *index.entry(key).or_insert_with(|| {
            data.inputs.push(x.clone());
            data.weights.push(0.0);
            data.targets.push(0.0);
            data.inputs.len() - 1
        });
        data.weights[g] += 1.0;
        data.targets[g] += y;
        member.push(g);
    }
    for (t, w) in data.targets.iter_mut().zip(&data.weights) {
        *t /= w;
    }
    for (&g, &y) in member.iter().zip(targets) {
        let d = y - data.targets[g];
        data.offset += d * d;
    }
    data
}

fn objective<N: Regressor>(net: &N, data: &Dataset, grad: Option<&mut [f64]>) -> f64 {
    let mut loss = data.offset;
    match grad {
        Some(g) => {
            g.iter_mut().for_each(|v| *v = 0.0);
            for ((x, &w), &y) in data.inputs.iter().zip(&data.weights).zip(&data.targets) {
                let r = net.raw(x) - y;
                loss += w * r * r;
                net.accumulate_grad(x, 2.0 * w * r / data.n, g);
            }
        }
        None => {
            for ((x, &w), &y) in data.inputs.iter().zip(&data.weights).zip(&data.targets) {
                let r = net.raw(x) - y;
                loss += w * r * r;
            }
        }
    }
    loss / data.n
}

fn truncated_risk<N: Regressor>(net: &N, data: &Dataset) -> f64 {
    let mut loss = data.offset;
    for ((x, &w), &y) in data.inputs.iter().zip(&data.weights).zip(&data.targets) {
        let r = net.eval(x) - y;
        loss += w * r * r;
    }
    loss / data.n
}

fn init_output_layer<N: Regressor>(net: &mut N, data: &Dataset) -> Result<()> {
    let mut phi = Vec::new();
    net.output_features(&data.inputs[0], &mut phi);
    let k = phi.len();
    if k == 0 {
        return Ok(());
    }
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for ((x, &w), &y) in data.inputs.iter().zip(&data.weights).zip(&data.targets) {
        net.output_features(x, &mut phi);
        for i in 0..k {
            rhs[i] += w * phi[i] * y;
            for j in 0..=i {
                gram[i * k + j] += w * phi[i] * phi[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            gram[j * k + i] = gram[i * k + j];
        }
    }
    let trace: f64 = (0..k).map(|i| gram[i * k + i]).sum::<f64>() / k as f64;
    let ridge = 1e-8 * trace.max(1e-12);
    let weights = solve_spd(&gram, &rhs, ridge)?;
    if weights.iter().all(|w| w.is_finite()) {
        net.set_output_weights(&weights);
        net.project();
    }
    Ok(())
}

/// Minimizes `(1/n) sum_j (f(x_j) - y_j)^2` over the network's constraint
/// set by projected Adam-style descent on the raw output.
///
/// Repeated inputs are merged into a weighted objective with the same
/// minimizers. Steps that raise the risk are rejected and the step size is
/// halved. The best iterate seen is returned, projected.
pub fn fit_least_squares<N: Regressor>(
    net: &mut N,
    inputs: &[Vec<f64>],
    targets: &[f64],
    cfg: &FitConfig,
) -> Result<FitReport> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::domain("empty training set"));
    }
    if inputs.len() != targets.len() {
        return Err(Error::Dimension {
            expected: inputs.len(),
            found: targets.len(),
        });
    }
    let dim = net.input_dim();
    if let Some(x) = inputs.iter().find(|x| x.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            found: x.len(),
        });
    }
    let cap = net.h_cap();
    if targets.iter().any(|y| !(0.0..=cap + 1.0).contains(y)) {
        return Err(Error::domain("regression target outside [0, h_cap + 1]"));
    }
    let data = group(inputs, targets);
    if cfg.ls_init {
        init_output_layer(net, &data)?;
    }
    net.project();

    let p = net.param_count();
    let mut theta = net.params();
    let mut grad = vec![0.0; p];
    let mut m1 = vec![0.0; p];
    let mut m2 = vec![0.0; p];
    let (beta1, beta2, eps) = (0.9, 0.999, 1e-8);
    let mut lr = cfg.learning_rate;
    let mut loss = objective(net, &data, Some(&mut grad));
    if !loss.is_finite() {
        return Err(Error::Divergence {
            epoch: 0,
            detail: alloc::string::String::from("non-finite initial risk"),
        });
    }
    let mut best = (loss, theta.clone());
    let mut history = vec![loss];
    let mut converged = false;
    let mut epochs = 0;
    let mut accepted = 0usize;
    let floor = 1e-14;

    for epoch in 1..=cfg.max_epochs {
        epochs = epoch;
        if loss <= floor + data.offset / data.n {
            converged = true;
            break;
        }
        accepted += 1;
        let bc1 = 1.0 - Float::powi(beta1, accepted as i32);
        let bc2 = 1.0 - Float::powi(beta2, accepted as i32);
        let mut trial = theta.clone();
        let mut n1 = m1.clone();
        let mut n2 = m2.clone();
        for i in 0..p {
            n1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
            n2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
            trial[i] -= lr * (n1[i] / bc1) / ((n2[i] / bc2).sqrt() + eps);
        }
        net.set_params(&trial);
        if epoch % cfg.projection_every == 0 {
            net.project();
            trial = net.params();
        }
        let mut trial_grad = vec![0.0; p];
        let trial_loss = objective(net, &data, Some(&mut trial_grad));
        if !trial_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: alloc::format!("risk became {trial_loss}"),
            });
        }
        if trial_loss <= loss {
            theta = trial;
            grad = trial_grad;
            m1 = n1;
            m2 = n2;
            loss = trial_loss;
            lr *= 1.05;
            if loss < best.0 {
                best = (loss, theta.clone());
            }
        } else {
            accepted -= 1;
            lr *= 0.5;
            net.set_params(&theta);
            if lr < 1e-12 {
                converged = true;
                break;
            }
        }
        history.push(loss);
        if epoch >= cfg.min_epochs && history.len() > cfg.patience {
            let past = history[history.len() - 1 - cfg.patience];
            if past - loss < cfg.tolerance * cfg.tolerance {
                converged = true;
                break;
            }
        }
    }

    net.set_params(&best.1);
    net.project();
    let raw_risk = objective(net, &data, None);
    Ok(FitReport {
        risk: truncated_risk(net, &data),
        raw_risk,
        epochs,
        converged,
    })
}
