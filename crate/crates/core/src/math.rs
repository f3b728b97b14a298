//! Small numeric helpers shared across modules.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// SplitMix64 finalizer. Used for stateless pseudo-random coefficients and
/// seed derivation.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive 64-bit hash of a sequence of words.
pub fn hash64(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// 64-bit FNV-1a over bytes, for hashing names into seeds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (zero for fewer than two samples).
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the sample mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Ordinary least-squares line fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
    pub points: usize,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::InsufficientData {
            requested: 2,
            available: n,
        });
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::numeric("degenerate abscissa in line fit"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if n > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = y - (intercept + slope * x);
                r * r
            })
            .sum();
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit {
        slope,
        intercept,
        slope_se,
        points: n,
    })
}

/// Least-squares slope of `ln y` against `ln x`. All values must be positive.
pub fn log_log_fit(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::domain("log-log fit needs positive finite values"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    fit_line(&lx, &ly)
}

/// Pool-adjacent-violators projection onto non-increasing sequences
/// (unweighted least squares).
pub fn isotonic_non_increasing(ys: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(ys.len());
    for &y in ys {
        blocks.push((y, 1));
        while blocks.len() >= 2 {
            let (s1, c1) = blocks[blocks.len() - 2];
            let (s2, c2) = blocks[blocks.len() - 1];
            if s1 / c1 as f64 >= s2 / c2 as f64 {
                break;
            }
            blocks.pop();
            let last = blocks.len() - 1;
            blocks[last] = (s1 + s2, c1 + c2);
        }
    }
    let mut out = Vec::with_capacity(ys.len());
    for (s, c) in blocks {
        out.extend(core::iter::repeat(s / c as f64).take(c));
    }
    out
}

/// Solves `(A + ridge I) x = b` for a symmetric positive semi-definite `A`
/// given row-major, via Cholesky.
pub fn solve_spd(a: &[f64], b: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n * n {
        return Err(Error::Dimension {
            expected: n * n,
            found: a.len(),
        });
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            if i == j {
                s += ridge;
            }
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::numeric("matrix not positive definite"));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Ok(x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn max_value(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Binomial coefficient as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    let mut c = 1.0;
    for j in 0..k {
        c = c * (n - j) as f64 / (j + 1) as f64;
    }
    c
}
