//! Population quantities of a [`DataModel`] against a fitted function.
//!
//! With `mu = f*(x) + shift_k` and centred noise `xi`:
//!
//! ```text
//! phi_{B,k}(x) = E[T_B(mu + xi)]
//! Phi_k(x)     = mu
//! excess       = (1/n) sum_k E (g(X_k) - phi_{B,k}(X_k))^2
//! tail term    = (1/n) sum_k E (|Y_k| - B)^2 1{|Y_k| > B}
//! ```
//!
//! For uniform noise on `[-w, w]` the noise expectations use antiderivatives:
//!
//! ```text
//! E T_B(mu + U)          = (G(mu + w) - G(mu - w)) / 2w,   G(t) = t^2/2 or B|t| - B^2/2
//! E (T_B(mu + U))^2      = (S(mu + w) - S(mu - w)) / 2w,   S' = T_B^2
//! E (|mu + U| - B)_+^2   = (Q(mu + w) - Q(mu - w)) / 2w,   Q(t) = sign(t) (|t| - B)_+^3 / 3
//! ```
//!
//! Covariate expectations are exact sums for discrete laws and composite
//! Gauss-Legendre rules on boxes of dimension at most 2 (16 panels of 8 nodes
//! per axis; the reported error is the gap to an 8-panel rule). Higher
//! dimensions fall back to a fixed-seed Monte-Carlo average with its standard
//! error.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{CovariateLaw, DataModel, Noise};
use crate::error::{invalid, Result};
use crate::hypothesis::{clip, Predictor};
use crate::rademacher::substream;

const QUAD_ORDER: usize = 8;
const QUAD_PANELS: usize = 16;
const MC_DRAWS: usize = 1 << 16;
const MC_SEED: u64 = 0x005e_ed0f_7a11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMethod {
    Exact,
    Quadrature,
    MonteCarlo,
}

/// A population quantity with its numerical error indicator (0 when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskValue {
    pub value: f64,
    pub error: f64,
    pub method: RiskMethod,
}

fn g_int(t: f64, b: f64) -> f64 {
    if t.abs() <= b {
        0.5 * t * t
    } else {
        b * t.abs() - 0.5 * b * b
    }
}

fn s_int(t: f64, b: f64) -> f64 {
    if t.abs() <= b {
        t * t * t / 3.0
    } else {
        t.signum() * (b * b * b / 3.0 + b * b * (t.abs() - b))
    }
}

fn q_int(t: f64, b: f64) -> f64 {
    let excess = (t.abs() - b).max(0.0);
    t.signum() * excess * excess * excess / 3.0
}

fn noise_average(noise: &Noise, mu: f64, f: impl Fn(f64) -> f64, antiderivative: impl Fn(f64) -> f64) -> f64 {
    match noise {
        Noise::Uniform { half_width: w } => (antiderivative(mu + w) - antiderivative(mu - w)) / (2.0 * w),
        _ => noise
            .atoms()
            .expect("discrete noise")
            .iter()
            .map(|(a, p)| p * f(mu + a))
            .sum(),
    }
}

/// `E[T_B(mu + xi)]`.
pub fn truncated_mean(noise: &Noise, mu: f64, b: f64) -> f64 {
    noise_average(noise, mu, |y| clip(y, b), |t| g_int(t, b))
}

/// `E[T_B(mu + xi)^2]`.
pub fn truncated_second_moment(noise: &Noise, mu: f64, b: f64) -> f64 {
    noise_average(noise, mu, |y| clip(y, b).powi(2), |t| s_int(t, b))
}

/// `E[(|mu + xi| - B)^2 1{|mu + xi| > B}]`.
pub fn truncation_tail(noise: &Noise, mu: f64, b: f64) -> f64 {
    noise_average(noise, mu, |y| (y.abs() - b).max(0.0).powi(2), |t| q_int(t, b))
}

/// `phi_{B,k}(x) = E[T_B Y_k | X_k = x]`.
pub fn phi_b(model: &DataModel, x: &[f64], k: usize) -> Result<f64> {
    Ok(truncated_mean(&model.noise, model.signal(x, k)?, model.bound))
}

fn gl_rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        GaussLegendre::new(NonZeroUsize::new(QUAD_ORDER).expect("nonzero order"))
            .as_node_weight_pairs()
            .to_vec()
    })
}

/// Composite rule on `[lo, hi]` with `panels` panels; weights sum to `hi - lo`.
fn composite(lo: f64, hi: f64, panels: usize) -> Vec<(f64, f64)> {
    let h = (hi - lo) / panels as f64;
    let rule = gl_rule();
    (0..panels)
        .flat_map(|p| {
            let a = lo + h * p as f64;
            rule.iter().map(move |(x, w)| (a + 0.5 * h * (x + 1.0), 0.5 * h * w))
        })
        .collect()
}

fn box_quadrature(lo: &[f64], hi: &[f64], panels: usize, f: &(dyn Fn(&[f64]) -> Result<f64> + Sync)) -> Result<f64> {
    let axes: Vec<Vec<(f64, f64)>> = lo.iter().zip(hi).map(|(a, b)| composite(*a, *b, panels)).collect();
    let volume: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
    let total = match axes.as_slice() {
        [ax] => ax.iter().map(|(x, w)| Ok(w * f(&[*x])?)).sum::<Result<f64>>()?,
        [ax, ay] => ax
            .iter()
            .map(|(x, wx)| ay.iter().map(|(y, wy)| Ok(wx * wy * f(&[*x, *y])?)).sum::<Result<f64>>())
            .sum::<Result<f64>>()?,
        _ => unreachable!("quadrature is used for dimension 1 and 2 only"),
    };
    Ok(total / volume)
}

/// `E f(X)` for `X` drawn from `law`.
pub fn expect_over(law: &CovariateLaw, f: &(dyn Fn(&[f64]) -> Result<f64> + Sync)) -> Result<RiskValue> {
    law.validate()?;
    match law {
        CovariateLaw::Discrete { points, probs } => {
            let value = points
                .iter()
                .zip(probs)
                .filter(|(_, p)| **p > 0.0)
                .map(|(x, p)| Ok(p * f(x)?))
                .sum::<Result<f64>>()?;
            Ok(RiskValue { value, error: 0.0, method: RiskMethod::Exact })
        }
        CovariateLaw::Uniform { lo, hi } if lo.len() <= 2 => {
            let fine = box_quadrature(lo, hi, QUAD_PANELS, f)?;
            let coarse = box_quadrature(lo, hi, QUAD_PANELS / 2, f)?;
            Ok(RiskValue { value: fine, error: (fine - coarse).abs(), method: RiskMethod::Quadrature })
        }
        CovariateLaw::Uniform { .. } => {
            let mut rng = substream(MC_SEED, 0);
            let (mut mean, mut m2) = (0.0, 0.0);
            for i in 0..MC_DRAWS {
                let v = f(&law.sample(&mut rng))?;
                let d = v - mean;
                mean += d / (i + 1) as f64;
                m2 += d * (v - mean);
            }
            let se = (m2 / (MC_DRAWS - 1) as f64 / MC_DRAWS as f64).sqrt();
            Ok(RiskValue { value: mean, error: se, method: RiskMethod::MonteCarlo })
        }
    }
}

/// `(1/n) sum_k E f_k(X_k)`, evaluated once when all indices share one law.
fn average_over_indices(
    model: &DataModel,
    n: usize,
    f: &(dyn Fn(&[f64], usize) -> Result<f64> + Sync),
) -> Result<RiskValue> {
    model.validate(n)?;
    let laws = model.marginals(n)?;
    let indices: Vec<usize> = if model.is_homogeneous() { vec![0] } else { (0..n).collect() };
    let parts = indices
        .par_iter()
        .map(|&k| expect_over(&laws[k], &|x: &[f64]| f(x, k)))
        .collect::<Result<Vec<_>>>()?;
    let count = parts.len() as f64;
    Ok(RiskValue {
        value: parts.iter().map(|p| p.value).sum::<f64>() / count,
        error: parts.iter().map(|p| p.error).sum::<f64>() / count,
        method: parts.iter().map(|p| p.method).max().unwrap_or(RiskMethod::Exact),
    })
}

fn check_pointwise(g: &Predictor) -> Result<()> {
    if g.is_pointwise() {
        Ok(())
    } else {
        Err(invalid("population risks need a function of the covariate only"))
    }
}

/// `(1/n) sum_k ||g - phi_{B,k}||_k^2`.
pub fn excess_risk_exact(g: &Predictor, model: &DataModel, n: usize) -> Result<RiskValue> {
    check_pointwise(g)?;
    average_over_indices(model, n, &|x, k| Ok((g.eval(x, k)? - phi_b(model, x, k)?).powi(2)))
}

/// `(1/n) sum_k ||g - Phi_k||_k^2` against the untruncated conditional mean.
pub fn excess_risk_unbounded(g: &Predictor, model: &DataModel, n: usize) -> Result<RiskValue> {
    check_pointwise(g)?;
    average_over_indices(model, n, &|x, k| Ok((g.eval(x, k)? - model.signal(x, k)?).powi(2)))
}

/// `(1/n) sum_k E (|Y_k| - B)^2 1{|Y_k| > B}`.
pub fn tail_term(model: &DataModel, n: usize) -> Result<RiskValue> {
    average_over_indices(model, n, &|x, k| Ok(truncation_tail(&model.noise, model.signal(x, k)?, model.bound)))
}

/// Per-index risks `E (g(X_k) - T_B Y_k)^2`, length `n`.
pub fn risk_profile(g: &Predictor, model: &DataModel, n: usize) -> Result<Vec<RiskValue>> {
    check_pointwise(g)?;
    model.validate(n)?;
    let laws = model.marginals(n)?;
    let b = model.bound;
    let one = |k: usize| {
        expect_over(&laws[k], &|x: &[f64]| {
            let gx = g.eval(x, k)?;
            let mu = model.signal(x, k)?;
            Ok(gx * gx - 2.0 * gx * truncated_mean(&model.noise, mu, b) + truncated_second_moment(&model.noise, mu, b))
        })
    };
    if model.is_homogeneous() {
        Ok(vec![one(0)?; n])
    } else {
        (0..n).into_par_iter().map(one).collect()
    }
}

/// The expected loss gap `(1/n) sum_k E[(g - T_B Y_k)^2 - (phi_{B,k} - T_B Y_k)^2]`
/// computed by summing over noise atoms; needs discrete noise.
pub fn loss_gap_direct(g: &Predictor, model: &DataModel, n: usize) -> Result<RiskValue> {
    check_pointwise(g)?;
    let atoms = model
        .noise
        .atoms()
        .ok_or_else(|| invalid("direct loss-gap evaluation needs a discrete noise law"))?;
    let b = model.bound;
    average_over_indices(model, n, &|x, k| {
        let gx = g.eval(x, k)?;
        let mu = model.signal(x, k)?;
        let phi = phi_b(model, x, k)?;
        Ok(atoms
            .iter()
            .map(|(a, p)| {
                let y = clip(mu + a, b);
                p * ((gx - y).powi(2) - (phi - y).powi(2))
            })
            .sum())
    })
}

/// Minimum excess risk over a finite list of candidates (lowest index on ties).
pub fn inf_risk(candidates: &[Predictor], model: &DataModel, n: usize) -> Result<(usize, RiskValue)> {
    if candidates.is_empty() {
        return Err(invalid("inf_risk needs at least one candidate"));
    }
    let risks = candidates
        .par_iter()
        .map(|g| excess_risk_exact(g, model, n))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (j, r) in risks.iter().enumerate() {
        if r.value < risks[best].value {
            best = j;
        }
    }
    Ok((best, risks[best]))
}
