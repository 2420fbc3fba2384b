//! Empirical L1 covering numbers and closed-form entropy estimates.
//!
//! ```text
//! |f - g|_{z,1} = (1/n) sum_k |f_k(z_k) - g_k(z_k)|
//! N_1(H, z, r)  = smallest number of centers with every member within r
//! ```
//!
//! Centers are restricted to the table's own rows, so the sizes reported here
//! upper-bound the covering number at the same radius.
//!
//! Entropy estimates bound `log N_1` uniformly in the sample:
//!
//! ```text
//! VC class (index V, bound B), 0 < r <= B/4:
//!   L(r) = log 3 + V (1 + log 2 + log(B/r) + log(1 + log 3 + log(B/r)))
//! one-layer net (input dim d, N units, power B), 0 < r < B/2:
//!   L(r) = ((2d + 5) N + 1) (1 + log 12 + log(B/r) + log(N + 1))
//! ```

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, domain, Error, Result};
use crate::hypothesis::FunctionTable;

/// Largest row count accepted by [`exact_cover_size`].
pub const EXACT_COVER_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverMethod {
    Greedy,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringResult {
    pub radius: f64,
    pub size: usize,
    pub method: CoverMethod,
    /// Row indices of the centers (for `Exact`, one minimal cover).
    pub indices: Vec<usize>,
}

pub fn empirical_l1_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(domain(format!(
            "rows must have equal nonzero length (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    Ok(l1(a, b))
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn check_radius(r: f64) -> Result<()> {
    if r >= 0.0 && !r.is_nan() {
        Ok(())
    } else {
        Err(domain(format!("radius r = {r} must be nonnegative")))
    }
}

/// Farthest-point greedy cover. The first center is row 0; each later center is
/// the row farthest from the current centers (lowest index on ties).
pub fn greedy_cover(table: &FunctionTable, r: f64) -> Result<CoveringResult> {
    check_radius(r)?;
    let mut centers = vec![0usize];
    let mut dist: Vec<f64> = (0..table.m())
        .into_par_iter()
        .map(|j| l1(table.row(j), table.row(0)))
        .collect();
    loop {
        let (far, d) = dist
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (j, &d)| if d > best.1 { (j, d) } else { best });
        if d <= r {
            break;
        }
        centers.push(far);
        let center = table.row(far);
        dist.par_iter_mut().enumerate().for_each(|(j, dj)| {
            *dj = dj.min(l1(table.row(j), center));
        });
    }
    Ok(CoveringResult { radius: r, size: centers.len(), method: CoverMethod::Greedy, indices: centers })
}

/// Minimal cover size over subsets of rows, by exhaustive enumeration.
pub fn exact_cover_size(table: &FunctionTable, r: f64) -> Result<CoveringResult> {
    check_radius(r)?;
    let m = table.m();
    if m > EXACT_COVER_LIMIT {
        return Err(Error::TooLarge {
            what: "row count m",
            size: m,
            limit: EXACT_COVER_LIMIT,
            hint: "use greedy_cover for an upper bound",
        });
    }
    let reach: Vec<u32> = (0..m)
        .map(|i| {
            (0..m)
                .filter(|&j| l1(table.row(i), table.row(j)) <= r)
                .fold(0u32, |acc, j| acc | 1 << j)
        })
        .collect();
    let full = if m == 32 { u32::MAX } else { (1u32 << m) - 1 };
    let mut covered = vec![0u32; 1 << m];
    let mut best: Option<u32> = None;
    for mask in 1u32..1 << m {
        let low = mask.trailing_zeros() as usize;
        covered[mask as usize] = covered[(mask & (mask - 1)) as usize] | reach[low];
        if covered[mask as usize] == full
            && best.is_none_or(|b| mask.count_ones() < b.count_ones())
        {
            best = Some(mask);
        }
    }
    let best = best.expect("the full row set always covers");
    let indices: Vec<usize> = (0..m).filter(|&j| best >> j & 1 == 1).collect();
    Ok(CoveringResult { radius: r, size: indices.len(), method: CoverMethod::Exact, indices })
}

pub fn vc_entropy(v: usize, b: f64, r: f64) -> Result<f64> {
    check_positive("B", b)?;
    if !(r > 0.0 && r <= b / 4.0) {
        return Err(domain(format!("vc_entropy is valid for 0 < r <= B/4 = {}; got r = {r}", b / 4.0)));
    }
    let lr = (b / r).ln();
    Ok(3f64.ln() + v as f64 * (1.0 + 2f64.ln() + lr + (1.0 + 3f64.ln() + lr).ln()))
}

pub fn nn_entropy(d: usize, units: usize, b: f64, r: f64) -> Result<f64> {
    check_positive("B", b)?;
    if !(r > 0.0 && r < b / 2.0) {
        return Err(domain(format!("nn_entropy is valid for 0 < r < B/2 = {}; got r = {r}", b / 2.0)));
    }
    let params = ((2 * d + 5) * units + 1) as f64;
    Ok(params * (1.0 + 12f64.ln() + (b / r).ln() + ((units + 1) as f64).ln()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntropyKind {
    Vc { v: usize, b: f64 },
    NeuralNet { d: usize, units: usize, b: f64 },
    Custom { label: String },
}

/// Growth class of an entropy estimate as `r -> 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum EntropyTag {
    /// `O(log(1/r))`.
    Subeuclidean,
    /// `O(r^{-alpha})`.
    Euclidean { alpha: f64 },
    Untagged,
}

type Evaluator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A nonincreasing bound `r -> L(r)` on log covering numbers, valid on
/// `(lower, upper]` (or `(lower, upper)` when `upper_open`).
#[derive(Clone)]
pub struct EntropyEstimate {
    pub kind: EntropyKind,
    pub lower: f64,
    pub upper: f64,
    pub upper_open: bool,
    eval: Evaluator,
}

impl fmt::Debug for EntropyEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EntropyEstimate")
            .field("kind", &self.kind)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("upper_open", &self.upper_open)
            .finish()
    }
}

impl EntropyEstimate {
    pub fn vc(v: usize, b: f64) -> Result<Self> {
        check_positive("B", b)?;
        Ok(Self {
            kind: EntropyKind::Vc { v, b },
            lower: 0.0,
            upper: b / 4.0,
            upper_open: false,
            eval: Arc::new(move |r| vc_entropy(v, b, r).unwrap_or(f64::NAN)),
        })
    }

    pub fn neural_net(d: usize, units: usize, b: f64) -> Result<Self> {
        check_positive("B", b)?;
        Ok(Self {
            kind: EntropyKind::NeuralNet { d, units, b },
            lower: 0.0,
            upper: b / 2.0,
            upper_open: true,
            eval: Arc::new(move |r| nn_entropy(d, units, b, r).unwrap_or(f64::NAN)),
        })
    }

    pub fn custom(
        label: impl Into<String>,
        lower: f64,
        upper: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(lower >= 0.0 && upper > lower) {
            return Err(domain(format!("invalid validity range ({lower}, {upper}]")));
        }
        Ok(Self { kind: EntropyKind::Custom { label: label.into() }, lower, upper, upper_open: false, eval: Arc::new(f) })
    }

    pub fn contains(&self, r: f64) -> bool {
        r > self.lower && if self.upper_open { r < self.upper } else { r <= self.upper }
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if !self.contains(r) {
            let close = if self.upper_open { ")" } else { "]" };
            return Err(domain(format!(
                "radius {r} lies outside the entropy estimate's validity range ({}, {}{close}",
                self.lower, self.upper
            )));
        }
        let v = (self.eval)(r);
        if v.is_finite() {
            Ok(v.max(0.0))
        } else {
            Err(domain(format!("entropy estimate is not finite at r = {r}")))
        }
    }

    pub fn tag(&self) -> EntropyTag {
        classify_entropy(self)
    }
}

/// Least-squares fit of `y = a + b x`; returns the root-mean-square residual.
fn linear_rmse(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) || !sxx.is_finite() {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    Some((sse / n).sqrt())
}

/// Tags an estimate by comparing fits of `L(2^-j)`, `j = 4..20`, against `j`
/// (logarithmic growth) and against `2^(alpha j)` for `alpha` in `[0.05, 4]`.
/// The power law wins only when its residual is under half the linear one.
pub fn classify_entropy(estimate: &EntropyEstimate) -> EntropyTag {
    let (js, ls): (Vec<f64>, Vec<f64>) = (4..=20)
        .filter_map(|j| {
            let r = 0.5f64.powi(j);
            estimate.eval(r).ok().map(|l| (j as f64, l))
        })
        .unzip();
    if js.len() < 6 {
        return EntropyTag::Untagged;
    }
    let Some(lin) = linear_rmse(&js, &ls) else {
        return EntropyTag::Untagged;
    };
    let mut best: Option<(f64, f64)> = None;
    for step in 1..=80 {
        let alpha = 0.05 * step as f64;
        let feature: Vec<f64> = js.iter().map(|j| (alpha * j * std::f64::consts::LN_2).exp()).collect();
        if let Some(rmse) = linear_rmse(&feature, &ls) {
            if best.is_none_or(|(_, b)| rmse < b) {
                best = Some((alpha, rmse));
            }
        }
    }
    match best {
        Some((alpha, rmse)) if rmse < 0.5 * lin => EntropyTag::Euclidean { alpha },
        _ => EntropyTag::Subeuclidean,
    }
}
