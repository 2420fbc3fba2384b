//! Least-squares excess-risk bounds for truncated classes.
//!
//! For `c > 1`, `lambda > 1` and truncation level `B`:
//!
//! ```text
//! eps_n(c, l)  = 8 B^2 ( -(l - 1) + sqrt((l - 1)^2 + c (c + 1) l^2 / n) )
//! b(c, l)      = (1 - 1/c)^3 (1 - 1/l) / (32 B^2 ((1/3)(1 - 1/c)(1 - 1/l) + 2l - 1)^2)
//! A(x, c, l, e) = 2 (c + 1)(2c + 3) N_1(T_B G, x, (1/32)(1/B)(1/(l(c - 1) + 1))(1 - 1/c) e)
//! a(c, l, e)   = E A(X, c, l, e)
//!
//! second term  = n eps_n  v  (1/b)(log a(c, l, eps_n) + log(1/delta))
//! ```
//!
//! With `p = c/(c-1)`:
//!
//! ```text
//! q0 = l^2 / (8 (l - 1))      q1 = (1 - 1/l) / 9
//! q2 = (2/3)(2l - 1)          q3 = (2l - 1)^2 l / (l - 1)
//! 1/b = 32 B^2 (q1 p + q2 p^2 + q3 p^3)
//! V(c, l) = 32 max( q0 c (c + 1), (q1 p + q2 p^2 + q3 p^3) log(2 (c + 1)(2c + 3)) )
//! ```
//!
//! `V` has a local minimum near `c = 11.46`, `l = 1.29` where it is just above
//! 3291, which yields the `3292 (B^2/n)(1 + log(1/delta) + log E N_1)` form.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds_rademacher::ceil_tol;
use crate::covering::EntropyEstimate;
use crate::error::{check_delta, check_nonnegative, check_positive, domain, Result};

/// Rounded-up value of `V` at its local minimum, used by [`optimized_bound`].
pub const OPTIMIZED_V: f64 = 3292.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub n: usize,
    #[serde(rename = "B")]
    pub b: f64,
    pub delta: f64,
    pub c: f64,
    pub lambda: f64,
}

impl BoundParams {
    pub fn new(n: usize, b: f64, delta: f64, c: f64, lambda: f64) -> Result<Self> {
        let p = Self { n, b, delta, c, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(domain("n must be at least 1"));
        }
        check_positive("B", self.b)?;
        check_delta(self.delta)?;
        check_c_lambda(self.c, self.lambda)
    }

    fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }
}

fn check_c_lambda(c: f64, lambda: f64) -> Result<()> {
    if !(c > 1.0 && c.is_finite()) {
        return Err(domain(format!("c = {c} must exceed 1")));
    }
    if !(lambda > 1.0 && lambda.is_finite()) {
        return Err(domain(format!("lambda = {lambda} must exceed 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantProfile {
    pub p: f64,
    pub q0: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    #[serde(rename = "V")]
    pub v: f64,
    /// True when the `q0 c (c+1)` branch attains the maximum in `V`.
    pub first_branch: bool,
}

impl ConstantProfile {
    pub fn new(c: f64, lambda: f64) -> Result<Self> {
        check_c_lambda(c, lambda)?;
        Ok(Self::raw(c, lambda))
    }

    fn raw(c: f64, l: f64) -> Self {
        let p = c / (c - 1.0);
        let q0 = l * l / (8.0 * (l - 1.0));
        let q1 = (1.0 - 1.0 / l) / 9.0;
        let q2 = 2.0 / 3.0 * (2.0 * l - 1.0);
        let q3 = (2.0 * l - 1.0).powi(2) * l / (l - 1.0);
        let first = q0 * c * (c + 1.0);
        let second = (q1 * p + q2 * p * p + q3 * p.powi(3)) * (2.0 * (c + 1.0) * (2.0 * c + 3.0)).ln();
        Self { p, q0, q1, q2, q3, v: 32.0 * first.max(second), first_branch: first >= second }
    }

    /// `q1 p + q2 p^2 + q3 p^3`.
    pub fn q_poly(&self) -> f64 {
        self.q1 * self.p + self.q2 * self.p.powi(2) + self.q3 * self.p.powi(3)
    }
}

pub fn epsilon_n(params: &BoundParams) -> Result<f64> {
    params.validate()?;
    Ok(eps_raw(params))
}

fn eps_raw(p: &BoundParams) -> f64 {
    let lm1 = p.lambda - 1.0;
    let inner = lm1 * lm1 + p.c * (p.c + 1.0) * p.lambda * p.lambda / p.n as f64;
    // conjugate form avoids cancellation for large n
    8.0 * p.b * p.b * (inner - lm1 * lm1) / (inner.sqrt() + lm1)
}

pub fn epsilon_n_upper(params: &BoundParams) -> Result<f64> {
    params.validate()?;
    let (c, l, n) = (params.c, params.lambda, params.n as f64);
    let cc = c * (c + 1.0);
    Ok(8.0 * params.b * params.b * l * (cc / (2.0 * n) * l / (l - 1.0)).min((cc / n).sqrt()))
}

pub fn b_coeff(params: &BoundParams) -> Result<f64> {
    params.validate()?;
    Ok(b_raw(params.c, params.lambda, params.b))
}

fn b_raw(c: f64, l: f64, b: f64) -> f64 {
    let ic = 1.0 - 1.0 / c;
    let il = 1.0 - 1.0 / l;
    let denom = ic * il / 3.0 + 2.0 * l - 1.0;
    ic.powi(3) * il / (32.0 * b * b * denom * denom)
}

/// `2 (c + 1)(2c + 3)`, the value of `A` for a single-element cover.
pub fn a_factor(c: f64) -> f64 {
    2.0 * (c + 1.0) * (2.0 * c + 3.0)
}

pub fn a_of_sample(cover_size: usize, c: f64) -> Result<f64> {
    if cover_size == 0 {
        return Err(domain("cover size must be at least 1"));
    }
    if !(c > 1.0) {
        return Err(domain(format!("c = {c} must exceed 1")));
    }
    Ok(a_factor(c) * cover_size as f64)
}

/// Covering radius inside `A`: `(1/32)(1/B)(1/(l(c-1)+1))(1-1/c) eps`.
pub fn radius_a(params: &BoundParams, eps: f64) -> Result<f64> {
    params.validate()?;
    check_nonnegative("epsilon", eps)?;
    let (c, l) = (params.c, params.lambda);
    Ok(eps * (1.0 - 1.0 / c) / (32.0 * params.b * (l * (c - 1.0) + 1.0)))
}

/// `log a(c, l, eps)` with the expected cover replaced by `exp(L(radius_A))`.
pub fn log_a_from_entropy(params: &BoundParams, eps: f64, entropy: &EntropyEstimate) -> Result<f64> {
    let r = radius_a(params, eps)?;
    Ok(a_factor(params.c).ln() + entropy.eval(r)?)
}

pub fn vc_second_term(params: &BoundParams, log_a: f64) -> Result<f64> {
    params.validate()?;
    let n = params.n as f64;
    let b = b_raw(params.c, params.lambda, params.b);
    Ok((n * eps_raw(params)).max((log_a + (1.0 / params.delta).ln()) / b))
}

pub fn v_function(c: f64, lambda: f64) -> Result<f64> {
    Ok(ConstantProfile::new(c, lambda)?.v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizedConstants {
    pub c0: f64,
    pub lambda0: f64,
    #[serde(rename = "V0")]
    pub v0: f64,
    /// `(1 - 1/c0) / (4 (sqrt2 + 1))`, the covering radius in units of `B/n`.
    pub radius_coeff: f64,
}

/// Row-major argmin over a grid, lowest index on ties.
fn grid_argmin(cs: &[f64], ls: &[f64]) -> (f64, f64, f64) {
    let best = cs
        .par_iter()
        .enumerate()
        .map(|(i, &c)| {
            ls.iter()
                .enumerate()
                .map(|(j, &l)| (ConstantProfile::raw(c, l).v, i, j))
                .fold((f64::INFINITY, usize::MAX, usize::MAX), |a, b| if b.0 < a.0 { b } else { a })
        })
        .reduce(
            || (f64::INFINITY, usize::MAX, usize::MAX),
            |a, b| if b.0 < a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) { b } else { a },
        );
    (cs[best.1], ls[best.2], best.0)
}

fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step).round() as usize;
    (0..=count).map(|i| lo + step * i as f64).collect()
}

/// Coarse grid search of `V` on `c in [1.5, 50]`, `l in [1.05, 3]` (step 0.005),
/// followed by a step-1e-4 grid on a +-0.01 window around the coarse minimizer.
pub fn optimize_v() -> OptimizedConstants {
    let (c, l, _) = grid_argmin(&axis(1.5, 50.0, 0.005), &axis(1.05, 3.0, 0.005));
    let (c0, lambda0, v0) = grid_argmin(&axis(c - 0.01, c + 0.01, 1e-4), &axis(l - 0.01, l + 0.01, 1e-4));
    OptimizedConstants { c0, lambda0, v0, radius_coeff: (1.0 - 1.0 / c0) / (4.0 * (2f64.sqrt() + 1.0)) }
}

/// `3292 (B^2/n)(1 + log(1/delta) + log_cover)`, with `log_cover` the log
/// expected cover at radius [`optimized_radius`].
pub fn optimized_bound(n: usize, b: f64, delta: f64, log_cover: f64) -> Result<f64> {
    check_common(n, b, delta, log_cover)?;
    Ok(OPTIMIZED_V * b * b / n as f64 * (1.0 + (1.0 / delta).ln() + log_cover))
}

/// Radius `~0.094 B/n` at which the cover in [`optimized_bound`] is taken.
pub fn optimized_radius(constants: &OptimizedConstants, n: usize, b: f64) -> f64 {
    constants.radius_coeff * b / n as f64
}

fn check_common(n: usize, b: f64, delta: f64, log_cover: f64) -> Result<()> {
    if n == 0 {
        return Err(domain("n must be at least 1"));
    }
    check_positive("B", b)?;
    check_delta(delta)?;
    check_nonnegative("log_cover", log_cover)
}

/// Bound for `1 < l <= 13/12` at `c = 2`:
/// `64/(l-1) (B^2/n)(log 42 + log(1/delta) + log_cover)`, cover at radius `B/(24n)`.
pub fn small_lambda_bound(n: usize, b: f64, delta: f64, lambda: f64, log_cover: f64) -> Result<f64> {
    check_common(n, b, delta, log_cover)?;
    if !(lambda > 1.0 && lambda <= 13.0 / 12.0) {
        return Err(domain(format!("small_lambda_bound requires 1 < lambda <= 13/12 (got {lambda})")));
    }
    Ok(64.0 / (lambda - 1.0) * b * b / n as f64 * (42f64.ln() + (1.0 / delta).ln() + log_cover))
}

/// `C(l) = (l - 1)(q1 + q2 + q3)`; tends to 1 as `l -> 1`.
pub fn c_of_lambda(lambda: f64) -> Result<f64> {
    let prof = ConstantProfile::new(2.0, lambda)?;
    Ok((lambda - 1.0) * (prof.q1 + prof.q2 + prof.q3))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedBound {
    pub value: f64,
    pub radius: f64,
    pub entropy: f64,
    /// `1 + B^2 / sqrt(n)`.
    pub lambda_n: f64,
    /// `C(lambda_n)`; the bound takes its limit value 1.
    pub c_lambda_n: f64,
    /// Set when `C(lambda_n)` exceeds 1 by more than 5%, i.e. the limit
    /// constant is a poor stand-in at this `n`.
    pub small_n_warning: bool,
}

/// `n^{-1/2} (4 c (c+1) + 32 p^3 (log(2(c+1)(2c+3)/delta) + F(radius)))` with
/// `radius = (1/(4 B_n))(1 - 1/c) n^{-1/2}`.
pub fn refined_bound(n: usize, b_n: f64, delta: f64, c_n: f64, entropy: &EntropyEstimate) -> Result<RefinedBound> {
    if n == 0 {
        return Err(domain("n must be at least 1"));
    }
    if !(b_n >= 1.0 && b_n.is_finite()) {
        return Err(domain(format!("B_n = {b_n} must be at least 1")));
    }
    check_delta(delta)?;
    if !(c_n > 1.0 && c_n.is_finite()) {
        return Err(domain(format!("c_n = {c_n} must exceed 1")));
    }
    let root = (n as f64).sqrt();
    let radius = (1.0 - 1.0 / c_n) / (4.0 * b_n * root);
    let f = entropy.eval(radius)?;
    let p = c_n / (c_n - 1.0);
    let value = (4.0 * c_n * (c_n + 1.0) + 32.0 * p.powi(3) * ((a_factor(c_n) / delta).ln() + f)) / root;
    let lambda_n = 1.0 + b_n * b_n / root;
    let c_lambda_n = c_of_lambda(lambda_n)?;
    Ok(RefinedBound { value, radius, entropy: f, lambda_n, c_lambda_n, small_n_warning: c_lambda_n > 1.05 })
}

/// `6 (eps_n v (log_a + log(2/delta)) / (n b))`, the part of
/// [`bounded_class_ci`] that does not involve the approximation error.
pub fn bounded_class_remainder(params: &BoundParams, log_a: f64) -> Result<f64> {
    params.validate()?;
    let b = b_raw(params.c, params.lambda, params.b);
    let dev = (log_a + (2.0 / params.delta).ln()) / (params.n as f64 * b);
    Ok(6.0 * eps_raw(params).max(dev))
}

/// `(6 l - 5) inf_risk + 6 (eps_n v (log_a + log(2/delta)) / (n b))`, on the
/// averaged scale `(1/n) sum ||g - phi_k||_k^2`.
pub fn bounded_class_ci(params: &BoundParams, inf_risk: f64, log_a: f64) -> Result<f64> {
    check_nonnegative("inf_risk", inf_risk)?;
    Ok((6.0 * params.lambda - 5.0) * inf_risk + bounded_class_remainder(params, log_a)?)
}

/// Lift of [`bounded_class_ci`] to untruncated responses:
///
/// ```text
/// (1+e)((1+e')(6l-5) inf + rem) + ((1 + 1/e) + (1+e)(1 + 1/e')(6l-5)) tail
/// ```
///
/// `remainder` is [`bounded_class_remainder`]; `lambda >= 1` is accepted so
/// the `l -> 1` limit can be evaluated directly.
pub fn unbounded_response_ci(
    eta: f64,
    eta_prime: f64,
    lambda: f64,
    inf_risk_phi: f64,
    tail_term: f64,
    remainder: f64,
) -> Result<f64> {
    check_positive("eta", eta)?;
    check_positive("eta_prime", eta_prime)?;
    if !(lambda >= 1.0 && lambda.is_finite()) {
        return Err(domain(format!("lambda = {lambda} must be at least 1")));
    }
    check_nonnegative("inf_risk_phi", inf_risk_phi)?;
    check_nonnegative("tail_term", tail_term)?;
    check_nonnegative("remainder", remainder)?;
    let k = 6.0 * lambda - 5.0;
    Ok((1.0 + eta) * ((1.0 + eta_prime) * k * inf_risk_phi + remainder)
        + ((1.0 + 1.0 / eta) + (1.0 + eta) * (1.0 + 1.0 / eta_prime) * k) * tail_term)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingSecondTerm {
    pub value: f64,
    /// Block count `m = ceil(log_r(2n/delta))`.
    pub m: usize,
    /// Block sample size `floor(n/m)`; the remainder is dropped.
    pub n_m: usize,
}

/// Second term for exponentially beta-mixing data:
/// `n_m m eps_{n_m} v (1/b)(log m + log_a_star + log(2/delta))`.
pub fn vc_mixing_second_term(params: &BoundParams, rate_r: f64, log_a_star: f64) -> Result<MixingSecondTerm> {
    params.validate()?;
    if !(rate_r > 1.0 && rate_r.is_finite()) {
        return Err(domain(format!("mixing rate r = {rate_r} must exceed 1")));
    }
    let n = params.n;
    let m = ceil_tol((2.0 * n as f64 / params.delta).ln() / rate_r.ln()).max(1);
    if m >= n && n > 1 {
        return Err(domain(format!("block count m = {m} is not below n = {n}; too few blocks")));
    }
    let n_m = n / m;
    let block = params.with_n(n_m);
    let b = b_raw(params.c, params.lambda, params.b);
    let first = (n_m * m) as f64 * eps_raw(&block);
    let second = ((m as f64).ln() + log_a_star + (2.0 / params.delta).ln()) / b;
    Ok(MixingSecondTerm { value: first.max(second), m, n_m })
}
