//! Confidence-interval widths driven by Rademacher complexity.
//!
//! With `env = || |H(Z)|_{n,2} ||_inf` and unnormalized complexity `rad`:
//!
//! ```text
//! deviation tail     P(sup dev > eps) <= exp(-(eps / (sqrt2 env))^2)
//!                    nonnegative family: exp(-2 (eps / env)^2)
//! rademacher_ci      2 (env sqrt(2 log(2/delta)) + rad)
//! massart variant    2 (r + env (sqrt(2 log(2/delta)) + E sqrt(2 log N_1(H, Z, r/n))))
//! one-layer nets     B^2/sqrt(n) (1 + sqrt2 (8 sqrt(log(2/delta)) + sqrt((2d+6) log(24 e sqrt n))))
//! beta-mixing        2^{3/2} m (env_b sqrt(log(4 m / delta)) + rad_b),  m = ceil(log_r(2n/delta))
//! ```
//!
//! All widths are on the summed (not averaged) scale, matching the
//! unnormalized complexity.

use serde::{Deserialize, Serialize};

use crate::covering::EntropyEstimate;
use crate::error::{check_delta, check_nonnegative, check_positive, domain, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RademacherCIInputs {
    pub n: usize,
    pub envelope_l2_sup: f64,
    pub rad: f64,
    pub delta: f64,
    #[serde(default)]
    pub nonnegative_family: bool,
}

impl RademacherCIInputs {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(domain("n must be at least 1"));
        }
        check_nonnegative("envelope_l2_sup", self.envelope_l2_sup)?;
        check_nonnegative("rad", self.rad)?;
        check_delta(self.delta)
    }
}

fn gaussian_tail(eps: f64, scale: f64) -> Result<f64> {
    check_nonnegative("epsilon", eps)?;
    check_nonnegative("envelope", scale)?;
    if scale == 0.0 {
        return Ok(if eps > 0.0 { 0.0 } else { 1.0 });
    }
    Ok((-(eps / scale).powi(2)).exp())
}

/// Tail of the supremum deviation at level `eps`.
pub fn deviation_tail(eps: f64, envelope_l2_sup: f64, nonnegative: bool) -> Result<f64> {
    if nonnegative {
        gaussian_tail(eps, envelope_l2_sup / 2f64.sqrt())
    } else {
        gaussian_tail(eps, 2f64.sqrt() * envelope_l2_sup)
    }
}

/// Hoeffding tail for a single fixed sequential function.
pub fn single_hypothesis_tail(eta: f64, h_l2_sup: f64) -> Result<f64> {
    gaussian_tail(eta, 2f64.sqrt() * h_l2_sup)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalBound {
    pub threshold: f64,
    pub tail: f64,
}

/// Bound conditional on `k_h = k`: threshold `eps + eta + 2 rad k / n` with tail
/// `exp(-(eps n / (sqrt2 k env))^2) [k > 0] + single_tail`.
///
/// The formula is evaluated unconditionally, also for values of `k` that may
/// have probability zero.
pub fn conditional_k_bound(
    eps: f64,
    eta: f64,
    k: usize,
    n: usize,
    envelope_l2_sup: f64,
    rad: f64,
    single_tail: f64,
) -> Result<ConditionalBound> {
    if n == 0 || k > n {
        return Err(domain(format!("need 0 <= k <= n with n >= 1 (got k = {k}, n = {n})")));
    }
    check_nonnegative("eta", eta)?;
    check_nonnegative("rad", rad)?;
    if !(0.0..=1.0).contains(&single_tail) {
        return Err(domain(format!("single_tail = {single_tail} is not a probability")));
    }
    let first = if k == 0 {
        0.0
    } else {
        gaussian_tail(eps * n as f64 / k as f64, 2f64.sqrt() * envelope_l2_sup)?
    };
    Ok(ConditionalBound {
        threshold: eps + eta + 2.0 * rad * k as f64 / n as f64,
        tail: first + single_tail,
    })
}

pub fn rademacher_ci(inputs: &RademacherCIInputs) -> Result<f64> {
    inputs.validate()?;
    let log_term = (2.0 / inputs.delta).ln();
    let dev = if inputs.nonnegative_family {
        (log_term / 2.0).sqrt()
    } else {
        (2.0 * log_term).sqrt()
    };
    Ok(2.0 * (inputs.envelope_l2_sup * dev + inputs.rad))
}

/// CI with the complexity replaced by a covering-number bound at radius `r / n`.
/// `mean_sqrt_log_cover` is the caller's plug-in for `E sqrt(2 log N_1)`.
pub fn rademacher_ci_massart(n: usize, env: f64, delta: f64, r: f64, mean_sqrt_log_cover: f64) -> Result<f64> {
    if n == 0 {
        return Err(domain("n must be at least 1"));
    }
    check_nonnegative("envelope", env)?;
    check_nonnegative("r", r)?;
    check_nonnegative("mean_sqrt_log_cover", mean_sqrt_log_cover)?;
    check_delta(delta)?;
    Ok(2.0 * (r + env * ((2.0 * (2.0 / delta).ln()).sqrt() + mean_sqrt_log_cover)))
}

/// Upper plug-in for the cover term from an entropy estimate: `sqrt(2 L(r/n))`.
pub fn cover_term_from_entropy(entropy: &EntropyEstimate, r: f64, n: usize) -> Result<f64> {
    check_positive("r", r)?;
    if n == 0 {
        return Err(domain("n must be at least 1"));
    }
    Ok((2.0 * entropy.eval(r / n as f64)?).sqrt())
}

/// Generalization width for one-layer networks with power `B` on inputs of
/// dimension `d`. Independent of the number of units. `improved` swaps the
/// leading constant 8 for 4.
pub fn nn_generalization_ci(n: usize, d: usize, b: f64, delta: f64, improved: bool) -> Result<f64> {
    if n <= 4 {
        return Err(domain(format!("nn_generalization_ci requires n > 4 (got {n})")));
    }
    if d == 0 {
        return Err(domain("input dimension d must be at least 1"));
    }
    check_positive("B", b)?;
    check_delta(delta)?;
    let nf = n as f64;
    let lead = if improved { 4.0 } else { 8.0 };
    let complexity = ((2 * d + 6) as f64 * (24.0 * std::f64::consts::E * nf.sqrt()).ln()).sqrt();
    Ok(b * b / nf.sqrt() * (1.0 + 2f64.sqrt() * (lead * (2.0 / delta).ln().sqrt() + complexity)))
}

/// `ceil(log_r(2n/delta))`, after checking `r^{-n} <= delta/(2n) <= r^{-1}`.
pub fn mixing_block_count(n: usize, delta: f64, rate_r: f64) -> Result<usize> {
    if n == 0 {
        return Err(domain("n must be at least 1"));
    }
    check_delta(delta)?;
    if !(rate_r > 1.0 && rate_r.is_finite()) {
        return Err(domain(format!("mixing rate r = {rate_r} must exceed 1")));
    }
    let nf = n as f64;
    let ln_r = rate_r.ln();
    let target = delta / (2.0 * nf);
    // compare on the log scale: -n ln r <= ln(delta/2n) <= -ln r
    if !(-nf * ln_r <= target.ln() && target.ln() <= -ln_r) {
        return Err(domain(format!(
            "need r^-n <= delta/(2n) <= r^-1, i.e. delta in [{:.3e}, {:.3e}] for n = {n}, r = {rate_r}",
            2.0 * nf * (-nf * ln_r).exp(),
            2.0 * nf / rate_r
        )));
    }
    Ok(ceil_tol((2.0 * nf / delta).ln() / ln_r))
}

/// Ceiling that ignores floating-point noise just above an integer.
pub(crate) fn ceil_tol(x: f64) -> usize {
    let rounded = x.round();
    if (x - rounded).abs() <= 1e-9 * rounded.abs().max(1.0) {
        rounded as usize
    } else {
        x.ceil() as usize
    }
}

pub fn mixing_rademacher_ci(n: usize, delta: f64, rate_r: f64, max_block_env: f64, max_block_rad: f64) -> Result<f64> {
    check_nonnegative("max_block_env", max_block_env)?;
    check_nonnegative("max_block_rad", max_block_rad)?;
    let m = mixing_block_count(n, delta, rate_r)? as f64;
    Ok(2f64.powf(1.5) * m * (max_block_env * (4.0 * m / delta).ln().sqrt() + max_block_rad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{E, SQRT_2};

    fn ci(env: f64, rad: f64, delta: f64, nonneg: bool) -> f64 {
        rademacher_ci(&RademacherCIInputs { n: 10, envelope_l2_sup: env, rad, delta, nonnegative_family: nonneg })
            .unwrap()
    }

    #[test]
    fn tail_examples() {
        assert_eq!(deviation_tail(0.0, 1.0, false).unwrap(), 1.0);
        assert_relative_eq!(deviation_tail(SQRT_2, 1.0, false).unwrap(), (-1f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(deviation_tail(1.0, 1.0, true).unwrap(), (-2f64).exp(), max_relative = 1e-15);
        assert_eq!(deviation_tail(0.5, 0.0, false).unwrap(), 0.0);
        assert_eq!(deviation_tail(0.0, 0.0, true).unwrap(), 1.0);

        assert_eq!(single_hypothesis_tail(0.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(single_hypothesis_tail(SQRT_2, 1.0).unwrap(), (-1f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(single_hypothesis_tail(2.0 * SQRT_2, 2.0).unwrap(), (-1f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn conditional_examples() {
        let b = conditional_k_bound(0.3, 0.1, 0, 10, 1.0, 2.0, 0.25).unwrap();
        assert_eq!(b.tail, 0.25);
        assert_relative_eq!(b.threshold, 0.4);
        let full = conditional_k_bound(0.7, 0.0, 10, 10, 1.3, 0.0, 0.0).unwrap();
        assert_relative_eq!(full.tail, deviation_tail(0.7, 1.3, false).unwrap(), max_relative = 1e-15);
        let half = conditional_k_bound(SQRT_2, 0.0, 5, 10, 1.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(half.tail, (-4f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(half.threshold, SQRT_2 + 1.0);
        assert!(conditional_k_bound(1.0, 0.0, 11, 10, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn ci_examples() {
        assert_relative_eq!(ci(10.0, 5.0, 0.05, false), 64.32, epsilon = 1e-2);
        assert_eq!(ci(0.0, 0.0, 0.3, false), 0.0);
        assert_relative_eq!(ci(10.0, 5.0, 0.05, true), 37.16, epsilon = 1e-2);
        assert!(rademacher_ci(&RademacherCIInputs {
            n: 10,
            envelope_l2_sup: 1.0,
            rad: 0.0,
            delta: 1.0,
            nonnegative_family: false
        })
        .is_err());

        assert_relative_eq!(rademacher_ci_massart(100, 10.0, 0.05, 0.0, 0.0).unwrap(), ci(10.0, 0.0, 0.05, false));
        assert_relative_eq!(rademacher_ci_massart(100, 10.0, 0.05, 0.0, 0.0).unwrap(), 54.32, epsilon = 1e-2);
        let term = (2.0 * 40f64.ln()).sqrt();
        assert_relative_eq!(rademacher_ci_massart(100, 10.0, 0.05, 1.0, term).unwrap(), 110.65, epsilon = 1e-2);
        assert_eq!(rademacher_ci_massart(100, 0.0, 0.05, 1.5, 3.0).unwrap(), 3.0);
    }

    #[test]
    fn entropy_cover_term() {
        let e = EntropyEstimate::vc(2, 1.0).unwrap();
        let t = cover_term_from_entropy(&e, 1.0, 10).unwrap();
        assert_relative_eq!(t, (2.0 * crate::covering::vc_entropy(2, 1.0, 0.1).unwrap()).sqrt());
        assert!(cover_term_from_entropy(&e, 5.0, 10).is_err());
    }

    #[test]
    fn nn_examples() {
        let a = nn_generalization_ci(10_000, 2, 1.0, 0.05, false).unwrap();
        assert_relative_eq!(a, 0.3599, epsilon = 1e-4);
        let b = nn_generalization_ci(1_000_000, 2, 1.0, 0.05, false).unwrap();
        assert!((0.09..0.11).contains(&(b / a)), "ratio {}", b / a);
        assert_relative_eq!(nn_generalization_ci(10_000, 2, 3.0, 0.05, false).unwrap(), 9.0 * a, max_relative = 1e-14);
        assert!(nn_generalization_ci(10_000, 2, 1.0, 0.05, true).unwrap() < a);
        assert!(nn_generalization_ci(4, 2, 1.0, 0.05, false).is_err());
    }

    #[test]
    fn mixing_examples() {
        assert_eq!(mixing_block_count(1000, 0.05, E).unwrap(), 11);
        let v = mixing_rademacher_ci(1000, 0.05, E, 3.0, 1.0).unwrap();
        assert_relative_eq!(v, 274.2, epsilon = 0.1);
        let oracle = 2f64.powf(1.5) * 11.0 * (3.0 * (880f64).ln().sqrt() + 1.0);
        assert_relative_eq!(v, oracle, max_relative = 1e-14);
        assert_eq!(mixing_rademacher_ci(1000, 0.05, E, 0.0, 0.0).unwrap(), 0.0);
        assert!(
            mixing_rademacher_ci(1000, 0.01, E, 3.0, 1.0).unwrap() > mixing_rademacher_ci(1000, 0.1, E, 3.0, 1.0).unwrap()
        );
        // delta/(2n) above 1/r
        assert!(mixing_rademacher_ci(1, 0.9, 3.0, 1.0, 1.0).is_err());
        // r^{-n} above delta/(2n)
        let err = mixing_rademacher_ci(3, 0.01, 1.5, 1.0, 1.0).unwrap_err().to_string();
        assert!(err.contains("delta in"), "{err}");
    }

    #[test]
    fn two_term_tail_chain() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(1..50usize);
            let env = rng.random_range(0.1..5.0);
            let eps = rng.random_range(0.0..10.0);
            let h = env * rng.random::<f64>();
            let weights: Vec<f64> = (0..=n).map(|_| rng.random::<f64>()).collect();
            let total: f64 = weights.iter().sum();
            let single = single_hypothesis_tail(eps, h).unwrap();
            let mixed: f64 = (0..=n)
                .map(|k| {
                    let b = conditional_k_bound(eps, eps, k, n, env, 0.0, single).unwrap();
                    weights[k] / total * (b.tail - single)
                })
                .sum();
            let full = deviation_tail(eps, env, false).unwrap();
            assert!(mixed + single <= 2.0 * full + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn widths_monotone(
            env in 0.0f64..20.0, rad in 0.0f64..20.0, d1 in 0.001f64..0.99, dd in 0.001f64..0.5,
            de in 0.0f64..5.0, dr in 0.0f64..5.0, nonneg: bool,
        ) {
            let d2 = (d1 + dd).min(0.999);
            prop_assume!(d2 > d1);
            let base = ci(env, rad, d1, nonneg);
            if env > 0.0 {
                prop_assert!(ci(env, rad, d2, nonneg) < base);
            }
            prop_assert!(ci(env + de, rad, d1, nonneg) >= base);
            prop_assert!(ci(env, rad + dr, d1, nonneg) >= base);
            let m1 = rademacher_ci_massart(50, env, d1, 0.1, 0.5).unwrap();
            prop_assert!(rademacher_ci_massart(50, env + de, d1, 0.1, 0.5).unwrap() >= m1);
            if env > 0.0 {
                prop_assert!(rademacher_ci_massart(50, env, d2, 0.1, 0.5).unwrap() < m1);
            }
        }
    }
}
