//! Beta-mixing coefficients for finite-state processes and the blocking device.
//!
//! ```text
//! J_{m,k} = { k + l m : l integer } ∩ {1, ..., n},   k = 0..m-1
//! beta(A1, A2) = (1/2) sum_{i,j} | P(A1_i ∩ A2_j) - P(A1_i) P(A2_j) |     (finite partitions)
//! P(max_k dev_k > t) <= sum_k P(dev on J_{m,k} > t) + n beta(m)
//! m = ceil(log_r(n / delta))  gives  r^{-m} <= delta / n
//! ```
//!
//! For a stationary Markov chain the conditional law of `X_k` given the whole
//! past up to `k - m` depends only on `X_{k-m}`, so the lag-`m` pair
//! coefficient computed here equals the coefficient of `m`-dependence.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bounds_rademacher::ceil_tol;
use crate::error::{check_delta, check_nonnegative, domain, Result};

const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingPlan {
    pub n: usize,
    pub m: usize,
    /// 1-based index sets `J_{m,k}`, `k = 0..m-1`.
    pub blocks: Vec<Vec<usize>>,
    pub beta_m: f64,
    pub rate_r: Option<f64>,
    /// Remainder indices dropped so every block has `floor(n/m)` points.
    pub strict: bool,
}

impl MixingPlan {
    pub fn new(n: usize, m: usize, beta_m: f64, rate_r: Option<f64>, strict: bool) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta_m) {
            return Err(domain(format!("beta_m = {beta_m} must lie in [0, 1]")));
        }
        let blocks = if strict { block_indices_strict(n, m)? } else { block_indices(n, m)? };
        Ok(Self { n, m, blocks, beta_m, rate_r, strict })
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }
}

pub fn block_indices(n: usize, m: usize) -> Result<Vec<Vec<usize>>> {
    if m == 0 || m > n {
        return Err(domain(format!("block parameter m = {m} must satisfy 1 <= m <= n = {n}")));
    }
    Ok((0..m)
        .map(|k| {
            let first = if k == 0 { m } else { k };
            (first..=n).step_by(m).collect()
        })
        .collect())
}

/// Like [`block_indices`] but on `{1, ..., m floor(n/m)}`, so all blocks have
/// equal size.
pub fn block_indices_strict(n: usize, m: usize) -> Result<Vec<Vec<usize>>> {
    if m == 0 || m > n {
        return Err(domain(format!("block parameter m = {m} must satisfy 1 <= m <= n = {n}")));
    }
    block_indices(m * (n / m), m)
}

fn check_joint(joint: &[Vec<f64>]) -> Result<()> {
    let cols = joint.first().map_or(0, Vec::len);
    if joint.is_empty() || cols == 0 || joint.iter().any(|r| r.len() != cols) {
        return Err(domain("joint table must be a nonempty rectangular matrix"));
    }
    if joint.iter().flatten().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(domain("joint table entries must be nonnegative and finite"));
    }
    let total: f64 = joint.iter().flatten().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(domain(format!("joint table sums to {total}, not 1")));
    }
    Ok(())
}

/// `(1/2) sum |p_ij - p_i. p_.j|` for a joint probability table.
pub fn beta_exact_discrete(joint: &[Vec<f64>]) -> Result<f64> {
    check_joint(joint)?;
    let rows: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..joint[0].len()).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let total: f64 = joint
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, p)| (i, j, p)))
        .map(|(i, j, p)| (p - rows[i] * cols[j]).abs())
        .sum();
    Ok((0.5 * total).min(1.0))
}

pub(crate) fn check_stochastic(p: &[Vec<f64>]) -> Result<()> {
    let s = p.len();
    if s == 0 || p.iter().any(|r| r.len() != s) {
        return Err(domain("transition matrix must be square and nonempty"));
    }
    for (i, row) in p.iter().enumerate() {
        if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(domain(format!("transition row {i} has a negative or non-finite entry")));
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(domain(format!("transition row {i} sums to {total}, not 1")));
        }
    }
    Ok(())
}

fn to_matrix(p: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(p.len(), p.len(), |i, j| p[i][j])
}

/// Solves `pi P = pi`, `sum pi = 1` (unique for irreducible chains).
pub fn stationary_distribution(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_stochastic(p)?;
    let s = p.len();
    let mut a = to_matrix(p).transpose() - DMatrix::identity(s, s);
    for j in 0..s {
        a[(s - 1, j)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::zeros(s);
    rhs[s - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| domain("stationary distribution is not unique (chain is reducible)"))?;
    if pi.iter().any(|&v| v < -PROB_TOL) {
        return Err(domain("stationary solve produced negative mass; chain is not irreducible"));
    }
    Ok(pi.iter().map(|v| v.max(0.0)).collect())
}

/// `beta(sigma(X_0), sigma(X_m))` for a chain started from `pi`.
pub fn markov_beta_of_lag(p: &[Vec<f64>], pi: &[f64], m: usize) -> Result<f64> {
    check_stochastic(p)?;
    if pi.len() != p.len() {
        return Err(domain("stationary distribution length differs from the state count"));
    }
    let pm = to_matrix(p).pow(m as u32);
    let joint: Vec<Vec<f64>> = (0..p.len()).map(|i| (0..p.len()).map(|j| pi[i] * pm[(i, j)]).collect()).collect();
    beta_exact_discrete(&joint)
}

/// Transition matrix of the two-state chain that stays put with probability `stay`.
pub fn two_state_symmetric(stay: f64) -> Result<Vec<Vec<f64>>> {
    if !(0.0..=1.0).contains(&stay) {
        return Err(domain(format!("stay probability {stay} must lie in [0, 1]")));
    }
    Ok(vec![vec![stay, 1.0 - stay], vec![1.0 - stay, stay]])
}

/// `m = ceil(log(n/delta) / log r)`, valid for `n r^{-n} < delta < 1`.
pub fn choose_block_size(n: usize, delta: f64, rate_r: f64) -> Result<usize> {
    if n == 0 {
        return Err(domain("n must be at least 1"));
    }
    check_delta(delta)?;
    if !(rate_r > 1.0 && rate_r.is_finite()) {
        return Err(domain(format!("mixing rate r = {rate_r} must exceed 1")));
    }
    let nf = n as f64;
    // delta > n r^{-n}  <=>  log delta > log n - n log r
    if !(delta.ln() > nf.ln() - nf * rate_r.ln()) {
        return Err(domain(format!(
            "need n r^-n < delta < 1; here n r^-n = {:.3e}",
            (nf.ln() - nf * rate_r.ln()).exp()
        )));
    }
    Ok(ceil_tol((nf / delta).ln() / rate_r.ln()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockedBound {
    pub raw: f64,
    /// `raw` clipped to `[0, 1]`.
    pub probability: f64,
}

/// `sum_k tail(t, |J_{m,k}|) + n beta_m`.
pub fn blocked_deviation_bound(
    per_block_tail: impl Fn(f64, usize) -> f64,
    t: f64,
    n: usize,
    m: usize,
    beta_m: f64,
) -> Result<BlockedBound> {
    check_nonnegative("beta_m", beta_m)?;
    let raw = block_indices(n, m)?.iter().map(|b| per_block_tail(t, b.len())).sum::<f64>() + n as f64 * beta_m;
    Ok(BlockedBound { raw, probability: raw.clamp(0.0, 1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn block_examples() {
        assert_eq!(block_indices(7, 3).unwrap(), vec![vec![3, 6], vec![1, 4, 7], vec![2, 5]]);
        assert_eq!(block_indices(5, 1).unwrap(), vec![vec![1, 2, 3, 4, 5]]);
        assert_eq!(block_indices(4, 4).unwrap(), vec![vec![4], vec![1], vec![2], vec![3]]);
        assert!(block_indices(3, 4).is_err());
        assert_eq!(block_indices_strict(7, 3).unwrap(), vec![vec![3, 6], vec![1, 4], vec![2, 5]]);
        let plan = MixingPlan::new(10, 3, 0.1, Some(2.0), false).unwrap();
        assert_eq!(plan.block_sizes(), vec![3, 4, 3]);
        assert!(MixingPlan::new(10, 3, 1.5, None, false).is_err());
    }

    #[test]
    fn beta_examples() {
        let indep = vec![vec![0.06, 0.14], vec![0.24, 0.56]];
        assert!(beta_exact_discrete(&indep).unwrap() < 1e-12);
        assert_relative_eq!(beta_exact_discrete(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap(), 0.5);
        let p = two_state_symmetric(0.9).unwrap();
        let joint: Vec<Vec<f64>> = p.iter().map(|r| r.iter().map(|v| 0.5 * v).collect()).collect();
        assert_relative_eq!(beta_exact_discrete(&joint).unwrap(), 0.4, max_relative = 1e-12);
        assert!(beta_exact_discrete(&[vec![0.5, 0.6]]).is_err());
        assert!(beta_exact_discrete(&[vec![-0.1, 1.1]]).is_err());
    }

    #[test]
    fn markov_examples() {
        let p = two_state_symmetric(0.9).unwrap();
        let pi = stationary_distribution(&p).unwrap();
        assert_relative_eq!(pi[0], 0.5, max_relative = 1e-12);
        assert_relative_eq!(markov_beta_of_lag(&p, &pi, 1).unwrap(), 0.4, max_relative = 1e-12);
        assert_relative_eq!(markov_beta_of_lag(&p, &pi, 2).unwrap(), 0.32, max_relative = 1e-12);
        let iid = two_state_symmetric(0.5).unwrap();
        for m in 1..6 {
            assert!(markov_beta_of_lag(&iid, &[0.5, 0.5], m).unwrap() < 1e-15);
        }
        assert!(markov_beta_of_lag(&[vec![0.5, 0.6], vec![0.5, 0.5]], &[0.5, 0.5], 1).is_err());

        // log-linear fit of beta(m) recovers the rate 1/|2a - 1|
        let betas: Vec<f64> = (1..=10).map(|m| markov_beta_of_lag(&p, &pi, m).unwrap()).collect();
        assert!(betas.windows(2).all(|w| w[1] <= w[0]));
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        let ys: Vec<f64> = betas.iter().map(|b| b.ln()).collect();
        let mx = xs.iter().sum::<f64>() / 10.0;
        let my = ys.iter().sum::<f64>() / 10.0;
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert_relative_eq!(slope, 0.8f64.ln(), max_relative = 1e-9);
        for (m, b) in betas.iter().enumerate() {
            assert!(*b <= 1.25f64.powi(-(m as i32 + 1)));
        }
    }

    #[test]
    fn stationary_three_state() {
        let p = vec![vec![0.5, 0.5, 0.0], vec![0.25, 0.5, 0.25], vec![0.0, 0.5, 0.5]];
        let pi = stationary_distribution(&p).unwrap();
        for (a, b) in pi.iter().zip([0.25, 0.5, 0.25]) {
            assert_relative_eq!(*a, b, max_relative = 1e-12);
        }
        let reducible = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(stationary_distribution(&reducible).is_err());
    }

    #[test]
    fn block_size_examples() {
        assert_eq!(choose_block_size(1000, 0.01, std::f64::consts::E).unwrap(), 12);
        assert_eq!(choose_block_size(1000, 0.01, 10.0).unwrap(), 5);
        assert!(choose_block_size(3, 0.01, 1.5).is_err());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 100 {
            let n = rng.random_range(10..100_000usize);
            let delta = rng.random_range(1e-4..0.5);
            let r = rng.random_range(1.05..20.0);
            if let Ok(m) = choose_block_size(n, delta, r) {
                assert!(r.powi(-(m as i32)) <= delta / n as f64 * (1.0 + 1e-9));
                checked += 1;
            }
        }
    }

    #[test]
    fn blocked_examples() {
        let tail = |t: f64, k: usize| (-t * t / k as f64).exp();
        let one = blocked_deviation_bound(tail, 3.0, 50, 1, 0.0).unwrap();
        assert_relative_eq!(one.raw, tail(3.0, 50));
        let with_beta = blocked_deviation_bound(tail, 3.0, 50, 5, 0.05 / 50.0).unwrap();
        let without = blocked_deviation_bound(tail, 3.0, 50, 5, 0.0).unwrap();
        assert_relative_eq!(with_beta.raw - without.raw, 0.05, max_relative = 1e-12);

        // equal blocks of size n/m: closed form vs summation
        let f = |t: f64, k: usize| (-(t / 8.0).powi(2) * 8.0 / k as f64).exp();
        let t = 40.0;
        let direct = blocked_deviation_bound(f, t, 1024, 8, 1e-6).unwrap();
        let closed = 8.0 * (-(t / 8.0).powi(2) * 8.0 / 128.0).exp() + 1024.0 * 1e-6;
        assert_relative_eq!(direct.raw, closed, max_relative = 1e-12);
        let huge = blocked_deviation_bound(tail, 0.0, 10, 2, 0.5).unwrap();
        assert_eq!(huge.probability, 1.0);
        assert!(huge.raw > 1.0);
    }

    proptest! {
        #[test]
        fn blocks_partition(n in 1usize..200, m_frac in 0.0f64..1.0) {
            let m = 1 + ((n - 1) as f64 * m_frac) as usize;
            let blocks = block_indices(n, m).unwrap();
            prop_assert_eq!(blocks.len(), m);
            let mut all: Vec<usize> = blocks.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (1..=n).collect::<Vec<_>>());
            let sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for (k, b) in blocks.iter().enumerate() {
                prop_assert!(b.windows(2).all(|w| w[1] - w[0] == m));
                prop_assert!(b.iter().all(|i| i % m == k));
            }
        }

        #[test]
        fn beta_in_unit_interval(cells in prop::collection::vec(0.0f64..1.0, 6)) {
            let total: f64 = cells.iter().sum();
            prop_assume!(total > 1e-6);
            let joint: Vec<Vec<f64>> = cells.chunks(3).map(|r| r.iter().map(|v| v / total).collect()).collect();
            let b = beta_exact_discrete(&joint).unwrap();
            prop_assert!((0.0..=1.0).contains(&b));
            // product tables have zero coefficient
            let rows: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
            let cols: Vec<f64> = (0..3).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
            let prod: Vec<Vec<f64>> = rows.iter().map(|a| cols.iter().map(|b| a * b).collect()).collect();
            prop_assert!(beta_exact_discrete(&prod).unwrap() < 1e-12);
        }
    }
}
