//! Empirical Rademacher complexity of a finite function table.
//!
//! The complexity is unnormalized:
//!
//! ```text
//! r(H, z) = E[ max_j  U . h_j(z) ],   U uniform on {-1, 1}^n
//! ```
//!
//! Exact evaluation enumerates all `2^n` sign vectors (Gray-code order, in
//! fixed chunks so the floating-point summation order never depends on the
//! number of worker threads). The Monte-Carlo estimator draws sign vectors
//! from ChaCha8 substreams keyed by `(seed, block)`, so its output is
//! bit-reproducible for a given seed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::hypothesis::FunctionTable;

/// Hard ceiling on `n` for exact enumeration (about 16.7M sign vectors).
pub const EXACT_LIMIT: usize = 24;

/// Minimum number of Monte-Carlo draws accepted.
pub const MIN_DRAWS: usize = 100;

const CHUNK_BITS: usize = 12;
const MC_BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub value: f64,
    /// Zero for exact enumeration.
    pub std_error: f64,
    pub draws: u64,
    pub mode: EstimateMode,
    pub seed: Option<u64>,
}

impl RademacherEstimate {
    /// `value + k * std_error`, a conservative plug-in for bound formulas.
    pub fn upper(&self, k: f64) -> f64 {
        self.value + k * self.std_error
    }
}

pub fn rademacher_exact(table: &FunctionTable) -> Result<RademacherEstimate> {
    rademacher_exact_with_limit(table, EXACT_LIMIT)
}

/// Exact enumeration with a caller-chosen cutoff (clamped to [`EXACT_LIMIT`]).
pub fn rademacher_exact_with_limit(table: &FunctionTable, limit: usize) -> Result<RademacherEstimate> {
    let limit = limit.min(EXACT_LIMIT);
    let n = table.n();
    if n > limit {
        return Err(Error::TooLarge {
            what: "sample size n",
            size: n,
            limit,
            hint: "use the Monte-Carlo estimator (rademacher_mc) instead",
        });
    }
    let total = exact_sign_sum(table);
    Ok(RademacherEstimate {
        value: total / (1u64 << n) as f64,
        std_error: 0.0,
        draws: 1u64 << n,
        mode: EstimateMode::Exact,
        seed: None,
    })
}

/// `sum over u in {-1,1}^n of max_j u . row_j`.
pub(crate) fn exact_sign_sum(table: &FunctionTable) -> f64 {
    let n = table.n();
    let low = n.min(CHUNK_BITS);
    let high = n - low;
    let chunks: Vec<f64> = (0..1usize << high)
        .into_par_iter()
        .map(|chunk| chunk_sum(table, low, chunk))
        .collect();
    chunks.iter().sum()
}

fn chunk_sum(table: &FunctionTable, low: usize, chunk: usize) -> f64 {
    let n = table.n();
    let m = table.m();
    // u_k = -1 when bit k of the sign pattern is set; high bits come from `chunk`.
    let mut signs = vec![1.0f64; n];
    for (b, s) in signs[low..].iter_mut().enumerate() {
        if chunk >> b & 1 == 1 {
            *s = -1.0;
        }
    }
    let mut dots: Vec<f64> = table
        .rows()
        .map(|row| row.iter().zip(&signs).map(|(h, u)| h * u).sum())
        .collect();
    let mut sum = dots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for step in 1usize..1 << low {
        let bit = step.trailing_zeros() as usize;
        let flip = -2.0 * signs[bit];
        signs[bit] = -signs[bit];
        for (j, d) in dots.iter_mut().enumerate().take(m) {
            *d += flip * table.row(j)[bit];
        }
        sum += dots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    sum
}

/// Running mean/variance accumulator, merged in a fixed order.
#[derive(Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.count == 0.0 {
            return other;
        }
        if other.count == 0.0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        Moments {
            count,
            mean: self.mean + delta * other.count / count,
            m2: self.m2 + other.m2 + delta * delta * self.count * other.count / count,
        }
    }
}

/// Fills `signs` with uniform +-1 drawn from `rng`.
pub(crate) fn draw_signs(rng: &mut ChaCha8Rng, signs: &mut [f64]) {
    for chunk in signs.chunks_mut(64) {
        let word = rng.next_u64();
        for (b, s) in chunk.iter_mut().enumerate() {
            *s = if word >> b & 1 == 1 { -1.0 } else { 1.0 };
        }
    }
}

/// A ChaCha8 generator for substream `stream` of `seed`.
pub(crate) fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn rademacher_mc(table: &FunctionTable, draws: usize, seed: u64) -> Result<RademacherEstimate> {
    if draws < MIN_DRAWS {
        return Err(domain(format!("draws = {draws} is below the minimum of {MIN_DRAWS}")));
    }
    let blocks = draws.div_ceil(MC_BLOCK);
    let parts: Vec<Moments> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, b as u64);
            let count = MC_BLOCK.min(draws - b * MC_BLOCK);
            let mut signs = vec![0.0; table.n()];
            let mut acc = Moments::default();
            for _ in 0..count {
                draw_signs(&mut rng, &mut signs);
                let best = table
                    .rows()
                    .map(|row| row.iter().zip(&signs).map(|(h, u)| h * u).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max);
                acc.push(best);
            }
            acc
        })
        .collect();
    let total = parts.into_iter().fold(Moments::default(), Moments::merge);
    let var = if total.count > 1.0 { total.m2 / (total.count - 1.0) } else { 0.0 };
    Ok(RademacherEstimate {
        value: total.mean,
        std_error: (var / total.count).sqrt(),
        draws: draws as u64,
        mode: EstimateMode::MonteCarlo,
        seed: Some(seed),
    })
}

/// Finite-class maximal inequality: `max_j |row_j|_2 * sqrt(2 log m)`.
pub fn massart_bound(table: &FunctionTable) -> f64 {
    let max_norm = table
        .rows()
        .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    max_norm * (2.0 * (table.m() as f64).ln()).sqrt()
}

/// Covering-number bound on the empirical complexity:
/// `r n + |H(z)|_{n,2} sqrt(2 log N_1(H, z, r))`.
pub fn rademacher_cover_bound(envelope_l2: f64, r: f64, n: usize, cover_size: usize) -> Result<f64> {
    if cover_size == 0 {
        return Err(domain("cover size must be at least 1"));
    }
    if !(r >= 0.0) || !(envelope_l2 >= 0.0) {
        return Err(domain(format!("radius {r} and envelope norm {envelope_l2} must be nonnegative")));
    }
    Ok(r * n as f64 + envelope_l2 * (2.0 * (cover_size as f64).ln()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn table(rows: &[&[f64]]) -> FunctionTable {
        FunctionTable::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    /// Direct enumeration without Gray codes, as an independent oracle.
    fn brute_force(t: &FunctionTable) -> f64 {
        let n = t.n();
        let mut total = 0.0;
        for pattern in 0..1u32 << n {
            let best = t
                .rows()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .map(|(k, h)| if pattern >> k & 1 == 1 { -h } else { *h })
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            total += best;
        }
        total / (1u64 << n) as f64
    }

    fn random_table(rng: &mut impl Rng, m: usize, n: usize) -> FunctionTable {
        FunctionTable::from_rows(
            (0..m).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn tightness_example() {
        let t = table(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let e = rademacher_exact(&t).unwrap();
        assert_eq!(e.value, 0.5);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.draws, 4);
        let balanced = t.balanced();
        assert_eq!(rademacher_exact(&balanced).unwrap().value, 1.0);
    }

    #[test]
    fn single_row_is_zero() {
        let t = table(&[&[3.0, -1.0, 2.5]]);
        assert_eq!(rademacher_exact(&t).unwrap().value, 0.0);
    }

    #[test]
    fn refuses_large_n() {
        let t = FunctionTable::from_rows(vec![vec![1.0; 25]]).unwrap();
        let err = rademacher_exact(&t).unwrap_err();
        assert!(err.to_string().contains("rademacher_mc"), "{err}");
        let small = FunctionTable::from_rows(vec![vec![1.0; 10]]).unwrap();
        assert!(rademacher_exact_with_limit(&small, 8).is_err());
    }

    #[test]
    fn gray_code_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 3, 7, 13, 14] {
            let t = random_table(&mut rng, 5, n);
            assert_relative_eq!(rademacher_exact(&t).unwrap().value, brute_force(&t), max_relative = 1e-12);
        }
    }

    #[test]
    fn monte_carlo_brackets_exact() {
        let t = table(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let mc = rademacher_mc(&t, 100_000, 11).unwrap();
        assert!((mc.value - 0.5).abs() <= 3.0 * mc.std_error, "{mc:?}");
        let single = table(&[&[1.0, -2.0, 0.5]]);
        let mc = rademacher_mc(&single, 20_000, 3).unwrap();
        assert!(mc.value.abs() <= 3.0 * mc.std_error, "{mc:?}");

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for (i, n) in [4usize, 8, 12].into_iter().enumerate() {
            let t = random_table(&mut rng, 6, n);
            let exact = rademacher_exact(&t).unwrap().value;
            let mc = rademacher_mc(&t, 50_000, 1000 + i as u64).unwrap();
            assert!((mc.value - exact).abs() <= 3.0 * mc.std_error, "n = {n}: {mc:?} vs {exact}");
        }
    }

    #[test]
    fn monte_carlo_is_reproducible_and_thread_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_table(&mut rng, 4, 30);
        let a = rademacher_mc(&t, 5000, 42).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| rademacher_mc(&t, 5000, 42).unwrap());
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        assert!(rademacher_mc(&t, 99, 1).is_err());
    }

    #[test]
    fn massart_examples() {
        let t = table(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_relative_eq!(massart_bound(&t), (2.0 * 2f64.ln()).sqrt(), max_relative = 1e-15);
        assert_relative_eq!(massart_bound(&t), 1.17741, epsilon = 1e-5);
        assert_eq!(massart_bound(&table(&[&[3.0, 4.0]])), 0.0);

        let rows: Vec<Vec<f64>> = (0..16u32)
            .map(|p| (0..4).map(|k| if p >> k & 1 == 1 { -1.0 } else { 1.0 }).collect())
            .collect();
        let all = FunctionTable::from_rows(rows).unwrap();
        assert_relative_eq!(massart_bound(&all), 4.7096, epsilon = 1e-4);
        assert_eq!(rademacher_exact(&all).unwrap().value, 4.0);
    }

    #[test]
    fn cover_bound_examples() {
        let v = rademacher_cover_bound(2f64.sqrt(), 0.0, 2, 2).unwrap();
        assert_relative_eq!(v, 1.6651, epsilon = 1e-4);
        assert!(v >= 0.5);
        assert_eq!(rademacher_cover_bound(3.0, 0.0, 5, 1).unwrap(), 0.0);
        assert_relative_eq!(rademacher_cover_bound(10.0, 0.01, 100, 40).unwrap(), 28.162, epsilon = 1e-3);
        assert!(rademacher_cover_bound(1.0, 0.0, 1, 0).is_err());
    }

    #[test]
    fn hull_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..20 {
            let n = rng.random_range(1..=10);
            let ma = rng.random_range(1..=4);
            let a = random_table(&mut rng, ma, n);
            let mb = rng.random_range(1..=2);
            let b = random_table(&mut rng, mb, n);
            let ra = rademacher_exact(&a).unwrap().value;
            let rb = rademacher_exact(&b).unwrap().value;
            // direct sums are additive
            let sum = rademacher_exact(&a.direct_sum(&b).unwrap()).unwrap().value;
            assert_relative_eq!(sum, ra + rb, max_relative = 1e-10, epsilon = 1e-12);
            // convex combinations of rows leave the complexity unchanged
            let combos: Vec<Vec<f64>> = (0..3)
                .map(|_| {
                    let w: Vec<f64> = (0..a.m()).map(|_| rng.random::<f64>()).collect();
                    let s: f64 = w.iter().sum();
                    (0..n).map(|k| (0..a.m()).map(|j| w[j] / s * a.row(j)[k]).sum()).collect()
                })
                .collect();
            let hull = a.union(&FunctionTable::from_rows(combos).unwrap()).unwrap();
            assert_relative_eq!(rademacher_exact(&hull).unwrap().value, ra, max_relative = 1e-10, epsilon = 1e-12);
            // the balanced hull at most doubles once the zero function is a member
            let zero = FunctionTable::from_rows(vec![vec![0.0; n]]).unwrap();
            let a0 = a.union(&zero).unwrap();
            let r0 = rademacher_exact(&a0).unwrap().value;
            let bal0 = rademacher_exact(&a0.balanced()).unwrap().value;
            assert!(bal0 <= 2.0 * r0 + 1e-12);
            // and is a no-op on sign-symmetric sets
            let bal = rademacher_exact(&a.balanced()).unwrap().value;
            let bal2 = rademacher_exact(&a.balanced().balanced()).unwrap().value;
            assert_relative_eq!(bal2, bal, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn massart_dominates_exact(seed in any::<u64>(), m in 1usize..=10, n in 1usize..=12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_table(&mut rng, m, n);
            prop_assert!(rademacher_exact(&t).unwrap().value <= massart_bound(&t) + 1e-12);
        }
    }
}
