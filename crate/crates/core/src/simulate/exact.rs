//! Exact distributions of finite families on discrete product spaces.
//!
//! `Z_1, ..., Z_n` are independent with finitely many atoms each, and the
//! family is given by its values `h_j(a)` at every atom `a` of every
//! coordinate. For a fixed sign vector `u`:
//!
//! ```text
//! K(z)      = max_j sum_k u_k (h_{j,k}(z_k) - E h_{j,k}(Z_k))
//! r_ave     = E_Z E_U max_j U . h_j(Z)
//! c_k       = max |K(z) - K(z')| over z, z' differing in coordinate k only
//! ```
//!
//! These quantities back the symmetrization (`E K <= 2 r_ave`) and bounded
//! differences (`P(s (K - E K) > eps) <= exp(-2 eps^2 / |c|^2)`) checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{CovariateLaw, DataModel};
use crate::error::{invalid, Error, Result};
use crate::hypothesis::{clip, Predictor};
use crate::rademacher::EXACT_LIMIT;

/// Largest number of joint configurations enumerated (before the `2^n` sign factor).
pub const CONFIG_LIMIT: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub prob: f64,
    /// `h_j` at this atom, one entry per family member.
    pub values: Vec<f64>,
}

/// A finite family on an independent discrete product space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteFamily {
    /// `coords[k]` lists the atoms of `Z_k`.
    pub coords: Vec<Vec<Atom>>,
}

impl DiscreteFamily {
    pub fn new(coords: Vec<Vec<Atom>>) -> Result<Self> {
        let family = DiscreteFamily { coords };
        family.validate()?;
        Ok(family)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.coords.first().and_then(|c| c.first()) else {
            return Err(invalid("family needs at least one coordinate with one atom"));
        };
        let m = first.values.len();
        if m == 0 {
            return Err(invalid("family needs at least one member"));
        }
        for (k, atoms) in self.coords.iter().enumerate() {
            if atoms.is_empty() {
                return Err(invalid(format!("coordinate {k} has no atoms")));
            }
            if atoms.iter().any(|a| a.values.len() != m || a.values.iter().any(|v| !v.is_finite())) {
                return Err(invalid(format!("coordinate {k}: every atom needs {m} finite values")));
            }
            if atoms.iter().any(|a| !(a.prob >= 0.0)) {
                return Err(invalid(format!("coordinate {k}: negative probability")));
            }
            let total: f64 = atoms.iter().map(|a| a.prob).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(invalid(format!("coordinate {k}: probabilities sum to {total}")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn m(&self) -> usize {
        self.coords[0][0].values.len()
    }

    /// `E h_{j,k}(Z_k)` as an `m x n` matrix.
    pub fn expectations(&self) -> Vec<Vec<f64>> {
        (0..self.m())
            .map(|j| {
                self.coords
                    .iter()
                    .map(|atoms| atoms.iter().map(|a| a.prob * a.values[j]).sum())
                    .collect()
            })
            .collect()
    }

    /// `sup_z |H(z)|_{n,2}` with `H_k = max_j |h_{j,k}|`, over atoms of positive mass.
    pub fn envelope_sup(&self) -> f64 {
        self.coords
            .iter()
            .map(|atoms| {
                atoms
                    .iter()
                    .filter(|a| a.prob > 0.0)
                    .flat_map(|a| a.values.iter())
                    .fold(0.0f64, |s, v| s.max(v.abs()))
                    .powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    fn identical_coords(&self) -> bool {
        self.coords.windows(2).all(|w| w[0] == w[1])
    }

    fn config_count(&self) -> Result<usize> {
        let mut count = 1usize;
        for atoms in &self.coords {
            count = count.saturating_mul(atoms.len());
        }
        if count > CONFIG_LIMIT {
            return Err(Error::TooLarge {
                what: "number of joint configurations",
                size: count,
                limit: CONFIG_LIMIT,
                hint: "reduce n or the number of atoms per coordinate",
            });
        }
        Ok(count)
    }

    /// Atom indices of configuration `c` in mixed radix, coordinate 0 fastest.
    fn decode(&self, mut c: usize, out: &mut [usize]) -> f64 {
        let mut prob = 1.0;
        for (k, atoms) in self.coords.iter().enumerate() {
            out[k] = c % atoms.len();
            c /= atoms.len();
            prob *= atoms[out[k]].prob;
        }
        prob
    }

    /// `E_Z r(H, Z)`, the average Rademacher complexity (unnormalized).
    ///
    /// Identical coordinates are enumerated as multisets with multinomial
    /// weights, since `r(H, z)` is invariant under permutations of `z`.
    pub fn average_rademacher(&self) -> Result<f64> {
        let n = self.n();
        if n > EXACT_LIMIT {
            return Err(Error::TooLarge {
                what: "sample size n",
                size: n,
                limit: EXACT_LIMIT,
                hint: "use Monte-Carlo estimates of the complexity",
            });
        }
        if self.identical_coords() {
            return Ok(self.average_rademacher_multiset());
        }
        let count = self.config_count()?;
        let parts: Vec<f64> = (0..count)
            .into_par_iter()
            .map(|c| {
                let mut idx = vec![0; n];
                let prob = self.decode(c, &mut idx);
                if prob == 0.0 {
                    return 0.0;
                }
                let rows: Vec<Vec<f64>> = (0..self.m())
                    .map(|j| idx.iter().enumerate().map(|(k, &a)| self.coords[k][a].values[j]).collect())
                    .collect();
                prob * sign_average(&rows)
            })
            .collect();
        Ok(parts.iter().sum())
    }

    fn average_rademacher_multiset(&self) -> f64 {
        let atoms = &self.coords[0];
        let (n, a) = (self.n(), atoms.len());
        let mut counts_list = Vec::new();
        compositions(n, a, &mut vec![0; a], 0, &mut counts_list);
        let log_fact: Vec<f64> = (0..=n).scan(0.0, |s, i| {
            if i > 0 {
                *s += (i as f64).ln();
            }
            Some(*s)
        }).collect();
        let parts: Vec<f64> = counts_list
            .par_iter()
            .map(|counts| {
                let mut log_p = log_fact[n];
                for (c, atom) in counts.iter().zip(atoms) {
                    if *c > 0 {
                        if atom.prob == 0.0 {
                            return 0.0;
                        }
                        log_p += *c as f64 * atom.prob.ln() - log_fact[*c];
                    }
                }
                let rows: Vec<Vec<f64>> = (0..self.m())
                    .map(|j| {
                        counts
                            .iter()
                            .zip(atoms)
                            .flat_map(|(c, atom)| std::iter::repeat_n(atom.values[j], *c))
                            .collect()
                    })
                    .collect();
                log_p.exp() * sign_average(&rows)
            })
            .collect();
        parts.iter().sum()
    }

    /// Law of `K` for the sign vector `u`, as `(value, probability)` pairs in
    /// enumeration order.
    pub fn sup_deviation_law(&self, u: &[f64]) -> Result<Vec<(f64, f64)>> {
        self.check_signs(u)?;
        let count = self.config_count()?;
        let means = self.expectations();
        let n = self.n();
        Ok((0..count)
            .into_par_iter()
            .map(|c| {
                let mut idx = vec![0; n];
                let prob = self.decode(c, &mut idx);
                (self.k_value(&idx, u, &means), prob)
            })
            .collect())
    }

    /// `E K` for the sign vector `u`.
    pub fn expected_sup_deviation(&self, u: &[f64]) -> Result<f64> {
        Ok(self.sup_deviation_law(u)?.iter().map(|(v, p)| v * p).sum())
    }

    /// Exact bounded-difference constants of `K` over configurations of positive mass.
    pub fn bounded_differences(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_signs(u)?;
        let count = self.config_count()?;
        let means = self.expectations();
        let n = self.n();
        let per_config: Vec<Vec<f64>> = (0..count)
            .into_par_iter()
            .map(|c| {
                let mut idx = vec![0; n];
                let mut out = vec![0.0f64; n];
                if self.decode(c, &mut idx) == 0.0 {
                    return out;
                }
                let base = self.k_value(&idx, u, &means);
                for (k, slot) in out.iter_mut().enumerate() {
                    let keep = idx[k];
                    for (a, atom) in self.coords[k].iter().enumerate() {
                        if a == keep || atom.prob == 0.0 {
                            continue;
                        }
                        idx[k] = a;
                        *slot = (*slot).max((self.k_value(&idx, u, &means) - base).abs());
                    }
                    idx[k] = keep;
                }
                out
            })
            .collect();
        Ok((0..n).map(|k| per_config.iter().fold(0.0f64, |s, c| s.max(c[k]))).collect())
    }

    fn k_value(&self, idx: &[usize], u: &[f64], means: &[Vec<f64>]) -> f64 {
        (0..self.m())
            .map(|j| {
                idx.iter()
                    .enumerate()
                    .map(|(k, &a)| u[k] * (self.coords[k][a].values[j] - means[j][k]))
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn check_signs(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.n() || u.iter().any(|s| s.abs() != 1.0) {
            return Err(invalid(format!("sign vector must have {} entries in {{-1, 1}}", self.n())));
        }
        Ok(())
    }
}

/// `P(s (K - E K) > eps)` from an exact law of `K`.
pub fn tail_probability(law: &[(f64, f64)], sign: f64, eps: f64) -> f64 {
    let mean: f64 = law.iter().map(|(v, p)| v * p).sum();
    law.iter().filter(|(v, _)| sign * (v - mean) > eps).map(|(_, p)| p).sum()
}

/// McDiarmid bound `exp(-2 eps^2 / sum c_k^2)`.
pub fn mcdiarmid_bound(eps: f64, c: &[f64]) -> f64 {
    let s: f64 = c.iter().map(|x| x * x).sum();
    if s == 0.0 {
        return if eps >= 0.0 { 0.0 } else { 1.0 };
    }
    (-2.0 * eps * eps / s).exp()
}

/// `2^{-n} sum_u max_j u . row_j` by direct enumeration (n is small here).
fn sign_average(rows: &[Vec<f64>]) -> f64 {
    let n = rows[0].len();
    let mut total = 0.0;
    for mask in 0..1usize << n {
        let best = rows
            .iter()
            .map(|r| r.iter().enumerate().map(|(k, v)| if mask >> k & 1 == 1 { -v } else { *v }).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        total += best;
    }
    total / (1u64 << n) as f64
}

fn compositions(n: usize, parts: usize, cur: &mut Vec<usize>, pos: usize, out: &mut Vec<Vec<usize>>) {
    if pos == parts - 1 {
        cur[pos] = n;
        out.push(cur.clone());
        return;
    }
    for c in 0..=n {
        cur[pos] = c;
        compositions(n - c, parts, cur, pos + 1, out);
    }
}

/// Squared-loss family `h_{g,k}(x, y) = (g(x) - T_B y)^2` of a data model with
/// discrete covariates and discrete noise, one member per candidate.
pub fn loss_family(candidates: &[Predictor], model: &DataModel, n: usize, response_bound: f64) -> Result<DiscreteFamily> {
    model.validate(n)?;
    if candidates.is_empty() {
        return Err(invalid("loss family needs at least one candidate"));
    }
    let noise = model
        .noise
        .atoms()
        .ok_or_else(|| invalid("exact loss families need discrete noise"))?;
    let laws = model.marginals(n)?;
    let coords = laws
        .iter()
        .enumerate()
        .map(|(k, law)| {
            let CovariateLaw::Discrete { points, probs } = law else {
                return Err(invalid("exact loss families need discrete covariates"));
            };
            let mut atoms = Vec::new();
            for (x, px) in points.iter().zip(probs) {
                let mu = model.signal(x, k)?;
                let preds = candidates.iter().map(|g| g.eval(x, k)).collect::<Result<Vec<f64>>>()?;
                for (e, pe) in &noise {
                    let y = clip(mu + e, response_bound);
                    atoms.push(Atom { prob: px * pe, values: preds.iter().map(|g| (g - y).powi(2)).collect() });
                }
            }
            Ok(atoms)
        })
        .collect::<Result<Vec<_>>>()?;
    DiscreteFamily::new(coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::FunctionTable;
    use crate::rademacher::rademacher_exact;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_family(rng: &mut ChaCha8Rng, n: usize, m: usize, identical: bool) -> DiscreteFamily {
        let make = |rng: &mut ChaCha8Rng| {
            let a = rng.random_range(1..=4usize);
            let w: Vec<f64> = (0..a).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter()
                .map(|p| Atom { prob: p / s, values: (0..m).map(|_| rng.random_range(-1.0..1.0)).collect() })
                .collect::<Vec<_>>()
        };
        if identical {
            let atoms = make(rng);
            DiscreteFamily::new(vec![atoms; n]).unwrap()
        } else {
            DiscreteFamily::new((0..n).map(|_| make(rng)).collect()).unwrap()
        }
    }

    /// Independent oracle: E_Z of the table-based exact complexity.
    fn brute_average_rademacher(f: &DiscreteFamily) -> f64 {
        let n = f.n();
        let count: usize = f.coords.iter().map(Vec::len).product();
        let mut total = 0.0;
        for c in 0..count {
            let mut idx = vec![0; n];
            let p = f.decode(c, &mut idx);
            let rows: Vec<Vec<f64>> = (0..f.m())
                .map(|j| idx.iter().enumerate().map(|(k, &a)| f.coords[k][a].values[j]).collect())
                .collect();
            total += p * rademacher_exact(&FunctionTable::from_rows(rows).unwrap()).unwrap().value;
        }
        total
    }

    #[test]
    fn multiset_matches_full_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let n = rng.random_range(1..=5);
            let m = rng.random_range(1..=4);
            let f = random_family(&mut rng, n, m, true);
            assert_abs_diff_eq!(f.average_rademacher().unwrap(), brute_average_rademacher(&f), epsilon = 1e-12);
            let g = random_family(&mut rng, n, m, false);
            assert_abs_diff_eq!(g.average_rademacher().unwrap(), brute_average_rademacher(&g), epsilon = 1e-12);
        }
    }

    #[test]
    fn symmetrization_and_mcdiarmid_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..40 {
            let n = rng.random_range(1..=6);
            let m = rng.random_range(1..=5);
            let f = random_family(&mut rng, n, m, trial % 2 == 0);
            let u: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let law = f.sup_deviation_law(&u).unwrap();
            let ek: f64 = law.iter().map(|(v, p)| v * p).sum();
            assert!(ek <= 2.0 * f.average_rademacher().unwrap() + 1e-12);
            let c = f.bounded_differences(&u).unwrap();
            let span = law.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max)
                - law.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
            for i in 0..20 {
                let eps = span * i as f64 / 19.0;
                for s in [1.0, -1.0] {
                    assert!(tail_probability(&law, s, eps) <= mcdiarmid_bound(eps, &c) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_member_has_zero_mean_deviation() {
        let f = DiscreteFamily::new(vec![
            vec![Atom { prob: 0.5, values: vec![1.0] }, Atom { prob: 0.5, values: vec![-1.0] }];
            3
        ])
        .unwrap();
        let u = vec![1.0, -1.0, 1.0];
        assert_abs_diff_eq!(f.expected_sup_deviation(&u).unwrap(), 0.0, epsilon = 1e-15);
        assert_eq!(f.bounded_differences(&u).unwrap(), vec![2.0; 3]);
        assert_abs_diff_eq!(f.envelope_sup(), 3f64.sqrt(), epsilon = 1e-15);
        // Rademacher complexity of a single row is zero.
        assert_abs_diff_eq!(f.average_rademacher().unwrap(), 0.0, epsilon = 1e-15);
        assert!(f.sup_deviation_law(&[1.0, 0.5, 1.0]).is_err());
    }
}
