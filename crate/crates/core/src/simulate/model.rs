//! Synthetic data models with a known regression function.
//!
//! ```text
//! X_k ~ marginal law at index k        (iid, per-index, or stationary Markov)
//! Y_k = f*(X_k) + shift_k + xi_k       xi_k centred noise, independent of X
//! ```
//!
//! Noise laws are chosen so that `E[T_B Y_k | X_k]` has a closed form.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};
use crate::hypothesis::{Predictor, SequentialSample};
use crate::mixing::{check_stochastic, stationary_distribution};
use crate::rademacher::substream;

const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CovariateLaw {
    /// Uniform on the box `[lo_1, hi_1] x ... x [lo_d, hi_d]`.
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    Discrete { points: Vec<Vec<f64>>, probs: Vec<f64> },
}

impl CovariateLaw {
    pub fn dim(&self) -> usize {
        match self {
            CovariateLaw::Uniform { lo, .. } => lo.len(),
            CovariateLaw::Discrete { points, .. } => points.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CovariateLaw::Uniform { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(invalid(format!(
                        "uniform law needs matching nonempty bounds (lo has {}, hi has {})",
                        lo.len(),
                        hi.len()
                    )));
                }
                if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] < hi[i]) || !hi[i].is_finite() || !lo[i].is_finite()) {
                    return Err(invalid(format!("uniform law: need lo < hi in coordinate {i}")));
                }
                Ok(())
            }
            CovariateLaw::Discrete { points, probs } => {
                if points.is_empty() || points.len() != probs.len() {
                    return Err(invalid(format!(
                        "discrete law has {} points and {} probabilities",
                        points.len(),
                        probs.len()
                    )));
                }
                let d = points[0].len();
                if d == 0 || points.iter().any(|p| p.len() != d) {
                    return Err(invalid("discrete law points must share a positive dimension"));
                }
                check_probs("discrete covariate law", probs)
            }
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            CovariateLaw::Uniform { lo, hi } => {
                lo.iter().zip(hi).map(|(a, b)| a + (b - a) * rng.random::<f64>()).collect()
            }
            CovariateLaw::Discrete { points, probs } => {
                let idx = WeightedIndex::new(probs).expect("validated probabilities");
                points[idx.sample(rng)].clone()
            }
        }
    }
}

/// Covariate process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Covariates {
    Iid { law: CovariateLaw },
    /// Independent with per-index laws; a single law is reused for every index.
    Nonstationary { laws: Vec<CovariateLaw> },
    /// Finite-state chain started from its stationary distribution.
    Markov { states: Vec<Vec<f64>>, transition: Vec<Vec<f64>> },
}

/// Deterministic shift added to the regression function at index `k` (0-based).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Drift {
    #[default]
    None,
    /// `intercept + slope * k`.
    Linear { intercept: f64, slope: f64 },
    /// Length `n`, or length 1 for a constant shift.
    PerIndex { values: Vec<f64> },
}

impl Drift {
    pub fn shift(&self, k: usize) -> f64 {
        match self {
            Drift::None => 0.0,
            Drift::Linear { intercept, slope } => intercept + slope * k as f64,
            Drift::PerIndex { values } => {
                if values.len() == 1 {
                    values[0]
                } else {
                    values[k]
                }
            }
        }
    }

    fn is_constant(&self) -> bool {
        match self {
            Drift::None => true,
            Drift::Linear { slope, .. } => *slope == 0.0,
            Drift::PerIndex { values } => values.windows(2).all(|w| w[0] == w[1]),
        }
    }
}

/// Centred additive noise.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Noise {
    #[default]
    None,
    Uniform { half_width: f64 },
    /// `+-scale` with probability 1/2 each.
    Rademacher { scale: f64 },
    /// Finite law; must have mean zero.
    Discrete { atoms: Vec<f64>, probs: Vec<f64> },
}

impl Noise {
    pub fn validate(&self) -> Result<()> {
        match self {
            Noise::None => Ok(()),
            Noise::Uniform { half_width } => positive("noise half_width", *half_width),
            Noise::Rademacher { scale } => positive("noise scale", *scale),
            Noise::Discrete { atoms, probs } => {
                if atoms.is_empty() || atoms.len() != probs.len() {
                    return Err(invalid("discrete noise needs matching nonempty atoms and probs"));
                }
                check_probs("discrete noise", probs)?;
                let mean: f64 = atoms.iter().zip(probs).map(|(a, p)| a * p).sum();
                let scale = atoms.iter().fold(0.0f64, |s, a| s.max(a.abs())).max(1.0);
                if mean.abs() > 1e-12 * scale {
                    return Err(invalid(format!("discrete noise must be centred (mean = {mean:e})")));
                }
                Ok(())
            }
        }
    }

    /// Largest absolute noise value.
    pub fn sup(&self) -> f64 {
        match self {
            Noise::None => 0.0,
            Noise::Uniform { half_width } => *half_width,
            Noise::Rademacher { scale } => *scale,
            Noise::Discrete { atoms, .. } => atoms.iter().fold(0.0, |s, a| s.max(a.abs())),
        }
    }

    /// `(value, probability)` pairs, or `None` for a continuous law.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Noise::None => Some(vec![(0.0, 1.0)]),
            Noise::Uniform { .. } => None,
            Noise::Rademacher { scale } => Some(vec![(-scale, 0.5), (*scale, 0.5)]),
            Noise::Discrete { atoms, probs } => Some(atoms.iter().copied().zip(probs.iter().copied()).collect()),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Noise::None => 0.0,
            Noise::Uniform { half_width } => half_width * (2.0 * rng.random::<f64>() - 1.0),
            Noise::Rademacher { scale } => {
                if rng.random::<bool>() {
                    *scale
                } else {
                    -scale
                }
            }
            Noise::Discrete { atoms, probs } => {
                let idx = WeightedIndex::new(probs).expect("validated probabilities");
                atoms[idx.sample(rng)]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Iid,
    NonstationaryIndependent,
    MarkovChain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataModel {
    pub covariates: Covariates,
    /// The regression function `f*`; must depend on the covariate only.
    pub regression: Predictor,
    #[serde(default)]
    pub drift: Drift,
    #[serde(default)]
    pub noise: Noise,
    /// Truncation level `B`.
    pub bound: f64,
    /// When false, generated responses are required to lie in `[-B, B]`.
    #[serde(default)]
    pub unbounded_response: bool,
}

impl DataModel {
    pub fn kind(&self) -> ModelKind {
        match &self.covariates {
            Covariates::Markov { .. } => ModelKind::MarkovChain,
            Covariates::Iid { .. } if self.drift.is_constant() => ModelKind::Iid,
            Covariates::Nonstationary { laws } if laws.len() == 1 && self.drift.is_constant() => ModelKind::Iid,
            _ => ModelKind::NonstationaryIndependent,
        }
    }

    /// Whether every index has the same joint law of `(X_k, Y_k)`.
    pub fn is_homogeneous(&self) -> bool {
        self.kind() != ModelKind::NonstationaryIndependent
    }

    pub fn dim(&self) -> usize {
        match &self.covariates {
            Covariates::Iid { law } => law.dim(),
            Covariates::Nonstationary { laws } => laws.first().map_or(0, CovariateLaw::dim),
            Covariates::Markov { states, .. } => states.first().map_or(0, Vec::len),
        }
    }

    /// Checks the model for a sample of size `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(domain("sample size n must be at least 1"));
        }
        positive("model bound B", self.bound)?;
        if !self.regression.is_pointwise() {
            return Err(invalid("regression function must depend on the covariate only"));
        }
        self.noise.validate()?;
        match &self.covariates {
            Covariates::Iid { law } => law.validate()?,
            Covariates::Nonstationary { laws } => {
                if laws.len() != 1 && laws.len() != n {
                    return Err(invalid(format!("{} covariate laws given for n = {n}", laws.len())));
                }
                let d = laws[0].dim();
                for (k, law) in laws.iter().enumerate() {
                    law.validate().map_err(|e| invalid(format!("covariate law {k}: {e}")))?;
                    if law.dim() != d {
                        return Err(invalid(format!("covariate law {k} has dimension {}, expected {d}", law.dim())));
                    }
                }
            }
            Covariates::Markov { states, transition } => {
                if states.is_empty() || states.len() != transition.len() {
                    return Err(invalid(format!(
                        "Markov model has {} states and a {}-row transition matrix",
                        states.len(),
                        transition.len()
                    )));
                }
                let d = states[0].len();
                if d == 0 || states.iter().any(|s| s.len() != d) {
                    return Err(invalid("Markov states must share a positive dimension"));
                }
                check_stochastic(transition).map_err(|e| invalid(e.to_string()))?;
            }
        }
        if let Drift::PerIndex { values } = &self.drift {
            if values.len() != 1 && values.len() != n {
                return Err(invalid(format!("{} drift values given for n = {n}", values.len())));
            }
        }
        Ok(())
    }

    /// Marginal covariate laws for indices `0..n`. For a Markov model every
    /// marginal is the stationary distribution.
    pub fn marginals(&self, n: usize) -> Result<Vec<CovariateLaw>> {
        match &self.covariates {
            Covariates::Iid { law } => Ok(vec![law.clone(); n]),
            Covariates::Nonstationary { laws } => {
                Ok((0..n).map(|k| laws[if laws.len() == 1 { 0 } else { k }].clone()).collect())
            }
            Covariates::Markov { states, transition } => {
                let pi = stationary_distribution(transition)?;
                Ok(vec![CovariateLaw::Discrete { points: states.clone(), probs: pi }; n])
            }
        }
    }

    /// Conditional mean of `Y_k` before noise: `f*(x) + shift_k`.
    pub fn signal(&self, x: &[f64], k: usize) -> Result<f64> {
        Ok(self.regression.eval(x, k)? + self.drift.shift(k))
    }
}

/// Draws `(X, Y)_{1:n}`; bit-identical for a fixed `seed`.
pub fn generate(model: &DataModel, n: usize, seed: u64) -> Result<SequentialSample> {
    model.validate(n)?;
    let mut cov_rng = substream(seed, 0);
    let mut noise_rng = substream(seed, 1);
    let points: Vec<Vec<f64>> = match &model.covariates {
        Covariates::Iid { law } => (0..n).map(|_| law.sample(&mut cov_rng)).collect(),
        Covariates::Nonstationary { laws } => (0..n)
            .map(|k| laws[if laws.len() == 1 { 0 } else { k }].sample(&mut cov_rng))
            .collect(),
        Covariates::Markov { states, transition } => {
            let pi = stationary_distribution(transition)?;
            let rows: Vec<WeightedIndex<f64>> = transition
                .iter()
                .map(|row| WeightedIndex::new(row).expect("stochastic row"))
                .collect();
            let mut state = WeightedIndex::new(&pi)
                .map_err(|e| domain(format!("stationary distribution: {e}")))?
                .sample(&mut cov_rng);
            let mut out = Vec::with_capacity(n);
            for k in 0..n {
                if k > 0 {
                    state = rows[state].sample(&mut cov_rng);
                }
                out.push(states[state].clone());
            }
            out
        }
    };
    let mut responses = Vec::with_capacity(n);
    for (k, x) in points.iter().enumerate() {
        let y = model.signal(x, k)? + model.noise.sample(&mut noise_rng);
        if !model.unbounded_response && y.abs() > model.bound * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "response {y} at index {k} exceeds B = {}; set unbounded_response to allow this",
                model.bound
            )));
        }
        responses.push(y);
    }
    SequentialSample::new(points, Some(responses))
}

/// Indices of states visited by a Markov model's sample, matched by value.
pub fn state_path(model: &DataModel, sample: &SequentialSample) -> Result<Vec<usize>> {
    let Covariates::Markov { states, .. } = &model.covariates else {
        return Err(invalid("state_path requires a Markov model"));
    };
    sample
        .points
        .iter()
        .map(|x| {
            states
                .iter()
                .position(|s| s == x)
                .ok_or_else(|| invalid(format!("covariate {x:?} is not a state of the chain")))
        })
        .collect()
}

fn check_probs(what: &str, probs: &[f64]) -> Result<()> {
    if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(invalid(format!("{what}: probabilities must be nonnegative")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(invalid(format!("{what}: probabilities sum to {total}, not 1")));
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} must be positive")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::Member;
    use crate::mixing::two_state_symmetric;

    fn identity_model() -> DataModel {
        DataModel {
            covariates: Covariates::Iid { law: CovariateLaw::Uniform { lo: vec![0.0], hi: vec![1.0] } },
            regression: Predictor::Member(Member::Affine { intercept: 0.0, slope: vec![1.0] }),
            drift: Drift::None,
            noise: Noise::None,
            bound: 1.0,
            unbounded_response: false,
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let model = identity_model();
        let a = generate(&model, 3, 42).unwrap();
        let b = generate(&model, 3, 42).unwrap();
        assert_eq!(a, b);
        let ys = a.responses.as_ref().unwrap();
        for (x, y) in a.points.iter().zip(ys) {
            assert_eq!(x[0].to_bits(), y.to_bits());
        }
        assert_ne!(a, generate(&model, 3, 43).unwrap());
        assert_eq!(model.kind(), ModelKind::Iid);
    }

    #[test]
    fn markov_transition_frequency() {
        let model = DataModel {
            covariates: Covariates::Markov {
                states: vec![vec![0.0], vec![1.0]],
                transition: two_state_symmetric(0.9).unwrap(),
            },
            ..identity_model()
        };
        assert_eq!(model.kind(), ModelKind::MarkovChain);
        let n = 100_000;
        let sample = generate(&model, n, 7).unwrap();
        let path = state_path(&model, &sample).unwrap();
        let stays = path.windows(2).filter(|w| w[0] == w[1]).count() as f64;
        let freq = stays / (n - 1) as f64;
        // Transitions of a Markov chain are independent Bernoulli(0.9) draws.
        let se = (0.9f64 * 0.1 / (n - 1) as f64).sqrt();
        assert!((freq - 0.9).abs() < 3.0 * se, "freq = {freq}");
    }

    #[test]
    fn nonstationary_drift_means() {
        let n = 5;
        let model = DataModel {
            covariates: Covariates::Nonstationary {
                laws: vec![CovariateLaw::Uniform { lo: vec![0.0], hi: vec![1.0] }],
            },
            regression: Predictor::Member(Member::Constant { value: 0.0 }),
            drift: Drift::Linear { intercept: -0.4, slope: 0.2 },
            noise: Noise::Uniform { half_width: 0.5 },
            bound: 1.0,
            unbounded_response: false,
        };
        assert_eq!(model.kind(), ModelKind::NonstationaryIndependent);
        let reps = 10_000;
        let mut sums = vec![0.0; n];
        for r in 0..reps {
            let s = generate(&model, n, r).unwrap();
            for (acc, y) in sums.iter_mut().zip(s.responses.unwrap()) {
                *acc += y;
            }
        }
        // Var(Y_k) = 0.5^2 / 3.
        let se = (0.25f64 / 3.0 / reps as f64).sqrt();
        for (k, acc) in sums.iter().enumerate() {
            let expected = -0.4 + 0.2 * k as f64;
            assert!((acc / reps as f64 - expected).abs() < 4.0 * se, "index {k}");
        }
    }

    #[test]
    fn rejects_bad_models() {
        let mut model = identity_model();
        model.noise = Noise::Discrete { atoms: vec![0.0, 1.0], probs: vec![0.5, 0.5] };
        assert!(model.validate(3).is_err());
        let mut model = identity_model();
        model.noise = Noise::Uniform { half_width: 0.5 };
        // |Y| can exceed B = 1 without the unbounded flag.
        let err = (0..50).find_map(|s| generate(&model, 50, s).err());
        assert!(err.is_some());
        model.unbounded_response = true;
        assert!(generate(&model, 50, 0).is_ok());
        let mut model = identity_model();
        model.covariates = Covariates::Nonstationary {
            laws: vec![CovariateLaw::Uniform { lo: vec![0.0], hi: vec![1.0] }; 2],
        };
        assert!(model.validate(3).is_err());
        let mut model = identity_model();
        model.regression = Predictor::Member(Member::Values { values: vec![0.0; 3] });
        assert!(model.validate(3).is_err());
    }

    #[test]
    fn serde_roundtrip() {
        let model = identity_model();
        let json = serde_json::to_string(&model).unwrap();
        let back: DataModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
    }
}
