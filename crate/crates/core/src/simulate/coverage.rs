//! Seeded coverage experiments for the confidence bounds.
//!
//! Each trial draws a sample, fits the empirical risk minimizer, evaluates
//! the realized population quantity exactly and compares it with the bound.
//!
//! ```text
//! rademacher_ci            sum_k E[h_hat,k - h_tilde,k]      vs 2 (env sqrt(2 log(2/delta)) + r_ave)
//! bounded_class_ci         (1/n) sum_k ||g_hat - phi_k||^2   vs (6l - 5) inf + remainder
//! blocked_deviation_bound  max_j sum_k (h_j(X_k) - E h_j)    vs m t,  sum_blocks F(t, |J|) = delta/2
//! nn_generalization_ci     excess - inf                      vs B^2/sqrt(n)(...)  (reported only)
//! ```
//!
//! Trial `t` uses the seed `ChaCha8(base_seed, stream t).next_u64()`, so a
//! report is a pure function of its configuration.

use std::collections::BTreeMap;
use std::io::Write;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::erm::{erm_fit, ErmMethod, ErmOptions, GdConfig};
use super::exact::loss_family;
use super::model::{generate, state_path, CovariateLaw, Covariates, DataModel, Drift, ModelKind, Noise};
use super::risk::{excess_risk_exact, inf_risk};
use crate::bounds_rademacher::{nn_generalization_ci, rademacher_ci, RademacherCIInputs};
use crate::bounds_vc::{a_factor, bounded_class_ci, epsilon_n, radius_a, BoundParams};
use crate::covering::vc_entropy;
use crate::error::{check_delta, invalid, Error, Result};
use crate::hypothesis::{Activation, Basis, HypothesisClass, Member, NetParams, ParamGrid, Powering, Predictor};
use crate::mixing::{blocked_deviation_bound, block_indices, markov_beta_of_lag, stationary_distribution};
use crate::rademacher::substream;

pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "formula", rename_all = "snake_case")]
pub enum Experiment {
    /// Finite class, discrete model; complexity and envelope computed exactly.
    RademacherCi {
        model: DataModel,
        class: HypothesisClass,
        response_bound: f64,
        #[serde(default)]
        nonnegative_family: bool,
    },
    /// Truncated linear class on a finite coefficient grid.
    BoundedClassCi {
        model: DataModel,
        class: HypothesisClass,
        grid: ParamGrid,
        c: f64,
        lambda: f64,
    },
    /// Sup-deviation of a finite class along a stationary Markov chain.
    BlockedDeviationBound { model: DataModel, class: HypothesisClass },
    /// Network trained by projected gradient descent; not a hard gate.
    NnGeneralizationCi {
        model: DataModel,
        class: HypothesisClass,
        /// Minimal excess risk over the class; 0 when the truth is a member.
        #[serde(default)]
        inf_risk: f64,
        #[serde(default)]
        gd: GdConfig,
    },
}

impl Experiment {
    pub fn formula(&self) -> &'static str {
        match self {
            Experiment::RademacherCi { .. } => "rademacher_ci",
            Experiment::BoundedClassCi { .. } => "bounded_class_ci",
            Experiment::BlockedDeviationBound { .. } => "blocked_deviation_bound",
            Experiment::NnGeneralizationCi { .. } => "nn_generalization_ci",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub n: usize,
    pub delta: f64,
    pub trials: usize,
    pub base_seed: u64,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    /// The realized quantity the bound controls.
    pub realized: f64,
    pub bound: f64,
    pub failed: bool,
    /// Optimization residual, for heuristic fits.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub formula: String,
    pub reported_only: bool,
    pub n: usize,
    pub trials: usize,
    pub failures: usize,
    pub delta: f64,
    pub empirical_coverage: f64,
    /// `sqrt(delta (1 - delta) / trials)`, the standard error of the failure
    /// frequency at the nominal rate.
    pub binomial_se: f64,
    pub base_seed: u64,
    /// Quantities shared by all trials (complexities, block counts, ...).
    pub parameters: BTreeMap<String, f64>,
    pub records: Vec<TrialRecord>,
}

impl CoverageReport {
    /// `empirical_coverage >= 1 - delta - 3 se`.
    pub fn passes(&self) -> bool {
        self.empirical_coverage >= 1.0 - self.delta - 3.0 * self.binomial_se
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

pub fn trial_seed(base_seed: u64, trial: usize) -> u64 {
    substream(base_seed, trial as u64).next_u64()
}

fn run_trials(
    config: &CoverageConfig,
    trial: impl Fn(u64) -> Result<(f64, f64, Option<f64>)> + Sync,
) -> Result<Vec<TrialRecord>> {
    let outcomes: Vec<Result<TrialRecord>> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(config.base_seed, t);
            let (realized, bound, residual) =
                trial(seed).map_err(|e| Error::Trial { trial: t, seed, source: Box::new(e) })?;
            Ok(TrialRecord { trial: t, seed, realized, bound, failed: realized > bound, residual })
        })
        .collect();
    // Sequential collection reports the lowest failing trial.
    outcomes.into_iter().collect()
}

pub fn coverage_experiment(config: &CoverageConfig) -> Result<CoverageReport> {
    if config.trials < MIN_TRIALS {
        return Err(invalid(format!("trials = {} is below the minimum of {MIN_TRIALS}", config.trials)));
    }
    check_delta(config.delta)?;
    let n = config.n;
    let mut parameters = BTreeMap::new();
    let records = match &config.experiment {
        Experiment::RademacherCi { model, class, response_bound, nonnegative_family } => {
            require_independent(model)?;
            let HypothesisClass::Finite { .. } = class else {
                return Err(invalid("rademacher_ci coverage needs a finite class"));
            };
            let candidates = class.predictors(None)?;
            let family = loss_family(&candidates, model, n, *response_bound)?;
            let env = family.envelope_sup();
            let rad = family.average_rademacher()?;
            let bound = rademacher_ci(&RademacherCIInputs {
                n,
                envelope_l2_sup: env,
                rad,
                delta: config.delta,
                nonnegative_family: *nonnegative_family,
            })?;
            let risks: Vec<f64> = family.expectations().iter().map(|row| row.iter().sum()).collect();
            let best = risks.iter().copied().fold(f64::INFINITY, f64::min);
            parameters.insert("envelope_l2_sup".into(), env);
            parameters.insert("rad_ave".into(), rad);
            parameters.insert("bound".into(), bound);
            parameters.insert("inf_summed_risk".into(), best);
            let opts = ErmOptions { response_bound: Some(*response_bound), ..Default::default() };
            run_trials(config, |seed| {
                let sample = generate(model, n, seed)?;
                let fit = erm_fit(class, &sample, ErmMethod::Enumerate, &opts)?;
                let j = fit.index.expect("enumerate reports an index");
                Ok((risks[j] - best, bound, None))
            })?
        }
        Experiment::BoundedClassCi { model, class, grid, c, lambda } => {
            require_independent(model)?;
            let HypothesisClass::TruncatedLinear { basis, bound: b, .. } = class else {
                return Err(invalid("bounded_class_ci coverage needs a truncated linear class"));
            };
            if (b - model.bound).abs() > 0.0 {
                return Err(invalid(format!("class bound {b} differs from the model's B = {}", model.bound)));
            }
            let candidates = class.predictors(Some(grid))?;
            let params = BoundParams::new(n, *b, config.delta, *c, *lambda)?;
            let eps = epsilon_n(&params)?;
            let r = radius_a(&params, eps)?;
            let log_grid = (candidates.len() as f64).ln();
            let entropy = vc_entropy(basis.len() + 1, *b, r).map_or(log_grid, |l| l.min(log_grid));
            let log_a = a_factor(*c).ln() + entropy;
            let (inf_index, inf) = inf_risk(&candidates, model, n)?;
            let bound = bounded_class_ci(&params, inf.value, log_a)?;
            parameters.insert("epsilon_n".into(), eps);
            parameters.insert("radius_a".into(), r);
            parameters.insert("log_a".into(), log_a);
            parameters.insert("inf_risk".into(), inf.value);
            parameters.insert("inf_risk_error".into(), inf.error);
            parameters.insert("inf_index".into(), inf_index as f64);
            parameters.insert("grid_size".into(), candidates.len() as f64);
            parameters.insert("bound".into(), bound);
            let opts = ErmOptions { grid: Some(grid.clone()), ..Default::default() };
            run_trials(config, |seed| {
                let sample = generate(model, n, seed)?;
                let fit = erm_fit(class, &sample, ErmMethod::Enumerate, &opts)?;
                let excess = excess_risk_exact(&fit.minimizer, model, n)?;
                Ok((excess.value, bound, None))
            })?
        }
        Experiment::BlockedDeviationBound { model, class } => {
            let plan = markov_plan(model, class, n, config.delta)?;
            parameters.insert("m".into(), plan.m as f64);
            parameters.insert("beta_m".into(), plan.beta_m);
            parameters.insert("t".into(), plan.t);
            parameters.insert("threshold".into(), plan.threshold);
            parameters.insert("bound".into(), plan.probability);
            run_trials(config, |seed| {
                let sample = generate(model, n, seed)?;
                let path = state_path(model, &sample)?;
                let dev = plan
                    .centred
                    .iter()
                    .map(|h| path.iter().map(|&s| h[s]).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max);
                Ok((dev, plan.threshold, None))
            })?
        }
        Experiment::NnGeneralizationCi { model, class, inf_risk, gd } => {
            require_independent(model)?;
            let HypothesisClass::NeuralNet { input_dim, bound: b, .. } = class else {
                return Err(invalid("nn_generalization_ci coverage needs a neural-net class"));
            };
            let bound = nn_generalization_ci(n, *input_dim, *b, config.delta, false)?;
            parameters.insert("bound".into(), bound);
            parameters.insert("inf_risk".into(), *inf_risk);
            run_trials(config, |seed| {
                let sample = generate(model, n, seed)?;
                let opts = ErmOptions { seed, gd: *gd, ..Default::default() };
                let fit = erm_fit(class, &sample, ErmMethod::ProjectedGd, &opts)?;
                let excess = excess_risk_exact(&fit.minimizer, model, n)?;
                Ok((excess.value - inf_risk, bound, fit.gd.map(|g| g.residual)))
            })?
        }
    };
    let failures = records.iter().filter(|r| r.failed).count();
    let trials = records.len();
    Ok(CoverageReport {
        formula: config.experiment.formula().into(),
        reported_only: matches!(config.experiment, Experiment::NnGeneralizationCi { .. }),
        n,
        trials,
        failures,
        delta: config.delta,
        empirical_coverage: 1.0 - failures as f64 / trials as f64,
        binomial_se: (config.delta * (1.0 - config.delta) / trials as f64).sqrt(),
        base_seed: config.base_seed,
        parameters,
        records,
    })
}

fn require_independent(model: &DataModel) -> Result<()> {
    if model.kind() == ModelKind::MarkovChain {
        Err(invalid("this bound assumes independent observations; use blocked_deviation_bound for chains"))
    } else {
        Ok(())
    }
}

/// Blocking plan for a finite class on a stationary chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovPlan {
    pub m: usize,
    pub beta_m: f64,
    /// Per-block level `t`; the bound controls `P(sup dev > m t)`.
    pub t: f64,
    pub threshold: f64,
    /// `sum_k F(t, |J_k|) + n beta(m)`, at most `delta`.
    pub probability: f64,
    /// `h_j(state) - E_pi h_j`, one row per member.
    pub centred: Vec<Vec<f64>>,
}

/// Chooses the smallest `m` with `n beta(m) <= delta/2` and the level `t` with
/// `sum_k F(t, |J_{m,k}|) = delta/2`, where `F(t, s) = min(1, M exp(-2 t^2 / (s R^2)))`
/// is the union-Hoeffding tail of `M` members with ranges at most `R` on
/// independent blocks.
pub fn markov_plan(model: &DataModel, class: &HypothesisClass, n: usize, delta: f64) -> Result<MarkovPlan> {
    model.validate(n)?;
    check_delta(delta)?;
    let Covariates::Markov { states, transition } = &model.covariates else {
        return Err(invalid("blocked deviation coverage needs a Markov model"));
    };
    let HypothesisClass::Finite { .. } = class else {
        return Err(invalid("blocked deviation coverage needs a finite class"));
    };
    let pi = stationary_distribution(transition)?;
    let members = class.predictors(None)?;
    let centred = members
        .iter()
        .map(|h| {
            let vals = states.iter().map(|s| h.eval(s, 0)).collect::<Result<Vec<f64>>>()?;
            let mean: f64 = vals.iter().zip(&pi).map(|(v, p)| v * p).sum();
            Ok(vals.iter().map(|v| v - mean).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let range = centred
        .iter()
        .map(|row| {
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .fold(0.0f64, f64::max);
    let mut m = 1;
    let mut beta_m = markov_beta_of_lag(transition, &pi, m)?;
    while n as f64 * beta_m > delta / 2.0 {
        m += 1;
        if m > n {
            return Err(invalid(format!("no block count m <= n = {n} makes n beta(m) <= delta/2")));
        }
        beta_m = markov_beta_of_lag(transition, &pi, m)?;
    }
    let count = members.len() as f64;
    let tail = |t: f64, s: usize| -> f64 {
        if range == 0.0 {
            return if t > 0.0 { 0.0 } else { 1.0 };
        }
        (count * (-2.0 * t * t / (s as f64 * range * range)).exp()).min(1.0)
    };
    let sizes: Vec<usize> = block_indices(n, m)?.iter().map(Vec::len).collect();
    let total = |t: f64| sizes.iter().map(|&s| tail(t, s)).sum::<f64>();
    let target = delta / 2.0;
    let (mut lo, mut hi) = (0.0, range.max(1.0));
    while total(hi) > target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = hi;
    let blocked = blocked_deviation_bound(tail, t, n, m, beta_m)?;
    Ok(MarkovPlan { m, beta_m, t, threshold: m as f64 * t, probability: blocked.raw, centred })
}

/// Ready-made configurations used by the acceptance suite and the CLI.
pub mod presets {
    use super::*;
    use crate::mixing::two_state_symmetric;

    pub const NAMES: [&str; 5] =
        ["rademacher_iid", "rademacher_nonstationary", "bounded_class", "markov_blocked", "neural_net"];

    pub fn by_name(name: &str) -> Option<CoverageConfig> {
        Some(match name {
            "rademacher_iid" => rademacher_iid(),
            "rademacher_nonstationary" => rademacher_nonstationary(),
            "bounded_class" => bounded_class(),
            "markov_blocked" => markov_blocked(),
            "neural_net" => neural_net(),
            _ => return None,
        })
    }

    fn affine(intercept: f64, slope: f64) -> Member {
        Member::Affine { intercept, slope: vec![slope] }
    }

    fn finite_members() -> Vec<Member> {
        vec![
            Member::Constant { value: -0.2 },
            Member::Constant { value: 0.2 },
            Member::Constant { value: 0.6 },
            affine(0.2, 0.5),
            affine(0.0, 1.0),
            affine(0.4, 0.0),
            affine(0.1, 0.7),
            affine(0.5, -0.4),
        ]
    }

    /// Eight functions, three-point covariate, Rademacher noise, n = 10.
    pub fn rademacher_iid() -> CoverageConfig {
        CoverageConfig {
            n: 10,
            delta: 0.1,
            trials: 500,
            base_seed: 20_240_101,
            experiment: Experiment::RademacherCi {
                model: DataModel {
                    covariates: Covariates::Iid {
                        law: CovariateLaw::Discrete {
                            points: vec![vec![0.0], vec![0.5], vec![1.0]],
                            probs: vec![0.3, 0.4, 0.3],
                        },
                    },
                    regression: Predictor::Member(affine(0.2, 0.5)),
                    drift: Drift::None,
                    noise: Noise::Rademacher { scale: 0.3 },
                    bound: 1.0,
                    unbounded_response: false,
                },
                class: HypothesisClass::Finite { members: finite_members() },
                response_bound: 1.0,
                nonnegative_family: false,
            },
        }
    }

    /// Per-index covariate laws and a drifting mean, n = 8.
    pub fn rademacher_nonstationary() -> CoverageConfig {
        let n = 8;
        let laws = (0..n)
            .map(|k| {
                let p = 0.2 + 0.6 * k as f64 / (n - 1) as f64;
                CovariateLaw::Discrete { points: vec![vec![0.0], vec![1.0]], probs: vec![1.0 - p, p] }
            })
            .collect();
        CoverageConfig {
            n,
            delta: 0.1,
            trials: 500,
            base_seed: 20_240_102,
            experiment: Experiment::RademacherCi {
                model: DataModel {
                    covariates: Covariates::Nonstationary { laws },
                    regression: Predictor::Member(affine(0.1, 0.4)),
                    drift: Drift::Linear { intercept: -0.1, slope: 0.03 },
                    noise: Noise::Rademacher { scale: 0.2 },
                    bound: 1.0,
                    unbounded_response: false,
                },
                class: HypothesisClass::Finite { members: finite_members()[..6].to_vec() },
                response_bound: 1.0,
                nonnegative_family: false,
            },
        }
    }

    /// `T_1 span{1, x}` on a 41 x 41 coefficient grid, n = 2000, at the optimized constants.
    pub fn bounded_class() -> CoverageConfig {
        CoverageConfig {
            n: 2000,
            delta: 0.1,
            trials: 300,
            base_seed: 20_240_103,
            experiment: Experiment::BoundedClassCi {
                model: DataModel {
                    covariates: Covariates::Iid { law: CovariateLaw::Uniform { lo: vec![0.0], hi: vec![1.0] } },
                    regression: Predictor::Member(affine(0.3, 0.4)),
                    drift: Drift::None,
                    noise: Noise::Uniform { half_width: 0.3 },
                    bound: 1.0,
                    unbounded_response: false,
                },
                class: HypothesisClass::TruncatedLinear {
                    basis: vec![Basis::Constant, Basis::Coordinate { index: 0 }],
                    bound: 1.0,
                    coef_box: None,
                },
                grid: ParamGrid::Box { dim: 2, lo: -1.0, hi: 1.0, steps: 41 },
                c: 11.462,
                lambda: 1.2934,
            },
        }
    }

    /// Symmetric two-state chain with stay probability 0.9, n = 200.
    pub fn markov_blocked() -> CoverageConfig {
        CoverageConfig {
            n: 200,
            delta: 0.1,
            trials: 2000,
            base_seed: 20_240_104,
            experiment: Experiment::BlockedDeviationBound {
                model: DataModel {
                    covariates: Covariates::Markov {
                        states: vec![vec![0.0], vec![1.0]],
                        transition: two_state_symmetric(0.9).expect("valid stay probability"),
                    },
                    regression: Predictor::Member(Member::Constant { value: 0.0 }),
                    drift: Drift::None,
                    noise: Noise::None,
                    bound: 1.0,
                    unbounded_response: false,
                },
                class: HypothesisClass::Finite {
                    members: vec![affine(0.0, 1.0), affine(1.0, -1.0), affine(0.0, 0.5), Member::Constant { value: 0.3 }],
                },
            },
        }
    }

    /// One-unit logistic truth fitted by a three-unit lasso network, n = 200.
    pub fn neural_net() -> CoverageConfig {
        let truth = NetParams::from_flat(&[0.1, 4.0, 0.0, 0.5], 1, 1).expect("valid layout");
        CoverageConfig {
            n: 200,
            delta: 0.1,
            trials: 100,
            base_seed: 20_240_105,
            experiment: Experiment::NnGeneralizationCi {
                model: DataModel {
                    covariates: Covariates::Iid { law: CovariateLaw::Uniform { lo: vec![-1.0], hi: vec![1.0] } },
                    regression: Predictor::Net { activation: Activation::Logistic, params: truth },
                    drift: Drift::None,
                    noise: Noise::Uniform { half_width: 0.3 },
                    bound: 1.0,
                    unbounded_response: false,
                },
                class: HypothesisClass::NeuralNet {
                    input_dim: 1,
                    units: 3,
                    bound: 1.0,
                    activation: Activation::Logistic,
                    mode: Powering::Joint,
                },
                inf_risk: 0.0,
                gd: GdConfig::default(),
            },
        }
    }
}
