//! Empirical risk minimization with truncated responses.
//!
//! ```text
//! g_hat in argmin_g sum_k (g(X_k) - T_B Y_k)^2
//! ```
//!
//! `enumerate` is exact over a finite candidate list, `least_squares` solves
//! the normal equations on a linear span and truncates the fit, and
//! `projected_gd` is a local heuristic for one-layer networks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::DataModel;
use super::risk::{excess_risk_exact, RiskValue};
use crate::error::{invalid, Result};
use crate::hypothesis::{clip, Activation, HypothesisClass, NetParams, ParamGrid, Powering, Predictor, SequentialSample};
use crate::rademacher::substream;

/// Ridge magnitude (relative to the mean diagonal) used when the normal
/// equations are numerically singular.
pub const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErmMethod {
    Enumerate,
    LeastSquares,
    ProjectedGd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    pub step: f64,
    pub iterations: usize,
    /// Scale of the uniform initialization of hidden weights and biases.
    pub init_scale: f64,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig { step: 1e-2, iterations: 10_000, init_scale: 1.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErmOptions {
    /// Candidate grid for `enumerate` on parametric classes.
    #[serde(default)]
    pub grid: Option<ParamGrid>,
    /// Truncation level for classes without their own `B` (finite classes).
    #[serde(default)]
    pub response_bound: Option<f64>,
    /// Seed of the gradient-descent initialization.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub gd: GdConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdDiagnostics {
    pub step: f64,
    pub iterations: usize,
    pub initial_loss: f64,
    /// Norm of the projected-gradient mapping at the final iterate; zero at a
    /// stationary point of the constrained problem.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErmResult {
    pub method: ErmMethod,
    pub minimizer: Predictor,
    /// Row of the minimizer in the candidate list (`enumerate`).
    pub index: Option<usize>,
    pub params: Option<Vec<f64>>,
    /// `(1/n) sum_k (g_hat(X_k) - T_B Y_k)^2`.
    pub empirical_loss: f64,
    pub response_bound: Option<f64>,
    pub ridge_fallback: bool,
    pub gd: Option<GdDiagnostics>,
    pub excess_risk: Option<RiskValue>,
    pub inf_risk: Option<RiskValue>,
}

impl ErmResult {
    /// Attaches the exact excess risk of the minimizer under `model`.
    pub fn with_excess_risk(mut self, model: &DataModel, n: usize) -> Result<Self> {
        self.excess_risk = Some(excess_risk_exact(&self.minimizer, model, n)?);
        Ok(self)
    }
}

fn targets(sample: &SequentialSample, bound: Option<f64>) -> Result<Vec<f64>> {
    let ys = sample
        .responses
        .as_ref()
        .ok_or_else(|| invalid("ERM needs a sample with responses"))?;
    Ok(match bound {
        Some(b) => ys.iter().map(|y| clip(*y, b)).collect(),
        None => ys.clone(),
    })
}

fn mean_loss(g: &Predictor, sample: &SequentialSample, t: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (k, (x, tk)) in sample.points.iter().zip(t).enumerate() {
        total += (g.eval(x, k)? - tk).powi(2);
    }
    Ok(total / t.len() as f64)
}

pub fn erm_fit(
    class: &HypothesisClass,
    sample: &SequentialSample,
    method: ErmMethod,
    options: &ErmOptions,
) -> Result<ErmResult> {
    class.validate()?;
    sample.validate()?;
    if let Some(i) = class.max_basis_index() {
        if i >= sample.dim() {
            return Err(invalid(format!("basis uses coordinate {i} but covariates have dimension {}", sample.dim())));
        }
    }
    let bound = class.bound().or(options.response_bound);
    if let Some(b) = bound {
        if !(b > 0.0) {
            return Err(invalid(format!("response bound {b} must be positive")));
        }
    }
    let t = targets(sample, bound)?;
    match method {
        ErmMethod::Enumerate => enumerate(class, sample, &t, options, bound),
        ErmMethod::LeastSquares => least_squares(class, sample, &t, bound),
        ErmMethod::ProjectedGd => projected_gd(class, sample, &t, options),
    }
}

fn enumerate(
    class: &HypothesisClass,
    sample: &SequentialSample,
    t: &[f64],
    options: &ErmOptions,
    bound: Option<f64>,
) -> Result<ErmResult> {
    let candidates = class.predictors(options.grid.as_ref())?;
    let losses = candidates
        .par_iter()
        .map(|g| mean_loss(g, sample, t))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (j, l) in losses.iter().enumerate() {
        if *l < losses[best] {
            best = j;
        }
    }
    let params = match (class, &options.grid) {
        (HypothesisClass::Finite { .. }, _) | (_, None) => None,
        (_, Some(grid)) => grid.points()?.get(best).cloned(),
    };
    Ok(ErmResult {
        method: ErmMethod::Enumerate,
        minimizer: candidates[best].clone(),
        index: Some(best),
        params,
        empirical_loss: losses[best],
        response_bound: bound,
        ridge_fallback: false,
        gd: None,
        excess_risk: None,
        inf_risk: None,
    })
}

fn least_squares(class: &HypothesisClass, sample: &SequentialSample, t: &[f64], bound: Option<f64>) -> Result<ErmResult> {
    let HypothesisClass::TruncatedLinear { basis, bound: b, coef_box } = class else {
        return Err(invalid("least_squares requires a truncated linear class"));
    };
    if coef_box.is_some() {
        return Err(invalid("least_squares ignores coefficient boxes; use enumerate with a grid"));
    }
    let (n, d) = (sample.len(), basis.len());
    let design = DMatrix::from_fn(n, d, |k, j| basis[j].eval(&sample.points[k]));
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * DVector::from_column_slice(t);
    let (coeffs, ridge_fallback) = match solve_spd(&gram, &rhs) {
        Some(c) => (c, false),
        None => {
            let scale = (gram.trace() / d as f64).max(1.0);
            let ridged = &gram + DMatrix::identity(d, d) * (RIDGE * scale);
            let c = solve_spd(&ridged, &rhs)
                .ok_or_else(|| invalid("normal equations stay singular after the ridge fallback"))?;
            (c, true)
        }
    };
    let coeffs: Vec<f64> = coeffs.iter().copied().collect();
    let minimizer = Predictor::Linear { basis: basis.clone(), coeffs: coeffs.clone(), bound: Some(*b) };
    Ok(ErmResult {
        method: ErmMethod::LeastSquares,
        empirical_loss: mean_loss(&minimizer, sample, t)?,
        minimizer,
        index: None,
        params: Some(coeffs),
        response_bound: bound,
        ridge_fallback,
        gd: None,
        excess_risk: None,
        inf_risk: None,
    })
}

/// Cholesky solve, refusing systems whose pivots span more than 1e14.
fn solve_spd(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = a.clone().cholesky()?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if !(lo > 0.0) || (hi / lo).powi(2) > 1e14 {
        return None;
    }
    Some(chol.solve(rhs))
}

/// Euclidean projection onto the l1 ball of radius `z` (sort-based thresholding).
pub fn project_l1_ball(v: &[f64], z: f64) -> Vec<f64> {
    if v.iter().map(|x| x.abs()).sum::<f64>() <= z {
        return v.to_vec();
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let (mut cum, mut theta) = (0.0, 0.0);
    for (j, uj) in u.iter().enumerate() {
        cum += uj;
        let candidate = (cum - z) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|x| x.signum() * (x.abs() - theta).max(0.0)).collect()
}

fn project_outputs(flat: &mut [f64], input_dim: usize, units: usize, bound: f64, mode: Powering) {
    let stride = input_dim + 2;
    let idx: Vec<usize> = std::iter::once(0).chain((0..units).map(|i| 1 + i * stride + input_dim + 1)).collect();
    match mode {
        Powering::Independent => {
            for &i in &idx {
                flat[i] = clip(flat[i], bound);
            }
        }
        Powering::Joint => {
            let outs: Vec<f64> = idx.iter().map(|&i| flat[i]).collect();
            for (&i, v) in idx.iter().zip(project_l1_ball(&outs, bound)) {
                flat[i] = v;
            }
        }
    }
}

/// Loss and gradient of `(1/n) sum_k (f(x_k) - t_k)^2` in the flat layout.
fn loss_and_grad(
    flat: &[f64],
    activation: Activation,
    input_dim: usize,
    units: usize,
    sample: &SequentialSample,
    t: &[f64],
) -> (f64, Vec<f64>) {
    let stride = input_dim + 2;
    let n = t.len() as f64;
    let mut grad = vec![0.0; flat.len()];
    let mut loss = 0.0;
    let mut pre = vec![0.0; units];
    for (x, tk) in sample.points.iter().zip(t) {
        let mut f = flat[0];
        for (i, z) in pre.iter_mut().enumerate() {
            let base = 1 + i * stride;
            *z = flat[base..base + input_dim].iter().zip(x).map(|(a, xi)| a * xi).sum::<f64>() + flat[base + input_dim];
            f += flat[base + input_dim + 1] * activation.eval(*z);
        }
        let r = f - tk;
        loss += r * r;
        let w = 2.0 * r / n;
        grad[0] += w;
        for (i, z) in pre.iter().enumerate() {
            let base = 1 + i * stride;
            let c = flat[base + input_dim + 1];
            let ds = c * activation.derivative(*z) * w;
            for (g, xi) in grad[base..base + input_dim].iter_mut().zip(x) {
                *g += ds * xi;
            }
            grad[base + input_dim] += ds;
            grad[base + input_dim + 1] += activation.eval(*z) * w;
        }
    }
    (loss / n, grad)
}

fn projected_gd(class: &HypothesisClass, sample: &SequentialSample, t: &[f64], options: &ErmOptions) -> Result<ErmResult> {
    let HypothesisClass::NeuralNet { input_dim, units, bound, activation, mode } = class else {
        return Err(invalid("projected_gd requires a neural-net class"));
    };
    let (d, nu, b) = (*input_dim, *units, *bound);
    if sample.dim() != d {
        return Err(invalid(format!("network input dimension {d} does not match covariates of dimension {}", sample.dim())));
    }
    let cfg = options.gd;
    if !(cfg.step > 0.0) || cfg.iterations == 0 {
        return Err(invalid("gradient descent needs a positive step and at least one iteration"));
    }
    let mut rng = substream(options.seed, 0);
    let stride = d + 2;
    let mut flat: Vec<f64> = (0..NetParams::flat_len(d, nu))
        .map(|i| {
            let is_output = i == 0 || (i - 1) % stride == stride - 1;
            let scale = if is_output { 0.5 * b / (nu + 1) as f64 } else { cfg.init_scale };
            scale * (2.0 * rng.random::<f64>() - 1.0)
        })
        .collect();
    let project = |v: &mut Vec<f64>| project_outputs(v, d, nu, b, *mode);
    project(&mut flat);
    let (initial_loss, _) = loss_and_grad(&flat, *activation, d, nu, sample, t);
    for _ in 0..cfg.iterations {
        let (_, grad) = loss_and_grad(&flat, *activation, d, nu, sample, t);
        for (p, g) in flat.iter_mut().zip(&grad) {
            *p -= cfg.step * g;
        }
        project(&mut flat);
    }
    let (loss, grad) = loss_and_grad(&flat, *activation, d, nu, sample, t);
    let mut stepped: Vec<f64> = flat.iter().zip(&grad).map(|(p, g)| p - cfg.step * g).collect();
    project(&mut stepped);
    let residual = flat.iter().zip(&stepped).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / cfg.step;
    let params = NetParams::from_flat(&flat, d, nu)?;
    Ok(ErmResult {
        method: ErmMethod::ProjectedGd,
        minimizer: Predictor::Net { activation: *activation, params },
        index: None,
        params: Some(flat),
        empirical_loss: loss,
        response_bound: Some(b),
        ridge_fallback: false,
        gd: Some(GdDiagnostics { step: cfg.step, iterations: cfg.iterations, initial_loss, residual }),
        excess_risk: None,
        inf_risk: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::{check_net_constraints, Basis, Member};
    use crate::simulate::model::{generate, CovariateLaw, Covariates, Drift, Noise};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn line_model(slope: f64, bound: f64) -> DataModel {
        DataModel {
            covariates: Covariates::Iid { law: CovariateLaw::Uniform { lo: vec![0.0], hi: vec![1.0] } },
            regression: Predictor::Member(Member::Affine { intercept: 0.0, slope: vec![slope] }),
            drift: Drift::None,
            noise: Noise::None,
            bound,
            unbounded_response: false,
        }
    }

    #[test]
    fn constant_class_picks_grid_point_nearest_mean() {
        let sample = SequentialSample::from_scalars(&[0.0, 1.0, 2.0], Some(vec![0.1, 0.5, 0.3])).unwrap();
        let members: Vec<Member> = (0..=10).map(|i| Member::Constant { value: i as f64 / 10.0 }).collect();
        let class = HypothesisClass::Finite { members };
        let fit = erm_fit(&class, &sample, ErmMethod::Enumerate, &ErmOptions::default()).unwrap();
        assert_eq!(fit.index, Some(3));
        assert_eq!(fit.minimizer, Predictor::Member(Member::Constant { value: 0.3 }));
        // Truncation at 0.2 moves the mean of T_B Y to 0.2.
        let opts = ErmOptions { response_bound: Some(0.2), ..Default::default() };
        let fit = erm_fit(&class, &sample, ErmMethod::Enumerate, &opts).unwrap();
        assert_eq!(fit.index, Some(2));
    }

    #[test]
    fn enumerate_breaks_ties_low() {
        let sample = SequentialSample::from_scalars(&[0.0, 1.0], Some(vec![1.0, -1.0])).unwrap();
        let class = HypothesisClass::Finite {
            members: vec![
                Member::Constant { value: 1.0 },
                Member::Constant { value: -1.0 },
                Member::Affine { intercept: 1.0, slope: vec![-2.0] },
                Member::Affine { intercept: 1.0, slope: vec![-2.0] },
            ],
        };
        let fit = erm_fit(&class, &sample, ErmMethod::Enumerate, &ErmOptions::default()).unwrap();
        assert_eq!(fit.index, Some(2));
        assert_eq!(fit.empirical_loss, 0.0);
    }

    #[test]
    fn least_squares_recovers_line() {
        let model = line_model(2.0, 10.0);
        let n = 50;
        let sample = generate(&model, n, 3).unwrap();
        let class = HypothesisClass::TruncatedLinear { basis: vec![Basis::Coordinate { index: 0 }], bound: 10.0, coef_box: None };
        let fit = erm_fit(&class, &sample, ErmMethod::LeastSquares, &ErmOptions::default())
            .unwrap()
            .with_excess_risk(&model, n)
            .unwrap();
        assert_abs_diff_eq!(fit.params.as_ref().unwrap()[0], 2.0, epsilon = 1e-12);
        assert!(!fit.ridge_fallback);
        assert!(fit.excess_risk.unwrap().value < 1e-20);
    }

    #[test]
    fn least_squares_ridge_fallback() {
        let sample = SequentialSample::from_scalars(&[0.0, 0.5, 1.0], Some(vec![0.0, 0.5, 1.0])).unwrap();
        let class = HypothesisClass::TruncatedLinear {
            basis: vec![Basis::Coordinate { index: 0 }, Basis::Coordinate { index: 0 }],
            bound: 5.0,
            coef_box: None,
        };
        let fit = erm_fit(&class, &sample, ErmMethod::LeastSquares, &ErmOptions::default()).unwrap();
        assert!(fit.ridge_fallback);
        let c = fit.params.unwrap();
        assert_abs_diff_eq!(c[0] + c[1], 1.0, epsilon = 1e-6);
        let bad = HypothesisClass::TruncatedLinear { basis: vec![Basis::Coordinate { index: 3 }], bound: 1.0, coef_box: None };
        assert!(erm_fit(&bad, &sample, ErmMethod::LeastSquares, &ErmOptions::default()).is_err());
    }

    #[test]
    fn method_class_mismatch() {
        let sample = SequentialSample::from_scalars(&[0.0], Some(vec![0.0])).unwrap();
        let finite = HypothesisClass::Finite { members: vec![Member::Constant { value: 0.0 }] };
        assert!(erm_fit(&finite, &sample, ErmMethod::LeastSquares, &ErmOptions::default()).is_err());
        assert!(erm_fit(&finite, &sample, ErmMethod::ProjectedGd, &ErmOptions::default()).is_err());
        let no_y = SequentialSample::from_scalars(&[0.0], None).unwrap();
        assert!(erm_fit(&finite, &no_y, ErmMethod::Enumerate, &ErmOptions::default()).is_err());
    }

    #[test]
    fn l1_projection() {
        assert_eq!(project_l1_ball(&[0.2, -0.3], 1.0), vec![0.2, -0.3]);
        let p = project_l1_ball(&[3.0, -1.0, 0.5], 2.0);
        assert_abs_diff_eq!(p.iter().map(|x| x.abs()).sum::<f64>(), 2.0, epsilon = 1e-12);
        // Threshold 1: (2, 0, 0).
        assert_abs_diff_eq!(p[0], 2.0, epsilon = 1e-12);
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn projected_gd_feasible_and_improves() {
        let model = DataModel {
            covariates: Covariates::Iid { law: CovariateLaw::Uniform { lo: vec![-1.0], hi: vec![1.0] } },
            regression: Predictor::Net {
                activation: Activation::Logistic,
                params: NetParams::from_flat(&[0.1, 4.0, 0.0, 0.5], 1, 1).unwrap(),
            },
            drift: Drift::None,
            noise: Noise::None,
            bound: 1.0,
            unbounded_response: false,
        };
        let sample = generate(&model, 100, 1).unwrap();
        let class = HypothesisClass::NeuralNet { input_dim: 1, units: 3, bound: 1.0, activation: Activation::Logistic, mode: Powering::Joint };
        let opts = ErmOptions { seed: 9, gd: GdConfig { iterations: 2000, ..GdConfig::default() }, ..Default::default() };
        let fit = erm_fit(&class, &sample, ErmMethod::ProjectedGd, &opts).unwrap();
        let gd = fit.gd.unwrap();
        assert!(fit.empirical_loss < gd.initial_loss);
        assert!(gd.residual.is_finite());
        let Predictor::Net { params, .. } = &fit.minimizer else { panic!() };
        check_net_constraints(params, 1.0, Powering::Joint).unwrap();
        // Deterministic given the seed.
        assert_eq!(fit, erm_fit(&class, &sample, ErmMethod::ProjectedGd, &opts).unwrap());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let sample = SequentialSample::new(
            vec![vec![0.1, -0.4], vec![0.7, 0.2], vec![-0.5, 0.9]],
            Some(vec![0.3, -0.2, 0.8]),
        )
        .unwrap();
        let t = sample.responses.clone().unwrap();
        let flat = vec![0.1, 0.5, -0.3, 0.2, 0.4, -1.0, 0.8, 0.1, -0.2];
        let (_, grad) = loss_and_grad(&flat, Activation::Logistic, 2, 2, &sample, &t);
        for i in 0..flat.len() {
            let h = 1e-6;
            let mut up = flat.clone();
            up[i] += h;
            let mut dn = flat.clone();
            dn[i] -= h;
            let fd = (loss_and_grad(&up, Activation::Logistic, 2, 2, &sample, &t).0
                - loss_and_grad(&dn, Activation::Logistic, 2, 2, &sample, &t).0)
                / (2.0 * h);
            assert_abs_diff_eq!(grad[i], fd, epsilon = 1e-8);
        }
    }

    proptest! {
        #[test]
        fn enumerate_is_minimal(values in prop::collection::vec(-2.0f64..2.0, 1..8), ys in prop::collection::vec(-3.0f64..3.0, 4)) {
            let sample = SequentialSample::from_scalars(&[0.0, 1.0, 2.0, 3.0], Some(ys)).unwrap();
            let class = HypothesisClass::Finite { members: values.iter().map(|v| Member::Constant { value: *v }).collect() };
            let opts = ErmOptions { response_bound: Some(2.0), ..Default::default() };
            let fit = erm_fit(&class, &sample, ErmMethod::Enumerate, &opts).unwrap();
            let t = targets(&sample, Some(2.0)).unwrap();
            for g in class.predictors(None).unwrap() {
                prop_assert!(fit.empirical_loss <= mean_loss(&g, &sample, &t).unwrap());
            }
        }

        #[test]
        fn least_squares_is_span_minimal(seed in 0u64..1000, dc in -0.1f64..0.1, ds in -0.1f64..0.1) {
            let model = DataModel { noise: Noise::Uniform { half_width: 0.3 }, ..line_model(0.5, 2.0) };
            let sample = generate(&model, 30, seed).unwrap();
            let basis = vec![Basis::Constant, Basis::Coordinate { index: 0 }];
            let class = HypothesisClass::TruncatedLinear { basis: basis.clone(), bound: 2.0, coef_box: None };
            let fit = erm_fit(&class, &sample, ErmMethod::LeastSquares, &ErmOptions::default()).unwrap();
            let c = fit.params.unwrap();
            let t = targets(&sample, Some(2.0)).unwrap();
            let span_loss = |c0: f64, c1: f64| {
                let g = Predictor::Linear { basis: basis.clone(), coeffs: vec![c0, c1], bound: None };
                mean_loss(&g, &sample, &t).unwrap()
            };
            let best = span_loss(c[0], c[1]);
            prop_assert!(best <= span_loss(c[0] + dc, c[1] + ds) * (1.0 + 1e-8));
            // Truncating the fit never increases the loss against truncated targets.
            prop_assert!(fit.empirical_loss <= best * (1.0 + 1e-12));
        }
    }
}
