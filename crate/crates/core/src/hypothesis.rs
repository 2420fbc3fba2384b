//! Hypothesis classes, the truncation operator and finite function tables.
//!
//! Parametric classes (truncated linear spans, one-layer networks) are
//! materialized on a sample through an explicit finite parameter grid. The
//! resulting [`FunctionTable`] is a finite surrogate of the class: its size is
//! the approximation knob, and nothing here claims exactness for the
//! underlying continuous family.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// The truncation operator `T_B y = min(max(y, -B), B)`.
pub fn truncate(y: f64, bound: f64) -> Result<f64> {
    if bound > 0.0 && !bound.is_nan() {
        Ok(clip(y, bound))
    } else {
        Err(Error::Domain(format!("truncation level B = {bound} must be positive")))
    }
}

#[inline]
pub(crate) fn clip(y: f64, bound: f64) -> f64 {
    y.max(-bound).min(bound)
}

/// Activation of a one-layer network; must be a distribution function `R -> [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Logistic,
    Step,
}

impl Activation {
    #[inline]
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Activation::Logistic => 1.0 / (1.0 + (-t).exp()),
            Activation::Step => {
                if t >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative, used by gradient-based fitting. The step function is
    /// treated as having zero derivative everywhere.
    #[inline]
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Activation::Logistic => {
                let s = self.eval(t);
                s * (1.0 - s)
            }
            Activation::Step => 0.0,
        }
    }
}

/// How output weights of a network are constrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Powering {
    /// Each `|c_k| <= B` for `k = 0..=N`.
    Independent,
    /// `|c_0| + ... + |c_N| <= B` (lasso-regularized network).
    Joint,
}

/// A basis function of a linear span on `R^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Basis {
    Constant,
    Coordinate { index: usize },
    Power { index: usize, exponent: i32 },
}

impl Basis {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Basis::Constant => 1.0,
            Basis::Coordinate { index } => x[index],
            Basis::Power { index, exponent } => x[index].powi(exponent),
        }
    }

    fn max_index(&self) -> Option<usize> {
        match *self {
            Basis::Constant => None,
            Basis::Coordinate { index } | Basis::Power { index, .. } => Some(index),
        }
    }
}

/// An explicit member of a finite class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Member {
    Constant { value: f64 },
    Affine { intercept: f64, slope: Vec<f64> },
    /// A function on a finite set of covariate points.
    Lookup { points: Vec<Vec<f64>>, values: Vec<f64> },
    /// A sequential function given only through its values at the sample indices.
    Values { values: Vec<f64> },
}

/// Output-layer and hidden-unit parameters of a one-layer network
/// `g(x) = c_0 + sum_k c_k sigma(a_k . x + b_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub c0: f64,
    pub units: Vec<NetUnit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetUnit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub scale: f64,
}

impl NetParams {
    /// Number of scalars in the flat layout `[c0, (a_1, b_1, c_1), ..., (a_N, b_N, c_N)]`.
    pub fn flat_len(input_dim: usize, units: usize) -> usize {
        1 + units * (input_dim + 2)
    }

    pub fn from_flat(flat: &[f64], input_dim: usize, units: usize) -> Result<Self> {
        let expected = Self::flat_len(input_dim, units);
        if flat.len() != expected {
            return Err(invalid(format!(
                "network parameter vector has length {}, expected {expected} (1 + N(dim + 2))",
                flat.len()
            )));
        }
        let units = flat[1..]
            .chunks(input_dim + 2)
            .map(|chunk| NetUnit {
                weights: chunk[..input_dim].to_vec(),
                bias: chunk[input_dim],
                scale: chunk[input_dim + 1],
            })
            .collect();
        Ok(NetParams { c0: flat[0], units })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = vec![self.c0];
        for u in &self.units {
            out.extend_from_slice(&u.weights);
            out.push(u.bias);
            out.push(u.scale);
        }
        out
    }

    /// `|c_0| + sum_k |c_k|`.
    pub fn output_l1(&self) -> f64 {
        self.c0.abs() + self.units.iter().map(|u| u.scale.abs()).sum::<f64>()
    }

    pub fn eval(&self, activation: Activation, x: &[f64]) -> f64 {
        self.c0
            + self
                .units
                .iter()
                .map(|u| {
                    let t: f64 = u.weights.iter().zip(x).map(|(a, xi)| a * xi).sum::<f64>() + u.bias;
                    u.scale * activation.eval(t)
                })
                .sum::<f64>()
    }
}

/// Descriptor of a hypothesis class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HypothesisClass {
    Finite {
        members: Vec<Member>,
    },
    /// `T_B` applied to the span of `basis`; coefficients optionally restricted
    /// to the box `[-coef_box, coef_box]^d`.
    TruncatedLinear {
        basis: Vec<Basis>,
        bound: f64,
        #[serde(default)]
        coef_box: Option<f64>,
    },
    NeuralNet {
        input_dim: usize,
        units: usize,
        bound: f64,
        #[serde(default)]
        activation: Activation,
        mode: Powering,
    },
}

impl HypothesisClass {
    pub fn validate(&self) -> Result<()> {
        match self {
            HypothesisClass::Finite { members } => {
                if members.is_empty() {
                    return Err(invalid("finite class has no members"));
                }
                for (i, m) in members.iter().enumerate() {
                    if let Member::Lookup { points, values } = m {
                        if points.len() != values.len() {
                            return Err(invalid(format!(
                                "lookup member {i}: {} points but {} values",
                                points.len(),
                                values.len()
                            )));
                        }
                    }
                }
                Ok(())
            }
            HypothesisClass::TruncatedLinear { basis, bound, coef_box } => {
                check_bound(*bound)?;
                if basis.is_empty() {
                    return Err(invalid("truncated linear class needs at least one basis function"));
                }
                if let Some(b) = coef_box {
                    if !(*b > 0.0) {
                        return Err(invalid(format!("coefficient box {b} must be positive")));
                    }
                }
                Ok(())
            }
            HypothesisClass::NeuralNet { input_dim, units, bound, .. } => {
                check_bound(*bound)?;
                if *input_dim == 0 || *units == 0 {
                    return Err(invalid("neural net needs input_dim >= 1 and units >= 1"));
                }
                Ok(())
            }
        }
    }

    /// Truncation or power level `B`, when the class has one.
    pub fn bound(&self) -> Option<f64> {
        match self {
            HypothesisClass::Finite { .. } => None,
            HypothesisClass::TruncatedLinear { bound, .. } | HypothesisClass::NeuralNet { bound, .. } => {
                Some(*bound)
            }
        }
    }

    /// Builds the concrete function attached to one grid point (ignored for finite classes).
    pub fn predictor(&self, point: &[f64]) -> Result<Predictor> {
        match self {
            HypothesisClass::Finite { .. } => Err(invalid("finite classes have no parameter grid")),
            HypothesisClass::TruncatedLinear { basis, bound, coef_box } => {
                if point.len() != basis.len() {
                    return Err(invalid(format!(
                        "grid point {point:?} has {} coordinates, span dimension is {}",
                        point.len(),
                        basis.len()
                    )));
                }
                if let Some(b) = coef_box {
                    if let Some(c) = point.iter().find(|c| c.abs() > *b) {
                        return Err(invalid(format!(
                            "grid point {point:?} rejected: coefficient {c} outside the box [-{b}, {b}]"
                        )));
                    }
                }
                Ok(Predictor::Linear {
                    basis: basis.clone(),
                    coeffs: point.to_vec(),
                    bound: Some(*bound),
                })
            }
            HypothesisClass::NeuralNet { input_dim, units, bound, activation, mode } => {
                let params = NetParams::from_flat(point, *input_dim, *units)?;
                check_net_constraints(&params, *bound, *mode)?;
                Ok(Predictor::Net { activation: *activation, params })
            }
        }
    }

    /// All members (finite class) or all grid predictors (parametric class).
    pub fn predictors(&self, grid: Option<&ParamGrid>) -> Result<Vec<Predictor>> {
        self.validate()?;
        match self {
            HypothesisClass::Finite { members } => {
                Ok(members.iter().cloned().map(Predictor::Member).collect())
            }
            _ => {
                let grid = grid.ok_or_else(|| invalid("parametric class requires a parameter grid"))?;
                let points = grid.points()?;
                if points.is_empty() {
                    return Err(Error::Domain("parameter grid is empty".into()));
                }
                points.iter().map(|p| self.predictor(p)).collect()
            }
        }
    }
}

fn check_bound(bound: f64) -> Result<()> {
    if bound > 0.0 && bound.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("class bound B = {bound} must be positive")))
    }
}

pub(crate) fn check_net_constraints(params: &NetParams, bound: f64, mode: Powering) -> Result<()> {
    const SLACK: f64 = 1e-12;
    match mode {
        Powering::Joint => {
            let l1 = params.output_l1();
            if l1 > bound * (1.0 + SLACK) {
                return Err(invalid(format!(
                    "jointly powered network rejected: |c_0:N|_1 = {l1} exceeds B = {bound}"
                )));
            }
        }
        Powering::Independent => {
            let worst = std::iter::once(params.c0)
                .chain(params.units.iter().map(|u| u.scale))
                .map(f64::abs)
                .fold(0.0, f64::max);
            if worst > bound * (1.0 + SLACK) {
                return Err(invalid(format!(
                    "independently powered network rejected: max |c_k| = {worst} exceeds B = {bound}"
                )));
            }
        }
    }
    Ok(())
}

/// A concrete function `x -> g(x)`, evaluated at covariate `x` and sample index `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predictor {
    Member(Member),
    Linear {
        basis: Vec<Basis>,
        coeffs: Vec<f64>,
        /// Truncation applied to the output, if any.
        bound: Option<f64>,
    },
    Net {
        activation: Activation,
        params: NetParams,
    },
}

impl Predictor {
    pub fn eval(&self, x: &[f64], index: usize) -> Result<f64> {
        match self {
            Predictor::Member(member) => match member {
                Member::Constant { value } => Ok(*value),
                Member::Affine { intercept, slope } => {
                    if slope.len() != x.len() {
                        return Err(invalid(format!(
                            "affine member has {} slopes, covariate has dimension {}",
                            slope.len(),
                            x.len()
                        )));
                    }
                    Ok(intercept + slope.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
                }
                Member::Lookup { points, values } => points
                    .iter()
                    .position(|p| p.as_slice() == x)
                    .map(|i| values[i])
                    .ok_or_else(|| invalid(format!("lookup member is undefined at {x:?}"))),
                Member::Values { values } => values.get(index).copied().ok_or_else(|| {
                    invalid(format!("value-table member has no entry for sample index {index}"))
                }),
            },
            Predictor::Linear { basis, coeffs, bound } => {
                let raw: f64 = basis.iter().zip(coeffs).map(|(phi, c)| c * phi.eval(x)).sum();
                Ok(match bound {
                    Some(b) => clip(raw, *b),
                    None => raw,
                })
            }
            Predictor::Net { activation, params } => Ok(params.eval(*activation, x)),
        }
    }

    /// Whether the function depends on the covariate only (not on the sample index).
    pub fn is_pointwise(&self) -> bool {
        !matches!(self, Predictor::Member(Member::Values { .. }))
    }
}

/// Finite parameter grid used to discretize parametric classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamGrid {
    Explicit { points: Vec<Vec<f64>> },
    /// Cartesian product of per-coordinate value lists.
    Product { axes: Vec<Vec<f64>> },
    /// `steps` equispaced values per coordinate on `[lo, hi]^dim`.
    Box { dim: usize, lo: f64, hi: f64, steps: usize },
}

impl ParamGrid {
    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        match self {
            ParamGrid::Explicit { points } => Ok(points.clone()),
            ParamGrid::Product { axes } => Ok(cartesian(axes)),
            ParamGrid::Box { dim, lo, hi, steps } => {
                if *steps == 0 || *dim == 0 {
                    return Ok(Vec::new());
                }
                if !(lo <= hi) {
                    return Err(invalid(format!("box grid has lo = {lo} > hi = {hi}")));
                }
                let axis: Vec<f64> = if *steps == 1 {
                    vec![0.5 * (lo + hi)]
                } else {
                    (0..*steps)
                        .map(|i| lo + (hi - lo) * i as f64 / (*steps - 1) as f64)
                        .collect()
                };
                Ok(cartesian(&vec![axis; *dim]))
            }
        }
    }
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if axes.is_empty() || axes.iter().any(Vec::is_empty) {
        return Vec::new();
    }
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Covariates `x_1..x_n` (and optional responses) of a sequential sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialSample {
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub responses: Option<Vec<f64>>,
}

impl SequentialSample {
    pub fn new(points: Vec<Vec<f64>>, responses: Option<Vec<f64>>) -> Result<Self> {
        let sample = SequentialSample { points, responses };
        sample.validate()?;
        Ok(sample)
    }

    /// Scalar covariates.
    pub fn from_scalars(xs: &[f64], responses: Option<Vec<f64>>) -> Result<Self> {
        Self::new(xs.iter().map(|x| vec![*x]).collect(), responses)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.points.first() else {
            return Err(invalid("sample must contain at least one point"));
        };
        let dim = first.len();
        if let Some(k) = self.points.iter().position(|p| p.len() != dim) {
            return Err(invalid(format!(
                "covariate {k} has dimension {}, expected {dim}",
                self.points[k].len()
            )));
        }
        if let Some(ys) = &self.responses {
            if ys.len() != self.points.len() {
                return Err(invalid(format!(
                    "{} responses for {} covariates",
                    ys.len(),
                    self.points.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }
}

/// Values `h_j(z_k)` of a finite family on a sample, with the envelope
/// `H_k = max_j |h_j(z_k)|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionTable {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    envelope: Vec<f64>,
}

impl FunctionTable {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Domain("function table needs at least one row".into()));
        };
        let cols = first.len();
        if cols == 0 {
            return Err(Error::Domain("function table needs at least one column".into()));
        }
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(invalid(format!("row {j} has {} entries, expected {cols}", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(invalid(format!("row {j} contains a non-finite value {v}")));
            }
            values.extend_from_slice(row);
        }
        Ok(Self::from_flat(rows.len(), cols, values))
    }

    fn from_flat(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        let mut envelope = vec![0.0f64; cols];
        for row in values.chunks(cols) {
            for (e, v) in envelope.iter_mut().zip(row) {
                *e = e.max(v.abs());
            }
        }
        FunctionTable { rows, cols, values, envelope }
    }

    /// Number of functions `m`.
    pub fn m(&self) -> usize {
        self.rows
    }

    /// Number of sample points `n`.
    pub fn n(&self) -> usize {
        self.cols
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.cols..(j + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks(self.cols)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn envelope(&self) -> &[f64] {
        &self.envelope
    }

    /// `|H(z)|_{n,2}`.
    pub fn envelope_l2(&self) -> f64 {
        self.envelope.iter().map(|h| h * h).sum::<f64>().sqrt()
    }

    /// The direct sum `{a + b : a in self, b in other}`.
    pub fn direct_sum(&self, other: &FunctionTable) -> Result<FunctionTable> {
        self.check_cols(other)?;
        let mut values = Vec::with_capacity(self.rows * other.rows * self.cols);
        for a in self.rows() {
            for b in other.rows() {
                values.extend(a.iter().zip(b).map(|(x, y)| x + y));
            }
        }
        Ok(Self::from_flat(self.rows * other.rows, self.cols, values))
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn union(&self, other: &FunctionTable) -> Result<FunctionTable> {
        self.check_cols(other)?;
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(Self::from_flat(self.rows + other.rows, self.cols, values))
    }

    pub fn negated(&self) -> FunctionTable {
        Self::from_flat(self.rows, self.cols, self.values.iter().map(|v| -v).collect())
    }

    /// Rows of `self` together with their negatives (generators of the balanced hull).
    pub fn balanced(&self) -> FunctionTable {
        self.union(&self.negated()).expect("same column count")
    }

    fn check_cols(&self, other: &FunctionTable) -> Result<()> {
        if self.cols != other.cols {
            return Err(invalid(format!(
                "tables have different sample sizes ({} vs {})",
                self.cols, other.cols
            )));
        }
        Ok(())
    }

    /// Writes the table as CSV, one row per function and one column per sample point.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        let header: Vec<String> = (1..=self.cols).map(|k| format!("z{k}")).collect();
        w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
        for row in self.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

/// Materializes a class on a sample: rows are members or grid points, columns are sample points.
pub fn evaluate_class(
    class: &HypothesisClass,
    sample: &SequentialSample,
    grid: Option<&ParamGrid>,
) -> Result<FunctionTable> {
    sample.validate()?;
    let predictors = class.predictors(grid)?;
    predictor_table(&predictors, sample)
}

pub(crate) fn predictor_table(predictors: &[Predictor], sample: &SequentialSample) -> Result<FunctionTable> {
    let rows = predictors
        .iter()
        .map(|p| {
            sample
                .points
                .iter()
                .enumerate()
                .map(|(k, x)| p.eval(x, k))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    FunctionTable::from_rows(rows)
}

/// Upper bound `d + 1` on the VC dimension of a truncated linear span of dimension `d`.
/// `None` when no bound is available for the class.
pub fn vc_dimension_bound(class: &HypothesisClass) -> Option<usize> {
    match class {
        HypothesisClass::TruncatedLinear { basis, .. } => Some(basis.len() + 1),
        _ => None,
    }
}

impl HypothesisClass {
    pub(crate) fn max_basis_index(&self) -> Option<usize> {
        match self {
            HypothesisClass::TruncatedLinear { basis, .. } => basis.iter().filter_map(Basis::max_index).max(),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(coeffs: &[f64]) -> ParamGrid {
        ParamGrid::Explicit { points: coeffs.iter().map(|c| vec![*c]).collect() }
    }

    #[test]
    fn truncate_examples() {
        assert_eq!(truncate(0.5, 1.0).unwrap(), 0.5);
        assert_eq!(truncate(3.0, 1.0).unwrap(), 1.0);
        assert_eq!(truncate(-3.0, 1.0).unwrap(), -1.0);
        assert!(truncate(1.0, 0.0).is_err());
        assert!(truncate(1.0, -2.0).is_err());
    }

    proptest! {
        #[test]
        fn truncate_idempotent_and_monotone(y in -1e6f64..1e6, dy in 0f64..1e3, b in 1e-3f64..1e3) {
            let t = truncate(y, b).unwrap();
            prop_assert_eq!(truncate(t, b).unwrap(), t);
            prop_assert!(truncate(y, b).unwrap() <= truncate(y + dy, b).unwrap());
            prop_assert!(t.abs() <= b);
        }
    }

    #[test]
    fn zero_member_table() {
        let class = HypothesisClass::Finite { members: vec![Member::Constant { value: 0.0 }] };
        let sample = SequentialSample::from_scalars(&[0.1, 0.2, 0.3], None).unwrap();
        let t = evaluate_class(&class, &sample, None).unwrap();
        assert_eq!(t.to_rows(), vec![vec![0.0; 3]]);
        assert_eq!(t.envelope(), &[0.0; 3]);
    }

    #[test]
    fn constant_pair_table() {
        let class = HypothesisClass::Finite {
            members: vec![Member::Constant { value: 1.0 }, Member::Constant { value: -1.0 }],
        };
        let sample = SequentialSample::from_scalars(&[3.0, 4.0], None).unwrap();
        let t = evaluate_class(&class, &sample, None).unwrap();
        assert_eq!(t.to_rows(), vec![vec![1.0, 1.0], vec![-1.0, -1.0]]);
        assert_eq!(t.envelope(), &[1.0, 1.0]);
    }

    #[test]
    fn truncated_line_table() {
        let class = HypothesisClass::TruncatedLinear {
            basis: vec![Basis::Coordinate { index: 0 }],
            bound: 1.0,
            coef_box: None,
        };
        let sample = SequentialSample::from_scalars(&[0.5, 2.0], None).unwrap();
        let t = evaluate_class(&class, &sample, Some(&line(&[-1.0, 0.0, 1.0]))).unwrap();
        assert_eq!(t.to_rows(), vec![vec![-0.5, -1.0], vec![0.0, 0.0], vec![0.5, 1.0]]);
    }

    #[test]
    fn empty_grid_and_box_violation_rejected() {
        let class = HypothesisClass::TruncatedLinear {
            basis: vec![Basis::Coordinate { index: 0 }],
            bound: 1.0,
            coef_box: Some(2.0),
        };
        let sample = SequentialSample::from_scalars(&[0.5], None).unwrap();
        let empty = ParamGrid::Explicit { points: vec![] };
        assert!(matches!(evaluate_class(&class, &sample, Some(&empty)), Err(Error::Domain(_))));
        let err = evaluate_class(&class, &sample, Some(&line(&[3.0]))).unwrap_err();
        assert!(err.to_string().contains("outside the box"), "{err}");
    }

    #[test]
    fn joint_network_constraint_rejected() {
        let class = HypothesisClass::NeuralNet {
            input_dim: 1,
            units: 1,
            bound: 1.0,
            activation: Activation::Logistic,
            mode: Powering::Joint,
        };
        let sample = SequentialSample::from_scalars(&[0.0], None).unwrap();
        // c0 = 0.6, a = 1, b = 0, c1 = 0.6 -> l1 = 1.2 > 1
        let grid = ParamGrid::Explicit { points: vec![vec![0.6, 1.0, 0.0, 0.6]] };
        let err = evaluate_class(&class, &sample, Some(&grid)).unwrap_err();
        assert!(err.to_string().contains("jointly powered"), "{err}");
        let indep = HypothesisClass::NeuralNet {
            input_dim: 1,
            units: 1,
            bound: 1.0,
            activation: Activation::Logistic,
            mode: Powering::Independent,
        };
        assert!(evaluate_class(&indep, &sample, Some(&grid)).is_ok());
    }

    #[test]
    fn truncated_outputs_stay_in_box() {
        let class = HypothesisClass::TruncatedLinear {
            basis: vec![Basis::Constant, Basis::Coordinate { index: 0 }],
            bound: 0.7,
            coef_box: None,
        };
        let xs: Vec<f64> = (0..20).map(|i| -3.0 + 0.3 * i as f64).collect();
        let sample = SequentialSample::from_scalars(&xs, None).unwrap();
        let grid = ParamGrid::Box { dim: 2, lo: -4.0, hi: 4.0, steps: 9 };
        let t = evaluate_class(&class, &sample, Some(&grid)).unwrap();
        assert_eq!(t.m(), 81);
        assert!(t.rows().flatten().all(|v| v.abs() <= 0.7));
    }

    #[test]
    fn joint_network_rows_bounded() {
        let bound = 1.5;
        let class = HypothesisClass::NeuralNet {
            input_dim: 1,
            units: 2,
            bound,
            activation: Activation::Logistic,
            mode: Powering::Joint,
        };
        let xs: Vec<f64> = (0..15).map(|i| -2.0 + 0.3 * i as f64).collect();
        let sample = SequentialSample::from_scalars(&xs, None).unwrap();
        let c = [-0.5, 0.0, 0.5];
        let mut points = Vec::new();
        for &c0 in &c {
            for &c1 in &c {
                for &c2 in &c {
                    for &a in &[-3.0, 2.0] {
                        points.push(vec![c0, a, 0.1, c1, -a, 0.3, c2]);
                    }
                }
            }
        }
        let grid = ParamGrid::Explicit { points: points.clone() };
        let t = evaluate_class(&class, &sample, Some(&grid)).unwrap();
        for (row, p) in t.rows().zip(&points) {
            let l1 = p[0].abs() + p[3].abs() + p[6].abs();
            for v in row {
                assert!(v.abs() <= l1 + 1e-12);
                assert!(v.abs() <= 2.0 * bound);
            }
        }
    }

    proptest! {
        #[test]
        fn envelope_is_columnwise_max(rows in prop::collection::vec(prop::collection::vec(-5f64..5.0, 4), 1..6)) {
            let t = FunctionTable::from_rows(rows.clone()).unwrap();
            for k in 0..4 {
                let expected = rows.iter().map(|r| r[k].abs()).fold(0.0, f64::max);
                prop_assert_eq!(t.envelope()[k], expected);
            }
        }
    }

    #[test]
    fn vc_bounds() {
        let linear = |d: usize| HypothesisClass::TruncatedLinear {
            basis: (0..d).map(|i| Basis::Power { index: 0, exponent: i as i32 }).collect(),
            bound: 1.0,
            coef_box: None,
        };
        assert_eq!(vc_dimension_bound(&linear(1)), Some(2));
        assert_eq!(vc_dimension_bound(&linear(10)), Some(11));
        let net = HypothesisClass::NeuralNet {
            input_dim: 1,
            units: 3,
            bound: 1.0,
            activation: Activation::Logistic,
            mode: Powering::Joint,
        };
        assert_eq!(vc_dimension_bound(&net), None);
    }

    #[test]
    fn descriptor_json_round_trip() {
        let class = HypothesisClass::NeuralNet {
            input_dim: 2,
            units: 5,
            bound: 1.0,
            activation: Activation::Logistic,
            mode: Powering::Independent,
        };
        let json = serde_json::to_string(&class).unwrap();
        assert!(json.contains("\"kind\":\"neural_net\""));
        let back: HypothesisClass = serde_json::from_str(&json).unwrap();
        assert_eq!(back, class);
        let parsed: HypothesisClass = serde_json::from_str(
            r#"{"kind":"truncated_linear","basis":[{"type":"constant"},{"type":"coordinate","index":0}],"bound":2.0}"#,
        )
        .unwrap();
        assert_eq!(vc_dimension_bound(&parsed), Some(3));
    }

    #[test]
    fn csv_export() {
        let t = FunctionTable::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.5]]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "z1,z2\n1,0\n0,1.5\n");
    }

    #[test]
    fn sample_validation() {
        assert!(SequentialSample::new(vec![], None).is_err());
        assert!(SequentialSample::new(vec![vec![1.0], vec![1.0, 2.0]], None).is_err());
        assert!(SequentialSample::new(vec![vec![1.0]], Some(vec![1.0, 2.0])).is_err());
    }
}
