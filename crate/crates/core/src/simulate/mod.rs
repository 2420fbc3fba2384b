//! Simulation harness: data models with known ground truth, empirical risk
//! minimization, exact population risks, enumeration oracles on discrete
//! product spaces and seeded coverage experiments.

pub mod coverage;
pub mod erm;
pub mod exact;
pub mod functionals;
pub mod model;
pub mod risk;

pub use coverage::{coverage_experiment, CoverageConfig, CoverageReport, Experiment, TrialRecord};
pub use erm::{erm_fit, ErmMethod, ErmOptions, ErmResult, GdConfig};
pub use exact::{Atom, DiscreteFamily};
pub use functionals::{proof_functionals, ProofFunctionals};
pub use model::{generate, CovariateLaw, Covariates, DataModel, Drift, ModelKind, Noise};
pub use risk::{excess_risk_exact, RiskMethod, RiskValue};
