//! Nonasymptotic generalization bounds for sequential function families.
//!
//! The crate covers four layers:
//!
//! - [`rademacher`] and [`covering`]: empirical complexities of a finite
//!   family evaluated on a sample ([`FunctionTable`]).
//! - [`bounds_rademacher`] and [`bounds_vc`]: closed-form confidence bounds
//!   built from those complexities, including the explicit constants for
//!   truncated least squares.
//! - [`mixing`]: blocking corrections for beta-mixing data.
//! - [`simulate`]: data models with known ground truth, ERM, exact risks and
//!   seeded coverage experiments that check the bounds empirically.
//!
//! Rademacher complexities are unnormalized throughout:
//!
//! ```text
//! r(H, z) = E_U sup_h sum_k U_k h_k(z_k)
//! ```

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds_rademacher;
pub mod bounds_vc;
pub mod covering;
pub mod error;
pub mod hypothesis;
pub mod mixing;
pub mod rademacher;
pub mod simulate;

pub use bounds_vc::BoundParams;
pub use covering::{CoveringResult, EntropyEstimate, EntropyKind, EntropyTag};
pub use error::{Error, Result};
pub use hypothesis::{FunctionTable, HypothesisClass, ParamGrid, Predictor, SequentialSample};
pub use rademacher::{EstimateMode, RademacherEstimate};
