//! Proof-side functionals of a finite family at a realized sample.
//!
//! ```text
//! w_h(z) = u . (E h(Z') - h(z))
//! w(z)   = max_h w_h(z)
//! k_h(z) = min { k in 0..=n : w_h(z) <= k w(z) / n }
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hypothesis::FunctionTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofFunctionals {
    pub w_h: Vec<f64>,
    pub k_h: Vec<usize>,
    pub w: f64,
}

/// `values` holds `h_j(z_k)`, `expectations` holds `E h_j(Z_k)`, both `m x n`.
pub fn proof_functionals(values: &FunctionTable, expectations: &FunctionTable, u: &[f64]) -> Result<ProofFunctionals> {
    let (m, n) = (values.m(), values.n());
    if expectations.m() != m || expectations.n() != n || u.len() != n {
        return Err(invalid(format!(
            "shape mismatch: values {m}x{n}, expectations {}x{}, signs {}",
            expectations.m(),
            expectations.n(),
            u.len()
        )));
    }
    let w_h: Vec<f64> = (0..m)
        .map(|j| {
            u.iter()
                .zip(expectations.row(j).iter().zip(values.row(j)))
                .map(|(s, (e, v))| s * (e - v))
                .sum()
        })
        .collect();
    let w = w_h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let k_h = w_h
        .iter()
        .map(|&wh| {
            if wh <= 0.0 {
                return 0;
            }
            // w >= wh > 0 since w is the maximum.
            debug_assert!(w > 0.0);
            // Compared as n w_h <= k w to keep the maximizing row at k = n.
            let nf = n as f64;
            let mut k = ((nf * wh / w).ceil() as usize).min(n);
            while k > 0 && nf * wh <= (k - 1) as f64 * w {
                k -= 1;
            }
            while nf * wh > k as f64 * w && k < n {
                k += 1;
            }
            k
        })
        .collect();
    Ok(ProofFunctionals { w_h, k_h, w })
}
