use serde::{Deserialize, Serialize};

use super::ComparatorError;
use crate::types::Tensor;

/// Fraction of positions whose binary labels differ.
pub fn binary_diff_rate(reference: &[u8], test: &[u8]) -> Result<f64, ComparatorError> {
    if reference.len() != test.len() {
        return Err(ComparatorError::LengthMismatch {
            reference: reference.len(),
            test: test.len(),
        });
    }
    if reference.is_empty() {
        return Ok(0.0);
    }
    let differing = reference.iter().zip(test).filter(|(a, b)| a != b).count();
    Ok(differing as f64 / reference.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorComparison {
    pub equal: bool,
    pub max_abs_diff: f64,
    pub diverged: bool,
    pub shape_mismatch: bool,
}

/// Element `a` of the reference and `b` of the test agree iff
/// `|a - b| <= abs_tol + rel_tol * |b|`.
pub fn tensor_compare(
    reference: &Tensor,
    test: &Tensor,
    abs_tol: f64,
    rel_tol: f64,
) -> TensorComparison {
    if reference.shape != test.shape || reference.data.len() != test.data.len() {
        return TensorComparison {
            equal: false,
            max_abs_diff: f64::INFINITY,
            diverged: true,
            shape_mismatch: true,
        };
    }
    let mut max_abs_diff = 0.0f64;
    let mut diverged = false;
    for (&a, &b) in reference.data.iter().zip(&test.data) {
        let diff = (a - b).abs();
        // NaN on either side never satisfies the bound, unless both are NaN.
        let within = diff <= abs_tol + rel_tol * b.abs() || (a.is_nan() && b.is_nan());
        if !within {
            diverged = true;
        }
        if diff.is_nan() {
            if !(a.is_nan() && b.is_nan()) {
                max_abs_diff = f64::INFINITY;
            }
        } else {
            max_abs_diff = max_abs_diff.max(diff);
        }
    }
    TensorComparison {
        equal: !diverged,
        max_abs_diff,
        diverged,
        shape_mismatch: false,
    }
}
