//! Reference systems used throughout the docs and tests.

use crate::model::{GrowthFamily, SystemSpec};

/// May-Leonard competition: `B = [[1, a, b], [b, 1, a], [a, b, 1]]`, `c = (1, 1, 1)`.
pub fn may_leonard(alpha: f64, beta: f64, family: GrowthFamily) -> SystemSpec {
    SystemSpec::from_rows(
        &[
            vec![1.0, alpha, beta],
            vec![beta, 1.0, alpha],
            vec![alpha, beta, 1.0],
        ],
        &[1.0, 1.0, 1.0],
        family,
    )
    .expect("May-Leonard parameters must be positive")
}

/// Symmetric three-species competition with unit diagonal and `0.5` off it.
pub fn symmetric_half(family: GrowthFamily) -> SystemSpec {
    uniform_competition(0.5, family)
}

/// Unit diagonal, `off` everywhere else, `c = (1, 1, 1)`.
pub fn uniform_competition(off: f64, family: GrowthFamily) -> SystemSpec {
    SystemSpec::from_rows(
        &[vec![1.0, off, off], vec![off, 1.0, off], vec![off, off, 1.0]],
        &[1.0, 1.0, 1.0],
        family,
    )
    .expect("competition strength must be positive")
}

/// One-species logistic growth `x' = x (c - b x)` (or its analogue for `family`).
pub fn logistic(b: f64, c: f64, family: GrowthFamily) -> SystemSpec {
    SystemSpec::from_rows(&[vec![b]], &[c], family).expect("logistic parameters must be positive")
}
