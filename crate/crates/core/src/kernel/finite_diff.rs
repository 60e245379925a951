use super::params::ParameterVector;
use crate::error::{contract, numeric, Result};

/// Central-difference estimate of ∇f at `x`: `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(contract(format!("finite-difference step must be positive, got {step}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let plus = f(&probe);
        probe[i] = x[i] - step;
        let minus = f(&probe);
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(numeric(format!("loss is not finite around coordinate {i}")));
        }
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

/// Finite-difference gradient of a loss over a parameter vector, returned
/// in the same layout. The usual step is `1e-5`.
pub fn finite_difference_gradient(
    loss_fn: impl Fn(&ParameterVector) -> f64,
    params: &ParameterVector,
    step: f64,
) -> Result<ParameterVector> {
    let mut probe = params.clone();
    let grad = central_difference(
        |x| {
            probe.values_mut().copy_from_slice(x);
            loss_fn(&probe)
        },
        params.values(),
        step,
    );
    grad.map(|g| ParameterVector::new(params.layout().to_vec(), g).expect("same layout"))
}

/// Elementwise comparison of two gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub max_abs_diff: f64,
    pub max_rel_diff: f64,
    /// Absolute difference per coordinate.
    pub per_parameter_diffs: Vec<f64>,
    /// Relative difference per coordinate, `|a - b| / max(|a|, |b|, floor)`.
    pub per_parameter_rel_diffs: Vec<f64>,
}

pub fn compare_gradients(analytic: &[f64], numeric: &[f64], abs_floor: f64) -> GradientReport {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let per_parameter_diffs: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| (a - b).abs()).collect();
    let per_parameter_rel_diffs: Vec<f64> = analytic
        .iter()
        .zip(numeric)
        .zip(&per_parameter_diffs)
        .map(|((a, b), d)| d / a.abs().max(b.abs()).max(abs_floor))
        .collect();
    GradientReport {
        max_abs_diff: per_parameter_diffs.iter().copied().fold(0.0, f64::max),
        max_rel_diff: per_parameter_rel_diffs.iter().copied().fold(0.0, f64::max),
        per_parameter_diffs,
        per_parameter_rel_diffs,
    }
}
