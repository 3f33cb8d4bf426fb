//! Central finite-difference verification of analytic gradients.

use super::params::Parameterized;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_block: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compare `analytic` against central differences of `loss` around `params`, coordinate
/// by coordinate, over every parameter block.
pub fn grad_check<P, F>(params: &P, analytic: &P, epsilon: f64, mut loss: F) -> Result<GradCheckReport>
where
    P: Parameterized + Clone,
    F: FnMut(&P) -> Result<f64>,
{
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let shape: Vec<(String, usize)> = params
        .blocks()
        .iter()
        .map(|b| (b.name.clone(), b.data.len()))
        .collect();
    let analytic_blocks: Vec<Vec<f64>> = analytic.blocks().iter().map(|b| b.data.to_vec()).collect();
    if analytic_blocks.len() != shape.len() {
        return Err(Error::Shape {
            context: "grad_check block count".into(),
            expected: shape.len(),
            actual: analytic_blocks.len(),
        });
    }

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_block: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    for (b, (name, len)) in shape.iter().enumerate() {
        for k in 0..*len {
            let original = probe.blocks()[b].data[k];
            probe.blocks_mut()[b].data[k] = original + epsilon;
            let plus = loss(&probe)?;
            probe.blocks_mut()[b].data[k] = original - epsilon;
            let minus = loss(&probe)?;
            probe.blocks_mut()[b].data[k] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFiniteLoss(format!("probing {name}[{k}]")));
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic_blocks[b][k];
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_block = name.clone();
                report.worst_index = k;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Slice form for plain functions of a vector.
pub fn grad_check_slice<F>(x: &[f64], analytic: &[f64], epsilon: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    if x.len() != analytic.len() {
        return Err(Error::Shape {
            context: "grad_check_slice".into(),
            expected: x.len(),
            actual: analytic.len(),
        });
    }
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for k in 0..x.len() {
        probe[k] = x[k] + epsilon;
        let plus = f(&probe);
        probe[k] = x[k] - epsilon;
        let minus = f(&probe);
        probe[k] = x[k];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFiniteLoss(format!("probing coordinate {k}")));
        }
        worst = worst.max(relative_error(analytic[k], (plus - minus) / (2.0 * epsilon)));
    }
    Ok(worst)
}
