//! Finite-difference verification of the analytic gradients.

use serde::Serialize;

use crate::mat::Mat;
use crate::model::{Example, Model, ModelError};

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub entries_checked: usize,
    /// Parameter name and entry index of the largest relative error.
    pub worst: Option<(String, usize)>,
}

/// Denominator floor: entries whose gradients are both below this size are
/// compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;

fn total_loss(model: &Model, examples: &[Example]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for ex in examples {
        total += model.forward(ex, None)?.loss_value().expect("loss recorded");
    }
    Ok(total)
}

/// Analytic gradients of the summed loss over `examples`, without dropout.
pub fn analytic_gradients(model: &Model, examples: &[Example]) -> Result<Vec<Mat>, ModelError> {
    let mut sum: Vec<Mat> = model.params.mats.iter().map(|m| Mat::zeros(m.rows, m.cols)).collect();
    for ex in examples {
        for (acc, g) in sum.iter_mut().zip(model.forward(ex, None)?.gradients()) {
            if let Some(g) = g {
                acc.add_assign(&g);
            }
        }
    }
    Ok(sum)
}

/// Compares every gradient entry against a central difference with step `h`.
pub fn grad_check(model: &Model, examples: &[Example], h: f64) -> Result<GradCheckReport, ModelError> {
    let analytic = analytic_gradients(model, examples)?;
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        entries_checked: 0,
        worst: None,
    };
    for p in 0..probe.params.len() {
        for i in 0..probe.params.mats[p].data.len() {
            let orig = probe.params.mats[p].data[i];
            probe.params.mats[p].data[i] = orig + h;
            let up = total_loss(&probe, examples)?;
            probe.params.mats[p].data[i] = orig - h;
            let down = total_loss(&probe, examples)?;
            probe.params.mats[p].data[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[p].data[i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.entries_checked += 1;
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((probe.params.names[p].clone(), i));
            }
        }
    }
    Ok(report)
}
