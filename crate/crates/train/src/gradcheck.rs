//! Central finite-difference check of the analytic gradients.

use statetrack_core::tasks::Sample;

use crate::model::TrainableModel;
use crate::trainer::batch_grad;
use crate::TrainError;

/// Gradients smaller than this in both analytic and numeric form count as
/// zero when forming the relative error.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Worst relative error over every parameter, `|a − n| / max(|a|, |n|, floor)`.
pub fn max_relative_error(model: &TrainableModel, samples: &[Sample], eps: f64) -> Result<f64, TrainError> {
    let analytic = batch_grad(model, samples)?.grad;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..model.num_params() {
        let orig = probe.params[i];
        probe.params[i] = orig + eps;
        let up = batch_grad(&probe, samples)?.loss_sum;
        probe.params[i] = orig - eps;
        let down = batch_grad(&probe, samples)?.loss_sum;
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
        worst = worst.max(err);
    }
    Ok(worst)
}
