use super::{Model, ParamVector, Target};
use crate::error::{Error, Result};

/// Largest relative disagreement between the analytic gradient and a central
/// finite difference, over every parameter of every stage.
///
/// The relative error of one entry is
/// `|analytic - numeric| / max(1e-12, |analytic| + |numeric|)`.
pub fn grad_check(model: &Model, input: &[f64], target: &Target, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    let base = model.weights();
    let (_, analytic) = model.loss_and_grad(input, target, &base)?;

    let mut probe: Vec<ParamVector> = base.clone();
    let mut worst = 0.0f64;
    for s in 0..base.len() {
        for i in 0..base[s].len() {
            let orig = base[s][i];
            probe[s].as_mut_slice()[i] = orig + epsilon;
            let plus = model.forward(input, target, &probe)?.loss;
            probe[s].as_mut_slice()[i] = orig - epsilon;
            let minus = model.forward(input, target, &probe)?.loss;
            probe[s].as_mut_slice()[i] = orig;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[s][i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
