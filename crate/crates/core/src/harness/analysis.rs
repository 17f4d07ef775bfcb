//! Trajectory diagnostics compared against the closed-form residual law.

use nalgebra::DVector;

use crate::error::Result;
use crate::flow::{kkt_residual, FlowState};
use crate::integrate::{Sample, Trajectory};
use crate::problem::NnqpProblem;

/// Samples strictly before the settle event with a residual above `eps_stop`.
pub fn presettle_samples<'a>(traj: &'a Trajectory, eps_stop: f64) -> impl Iterator<Item = &'a Sample> + 'a {
    let settle = traj.settle_time.unwrap_or(f64::INFINITY);
    traj.samples.iter().filter(move |s| s.t < settle && s.residual_norm > eps_stop)
}

/// `max |arctan r(t) − (arctan r(0) − k t)|` over the samples before settling.
pub fn norm_law_deviation(traj: &Trajectory, k: f64, eps_stop: f64) -> f64 {
    let r0 = traj.samples[0].residual_norm;
    presettle_samples(traj, eps_stop)
        .map(|s| (s.residual_norm.atan() - (r0.atan() - k * s.t)).abs())
        .fold(0.0, f64::max)
}

/// Angle between two nonzero vectors, accurate for small angles.
pub fn angle_between(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let ua = a / a.norm();
    let ub = b / b.norm();
    2.0 * ((&ua - &ub).norm() / 2.0).min(1.0).asin()
}

/// Largest angle between the residual direction and its initial direction,
/// over the samples before settling.
pub fn ray_drift(nnqp: &NnqpProblem, traj: &Trajectory, eps_stop: f64) -> Result<f64> {
    let residual = |s: &Sample| -> Result<DVector<f64>> {
        let state = FlowState {
            z: s.z.clone(),
            w: s.w.clone(),
            t: s.t,
        };
        Ok(kkt_residual(nnqp, &state)?.stacked())
    };
    let u0 = residual(&traj.samples[0])?;
    let mut worst = 0.0_f64;
    for s in presettle_samples(traj, eps_stop) {
        worst = worst.max(angle_between(&u0, &residual(s)?));
    }
    Ok(worst)
}

/// `‖x(t) − x*‖₂` at every sample.
pub fn error_curve(traj: &Trajectory, x_star: &DVector<f64>) -> Vec<f64> {
    traj.samples.iter().map(|s| (&s.x - x_star).norm()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn angle_examples() {
        let a = DVector::from_vec(vec![1.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 3.0]);
        assert!((angle_between(&a, &b) - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(angle_between(&a, &(&a * 5.0)), 0.0);
        let tiny = DVector::from_vec(vec![1.0, 1e-9]);
        assert!((angle_between(&a, &tiny) - 1e-9).abs() < 1e-20);
    }
}
