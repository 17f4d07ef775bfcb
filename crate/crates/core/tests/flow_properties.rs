//! Trajectory invariants of the KKT flow on default-size (10×20) random instances.

use std::f64::consts::FRAC_PI_2;

use lasso_flow::flow::{kkt_residual, FlowParams, FlowState};
use lasso_flow::harness::analysis::{norm_law_deviation, ray_drift};
use lasso_flow::harness::{gen_instance, run_flow, RunSettings};
use lasso_flow::integrate::{integrate_flow, uniform_samples, Trajectory};
use lasso_flow::oracle::solve_prox;
use lasso_flow::{build_nnqp, NnqpProblem};
use nalgebra::DVector;
use rayon::prelude::*;

fn standard_instance(seed: u64) -> (NnqpProblem, DVector<f64>) {
    let p = gen_instance(10, 20, 1.0, 0.1, seed).unwrap();
    let x = solve_prox(&p, 1e-10, 1_000_000).unwrap();
    assert!(x.converged);
    (build_nnqp(&p), x.x)
}

fn integrate(nnqp: &NnqpProblem, t_p: f64, scale: f64, tol: f64) -> Trajectory {
    let params = FlowParams::from_settling_time(t_p).unwrap().with_tolerances(tol, tol);
    let init = FlowState::uniform(nnqp.dim(), scale).unwrap();
    integrate_flow(nnqp, &init, &params, &uniform_samples(t_p, 200)).unwrap()
}

fn check_trajectory_invariants(traj: &Trajectory, t_p: f64, tol: f64) {
    let times: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
    assert_eq!(times[0], 0.0);
    assert_eq!(*times.last().unwrap(), t_p);
    assert!(times.windows(2).all(|w| w[0] < w[1]));
    let slack = 10.0 * tol;
    for w in traj.samples.windows(2) {
        assert!(w[1].residual_norm <= w[0].residual_norm + slack, "{} -> {}", w[0].residual_norm, w[1].residual_norm);
    }
}

#[test]
fn default_start_reaches_the_oracle_by_the_prescribed_time() {
    let (nnqp, x_star) = standard_instance(0);
    for t_p in [1.0, 0.1] {
        let traj = integrate(&nnqp, t_p, 1.0, 1e-8);
        check_trajectory_invariants(&traj, t_p, 1e-8);
        assert!(traj.settle_time.unwrap() <= t_p);
        assert!((&traj.final_sample().x - &x_star).norm() <= 1e-6);
    }
}

#[test]
fn nonnegativity_on_one_hundred_instances() {
    let worst = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let (nnqp, _) = standard_instance(1000 + seed);
            let traj = integrate(&nnqp, 1.0, 1.0, 1e-8);
            traj.min_z().min(traj.min_w())
        })
        .reduce(|| f64::INFINITY, f64::min);
    assert!(worst >= -1e-9, "min entry {worst}");
}

#[test]
fn settle_time_tracks_the_initial_residual() {
    let k = FRAC_PI_2;
    for seed in 0..4 {
        let (nnqp, _) = standard_instance(200 + seed);
        let mut previous = 0.0;
        for i in 1..=6 {
            let scale = i as f64;
            let traj = integrate(&nnqp, 1.0, scale, 1e-8);
            let r0 = kkt_residual(&nnqp, &FlowState::uniform(nnqp.dim(), scale).unwrap()).unwrap().norm;
            let ts = traj.settle_time.expect("settles");
            assert!(ts <= 1.0);
            assert!((ts - r0.atan() / k).abs() <= 1e-4, "seed {seed} i {i}: {ts} vs {}", r0.atan() / k);
            // ‖u(0)‖ grows with the scale on these instances
            assert!(ts > previous);
            previous = ts;
        }
    }
}

#[test]
fn norm_law_and_ray_hold_before_settling() {
    for seed in 0..5 {
        let (nnqp, _) = standard_instance(300 + seed);
        let traj = integrate(&nnqp, 0.5, 2.0, 1e-8);
        let k = FRAC_PI_2 / 0.5;
        // 10·max(rtol, atol)·(1 + arctan‖u(0)‖)
        let r0 = traj.samples[0].residual_norm;
        assert!(norm_law_deviation(&traj, k, 1e-10) <= 10.0 * 1e-8 * (1.0 + r0.atan()));
        assert!(ray_drift(&nnqp, &traj, 1e-10).unwrap() <= 1e-6);
    }
}

#[test]
fn halving_tolerances_tightens_the_norm_law() {
    let (nnqp, x_star) = standard_instance(7);
    let dev = |tol: f64| {
        let settings = RunSettings {
            rtol: tol,
            atol: tol,
            ..RunSettings::default()
        };
        run_flow(&nnqp, &x_star, 1.0, 1.0, &settings).unwrap().1.norm_law_deviation
    };
    let coarse = dev(1e-8);
    let fine = dev(5e-9);
    println!("norm-law deviation {coarse:e} -> {fine:e}, ratio {}", coarse / fine);
    assert!(coarse / fine >= 1.5);
}

#[test]
fn identical_inputs_give_bit_identical_trajectories() {
    let (nnqp, _) = standard_instance(11);
    let a = integrate(&nnqp, 0.6, 1.0, 1e-8);
    let b = integrate(&nnqp, 0.6, 1.0, 1e-8);
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.stats, b.stats);
}
