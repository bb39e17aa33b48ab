//! Empirical solver behavior on small pencils: squared-norm relaxation of
//! the whitened iterate against its closed-form prediction, convergence of
//! the norm to 1, phase classification along a run, and the monotone decay
//! of the error under small additive noise.

use nalgebra::{DMatrix, DVector};
use sgha_core::diffusion::{check_commutative, norm_ode_prediction, phase_classifier, Phase};
use sgha_core::harness::build_setting;
use sgha_core::matrix::random_orthogonal;
use sgha_core::oracle::{OracleKind, OracleSpec};
use sgha_core::seeding;
use sgha_core::sgha::{run, run_from, SghaConfig, SghaState};
use sgha_core::GevProblem;

type Mat = DMatrix<f64>;

fn commutative_pencil(mu: &[f64], beta: &[f64], seed: u64) -> (GevProblem, Mat) {
    let d = mu.len();
    let mut rng = seeding::rng(seed, seeding::TAG_PROBLEM, 0);
    let o = random_orthogonal(d, &mut rng);
    let lam: Vec<f64> = mu.iter().zip(beta).map(|(&m, &b)| m * b).collect();
    let a = &o * Mat::from_diagonal(&DVector::from_vec(lam)) * o.transpose();
    let b = &o * Mat::from_diagonal(&DVector::from_column_slice(mu)) * o.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let b = (&b + b.transpose()) * 0.5;
    (GevProblem::new(a, b, 1).unwrap(), o)
}

#[test]
fn squared_norm_tracks_logistic_relaxation() {
    let mu = [1.0, 1.25, 0.8, 1.1, 0.95];
    let beta = [1.0, 0.5, 0.4, 0.3, 0.2];
    let (p, _) = commutative_pencil(&mu, &beta, 21);
    let spec = check_commutative(p.a(), p.b(), 1e-10).unwrap().unwrap();
    let truth = p.ground_truth().unwrap();
    let sa = OracleSpec::new(OracleKind::Exact, p.a().clone(), 0).unwrap();
    let sb = OracleSpec::new(OracleKind::Exact, p.b().clone(), 0).unwrap();

    // Start on the dominant axis with squared norm 0.25.
    let x0 = spec.coordinate_equilibrium(0) * 0.5;
    let y0 = x0.transpose() * p.a() * &x0;
    let mut cfg = SghaConfig::new(1e-4, 50_000);
    cfg.record_stride = 100;
    let out = run_from(&p, &truth, SghaState { x: x0, y: y0, k: 0 }, &sa, &sb, &cfg, Some(&spec))
        .unwrap();

    let lambda_1 = spec.lambda()[0];
    let s0 = 0.25;
    for rec in &out.trajectory.records {
        let w = rec.w.as_ref().expect("w recorded for r = 1 with a commutative spec");
        let s = w.norm_squared();
        let t = rec.iter as f64 * cfg.eta;
        // The squared norm obeys ds = -2 lambda_1 (s^2 - s) dt: the factor 2
        // comes from the chain rule d(w^T w) = 2 w^T dw.
        let predicted = norm_ode_prediction(s0, t, 2.0 * lambda_1).unwrap();
        let rel = (s - predicted).abs() / predicted;
        assert!(
            rel <= 0.05,
            "iter {}: squared norm {s:.6} vs predicted {predicted:.6} (rel {rel:.3})",
            rec.iter
        );
    }
    let final_w = out.trajectory.records.last().unwrap().w.as_ref().unwrap();
    let final_norm = final_w.norm();
    assert!((0.99..=1.01).contains(&final_norm), "final ||w|| = {final_norm}");
}

#[test]
fn generic_run_converges_and_passes_through_phases() {
    let mu = [1.0, 1.25, 0.8, 1.1, 0.95];
    let beta = [1.0, 0.5, 0.4, 0.3, 0.2];
    let (p, _) = commutative_pencil(&mu, &beta, 33);
    let spec = check_commutative(p.a(), p.b(), 1e-10).unwrap().unwrap();
    let truth = p.ground_truth().unwrap();
    let sa = OracleSpec::new(OracleKind::Exact, p.a().clone(), 0).unwrap();
    let sb = OracleSpec::new(OracleKind::Exact, p.b().clone(), 0).unwrap();
    let mut cfg = SghaConfig::new(1e-4, 250_000);
    cfg.record_stride = 200;
    cfg.init_seed = 5;
    let out = run(&p, &truth, &sa, &sb, &cfg, Some(&spec)).unwrap();

    let final_w = out.trajectory.records.last().unwrap().w.as_ref().unwrap();
    assert!((0.99..=1.01).contains(&final_w.norm()));
    let phases: Vec<Phase> = out
        .trajectory
        .records
        .iter()
        .map(|r| phase_classifier(r.w.as_ref().unwrap(), cfg.eta, 0.1, 1.0))
        .collect();
    assert_eq!(*phases.last().unwrap(), Phase::III, "run should end near the optimum");
    assert!(
        phases.iter().any(|ph| *ph == Phase::II),
        "run should traverse the descent phase"
    );
    let err = out.trajectory.final_error().unwrap();
    assert!(err <= 1e-2, "exact-oracle run should converge, final error {err}");
}

#[test]
fn small_noise_error_decay_is_monotone_in_moving_average() {
    // 100-iteration moving average of the error is non-increasing after the
    // first 10% of iterations; up to 2 of 20 seeds may fail.
    let p = build_setting(1, 50, 0).unwrap();
    let truth = p.ground_truth().unwrap();
    let window = 100;
    let iters = 20_000;
    let failures: usize = (0..20u64)
        .map(|seed| {
            let sa = OracleSpec::new(
                OracleKind::AdditiveNoise { sigma: 1e-3 },
                p.a().clone(),
                seeding::mix(seed, 0xA),
            )
            .unwrap();
            let sb = OracleSpec::new(
                OracleKind::AdditiveNoise { sigma: 1e-3 },
                p.b().clone(),
                seeding::mix(seed, 0xB),
            )
            .unwrap();
            let mut cfg = SghaConfig::new(1e-4, iters);
            cfg.record_stride = 1;
            cfg.init_seed = seed;
            let out = run(&p, &truth, &sa, &sb, &cfg, None).unwrap();
            let errors: Vec<f64> = out.trajectory.records.iter().map(|r| r.error).collect();
            let ma: Vec<f64> = errors
                .windows(window)
                .map(|w| w.iter().sum::<f64>() / window as f64)
                .collect();
            let start = iters / 10;
            let monotone = ma[start..].windows(2).all(|pair| pair[1] <= pair[0]);
            usize::from(!monotone)
        })
        .sum();
    assert!(failures <= 2, "{failures}/20 seeds had a non-monotone moving average");
}
