//! Acceptance suite: each test runs one release criterion at its stated
//! tolerance and prints a `PASS`/`FAIL` line (visible with `--nocapture`).
//!
//! Criteria
//!  1. equilibrium census on random well-gapped pencils;
//!  2. Hessian/gradient finite-difference oracles;
//!  3. singular-B census and ill-defined rejection;
//!  4. solver convergence on the three benchmark settings (scaled);
//!  5. exponential decay law of the whitened ratio process;
//!  6. stationary O-U fluctuation variance;
//!  7. step-size proportionality of the stationary error;
//!  8. saddle escape;
//!  9. byte-identical replay of experiment sweeps.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use sgha_core::diffusion::{
    check_commutative, fit_decay_slope, mc_ou_constants, ou_stationary_variance, v_ratio,
    CommutativeSpec,
};
use sgha_core::gev::SingularVerdict;
use sgha_core::harness::{
    build_setting, derive_seeds, ill_defined_singular_pencil, oracle_for_target,
    random_gapped_pencil, random_singular_pencil, run_experiment, OracleSetup, ProblemSpec,
    RunConfig,
};
use sgha_core::landscape::{
    classified_equilibria, enumerate_equilibria_singular, fd_hessian_primal, hessian_primal,
    kkt_residual, Classification,
};
use sgha_core::matrix::random_orthogonal;
use sgha_core::oracle::{OracleKind, OracleSpec};
use sgha_core::seeding;
use sgha_core::sgha::{
    self, run_from, subspace_alignment, SghaConfig, SghaState, StepMode,
};
use sgha_core::{GevProblem, Error};

type Mat = DMatrix<f64>;

fn report(criterion: &str, pass: bool, started: Instant, detail: &str) {
    println!(
        "ACCEPTANCE {criterion}: {} [{:.1}s] {detail}",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    assert!(pass, "{criterion} failed: {detail}");
}

fn commutative_pencil(mu: &[f64], beta: &[f64], seed: u64) -> GevProblem {
    let d = mu.len();
    let mut rng = seeding::rng(seed, seeding::TAG_PROBLEM, 0);
    let o = random_orthogonal(d, &mut rng);
    let lam: Vec<f64> = mu.iter().zip(beta).map(|(&m, &b)| m * b).collect();
    let a = &o * Mat::from_diagonal(&DVector::from_vec(lam)) * o.transpose();
    let b = &o * Mat::from_diagonal(&DVector::from_column_slice(mu)) * o.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let b = (&b + b.transpose()) * 0.5;
    GevProblem::new(a, b, 1).unwrap()
}

#[test]
fn criterion_1_equilibrium_census() {
    let started = Instant::now();
    let tol = 1e-7;
    for seed in 0..20u64 {
        let p = random_gapped_pencil(6, 2, 1000 + seed).unwrap();
        let eqs = classified_equilibria(&p, tol).unwrap();
        assert_eq!(eqs.len(), 15, "seed {seed}: expected C(6,2) = 15 equilibria");
        let mut stable = Vec::new();
        for eq in &eqs {
            let (g, f) = kkt_residual(&p, &eq.x, &eq.y).unwrap();
            assert!(g <= tol && f <= tol, "seed {seed} {:?}: KKT ({g:.2e}, {f:.2e})", eq.index_set);
            match eq.classification.as_ref().unwrap() {
                Classification::Stable { hessian_rank, .. } => {
                    assert_eq!(*hessian_rank, 11, "seed {seed}: stable Hessian rank");
                    stable.push(eq.index_set.clone());
                }
                Classification::Unstable { lambda_min, curvature_bound, .. } => {
                    assert!(
                        *curvature_bound < 0.0 && lambda_min <= curvature_bound,
                        "seed {seed} {:?}: lambda_min {lambda_min:.3e} vs bound {curvature_bound:.3e}",
                        eq.index_set
                    );
                }
            }
        }
        assert_eq!(stable, vec![vec![0, 1]], "seed {seed}: stable class must be [r]");
    }
    report("criterion 1 (equilibrium census)", true, started, "20 pencils, d=6, r=2");
}

#[test]
fn criterion_2_derivative_oracles() {
    let started = Instant::now();
    use rand::Rng;
    use rand_distr::StandardNormal;
    let shapes = [(2usize, 1usize), (3, 1), (3, 2), (4, 1), (4, 2)];
    let mut worst_grad = 0.0f64;
    let mut worst_hess = 0.0f64;
    for i in 0..50u64 {
        let (d, r) = shapes[(i % 5) as usize];
        let p = random_gapped_pencil(d, r, 2000 + i).unwrap();
        let mut rng = seeding::rng(3000 + i, seeding::TAG_PROBLEM, 0);
        let x = Mat::from_fn(d, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y0 = Mat::from_fn(r, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = (&y0 + y0.transpose()) * 0.5;

        let (gx, gy) = p.grad_lagrangian(&x, &y).unwrap();
        let (fgx, fgy) = sgha_core::gev::fd_grad_lagrangian(&p, &x, &y, 1e-4).unwrap();
        let grad_rel = ((&gx - &fgx).norm() + (&gy - &fgy).norm())
            / (gx.norm() + gy.norm()).max(1e-12);
        worst_grad = worst_grad.max(grad_rel);

        let h = hessian_primal(&p, &x).unwrap();
        let fh = fd_hessian_primal(&p, &x, 1e-4).unwrap();
        let hess_rel = (&h - &fh).norm() / h.norm();
        worst_hess = worst_hess.max(hess_rel);
    }
    let pass = worst_grad <= 1e-5 && worst_hess <= 1e-4;
    report(
        "criterion 2 (derivative oracles)",
        pass,
        started,
        &format!("worst gradient rel {worst_grad:.2e} (<=1e-5), worst Hessian rel {worst_hess:.2e} (<=1e-4)"),
    );
}

#[test]
fn criterion_3_singular_pencils() {
    let started = Instant::now();
    for seed in 0..10u64 {
        let p = random_singular_pencil(5, 3, 2, 4000 + seed).unwrap();
        let eqs = enumerate_equilibria_singular(&p).unwrap();
        assert_eq!(eqs.len(), 3, "seed {seed}: expected C(3,2) = 3 equilibria");
        for eq in &eqs {
            let (g, f) = kkt_residual(&p, &eq.x, &eq.y).unwrap();
            assert!(g <= 1e-7 && f <= 1e-7, "seed {seed}: KKT residuals ({g:.2e}, {f:.2e})");
        }
    }
    for seed in 0..5u64 {
        let p = ill_defined_singular_pencil(5, 3, 2, 5000 + seed).unwrap();
        match p.check_well_defined_singular(1e-8).unwrap() {
            SingularVerdict::IllDefined { witness } => {
                assert!(witness.norm() > 0.9, "witness should be a unit direction");
                let in_null = (p.b() * &witness).norm();
                assert!(in_null <= 1e-8, "witness must lie in Null(B), got ||Bv|| = {in_null:.2e}");
            }
            SingularVerdict::WellDefined => panic!("seed {seed}: expected rejection"),
        }
        assert!(matches!(enumerate_equilibria_singular(&p), Err(Error::IllPosed(_))));
    }
    report("criterion 3 (singular pencils)", true, started, "10 well-defined + 5 rejected");
}

struct SweepStats {
    initial: Vec<f64>,
    fin: Vec<f64>,
    alignment: Vec<f64>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn convergence_sweep(setting: u8, d: usize, eta: f64, iters: usize, n_seeds: u64) -> SweepStats {
    let results: Vec<(f64, f64, f64)> = (0..n_seeds)
        .into_par_iter()
        .map(|seed| {
            let derived = derive_seeds(seed);
            let p = build_setting(setting, d, derived.problem).unwrap();
            let truth = p.ground_truth().unwrap();
            let sa =
                oracle_for_target(p.a(), OracleSetup::GaussCov { n_draws: 40 }, derived.oracle_a)
                    .unwrap();
            let sb =
                oracle_for_target(p.b(), OracleSetup::GaussCov { n_draws: 40 }, derived.oracle_b)
                    .unwrap();
            let mut cfg = SghaConfig::new(eta, iters);
            cfg.record_stride = 500;
            cfg.init_seed = derived.init;
            let out = sgha::run(&p, &truth, &sa, &sb, &cfg, None).unwrap();
            (
                out.trajectory.initial_error().unwrap(),
                out.trajectory.final_error().unwrap(),
                subspace_alignment(&truth, &out.final_state.x),
            )
        })
        .collect();
    SweepStats {
        initial: results.iter().map(|r| r.0).collect(),
        fin: results.iter().map(|r| r.1).collect(),
        alignment: results.iter().map(|r| r.2).collect(),
    }
}

fn check_convergence(criterion: &str, setting: u8, d: usize, eta: f64, iters: usize) {
    let started = Instant::now();
    let stats = convergence_sweep(setting, d, eta, iters, 20);
    let med_initial = median(&stats.initial);
    let med_final = median(&stats.fin);
    let aligned = stats.alignment.iter().filter(|&&a| a > 0.95).count();
    let pass = med_final < med_initial / 10.0 && aligned >= 18;
    report(
        criterion,
        pass,
        started,
        &format!(
            "median error {med_initial:.3} -> {med_final:.3} (need < {:.3}), alignment>0.95 in {aligned}/20",
            med_initial / 10.0
        ),
    );
}

#[test]
fn criterion_4a_convergence_setting_1() {
    check_convergence("criterion 4a (setting 1, d=50)", 1, 50, 1e-3, 20_000);
}

#[test]
fn criterion_4b_convergence_setting_2() {
    check_convergence("criterion 4b (setting 2, d=60)", 2, 60, 5e-4, 20_000);
}

#[test]
fn criterion_4c_convergence_setting_3() {
    check_convergence("criterion 4c (setting 3, d=60)", 3, 60, 5e-4, 20_000);
}

/// Long-running full-scale targets (pass rule: final error below half the
/// initial error). Iteration counts give each setting at least ~1.2
/// e-foldings of its slowest transverse mode at the reference step sizes.
/// Run with `--ignored --release`; expect minutes to an hour per setting.
#[test]
#[ignore = "full-scale benchmark; minutes to an hour per setting"]
fn criterion_4_full_scale() {
    for (setting, eta, iters) in
        [(1u8, 1e-4, 30_000usize), (2, 5e-5, 60_000), (3, 2.5e-5, 120_000)]
    {
        let started = Instant::now();
        let stats = convergence_sweep(setting, 500, eta, iters, 1);
        let ok = stats.fin.iter().zip(&stats.initial).all(|(f, i)| f < &(0.5 * i));
        report(
            &format!("criterion 4 full scale (setting {setting}, d=500)"),
            ok,
            started,
            &format!("final errors {:?} vs initial {:?}", stats.fin, stats.initial),
        );
    }
}

fn diag_pencil_5() -> (GevProblem, CommutativeSpec) {
    let mu = [1.0, 1.3, 0.8, 1.1, 0.9];
    let beta = [1.0, 0.55, 0.4, 0.25, 0.1];
    let p = commutative_pencil(&mu, &beta, 77);
    let spec = check_commutative(p.a(), p.b(), 1e-10).unwrap().unwrap();
    (p, spec)
}

#[test]
fn criterion_5_ratio_decay_law() {
    let started = Instant::now();
    let (p, spec) = diag_pencil_5();
    let truth = p.ground_truth().unwrap();
    let sa = OracleSpec::new(OracleKind::Exact, p.a().clone(), 0).unwrap();
    let sb = OracleSpec::new(OracleKind::Exact, p.b().clone(), 0).unwrap();
    let eta = 1e-4;
    let mut cfg = SghaConfig::new(eta, 30_000);
    cfg.record_stride = 10;

    // Start with equal whitened mass on every coordinate (away from saddles).
    let d = p.dim();
    let w0 = DVector::from_element(d, 1.0 / (d as f64).sqrt());
    let x0_col = spec.o() * DVector::from_fn(d, |j, _| w0[j] / spec.mu()[j].sqrt());
    let mut x0 = Mat::zeros(d, 1);
    x0.set_column(0, &x0_col);
    let y0 = x0.transpose() * p.a() * &x0;
    let out = run_from(&p, &truth, SghaState { x: x0, y: y0, k: 0 }, &sa, &sb, &cfg, Some(&spec))
        .unwrap();

    let mut detail = String::new();
    let mut pass = true;
    for k in 1..d {
        let points: Vec<(usize, f64)> = out
            .trajectory
            .records
            .iter()
            .map(|rec| (rec.iter, v_ratio(rec.w.as_ref().unwrap(), k, 0, &spec).unwrap().value))
            .collect();
        let fit = fit_decay_slope(&points, eta).unwrap();
        let predicted = spec.mu()[0] * spec.mu()[k] * (spec.beta()[k] - spec.beta()[0]);
        let rel = (fit.slope - predicted).abs() / predicted.abs();
        if rel > 0.10 || fit.r_squared < 0.99 {
            pass = false;
        }
        detail.push_str(&format!(
            "k={}: slope {:.4} vs {:.4} (rel {:.3}, R2 {:.5}); ",
            k + 1,
            fit.slope,
            predicted,
            rel,
            fit.r_squared
        ));
    }
    report("criterion 5 (ratio decay law)", pass, started, detail.trim_end());
}

#[test]
fn criterion_6_ou_fluctuation_variance() {
    let started = Instant::now();
    let (p, spec) = diag_pencil_5();
    let truth = p.ground_truth().unwrap();
    let sa = OracleSpec::new(OracleKind::GaussianCovariance { n_draws: 200 }, p.a().clone(), 11)
        .unwrap();
    let sb = OracleSpec::new(OracleKind::GaussianCovariance { n_draws: 200 }, p.b().clone(), 12)
        .unwrap();

    // Diffusion constants with tight standard errors.
    let n_mc = 40_000;
    let consts = mc_ou_constants(&spec, &sa, &sb, n_mc).unwrap();
    for i in 1..p.dim() {
        let g = consts.g[(i, 0)];
        let se = consts.g_standard_error[(i, 0)];
        assert!(se <= 0.05 * g, "G[{i},1] standard error {se:.2e} above 5% of {g:.3e}");
    }

    // Pooled stationary runs from the optimum: the slow transverse modes mix
    // with autocorrelation times around 1e3 iterations, so three independent
    // windows keep the variance-of-variance well below the 30% tolerance.
    let eta = 5e-4;
    let burn_in = 40_000usize;
    let window = 200_000usize;
    let runs: Vec<_> = (0..3u64)
        .into_par_iter()
        .map(|run_seed| {
            let sa = sa.with_seed(seeding::mix(run_seed, 0xA1));
            let sb = sb.with_seed(seeding::mix(run_seed, 0xB1));
            let mut cfg = SghaConfig::new(eta, burn_in + window);
            cfg.record_stride = 1;
            let x0 = truth.x_star.clone();
            let y0 = x0.transpose() * p.a() * &x0;
            run_from(&p, &truth, SghaState { x: x0, y: y0, k: 0 }, &sa, &sb, &cfg, Some(&spec))
                .unwrap()
        })
        .collect();

    let mut pass = true;
    let mut detail = String::new();
    for i in 1..p.dim() {
        let mut var_sum = 0.0;
        for out in &runs {
            let samples: Vec<f64> = out
                .trajectory
                .records
                .iter()
                .filter(|rec| rec.iter > burn_in)
                .map(|rec| rec.w.as_ref().unwrap()[i])
                .collect();
            let n = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / n;
            var_sum += samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        }
        let var_w = var_sum / runs.len() as f64;
        let var_z = var_w / eta;
        let predicted =
            ou_stationary_variance(consts.g[(i, 0)], spec.mu()[i], spec.beta()[0], spec.beta()[i])
                .unwrap();
        let rel = (var_z - predicted).abs() / predicted;
        if rel > 0.30 {
            pass = false;
        }
        detail.push_str(&format!("z{}: var {:.4} vs {:.4} (rel {:.2}); ", i + 1, var_z, predicted, rel));
    }
    report("criterion 6 (O-U fluctuation variance)", pass, started, detail.trim_end());
}

#[test]
fn criterion_7_step_size_scaling() {
    let started = Instant::now();
    let (p, _spec) = diag_pencil_5();
    let truth = p.ground_truth().unwrap();

    let stationary_mean_sq = |eta: f64, seed: u64| -> f64 {
        let sa = OracleSpec::new(
            OracleKind::GaussianCovariance { n_draws: 200 },
            p.a().clone(),
            seeding::mix(seed, 0xA),
        )
        .unwrap();
        let sb = OracleSpec::new(
            OracleKind::GaussianCovariance { n_draws: 200 },
            p.b().clone(),
            seeding::mix(seed, 0xB),
        )
        .unwrap();
        let burn_in = 10_000usize;
        let window = 30_000usize;
        let mut cfg = SghaConfig::new(eta, burn_in + window);
        cfg.record_stride = 1;
        let x0 = truth.x_star.clone();
        let y0 = x0.transpose() * p.a() * &x0;
        let out =
            run_from(&p, &truth, SghaState { x: x0, y: y0, k: 0 }, &sa, &sb, &cfg, None).unwrap();
        let sq: Vec<f64> = out
            .trajectory
            .records
            .iter()
            .filter(|rec| rec.iter > burn_in)
            .map(|rec| rec.error * rec.error)
            .collect();
        sq.iter().sum::<f64>() / sq.len() as f64
    };

    let eta_hi = 2e-3;
    let eta_lo = 1e-3;
    let hi: Vec<f64> = (0..20u64).into_par_iter().map(|s| stationary_mean_sq(eta_hi, s)).collect();
    let lo: Vec<f64> =
        (0..20u64).into_par_iter().map(|s| stationary_mean_sq(eta_lo, 100 + s)).collect();
    let ratio = (hi.iter().sum::<f64>() / 20.0) / (lo.iter().sum::<f64>() / 20.0);
    let pass = (1.4..=2.6).contains(&ratio);
    report(
        "criterion 7 (step-size scaling)",
        pass,
        started,
        &format!("stationary mean squared error ratio eta/(eta/2) = {ratio:.3} (need within [1.4, 2.6])"),
    );
}

#[test]
fn criterion_8_saddle_escape() {
    let started = Instant::now();
    // Commutative d = 20 pencil with PSD A so the covariance oracle applies.
    let d = 20;
    let mut mu = vec![0.0; d];
    let mut beta = vec![0.0; d];
    for i in 0..d {
        mu[i] = 1.0 + 0.2 * ((i % 5) as f64 - 2.0) / 2.0;
        beta[i] = if i == 0 { 1.0 } else { 0.55 - 0.4 * (i - 1) as f64 / (d - 1) as f64 };
    }
    let p = commutative_pencil(&mu, &beta, 88);
    let spec = check_commutative(p.a(), p.b(), 1e-10).unwrap().unwrap();
    let sa = OracleSpec::new(OracleKind::GaussianCovariance { n_draws: 40 }, p.a().clone(), 21)
        .unwrap();
    let sb = OracleSpec::new(OracleKind::GaussianCovariance { n_draws: 40 }, p.b().clone(), 22)
        .unwrap();

    // Predicted-order horizon from the escape-time formula, with slack.
    let saddle = 1usize;
    let consts = mc_ou_constants(&spec, &sa, &sb, 5_000).unwrap();
    let g_1i = consts.g[(0, saddle)];
    let rate = spec.mu()[0] * (spec.beta()[0] - spec.beta()[saddle]);
    let t1 = (200.0 * (spec.beta()[0] - spec.beta()[saddle]) / (spec.mu()[0] * g_1i) + 1.0).ln() / rate;
    let eta = 1e-3;
    let horizon = ((5.0 * t1 / eta).ceil() as usize).max(10_000);

    let mut cfg = SghaConfig::new(eta, horizon);
    cfg.record_stride = horizon; // escape detection is per-iteration internally
    let seeds: Vec<u64> = (0..50).collect();
    let stats = sgha_core::diffusion::escape_experiment(&p, &spec, &sa, &sb, &cfg, saddle, 1e-6, &seeds)
        .unwrap();
    let noisy_ok = stats.fraction >= 0.9;

    // Exact oracle, zero perturbation: the saddle is an exact fixed point.
    let sa_exact = OracleSpec::new(OracleKind::Exact, p.a().clone(), 0).unwrap();
    let sb_exact = OracleSpec::new(OracleKind::Exact, p.b().clone(), 0).unwrap();
    let mut cfg_exact = SghaConfig::new(eta, 20_000);
    cfg_exact.record_stride = 20_000;
    let exact_stats = sgha_core::diffusion::escape_experiment(
        &p, &spec, &sa_exact, &sb_exact, &cfg_exact, saddle, 0.0, &seeds[..10],
    )
    .unwrap();
    let exact_ok = exact_stats.fraction == 0.0;

    let escaped_times: Vec<usize> = stats.escape_iters.iter().flatten().cloned().collect();
    let median_escape = if escaped_times.is_empty() {
        0
    } else {
        let mut t = escaped_times.clone();
        t.sort_unstable();
        t[t.len() / 2]
    };
    report(
        "criterion 8 (saddle escape)",
        noisy_ok && exact_ok,
        started,
        &format!(
            "escape fraction {:.2} (need >= 0.9) within horizon {horizon} (median escape {median_escape}); exact/no-perturbation fraction {:.2}",
            stats.fraction, exact_stats.fraction
        ),
    );
}

#[test]
fn criterion_9_byte_identical_replay() {
    let started = Instant::now();
    let base = std::env::temp_dir().join(format!("sgha-acceptance-replay-{}", std::process::id()));
    let dir_a = base.join("a");
    let dir_b = base.join("b");
    let make_cfg = |dir: &std::path::Path| RunConfig {
        problem: ProblemSpec::Setting { id: 1, d: 12 },
        eta: 1e-3,
        iters: 400,
        mode: StepMode::Combined,
        record_stride: 50,
        oracle: OracleSetup::GaussCov { n_draws: 5 },
        seeds: vec![3, 1, 2],
        output_dir: dir.to_path_buf(),
        jobs: Some(2),
    };
    run_experiment(&make_cfg(&dir_a)).unwrap();
    run_experiment(&make_cfg(&dir_b)).unwrap();

    let mut names: Vec<String> = std::fs::read_dir(&dir_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&"summary.csv".to_string()));
    assert!(names.contains(&"summary.json".to_string()));
    assert_eq!(names.iter().filter(|n| n.starts_with("traj_seed_")).count(), 3);
    let mut checked = 0;
    for name in &names {
        let a = std::fs::read(dir_a.join(name)).unwrap();
        let b = std::fs::read(dir_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between replays");
        checked += 1;
    }
    std::fs::remove_dir_all(&base).ok();
    report(
        "criterion 9 (byte-identical replay)",
        checked == names.len() && checked >= 5,
        started,
        &format!("{checked} files identical"),
    );
}
