//! Reproducible experiment driver: the three benchmark pencil families,
//! multi-seed sweeps with per-seed derived streams, trajectory aggregation,
//! and plot-ready CSV output.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::gev::GevProblem;
use crate::matrix::{eig_sym, random_orthogonal, sqrt_psd, Mat, Vector, RANK_TOL, SYM_TOL};
use crate::oracle::{OracleKind, OracleSpec};
use crate::seeding::{self, TAG_PROBLEM};
use crate::sgha::{self, SghaConfig, StepMode, Trajectory};

/// Benchmark pencil families.
///
/// 1. `A` has diagonal 1/100 and off-diagonal 1/20; `B_ij = 0.5^{|i-j|}/3`
///    for all `i, j` (the formula extended to the diagonal gives
///    `B_ii = 1/3` and keeps `B` positive definite). Rank target 1.
///    Note this `A` is indefinite by design.
/// 2. One seeded random orthogonal `U`: `A = U diag(1,1,1,0.1,..) U^T`,
///    `B = U diag(2,2,2,1,..) U^T` (a commuting pair). Rank target 3.
/// 3. Independent `U`, `V` for `A` and `B` (noncommuting). Rank target 3.
pub fn build_setting(id: u8, d: usize, seed: u64) -> Result<GevProblem> {
    match id {
        1 => {
            if d < 2 {
                return Err(Error::Validation("setting 1 needs d >= 2".into()));
            }
            let a = Mat::from_fn(d, d, |i, j| if i == j { 0.01 } else { 0.05 });
            let b = Mat::from_fn(d, d, |i, j| {
                0.5_f64.powi((i as i32 - j as i32).abs()) / 3.0
            });
            GevProblem::new(a, b, 1)
        }
        2 | 3 => {
            if d < 6 {
                return Err(Error::Validation(format!("setting {id} needs d >= 6")));
            }
            let mut rng = seeding::rng(seed, TAG_PROBLEM, 0);
            let u = random_orthogonal(d, &mut rng);
            let v = if id == 3 { random_orthogonal(d, &mut rng) } else { u.clone() };
            let mut a_vals = Vector::zeros(d);
            let mut b_vals = Vector::zeros(d);
            for i in 0..d {
                a_vals[i] = if i < 3 { 1.0 } else { 0.1 };
                b_vals[i] = if i < 3 { 2.0 } else { 1.0 };
            }
            let a = &u * Mat::from_diagonal(&a_vals) * u.transpose();
            let b = &v * Mat::from_diagonal(&b_vals) * v.transpose();
            let a = (&a + a.transpose()) * 0.5;
            let b = (&b + b.transpose()) * 0.5;
            GevProblem::new(a, b, 3)
        }
        other => Err(Error::Validation(format!("unknown setting id {other} (use 1, 2, or 3)"))),
    }
}

/// Step sizes used by the reference experiments at full scale.
pub fn setting_default_eta(id: u8) -> Option<f64> {
    match id {
        1 => Some(1e-4),
        2 => Some(5e-5),
        3 => Some(2.5e-5),
        _ => None,
    }
}

/// Rank target of each setting.
pub fn setting_rank(id: u8) -> Option<usize> {
    match id {
        1 => Some(1),
        2 | 3 => Some(3),
        _ => None,
    }
}

/// Random full-rank pencil whose whitened spectrum has a built-in gap of at
/// least ~0.8 at position `r`; used for randomized landscape tests.
pub fn random_gapped_pencil(d: usize, r: usize, seed: u64) -> Result<GevProblem> {
    let mut rng = seeding::rng(seed, TAG_PROBLEM, 1);
    let qb = random_orthogonal(d, &mut rng);
    let b_vals = Vector::from_fn(d, |_, _| rng.random_range(0.5..2.0));
    let b = &qb * Mat::from_diagonal(&b_vals) * qb.transpose();
    let b = (&b + b.transpose()) * 0.5;
    let qa = random_orthogonal(d, &mut rng);
    let mut vals = Vector::zeros(d);
    for i in 0..d {
        vals[i] = if i < r {
            rng.random_range(1.5..2.0)
        } else {
            rng.random_range(0.2..0.7)
        };
    }
    let a_tilde = &qa * Mat::from_diagonal(&vals) * qa.transpose();
    let b_sqrt = sqrt_psd(&b, RANK_TOL)?;
    let a = &b_sqrt * a_tilde * &b_sqrt;
    let a = (&a + a.transpose()) * 0.5;
    GevProblem::new(a, b, r)
}

/// Random singular pencil with `rank(B) = m < d`, full-rank `A`, and the
/// boundedness condition satisfied (`A` negative definite on `Null(B)`).
pub fn random_singular_pencil(d: usize, m: usize, r: usize, seed: u64) -> Result<GevProblem> {
    if !(r <= m && m < d) {
        return Err(Error::Validation("need r <= m < d".into()));
    }
    for attempt in 0..16 {
        let mut rng = seeding::rng(seed, TAG_PROBLEM, 2 + attempt);
        let o = random_orthogonal(d, &mut rng);
        let mut b_vals = Vector::zeros(d);
        for i in 0..m {
            b_vals[i] = rng.random_range(0.5..2.0);
        }
        let b = &o * Mat::from_diagonal(&b_vals) * o.transpose();
        let b = (&b + b.transpose()) * 0.5;

        let g11 = Mat::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w11 = (&g11 + g11.transpose()) * 0.5;
        let w12 = Mat::from_fn(m, d - m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g22 = Mat::from_fn(d - m, d - m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w22 = -(&g22 * g22.transpose() + Mat::identity(d - m, d - m) * 0.5);
        let mut w = Mat::zeros(d, d);
        w.view_mut((0, 0), (m, m)).copy_from(&w11);
        w.view_mut((0, m), (m, d - m)).copy_from(&w12);
        w.view_mut((m, 0), (d - m, m)).copy_from(&w12.transpose());
        w.view_mut((m, m), (d - m, d - m)).copy_from(&w22);
        let a = &o * w * o.transpose();
        let a = (&a + a.transpose()) * 0.5;

        let a_eig = eig_sym(&a, SYM_TOL)?;
        if a_eig.rank(RANK_TOL) < d {
            continue;
        }
        let p = GevProblem::new(a, b, r)?;
        if p.check_well_defined_singular(1e-8 * a_eig.spectral_norm())?.is_well_defined() {
            return Ok(p);
        }
    }
    Err(Error::Validation("failed to draw a well-defined singular pencil".into()))
}

/// Random singular pencil violating the boundedness condition (`A` has a
/// positive direction inside `Null(B)`), for rejection tests.
pub fn ill_defined_singular_pencil(d: usize, m: usize, r: usize, seed: u64) -> Result<GevProblem> {
    if !(r <= m && m < d) {
        return Err(Error::Validation("need r <= m < d".into()));
    }
    let mut rng = seeding::rng(seed, TAG_PROBLEM, 40);
    let o = random_orthogonal(d, &mut rng);
    let mut b_vals = Vector::zeros(d);
    for i in 0..m {
        b_vals[i] = rng.random_range(0.5..2.0);
    }
    let b = &o * Mat::from_diagonal(&b_vals) * o.transpose();
    let b = (&b + b.transpose()) * 0.5;
    let g11 = Mat::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let w11 = (&g11 + g11.transpose()) * 0.5;
    let w12 = Mat::from_fn(m, d - m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let g22 = Mat::from_fn(d - m, d - m, |_, _| rng.sample::<f64, _>(StandardNormal));
    // Positive definite lower block: the objective is unbounded below.
    let w22 = &g22 * g22.transpose() + Mat::identity(d - m, d - m) * 0.5;
    let mut w = Mat::zeros(d, d);
    w.view_mut((0, 0), (m, m)).copy_from(&w11);
    w.view_mut((0, m), (m, d - m)).copy_from(&w12);
    w.view_mut((m, 0), (d - m, m)).copy_from(&w12.transpose());
    w.view_mut((m, m), (d - m, d - m)).copy_from(&w22);
    let a = &o * w * o.transpose();
    let a = (&a + a.transpose()) * 0.5;
    GevProblem::new(a, b, r)
}

/// Oracle family for a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleSetup {
    Exact,
    GaussCov { n_draws: usize },
    AddNoise { sigma: f64 },
}

/// Builds the oracle for one target under the sweep policy.
///
/// Covariance sampling requires a PSD target; for an indefinite target
/// (benchmark family 1's `A` is indefinite by design) the sweep falls back
/// to additive noise with `sigma = ||target||_2 / sqrt(n_draws)`, matching
/// the noise scale of an `n_draws`-vector covariance estimate.
pub fn oracle_for_target(target: &Mat, setup: OracleSetup, seed: u64) -> Result<OracleSpec> {
    match setup {
        OracleSetup::Exact => OracleSpec::new(OracleKind::Exact, target.clone(), seed),
        OracleSetup::AddNoise { sigma } => {
            OracleSpec::new(OracleKind::AdditiveNoise { sigma }, target.clone(), seed)
        }
        OracleSetup::GaussCov { n_draws } => {
            let eig = eig_sym(target, SYM_TOL)?;
            let thr = RANK_TOL * eig.spectral_norm();
            let min = eig.values[eig.values.len() - 1];
            if min < -thr {
                let sigma = eig.spectral_norm() / (n_draws as f64).sqrt();
                OracleSpec::new(OracleKind::AdditiveNoise { sigma }, target.clone(), seed)
            } else {
                OracleSpec::new(OracleKind::GaussianCovariance { n_draws }, target.clone(), seed)
            }
        }
    }
}

/// Problem source for a sweep.
#[derive(Debug, Clone)]
pub enum ProblemSpec {
    /// Generated per seed (each run regenerates its data).
    Setting { id: u8, d: usize },
    /// One fixed instance shared by every seed.
    Custom(GevProblem),
}

/// Sweep configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub eta: f64,
    pub iters: usize,
    pub mode: StepMode,
    pub record_stride: usize,
    pub oracle: OracleSetup,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Parallel seed workers (default: rayon's global pool).
    pub jobs: Option<usize>,
}

/// Streams derived from one sweep seed.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DerivedSeeds {
    pub problem: u64,
    pub oracle_a: u64,
    pub oracle_b: u64,
    pub init: u64,
}

/// Per-seed derivation by fixed tags; adding seeds never reshuffles streams.
pub fn derive_seeds(seed: u64) -> DerivedSeeds {
    DerivedSeeds {
        problem: seeding::mix(seed, 0x11),
        oracle_a: seeding::mix(seed, 0x22),
        oracle_b: seeding::mix(seed, 0x33),
        init: seeding::mix(seed, 0x44),
    }
}

/// Outcome of one seed's run.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub derived: DerivedSeeds,
    pub initial_error: f64,
    pub final_error: f64,
    pub alignment: f64,
    pub diverged_at: Option<usize>,
    pub wall_ns: u64,
}

/// Aggregated sweep statistics on the shared record grid.
#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub grid: Vec<usize>,
    pub median: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub outcomes: Vec<SeedOutcome>,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

struct SeedRun {
    outcome: SeedOutcome,
    trajectory: Option<Trajectory>,
}

fn run_one_seed(cfg: &RunConfig, seed: u64) -> Result<SeedRun> {
    let derived = derive_seeds(seed);
    let problem = match &cfg.problem {
        ProblemSpec::Setting { id, d } => build_setting(*id, *d, derived.problem)?,
        ProblemSpec::Custom(p) => p.clone(),
    };
    let truth = problem.ground_truth()?;
    let spec_a = oracle_for_target(problem.a(), cfg.oracle, derived.oracle_a)?;
    let spec_b = oracle_for_target(problem.b(), cfg.oracle, derived.oracle_b)?;
    let mut solver_cfg = SghaConfig::new(cfg.eta, cfg.iters);
    solver_cfg.mode = cfg.mode;
    solver_cfg.record_stride = cfg.record_stride;
    solver_cfg.init_seed = derived.init;

    let started = std::time::Instant::now();
    match sgha::run(&problem, &truth, &spec_a, &spec_b, &solver_cfg, None) {
        Ok(out) => {
            let alignment = sgha::subspace_alignment(&truth, &out.final_state.x);
            Ok(SeedRun {
                outcome: SeedOutcome {
                    seed,
                    derived,
                    initial_error: out.trajectory.initial_error().unwrap_or(f64::NAN),
                    final_error: out.trajectory.final_error().unwrap_or(f64::NAN),
                    alignment,
                    diverged_at: None,
                    wall_ns: started.elapsed().as_nanos() as u64,
                },
                trajectory: Some(out.trajectory),
            })
        }
        Err(Error::Divergence { at_iter, last_error, .. }) => Ok(SeedRun {
            outcome: SeedOutcome {
                seed,
                derived,
                initial_error: f64::NAN,
                final_error: last_error.unwrap_or(f64::NAN),
                alignment: f64::NAN,
                diverged_at: Some(at_iter),
                wall_ns: started.elapsed().as_nanos() as u64,
            },
            trajectory: None,
        }),
        Err(other) => Err(other),
    }
}

/// Runs one solver instance per seed (in parallel), writes per-seed
/// trajectory CSVs plus an aggregated summary CSV and JSON sidecar, and
/// fails with a divergence report if any seed blew up.
///
/// Per-seed trajectory files omit wall-clock columns so that replaying a
/// configuration is byte-identical.
pub fn run_experiment(cfg: &RunConfig) -> Result<SweepSummary> {
    if cfg.seeds.is_empty() {
        return Err(Error::Validation("seed list must not be empty".into()));
    }
    let distinct: std::collections::HashSet<_> = cfg.seeds.iter().collect();
    if distinct.len() != cfg.seeds.len() {
        return Err(Error::Validation("seeds must be distinct".into()));
    }
    std::fs::create_dir_all(&cfg.output_dir)?;

    let run_all = || -> Vec<Result<SeedRun>> {
        cfg.seeds.par_iter().map(|&seed| run_one_seed(cfg, seed)).collect()
    };
    let results: Vec<Result<SeedRun>> = match cfg.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?
            .install(run_all),
        None => run_all(),
    };

    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        runs.push(r?);
    }

    // Per-seed trajectory files, deterministic order.
    for run in &runs {
        if let Some(traj) = &run.trajectory {
            let path = cfg.output_dir.join(format!("traj_seed_{}.csv", run.outcome.seed));
            crate::io::write_trajectory_csv(&path, traj, false)?;
        }
    }

    // Aggregate completed runs on the shared record grid.
    let completed: Vec<&Trajectory> = runs.iter().filter_map(|r| r.trajectory.as_ref()).collect();
    let mut summary = SweepSummary {
        grid: Vec::new(),
        median: Vec::new(),
        q25: Vec::new(),
        q75: Vec::new(),
        min: Vec::new(),
        max: Vec::new(),
        outcomes: runs.iter().map(|r| r.outcome.clone()).collect(),
    };
    if let Some(first) = completed.first() {
        let grid: Vec<usize> = first.records.iter().map(|r| r.iter).collect();
        for t in &completed {
            let g: Vec<usize> = t.records.iter().map(|r| r.iter).collect();
            if g != grid {
                return Err(Error::Validation("record grids differ across seeds".into()));
            }
        }
        summary.grid = grid;
        for (idx, _) in summary.grid.iter().enumerate() {
            let mut vals: Vec<f64> = completed.iter().map(|t| t.records[idx].error).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
            summary.median.push(quantile(&vals, 0.5));
            summary.q25.push(quantile(&vals, 0.25));
            summary.q75.push(quantile(&vals, 0.75));
            summary.min.push(vals[0]);
            summary.max.push(vals[vals.len() - 1]);
        }
    }

    let sidecar = config_echo(cfg);
    emit_summary(&summary, &sidecar, &cfg.output_dir.join("summary.csv"))?;

    let diverged: Vec<String> = summary
        .outcomes
        .iter()
        .filter_map(|o| o.diverged_at.map(|k| format!("seed {} at iteration {}", o.seed, k)))
        .collect();
    if !diverged.is_empty() {
        return Err(Error::SweepDivergence(diverged.join("; ")));
    }
    Ok(summary)
}

/// JSON echo of a sweep configuration, with the derived per-seed streams,
/// for exact replay.
pub fn config_echo(cfg: &RunConfig) -> serde_json::Value {
    let problem = match &cfg.problem {
        ProblemSpec::Setting { id, d } => json!({"setting": id, "d": d}),
        ProblemSpec::Custom(p) => json!({"custom": {"d": p.dim(), "r": p.r()}}),
    };
    let oracle = match cfg.oracle {
        OracleSetup::Exact => json!({"kind": "exact"}),
        OracleSetup::GaussCov { n_draws } => json!({"kind": "gauss_cov", "n_draws": n_draws}),
        OracleSetup::AddNoise { sigma } => json!({"kind": "add_noise", "sigma": sigma}),
    };
    json!({
        "version": format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
        "problem": problem,
        "eta": cfg.eta,
        "iters": cfg.iters,
        "mode": match cfg.mode { StepMode::Combined => "combined", StepMode::TwoStep => "two-step" },
        "record_stride": cfg.record_stride,
        "oracle": oracle,
        "seeds": cfg.seeds,
        "derived_seeds": cfg.seeds.iter().map(|&s| derive_seeds(s)).collect::<Vec<_>>(),
    })
}

/// Writes the summary CSV (`iter,median_error,q25,q75,min,max`) and a JSON
/// sidecar next to it.
pub fn emit_summary(
    summary: &SweepSummary,
    sidecar: &serde_json::Value,
    csv_path: &Path,
) -> Result<()> {
    use std::io::Write as _;
    let file = std::fs::File::create(csv_path)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "iter,median_error,q25,q75,min,max")?;
    for (idx, &iter) in summary.grid.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            iter,
            crate::io::fmt_f64(summary.median[idx]),
            crate::io::fmt_f64(summary.q25[idx]),
            crate::io::fmt_f64(summary.q75[idx]),
            crate::io::fmt_f64(summary.min[idx]),
            crate::io::fmt_f64(summary.max[idx]),
        )?;
    }
    out.flush()?;
    let sidecar_path = csv_path.with_extension("json");
    std::fs::write(&sidecar_path, serde_json::to_string_pretty(sidecar)? + "\n")?;
    Ok(())
}
