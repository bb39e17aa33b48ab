//! Command-line driver: `landscape`, `solve`, `diagnose`, and `experiment`
//! subcommands over the core library. All numeric CSV output uses
//! 17-significant-digit formatting so replays are byte-identical.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sgha_core::diffusion::{
    check_commutative, escape_experiment, fit_decay_slope, mc_ou_constants, norm_ode_prediction,
    ou_stationary_variance, phase_classifier, v_ratio, CommutativeSpec, Phase,
};
use sgha_core::harness::{self, OracleSetup, ProblemSpec, RunConfig};
use sgha_core::io::{
    self, fmt_f64, load_problem, load_run_config, parse_mode, OracleConfigFile, ProblemFile,
    RunConfigFile, SeedsFile,
};
use sgha_core::landscape::{classified_equilibria, enumerate_equilibria_singular, kkt_residual};
use sgha_core::oracle::OracleSpec;
use sgha_core::sgha::{run, SghaConfig, StepMode, Trajectory};
use sgha_core::{Classification, Error, GevProblem, Result};

#[derive(Parser)]
#[command(
    name = "sgha",
    about = "Online generalized eigenvalue solver: landscape analysis, stochastic runs, diffusion diagnostics, experiment sweeps",
    version
)]
struct Cli {
    /// Configuration JSON (problem file for `landscape`, run config otherwise).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed (run seed for `solve`, master seed for `experiment`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parallel workers for multi-seed sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output path (CSV file, or directory for `experiment`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Chatty progress on stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate and classify all Lagrangian equilibria; emit a CSV census.
    Landscape {
        /// Problem JSON (matrix files or a generated setting); falls back to --config.
        #[arg(long)]
        problem: Option<PathBuf>,
        /// Use the rank-deficient-B enumeration.
        #[arg(long)]
        singular: bool,
        /// Relative Hessian-eigenvalue threshold for classification.
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
    },
    /// Run the stochastic solver once; write the trajectory CSV.
    Solve {
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
        /// `combined` (default) or `two-step`.
        #[arg(long)]
        mode: Option<String>,
        /// Record whitened coordinates (r = 1, commuting pencils only).
        #[arg(long)]
        record_w: bool,
    },
    /// Check a recorded run against the closed-form diffusion predictions.
    Diagnose {
        /// Trajectory CSV produced by `solve` (with whitened columns).
        #[arg(long)]
        run: Option<PathBuf>,
        /// Problem or run-config JSON; falls back to --config.
        #[arg(long)]
        problem: Option<PathBuf>,
        /// One of: ode-slope, ou-variance, norm-ode, phases, escape.
        #[arg(long)]
        check: String,
        /// Step size (required when the JSON is a bare problem file).
        #[arg(long)]
        eta: Option<f64>,
        /// Saddle coordinate (1-based, > 1) for `escape`.
        #[arg(long, default_value_t = 2)]
        saddle: usize,
        /// Initial perturbation scale for `escape`.
        #[arg(long, default_value_t = 1e-6)]
        perturbation: f64,
        /// Number of seeded trajectories for `escape`.
        #[arg(long, default_value_t = 50)]
        escape_seeds: u64,
    },
    /// Multi-seed sweep: per-seed trajectories plus an aggregated summary.
    Experiment {},
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn require_config(cli: &Cli) -> Result<&PathBuf> {
    cli.config
        .as_ref()
        .ok_or_else(|| Error::Validation("--config <json> is required".into()))
}

fn config_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}

/// Accepts either a bare problem JSON or a full run config (whose `problem`
/// field is used).
fn load_any_problem(path: &Path) -> Result<(GevProblem, Option<RunConfigFile>)> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let base = config_base(path);
    if value.get("problem").is_some() {
        let cfg: RunConfigFile = serde_json::from_value(value)?;
        let p = load_problem(&cfg.problem, &base)?;
        Ok((p, Some(cfg)))
    } else {
        let pf: ProblemFile = serde_json::from_value(value)?;
        Ok((load_problem(&pf, &base)?, None))
    }
}

fn out_writer(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(std::io::BufWriter::new(std::fs::File::create(path)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Landscape { problem, singular, tol } => {
            cmd_landscape(cli, problem.as_ref(), *singular, *tol)
        }
        Command::Solve { eta, iters, mode, record_w } => {
            cmd_solve(cli, *eta, *iters, mode.as_deref(), *record_w)
        }
        Command::Diagnose { run, problem, check, eta, saddle, perturbation, escape_seeds } => {
            cmd_diagnose(
                cli,
                run.as_deref(),
                problem.as_ref(),
                check,
                *eta,
                *saddle,
                *perturbation,
                *escape_seeds,
            )
        }
        Command::Experiment {} => cmd_experiment(cli),
    }
}

fn cmd_landscape(cli: &Cli, problem: Option<&PathBuf>, singular: bool, tol: f64) -> Result<()> {
    let config = match problem {
        Some(p) => p,
        None => require_config(cli)?,
    };
    let (p, _) = load_any_problem(config)?;
    if cli.verbose {
        eprintln!("problem: d = {}, r = {}, rank(B) = {}", p.dim(), p.r(), p.b_rank());
    }
    let mut w = out_writer(&cli.out)?;
    writeln!(
        w,
        "index_set,classification,lagrangian,lambda_min_H,hessian_rank,curvature_bound,kkt_primal,kkt_feasibility"
    )?;
    let rows: Vec<(Vec<usize>, Option<Classification>, f64, f64, f64)> = if singular {
        enumerate_equilibria_singular(&p)?
            .into_iter()
            .map(|eq| {
                let (g, f) = kkt_residual(&p, &eq.x, &eq.y)?;
                let l = p.lagrangian(&eq.x, &eq.y)?;
                Ok((eq.index_set, None, l, g, f))
            })
            .collect::<Result<_>>()?
    } else {
        classified_equilibria(&p, tol)?
            .into_iter()
            .map(|eq| {
                let (g, f) = kkt_residual(&p, &eq.x, &eq.y)?;
                let l = p.lagrangian(&eq.x, &eq.y)?;
                Ok((eq.index_set, eq.classification, l, g, f))
            })
            .collect::<Result<_>>()?
    };
    for (set, class, lagr, g, f) in rows {
        // 1-based indices, space separated.
        let idx: Vec<String> = set.iter().map(|i| (i + 1).to_string()).collect();
        let (label, lmin, rank, bound) = match &class {
            Some(Classification::Stable { lambda_min, hessian_rank }) => {
                ("stable".to_string(), fmt_f64(*lambda_min), hessian_rank.to_string(), String::new())
            }
            Some(Classification::Unstable { lambda_min, hessian_rank, curvature_bound }) => (
                "unstable".to_string(),
                fmt_f64(*lambda_min),
                hessian_rank.to_string(),
                fmt_f64(*curvature_bound),
            ),
            None => ("unclassified".to_string(), String::new(), String::new(), String::new()),
        };
        writeln!(
            w,
            "{},{label},{},{lmin},{rank},{bound},{},{}",
            idx.join(" "),
            fmt_f64(lagr),
            fmt_f64(g),
            fmt_f64(f)
        )?;
    }
    Ok(())
}

struct SolveSetup {
    problem: GevProblem,
    spec_a: OracleSpec,
    spec_b: OracleSpec,
    cfg: SghaConfig,
}

fn oracle_setup_from_file(oc: &OracleConfigFile) -> Result<OracleSetup> {
    match oc.kind.as_str() {
        "exact" => Ok(OracleSetup::Exact),
        "gauss_cov" => Ok(OracleSetup::GaussCov { n_draws: oc.n_draws.unwrap_or(40) }),
        "add_noise" => Ok(OracleSetup::AddNoise {
            sigma: oc
                .sigma
                .ok_or_else(|| Error::Validation("add_noise oracle needs sigma".into()))?,
        }),
        other => Err(Error::Parse(format!("unknown oracle kind {other:?}"))),
    }
}

fn build_solve(
    cli: &Cli,
    problem: GevProblem,
    file: Option<&RunConfigFile>,
    eta: Option<f64>,
    iters: Option<usize>,
    mode: Option<&str>,
) -> Result<SolveSetup> {
    let setting_eta = match file.map(|f| &f.problem) {
        Some(ProblemFile::Setting { setting, .. }) => harness::setting_default_eta(*setting),
        _ => None,
    };
    let eta = eta
        .or(file.and_then(|f| f.eta))
        .or(setting_eta)
        .ok_or_else(|| Error::Validation("no step size: pass --eta or set eta in the config".into()))?;
    let iters = iters.or(file.and_then(|f| f.iters)).unwrap_or(20_000);
    let mode = match mode {
        Some(m) => parse_mode(m)?,
        None => file
            .and_then(|f| f.mode.as_deref())
            .map(parse_mode)
            .transpose()?
            .unwrap_or(StepMode::Combined),
    };
    let seed = cli.seed.or(file.and_then(|f| f.oracle.seed)).unwrap_or(0);
    let derived = harness::derive_seeds(seed);
    let setup = match file {
        Some(f) => oracle_setup_from_file(&f.oracle)?,
        None => OracleSetup::Exact,
    };
    let spec_a = harness::oracle_for_target(problem.a(), setup, derived.oracle_a)?;
    let spec_b = harness::oracle_for_target(problem.b(), setup, derived.oracle_b)?;
    let mut cfg = SghaConfig::new(eta, iters);
    cfg.mode = mode;
    cfg.record_stride = file.and_then(|f| f.record_stride).unwrap_or(100);
    cfg.init_seed = derived.init;
    Ok(SolveSetup { problem, spec_a, spec_b, cfg })
}

fn solve_setup(
    cli: &Cli,
    eta: Option<f64>,
    iters: Option<usize>,
    mode: Option<&str>,
) -> Result<SolveSetup> {
    let config = require_config(cli)?;
    let file = load_run_config(config)?;
    let problem = load_problem(&file.problem, &config_base(config))?;
    build_solve(cli, problem, Some(&file), eta, iters, mode)
}

fn cmd_solve(
    cli: &Cli,
    eta: Option<f64>,
    iters: Option<usize>,
    mode: Option<&str>,
    record_w: bool,
) -> Result<()> {
    let setup = solve_setup(cli, eta, iters, mode)?;
    let truth = setup.problem.ground_truth()?;
    let w_spec = if record_w {
        let spec = check_commutative(setup.problem.a(), setup.problem.b(), 1e-9)?;
        if spec.is_none() {
            eprintln!("warning: pencil does not commute; whitened coordinates not recorded");
        }
        spec.filter(|_| setup.problem.r() == 1)
    } else {
        None
    };
    if cli.verbose {
        eprintln!(
            "solve: d = {}, r = {}, eta = {}, iters = {}",
            setup.problem.dim(),
            setup.problem.r(),
            setup.cfg.eta,
            setup.cfg.max_iters
        );
    }
    let out = run(&setup.problem, &truth, &setup.spec_a, &setup.spec_b, &setup.cfg, w_spec.as_ref())?;
    let path = cli.out.clone().unwrap_or_else(|| PathBuf::from("trajectory.csv"));
    io::write_trajectory_csv(&path, &out.trajectory, true)?;
    if cli.verbose {
        eprintln!(
            "final error {:.6e} after {} iterations -> {}",
            out.trajectory.final_error().unwrap_or(f64::NAN),
            out.final_state.k,
            path.display()
        );
    }
    Ok(())
}

fn load_w_series(traj: &Trajectory) -> Result<Vec<(usize, Vec<f64>)>> {
    let rows: Vec<(usize, Vec<f64>)> = traj
        .records
        .iter()
        .filter_map(|r| r.w.as_ref().map(|w| (r.iter, w.iter().cloned().collect())))
        .collect();
    if rows.is_empty() {
        return Err(Error::Validation(
            "trajectory has no whitened coordinates; rerun `solve` with --record-w".into(),
        ));
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn cmd_diagnose(
    cli: &Cli,
    run_csv: Option<&Path>,
    problem_path: Option<&PathBuf>,
    check: &str,
    eta: Option<f64>,
    saddle: usize,
    perturbation: f64,
    escape_seeds: u64,
) -> Result<()> {
    const CHECKS: [&str; 5] = ["ode-slope", "ou-variance", "norm-ode", "phases", "escape"];
    if !CHECKS.contains(&check) {
        return Err(Error::Validation(format!(
            "unknown check {check:?}; use one of {}",
            CHECKS.join(", ")
        )));
    }
    let path = match problem_path {
        Some(p) => p,
        None => require_config(cli)?,
    };
    let (problem, file) = load_any_problem(path)?;
    let setup = build_solve(cli, problem, file.as_ref(), eta, None, None)?;
    let p = &setup.problem;
    let spec: CommutativeSpec = check_commutative(p.a(), p.b(), 1e-9)?
        .ok_or_else(|| Error::Validation("diagnostics require a commuting pencil".into()))?;
    let eta = setup.cfg.eta;
    let mut w = out_writer(&cli.out)?;

    let need_traj = || -> Result<Trajectory> {
        let path = run_csv
            .ok_or_else(|| Error::Validation("--run <trajectory.csv> is required for this check".into()))?;
        io::read_trajectory_csv(path)
    };

    match check {
        "ode-slope" => {
            let traj = need_traj()?;
            let rows = load_w_series(&traj)?;
            writeln!(w, "coordinate,fitted_slope,predicted_slope,rel_error,r_squared,n_used,n_trimmed")?;
            for k in 1..spec.dim() {
                let points: Vec<(usize, f64)> = rows
                    .iter()
                    .map(|(iter, wv)| {
                        let wvec = sgha_core::Vector::from_column_slice(wv);
                        Ok((*iter, v_ratio(&wvec, k, 0, &spec)?.value))
                    })
                    .collect::<Result<_>>()?;
                let fit = fit_decay_slope(&points, eta)?;
                let predicted = spec.mu()[0] * spec.mu()[k] * (spec.beta()[k] - spec.beta()[0]);
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    k + 1,
                    fmt_f64(fit.slope),
                    fmt_f64(predicted),
                    fmt_f64((fit.slope - predicted).abs() / predicted.abs()),
                    fmt_f64(fit.r_squared),
                    fit.n_used,
                    fit.n_trimmed
                )?;
            }
        }
        "ou-variance" => {
            let traj = need_traj()?;
            let rows = load_w_series(&traj)?;
            let consts = mc_ou_constants(&spec, &setup.spec_a, &setup.spec_b, 20_000)?;
            writeln!(w, "coordinate,empirical_var_z,predicted_var_z,rel_error,g,g_se")?;
            let skip = rows.len() / 5; // first fifth treated as burn-in
            for i in 1..spec.dim() {
                let vals: Vec<f64> = rows[skip..].iter().map(|(_, wv)| wv[i]).collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var_z = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n / eta;
                let predicted = ou_stationary_variance(
                    consts.g[(i, 0)],
                    spec.mu()[i],
                    spec.beta()[0],
                    spec.beta()[i],
                )?;
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    i + 1,
                    fmt_f64(var_z),
                    fmt_f64(predicted),
                    fmt_f64((var_z - predicted).abs() / predicted),
                    fmt_f64(consts.g[(i, 0)]),
                    fmt_f64(consts.g_standard_error[(i, 0)])
                )?;
            }
        }
        "norm-ode" => {
            let traj = need_traj()?;
            let rows = load_w_series(&traj)?;
            let s0 = rows[0].1.iter().map(|v| v * v).sum::<f64>();
            // The squared norm relaxes at rate 2 lambda_1 (chain rule).
            let rate = 2.0 * spec.lambda()[0];
            writeln!(w, "iter,t,norm_sq,predicted,rel_error")?;
            for (iter, wv) in &rows {
                let s = wv.iter().map(|v| v * v).sum::<f64>();
                let t = *iter as f64 * eta;
                let predicted = norm_ode_prediction(s0, t, rate)?;
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    iter,
                    fmt_f64(t),
                    fmt_f64(s),
                    fmt_f64(predicted),
                    fmt_f64((s - predicted).abs() / predicted)
                )?;
            }
        }
        "phases" => {
            let traj = need_traj()?;
            let rows = load_w_series(&traj)?;
            writeln!(w, "iter,phase")?;
            for (iter, wv) in &rows {
                let wvec = sgha_core::Vector::from_column_slice(wv);
                let phase = match phase_classifier(&wvec, eta, 0.1, 1.0) {
                    Phase::I => "I",
                    Phase::II => "II",
                    Phase::III => "III",
                };
                writeln!(w, "{iter},{phase}")?;
            }
        }
        "escape" => {
            if saddle < 2 || saddle > spec.dim() {
                return Err(Error::Validation(format!(
                    "--saddle must be a coordinate in 2..={} (1-based)",
                    spec.dim()
                )));
            }
            let seeds: Vec<u64> = (0..escape_seeds).collect();
            let stats = escape_experiment(
                p,
                &spec,
                &setup.spec_a,
                &setup.spec_b,
                &setup.cfg,
                saddle - 1,
                perturbation,
                &seeds,
            )?;
            writeln!(w, "seed,escaped,escape_iter")?;
            for (seed, t) in seeds.iter().zip(&stats.escape_iters) {
                writeln!(w, "{seed},{},{}", t.is_some(), t.map_or(String::new(), |k| k.to_string()))?;
            }
            eprintln!(
                "escape fraction {:.3} over {} seeds (threshold w1^2 > {}, horizon {})",
                stats.fraction,
                seeds.len(),
                fmt_f64(stats.threshold),
                stats.horizon
            );
        }
        other => {
            return Err(Error::Validation(format!(
                "unknown check {other:?}; use ode-slope, ou-variance, norm-ode, phases, or escape"
            )))
        }
    }
    Ok(())
}

fn cmd_experiment(cli: &Cli) -> Result<()> {
    let config = require_config(cli)?;
    let file = load_run_config(config)?;
    let base = config_base(config);
    let problem = match &file.problem {
        ProblemFile::Setting { setting, d, .. } => ProblemSpec::Setting { id: *setting, d: *d },
        files @ ProblemFile::Files { .. } => ProblemSpec::Custom(load_problem(files, &base)?),
    };
    let setting_eta = match &file.problem {
        ProblemFile::Setting { setting, .. } => harness::setting_default_eta(*setting),
        _ => None,
    };
    let eta = file
        .eta
        .or(setting_eta)
        .ok_or_else(|| Error::Validation("no step size: set eta in the config".into()))?;
    let seeds = match &file.seeds {
        Some(s) => s.expand(),
        None => SeedsFile::Master { master: cli.seed.unwrap_or(0), count: 20 }.expand(),
    };
    let output_dir = cli
        .out
        .clone()
        .or(file.output_dir.clone())
        .ok_or_else(|| Error::Validation("no output directory: pass --out or set output_dir".into()))?;
    let cfg = RunConfig {
        problem,
        eta,
        iters: file.iters.unwrap_or(20_000),
        mode: file.mode.as_deref().map(parse_mode).transpose()?.unwrap_or(StepMode::Combined),
        record_stride: file.record_stride.unwrap_or(100),
        oracle: oracle_setup_from_file(&file.oracle)?,
        seeds,
        output_dir: output_dir.clone(),
        jobs: cli.jobs,
    };
    if cli.verbose {
        eprintln!(
            "experiment: {} seeds x {} iterations -> {}",
            cfg.seeds.len(),
            cfg.iters,
            output_dir.display()
        );
    }
    let summary = harness::run_experiment(&cfg)?;
    if cli.verbose {
        for o in &summary.outcomes {
            eprintln!(
                "seed {:>4}: error {:.4e} -> {:.4e}, alignment {:.4}, {:.2}s",
                o.seed,
                o.initial_error,
                o.final_error,
                o.alignment,
                o.wall_ns as f64 / 1e9
            );
        }
    }
    println!("summary written to {}", output_dir.join("summary.csv").display());
    Ok(())
}
