//! The stochastic generalized Hebbian solver: primal/dual updates driven by
//! unbiased matrix samples, trajectory recording, the projection-distance
//! error metric, and step-size/iteration heuristics.
//!
//! Two step modes are provided. `TwoStep` applies the updates literally as a
//! pair (the dual uses the stale `Y^(k)` in the primal step); `Combined`
//! substitutes the same-sample dual `X^T A^(k) X` into the primal step. Both
//! reuse the iteration's single `(A^(k), B^(k))` pair.

use std::time::Instant;

use crate::diffusion::CommutativeSpec;
use crate::error::{Error, Result};
use crate::gev::{GevProblem, GroundTruth};
use crate::matrix::{Mat, Vector};
use crate::oracle::{sampled_pair, OracleSpec};
use crate::seeding::{self, TAG_INIT};

/// Iterate divergence threshold: `||X||_F > 1000 sqrt(r)` aborts.
pub const DIVERGENCE_NORM_FACTOR: f64 = 1e3;

/// Which update rule drives the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    /// Literal primal/dual pair: the primal step uses the previous dual.
    TwoStep,
    /// Single combined update with the same-sample dual substituted.
    Combined,
}

/// Solver configuration.
#[derive(Debug, Clone)]
pub struct SghaConfig {
    pub eta: f64,
    pub max_iters: usize,
    pub mode: StepMode,
    pub record_stride: usize,
    pub init_seed: u64,
    /// Stop early once the recorded error falls below this value.
    pub stop_error: Option<f64>,
}

impl SghaConfig {
    pub fn new(eta: f64, max_iters: usize) -> Self {
        Self {
            eta,
            max_iters,
            mode: StepMode::Combined,
            record_stride: 1,
            init_seed: 0,
            stop_error: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::Validation("eta must be positive and finite".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::Validation("max_iters must be at least 1".into()));
        }
        if self.record_stride < 1 {
            return Err(Error::Validation("record_stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Solver iterate.
#[derive(Debug, Clone)]
pub struct SghaState {
    pub x: Mat,
    pub y: Mat,
    pub k: usize,
}

/// One recorded trajectory point.
#[derive(Debug, Clone)]
pub struct Record {
    pub iter: usize,
    pub error: f64,
    pub lagrangian: f64,
    /// `||X^T B X - I_r||_F`.
    pub feasibility: f64,
    pub wallclock_ns: u64,
    /// Whitened iterate, recorded for `r = 1` when a commutative spec is
    /// attached to the run.
    pub w: Option<Vector>,
}

/// Recorded solver history; iterations strictly increase, starting at 0.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub records: Vec<Record>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    pub fn initial_error(&self) -> Option<f64> {
        self.records.first().map(|r| r.error)
    }

    pub fn final_error(&self) -> Option<f64> {
        self.records.last().map(|r| r.error)
    }
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub final_state: SghaState,
}

/// Gaussian initialization: `X` entries i.i.d. `N(0, 1/d)`, `Y = 0`.
pub fn init_state(d: usize, r: usize, seed: u64) -> SghaState {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = seeding::rng(seed, TAG_INIT, 0);
    let scale = (1.0 / d as f64).sqrt();
    let x = Mat::from_fn(d, r, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    SghaState { x, y: Mat::zeros(r, r), k: 0 }
}

fn check_finite(state: &SghaState) -> Result<()> {
    let r = state.x.ncols() as f64;
    let norm = state.x.norm();
    if state.x.iter().any(|v| !v.is_finite())
        || state.y.iter().any(|v| !v.is_finite())
        || norm > DIVERGENCE_NORM_FACTOR * r.sqrt()
    {
        return Err(Error::Divergence {
            at_iter: state.k,
            last_recorded_iter: None,
            last_error: None,
        });
    }
    Ok(())
}

/// Literal two-phase update:
/// `X' = X - eta (B_k X Y - A_k X)`, `Y' = X^T A_k X` (pre-update `X`).
pub fn step_two_phase(state: &SghaState, a_k: &Mat, b_k: &Mat, eta: f64) -> Result<SghaState> {
    let ax = a_k * &state.x;
    let bx = b_k * &state.x;
    let x_next = &state.x - eta * (&bx * &state.y - &ax);
    let y_raw = state.x.transpose() * &ax;
    let y_next = (&y_raw + y_raw.transpose()) * 0.5;
    let next = SghaState { x: x_next, y: y_next, k: state.k + 1 };
    check_finite(&next)?;
    Ok(next)
}

/// Combined update `X' = X - eta (B_k X X^T - I_d) A_k X`, evaluated as
/// `B_k X (X^T A_k X) - A_k X`; the dual is tracked for reporting.
pub fn step_combined(state: &SghaState, a_k: &Mat, b_k: &Mat, eta: f64) -> Result<SghaState> {
    let ax = a_k * &state.x;
    let y_raw = state.x.transpose() * &ax;
    let bx = b_k * &state.x;
    let x_next = &state.x - eta * (&bx * &y_raw - &ax);
    let y_next = (&y_raw + y_raw.transpose()) * 0.5;
    let next = SghaState { x: x_next, y: y_next, k: state.k + 1 };
    check_finite(&next)?;
    Ok(next)
}

/// Optimization error `||B^{1/2} X X^T B^{1/2} - B^{1/2} X* X*^T B^{1/2}||_F`,
/// invariant to right-multiplication of `X` by any orthogonal matrix.
pub fn optimization_error(truth: &GroundTruth, x: &Mat) -> f64 {
    let s = &truth.b_sqrt * x;
    let p = &s * s.transpose();
    (p - &truth.p_star).norm()
}

/// Subspace alignment `tr(X*^T B X X^T B X*) / r`; equals 1 at the optimum
/// and is invariant to orthogonal rotations of `X`.
pub fn subspace_alignment(truth: &GroundTruth, x: &Mat) -> f64 {
    let m = (&truth.b_sqrt * &truth.x_star).transpose() * (&truth.b_sqrt * x);
    m.norm_squared() / truth.x_star.ncols() as f64
}

fn make_record(
    p: &GevProblem,
    truth: &GroundTruth,
    state: &SghaState,
    started: Instant,
    w_spec: Option<&CommutativeSpec>,
) -> Record {
    let error = optimization_error(truth, &state.x);
    let lagrangian = p.lagrangian(&state.x, &state.y).unwrap_or(f64::NAN);
    let feasibility =
        (state.x.transpose() * p.b() * &state.x - Mat::identity(p.r(), p.r())).norm();
    let w = match w_spec {
        Some(spec) if p.r() == 1 => {
            let w = spec.w_process(&state.x);
            Some(Vector::from_column_slice(w.column(0).as_slice()))
        }
        _ => None,
    };
    Record {
        iter: state.k,
        error,
        lagrangian,
        feasibility,
        wallclock_ns: started.elapsed().as_nanos() as u64,
        w,
    }
}

/// Runs the solver from a given state, recording every `record_stride`
/// iterations (plus the initial and final states). Divergence yields an
/// error carrying the last finite record's position.
pub fn run_from(
    p: &GevProblem,
    truth: &GroundTruth,
    start: SghaState,
    spec_a: &OracleSpec,
    spec_b: &OracleSpec,
    cfg: &SghaConfig,
    w_spec: Option<&CommutativeSpec>,
) -> Result<RunOutput> {
    cfg.validate()?;
    if spec_a.dim() != p.dim() || spec_b.dim() != p.dim() {
        return Err(Error::Dimension("oracle dimension does not match the problem".into()));
    }
    if start.x.nrows() != p.dim() || start.x.ncols() != p.r() {
        return Err(Error::Dimension("start state does not match the problem".into()));
    }
    let started = Instant::now();
    let mut state = start;
    let mut trajectory = Trajectory::default();
    trajectory.records.push(make_record(p, truth, &state, started, w_spec));

    let step = match cfg.mode {
        StepMode::TwoStep => step_two_phase,
        StepMode::Combined => step_combined,
    };
    let base_k = state.k;
    for k in base_k..base_k + cfg.max_iters {
        let (a_k, b_k) = sampled_pair(spec_a, spec_b, k as u64)?;
        state = step(&state, &a_k, &b_k, cfg.eta).map_err(|e| match e {
            Error::Divergence { at_iter, .. } => Error::Divergence {
                at_iter,
                last_recorded_iter: trajectory.last().map(|r| r.iter),
                last_error: trajectory.last().map(|r| r.error),
            },
            other => other,
        })?;
        let is_last = state.k == base_k + cfg.max_iters;
        if state.k % cfg.record_stride == 0 || is_last {
            let record = make_record(p, truth, &state, started, w_spec);
            let reached = cfg.stop_error.map(|s| record.error <= s).unwrap_or(false);
            if trajectory.last().map(|r| r.iter) != Some(record.iter) {
                trajectory.records.push(record);
            }
            if reached {
                break;
            }
        }
    }
    Ok(RunOutput { trajectory, final_state: state })
}

/// Runs the solver from the seeded Gaussian initialization.
pub fn run(
    p: &GevProblem,
    truth: &GroundTruth,
    spec_a: &OracleSpec,
    spec_b: &OracleSpec,
    cfg: &SghaConfig,
    w_spec: Option<&CommutativeSpec>,
) -> Result<RunOutput> {
    let start = init_state(p.dim(), p.r(), cfg.init_seed);
    run_from(p, truth, start, spec_a, spec_b, cfg, w_spec)
}

/// Step-size rule `eta = c eps mu_min gap / phi` with the documented
/// constant `c = 1` (the asymptotic rate hides constants; `c` is exposed).
pub fn recommend_step_size(
    spec: &CommutativeSpec,
    consts: &crate::diffusion::DiffusionConstants,
    eps: f64,
) -> Result<f64> {
    recommend_step_size_with(spec, consts, eps, 1.0)
}

/// Step-size rule with an explicit proportionality constant.
pub fn recommend_step_size_with(
    spec: &CommutativeSpec,
    consts: &crate::diffusion::DiffusionConstants,
    eps: f64,
    c: f64,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Validation("eps must be positive".into()));
    }
    let gap = spec.gap();
    if gap <= 0.0 {
        return Err(Error::IllPosed(format!("nonpositive eigenvalue-ratio gap {gap}")));
    }
    if !(consts.phi > 0.0) {
        return Err(Error::IllPosed(format!(
            "phi = {} must be positive for the step-size rule",
            consts.phi
        )));
    }
    Ok(c * eps * spec.mu_min() * gap / consts.phi)
}

/// Iteration-count heuristic: continuous horizon
/// `T = (mu_max / mu_min) / (mu_1 gap) log(1/eta)` and sample count
/// `N = T / eta`, with `eta` from the step-size rule.
pub fn predicted_iterations(
    spec: &CommutativeSpec,
    consts: &crate::diffusion::DiffusionConstants,
    eps: f64,
) -> Result<(f64, f64)> {
    let eta = recommend_step_size(spec, consts, eps)?;
    let t = (spec.mu_max() / spec.mu_min()) / (spec.mu1() * spec.gap()) * (1.0 / eta).ln();
    Ok((t, t / eta))
}
