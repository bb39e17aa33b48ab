//! Empirical diagnostics for the solver's diffusion limits in the
//! commutative case: the whitened process `w`, the ratio process and its
//! limiting exponential decay, the rescaled process `z` with its
//! Ornstein-Uhlenbeck saddle-escape and local-fluctuation behavior, the
//! norm ODE, and the Monte Carlo diffusion constants `G` and `phi`.
//!
//! All closed forms here are analytic evaluations; the empirical side is
//! always an actual solver run.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gev::GevProblem;
use crate::landscape::dual_at;
use crate::matrix::{eig_sym, Mat, Vector, RANK_TOL, SYM_TOL};
use crate::oracle::{sampled_pair, OracleSpec};
use crate::seeding::{self, TAG_PERTURB};
use crate::sgha::{step_combined, step_two_phase, SghaConfig, SghaState, StepMode};

/// Shared eigenstructure of a commuting pencil, reindexed so the eigenvalue
/// ratios `beta_i = lambda_i / mu_i` are in descending order.
#[derive(Debug, Clone)]
pub struct CommutativeSpec {
    o: Mat,
    lambda: Vector,
    mu: Vector,
    beta: Vector,
    /// `perm[new] = old`: position in the pre-reindex (descending-`mu`) order.
    perm: Vec<usize>,
}

impl CommutativeSpec {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Shared eigenbasis columns, reindexed.
    pub fn o(&self) -> &Mat {
        &self.o
    }

    /// Eigenvalues of `A` in the shared basis, reindexed.
    pub fn lambda(&self) -> &Vector {
        &self.lambda
    }

    /// Eigenvalues of `B` in the shared basis, reindexed.
    pub fn mu(&self) -> &Vector {
        &self.mu
    }

    /// Ratios `beta_i = lambda_i / mu_i`, descending.
    pub fn beta(&self) -> &Vector {
        &self.beta
    }

    /// Reindexing permutation (`perm[new] = old`).
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// `beta_1 - beta_2`; infinite for one-dimensional pencils.
    pub fn gap(&self) -> f64 {
        if self.dim() < 2 {
            f64::INFINITY
        } else {
            self.beta[0] - self.beta[1]
        }
    }

    /// `mu` of the dominant coordinate.
    pub fn mu1(&self) -> f64 {
        self.mu[0]
    }

    /// `min_{i != 1} mu_i`.
    pub fn mu_min(&self) -> f64 {
        self.mu.iter().skip(1).cloned().fold(f64::INFINITY, f64::min)
    }

    /// `max_{i != 1} mu_i`.
    pub fn mu_max(&self) -> f64 {
        self.mu.iter().skip(1).cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// The whitening map `X -> (Lambda^B)^{1/2} O^T X`.
    pub fn w_transform(&self) -> Mat {
        let d = self.dim();
        let sqrt_mu = Mat::from_diagonal(&Vector::from_iterator(
            d,
            self.mu.iter().map(|&m| m.sqrt()),
        ));
        sqrt_mu * self.o.transpose()
    }

    /// Whitened iterate `W = (Lambda^B)^{1/2} O^T X`, satisfying
    /// `X^T B X = W^T W`.
    pub fn w_process(&self, x: &Mat) -> Mat {
        assert_eq!(x.nrows(), self.dim(), "X has {} rows, expected {}", x.nrows(), self.dim());
        self.w_transform() * x
    }

    /// `B^{-1/2} O = O diag(mu^{-1/2})`, used by the diffusion constants.
    fn b_inv_sqrt_o(&self) -> Mat {
        let d = self.dim();
        let inv_sqrt = Mat::from_diagonal(&Vector::from_iterator(
            d,
            self.mu.iter().map(|&m| 1.0 / m.sqrt()),
        ));
        &self.o * inv_sqrt
    }

    /// Canonical primal point whose whitened image is `e_i`.
    pub fn coordinate_equilibrium(&self, i: usize) -> Mat {
        let d = self.dim();
        assert!(i < d);
        let mut x = Mat::zeros(d, 1);
        let col = self.o.column(i) / self.mu[i].sqrt();
        x.set_column(0, &col);
        x
    }
}

/// Monte Carlo estimates of the diffusion coefficients `G_{j,i}` and
/// `phi = sum_i G_{i,1}`.
#[derive(Debug, Clone)]
pub struct DiffusionConstants {
    /// `G_{j,i}` estimates (row `j`, column `i`), all nonnegative.
    pub g: Mat,
    /// Standard error of each `G_{j,i}` estimate.
    pub g_standard_error: Mat,
    /// Column-1 sum `sum_i G_{i,1}` (including `G_{1,1}`).
    pub phi: f64,
    pub n_mc: usize,
}

impl DiffusionConstants {
    /// Constants with only `phi` filled in (for the step-size rule).
    pub fn from_phi(phi: f64) -> Self {
        Self { g: Mat::zeros(0, 0), g_standard_error: Mat::zeros(0, 0), phi, n_mc: 0 }
    }

    /// Same constants with `G` and `phi` scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            g: &self.g * factor,
            g_standard_error: &self.g_standard_error * factor,
            phi: self.phi * factor,
            n_mc: self.n_mc,
        }
    }
}

/// Ratio value `|w_i|^{mu_j} / |w_j|^{mu_i}` with its log form.
#[derive(Debug, Clone, Copy)]
pub struct VRatio {
    pub value: f64,
    /// `mu_j log|w_i| - mu_i log|w_j|`, numerically stable for tiny values.
    pub log_value: f64,
}

/// Least-squares fit of `log v` against `t = k eta`.
#[derive(Debug, Clone, Copy)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_used: usize,
    /// Points dropped because `v <= 0`.
    pub n_trimmed: usize,
}

/// Convergence phase of a whitened iterate (`r = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Near a saddle: `|w_1| <= eta^{1/2 + delta}`.
    I,
    /// Mid-trajectory descent.
    II,
    /// Near the optimum: `w_1^2 / ||w||^2 > 1 - kappa eta^{1 + 2 delta}`.
    III,
}

/// Escape statistics from repeated saddle-initialized runs.
#[derive(Debug, Clone)]
pub struct EscapeStats {
    /// Per-seed first iteration with `w_1^2 > eta`, if reached in the horizon.
    pub escape_iters: Vec<Option<usize>>,
    pub fraction: f64,
    /// The exit threshold on `w_1^2` (the step size).
    pub threshold: f64,
    pub horizon: usize,
}

/// Tests `||AB - BA||_F <= tol ||A||_F ||B||_F` and, when it holds, returns
/// the shared eigenbasis: `B` is diagonalized first, then `A` is
/// block-diagonalized within each eigenvalue cluster of `B`.
///
/// Requires `A` symmetric and `B` symmetric positive definite. Returns
/// `None` for noncommuting pencils.
pub fn check_commutative(a: &Mat, b: &Mat, tol: f64) -> Result<Option<CommutativeSpec>> {
    if a.nrows() != a.ncols() || b.nrows() != b.ncols() || a.nrows() != b.nrows() {
        return Err(Error::Dimension("A and B must be square with equal size".into()));
    }
    let d = a.nrows();
    for (m, name) in [(a, "A"), (b, "B")] {
        let asym = (m - m.transpose()).norm();
        if asym > SYM_TOL * m.norm() && m.norm() > 0.0 {
            return Err(Error::Validation(format!("{name} must be symmetric")));
        }
    }
    let b_eig = eig_sym(b, SYM_TOL)?;
    let scale_b = b_eig.spectral_norm();
    if b_eig.values[d - 1] <= RANK_TOL * scale_b {
        return Err(Error::Validation("B must be positive definite".into()));
    }

    let commutator = (a * b - b * a).norm();
    if commutator > tol * a.norm() * b.norm() {
        return Ok(None);
    }

    // Rotate within each eigenvalue cluster of B so A becomes diagonal there.
    let mut o = b_eig.vectors.clone();
    let t = o.transpose() * a * &o;
    let cluster_tol = 1e-8 * scale_b;
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && (b_eig.values[end - 1] - b_eig.values[end]).abs() <= cluster_tol {
            end += 1;
        }
        if end - start > 1 {
            let block = t.view((start, start), (end - start, end - start)).into_owned();
            let block = (&block + block.transpose()) * 0.5;
            let be = eig_sym(&block, SYM_TOL)?;
            let rotated = o.columns(start, end - start) * be.vectors;
            o.view_mut((0, start), (d, end - start)).copy_from(&rotated);
        }
        start = end;
    }

    let m = o.transpose() * a * &o;
    let mut lambda = Vector::zeros(d);
    for i in 0..d {
        lambda[i] = m[(i, i)];
    }
    let offdiag = (&m - Mat::from_diagonal(&lambda)).norm();
    if offdiag > (100.0 * tol * a.norm()).max(1e-7 * a.norm()) {
        // Commutator passed the threshold but no joint eigenbasis emerged.
        return Ok(None);
    }

    let mu = Vector::from_iterator(d, b_eig.values.iter().cloned());
    let mut beta = Vector::zeros(d);
    for i in 0..d {
        beta[i] = lambda[i] / mu[i];
        if !beta[i].is_finite() || beta[i] == 0.0 {
            return Err(Error::Validation(format!(
                "eigenvalue ratio beta_{} = {} must be finite and nonzero",
                i + 1,
                beta[i]
            )));
        }
    }

    let mut perm: Vec<usize> = (0..d).collect();
    perm.sort_by(|&x, &y| beta[y].partial_cmp(&beta[x]).expect("finite ratios"));
    let mut o_sorted = Mat::zeros(d, d);
    let mut lambda_sorted = Vector::zeros(d);
    let mut mu_sorted = Vector::zeros(d);
    let mut beta_sorted = Vector::zeros(d);
    for (new, &old) in perm.iter().enumerate() {
        o_sorted.set_column(new, &o.column(old));
        lambda_sorted[new] = lambda[old];
        mu_sorted[new] = mu[old];
        beta_sorted[new] = beta[old];
    }
    Ok(Some(CommutativeSpec {
        o: o_sorted,
        lambda: lambda_sorted,
        mu: mu_sorted,
        beta: beta_sorted,
        perm,
    }))
}

/// Tracked ratio `v_{i,j} = |w_i|^{mu_j} / |w_j|^{mu_i}` (0-based indices).
pub fn v_ratio(w: &Vector, i: usize, j: usize, spec: &CommutativeSpec) -> Result<VRatio> {
    let d = spec.dim();
    if i >= d || j >= d || i == j {
        return Err(Error::Validation(format!(
            "indices (i, j) = ({i}, {j}) must be distinct and below {d}"
        )));
    }
    if w[j] == 0.0 {
        return Err(Error::UndefinedRatio { j });
    }
    let (mu_i, mu_j) = (spec.mu[i], spec.mu[j]);
    let wi = w[i].abs();
    let wj = w[j].abs();
    let value = wi.powf(mu_j) / wj.powf(mu_i);
    let log_value = mu_j * wi.ln() - mu_i * wj.ln();
    Ok(VRatio { value, log_value })
}

/// Closed-form ratio decay `x0 exp(mu_j mu_i (beta_i - beta_j) t)`.
pub fn ode_prediction(x0: f64, t: f64, i: usize, j: usize, spec: &CommutativeSpec) -> f64 {
    x0 * (spec.mu[j] * spec.mu[i] * (spec.beta[i] - spec.beta[j]) * t).exp()
}

/// Least-squares slope of `log v` against `t = k eta`, with `R^2`.
pub fn fit_decay_slope(points: &[(usize, f64)], eta: f64) -> Result<SlopeFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|&(k, v)| (k as f64 * eta, v.ln()))
        .collect();
    let n_trimmed = points.len() - usable.len();
    if usable.len() < 10 {
        return Err(Error::Validation(format!(
            "need at least 10 positive records to fit a slope, got {}",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let mean_t = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    for &(t, y) in &usable {
        stt += (t - mean_t) * (t - mean_t);
        sty += (t - mean_t) * (y - mean_y);
    }
    if stt == 0.0 {
        return Err(Error::Validation("all records share one time point".into()));
    }
    let slope = sty / stt;
    let intercept = mean_y - slope * mean_t;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for &(t, y) in &usable {
        ss_res += (y - (intercept + slope * t)).powi(2);
        ss_tot += (y - mean_y).powi(2);
    }
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(SlopeFit { slope, intercept, r_squared, n_used: usable.len(), n_trimmed })
}

/// Monte Carlo estimate of every `G_{j,i}` from `n_mc` independent oracle
/// pairs, with per-entry standard errors and `phi = sum_i G_{i,1}`.
///
/// `G_{j,i} = E[(OᵀB_kO)_{j,i} sqrt(mu_j/mu_i) (Λ~_k)_{i,i} - mu_j (Λ~_k)_{j,i}]^2`
/// where `Λ~_k = OᵀB^{-1/2} A_k B^{-1/2} O`.
pub fn mc_ou_constants(
    spec: &CommutativeSpec,
    spec_a: &OracleSpec,
    spec_b: &OracleSpec,
    n_mc: usize,
) -> Result<DiffusionConstants> {
    if n_mc < 1 {
        return Err(Error::Validation("n_mc must be at least 1".into()));
    }
    let d = spec.dim();
    if spec_a.dim() != d || spec_b.dim() != d {
        return Err(Error::Dimension("oracle dimension does not match the spec".into()));
    }
    let q = spec.b_inv_sqrt_o();
    let mut sum = Mat::zeros(d, d);
    let mut sum_sq = Mat::zeros(d, d);
    for k in 0..n_mc {
        let (a_k, b_k) = sampled_pair(spec_a, spec_b, k as u64)?;
        let lam_hat = spec.o.transpose() * b_k * &spec.o;
        let lam_tilde = q.transpose() * a_k * &q;
        for i in 0..d {
            for j in 0..d {
                let term = lam_hat[(j, i)] * (spec.mu[j] / spec.mu[i]).sqrt() * lam_tilde[(i, i)]
                    - spec.mu[j] * lam_tilde[(j, i)];
                let sq = term * term;
                sum[(j, i)] += sq;
                sum_sq[(j, i)] += sq * sq;
            }
        }
    }
    let n = n_mc as f64;
    let g = &sum / n;
    let mut se = Mat::zeros(d, d);
    for idx in 0..d * d {
        let var = (sum_sq[idx] / n - g[idx] * g[idx]).max(0.0);
        se[idx] = (var / n).sqrt();
    }
    let phi = (0..d).map(|i| g[(i, 0)]).sum();
    Ok(DiffusionConstants { g, g_standard_error: se, phi, n_mc })
}

/// Stationary variance `G_{i,1} / (2 mu_i (beta_1 - beta_i))` of the
/// local-fluctuation O-U mode.
pub fn ou_stationary_variance(g_i1: f64, mu_i: f64, beta_1: f64, beta_i: f64) -> Result<f64> {
    if !(mu_i > 0.0) {
        return Err(Error::Validation("mu_i must be positive".into()));
    }
    if beta_1 <= beta_i {
        return Err(Error::UnstableMode { beta_1, beta_i });
    }
    Ok(g_i1 / (2.0 * mu_i * (beta_1 - beta_i)))
}

/// Rescaled process `z = eta^{-1/2} w`.
pub fn z_process(w: &Vector, eta: f64) -> Result<Vector> {
    if !(eta > 0.0) {
        return Err(Error::Validation("eta must be positive".into()));
    }
    Ok(w / eta.sqrt())
}

/// Closed-form solution of the squared-norm ODE `dx = -lambda_1 (x^2 - x) dt`
/// with `x(0) = x0 > 0`: the logistic relaxation to 1.
pub fn norm_ode_prediction(x0: f64, t: f64, lambda_1: f64) -> Result<f64> {
    if !(x0 > 0.0) {
        return Err(Error::Domain(format!("x0 must be positive, got {x0}")));
    }
    if x0 == 1.0 {
        return Ok(1.0);
    }
    let decay = (-lambda_1 * t).exp();
    if x0 > 1.0 {
        Ok(1.0 / (1.0 - (x0 - 1.0) / x0 * decay))
    } else {
        Ok(1.0 / (1.0 + (1.0 - x0) / x0 * decay))
    }
}

/// Classifies a whitened iterate into the saddle / descent / fluctuation
/// phase (`r = 1`). Thresholds follow the limit-theorem preconditions with
/// configurable `delta` (default 0.1) and `kappa` (default 1).
pub fn phase_classifier(w: &Vector, eta: f64, delta: f64, kappa: f64) -> Phase {
    let w1 = w[0].abs();
    if w1 <= eta.powf(0.5 + delta) {
        return Phase::I;
    }
    let n2 = w.norm_squared();
    if n2 > 0.0 && w1 * w1 / n2 > 1.0 - kappa * eta.powf(1.0 + 2.0 * delta) {
        return Phase::III;
    }
    Phase::II
}

/// Runs seeded solver trajectories from the unstable coordinate equilibrium
/// `i` (plus an entrywise Gaussian perturbation of scale `perturbation`) and
/// records, for each seed, the first iteration with `w_1^2 > eta`.
///
/// Oracle and perturbation streams are derived per seed, so the experiment
/// is reproducible and parallelizes over seeds deterministically.
#[allow(clippy::too_many_arguments)]
pub fn escape_experiment(
    p: &GevProblem,
    spec: &CommutativeSpec,
    spec_a: &OracleSpec,
    spec_b: &OracleSpec,
    cfg: &SghaConfig,
    saddle_index: usize,
    perturbation: f64,
    seeds: &[u64],
) -> Result<EscapeStats> {
    cfg.validate()?;
    if p.r() != 1 {
        return Err(Error::Validation("saddle-escape analysis applies to r = 1".into()));
    }
    if saddle_index == 0 {
        return Err(Error::NotASaddle { index: saddle_index });
    }
    if saddle_index >= spec.dim() {
        return Err(Error::Validation(format!(
            "saddle index {saddle_index} out of range for dimension {}",
            spec.dim()
        )));
    }
    let x_eq = spec.coordinate_equilibrium(saddle_index);
    let w_row = spec.o.column(0) * spec.mu[0].sqrt();

    let escape_iters: Vec<Result<Option<usize>>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = seeding::rng(seed, TAG_PERTURB, 0);
            let noise =
                Mat::from_fn(p.dim(), 1, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x0 = &x_eq + perturbation * noise;
            let sa = spec_a.with_seed(seeding::mix(seed, 0xA));
            let sb = spec_b.with_seed(seeding::mix(seed, 0xB));
            let y0 = dual_at(p, &x0)?;
            let mut state = SghaState { x: x0, y: y0, k: 0 };
            let step = match cfg.mode {
                StepMode::TwoStep => step_two_phase,
                StepMode::Combined => step_combined,
            };
            for k in 0..cfg.max_iters {
                let (a_k, b_k) = sampled_pair(&sa, &sb, k as u64)?;
                state = step(&state, &a_k, &b_k, cfg.eta)?;
                let w1 = w_row.dot(&state.x.column(0));
                if w1 * w1 > cfg.eta {
                    return Ok(Some(state.k));
                }
            }
            Ok(None)
        })
        .collect();

    let mut times = Vec::with_capacity(seeds.len());
    for r in escape_iters {
        times.push(r?);
    }
    let escaped = times.iter().filter(|t| t.is_some()).count();
    Ok(EscapeStats {
        fraction: escaped as f64 / seeds.len().max(1) as f64,
        escape_iters: times,
        threshold: cfg.eta,
        horizon: cfg.max_iters,
    })
}
