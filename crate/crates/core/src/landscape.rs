//! Enumeration and classification of all equilibria of the GEV Lagrangian.
//!
//! For a full-rank pencil the equilibria are exactly the column selections
//! `X = O^B (Lambda^B)^{-1/2} O^A~_{:,I}` over index sets `I` of size `r`
//! (one canonical representative per orthogonal orbit). Each is classified
//! by the spectrum of the primal Hessian of the dual-eliminated Lagrangian
//! `X -> L(X, D(X))`: the sole stable class is `I = [r]`, PSD with rank
//! `d r - r (r - 1) / 2` (the null space is the orbit tangent space); every
//! other class has strictly negative curvature with a computable bound.

use crate::error::{Error, Result};
use crate::gev::GevProblem;
use crate::matrix::{boxtimes, eig_sym, kron, sym, Mat, Vector, RANK_TOL, SYM_TOL};

/// Default cap on the number of enumerated index sets.
pub const DEFAULT_ENUM_CAP: u128 = 1_000_000;

/// Stability classification of an equilibrium, with curvature data.
#[derive(Debug, Clone, PartialEq)]
pub enum Classification {
    Stable {
        lambda_min: f64,
        hessian_rank: usize,
    },
    Unstable {
        lambda_min: f64,
        hessian_rank: usize,
        /// Upper bound on `lambda_min(H_X)`:
        /// `2 (lambda_{max I} - lambda_{min I^perp}) / ||X_{:,min I^perp}||^2`.
        curvature_bound: f64,
    },
}

impl Classification {
    pub fn is_stable(&self) -> bool {
        matches!(self, Classification::Stable { .. })
    }

    pub fn lambda_min(&self) -> f64 {
        match *self {
            Classification::Stable { lambda_min, .. } => lambda_min,
            Classification::Unstable { lambda_min, .. } => lambda_min,
        }
    }

    pub fn hessian_rank(&self) -> usize {
        match *self {
            Classification::Stable { hessian_rank, .. } => hessian_rank,
            Classification::Unstable { hessian_rank, .. } => hessian_rank,
        }
    }
}

/// A canonical equilibrium `(I, X, Y)` of the Lagrangian.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    /// Sorted 0-based index set `I` selecting eigenvector columns.
    pub index_set: Vec<usize>,
    /// Canonical primal `X` (orbit representative with `Psi = I`).
    pub x: Mat,
    /// Dual `Y = D(X) = X^T A X`.
    pub y: Mat,
    /// Filled by [`classify`]; `None` straight out of enumeration.
    pub classification: Option<Classification>,
}

/// Block data for the singular-B path: `B`'s eigendecomposition split at
/// `rank(B) = m`, `W = O^B^T A O^B` in blocks, and the reduced matrix
/// `A^ = (Lambda_11)^{-1/2} (W11 - W12 W22^{-1} W21) (Lambda_11)^{-1/2}`.
#[derive(Debug, Clone)]
pub struct SingularDecomposition {
    pub m: usize,
    pub o_b: Mat,
    pub lambda_b_11: Vector,
    pub w11: Mat,
    pub w12: Mat,
    pub w21: Mat,
    pub w22: Mat,
    /// Condition number of `W22` (ratio of extreme eigenvalue magnitudes).
    pub w22_cond: f64,
    pub a_hat: Mat,
    pub o_ahat: Mat,
    pub lambda_ahat: Vector,
}

/// Dual candidate `D(X) = X^T A X`, symmetrized.
pub fn dual_at(p: &GevProblem, x: &Mat) -> Result<Mat> {
    if x.nrows() != p.dim() || x.ncols() != p.r() {
        return Err(Error::Dimension(format!(
            "X must be {}x{}, got {:?}",
            p.dim(),
            p.r(),
            x.shape()
        )));
    }
    let y = x.transpose() * p.a() * x;
    Ok((&y + y.transpose()) * 0.5)
}

/// KKT residuals `(||2BXY - 2AX||_F, ||X^T B X - I_r||_F)`.
pub fn kkt_residual(p: &GevProblem, x: &Mat, y: &Mat) -> Result<(f64, f64)> {
    let (gx, gy) = p.grad_lagrangian(x, y)?;
    Ok((gx.norm(), gy.norm()))
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Lexicographically ordered size-`r` subsets of `0..n`.
fn index_sets(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut sets = Vec::new();
    let mut cur: Vec<usize> = (0..r).collect();
    loop {
        sets.push(cur.clone());
        // Advance to the next combination.
        let mut i = r;
        loop {
            if i == 0 {
                return sets;
            }
            i -= 1;
            if cur[i] != i + n - r {
                break;
            }
            if i == 0 {
                return sets;
            }
        }
        cur[i] += 1;
        for j in i + 1..r {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

fn equilibria_from_transform(
    p: &GevProblem,
    transform: &Mat,
    n_selectable: usize,
) -> Result<Vec<Equilibrium>> {
    let r = p.r();
    let count = binomial(n_selectable, r);
    if count > DEFAULT_ENUM_CAP {
        return Err(Error::SizeCap { count, cap: DEFAULT_ENUM_CAP });
    }
    index_sets(n_selectable, r)
        .into_iter()
        .map(|set| {
            let mut x = Mat::zeros(p.dim(), r);
            for (c, &i) in set.iter().enumerate() {
                x.set_column(c, &transform.column(i));
            }
            let y = dual_at(p, &x)?;
            Ok(Equilibrium { index_set: set, x, y, classification: None })
        })
        .collect()
}

/// All `C(d, r)` canonical equilibria of a full-rank, well-gapped pencil,
/// sorted lexicographically by index set.
pub fn enumerate_equilibria(p: &GevProblem) -> Result<Vec<Equilibrium>> {
    let w = p.whiten()?;
    let transform = w.equilibrium_transform();
    equilibria_from_transform(p, &transform, p.dim())
}

/// Primal Hessian at `X`: the second derivative of the dual-eliminated
/// Lagrangian `X -> L(X, D(X))` with respect to `vec(X)` (column-major).
/// `dr x dr`, symmetric:
///
/// `H = 2 [ sym(I_r (x) ((B X X^T - I_d) A) + (A X) |x| (B X))
///          + (X^T A X) (x) B + (X^T B X) (x) A ]`.
///
/// At stable equilibria this is PSD with null space exactly the orbit
/// tangents `X S` (antisymmetric `S`). Note the Kronecker terms appear
/// once each with both orderings; symmetrizing `(X^T A X) (x) B` alone
/// would instead give the (asymmetric) Jacobian of the KKT gradient field,
/// which picks up spurious negative curvature of order (in-block gap)^2
/// along the orbit directions.
pub fn hessian_primal(p: &GevProblem, x: &Mat) -> Result<Mat> {
    if x.nrows() != p.dim() || x.ncols() != p.r() {
        return Err(Error::Dimension(format!(
            "X must be {}x{}, got {:?}",
            p.dim(),
            p.r(),
            x.shape()
        )));
    }
    let (a, b) = (p.a(), p.b());
    let d = p.dim();
    let r = p.r();
    let ax = a * x;
    let bx = b * x;
    let xax = x.transpose() * &ax;
    let xbx = x.transpose() * &bx;
    let bxxt_minus_i = &bx * x.transpose() - Mat::identity(d, d);
    let t = kron(&Mat::identity(r, r), &(&bxxt_minus_i * a)) + boxtimes(&ax, &bx);
    Ok(2.0 * (sym(&t)? + kron(&xax, b) + kron(&xbx, a)))
}

/// Classifies one equilibrium by the spectrum of its primal Hessian.
///
/// `lambda_min < -tol ||H||_2` is unstable (with the curvature bound filled
/// in); otherwise the point is stable and its rank must equal
/// `d r - r (r - 1) / 2`, anything else being a theory violation.
pub fn classify(p: &GevProblem, eq: &Equilibrium, tol: f64) -> Result<Equilibrium> {
    let d = p.dim();
    let r = p.r();
    let h = hessian_primal(p, &eq.x)?;
    let eig = eig_sym(&h, SYM_TOL)?;
    let scale = eig.spectral_norm();
    let lambda_min = eig.values[d * r - 1];
    let threshold = tol * scale;
    let hessian_rank = eig.values.iter().filter(|&&v| v > threshold).count();

    let classification = if lambda_min < -threshold {
        // Unstable: bound from the selected/unselected eigenvalue swap.
        let w = p.whiten()?;
        let transform = w.equilibrium_transform();
        let max_i = *eq.index_set.iter().max().expect("nonempty index set");
        let min_comp = (0..d).find(|i| !eq.index_set.contains(i)).ok_or_else(|| {
            Error::TheoryViolation(
                "full index set classified unstable; no complement column exists".into(),
            )
        })?;
        let lam_max_i = w.lambda_atilde[max_i];
        let lam_min_comp = w.lambda_atilde[min_comp];
        let col = transform.column(min_comp);
        let bound = 2.0 * (lam_max_i - lam_min_comp) / col.norm_squared();
        Classification::Unstable { lambda_min, hessian_rank, curvature_bound: bound }
    } else {
        let expected = d * r - r * (r - 1) / 2;
        if hessian_rank != expected {
            return Err(Error::TheoryViolation(format!(
                "stable equilibrium {:?} has Hessian rank {} (expected {})",
                eq.index_set, hessian_rank, expected
            )));
        }
        Classification::Stable { lambda_min, hessian_rank }
    };
    Ok(Equilibrium {
        index_set: eq.index_set.clone(),
        x: eq.x.clone(),
        y: eq.y.clone(),
        classification: Some(classification),
    })
}

/// Enumerates and classifies in one pass.
pub fn classified_equilibria(p: &GevProblem, tol: f64) -> Result<Vec<Equilibrium>> {
    enumerate_equilibria(p)?
        .iter()
        .map(|eq| classify(p, eq, tol))
        .collect()
}

impl SingularDecomposition {
    /// Builds the block decomposition for `rank(B) = m < d` with full-rank
    /// `A`; requires the reduced `W22` block to be invertible.
    pub fn new(p: &GevProblem) -> Result<Self> {
        let d = p.dim();
        let m = p.b_rank();
        if m == d {
            return Err(Error::BFullRank);
        }
        let o_b = p.b_eigen().vectors.clone();
        let lambda_b_11 = Vector::from_iterator(m, p.b_eigen().values.iter().take(m).cloned());
        let w = o_b.transpose() * p.a() * &o_b;
        let w = (&w + w.transpose()) * 0.5;
        let w11 = w.view((0, 0), (m, m)).into_owned();
        let w12 = w.view((0, m), (m, d - m)).into_owned();
        let w21 = w.view((m, 0), (d - m, m)).into_owned();
        let w22 = w.view((m, m), (d - m, d - m)).into_owned();

        let w22_eig = eig_sym(&w22, SYM_TOL)?;
        let mags: Vec<f64> = w22_eig.values.iter().map(|v| v.abs()).collect();
        let max = mags.iter().cloned().fold(0.0_f64, f64::max);
        let min = mags.iter().cloned().fold(f64::INFINITY, f64::min);
        let cond = if min > 0.0 { max / min } else { f64::INFINITY };
        if min <= RANK_TOL * max || !cond.is_finite() {
            return Err(Error::Decomposition { cond });
        }

        let inv_sqrt_11 =
            Mat::from_diagonal(&Vector::from_iterator(m, lambda_b_11.iter().map(|&v| 1.0 / v.sqrt())));
        let w22_inv_w21 = w22
            .clone()
            .lu()
            .solve(&w21)
            .ok_or(Error::Decomposition { cond })?;
        let schur = &w11 - &w12 * &w22_inv_w21;
        let a_hat = &inv_sqrt_11 * schur * &inv_sqrt_11;
        let a_hat = (&a_hat + a_hat.transpose()) * 0.5;
        let eig = eig_sym(&a_hat, SYM_TOL)?;
        Ok(Self {
            m,
            o_b,
            lambda_b_11,
            w11,
            w12,
            w21,
            w22,
            w22_cond: cond,
            a_hat,
            o_ahat: eig.vectors,
            lambda_ahat: eig.values,
        })
    }
}

/// All `C(m, r)` canonical equilibria of a well-defined singular pencil
/// (`rank(B) = m < d`, full-rank `A`).
pub fn enumerate_equilibria_singular(p: &GevProblem) -> Result<Vec<Equilibrium>> {
    let verdict_tol = {
        let a_eig = eig_sym(p.a(), SYM_TOL)?;
        1e-8 * a_eig.spectral_norm()
    };
    match p.check_well_defined_singular(verdict_tol)? {
        crate::gev::SingularVerdict::WellDefined => {}
        crate::gev::SingularVerdict::IllDefined { .. } => {
            return Err(Error::IllPosed(
                "objective unbounded below on Null(B); no equilibria exist".into(),
            ));
        }
    }
    let dec = SingularDecomposition::new(p)?;
    let d = p.dim();
    let m = dec.m;
    // Upper block Lambda_11^{-1/2} O^A^_{:,I}, lower block -W22^{-1} W12^T (upper).
    let inv_sqrt_11 = Mat::from_diagonal(&Vector::from_iterator(
        m,
        dec.lambda_b_11.iter().map(|&v| 1.0 / v.sqrt()),
    ));
    let upper_all = &inv_sqrt_11 * &dec.o_ahat;
    let lower_all = -dec
        .w22
        .clone()
        .lu()
        .solve(&(dec.w12.transpose() * &upper_all))
        .ok_or(Error::Decomposition { cond: dec.w22_cond })?;
    let mut transform = Mat::zeros(d, m);
    transform.view_mut((0, 0), (m, m)).copy_from(&upper_all);
    transform.view_mut((m, 0), (d - m, m)).copy_from(&lower_all);
    let transform = &dec.o_b * transform;
    equilibria_from_transform(p, &transform, m)
}

/// Finite-difference oracle for the primal Hessian used by tests: central
/// second differences of the scalar `X -> L(X, D(X))` (the dual pinned to
/// its KKT value at each probe point), independent of the closed-form
/// assembly above.
pub fn fd_hessian_primal(p: &GevProblem, x: &Mat, h: f64) -> Result<Mat> {
    let d = p.dim();
    let r = p.r();
    let eval = |x: &Mat| -> Result<f64> {
        let y = dual_at(p, x)?;
        p.lagrangian(x, &y)
    };
    let n = d * r;
    let probe = |alpha: usize, beta: usize, sa: f64, sb: f64| -> Result<f64> {
        let mut xp = x.clone();
        xp[(alpha % d, alpha / d)] += sa * h;
        xp[(beta % d, beta / d)] += sb * h;
        eval(&xp)
    };
    let mut hmat = Mat::zeros(n, n);
    for alpha in 0..n {
        for beta in alpha..n {
            let val = (probe(alpha, beta, 1.0, 1.0)? - probe(alpha, beta, 1.0, -1.0)?
                - probe(alpha, beta, -1.0, 1.0)?
                + probe(alpha, beta, -1.0, -1.0)?)
                / (4.0 * h * h);
            hmat[(alpha, beta)] = val;
            hmat[(beta, alpha)] = val;
        }
    }
    Ok(hmat)
}
