//! The generalized eigenvalue instance `(A, B, r)`: the Lagrangian and its
//! derivatives, assumption checks, whitening, and the ground-truth optimum
//! used for evaluation.
//!
//! The problem is `min -tr(X^T A X)` subject to `X^T B X = I_r` with `A`
//! symmetric and `B` symmetric positive semidefinite; its Lagrangian is
//! `L(X, Y) = -tr(X^T A X) + <Y, X^T B X - I_r>`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{eig_sym, sqrt_psd, Mat, SymEigen, Vector, RANK_TOL, SYM_TOL};

/// A GEV instance: symmetric `A`, symmetric PSD `B`, and a target rank `r`
/// with `1 <= r <= rank(B)`.
#[derive(Debug, Clone)]
pub struct GevProblem {
    a: Mat,
    b: Mat,
    r: usize,
    b_eigen: SymEigen,
    b_rank: usize,
}

/// Whitened form of a full-rank instance: the eigendecomposition of `B` and
/// of `A~ = (Lambda^B)^{-1/2} O^B^T A O^B (Lambda^B)^{-1/2}`.
#[derive(Debug, Clone)]
pub struct WhitenedProblem {
    /// Eigenvectors of `B` (columns, descending eigenvalue order).
    pub o_b: Mat,
    /// Eigenvalues of `B`, descending.
    pub lambda_b: Vector,
    /// The whitened matrix `A~` expressed in the eigenbasis of `B`.
    pub a_tilde: Mat,
    /// Eigenvectors of `A~`.
    pub o_atilde: Mat,
    /// Eigenvalues of `A~`, descending.
    pub lambda_atilde: Vector,
}

impl WhitenedProblem {
    /// The `d x d` transform whose columns are the canonical equilibrium
    /// primal columns: `O^B (Lambda^B)^{-1/2} O^A~`.
    pub fn equilibrium_transform(&self) -> Mat {
        let inv_sqrt = Vector::from_iterator(
            self.lambda_b.len(),
            self.lambda_b.iter().map(|&v| 1.0 / v.sqrt()),
        );
        &self.o_b * Mat::from_diagonal(&inv_sqrt) * &self.o_atilde
    }
}

/// Eigengap report for Assumption-style identifiability checks.
#[derive(Debug, Clone, Copy)]
pub struct GapReport {
    /// `lambda_r(A~) - lambda_{r+1}(A~)`; infinite when `r = d`.
    pub gap: f64,
    pub lambda_r: f64,
    pub lambda_r_plus_1: Option<f64>,
    pub pass: bool,
    pub tol: f64,
}

/// Ground-truth optimum of a full-rank, well-gapped instance.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Canonical optimizer `X* = O^B (Lambda^B)^{-1/2} O^A~_{:,[r]}`.
    pub x_star: Mat,
    /// Optimal objective value `-sum_{i<=r} lambda_i(A~)`.
    pub value: f64,
    /// `B^{1/2} X* X*^T B^{1/2}`, the rotation-invariant target projection.
    pub p_star: Mat,
    /// Cached `B^{1/2}` for error evaluation.
    pub b_sqrt: Mat,
}

/// Outcome of the singular-pencil boundedness check.
#[derive(Debug, Clone)]
pub enum SingularVerdict {
    WellDefined,
    /// The objective is unbounded below; `witness` is a violating null-space
    /// direction of `B`.
    IllDefined { witness: Vector },
}

impl SingularVerdict {
    pub fn is_well_defined(&self) -> bool {
        matches!(self, SingularVerdict::WellDefined)
    }
}

impl GevProblem {
    /// Validates and constructs an instance.
    ///
    /// Requires `A = A^T` and `B = B^T` within relative tolerance, `B` PSD,
    /// and `1 <= r <= rank(B)` (otherwise the feasible set is empty).
    pub fn new(a: Mat, b: Mat, r: usize) -> Result<Self> {
        if a.nrows() != a.ncols() || b.nrows() != b.ncols() || a.nrows() != b.nrows() {
            return Err(Error::Dimension(format!(
                "A and B must be square with equal size, got {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        if a.is_empty() {
            return Err(Error::Validation("empty matrices".into()));
        }
        for m in [&a, &b] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation("matrix entries must be finite".into()));
            }
        }
        let check_sym = |m: &Mat, name: &str| -> Result<()> {
            let asym = (m - m.transpose()).norm();
            let scale = m.norm();
            if asym > SYM_TOL * scale && scale > 0.0 {
                return Err(Error::Validation(format!(
                    "{name} is not symmetric (relative asymmetry {:.3e})",
                    asym / scale
                )));
            }
            Ok(())
        };
        check_sym(&a, "A")?;
        check_sym(&b, "B")?;
        let a = (&a + a.transpose()) * 0.5;
        let b = (&b + b.transpose()) * 0.5;

        let b_eigen = eig_sym(&b, SYM_TOL)?;
        let thr = RANK_TOL * b_eigen.spectral_norm();
        let min = b_eigen.values[b_eigen.values.len() - 1];
        if min < -thr {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        let b_rank = b_eigen.values.iter().filter(|&&v| v > thr).count();
        if r < 1 || r > b_rank {
            return Err(Error::Validation(format!(
                "target rank r = {r} must satisfy 1 <= r <= rank(B) = {b_rank}"
            )));
        }
        Ok(Self { a, b, r, b_eigen, b_rank })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Rank of `B` under the default cutoff.
    pub fn b_rank(&self) -> usize {
        self.b_rank
    }

    /// Eigendecomposition of `B` computed at construction.
    pub fn b_eigen(&self) -> &SymEigen {
        &self.b_eigen
    }

    fn require_full_rank_b(&self) -> Result<()> {
        if self.b_rank < self.dim() {
            return Err(Error::SingularB { rank: self.b_rank, dim: self.dim() });
        }
        Ok(())
    }

    /// Whitens a full-rank instance. Fails with a singular-B error when
    /// `rank(B) < d`, directing the caller to the singular path.
    pub fn whiten(&self) -> Result<WhitenedProblem> {
        self.require_full_rank_b()?;
        let d = self.dim();
        let o_b = self.b_eigen.vectors.clone();
        let lambda_b = self.b_eigen.values.clone();
        let inv_sqrt = Mat::from_diagonal(&Vector::from_iterator(
            d,
            lambda_b.iter().map(|&v| 1.0 / v.sqrt()),
        ));
        let a_tilde = &inv_sqrt * o_b.transpose() * &self.a * &o_b * &inv_sqrt;
        let a_tilde = (&a_tilde + a_tilde.transpose()) * 0.5;
        let eig = eig_sym(&a_tilde, SYM_TOL)?;
        Ok(WhitenedProblem {
            o_b,
            lambda_b,
            a_tilde,
            o_atilde: eig.vectors,
            lambda_atilde: eig.values,
        })
    }

    /// Eigengap `lambda_r(A~) - lambda_{r+1}(A~)` with a pass/fail verdict.
    pub fn check_eigengap(&self, tol: f64) -> Result<GapReport> {
        let w = self.whiten()?;
        let d = self.dim();
        let lambda_r = w.lambda_atilde[self.r - 1];
        if self.r == d {
            return Ok(GapReport {
                gap: f64::INFINITY,
                lambda_r,
                lambda_r_plus_1: None,
                pass: true,
                tol,
            });
        }
        let lambda_r1 = w.lambda_atilde[self.r];
        let gap = lambda_r - lambda_r1;
        Ok(GapReport { gap, lambda_r, lambda_r_plus_1: Some(lambda_r1), pass: gap > tol, tol })
    }

    /// Default eigengap tolerance: `1e-8 * ||A~||_2`.
    pub fn default_gap_tol(&self) -> Result<f64> {
        let w = self.whiten()?;
        let scale = w.lambda_atilde[0].abs().max(w.lambda_atilde[self.dim() - 1].abs());
        Ok(1e-8 * scale)
    }

    fn check_shapes(&self, x: &Mat, y: &Mat) -> Result<()> {
        if x.nrows() != self.dim() || x.ncols() != self.r {
            return Err(Error::Dimension(format!(
                "X must be {}x{}, got {:?}",
                self.dim(),
                self.r,
                x.shape()
            )));
        }
        if y.nrows() != self.r || y.ncols() != self.r {
            return Err(Error::Dimension(format!(
                "Y must be {}x{}, got {:?}",
                self.r,
                self.r,
                y.shape()
            )));
        }
        Ok(())
    }

    /// Lagrangian `L(X, Y) = -tr(X^T A X) + <Y, X^T B X - I_r>`.
    ///
    /// `Y` is symmetrized on ingestion.
    pub fn lagrangian(&self, x: &Mat, y: &Mat) -> Result<f64> {
        self.check_shapes(x, y)?;
        let y = (y + y.transpose()) * 0.5;
        let ax = &self.a * x;
        let obj = -(x.transpose() * ax).trace();
        let constraint = x.transpose() * &self.b * x - Mat::identity(self.r, self.r);
        Ok(obj + (y.transpose() * constraint).trace())
    }

    /// Gradients `(grad_X, grad_Y) = (2BXY - 2AX, X^T B X - I_r)`.
    pub fn grad_lagrangian(&self, x: &Mat, y: &Mat) -> Result<(Mat, Mat)> {
        self.check_shapes(x, y)?;
        let y = (y + y.transpose()) * 0.5;
        let bx = &self.b * x;
        let grad_x = 2.0 * (&bx * y - &self.a * x);
        let grad_y = x.transpose() * bx - Mat::identity(self.r, self.r);
        Ok((grad_x, grad_y))
    }

    /// Canonical optimizer, optimal value, and the target projection
    /// `B^{1/2} X* X*^T B^{1/2}`. Requires the eigengap check to pass.
    pub fn ground_truth(&self) -> Result<GroundTruth> {
        let tol = self.default_gap_tol()?;
        let gap = self.check_eigengap(tol)?;
        if !gap.pass {
            return Err(Error::IllPosed(format!(
                "eigengap {:.3e} below tolerance {:.3e}; the optimum is not identifiable",
                gap.gap, gap.tol
            )));
        }
        let w = self.whiten()?;
        let t = w.equilibrium_transform();
        let x_star = t.columns(0, self.r).into_owned();
        let value = -w.lambda_atilde.iter().take(self.r).sum::<f64>();
        let b_sqrt = sqrt_psd(&self.b, RANK_TOL)?;
        let s = &b_sqrt * &x_star;
        let p_star = &s * s.transpose();
        Ok(GroundTruth { x_star, value, p_star, b_sqrt })
    }

    /// Residual `|L(X, Y) - L(X Psi, Psi^T Y Psi)|` for orthogonal `Psi`.
    pub fn invariance_check(&self, x: &Mat, y: &Mat, psi: &Mat) -> Result<f64> {
        if psi.nrows() != self.r || psi.ncols() != self.r {
            return Err(Error::Dimension(format!(
                "Psi must be {}x{}, got {:?}",
                self.r,
                self.r,
                psi.shape()
            )));
        }
        let orth = (psi * psi.transpose() - Mat::identity(self.r, self.r)).norm();
        if orth > 1e-10 {
            return Err(Error::Validation(format!(
                "Psi is not orthogonal (residual {orth:.3e})"
            )));
        }
        let base = self.lagrangian(x, y)?;
        let rotated = self.lagrangian(&(x * psi), &(psi.transpose() * y * psi))?;
        Ok((base - rotated).abs())
    }

    /// Boundedness check for singular `B` (requires full-rank `A` and
    /// `rank(B) < d`): every null direction `v` of `B` must satisfy either
    /// `v^T A v < -tol`, or `|v^T A v| <= tol` together with
    /// `||P_Col(B) A v|| <= tol`. The check runs on an eigenbasis of `A`
    /// restricted to `Null(B)`, which makes it basis independent.
    pub fn check_well_defined_singular(&self, tol: f64) -> Result<SingularVerdict> {
        let d = self.dim();
        let m = self.b_rank;
        if m == d {
            return Err(Error::BFullRank);
        }
        let a_eig = eig_sym(&self.a, SYM_TOL)?;
        if a_eig.rank(RANK_TOL) < d {
            return Err(Error::Validation(
                "the singular-B analysis requires a full-rank A".into(),
            ));
        }
        // b_eigen is sorted descending, so columns m..d span Null(B).
        let col_basis = self.b_eigen.vectors.columns(0, m).into_owned();
        let null_basis = self.b_eigen.vectors.columns(m, d - m).into_owned();
        let a_nn = null_basis.transpose() * &self.a * &null_basis;
        let a_nn = (&a_nn + a_nn.transpose()) * 0.5;
        let eig = eig_sym(&a_nn, SYM_TOL)?;
        for i in 0..d - m {
            let lam = eig.values[i];
            let v = &null_basis * eig.vectors.column(i);
            if lam > tol {
                return Ok(SingularVerdict::IllDefined { witness: v });
            }
            if lam >= -tol {
                // Zero quadratic form: require A v orthogonal to Col(B).
                let cross = (col_basis.transpose() * &self.a * &v).norm();
                if cross > tol {
                    return Ok(SingularVerdict::IllDefined { witness: v });
                }
            }
        }
        Ok(SingularVerdict::WellDefined)
    }
}

/// Finite-difference helpers used by tests; central differences of the
/// Lagrangian in `X` and `Y` entries.
pub fn fd_grad_lagrangian(p: &GevProblem, x: &Mat, y: &Mat, h: f64) -> Result<(Mat, Mat)> {
    let (d, r) = (p.dim(), p.r());
    let mut gx = Mat::zeros(d, r);
    for i in 0..d {
        for j in 0..r {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[(i, j)] += h;
            xm[(i, j)] -= h;
            gx[(i, j)] = (p.lagrangian(&xp, y)? - p.lagrangian(&xm, y)?) / (2.0 * h);
        }
    }
    let mut gy = Mat::zeros(r, r);
    for i in 0..r {
        for j in 0..r {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[(i, j)] += h;
            ym[(i, j)] -= h;
            gy[(i, j)] = (p.lagrangian(x, &yp)? - p.lagrangian(x, &ym)?) / (2.0 * h);
        }
    }
    Ok((gx, gy))
}

/// `DMatrix` re-export so downstream code can name the concrete type.
pub type Matrix = DMatrix<f64>;
