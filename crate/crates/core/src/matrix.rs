//! Dense symmetric-matrix kernels used by every other module: symmetrization,
//! Kronecker and box products, symmetric eigendecomposition, PSD square roots,
//! and Frobenius distances.
//!
//! Matrices are dense `f64` throughout; eigenvalues are always reported in
//! descending order with orthonormal eigenvectors in matching column order.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dense row/column matrix of `f64` used across the crate.
pub type Mat = DMatrix<f64>;
/// Dense column vector of `f64`.
pub type Vector = DVector<f64>;

/// Default relative tolerance for symmetry checks.
pub const SYM_TOL: f64 = 1e-9;
/// Default rank cutoff, relative to the largest eigenvalue magnitude.
pub const RANK_TOL: f64 = 1e-10;

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order and orthonormal eigenvectors in matching column order.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues, `values[0] >= values[1] >= ...`
    pub values: Vector,
    /// Orthonormal eigenvectors as columns, same order as `values`.
    pub vectors: Mat,
}

impl SymEigen {
    /// Largest eigenvalue magnitude (the spectral norm of the input).
    pub fn spectral_norm(&self) -> f64 {
        let n = self.values.len();
        if n == 0 {
            return 0.0;
        }
        self.values[0].abs().max(self.values[n - 1].abs())
    }

    /// Number of eigenvalues with magnitude above `rank_tol * spectral_norm`.
    pub fn rank(&self, rank_tol: f64) -> usize {
        let thr = rank_tol * self.spectral_norm();
        self.values.iter().filter(|&&v| v.abs() > thr).count()
    }

    /// Reassembles `vectors * diag(values) * vectors^T`.
    pub fn reconstruct(&self) -> Mat {
        let d = Mat::from_diagonal(&self.values);
        &self.vectors * d * self.vectors.transpose()
    }
}

/// Unhalved symmetrization `M + M^T`.
///
/// Note this is deliberately not the halved symmetric part; the Hessian
/// assembly in the landscape module relies on this convention.
pub fn sym(m: &Mat) -> Result<Mat> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "sym expects a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m + m.transpose())
}

/// Kronecker product `U (x) V`.
pub fn kron(u: &Mat, v: &Mat) -> Mat {
    u.kronecker(v)
}

/// Box product `U |x| V` for `U in R^{d x r}` and `V in R^{m x k}`: the
/// `dk x mr` block matrix whose `(j, i)` block (block-row `j in [k]`,
/// block-column `i in [r]`) is the outer product `U_{:,i} V_{:,j}^T`.
pub fn boxtimes(u: &Mat, v: &Mat) -> Mat {
    let (d, r) = (u.nrows(), u.ncols());
    let (m, k) = (v.nrows(), v.ncols());
    let mut out = Mat::zeros(d * k, m * r);
    for j in 0..k {
        for i in 0..r {
            for p in 0..d {
                for q in 0..m {
                    out[(j * d + p, i * m + q)] = u[(p, i)] * v[(q, j)];
                }
            }
        }
    }
    out
}

/// Symmetric eigendecomposition with a deterministic canonical form.
///
/// Rejects inputs with `||M - M^T||_F > tol * ||M||_F`, then decomposes the
/// exactly symmetrized matrix. Eigenvalues are sorted descending (stable, so
/// degenerate clusters keep the backend's deterministic order) and each
/// eigenvector is sign-fixed so its largest-magnitude entry is positive.
pub fn eig_sym(m: &Mat, tol: f64) -> Result<SymEigen> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "eig_sym expects a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = (m - m.transpose()).norm();
    let scale = m.norm();
    if asym > tol * scale && scale > 0.0 {
        return Err(Error::NotSymmetric { residual: asym / scale });
    }
    let s = (m + m.transpose()) * 0.5;
    let n = s.nrows();
    let se = nalgebra::SymmetricEigen::new(s);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[b]
            .partial_cmp(&se.eigenvalues[a])
            .expect("eigenvalues are finite")
    });

    let mut values = Vector::zeros(n);
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = se.eigenvalues[src];
        let col = se.eigenvectors.column(src);
        // Sign convention: largest-magnitude entry positive, first index wins ties.
        let mut imax = 0;
        let mut vmax = 0.0_f64;
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > vmax {
                vmax = x.abs();
                imax = i;
            }
        }
        let flip = if col[imax] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, dst)] = flip * col[i];
        }
    }
    Ok(SymEigen { values, vectors })
}

fn psd_function(m: &Mat, rank_tol: f64, f: impl Fn(f64) -> f64) -> Result<Mat> {
    let eig = eig_sym(m, SYM_TOL)?;
    let thr = rank_tol * eig.spectral_norm();
    let min = eig.values[eig.values.len().saturating_sub(1)];
    if min < -thr {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let mapped = Vector::from_iterator(
        eig.values.len(),
        eig.values.iter().map(|&v| if v > thr { f(v) } else { 0.0 }),
    );
    Ok(&eig.vectors * Mat::from_diagonal(&mapped) * eig.vectors.transpose())
}

/// Pseudo-inverse square root of a symmetric PSD matrix:
/// `O diag(f(lambda)) O^T` with `f(lambda) = lambda^{-1/2}` above the rank
/// cutoff and `0` on the (approximate) null space.
pub fn inv_sqrt_psd(m: &Mat, rank_tol: f64) -> Result<Mat> {
    psd_function(m, rank_tol, |v| 1.0 / v.sqrt())
}

/// Symmetric PSD square root, zero on the (approximate) null space.
pub fn sqrt_psd(m: &Mat, rank_tol: f64) -> Result<Mat> {
    psd_function(m, rank_tol, f64::sqrt)
}

/// Frobenius distance `||M1 - M2||_F`.
pub fn frob_dist(m1: &Mat, m2: &Mat) -> Result<f64> {
    if m1.shape() != m2.shape() {
        return Err(Error::Dimension(format!(
            "frob_dist expects matching shapes, got {:?} and {:?}",
            m1.shape(),
            m2.shape()
        )));
    }
    Ok((m1 - m2).norm())
}

/// Haar-distributed random orthogonal matrix: QR of a standard Gaussian
/// matrix with the R-diagonal sign correction.
pub fn random_orthogonal<R: Rng>(d: usize, rng: &mut R) -> Mat {
    let g = Mat::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}
