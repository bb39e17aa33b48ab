//! Seeded stochastic matrix oracles: unbiased streams `A^(k)`, `B^(k)` with
//! `E A^(k) = A` and `E B^(k) = B`, plus moment estimation.
//!
//! Samples are a pure function of `(spec, stream tag, k)`, so streams are
//! random-access: replay is bit-identical and distinct iterations can be
//! sampled concurrently.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::{eig_sym, sqrt_psd, Mat, Vector, RANK_TOL, SYM_TOL};
use crate::seeding::{self, TAG_STREAM_A, TAG_STREAM_B};

/// Oracle flavor.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleKind {
    /// Deterministic: every sample is the target itself.
    Exact,
    /// Sample covariance of `n_draws` i.i.d. vectors from `N(0, target)`;
    /// requires a PSD target. Samples are PSD with rank at most `n_draws`.
    GaussianCovariance { n_draws: usize },
    /// `target + sigma * (G + G^T) / 2` with standard Gaussian `G`.
    AdditiveNoise { sigma: f64 },
}

/// A seeded oracle for one target matrix.
#[derive(Debug, Clone)]
pub struct OracleSpec {
    kind: OracleKind,
    target: Mat,
    seed: u64,
    /// Cached `target^{1/2}` for Gaussian covariance sampling.
    sqrt_target: Option<Mat>,
}

/// Empirical moments of an oracle stream.
#[derive(Debug, Clone)]
pub struct OracleMoments {
    pub mean_estimate: Mat,
    /// Estimate of `E ||M^(k)||_2^2`.
    pub second_moment_bound_estimate: f64,
    pub n_samples: usize,
}

impl OracleSpec {
    /// Validates the target against the requested kind.
    ///
    /// The target must be symmetric; `GaussianCovariance` additionally
    /// requires it PSD (the covariance of a real vector cannot be indefinite)
    /// and `n_draws >= 1`; `AdditiveNoise` requires `sigma >= 0`.
    pub fn new(kind: OracleKind, target: Mat, seed: u64) -> Result<Self> {
        if target.nrows() != target.ncols() {
            return Err(Error::Dimension(format!(
                "oracle target must be square, got {:?}",
                target.shape()
            )));
        }
        let asym = (&target - target.transpose()).norm();
        let scale = target.norm();
        if asym > SYM_TOL * scale && scale > 0.0 {
            return Err(Error::Validation("oracle target must be symmetric".into()));
        }
        let target = (&target + target.transpose()) * 0.5;
        let sqrt_target = match kind {
            OracleKind::Exact => None,
            OracleKind::GaussianCovariance { n_draws } => {
                if n_draws < 1 {
                    return Err(Error::Validation("n_draws must be at least 1".into()));
                }
                let eig = eig_sym(&target, SYM_TOL)?;
                let thr = RANK_TOL * eig.spectral_norm();
                let min = eig.values[eig.values.len() - 1];
                if min < -thr {
                    return Err(Error::NotPsd { min_eigenvalue: min });
                }
                Some(sqrt_psd(&target, RANK_TOL)?)
            }
            OracleKind::AdditiveNoise { sigma } => {
                if !(sigma >= 0.0) {
                    return Err(Error::Validation("sigma must be nonnegative".into()));
                }
                None
            }
        };
        Ok(Self { kind, target, seed, sqrt_target })
    }

    pub fn kind(&self) -> &OracleKind {
        &self.kind
    }

    pub fn target(&self) -> &Mat {
        &self.target
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.target.nrows()
    }

    /// Same oracle, different seed (used by multi-seed sweeps).
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.seed = seed;
        s
    }

    /// Draws the sample for `(stream tag, k)`. Output is exactly symmetric.
    pub fn sample_with_tag(&self, tag: u64, k: u64) -> Mat {
        let d = self.dim();
        match self.kind {
            OracleKind::Exact => self.target.clone(),
            OracleKind::GaussianCovariance { n_draws } => {
                let mut rng = seeding::rng(self.seed, tag, k);
                let sqrt = self.sqrt_target.as_ref().expect("cached at construction");
                let mut acc = Mat::zeros(d, d);
                let mut g = Vector::zeros(d);
                for _ in 0..n_draws {
                    for i in 0..d {
                        g[i] = rng.sample(StandardNormal);
                    }
                    let v = sqrt * &g;
                    // v_i * v_j == v_j * v_i exactly, so acc stays symmetric.
                    acc.ger(1.0, &v, &v, 1.0);
                }
                acc / n_draws as f64
            }
            OracleKind::AdditiveNoise { sigma } => {
                let mut rng = seeding::rng(self.seed, tag, k);
                let g = Mat::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let mut out = self.target.clone();
                for i in 0..d {
                    for j in i..d {
                        let n = sigma * 0.5 * (g[(i, j)] + g[(j, i)]);
                        out[(i, j)] += n;
                        if j != i {
                            out[(j, i)] = out[(i, j)];
                        }
                    }
                }
                out
            }
        }
    }
}

/// Sample for iteration `k` on the default (A) stream.
pub fn next_sample(spec: &OracleSpec, k: u64) -> Mat {
    spec.sample_with_tag(TAG_STREAM_A, k)
}

/// Independent pair `(A^(k), B^(k))` for iteration `k`; independence comes
/// from disjoint stream tags in the seed derivation.
pub fn sampled_pair(spec_a: &OracleSpec, spec_b: &OracleSpec, k: u64) -> Result<(Mat, Mat)> {
    if spec_a.dim() != spec_b.dim() {
        return Err(Error::Dimension(format!(
            "oracle dimensions differ: {} vs {}",
            spec_a.dim(),
            spec_b.dim()
        )));
    }
    Ok((spec_a.sample_with_tag(TAG_STREAM_A, k), spec_b.sample_with_tag(TAG_STREAM_B, k)))
}

/// Streams `n` samples and reports the empirical mean and the average of
/// `||M^(k)||_2^2` (spectral norm squared).
pub fn estimate_moments(spec: &OracleSpec, n: usize) -> Result<OracleMoments> {
    if n < 1 {
        return Err(Error::Validation("n must be at least 1".into()));
    }
    let d = spec.dim();
    let mut mean = Mat::zeros(d, d);
    let mut second = 0.0;
    for k in 0..n {
        let m = spec.sample_with_tag(TAG_STREAM_A, k as u64);
        let eig = eig_sym(&m, SYM_TOL)?;
        second += eig.spectral_norm().powi(2);
        mean += m;
    }
    Ok(OracleMoments {
        mean_estimate: mean / n as f64,
        second_moment_bound_estimate: second / n as f64,
        n_samples: n,
    })
}
