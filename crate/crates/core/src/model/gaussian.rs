use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative size of the ridge added to a covariance whose Cholesky factorization fails.
pub const RIDGE_SCALE: f64 = 1e-8;

/// Cholesky factor of a covariance plus the normalizing constant of its Gaussian.
///
/// If the first factorization fails, `eps * I` with `eps = 1e-8 * trace / d` is added
/// and the factorization retried once.
#[derive(Debug, Clone)]
pub struct GaussianFactor {
    lower: DMatrix<f64>,
    log_norm: f64,
    regularized: bool,
}

impl GaussianFactor {
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        let d = sigma.nrows();
        if d == 0 || sigma.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: sigma.ncols(),
            });
        }
        let (chol, regularized) = match sigma.clone().cholesky() {
            Some(c) => (c, false),
            None => {
                let eps = RIDGE_SCALE * sigma.trace() / d as f64;
                if !(eps.is_finite() && eps > 0.0) {
                    return Err(Error::SingularCovariance { dim: d });
                }
                let ridged = sigma + DMatrix::identity(d, d) * eps;
                let c = ridged
                    .cholesky()
                    .ok_or(Error::SingularCovariance { dim: d })?;
                log::debug!("covariance regularized with ridge {eps:.3e}");
                (c, true)
            }
        };
        let lower = chol.unpack();
        let log_det_half: f64 = lower.diagonal().iter().map(|v| v.ln()).sum();
        if !log_det_half.is_finite() {
            return Err(Error::SingularCovariance { dim: d });
        }
        Ok(Self {
            lower,
            log_norm: -0.5 * d as f64 * (2.0 * PI).ln() - log_det_half,
            regularized,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Whether the ridge fallback was needed.
    pub fn regularized(&self) -> bool {
        self.regularized
    }

    /// `-0.5 * log det(2 pi Sigma)`.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// Log-density of a zero-mean Gaussian evaluated at `residual`.
    ///
    /// `scratch` must hold at least `dim()` values.
    pub fn log_density_residual_with(&self, residual: &[f64], scratch: &mut [f64]) -> f64 {
        let d = self.dim();
        debug_assert!(residual.len() >= d && scratch.len() >= d);
        let mut quad = 0.0;
        for i in 0..d {
            let mut acc = residual[i];
            for j in 0..i {
                acc -= self.lower[(i, j)] * scratch[j];
            }
            let z = acc / self.lower[(i, i)];
            scratch[i] = z;
            quad += z * z;
        }
        self.log_norm - 0.5 * quad
    }

    pub fn log_density_residual(&self, residual: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.dim()];
        self.log_density_residual_with(residual, &mut scratch)
    }
}

/// `log N(x; mean, sigma)` via Cholesky.
pub fn gaussian_log_density(
    x: &DVector<f64>,
    mean: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> Result<f64> {
    let d = sigma.nrows();
    for len in [x.len(), mean.len()] {
        if len != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: len,
            });
        }
    }
    let factor = GaussianFactor::new(sigma)?;
    let residual = x - mean;
    Ok(factor.log_density_residual(residual.as_slice()))
}
