use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{GaussianFactor, MovementModel, VarModel};

/// Diagonal floor added when the residual covariance is singular even after the ridge.
pub const COVARIANCE_FLOOR: f64 = 1e-9;

/// Result of one maximization step.
#[derive(Debug, Clone)]
pub struct MStepOutcome {
    pub model: MovementModel,
    /// Segments with no assigned samples that were re-drawn at random.
    pub reset_segments: Vec<usize>,
    /// Segments with too few samples to fit; they keep their previous parameters.
    pub kept_segments: Vec<usize>,
}

/// Minimum number of samples for a segment's VAR regression plus full-rank covariance.
pub fn min_segment_samples(d: usize, tau: usize) -> usize {
    d * (tau + 1) + 1
}

/// Standard-normal intercept and lag matrices with identity covariance.
pub fn random_var_model<R: Rng + ?Sized>(d: usize, tau: usize, rng: &mut R) -> VarModel {
    let mut draw = || -> f64 { rng.sample(StandardNormal) };
    let mu = DVector::from_fn(d, |_, _| draw());
    let lag_mats = (0..tau).map(|_| DMatrix::from_fn(d, d, |_, _| draw())).collect();
    VarModel::new(mu, lag_mats, DMatrix::identity(d, d)).expect("identity covariance is valid")
}

/// Regressor vector `[1, y_{t-1}, ..., y_{t-tau}]`.
fn regressors(run: &[Vec<f64>], t: usize, tau: usize, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    for p in 1..=tau {
        out.extend_from_slice(&run[t - p]);
    }
}

/// Least-squares VAR fit on the given `(run, t)` targets; `None` when under-populated.
fn fit_segment(data: &[Vec<Vec<f64>>], targets: &[(usize, usize)], d: usize, tau: usize) -> Result<Option<VarModel>> {
    if targets.len() < min_segment_samples(d, tau) {
        return Ok(None);
    }
    let p = 1 + tau * d;
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DMatrix::<f64>::zeros(p, d);
    let mut x = Vec::with_capacity(p);
    for &(r, t) in targets {
        let run = &data[r];
        regressors(run, t, tau, &mut x);
        let y = &run[t];
        for a in 0..p {
            let xa = x[a];
            for b in a..p {
                xtx[(a, b)] += xa * x[b];
            }
            for c in 0..d {
                xty[(a, c)] += xa * y[c];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(a, b)] = xtx[(b, a)];
        }
    }
    // coefficients: y^T = x^T B, B is p x d
    let coef = match xtx.clone().cholesky() {
        Some(ch) => ch.solve(&xty),
        None => xtx
            .svd(true, true)
            .solve(&xty, 1e-12)
            .map_err(|e| Error::Training(format!("least-squares solve failed: {e}")))?,
    };

    let mu = DVector::from_fn(d, |r, _| coef[(0, r)]);
    let lag_mats: Vec<DMatrix<f64>> = (0..tau)
        .map(|l| DMatrix::from_fn(d, d, |r, c| coef[(1 + l * d + c, r)]))
        .collect();

    let mut sigma = DMatrix::<f64>::zeros(d, d);
    let mut resid = vec![0.0; d];
    for &(r, t) in targets {
        let run = &data[r];
        for c in 0..d {
            let mut pred = mu[c];
            for (l, a) in lag_mats.iter().enumerate() {
                let prev = &run[t - 1 - l];
                for j in 0..d {
                    pred += a[(c, j)] * prev[j];
                }
            }
            resid[c] = run[t][c] - pred;
        }
        for a in 0..d {
            for b in a..d {
                sigma[(a, b)] += resid[a] * resid[b];
            }
        }
    }
    let n = targets.len() as f64;
    for a in 0..d {
        for b in a..d {
            sigma[(a, b)] /= n;
            sigma[(b, a)] = sigma[(a, b)];
        }
    }
    if GaussianFactor::new(&sigma).is_err() {
        log::debug!("residual covariance singular; adding diagonal floor");
        for a in 0..d {
            sigma[(a, a)] += COVARIANCE_FLOOR;
        }
    }
    Ok(Some(VarModel::new(mu, lag_mats, sigma)?))
}

/// Maximization step given hard segment paths.
///
/// VAR parameters are per-segment least squares with the residual covariance
/// as noise. Transition rows and the initial-segment distribution are count
/// based with a `1/K` pseudo-count per cell. A segment without samples is
/// re-drawn at random; a segment with some but too few samples keeps its
/// parameters from `previous` (or is re-drawn if there is none).
pub fn m_step<R: Rng + ?Sized>(
    data: &[Vec<Vec<f64>>],
    paths: &[Vec<usize>],
    k_segments: usize,
    tau: usize,
    previous: Option<&MovementModel>,
    rng: &mut R,
) -> Result<MStepOutcome> {
    if k_segments == 0 {
        return Err(Error::Config("k_segments must be at least 1".into()));
    }
    if data.len() != paths.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: paths.len(),
        });
    }
    let d = data
        .iter()
        .find_map(|run| run.first().map(Vec::len))
        .ok_or_else(|| Error::InsufficientData("no frames in training data".into()))?;

    let mut assigned: Vec<Vec<(usize, usize)>> = vec![Vec::new(); k_segments];
    let mut trans_counts = DMatrix::<f64>::zeros(k_segments, k_segments);
    let mut first_counts = DVector::<f64>::zeros(k_segments);
    for (r, (run, path)) in data.iter().zip(paths).enumerate() {
        if run.len() != path.len() + tau {
            return Err(Error::DimensionMismatch {
                expected: run.len().saturating_sub(tau),
                got: path.len(),
            });
        }
        for (offset, &s) in path.iter().enumerate() {
            if s >= k_segments {
                return Err(Error::Parameter(format!("segment index {s} out of range")));
            }
            assigned[s].push((r, offset + tau));
            if offset == 0 {
                first_counts[s] += 1.0;
            } else {
                trans_counts[(path[offset - 1], s)] += 1.0;
            }
        }
    }

    let mut segments = Vec::with_capacity(k_segments);
    let mut reset_segments = Vec::new();
    let mut kept_segments = Vec::new();
    for (i, targets) in assigned.iter().enumerate() {
        match fit_segment(data, targets, d, tau)? {
            Some(seg) => segments.push(seg),
            None => {
                let prev = previous.and_then(|p| p.segments().get(i)).filter(|s| s.tau() == tau);
                match (targets.is_empty(), prev) {
                    (false, Some(seg)) => {
                        kept_segments.push(i);
                        segments.push(seg.clone());
                    }
                    _ => {
                        reset_segments.push(i);
                        segments.push(random_var_model(d, tau, rng));
                    }
                }
            }
        }
    }

    let pseudo = 1.0 / k_segments as f64;
    let mut seg_trans = trans_counts.add_scalar(pseudo);
    for mut row in seg_trans.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    let mut seg_prior = first_counts.add_scalar(pseudo);
    let s = seg_prior.sum();
    seg_prior /= s;

    Ok(MStepOutcome {
        model: MovementModel::new(segments, seg_trans, seg_prior)?,
        reset_segments,
        kept_segments,
    })
}

/// Log Dirichlet pseudo-count term that the smoothed transition estimates maximize jointly with the data.
pub fn transition_log_prior(model: &MovementModel) -> f64 {
    let k = model.n_segments() as f64;
    let trans: f64 = model.seg_trans().iter().map(|v| v.ln()).sum();
    let prior: f64 = model.seg_prior().iter().map(|v| v.ln()).sum();
    (trans + prior) / k
}
