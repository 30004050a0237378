//! Generative model types and the numerical kernels built on them.
//!
//! A model is two nested Markov chains. The outer chain moves between
//! movements (rest plus gesture classes). Each movement owns an inner chain of
//! `K` segments, and each segment emits observations from its own vector
//! autoregressive model
//!
//! ```text
//! y_t = mu + A_1 y_{t-1} + ... + A_tau y_{t-tau} + e_t,   e_t ~ N(0, Sigma)
//! ```
//!
//! All transition matrices are row-stochastic with rows indexed by the
//! previous state. Movement and segment indices are zero-based in memory;
//! movement `0` is rest.

mod document;
mod gaussian;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use document::{SpecDocument, SPEC_FORMAT_VERSION};
pub use gaussian::{gaussian_log_density, GaussianFactor, RIDGE_SCALE};

/// Dimension of one IMU sample: three accelerometer then three gyroscope axes.
pub const IMU_DIM: usize = 6;
/// Accelerometer range in g.
pub const ACC_RANGE: f64 = 2.0;
/// Gyroscope range in degrees per second.
pub const GYR_RANGE: f64 = 500.0;
/// IMU sample rate.
pub const SAMPLE_RATE_HZ: f64 = 100.0;

/// Default number of segments per movement.
pub const DEFAULT_SEGMENTS: usize = 5;
/// Default number of movements (rest plus seven gestures).
pub const DEFAULT_MOVEMENTS: usize = 8;
/// Default self-transition probability of the movement chain.
pub const DEFAULT_RHO: f64 = 0.999;

const STOCHASTIC_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;

/// One IMU sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationFrame {
    pub t: u64,
    /// Acceleration in g.
    pub acc: [f64; 3],
    /// Angular rate in degrees per second.
    pub gyr: [f64; 3],
}

impl ObservationFrame {
    pub fn new(t: u64, acc: [f64; 3], gyr: [f64; 3]) -> Self {
        Self { t, acc, gyr }
    }

    pub fn from_vector(t: u64, v: &[f64]) -> Result<Self> {
        if v.len() != IMU_DIM {
            return Err(Error::DimensionMismatch {
                expected: IMU_DIM,
                got: v.len(),
            });
        }
        Ok(Self {
            t,
            acc: [v[0], v[1], v[2]],
            gyr: [v[3], v[4], v[5]],
        })
    }

    /// The concatenated `[acc, gyr]` vector.
    pub fn to_array(&self) -> [f64; IMU_DIM] {
        [
            self.acc[0],
            self.acc[1],
            self.acc[2],
            self.gyr[0],
            self.gyr[1],
            self.gyr[2],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Clamp every component into the sensor range. Returns true if anything was clipped.
    pub fn clamp_to_sensor_range(&mut self) -> bool {
        let mut clipped = false;
        for v in self.acc.iter_mut() {
            let c = v.clamp(-ACC_RANGE, ACC_RANGE);
            clipped |= c != *v;
            *v = c;
        }
        for v in self.gyr.iter_mut() {
            let c = v.clamp(-GYR_RANGE, GYR_RANGE);
            clipped |= c != *v;
            *v = c;
        }
        clipped
    }
}

/// Parameters of one VAR(tau) regime.
#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    mu: DVector<f64>,
    lag_mats: Vec<DMatrix<f64>>,
    sigma: DMatrix<f64>,
}

impl VarModel {
    /// Validates shapes, symmetry and positive-definiteness of `sigma`.
    pub fn new(mu: DVector<f64>, lag_mats: Vec<DMatrix<f64>>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(Error::InvalidModel("empty intercept".into()));
        }
        for a in &lag_mats {
            if a.shape() != (d, d) {
                return Err(Error::InvalidModel(format!(
                    "lag matrix has shape {:?}, expected ({d}, {d})",
                    a.shape()
                )));
            }
        }
        if sigma.shape() != (d, d) {
            return Err(Error::InvalidModel(format!(
                "covariance has shape {:?}, expected ({d}, {d})",
                sigma.shape()
            )));
        }
        let all_finite = mu.iter().all(|v| v.is_finite())
            && lag_mats.iter().all(|a| a.iter().all(|v| v.is_finite()))
            && sigma.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidModel("non-finite VAR parameter".into()));
        }
        let scale = sigma.amax().max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidModel("covariance is not symmetric".into()));
                }
            }
        }
        GaussianFactor::new(&sigma)?;
        Ok(Self { mu, lag_mats, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn tau(&self) -> usize {
        self.lag_mats.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn lag_mats(&self) -> &[DMatrix<f64>] {
        &self.lag_mats
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Conditional mean written into `out`; `history[0]` is the most recent frame.
    pub(crate) fn predict_into<H: AsRef<[f64]>>(&self, history: &[H], out: &mut [f64]) {
        let d = self.dim();
        out[..d].copy_from_slice(self.mu.as_slice());
        for (a, y) in self.lag_mats.iter().zip(history) {
            let y = y.as_ref();
            for c in 0..d {
                let yc = y[c];
                if yc == 0.0 {
                    continue;
                }
                let col = a.column(c);
                for r in 0..d {
                    out[r] += col[r] * yc;
                }
            }
        }
    }
}

/// `mu + sum_p A_p y_{t-p}`; `history` is ordered most-recent-first.
pub fn var_predict<H: AsRef<[f64]>>(model: &VarModel, history: &[H]) -> Result<DVector<f64>> {
    let tau = model.tau();
    if history.len() < tau {
        return Err(Error::InsufficientHistory {
            needed: tau,
            got: history.len(),
        });
    }
    for h in &history[..tau] {
        if h.as_ref().len() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: h.as_ref().len(),
            });
        }
    }
    let mut out = DVector::zeros(model.dim());
    model.predict_into(&history[..tau], out.as_mut_slice());
    Ok(out)
}

/// One movement: its segment regimes and the segment chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MovementModel {
    segments: Vec<VarModel>,
    seg_trans: DMatrix<f64>,
    seg_prior: DVector<f64>,
}

impl MovementModel {
    pub fn new(segments: Vec<VarModel>, seg_trans: DMatrix<f64>, seg_prior: DVector<f64>) -> Result<Self> {
        let k = segments.len();
        if k == 0 {
            return Err(Error::InvalidModel("movement has no segments".into()));
        }
        let (d, tau) = (segments[0].dim(), segments[0].tau());
        if segments.iter().any(|s| s.dim() != d || s.tau() != tau) {
            return Err(Error::InvalidModel(
                "segments of one movement disagree on dimension or lag order".into(),
            ));
        }
        check_stochastic_matrix(&seg_trans, k, "segment transition")?;
        check_distribution(&seg_prior, k, "segment prior")?;
        Ok(Self {
            segments,
            seg_trans,
            seg_prior,
        })
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn segments(&self) -> &[VarModel] {
        &self.segments
    }

    /// Row `j` holds `p(S_t = . | S_{t-1} = j)`.
    pub fn seg_trans(&self) -> &DMatrix<f64> {
        &self.seg_trans
    }

    pub fn seg_prior(&self) -> &DVector<f64> {
        &self.seg_prior
    }

    pub fn dim(&self) -> usize {
        self.segments[0].dim()
    }

    pub fn tau(&self) -> usize {
        self.segments[0].tau()
    }
}

/// The full two-level model.
#[derive(Debug, Clone, PartialEq)]
pub struct HhmmSpec {
    movements: Vec<MovementModel>,
    mov_trans: DMatrix<f64>,
    mov_prior: DVector<f64>,
    tau: usize,
    d: usize,
    rho: Option<f64>,
}

impl HhmmSpec {
    pub fn new(
        movements: Vec<MovementModel>,
        mov_trans: DMatrix<f64>,
        mov_prior: DVector<f64>,
        rho: Option<f64>,
    ) -> Result<Self> {
        let n = movements.len();
        if n == 0 {
            return Err(Error::InvalidModel("model has no movements".into()));
        }
        let (d, tau, k) = (
            movements[0].dim(),
            movements[0].tau(),
            movements[0].n_segments(),
        );
        for (m, mv) in movements.iter().enumerate() {
            if mv.dim() != d || mv.tau() != tau {
                return Err(Error::InvalidModel(format!(
                    "movement {m} has d={} tau={}, expected d={d} tau={tau}",
                    mv.dim(),
                    mv.tau()
                )));
            }
            if mv.n_segments() != k {
                return Err(Error::InvalidModel(format!(
                    "movement {m} has {} segments, expected {k}",
                    mv.n_segments()
                )));
            }
        }
        check_stochastic_matrix(&mov_trans, n, "movement transition")?;
        check_distribution(&mov_prior, n, "movement prior")?;
        Ok(Self {
            movements,
            mov_trans,
            mov_prior,
            tau,
            d,
            rho,
        })
    }

    pub fn movements(&self) -> &[MovementModel] {
        &self.movements
    }

    pub fn n_movements(&self) -> usize {
        self.movements.len()
    }

    pub fn n_segments(&self) -> usize {
        self.movements[0].n_segments()
    }

    /// Row `n` holds `p(M_t = . | M_{t-1} = n)`.
    pub fn mov_trans(&self) -> &DMatrix<f64> {
        &self.mov_trans
    }

    pub fn mov_prior(&self) -> &DVector<f64> {
        &self.mov_prior
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rho(&self) -> Option<f64> {
        self.rho
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SpecDocument::from_spec(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SpecDocument = serde_json::from_str(text)?;
        doc.into_spec()
    }
}

/// Log-likelihood of `y` under every (movement, segment) regime, as an `N x K` matrix.
pub fn obs_log_likelihood<H: AsRef<[f64]>>(
    spec: &HhmmSpec,
    history: &[H],
    y: &[f64],
) -> Result<DMatrix<f64>> {
    if y.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: y.len(),
        });
    }
    let mut out = DMatrix::zeros(spec.n_movements(), spec.n_segments());
    for (m, mv) in spec.movements().iter().enumerate() {
        for (i, seg) in mv.segments().iter().enumerate() {
            let mean = var_predict(seg, history)?;
            let factor = GaussianFactor::new(seg.sigma())?;
            let resid: Vec<f64> = y.iter().zip(mean.iter()).map(|(a, b)| a - b).collect();
            out[(m, i)] = factor.log_density_residual(&resid);
        }
    }
    Ok(out)
}

/// Movement chain where every gesture is entered from and left to rest.
///
/// Rest (row 0) stays with probability `rho` and moves to each gesture with
/// `(1 - rho) / (n - 1)`; each gesture stays with `rho` and returns to rest
/// with `1 - rho`. All other entries are exactly zero.
pub fn build_movement_transition(rho: f64, n: usize) -> Result<DMatrix<f64>> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Parameter(format!("rho must lie in (0, 1), got {rho}")));
    }
    if n < 2 {
        return Err(Error::Parameter(format!("need at least 2 movements, got {n}")));
    }
    let mut t = DMatrix::zeros(n, n);
    t[(0, 0)] = rho;
    let spread = (1.0 - rho) / (n - 1) as f64;
    for j in 1..n {
        t[(0, j)] = spread;
        t[(j, j)] = rho;
        t[(j, 0)] = 1.0 - rho;
    }
    Ok(t)
}

/// All mass on rest.
pub fn rest_certain_prior(n: usize) -> DVector<f64> {
    let mut p = DVector::zeros(n);
    p[0] = 1.0;
    p
}

fn check_distribution(p: &DVector<f64>, len: usize, what: &str) -> Result<()> {
    if p.len() != len {
        return Err(Error::InvalidModel(format!(
            "{what} has length {}, expected {len}",
            p.len()
        )));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidModel(format!("{what} has a negative or non-finite entry")));
    }
    let s = p.sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidModel(format!("{what} sums to {s}")));
    }
    Ok(())
}

fn check_stochastic_matrix(t: &DMatrix<f64>, n: usize, what: &str) -> Result<()> {
    if t.shape() != (n, n) {
        return Err(Error::InvalidModel(format!(
            "{what} matrix has shape {:?}, expected ({n}, {n})",
            t.shape()
        )));
    }
    for (r, row) in t.row_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidModel(format!(
                "{what} row {r} has a negative or non-finite entry"
            )));
        }
        let s = row.sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidModel(format!("{what} row {r} sums to {s}")));
        }
    }
    Ok(())
}
