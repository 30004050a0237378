//! Exact online filtering over the joint (movement, segment) state.
//!
//! Each step propagates the previous joint posterior through the two-level
//! transition structure, multiplies by the VAR likelihoods of the new frame and
//! renormalizes. Inside a movement the segment follows that movement's chain;
//! on a movement switch the new segment is drawn from the entered movement's
//! segment prior. Everything is carried in log space and structural zeros stay
//! at `-inf`.
//!
//! The first `tau` frames only fill the lag buffer and are labelled with the
//! argmax of the initial movement prior.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{LabelSequence, Provenance};
use crate::math::{argmax, ln_or_neg_inf, log_add_exp, log_sum_exp};
use crate::model::{GaussianFactor, HhmmSpec, ObservationFrame};

/// Joint posterior plus the lag buffer.
#[derive(Debug, Clone)]
pub struct FilterState {
    log_post: DMatrix<f64>,
    history: VecDeque<Vec<f64>>,
    t: u64,
}

impl FilterState {
    /// `log p(M_t = m, S_t = i | y_{t:0})`, `N x K`.
    pub fn log_post(&self) -> &DMatrix<f64> {
        &self.log_post
    }

    /// Buffered frames, most recent first.
    pub fn history(&self) -> &VecDeque<Vec<f64>> {
        &self.history
    }

    /// Number of frames consumed so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn movement_posterior(&self) -> Vec<f64> {
        movement_marginal(&self.log_post)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutput {
    pub label: usize,
    pub movement_posterior: Vec<f64>,
    /// `log p(y_t | y_{t-1:0})`; zero while the lag buffer is warming up.
    pub log_evidence_increment: f64,
    /// False for warm-up frames that did not update the posterior.
    pub updated: bool,
}

/// An [`HhmmSpec`] with Cholesky factors and log transition tables precomputed.
///
/// Immutable and shareable; each stream keeps its own [`FilterState`].
#[derive(Debug, Clone)]
pub struct PreparedSpec {
    spec: HhmmSpec,
    factors: Vec<GaussianFactor>,
    log_seg_trans: Vec<DMatrix<f64>>,
    log_seg_prior: Vec<Vec<f64>>,
    log_mov_trans: DMatrix<f64>,
}

impl PreparedSpec {
    pub fn new(spec: &HhmmSpec) -> Result<Self> {
        let mut factors = Vec::with_capacity(spec.n_movements() * spec.n_segments());
        for mv in spec.movements() {
            for seg in mv.segments() {
                factors.push(GaussianFactor::new(seg.sigma())?);
            }
        }
        Ok(Self {
            factors,
            log_seg_trans: spec
                .movements()
                .iter()
                .map(|mv| mv.seg_trans().map(ln_or_neg_inf))
                .collect(),
            log_seg_prior: spec
                .movements()
                .iter()
                .map(|mv| mv.seg_prior().iter().copied().map(ln_or_neg_inf).collect())
                .collect(),
            log_mov_trans: spec.mov_trans().map(ln_or_neg_inf),
            spec: spec.clone(),
        })
    }

    pub fn spec(&self) -> &HhmmSpec {
        &self.spec
    }

    /// Initial joint posterior `mov_prior(m) * seg_prior(m, i)`.
    pub fn init(&self) -> FilterState {
        let (n, k) = (self.spec.n_movements(), self.spec.n_segments());
        let log_post = DMatrix::from_fn(n, k, |m, i| {
            ln_or_neg_inf(self.spec.mov_prior()[m]) + self.log_seg_prior[m][i]
        });
        FilterState {
            log_post,
            history: VecDeque::with_capacity(self.spec.tau() + 1),
            t: 0,
        }
    }

    /// One-step-ahead log prior `log p(S_t, M_t | y_{t-1:0})`.
    pub fn predict(&self, state: &FilterState) -> DMatrix<f64> {
        let (n, k) = (self.spec.n_movements(), self.spec.n_segments());
        let post = &state.log_post;
        let mass: Vec<f64> = (0..n)
            .map(|m| log_sum_exp(post.row(m).transpose().as_slice()))
            .collect();
        let mut prior = DMatrix::from_element(n, k, f64::NEG_INFINITY);
        let mut terms = vec![0.0; n.max(k)];
        for m in 0..n {
            // mass arriving from other movements, before the segment prior
            terms.clear();
            terms.extend((0..n).filter(|&prev| prev != m).map(|prev| self.log_mov_trans[(prev, m)] + mass[prev]));
            let entering = log_sum_exp(&terms);
            let stay = self.log_mov_trans[(m, m)];
            let seg_trans = &self.log_seg_trans[m];
            for i in 0..k {
                terms.clear();
                terms.extend((0..k).map(|j| post[(m, j)] + seg_trans[(j, i)]));
                let within = stay + log_sum_exp(&terms);
                prior[(m, i)] = log_add_exp(within, self.log_seg_prior[m][i] + entering);
            }
        }
        prior
    }

    /// Log-likelihood of `y` under every regime given the buffered history.
    fn log_likelihoods(&self, history: &VecDeque<Vec<f64>>, y: &[f64]) -> DMatrix<f64> {
        let (n, k, d) = (self.spec.n_movements(), self.spec.n_segments(), self.spec.dim());
        let hist: Vec<&[f64]> = history.iter().map(Vec::as_slice).collect();
        let mut mean = vec![0.0; d];
        let mut scratch = vec![0.0; d];
        let mut ll = DMatrix::zeros(n, k);
        for (m, mv) in self.spec.movements().iter().enumerate() {
            for (i, seg) in mv.segments().iter().enumerate() {
                seg.predict_into(&hist, &mut mean);
                for (r, yv) in mean.iter_mut().zip(y) {
                    *r = yv - *r;
                }
                ll[(m, i)] = self.factors[m * k + i].log_density_residual_with(&mean, &mut scratch);
            }
        }
        ll
    }

    /// Consume one observation vector. On error the state is left untouched.
    pub fn step(&self, state: &mut FilterState, y: &[f64]) -> Result<StepOutput> {
        let index = state.t as usize;
        if y.len() != self.spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.dim(),
                got: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFrame { index });
        }
        let tau = self.spec.tau();
        if state.history.len() < tau {
            push_history(state, y, tau);
            let movement_posterior = state.movement_posterior();
            return Ok(StepOutput {
                label: argmax(self.spec.mov_prior().as_slice()),
                movement_posterior,
                log_evidence_increment: 0.0,
                updated: false,
            });
        }

        let prior = self.predict(state);
        let joint = self.log_likelihoods(&state.history, y) + prior;
        let log_evidence = log_sum_exp(joint.as_slice());
        if !log_evidence.is_finite() {
            return Err(Error::InvalidFrame { index });
        }
        state.log_post = joint.add_scalar(-log_evidence);
        // renormalize against drift
        let residual = log_sum_exp(state.log_post.as_slice());
        state.log_post.add_scalar_mut(-residual);
        push_history(state, y, tau);

        let movement_posterior = state.movement_posterior();
        Ok(StepOutput {
            label: argmax(&movement_posterior),
            movement_posterior,
            log_evidence_increment: log_evidence,
            updated: true,
        })
    }

    pub fn step_frame(&self, state: &mut FilterState, frame: &ObservationFrame) -> Result<StepOutput> {
        self.step(state, &frame.to_array())
    }

    /// Filter a whole recording from the initial prior.
    pub fn classify(&self, frames: &[ObservationFrame]) -> Result<SequenceClassification> {
        let vectors: Vec<[f64; 6]> = frames.iter().map(ObservationFrame::to_array).collect();
        self.classify_vectors(&vectors)
    }

    pub fn classify_vectors<V: AsRef<[f64]>>(&self, ys: &[V]) -> Result<SequenceClassification> {
        if ys.is_empty() {
            return Err(Error::InsufficientData("no frames to classify".into()));
        }
        let mut state = self.init();
        let mut labels = Vec::with_capacity(ys.len());
        let mut posteriors = Vec::with_capacity(ys.len());
        let mut log_evidence = 0.0;
        for y in ys {
            let out = self.step(&mut state, y.as_ref())?;
            labels.push(out.label);
            log_evidence += out.log_evidence_increment;
            posteriors.push(out.movement_posterior);
        }
        Ok(SequenceClassification {
            labels: LabelSequence::new(labels, Provenance::VarHhmm),
            posteriors,
            log_evidence,
        })
    }
}

fn push_history(state: &mut FilterState, y: &[f64], tau: usize) {
    if tau > 0 {
        state.history.push_front(y.to_vec());
        state.history.truncate(tau);
    }
    state.t += 1;
}

fn movement_marginal(log_post: &DMatrix<f64>) -> Vec<f64> {
    log_post
        .row_iter()
        .map(|row| log_sum_exp(row.transpose().as_slice()).exp())
        .collect()
}

/// Output of [`classify_sequence`].
#[derive(Debug, Clone)]
pub struct SequenceClassification {
    pub labels: LabelSequence,
    pub posteriors: Vec<Vec<f64>>,
    /// Sum of the per-step log evidence over all updated frames.
    pub log_evidence: f64,
}

pub fn filter_init(spec: &HhmmSpec) -> Result<FilterState> {
    Ok(PreparedSpec::new(spec)?.init())
}

pub fn filter_predict(state: &FilterState, spec: &HhmmSpec) -> Result<DMatrix<f64>> {
    Ok(PreparedSpec::new(spec)?.predict(state))
}

/// Single step without a cached [`PreparedSpec`]; refactors every covariance.
pub fn filter_step(state: &mut FilterState, spec: &HhmmSpec, frame: &ObservationFrame) -> Result<StepOutput> {
    PreparedSpec::new(spec)?.step_frame(state, frame)
}

pub fn classify_sequence(spec: &HhmmSpec, frames: &[ObservationFrame]) -> Result<SequenceClassification> {
    PreparedSpec::new(spec)?.classify(frames)
}

#[cfg(test)]
mod tests {
    use nalgebra::DVector;

    use super::*;
    use crate::model::{MovementModel, VarModel};

    fn seg(mu: &[f64], a: f64, s: f64) -> VarModel {
        let d = mu.len();
        VarModel::new(
            DVector::from_row_slice(mu),
            vec![DMatrix::identity(d, d) * a],
            DMatrix::identity(d, d) * s,
        )
        .unwrap()
    }

    fn uniform_movement(segs: Vec<VarModel>) -> MovementModel {
        let k = segs.len();
        MovementModel::new(
            segs,
            DMatrix::from_element(k, k, 1.0 / k as f64),
            DVector::from_element(k, 1.0 / k as f64),
        )
        .unwrap()
    }

    #[test]
    fn uniform_init_factorizes() {
        let mv = || uniform_movement(vec![seg(&[0.0], 0.5, 1.0), seg(&[1.0], 0.5, 1.0)]);
        let spec = HhmmSpec::new(
            vec![mv(), mv()],
            DMatrix::from_element(2, 2, 0.5),
            DVector::from_element(2, 0.5),
            None,
        )
        .unwrap();
        let st = filter_init(&spec).unwrap();
        for v in st.log_post().iter() {
            assert!((v - 0.25f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn single_state_chain_is_certain() {
        let spec = HhmmSpec::new(
            vec![uniform_movement(vec![seg(&[0.0], 0.5, 1.0)])],
            DMatrix::identity(1, 1),
            DVector::from_element(1, 1.0),
            None,
        )
        .unwrap();
        let p = PreparedSpec::new(&spec).unwrap();
        let mut st = p.init();
        assert_eq!(p.predict(&st)[(0, 0)], 0.0);
        for y in [0.3, -100.0, 7.0] {
            let out = p.step(&mut st, &[y]).unwrap();
            assert_eq!(out.label, 0);
            assert!((out.movement_posterior[0] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_frame_leaves_state_alone() {
        let spec = HhmmSpec::new(
            vec![uniform_movement(vec![seg(&[0.0], 0.5, 1.0)])],
            DMatrix::identity(1, 1),
            DVector::from_element(1, 1.0),
            None,
        )
        .unwrap();
        let p = PreparedSpec::new(&spec).unwrap();
        let mut st = p.init();
        p.step(&mut st, &[1.0]).unwrap();
        let before = st.clone();
        assert!(matches!(p.step(&mut st, &[f64::NAN]), Err(Error::InvalidFrame { index: 1 })));
        assert_eq!(st.log_post(), before.log_post());
        assert_eq!(st.history(), before.history());
        assert_eq!(st.t(), 1);
    }

    #[test]
    fn warm_up_emits_prior_argmax() {
        let mv = |mu: f64| uniform_movement(vec![seg(&[mu], 0.5, 1.0)]);
        let spec = HhmmSpec::new(
            vec![mv(0.0), mv(5.0)],
            DMatrix::from_element(2, 2, 0.5),
            DVector::from_row_slice(&[0.3, 0.7]),
            None,
        )
        .unwrap();
        let out = classify_sequence(&spec, &[ObservationFrame::new(0, [0.0; 3], [0.0; 3])]);
        // d = 6 frames against a d = 1 model
        assert!(out.is_err());
        let p = PreparedSpec::new(&spec).unwrap();
        let res = p.classify_vectors(&[[0.0]]).unwrap();
        assert_eq!(res.labels.labels, vec![1]);
        assert_eq!(res.log_evidence, 0.0);
    }
}
