//! Parameter estimation with hard-assignment (Viterbi) EM.
//!
//! Each restart draws intercepts and lag matrices from a standard normal with
//! identity covariances, then alternates MAP segmentation and closed-form
//! re-estimation until the objective changes by less than `ftol` or the
//! segmentation stops changing. The best restart wins. The objective is the
//! complete-data log-likelihood plus the log pseudo-count term of the smoothed
//! transition estimates, which is what the M-step maximizes, so the trace of
//! every restart is non-decreasing.

mod mstep;
mod viterbi;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::labels::label_runs;
use crate::model::{
    build_movement_transition, rest_certain_prior, HhmmSpec, MovementModel, DEFAULT_RHO, DEFAULT_SEGMENTS,
};

pub use mstep::{m_step, min_segment_samples, random_var_model, transition_log_prior, MStepOutcome, COVARIANCE_FLOOR};
pub use viterbi::{complete_log_likelihood, viterbi_segment, viterbi_with_score};

/// Hard-EM settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_restarts: usize,
    pub ftol: f64,
    pub max_iters: usize,
    pub k_segments: usize,
    pub tau_candidates: Vec<usize>,
    pub seed: u64,
    /// Self-transition probability of the movement chain.
    pub rho: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_restarts: 50,
            ftol: 1e-10,
            max_iters: 200,
            k_segments: DEFAULT_SEGMENTS,
            tau_candidates: vec![1],
            seed: 0,
            rho: DEFAULT_RHO,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_restarts == 0 {
            return Err(Error::Config("n_restarts must be at least 1".into()));
        }
        if !(self.ftol > 0.0) {
            return Err(Error::Config("ftol must be positive".into()));
        }
        if self.k_segments == 0 {
            return Err(Error::Config("k_segments must be at least 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if self.tau_candidates.is_empty() {
            return Err(Error::Config("tau_candidates is empty".into()));
        }
        Ok(())
    }
}

/// Bookkeeping for one movement's fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub best_log_likelihood: f64,
    pub best_restart: usize,
    /// Final objective per restart; `-inf` for restarts that failed.
    pub per_restart_lls: Vec<f64>,
    pub iterations_used: Vec<usize>,
    /// Objective after every E-step, per restart.
    pub ll_traces: Vec<Vec<f64>>,
    /// Complete-data log-likelihood of the best model without the pseudo-count term.
    pub best_complete_log_likelihood: f64,
    pub n_targets: usize,
    pub bic_table: BTreeMap<usize, f64>,
}

/// Deterministic per-task generator: stream `stream` of a master seed mixed with `salt`.
pub fn derived_rng(seed: u64, salt: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

struct RestartOutcome {
    model: MovementModel,
    objective: f64,
    trace: Vec<f64>,
    iterations: usize,
}

fn run_restart(
    data: &[Vec<Vec<f64>>],
    k: usize,
    tau: usize,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RestartOutcome> {
    let d = data[0][0].len();
    let uniform = 1.0 / k as f64;
    let mut model = MovementModel::new(
        (0..k).map(|_| random_var_model(d, tau, rng)).collect(),
        DMatrix::from_element(k, k, uniform),
        DVector::from_element(k, uniform),
    )?;
    let mut trace = Vec::new();
    let mut previous_paths: Option<Vec<Vec<usize>>> = None;
    let mut stable_model = false;
    let mut iterations = 0;
    loop {
        let (paths, score) = viterbi_with_score(data, &model)?;
        let objective = score + transition_log_prior(&model);
        let converged = match trace.last() {
            Some(&prev) => {
                let f: f64 = objective - prev;
                f.abs() < config.ftol || (stable_model && previous_paths.as_ref() == Some(&paths))
            }
            None => false,
        };
        trace.push(objective);
        if converged || iterations >= config.max_iters {
            return Ok(RestartOutcome {
                model,
                objective,
                trace,
                iterations,
            });
        }
        let step = m_step(data, &paths, k, tau, Some(&model), rng)?;
        stable_model = step.reset_segments.is_empty();
        model = step.model;
        previous_paths = Some(paths);
        iterations += 1;
    }
}

fn usable_runs(data: &[Vec<Vec<f64>>], tau: usize) -> Vec<Vec<Vec<f64>>> {
    let mut runs = Vec::with_capacity(data.len());
    for (r, run) in data.iter().enumerate() {
        if run.len() > tau {
            runs.push(run.clone());
        } else {
            log::warn!("skipping run {r}: {} frames is not more than tau = {tau}", run.len());
        }
    }
    runs
}

fn viterbi_em_salted(
    data: &[Vec<Vec<f64>>],
    config: &TrainConfig,
    tau: usize,
    salt: u64,
) -> Result<(MovementModel, TrainReport)> {
    config.validate()?;
    let runs = usable_runs(data, tau);
    if runs.is_empty() {
        return Err(Error::Training("no run is longer than the lag order".into()));
    }
    let d = runs[0][0].len();
    if runs.iter().flatten().any(|y| y.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: runs.iter().flatten().find(|y| y.len() != d).map_or(0, Vec::len),
        });
    }
    let k = config.k_segments;
    let outcomes: Vec<Result<RestartOutcome>> = (0..config.n_restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = derived_rng(config.seed, salt, r as u64);
            run_restart(&runs, k, tau, config, &mut rng)
        })
        .collect();

    let mut best: Option<(usize, f64, MovementModel)> = None;
    let mut per_restart_lls = Vec::with_capacity(outcomes.len());
    let mut iterations_used = Vec::with_capacity(outcomes.len());
    let mut ll_traces = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => {
                per_restart_lls.push(o.objective);
                iterations_used.push(o.iterations);
                ll_traces.push(o.trace);
                if best.as_ref().is_none_or(|(_, b, _)| o.objective > *b) {
                    best = Some((r, o.objective, o.model));
                }
            }
            Err(e) => {
                log::warn!("restart {r} failed: {e}");
                failures.push(format!("restart {r}: {e}"));
                per_restart_lls.push(f64::NEG_INFINITY);
                iterations_used.push(0);
                ll_traces.push(Vec::new());
            }
        }
    }
    let (best_restart, _, model) = best.ok_or_else(|| {
        Error::Training(format!(
            "all {} restarts failed: {}",
            config.n_restarts,
            failures.join("; ")
        ))
    })?;
    let paths = viterbi_segment(&runs, &model)?;
    let best_complete_log_likelihood = complete_log_likelihood(&runs, &paths, &model)?;
    let report = TrainReport {
        best_log_likelihood: per_restart_lls[best_restart],
        best_restart,
        per_restart_lls,
        iterations_used,
        ll_traces,
        best_complete_log_likelihood,
        n_targets: paths.iter().map(Vec::len).sum(),
        bic_table: BTreeMap::new(),
    };
    Ok((model, report))
}

/// Fit one movement's segment models from its runs.
pub fn viterbi_em(data: &[Vec<Vec<f64>>], config: &TrainConfig, tau: usize) -> Result<(MovementModel, TrainReport)> {
    viterbi_em_salted(data, config, tau, 0)
}

/// Free parameters of one movement: VAR regimes, covariances, transitions and prior.
pub fn parameter_count(k: usize, d: usize, tau: usize) -> usize {
    k * (d + tau * d * d + d * (d + 1) / 2) + k * k + k
}

/// `LL - 0.5 * params * ln(n)`; larger is better.
pub fn bic_score(log_likelihood: f64, n_params: usize, n_samples: usize) -> f64 {
    log_likelihood - 0.5 * n_params as f64 * (n_samples as f64).ln()
}

/// Drop leading frames so that every candidate lag order sees the same targets.
fn align_runs(data: &[Vec<Vec<f64>>], tau: usize, tau_max: usize) -> Vec<Vec<Vec<f64>>> {
    data.iter().map(|run| run[(tau_max - tau).min(run.len())..].to_vec()).collect()
}

struct LagFit {
    tau: usize,
    model: MovementModel,
    report: TrainReport,
    bic: f64,
}

fn fit_lag_candidates(
    data: &[Vec<Vec<f64>>],
    config: &TrainConfig,
    tau_candidates: &[usize],
    salt: u64,
) -> Result<Vec<LagFit>> {
    let tau_max = *tau_candidates
        .iter()
        .max()
        .ok_or_else(|| Error::Config("tau_candidates is empty".into()))?;
    let mut fits = Vec::new();
    for &tau in tau_candidates {
        if tau == 0 {
            log::warn!("skipping lag candidate 0");
            continue;
        }
        let runs = align_runs(data, tau, tau_max);
        match viterbi_em_salted(&runs, config, tau, salt) {
            Ok((model, report)) => {
                let d = model.dim();
                let bic = bic_score(
                    report.best_complete_log_likelihood,
                    parameter_count(config.k_segments, d, tau),
                    report.n_targets,
                );
                fits.push(LagFit {
                    tau,
                    model,
                    report,
                    bic,
                });
            }
            Err(e) => log::warn!("lag candidate {tau} failed: {e}"),
        }
    }
    if fits.is_empty() {
        return Err(Error::Training("every lag candidate failed".into()));
    }
    Ok(fits)
}

/// Choose the lag order with the highest BIC. Returns the lag and the BIC table.
pub fn select_lag_bic(
    data: &[Vec<Vec<f64>>],
    config: &TrainConfig,
    tau_candidates: &[usize],
) -> Result<(usize, BTreeMap<usize, f64>)> {
    if tau_candidates.is_empty() {
        return Err(Error::Config("tau_candidates is empty".into()));
    }
    if tau_candidates.len() == 1 {
        return Ok((tau_candidates[0], BTreeMap::new()));
    }
    let fits = fit_lag_candidates(data, config, tau_candidates, 0)?;
    let table: BTreeMap<usize, f64> = fits.iter().map(|f| (f.tau, f.bic)).collect();
    Ok((best_lag(&table), table))
}

fn best_lag(table: &BTreeMap<usize, f64>) -> usize {
    // ties go to the smaller lag
    let mut best = None;
    for (&tau, &bic) in table {
        match best {
            Some((_, b)) if bic <= b => {}
            _ => best = Some((tau, bic)),
        }
    }
    best.map_or(1, |(tau, _)| tau)
}

/// Everything produced by [`train_full_spec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FullTrainReport {
    pub tau: usize,
    pub config: TrainConfig,
    /// Summed BIC over movements per lag candidate (empty for a single candidate).
    pub bic_table: BTreeMap<usize, f64>,
    pub movements: Vec<TrainReport>,
}

/// Contiguous labelled runs per movement, as frame vectors.
pub fn movement_runs(dataset: &Dataset) -> Result<Vec<Vec<Vec<Vec<f64>>>>> {
    let labels = dataset
        .labels
        .as_ref()
        .ok_or_else(|| Error::InsufficientData("dataset has no labels".into()))?;
    let n = dataset.n_movements();
    let mut runs = vec![Vec::new(); n];
    for (label, start, end) in label_runs(&labels.labels) {
        runs[label].push(
            dataset.frames[start..=end]
                .iter()
                .map(|f| f.to_array().to_vec())
                .collect::<Vec<_>>(),
        );
    }
    Ok(runs)
}

/// Train every movement independently and assemble the two-level model.
pub fn train_full_spec(dataset: &Dataset, config: &TrainConfig) -> Result<(HhmmSpec, FullTrainReport)> {
    config.validate()?;
    let runs = movement_runs(dataset)?;
    for (m, r) in runs.iter().enumerate() {
        if r.is_empty() {
            return Err(Error::MissingMovement { label: m + 1 });
        }
    }
    let n = runs.len();

    let per_movement: Vec<Vec<LagFit>> = runs
        .par_iter()
        .enumerate()
        .map(|(m, data)| fit_lag_candidates(data, config, &config.tau_candidates, m as u64 + 1))
        .collect::<Result<_>>()?;

    let mut bic_table = BTreeMap::new();
    if config.tau_candidates.len() > 1 {
        for &tau in &config.tau_candidates {
            let per: Option<Vec<f64>> = per_movement
                .iter()
                .map(|fits| fits.iter().find(|f| f.tau == tau).map(|f| f.bic))
                .collect();
            match per {
                Some(v) => {
                    bic_table.insert(tau, v.iter().sum::<f64>());
                }
                None => log::warn!("lag {tau} failed for at least one movement; excluded"),
            }
        }
        if bic_table.is_empty() {
            return Err(Error::Training("no lag order could be fitted for every movement".into()));
        }
    }
    let tau = if bic_table.is_empty() {
        per_movement[0][0].tau
    } else {
        best_lag(&bic_table)
    };

    let mut models = Vec::with_capacity(n);
    let mut reports = Vec::with_capacity(n);
    for fits in per_movement {
        let fit = fits
            .into_iter()
            .find(|f| f.tau == tau)
            .ok_or_else(|| Error::Training(format!("lag {tau} missing for a movement")))?;
        let mut report = fit.report;
        report.bic_table.insert(tau, fit.bic);
        models.push(fit.model);
        reports.push(report);
    }
    let mov_trans = if n >= 2 {
        build_movement_transition(config.rho, n)?
    } else {
        DMatrix::identity(1, 1)
    };
    let spec = HhmmSpec::new(models, mov_trans, rest_certain_prior(n), Some(config.rho))?;
    Ok((
        spec,
        FullTrainReport {
            tau,
            config: config.clone(),
            bic_table,
            movements: reports,
        },
    ))
}
