use crate::error::{Error, Result};
use crate::math::ln_or_neg_inf;
use crate::model::{GaussianFactor, MovementModel};

/// Emission log-likelihoods for the targets of one run: `out[t - tau][i]`.
pub(crate) fn emission_table(
    run: &[Vec<f64>],
    model: &MovementModel,
    factors: &[GaussianFactor],
) -> Vec<Vec<f64>> {
    let (tau, d, k) = (model.tau(), model.dim(), model.n_segments());
    let mut mean = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut hist: Vec<&[f64]> = Vec::with_capacity(tau);
    let mut table = Vec::with_capacity(run.len().saturating_sub(tau));
    for t in tau..run.len() {
        hist.clear();
        hist.extend((1..=tau).map(|p| run[t - p].as_slice()));
        let y = &run[t];
        let row = (0..k)
            .map(|i| {
                model.segments()[i].predict_into(&hist, &mut mean);
                for (r, yv) in mean.iter_mut().zip(y) {
                    *r = yv - *r;
                }
                factors[i].log_density_residual_with(&mean, &mut scratch)
            })
            .collect();
        table.push(row);
    }
    table
}

pub(crate) fn factors_of(model: &MovementModel) -> Result<Vec<GaussianFactor>> {
    model
        .segments()
        .iter()
        .map(|s| GaussianFactor::new(s.sigma()))
        .collect()
}

fn check_runs(data: &[Vec<Vec<f64>>], model: &MovementModel) -> Result<()> {
    for (r, run) in data.iter().enumerate() {
        if run.len() <= model.tau() {
            return Err(Error::InsufficientData(format!(
                "run {r} has {} frames, needs more than tau = {}",
                run.len(),
                model.tau()
            )));
        }
        if let Some(bad) = run.iter().find(|y| y.len() != model.dim()) {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: bad.len(),
            });
        }
    }
    Ok(())
}

/// MAP segment path of each run plus the summed log joint of those paths.
///
/// Paths cover the targets of a run, i.e. frames `tau..len`; the first `tau`
/// frames only act as regressors.
pub fn viterbi_with_score(data: &[Vec<Vec<f64>>], model: &MovementModel) -> Result<(Vec<Vec<usize>>, f64)> {
    check_runs(data, model)?;
    let factors = factors_of(model)?;
    let k = model.n_segments();
    let log_trans = model.seg_trans().map(ln_or_neg_inf);
    let log_prior: Vec<f64> = model.seg_prior().iter().copied().map(ln_or_neg_inf).collect();

    let mut paths = Vec::with_capacity(data.len());
    let mut total = 0.0;
    for run in data {
        let em = emission_table(run, model, &factors);
        let len = em.len();
        let mut score: Vec<f64> = (0..k).map(|i| log_prior[i] + em[0][i]).collect();
        let mut back = vec![vec![0usize; k]; len];
        let mut next = vec![0.0; k];
        for t in 1..len {
            for i in 0..k {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for j in 0..k {
                    let s = score[j] + log_trans[(j, i)];
                    if s > best {
                        best = s;
                        arg = j;
                    }
                }
                next[i] = best + em[t][i];
                back[t][i] = arg;
            }
            std::mem::swap(&mut score, &mut next);
        }
        let mut last = 0;
        for i in 1..k {
            if score[i] > score[last] {
                last = i;
            }
        }
        total += score[last];
        let mut path = vec![0; len];
        path[len - 1] = last;
        for t in (1..len).rev() {
            path[t - 1] = back[t][path[t]];
        }
        paths.push(path);
    }
    Ok((paths, total))
}

/// Most likely segment sequence for every run under `model`.
pub fn viterbi_segment(data: &[Vec<Vec<f64>>], model: &MovementModel) -> Result<Vec<Vec<usize>>> {
    Ok(viterbi_with_score(data, model)?.0)
}

/// Log joint density of data and the given segment paths.
pub fn complete_log_likelihood(
    data: &[Vec<Vec<f64>>],
    paths: &[Vec<usize>],
    model: &MovementModel,
) -> Result<f64> {
    check_runs(data, model)?;
    let factors = factors_of(model)?;
    let mut total = 0.0;
    for (run, path) in data.iter().zip(paths) {
        let em = emission_table(run, model, &factors);
        if path.len() != em.len() {
            return Err(Error::DimensionMismatch {
                expected: em.len(),
                got: path.len(),
            });
        }
        total += ln_or_neg_inf(model.seg_prior()[path[0]]);
        for t in 0..path.len() {
            if t > 0 {
                total += ln_or_neg_inf(model.seg_trans()[(path[t - 1], path[t])]);
            }
            total += em[t][path[t]];
        }
    }
    Ok(total)
}
