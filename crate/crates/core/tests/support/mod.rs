//! Independent reference implementations and random fixtures shared by the
//! integration tests. Nothing here calls into the library's numerical kernels.
#![allow(dead_code)]

use gesturehmm::model::{HhmmSpec, MovementModel, VarModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Well-conditioned random SPD matrix scaled by `scale`.
pub fn random_spd<R: Rng>(d: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| normal(rng));
    (&a * a.transpose() / d as f64 + DMatrix::identity(d, d)) * scale
}

/// Random row-stochastic matrix; each off-diagonal cell is zeroed with probability `zero_p`.
pub fn random_stochastic<R: Rng>(n: usize, zero_p: f64, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(n, n, |r, c| {
        if r != c && rng.random::<f64>() < zero_p {
            0.0
        } else {
            rng.random_range(0.05..1.0)
        }
    });
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

pub fn random_simplex<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    let v = DVector::from_fn(n, |_, _| rng.random_range(0.05..1.0));
    let s = v.sum();
    v / s
}

pub fn random_var<R: Rng>(d: usize, tau: usize, rng: &mut R) -> VarModel {
    let mu = DVector::from_fn(d, |_, _| normal(rng));
    let lags = (0..tau)
        .map(|_| DMatrix::from_fn(d, d, |_, _| 0.4 * normal(rng) / (d * tau) as f64))
        .collect();
    VarModel::new(mu, lags, random_spd(d, rng.random_range(0.3..2.0), rng)).unwrap()
}

/// Random model with `n` movements of `k` segments; transitions may contain structural zeros.
pub fn random_spec<R: Rng>(n: usize, k: usize, d: usize, tau: usize, rng: &mut R) -> HhmmSpec {
    let movements = (0..n)
        .map(|_| {
            let segs = (0..k).map(|_| random_var(d, tau, rng)).collect();
            MovementModel::new(segs, random_stochastic(k, 0.3, rng), random_simplex(k, rng)).unwrap()
        })
        .collect();
    let prior = if rng.random::<bool>() {
        let mut p = DVector::zeros(n);
        p[0] = 1.0;
        p
    } else {
        random_simplex(n, rng)
    };
    HhmmSpec::new(movements, random_stochastic(n, 0.3, rng), prior, None).unwrap()
}

/// `mu + sum_p A_p y_{t-p}` with `history` most recent first.
pub fn predict(seg: &VarModel, history: &[Vec<f64>]) -> DVector<f64> {
    let mut out = seg.mu().clone();
    for (a, y) in seg.lag_mats().iter().zip(history) {
        out += a * DVector::from_column_slice(y);
    }
    out
}

/// Closed-form normal log density with explicit determinant and inverse.
pub fn direct_log_density(x: &DVector<f64>, mean: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let det = sigma.clone().lu().determinant();
    let inv = sigma.clone().try_inverse().expect("invertible");
    let r = x - mean;
    let q = (r.transpose() * inv * &r)[(0, 0)];
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + det.ln() + q)
}

/// Joint (movement, segment) transition matrix over the flattened state `m * k + i`.
pub fn joint_transition(spec: &HhmmSpec) -> DMatrix<f64> {
    let (n, k) = (spec.n_movements(), spec.n_segments());
    DMatrix::from_fn(n * k, n * k, |from, to| {
        let (mp, j) = (from / k, from % k);
        let (m, i) = (to / k, to % k);
        let seg = if m == mp {
            spec.movements()[m].seg_trans()[(j, i)]
        } else {
            spec.movements()[m].seg_prior()[i]
        };
        spec.mov_trans()[(mp, m)] * seg
    })
}

pub fn joint_prior(spec: &HhmmSpec) -> DVector<f64> {
    let k = spec.n_segments();
    DVector::from_fn(spec.n_movements() * k, |s, _| {
        spec.mov_prior()[s / k] * spec.movements()[s / k].seg_prior()[s % k]
    })
}

/// Linear-space likelihoods of frame `t` for every joint state, each scaled by
/// the same positive constant (so ratios are exact).
pub fn scaled_likelihoods(spec: &HhmmSpec, ys: &[Vec<f64>], t: usize) -> DVector<f64> {
    let k = spec.n_segments();
    let tau = spec.tau();
    let history: Vec<Vec<f64>> = (1..=tau).map(|p| ys[t - p].clone()).collect();
    let y = DVector::from_column_slice(&ys[t]);
    let logs: Vec<f64> = (0..spec.n_movements() * k)
        .map(|s| {
            let seg = &spec.movements()[s / k].segments()[s % k];
            direct_log_density(&y, &predict(seg, &history), seg.sigma())
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    DVector::from_iterator(logs.len(), logs.iter().map(|l| (l - top).exp()))
}

fn movement_marginal(alpha: &DVector<f64>, n: usize, k: usize) -> Vec<f64> {
    (0..n).map(|m| (0..k).map(|i| alpha[m * k + i]).sum()).collect()
}

/// Straight-line forward recursion in linear space. Frames before `tau` only
/// fill the lag buffer and report the initial movement marginal.
pub fn forward_bruteforce(spec: &HhmmSpec, ys: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k) = (spec.n_movements(), spec.n_segments());
    let p = joint_transition(spec);
    let mut alpha = joint_prior(spec);
    let mut out = Vec::with_capacity(ys.len());
    for t in 0..ys.len() {
        if t >= spec.tau() {
            let lik = scaled_likelihoods(spec, ys, t);
            let mut next = DVector::zeros(n * k);
            for to in 0..n * k {
                let mut acc = 0.0;
                for from in 0..n * k {
                    acc += alpha[from] * p[(from, to)];
                }
                next[to] = acc * lik[to];
            }
            let z = next.sum();
            alpha = next / z;
        }
        out.push(movement_marginal(&alpha, n, k));
    }
    out
}

/// Filtering marginals by summing the weight of every joint state path.
pub fn enumerate_paths(spec: &HhmmSpec, ys: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k) = (spec.n_movements(), spec.n_segments());
    let s = n * k;
    let tau = spec.tau();
    let p = joint_transition(spec);
    let prior = joint_prior(spec);
    let steps = ys.len().saturating_sub(tau);
    let liks: Vec<DVector<f64>> = (tau..ys.len()).map(|t| scaled_likelihoods(spec, ys, t)).collect();
    // marginal[depth][state]: summed weight of path prefixes x_0..x_depth ending in state
    let mut marginal = vec![vec![0.0; s]; steps + 1];

    fn walk(
        depth: usize,
        state: usize,
        weight: f64,
        p: &DMatrix<f64>,
        liks: &[DVector<f64>],
        marginal: &mut [Vec<f64>],
    ) {
        marginal[depth][state] += weight;
        if depth == liks.len() {
            return;
        }
        for next in 0..p.ncols() {
            let w = weight * p[(state, next)] * liks[depth][next];
            if w > 0.0 {
                walk(depth + 1, next, w, p, liks, marginal);
            }
        }
    }
    for x0 in 0..s {
        if prior[x0] > 0.0 {
            walk(0, x0, prior[x0], &p, &liks, &mut marginal);
        }
    }
    let initial = movement_marginal(&prior, n, k);
    let mut out = vec![initial; tau.min(ys.len())];
    for m in marginal.iter().skip(1) {
        let z: f64 = m.iter().sum();
        let alpha = DVector::from_iterator(s, m.iter().map(|v| v / z));
        out.push(movement_marginal(&alpha, n, k));
    }
    out
}

/// Simulate `len` frames from the model (no sensor clamping). Also returns
/// the joint state `m * k + i` of every frame.
pub fn simulate<R: Rng>(spec: &HhmmSpec, len: usize, rng: &mut R) -> (Vec<Vec<f64>>, Vec<usize>) {
    let (n, k, d) = (spec.n_movements(), spec.n_segments(), spec.dim());
    let draw = |w: &[f64], rng: &mut R| -> usize {
        let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
        for (i, &p) in w.iter().enumerate() {
            if u < p {
                return i;
            }
            u -= p;
        }
        w.len() - 1
    };
    let prior = joint_prior(spec);
    let p = joint_transition(spec);
    let mut state = draw(prior.as_slice(), rng);
    let mut ys: Vec<Vec<f64>> = Vec::with_capacity(len);
    let mut states = Vec::with_capacity(len);
    for t in 0..len {
        if t > 0 {
            let row: Vec<f64> = p.row(state).iter().copied().collect();
            state = draw(&row, rng);
        }
        let seg = &spec.movements()[state / k].segments()[state % k];
        let history: Vec<Vec<f64>> = (1..=spec.tau())
            .map(|q| if t >= q { ys[t - q].clone() } else { vec![0.0; d] })
            .collect();
        let chol = seg.sigma().clone().cholesky().unwrap().unpack();
        let z = DVector::from_fn(d, |_, _| normal(rng));
        let y = predict(seg, &history) + chol * z;
        ys.push(y.iter().copied().collect());
        states.push(state);
    }
    debug_assert!(states.iter().all(|&s| s < n * k));
    (ys, states)
}

/// Best path score by trying every segment path of each run.
pub fn viterbi_exhaustive(data: &[Vec<Vec<f64>>], model: &MovementModel) -> f64 {
    let k = model.n_segments();
    let tau = model.tau();
    let mut total = 0.0;
    for run in data {
        let len = run.len() - tau;
        let em: Vec<Vec<f64>> = (tau..run.len())
            .map(|t| {
                let history: Vec<Vec<f64>> = (1..=tau).map(|p| run[t - p].clone()).collect();
                let y = DVector::from_column_slice(&run[t]);
                model
                    .segments()
                    .iter()
                    .map(|s| direct_log_density(&y, &predict(s, &history), s.sigma()))
                    .collect()
            })
            .collect();
        let mut best = f64::NEG_INFINITY;
        let mut path = vec![0usize; len];
        loop {
            let mut score = model.seg_prior()[path[0]].ln() + em[0][path[0]];
            for t in 1..len {
                score += model.seg_trans()[(path[t - 1], path[t])].ln() + em[t][path[t]];
            }
            best = best.max(score);
            // odometer increment
            let mut pos = 0;
            loop {
                if pos == len {
                    total += best;
                    break;
                }
                path[pos] += 1;
                if path[pos] < k {
                    break;
                }
                path[pos] = 0;
                pos += 1;
            }
            if pos == len {
                break;
            }
        }
    }
    total
}

/// Least-squares VAR fit through the SVD pseudo-inverse of the stacked design.
/// Returns `(mu, lag matrices, residual covariance)`.
pub fn normal_equations_fit(
    data: &[Vec<Vec<f64>>],
    targets: &[(usize, usize)],
    tau: usize,
) -> (DVector<f64>, Vec<DMatrix<f64>>, DMatrix<f64>) {
    let d = data[0][0].len();
    let cols = 1 + d * tau;
    let n = targets.len();
    let x = DMatrix::from_fn(n, cols, |r, c| {
        let (run, t) = targets[r];
        if c == 0 {
            1.0
        } else {
            let lag = (c - 1) / d + 1;
            data[run][t - lag][(c - 1) % d]
        }
    });
    let y = DMatrix::from_fn(n, d, |r, c| {
        let (run, t) = targets[r];
        data[run][t][c]
    });
    let pinv = x.clone().pseudo_inverse(1e-12).unwrap();
    let b = &pinv * &y;
    let mu = DVector::from_fn(d, |r, _| b[(0, r)]);
    let lags = (0..tau)
        .map(|p| DMatrix::from_fn(d, d, |r, c| b[(1 + p * d + c, r)]))
        .collect();
    let resid = &y - &x * &b;
    let sigma = resid.transpose() * &resid / n as f64;
    (mu, lags, sigma)
}

/// Brute-force weighted KNN: standardize by training moments, scan all points,
/// sort by (distance, label), vote, lowest label wins ties.
pub fn knn_bruteforce(train: &[Vec<f64>], labels: &[usize], query: &[f64], k: usize, inverse_distance: bool) -> usize {
    let dim = train[0].len();
    let n = train.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|c| train.iter().map(|f| f[c]).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..dim)
        .map(|c| {
            let v = (train.iter().map(|f| (f[c] - mean[c]).powi(2)).sum::<f64>() / n).sqrt();
            if v > 0.0 {
                v
            } else {
                1.0
            }
        })
        .collect();
    let z = |f: &[f64]| -> Vec<f64> { (0..dim).map(|c| (f[c] - mean[c]) / sd[c]).collect() };
    let q = z(query);
    let mut all: Vec<(f64, usize)> = train
        .iter()
        .zip(labels)
        .map(|(f, &l)| {
            let zf = z(f);
            ((0..dim).map(|c| (zf[c] - q[c]).powi(2)).sum::<f64>().sqrt(), l)
        })
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let n_classes = labels.iter().max().unwrap() + 1;
    let mut votes = vec![0.0; n_classes];
    for &(dist, l) in all.iter().take(k) {
        votes[l] += if inverse_distance { 1.0 / (dist + 1e-12) } else { 1.0 };
    }
    let mut best = 0;
    for c in 1..n_classes {
        if votes[c] > votes[best] {
            best = c;
        }
    }
    best
}

/// Relative agreement with an absolute floor for values that are both negligible.
pub fn close_rel(a: f64, b: f64, rel: f64) -> bool {
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= rel * scale || scale < 1e-250
}
