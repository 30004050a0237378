use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

/// Rows are the reference label, columns the predicted label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn off_diagonal(&self) -> u64 {
        self.total() - (0..self.n_classes()).map(|i| self.counts[i][i]).sum::<u64>()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (total - self.off_diagonal()) as f64 / total as f64
    }
}

fn check_lengths(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// `counts[i][j] = #{t : truth = i, pred = j}`. The matrix is at least `n_classes` wide.
pub fn confusion(truth: &[usize], pred: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    check_lengths(truth, pred)?;
    let n = truth
        .iter()
        .chain(pred)
        .max()
        .map_or(0, |m| m + 1)
        .max(n_classes);
    let mut counts = vec![vec![0u64; n]; n];
    for (&t, &p) in truth.iter().zip(pred) {
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Per-class score with a flag telling whether its denominator was non-zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: Vec<f64>,
    pub precision_valid: Vec<bool>,
    pub recall: Vec<f64>,
    pub recall_valid: Vec<bool>,
}

/// Precision per predicted column and recall per reference row. Empty
/// denominators yield `0.0` with the validity flag cleared.
pub fn precision_recall(cm: &ConfusionMatrix) -> ClassScores {
    let n = cm.n_classes();
    let mut out = ClassScores {
        precision: vec![0.0; n],
        precision_valid: vec![false; n],
        recall: vec![0.0; n],
        recall_valid: vec![false; n],
    };
    for c in 0..n {
        let col: u64 = (0..n).map(|r| cm.counts[r][c]).sum();
        let row: u64 = cm.counts[c].iter().sum();
        if col > 0 {
            out.precision[c] = cm.counts[c][c] as f64 / col as f64;
            out.precision_valid[c] = true;
        }
        if row > 0 {
            out.recall[c] = cm.counts[c][c] as f64 / row as f64;
            out.recall_valid[c] = true;
        }
    }
    out
}

/// Lengths of maximal runs where the prediction disagrees with the reference.
pub fn misclassified_blocks(truth: &[usize], pred: &[usize]) -> Result<Vec<usize>> {
    check_lengths(truth, pred)?;
    let mut blocks = Vec::new();
    let mut run = 0;
    for (t, p) in truth.iter().zip(pred) {
        if t != p {
            run += 1;
        } else if run > 0 {
            blocks.push(run);
            run = 0;
        }
    }
    if run > 0 {
        blocks.push(run);
    }
    Ok(blocks)
}

/// Variance-ratio F statistic of two samples and its two-tailed p-value.
///
/// Experimental: block durations are far from normal, so the p-value is only
/// indicative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRatioTest {
    pub statistic: f64,
    pub df1: usize,
    pub df2: usize,
    pub p_value: f64,
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

pub fn variance_ratio_test(a: &[f64], b: &[f64]) -> Result<VarianceRatioTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData("F-test needs at least two samples per group".into()));
    }
    let (va, vb) = (sample_variance(a), sample_variance(b));
    if !(vb > 0.0) {
        return Err(Error::InsufficientData("second sample has zero variance".into()));
    }
    let statistic = va / vb;
    let (df1, df2) = (a.len() - 1, b.len() - 1);
    let dist = FisherSnedecor::new(df1 as f64, df2 as f64)
        .map_err(|e| Error::Parameter(format!("F distribution: {e}")))?;
    let lower = dist.cdf(statistic);
    let p_value = (2.0 * lower.min(1.0 - lower)).min(1.0);
    Ok(VarianceRatioTest {
        statistic,
        df1,
        df2,
        p_value,
    })
}

/// `(bin_start, count)` pairs with bins `[start, start + width)` covering all values.
pub fn histogram(values: &[f64], bin_width: f64) -> Vec<(f64, usize)> {
    if values.is_empty() || !(bin_width > 0.0) {
        return Vec::new();
    }
    let bin = |v: f64| (v / bin_width).floor() as i64;
    let lo = values.iter().map(|&v| bin(v)).min().unwrap_or(0);
    let hi = values.iter().map(|&v| bin(v)).max().unwrap_or(0);
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for &v in values {
        counts[(bin(v) - lo) as usize] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| ((lo + i as i64) as f64 * bin_width, c))
        .collect()
}
