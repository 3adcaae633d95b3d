//! Order-invariant discrepancy between predicted and actual descriptions,
//! the aggregate count error, and latency measurement.
//!
//! For each railcar type the actual and predicted loadings (count vectors)
//! are padded with empty loadings to a common length and matched by a
//! minimum-cost assignment under the L1 distance. The discrepancy of a
//! dataset is the summed matching cost over the summed number of actually
//! loaded containers.

use std::fmt::{self, Write as _};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::catalog::RailcarCatalog;
use crate::oracle::SolutionDescription;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("loading lists differ in length ({actual} vs {predicted}); pad them first")]
    Unpadded { actual: usize, predicted: usize },
    #[error("empty dataset")]
    Empty,
    #[error("discrepancy undefined: {numerator} mismatched containers but no actual loaded containers")]
    Undefined { numerator: u64 },
    #[error("{predicted} predictions for {actual} observations")]
    Count { actual: usize, predicted: usize },
}

/// Minimum-cost perfect matching on a square matrix. Returns the cost and,
/// for each row, its column.
pub fn hungarian(cost: &[Vec<i64>]) -> (i64, Vec<usize>) {
    let n = cost.len();
    if n == 0 {
        return (0, Vec::new());
    }
    // Shortest augmenting paths with potentials; 1-based with column 0 as
    // the virtual source.
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    let total = (0..n).map(|i| cost[i][assignment[i]]).sum();
    (total, assignment)
}

fn l1(a: &[u32], b: &[u32]) -> i64 {
    a.iter().zip(b).map(|(&x, &y)| (x as i64 - y as i64).abs()).sum()
}

/// Minimum total L1 distance over one-to-one matchings of two equally long
/// lists of count vectors.
pub fn assignment_min(actual: &[Vec<u32>], predicted: &[Vec<u32>]) -> Result<u64, EvalError> {
    if actual.len() != predicted.len() {
        return Err(EvalError::Unpadded { actual: actual.len(), predicted: predicted.len() });
    }
    let cost: Vec<Vec<i64>> = actual.iter().map(|a| predicted.iter().map(|p| l1(a, p)).collect()).collect();
    Ok(hungarian(&cost).0 as u64)
}

/// Pads both lists with zero vectors to the longer length.
pub fn pad(actual: &[Vec<u32>], predicted: &[Vec<u32>], lengths: usize) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    let k = actual.len().max(predicted.len());
    let fill = |v: &[Vec<u32>]| {
        let mut out = v.to_vec();
        out.resize(k, vec![0; lengths]);
        out
    };
    (fill(actual), fill(predicted))
}

/// Summed per-type matching cost between two descriptions.
pub fn discrepancy(actual: &SolutionDescription, predicted: &SolutionDescription, catalog: &RailcarCatalog) -> u64 {
    (0..catalog.num_types())
        .map(|j| {
            let (a, p) = pad(&actual.loadings_of_type(catalog, j), &predicted.loadings_of_type(catalog, j), catalog.num_lengths());
            assignment_min(&a, &p).expect("padded")
        })
        .sum()
}

/// Per-pair discrepancy ratio with the denominator floored at one, so it is
/// defined when nothing was actually loaded.
pub fn pair_ratio(actual: &SolutionDescription, predicted: &SolutionDescription, catalog: &RailcarCatalog) -> f64 {
    discrepancy(actual, predicted, catalog) as f64 / actual.total_containers(catalog).max(1) as f64
}

/// Dataset-level discrepancy with its spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DStats {
    pub n: usize,
    pub numerator: u64,
    pub denominator: u64,
    /// Ratio of sums; 0 when both sums are 0.
    pub d: f64,
    /// Linearized standard error of the ratio of sums.
    pub d_stderr: f64,
    /// Mean, standard deviation and standard error of the per-observation
    /// ratios (denominator floored at one).
    pub obs_mean: f64,
    pub obs_std: f64,
    pub obs_stderr: f64,
}

pub fn dataset_d(
    pairs: &[(SolutionDescription, SolutionDescription)],
    catalog: &RailcarCatalog,
) -> Result<DStats, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let per: Vec<(u64, u64)> = pairs
        .par_iter()
        .map(|(a, p)| (discrepancy(a, p, catalog), a.total_containers(catalog) as u64))
        .collect();
    let numerator: u64 = per.iter().map(|x| x.0).sum();
    let denominator: u64 = per.iter().map(|x| x.1).sum();
    if denominator == 0 && numerator > 0 {
        return Err(EvalError::Undefined { numerator });
    }
    let n = per.len();
    let d = if denominator == 0 { 0.0 } else { numerator as f64 / denominator as f64 };
    let d_stderr = if n < 2 || denominator == 0 {
        0.0
    } else {
        let mean_den = denominator as f64 / n as f64;
        let s2 = per.iter().map(|&(x, y)| (x as f64 - d * y as f64).powi(2)).sum::<f64>() / (n - 1) as f64;
        (s2 / n as f64).sqrt() / mean_den
    };
    let ratios: Vec<f64> = per.iter().map(|&(x, y)| x as f64 / y.max(1) as f64).collect();
    let (obs_mean, obs_std) = mean_std(&ratios);
    Ok(DStats { n, numerator, denominator, d, d_stderr, obs_mean, obs_std, obs_stderr: obs_std / (n as f64).sqrt() })
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean absolute error of the loaded-container total plus that of the used
/// platform total.
pub fn aggregate_error(pairs: &[(SolutionDescription, SolutionDescription)], catalog: &RailcarCatalog) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let diff = |f: &dyn Fn(&SolutionDescription) -> u32| {
        pairs.iter().map(|(a, p)| (f(a) as f64 - f(p) as f64).abs()).sum::<f64>() / n
    };
    diff(&|d| d.total_containers(catalog)) + diff(&|d| d.used_platforms(catalog))
}

/// Per-call wall-clock statistics in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Timing {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
}

/// Times `predict` on each input after one untimed warm-up call.
pub fn time_predictions<T, R>(inputs: &[T], mut predict: impl FnMut(&T) -> R) -> (Vec<R>, Timing) {
    if let Some(first) = inputs.first() {
        std::hint::black_box(predict(first));
    }
    let mut out = Vec::with_capacity(inputs.len());
    let mut secs = Vec::with_capacity(inputs.len());
    for x in inputs {
        let t = Instant::now();
        let r = predict(x);
        secs.push(t.elapsed().as_secs_f64());
        out.push(r);
    }
    (out, timing(&secs))
}

pub fn timing(secs: &[f64]) -> Timing {
    let (mean, std) = mean_std(secs);
    Timing { n: secs.len(), mean, std, stderr: if secs.is_empty() { 0.0 } else { std / (secs.len() as f64).sqrt() } }
}

/// Accuracy and latency of one predictor on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub d: DStats,
    pub aggregate_error: f64,
    pub timing: Option<Timing>,
}

impl EvalReport {
    pub fn new(label: &str, pairs: &[(SolutionDescription, SolutionDescription)], catalog: &RailcarCatalog, timing: Option<Timing>) -> Result<Self, EvalError> {
        Ok(EvalReport { label: label.to_string(), d: dataset_d(pairs, catalog)?, aggregate_error: aggregate_error(pairs, catalog), timing })
    }

    pub const CSV_HEADER: &'static str =
        "predictor,n,d_mean,d_stderr,obs_mean,obs_std,obs_stderr,aggregate_error,time_mean_s,time_std_s";

    /// One comma-separated row; timing columns are empty when not measured.
    pub fn csv_row(&self) -> String {
        let (tm, ts) = self.timing.map_or((String::new(), String::new()), |t| (format!("{:.6e}", t.mean), format!("{:.6e}", t.std)));
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{tm},{ts}",
            self.label, self.d.n, self.d.d, self.d.d_stderr, self.d.obs_mean, self.d.obs_std, self.d.obs_stderr, self.aggregate_error
        )
    }

    pub fn to_csv(reports: &[EvalReport]) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in reports {
            let _ = writeln!(s, "{}", r.csv_row());
        }
        s
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "predictor        {}", self.label)?;
        writeln!(f, "observations     {}", self.d.n)?;
        writeln!(f, "D (est. mean)    {:.6}", self.d.d)?;
        writeln!(f, "D std. error     {:.6}", self.d.d_stderr)?;
        writeln!(f, "per-obs. mean    {:.6}", self.d.obs_mean)?;
        writeln!(f, "per-obs. std dev {:.6}", self.d.obs_std)?;
        writeln!(f, "per-obs. stderr  {:.6}", self.d.obs_stderr)?;
        writeln!(f, "aggregate error  {:.6}", self.aggregate_error)?;
        if let Some(t) = self.timing {
            // Timing lines are not reproducible.
            writeln!(f, "time mean (s)    {:.6e}", t.mean)?;
            writeln!(f, "time std dev (s) {:.6e}", t.std)?;
        }
        Ok(())
    }
}
