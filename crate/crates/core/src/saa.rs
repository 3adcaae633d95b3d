//! Sample-average prediction: solve several weight scenarios of the same
//! booking and return the solution description with the lowest average
//! discrepancy to all of them.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::RailcarCatalog;
use crate::evaluation::{dataset_d, pair_ratio, timing, DStats, EvalError, Timing};
use crate::instances::{sample_weights, stream_rng, Booking};
use crate::oracle::{self, OracleError, SolutionDescription, SolverConfig};

#[derive(Debug, Error)]
pub enum SaaError {
    #[error("scenario {index}: {source}")]
    Scenario {
        index: usize,
        #[source]
        source: OracleError,
    },
    #[error("invalid SAA configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaaConfig {
    /// Scenario counts to evaluate, increasing.
    pub scenarios: Vec<usize>,
    pub seed: u64,
    #[serde(skip)]
    pub solver: SolverConfig,
}

impl Default for SaaConfig {
    fn default() -> Self {
        SaaConfig { scenarios: vec![5, 10, 25, 50, 99], seed: 0, solver: SolverConfig::default() }
    }
}

impl SaaConfig {
    pub fn validate(&self) -> Result<(), SaaError> {
        if self.scenarios.is_empty() || self.scenarios[0] == 0 {
            return Err(SaaError::Config("scenario counts must be positive".into()));
        }
        if self.scenarios.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SaaError::Config(format!("scenario counts {:?} must increase", self.scenarios)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaaPrediction {
    pub description: SolutionDescription,
    /// One oracle description per scenario, in draw order.
    pub candidates: Vec<SolutionDescription>,
    pub chosen: usize,
    /// Scenarios whose oracle ran out of nodes (incumbent used).
    pub budget_exhausted: usize,
}

/// Candidate with the smallest mean discrepancy against all candidates
/// (each in turn taken as the actual plan); ties go to the lowest index.
pub fn medoid(candidates: &[SolutionDescription], catalog: &RailcarCatalog) -> usize {
    // Distinct descriptions only need one matching per ordered pair.
    let mut ids: HashMap<&SolutionDescription, usize> = HashMap::new();
    let class: Vec<usize> = candidates
        .iter()
        .map(|c| {
            let next = ids.len();
            *ids.entry(c).or_insert(next)
        })
        .collect();
    let mut reps = vec![0; ids.len()];
    for (i, &c) in class.iter().enumerate().rev() {
        reps[c] = i;
    }
    let k = reps.len();
    let mut table = vec![0.0; k * k];
    for (a, &ra) in reps.iter().enumerate() {
        for (b, &rb) in reps.iter().enumerate() {
            if a != b {
                table[a * k + b] = pair_ratio(&candidates[rb], &candidates[ra], catalog);
            }
        }
    }
    let mut best = (f64::INFINITY, 0);
    for (i, &ci) in class.iter().enumerate() {
        let score: f64 = class.iter().map(|&cs| table[ci * k + cs]).sum::<f64>() / candidates.len() as f64;
        if score < best.0 {
            best = (score, i);
        }
    }
    best.1
}

/// Draws `n` weight scenarios from `rng`, solves each and returns the medoid.
pub fn saa_predict<R: Rng + ?Sized>(
    booking: &Booking,
    n: usize,
    rng: &mut R,
    catalog: &RailcarCatalog,
    solver: &SolverConfig,
) -> Result<SaaPrediction, SaaError> {
    if n == 0 {
        return Err(SaaError::Config("at least one scenario is needed".into()));
    }
    let mut candidates = Vec::with_capacity(n);
    let mut budget_exhausted = 0;
    for index in 0..n {
        let scenario = sample_weights(booking, catalog, rng);
        let solution = match oracle::solve_full_info(&scenario, catalog, solver) {
            Ok(s) => s,
            Err(OracleError::Budget { incumbent, .. }) => {
                budget_exhausted += 1;
                *incumbent
            }
            Err(source) => return Err(SaaError::Scenario { index, source }),
        };
        candidates.push(oracle::synthesize(&solution, catalog));
    }
    let chosen = medoid(&candidates, catalog);
    Ok(SaaPrediction { description: candidates[chosen].clone(), candidates, chosen, budget_exhausted })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaaRow {
    pub scenarios: usize,
    pub d: DStats,
    pub timing: Timing,
    pub predictions: Vec<SolutionDescription>,
}

/// Accuracy and cost of the SAA predictor per scenario count.
#[derive(Debug, Clone, PartialEq)]
pub struct SaaReport {
    pub rows: Vec<SaaRow>,
}

/// Evaluates SAA prediction on labeled observations. Observation `i` draws
/// its scenarios from stream `i` of `config.seed`, so smaller scenario sets
/// are prefixes of larger ones.
pub fn saa_bound(
    observations: &[(Booking, SolutionDescription)],
    config: &SaaConfig,
    catalog: &RailcarCatalog,
) -> Result<SaaReport, SaaError> {
    config.validate()?;
    let mut rows = Vec::new();
    for &n in &config.scenarios {
        let results: Vec<Result<(SolutionDescription, f64), SaaError>> = observations
            .par_iter()
            .enumerate()
            .map(|(i, (booking, _))| {
                let start = Instant::now();
                let p = saa_predict(booking, n, &mut stream_rng(config.seed, i as u64), catalog, &config.solver)?;
                Ok((p.description, start.elapsed().as_secs_f64()))
            })
            .collect();
        let mut predictions = Vec::with_capacity(observations.len());
        let mut secs = Vec::with_capacity(observations.len());
        for r in results {
            let (d, s) = r?;
            predictions.push(d);
            secs.push(s);
        }
        let pairs: Vec<(SolutionDescription, SolutionDescription)> =
            observations.iter().map(|(_, a)| a.clone()).zip(predictions.iter().cloned()).collect();
        rows.push(SaaRow { scenarios: n, d: dataset_d(&pairs, catalog)?, timing: timing(&secs), predictions });
    }
    Ok(SaaReport { rows })
}

impl SaaReport {
    pub const CSV_HEADER: &'static str = "scenarios,n,d_mean,d_stderr,obs_std,time_mean_s,time_std_s";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{:.6},{:.6e},{:.6e}",
                r.scenarios, r.d.n, r.d.d, r.d.d_stderr, r.d.obs_std, r.timing.mean, r.timing.std
            );
        }
        s
    }
}

impl fmt::Display for SaaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>9}  {:>10}  {:>10}  {:>10}  {:>13}  {:>13}", "scenarios", "D mean", "D stderr", "obs std", "time mean (s)", "time std (s)")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>9}  {:>10.6}  {:>10.6}  {:>10.6}  {:>13.6e}  {:>13.6e}",
                r.scenarios, r.d.d, r.d.d_stderr, r.d.obs_std, r.timing.mean, r.timing.std
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_candidates_and_single_scenario() {
        let cat = RailcarCatalog::toy();
        let d = SolutionDescription::from_patterns([1, 5]);
        assert_eq!(medoid(&[d.clone(), d.clone(), d], &cat), 0);
        let b = Booking::new(vec![1, 1], vec![3, 2]);
        let p = saa_predict(&b, 1, &mut stream_rng(1, 0), &cat, &SolverConfig::default()).unwrap();
        assert_eq!(p.description, p.candidates[0]);
    }

    #[test]
    fn no_containers_gives_empty_plan() {
        let cat = RailcarCatalog::toy();
        let b = Booking::new(vec![2, 1], vec![0, 0]);
        for n in [1, 5] {
            assert!(saa_predict(&b, n, &mut stream_rng(2, 0), &cat, &SolverConfig::default()).unwrap().description.is_empty());
        }
    }

    #[test]
    fn config_checks() {
        assert!(SaaConfig::default().validate().is_ok());
        assert!(SaaConfig { scenarios: vec![5, 5], ..Default::default() }.validate().is_err());
        assert!(SaaConfig { scenarios: vec![0, 5], ..Default::default() }.validate().is_err());
    }
}
