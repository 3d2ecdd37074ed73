//! Single runs, replication experiments and their summaries.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use samcmc::oracle::{exact_omega, noise_covariance, theta_star, OracleError};
use samcmc::samc::{omega_hat, run_samc, visit_freq, FiniteSamcModel};
use samcmc::samle::run_samle;
use samcmc::trace::trajectory_average;
use samcmc::truncation::LadderError;
use samcmc::{RunOptions, RunTrace, SaError, TruncationLadder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, Mode};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run with seed {seed}: {source}")]
    Run {
        seed: u64,
        #[source]
        source: SaError,
    },
    #[error("replication {index} failed: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("need R ≥ 2 replications for a covariance estimate, got {0}")]
    TooFewReplications(usize),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("ladder: {0}")]
    Ladder(#[from] LadderError),
    #[error("{command} needs mode = {expected}, config has mode = {got}")]
    Mode {
        command: &'static str,
        expected: Mode,
        got: Mode,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

pub fn samc_ladder(cfg: &ExperimentConfig) -> Result<TruncationLadder<usize>, LadderError> {
    let l = &cfg.ladder;
    TruncationLadder::centered_at(l.theta0.clone(), l.initial_state, l.r0, l.growth)
}

/// The imputation chain starts at the predictive mean under `theta0`.
pub fn samle_ladder(cfg: &ExperimentConfig) -> Result<TruncationLadder<Vec<f64>>, LadderError> {
    let l = &cfg.ladder;
    let x0 = cfg.toy.predictive_mean(l.theta0[0]);
    TruncationLadder::centered_at(l.theta0.clone(), x0, l.r0, l.growth)
}

pub fn run_samc_once(cfg: &ExperimentConfig, seed: u64, options: &RunOptions) -> Result<RunTrace, HarnessError> {
    let model = FiniteSamcModel::new(&cfg.chain);
    let proposal = cfg.chain.neighbor_proposal();
    run_samc(&model, &proposal, &cfg.schedule, samc_ladder(cfg)?, cfg.k_max, seed, options)
        .map_err(|source| HarnessError::Run { seed, source })
}

pub fn run_samle_once(cfg: &ExperimentConfig, seed: u64, options: &RunOptions) -> Result<RunTrace, HarnessError> {
    run_samle(&cfg.toy, &cfg.schedule, samle_ladder(cfg)?, cfg.k_max, seed, &cfg.samle, options)
        .map_err(|source| HarnessError::Run { seed, source })
}

/// Runs the configured mode once with `seed`.
pub fn run_once(cfg: &ExperimentConfig, seed: u64) -> Result<RunTrace, HarnessError> {
    let options = RunOptions {
        snapshot_stride: cfg.snapshot_stride,
    };
    match cfg.mode {
        Mode::Samle => run_samle_once(cfg, seed, &options),
        _ => run_samc_once(cfg, seed, &options),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: String,
    pub seed: u64,
    pub k: usize,
    pub k0: usize,
    pub theta_bar: Vec<f64>,
    /// Average of `θ_{k0+1} .. θ_k`.
    pub theta_bar_burnin: Vec<f64>,
    pub final_theta: Vec<f64>,
    /// Normalized subregion weights from `theta_bar_burnin` (SAMC only).
    pub omega_hat: Option<Vec<f64>>,
    pub visit_freq: Vec<f64>,
    pub truncations: u32,
    pub last_truncation: Option<usize>,
    /// Excluded from determinism comparisons.
    pub wall_time_secs: f64,
}

impl RunSummary {
    /// Copy with the timing field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        RunSummary {
            wall_time_secs: 0.0,
            ..self.clone()
        }
    }
}

pub fn summarize(cfg: &ExperimentConfig, trace: &RunTrace, wall_time_secs: f64) -> RunSummary {
    let theta_bar_burnin = trajectory_average(trace, cfg.k0).expect("k0 < k_max checked at load");
    let omega_hat = (cfg.mode != Mode::Samle)
        .then(|| omega_hat(&theta_bar_burnin, cfg.chain.pi()).ok())
        .flatten();
    RunSummary {
        mode: cfg.mode.to_string(),
        seed: trace.seed,
        k: trace.k,
        k0: cfg.k0,
        theta_bar: trajectory_average(trace, 0).expect("non-empty trace"),
        theta_bar_burnin,
        final_theta: trace.last_theta().map(<[f64]>::to_vec).unwrap_or_default(),
        omega_hat,
        visit_freq: visit_freq(trace),
        truncations: trace.sigma(),
        last_truncation: trace.last_truncation(),
        wall_time_secs,
    }
}

/// A run together with its summary.
pub fn run_and_summarize(cfg: &ExperimentConfig, seed: u64) -> Result<(RunTrace, RunSummary), HarnessError> {
    let start = Instant::now();
    let trace = run_once(cfg, seed)?;
    let summary = summarize(cfg, &trace, start.elapsed().as_secs_f64());
    Ok((trace, summary))
}

/// Per-component interval estimates from the replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentCi {
    pub component: usize,
    /// Mean of `θ̄ − θ*` and the half-width of its 95% interval.
    pub mean_error: f64,
    pub mean_error_half_width: f64,
    /// Diagonal of the scaled covariance with a 95% normal-approximation interval.
    pub scaled_var: f64,
    pub scaled_var_lower: f64,
    pub scaled_var_upper: f64,
    pub oracle_gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub k: usize,
    pub k0: usize,
    pub replications: usize,
    pub seed: u64,
    pub theta_star: Vec<f64>,
    /// `(k − k0)·Cov(θ̄ − θ*)` across replications (unbiased, divisor R − 1).
    pub empirical_cov: Vec<Vec<f64>>,
    pub oracle_gamma: Vec<Vec<f64>>,
    pub oracle_q: Vec<Vec<f64>>,
    /// `‖empirical − Γ‖_F / ‖Γ‖_F`.
    pub frobenius_rel_err: f64,
    /// `k·Cov(θ_k − θ*)`.
    pub last_iterate_cov: Vec<Vec<f64>>,
    pub per_component_ci: Vec<ComponentCi>,
    pub truncations: Vec<u32>,
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, c, |i, j| rows[i][j])
}

pub fn frobenius_rel_err(empirical: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    (empirical - reference).norm() / reference.norm()
}

/// Unbiased sample covariance of the rows of `samples`.
pub fn sample_cov(samples: &[Vec<f64>]) -> DMatrix<f64> {
    let r = samples.len();
    let d = samples[0].len();
    let mean = DVector::from_fn(d, |i, _| samples.iter().map(|s| s[i]).sum::<f64>() / r as f64);
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        let e = DVector::from_column_slice(s) - &mean;
        cov += &e * e.transpose();
    }
    cov / (r - 1) as f64
}

struct ReplicationResult {
    theta_bar: Vec<f64>,
    last: Vec<f64>,
    truncations: u32,
}

/// Runs `R` independent SAMC chains (seed + r) and compares the averaged
/// estimator's scaled covariance with the oracle `Γ`.
///
/// Chains run in parallel; aggregation follows replication index, so the
/// report depends only on the config.
pub fn run_replications(cfg: &ExperimentConfig) -> Result<EfficiencyReport, HarnessError> {
    if cfg.mode != Mode::Samc {
        return Err(HarnessError::Mode {
            command: "efficiency",
            expected: Mode::Samc,
            got: cfg.mode,
        });
    }
    if cfg.replications < 2 {
        return Err(HarnessError::TooFewReplications(cfg.replications));
    }
    let omega = exact_omega(&cfg.chain);
    let star = theta_star(&omega, cfg.chain.pi())?;
    let noise = noise_covariance(&cfg.chain, &star)?;

    let options = RunOptions { snapshot_stride: 0 };
    let results: Vec<Result<ReplicationResult, HarnessError>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let trace = run_samc_once(cfg, cfg.replication_seed(r), &options).map_err(|e| HarnessError::Replication {
                index: r,
                source: Box::new(e),
            })?;
            Ok(ReplicationResult {
                theta_bar: trajectory_average(&trace, cfg.k0).expect("k0 < k_max checked at load"),
                last: trace.last_theta().expect("non-empty trace").to_vec(),
                truncations: trace.sigma(),
            })
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let errors: Vec<Vec<f64>> = results
        .iter()
        .map(|r| r.theta_bar.iter().zip(&star).map(|(a, b)| a - b).collect())
        .collect();
    let lasts: Vec<Vec<f64>> = results
        .iter()
        .map(|r| r.last.iter().zip(&star).map(|(a, b)| a - b).collect())
        .collect();
    let n_avg = (cfg.k_max - cfg.k0) as f64;
    let empirical = sample_cov(&errors) * n_avg;
    let last_cov = sample_cov(&lasts) * cfg.k_max as f64;
    let gamma = &noise.gamma;

    let r = cfg.replications as f64;
    let z = 1.959_963_984_540_054;
    let per_component_ci = (0..star.len())
        .map(|i| {
            let mean = errors.iter().map(|e| e[i]).sum::<f64>() / r;
            let var = empirical[(i, i)];
            let rel = z * (2.0 / (r - 1.0)).sqrt();
            ComponentCi {
                component: i + 1,
                mean_error: mean,
                mean_error_half_width: z * (var / n_avg / r).sqrt(),
                scaled_var: var,
                scaled_var_lower: var * (1.0 - rel).max(0.0),
                scaled_var_upper: var * (1.0 + rel),
                oracle_gamma: gamma[(i, i)],
            }
        })
        .collect();

    Ok(EfficiencyReport {
        k: cfg.k_max,
        k0: cfg.k0,
        replications: cfg.replications,
        seed: cfg.seed,
        theta_star: star,
        frobenius_rel_err: frobenius_rel_err(&empirical, gamma),
        empirical_cov: to_rows(&empirical),
        oracle_gamma: to_rows(gamma),
        oracle_q: to_rows(&noise.q_matrix),
        last_iterate_cov: to_rows(&last_cov),
        per_component_ci,
        truncations: results.iter().map(|r| r.truncations).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use std::path::Path;

    fn cfg(text: &str) -> ExperimentConfig {
        parse_config(text, Path::new("."), "test").unwrap()
    }

    #[test]
    fn sample_cov_matches_hand_computation() {
        let s = vec![vec![1.0, 2.0], vec![3.0, 2.0], vec![2.0, 5.0]];
        let c = sample_cov(&s);
        assert!((c[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((c[(1, 1)] - 3.0).abs() < 1e-15);
        assert!((c[(0, 1)] - 0.0).abs() < 1e-15);
        assert_eq!(c, c.transpose());
    }

    #[test]
    fn single_replication_is_rejected() {
        let c = cfg("mode = \"samc\"\nk_max = 100\nreplications = 1\n");
        let msg = run_replications(&c).unwrap_err().to_string();
        assert!(msg.contains("need R ≥ 2"), "{msg}");
    }

    #[test]
    fn wrong_mode_rejected() {
        let c = cfg("mode = \"samle\"\nk_max = 100\nreplications = 4\n");
        assert!(matches!(run_replications(&c), Err(HarnessError::Mode { .. })));
    }

    #[test]
    fn replications_are_deterministic() {
        let c = cfg("mode = \"samc\"\nk_max = 2000\nreplications = 6\nseed = 9\n");
        let a = run_replications(&c).unwrap();
        let b = run_replications(&c).unwrap();
        assert_eq!(a, b);
        let m = from_rows(&a.empirical_cov);
        assert_eq!(m, m.transpose());
        assert!((frobenius_rel_err(&m, &from_rows(&a.oracle_gamma)) - a.frobenius_rel_err).abs() < 1e-15);
    }

    #[test]
    fn summary_uses_configured_burn_in() {
        let c = cfg("mode = \"samc\"\nk_max = 1000\nk0 = 400\n");
        let (trace, s) = run_and_summarize(&c, 5).unwrap();
        assert_eq!(s.k0, 400);
        assert_eq!(s.theta_bar_burnin, samcmc::trace::average_window(&trace, 400, 1000).unwrap());
        let w = s.omega_hat.unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn samle_summary_has_no_weights() {
        let c = cfg("mode = \"samle\"\nk_max = 500\n[schedule]\nc1 = 0.05\n");
        let (_, s) = run_and_summarize(&c, 1).unwrap();
        assert!(s.omega_hat.is_none());
        assert!(s.visit_freq.is_empty());
    }
}
