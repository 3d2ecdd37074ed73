//! Stochastic approximation Monte Carlo.
//!
//! The sample space is partitioned into `E_1..E_m` and the sampler targets
//!
//! ```text
//! f_θ(x) ∝ ψ(x) · exp(−θ^(J(x))),   θ^(m) ≡ 0,
//! ```
//!
//! while θ^(i) tracks `log(ω_i/π_i) − log(ω_m/π_m)`. Subregions are 0-based in
//! code, so the reference region is index `m − 1` and θ has `m − 1` tracked
//! components.

use std::ops::Deref;

use rand::Rng;
use thiserror::Error;

use crate::chain::FiniteChainSpec;
use crate::driver::{run_sa_with, RunOptions, SaError, SaProblem};
use crate::kernels::{mh_step, KernelError, Proposal};
use crate::schedule::GainSchedule;
use crate::trace::RunTrace;
use crate::truncation::TruncationLadder;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamcError {
    #[error("desired distribution needs at least one region")]
    NoRegions,
    #[error("desired probability π_{index} = {value} is not positive")]
    NonPositive { index: usize, value: f64 },
    #[error("desired probabilities sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("θ has {got} components; {m} regions need {expected}", expected = .m - 1)]
    ThetaLength { m: usize, got: usize },
    #[error("energy thresholds must be strictly increasing")]
    Thresholds,
}

pub const PI_SUM_TOL: f64 = 1e-12;

/// Desired sampling probabilities `π_1..π_m`: all positive, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredDistribution(Vec<f64>);

impl DesiredDistribution {
    pub fn new(pi: Vec<f64>) -> Result<Self, SamcError> {
        if pi.is_empty() {
            return Err(SamcError::NoRegions);
        }
        if let Some((index, &value)) = pi.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(SamcError::NonPositive { index: index + 1, value });
        }
        let sum: f64 = pi.iter().sum();
        if (sum - 1.0).abs() > PI_SUM_TOL {
            return Err(SamcError::NotNormalized(sum));
        }
        Ok(DesiredDistribution(pi))
    }

    pub fn uniform(m: usize) -> Self {
        DesiredDistribution(vec![1.0 / m as f64; m])
    }
}

impl Deref for DesiredDistribution {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Log weights of the first `m − 1` subregions; the last one is pinned at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SamcTheta(Vec<f64>);

impl SamcTheta {
    pub fn zeros(m: usize) -> Self {
        SamcTheta(vec![0.0; m.saturating_sub(1)])
    }

    pub fn new(values: Vec<f64>, m: usize) -> Result<Self, SamcError> {
        if values.len() + 1 != m {
            return Err(SamcError::ThetaLength { m, got: values.len() });
        }
        Ok(SamcTheta(values))
    }

    /// Drops a common offset so that the last logical component is zero.
    pub fn from_extended(ext: &[f64]) -> Self {
        let (&last, head) = ext.split_last().expect("at least one region");
        SamcTheta(head.iter().map(|v| v - last).collect())
    }

    /// All `m` logical components, reference included.
    pub fn extended(&self) -> Vec<f64> {
        let mut v = self.0.clone();
        v.push(0.0);
        v
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for SamcTheta {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `θ^(j)`, zero for the reference region.
#[inline]
pub fn weight(theta: &[f64], j: usize) -> f64 {
    theta.get(j).copied().unwrap_or(0.0)
}

/// Unnormalized target `ψ` with its partition and desired distribution.
pub trait SamcModel {
    type Point: Clone;

    fn log_psi(&self, x: &Self::Point) -> f64;

    /// Subregion index `J(x)` in `0..m`.
    fn classify(&self, x: &Self::Point) -> usize;

    fn pi(&self) -> &DesiredDistribution;

    fn n_regions(&self) -> usize {
        self.pi().len()
    }
}

/// `log ψ(x) − θ^(J(x))`, up to an additive constant.
pub fn trial_log_density<M: SamcModel>(model: &M, theta: &[f64], x: &M::Point) -> f64 {
    model.log_psi(x) - weight(theta, model.classify(x))
}

/// Log MH ratio of the SAMC sampling step for a move `x → y`.
pub fn samc_log_ratio(
    theta: &[f64],
    j_x: usize,
    j_y: usize,
    log_psi_x: f64,
    log_psi_y: f64,
    log_q_xy: f64,
    log_q_yx: f64,
) -> f64 {
    weight(theta, j_x) - weight(theta, j_y) + log_psi_y - log_psi_x + log_q_yx - log_q_xy
}

/// `H(θ, x) = (1{J(x)=i} − π_i)_{i < m−1}`.
pub fn samc_field(j_visited: usize, pi: &[f64], out: &mut [f64]) {
    for (i, (o, p)) in out.iter_mut().zip(pi).enumerate() {
        *o = f64::from(u8::from(i == j_visited)) - p;
    }
}

/// Weight update `θ^(i) += a·(1{j=i} − π_i)` on the tracked components.
pub fn samc_update(theta: &SamcTheta, j_visited: usize, pi: &[f64], a: f64) -> SamcTheta {
    let mut h = vec![0.0; theta.len()];
    samc_field(j_visited, pi, &mut h);
    SamcTheta(theta.iter().zip(&h).map(|(t, d)| t + a * d).collect())
}

/// Normalized subregion weights `ω̂_i ∝ π_i·exp(θ̄^(i))` from an averaged θ.
pub fn omega_hat(theta_bar: &[f64], pi: &[f64]) -> Result<Vec<f64>, SamcError> {
    if theta_bar.len() + 1 != pi.len() {
        return Err(SamcError::ThetaLength {
            m: pi.len(),
            got: theta_bar.len(),
        });
    }
    let logs: Vec<f64> = pi
        .iter()
        .enumerate()
        .map(|(i, p)| p.ln() + weight(theta_bar, i))
        .collect();
    let lse = log_sum_exp(&logs);
    Ok(logs.iter().map(|l| (l - lse).exp()).collect())
}

/// Empirical subregion frequencies `π̂_k`.
pub fn visit_freq(trace: &RunTrace) -> Vec<f64> {
    let k = trace.k.max(1) as f64;
    trace.visit_counts.iter().map(|&c| c as f64 / k).collect()
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Adapter running SAMC through the generic driver.
pub struct SamcProblem<'a, M, Q> {
    pub model: &'a M,
    pub proposal: &'a Q,
}

impl<M, Q> SaProblem for SamcProblem<'_, M, Q>
where
    M: SamcModel,
    Q: Proposal<Point = M::Point>,
{
    type State = M::Point;

    fn dim(&self) -> usize {
        self.model.n_regions() - 1
    }

    fn sample<R: Rng + ?Sized>(&self, theta: &[f64], x: &M::Point, rng: &mut R) -> Result<M::Point, KernelError> {
        let (y, _) = mh_step(x, |p| trial_log_density(self.model, theta, p), self.proposal, rng)?;
        Ok(y)
    }

    fn field(&self, _theta: &[f64], x: &M::Point, out: &mut [f64]) {
        let pi = self.model.pi();
        let j = self.model.classify(x);
        samc_field(j, pi, out);
        if cfg!(debug_assertions) {
            // The full m-vector sums to zero and the tracked part is bounded by √2.
            let full: f64 = out.iter().sum::<f64>() + f64::from(u8::from(j == pi.len() - 1)) - pi[pi.len() - 1];
            debug_assert!(full.abs() < 1e-12, "update vector sums to {full}");
            let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            debug_assert!(norm <= 2f64.sqrt() + 1e-12, "‖H‖ = {norm}");
        }
    }

    fn n_regions(&self) -> usize {
        self.model.n_regions()
    }

    fn region(&self, x: &M::Point) -> usize {
        self.model.classify(x)
    }
}

/// Runs SAMC from the ladder's reinitialization pair.
///
/// Visit counts are taken on the state held after each iteration.
pub fn run_samc<M, Q>(
    model: &M,
    proposal: &Q,
    schedule: &GainSchedule,
    ladder: TruncationLadder<M::Point>,
    k_max: usize,
    seed: u64,
    options: &RunOptions,
) -> Result<RunTrace, SaError>
where
    M: SamcModel,
    Q: Proposal<Point = M::Point>,
{
    run_sa_with(&SamcProblem { model, proposal }, schedule, ladder, k_max, seed, options)
}

/// SAMC over a tabulated finite space.
#[derive(Debug, Clone)]
pub struct FiniteSamcModel<'a> {
    chain: &'a FiniteChainSpec,
}

impl<'a> FiniteSamcModel<'a> {
    pub fn new(chain: &'a FiniteChainSpec) -> Self {
        FiniteSamcModel { chain }
    }
}

impl SamcModel for FiniteSamcModel<'_> {
    type Point = usize;

    fn log_psi(&self, &x: &usize) -> f64 {
        self.chain.log_psi()[x]
    }

    fn classify(&self, &x: &usize) -> usize {
        self.chain.labels()[x]
    }

    fn pi(&self) -> &DesiredDistribution {
        self.chain.pi()
    }
}

/// Continuous model partitioned into energy bands of `U(x) = −log ψ(x)`.
///
/// With thresholds `u_1 < … < u_{m−1}`, region `i` is `[u_i, u_{i+1})`
/// (half-open, with `u_0 = −∞`, `u_m = +∞`).
pub struct EnergyBandModel<F> {
    log_psi: F,
    thresholds: Vec<f64>,
    pi: DesiredDistribution,
}

impl<F: Fn(&[f64]) -> f64> EnergyBandModel<F> {
    pub fn new(log_psi: F, thresholds: Vec<f64>, pi: DesiredDistribution) -> Result<Self, SamcError> {
        if thresholds.len() + 1 != pi.len() || thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(SamcError::Thresholds);
        }
        Ok(EnergyBandModel { log_psi, thresholds, pi })
    }

    pub fn band(&self, energy: f64) -> usize {
        self.thresholds.partition_point(|&u| u <= energy)
    }
}

impl<F: Fn(&[f64]) -> f64> SamcModel for EnergyBandModel<F> {
    type Point = Vec<f64>;

    fn log_psi(&self, x: &Vec<f64>) -> f64 {
        (self.log_psi)(x)
    }

    fn classify(&self, x: &Vec<f64>) -> usize {
        self.band(-(self.log_psi)(x))
    }

    fn pi(&self) -> &DesiredDistribution {
        &self.pi
    }
}
