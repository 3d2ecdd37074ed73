//! Varying-truncation stochastic approximation MCMC driver.
//!
//! Each iteration draws `x_{k+1}` from a θ-indexed Markov kernel, forms
//! `θ_{k+½} = θ_k + a_k H(θ_k, x_{k+1})`, and either accepts it or
//! reinitializes through the truncation ladder. The kernel must leave the
//! θ-indexed target invariant; that is the caller's responsibility.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kernels::KernelError;
use crate::schedule::GainSchedule;
use crate::trace::{CompensatedSum, RunTrace, Snapshot};
use crate::truncation::{truncation_decide, Decision, TruncationLadder};

/// The random stream behind every run: ChaCha8 seeded from a `u64`.
pub type RunRng = ChaCha8Rng;

pub fn run_rng(seed: u64) -> RunRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SaError {
    #[error("non-finite iterate at k = {iteration}: component {component} = {value} (θ_k = {theta:?})")]
    NonFinite {
        iteration: u64,
        component: usize,
        value: f64,
        theta: Vec<f64>,
    },
    #[error("dimension mismatch: ladder has {ladder} components, field returned {field}")]
    Dimension { ladder: usize, field: usize },
    #[error("k_max must be at least 1")]
    NoIterations,
    #[error("sampling step failed at k = {iteration}: {source}")]
    Kernel {
        iteration: u64,
        #[source]
        source: KernelError,
    },
}

/// A stochastic approximation problem: a θ-indexed sampler plus the update direction.
pub trait SaProblem {
    type State: Clone;

    /// Dimension of θ.
    fn dim(&self) -> usize;

    /// One transition of `P_θ` from `x`.
    fn sample<R: Rng + ?Sized>(&self, theta: &[f64], x: &Self::State, rng: &mut R) -> Result<Self::State, KernelError>;

    /// Writes `H(θ, x)` into `out`.
    fn field(&self, theta: &[f64], x: &Self::State, out: &mut [f64]);

    /// Number of partition cells whose visits are counted; zero disables counting.
    fn n_regions(&self) -> usize {
        0
    }

    fn region(&self, _x: &Self::State) -> usize {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Record a [`Snapshot`] every `snapshot_stride` iterations; zero disables snapshots.
    pub snapshot_stride: usize,
}

pub const DEFAULT_SNAPSHOT_STRIDE: usize = 1000;

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            snapshot_stride: DEFAULT_SNAPSHOT_STRIDE,
        }
    }
}

/// Outcome of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Step<X> {
    pub theta: Vec<f64>,
    pub state: X,
    pub truncated: bool,
}

/// One iteration at index `k` with explicit gain `gain`.
///
/// On acceptance the new state is the sampled one; on truncation both θ and
/// the state come from the ladder's reinitialization pair and the ladder
/// level is advanced.
#[allow(clippy::too_many_arguments)]
pub fn sa_step<P: SaProblem, R: Rng + ?Sized>(
    problem: &P,
    theta: &[f64],
    x: &P::State,
    gain: f64,
    k: u64,
    schedule: &GainSchedule,
    ladder: &mut TruncationLadder<P::State>,
    field_buf: &mut [f64],
    rng: &mut R,
) -> Result<Step<P::State>, SaError> {
    let x_next = problem
        .sample(theta, x, rng)
        .map_err(|source| SaError::Kernel { iteration: k, source })?;
    problem.field(theta, &x_next, field_buf);
    let theta_half: Vec<f64> = theta.iter().zip(field_buf.iter()).map(|(t, h)| t + gain * h).collect();
    if let Some((component, &value)) = theta_half.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(SaError::NonFinite {
            iteration: k,
            component,
            value,
            theta: theta.to_vec(),
        });
    }
    Ok(match truncation_decide(theta, theta_half, k, schedule, ladder) {
        Decision::Accept(theta) => Step {
            theta,
            state: x_next,
            truncated: false,
        },
        Decision::Reinit { theta, state, sigma } => {
            ladder.set_sigma(sigma);
            Step {
                theta,
                state,
                truncated: true,
            }
        }
    })
}

/// Runs `k_max` iterations from the ladder's reinitialization pair.
pub fn run_sa<P: SaProblem>(
    problem: &P,
    schedule: &GainSchedule,
    ladder: TruncationLadder<P::State>,
    k_max: usize,
    seed: u64,
) -> Result<RunTrace, SaError> {
    run_sa_with(problem, schedule, ladder, k_max, seed, &RunOptions::default())
}

pub fn run_sa_with<P: SaProblem>(
    problem: &P,
    schedule: &GainSchedule,
    mut ladder: TruncationLadder<P::State>,
    k_max: usize,
    seed: u64,
    options: &RunOptions,
) -> Result<RunTrace, SaError> {
    if k_max == 0 {
        return Err(SaError::NoIterations);
    }
    let dim = problem.dim();
    if dim != ladder.dim() {
        return Err(SaError::Dimension {
            ladder: ladder.dim(),
            field: dim,
        });
    }
    let mut rng = run_rng(seed);
    let n_regions = problem.n_regions();
    let mut trace = RunTrace::new(dim, seed, n_regions, k_max);
    let mut sums = vec![CompensatedSum::default(); dim];
    let mut field = vec![0.0; dim];
    let mut theta = ladder.reinit_theta().to_vec();
    let mut x = ladder.reinit_state().clone();

    for k in 1..=k_max as u64 {
        let gain = schedule.gain(k);
        let step = sa_step(problem, &theta, &x, gain, k, schedule, &mut ladder, &mut field, &mut rng)?;
        if step.truncated {
            trace.sigma_events.push(k as usize);
        }
        theta = step.theta;
        x = step.state;
        trace.push(&theta, &mut sums);
        if n_regions > 0 {
            trace.visit_counts[problem.region(&x)] += 1;
        }
        if options.snapshot_stride > 0 && (k as usize).is_multiple_of(options.snapshot_stride) {
            trace.snapshots.push(snapshot(&trace, &theta, ladder.sigma()));
        }
    }
    Ok(trace)
}

fn snapshot(trace: &RunTrace, theta: &[f64], sigma: u32) -> Snapshot {
    let k = trace.k as f64;
    Snapshot {
        k: trace.k,
        theta: theta.to_vec(),
        visit_freq: trace.visit_counts.iter().map(|&c| c as f64 / k).collect(),
        sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::trajectory_average;
    use crate::truncation::distance;

    /// `H(θ, x) = −θ`, no randomness.
    struct Contraction;

    impl SaProblem for Contraction {
        type State = ();
        fn dim(&self) -> usize {
            1
        }
        fn sample<R: Rng + ?Sized>(&self, _: &[f64], _: &(), _: &mut R) -> Result<(), KernelError> {
            Ok(())
        }
        fn field(&self, theta: &[f64], _: &(), out: &mut [f64]) {
            out[0] = -theta[0];
        }
    }

    struct Frozen;

    impl SaProblem for Frozen {
        type State = ();
        fn dim(&self) -> usize {
            2
        }
        fn sample<R: Rng + ?Sized>(&self, _: &[f64], _: &(), _: &mut R) -> Result<(), KernelError> {
            Ok(())
        }
        fn field(&self, _: &[f64], _: &(), out: &mut [f64]) {
            out.fill(0.0);
        }
    }

    /// `H(θ, x) = x − θ` with `x ~ N(μ, 1)` approximated by a uniform draw.
    struct NoisyMean {
        mu: f64,
    }

    impl SaProblem for NoisyMean {
        type State = f64;
        fn dim(&self) -> usize {
            1
        }
        fn sample<R: Rng + ?Sized>(&self, _: &[f64], _: &f64, rng: &mut R) -> Result<f64, KernelError> {
            Ok(self.mu + rng.random_range(-1.0..1.0))
        }
        fn field(&self, theta: &[f64], x: &f64, out: &mut [f64]) {
            out[0] = x - theta[0];
        }
    }

    struct Exploding;

    impl SaProblem for Exploding {
        type State = ();
        fn dim(&self) -> usize {
            1
        }
        fn sample<R: Rng + ?Sized>(&self, _: &[f64], _: &(), _: &mut R) -> Result<(), KernelError> {
            Ok(())
        }
        fn field(&self, _: &[f64], _: &(), out: &mut [f64]) {
            out[0] = f64::NAN;
        }
    }

    #[test]
    fn deterministic_contraction_is_monotone() {
        let ladder = TruncationLadder::centered_at(vec![1.0], (), 10.0, 10.0).unwrap();
        let trace = run_sa(&Contraction, &GainSchedule::default(), ladder, 5000, 0).unwrap();
        let mut prev = 1.0f64;
        for t in trace.iterates() {
            assert!(t[0].abs() <= prev.abs());
            prev = t[0];
        }
        assert!(prev.abs() < 1e-10);
        assert!(trace.sigma_events.is_empty());
    }

    #[test]
    fn zero_field_keeps_start() {
        let ladder = TruncationLadder::centered_at(vec![0.25, -3.0], (), 10.0, 10.0).unwrap();
        let trace = run_sa(&Frozen, &GainSchedule::default(), ladder, 1000, 0).unwrap();
        assert!(trace.iterates().all(|t| t == [0.25, -3.0]));
        assert_eq!(trace.sigma(), 0);
        assert_eq!(trace.k, 1000);
        assert_eq!(trace.thetas.len(), 2000);
    }

    #[test]
    fn equal_seeds_equal_traces() {
        let mk = || TruncationLadder::centered_at(vec![0.0], 0.0, 10.0, 10.0).unwrap();
        let p = NoisyMean { mu: 2.0 };
        let s = GainSchedule::default();
        let a = run_sa(&p, &s, mk(), 10_000, 42).unwrap();
        let b = run_sa(&p, &s, mk(), 10_000, 42).unwrap();
        let c = run_sa(&p, &s, mk(), 10_000, 43).unwrap();
        assert!(a.thetas.iter().zip(&b.thetas).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a, b);
        assert_ne!(a.thetas, c.thetas);
        let avg = trajectory_average(&a, 1000).unwrap()[0];
        assert!((avg - 2.0).abs() < 0.05, "{avg}");
    }

    #[test]
    fn after_last_truncation_moves_are_admissible() {
        // Tight base set forces early truncations.
        let ladder = TruncationLadder::centered_at(vec![0.0], 0.0, 0.5, 2.0).unwrap();
        let s = GainSchedule::default();
        let trace = run_sa(&NoisyMean { mu: 3.0 }, &s, ladder.clone(), 20_000, 7).unwrap();
        assert!(trace.sigma() >= 1);
        let last = trace.last_truncation().unwrap();
        let level = trace.sigma();
        let mut prev = trace.theta(last).to_vec();
        for i in last + 1..=trace.k {
            let t = trace.theta(i);
            assert!(ladder.contains(t, level));
            assert!(distance(t, &prev) <= s.threshold(i as u64));
            prev = t.to_vec();
        }
        // Sigma events are strictly increasing iteration indices.
        assert!(trace.sigma_events.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn nan_aborts_with_diagnostic() {
        let ladder = TruncationLadder::centered_at(vec![0.5], (), 10.0, 10.0).unwrap();
        let err = run_sa(&Exploding, &GainSchedule::default(), ladder, 10, 0).unwrap_err();
        match err {
            SaError::NonFinite { iteration, component, theta, .. } => {
                assert_eq!((iteration, component), (1, 0));
                assert_eq!(theta, vec![0.5]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn running_sum_matches_average() {
        let ladder = TruncationLadder::centered_at(vec![0.0], 0.0, 10.0, 10.0).unwrap();
        let trace = run_sa(&NoisyMean { mu: -1.0 }, &GainSchedule::default(), ladder, 100_000, 3).unwrap();
        let avg = trajectory_average(&trace, 0).unwrap()[0];
        let scaled = avg * trace.k as f64;
        assert!((scaled - trace.running_sum[0]).abs() <= 4.0 * f64::EPSILON * scaled.abs());
    }

    #[test]
    fn snapshots_follow_stride() {
        let ladder = TruncationLadder::centered_at(vec![0.0], 0.0, 10.0, 10.0).unwrap();
        let opts = RunOptions { snapshot_stride: 250 };
        let trace = run_sa_with(&NoisyMean { mu: 0.0 }, &GainSchedule::default(), ladder, 1000, 1, &opts).unwrap();
        let ks: Vec<usize> = trace.snapshots.iter().map(|s| s.k).collect();
        assert_eq!(ks, vec![250, 500, 750, 1000]);
        assert_eq!(trace.snapshots[3].theta, trace.theta(1000));
    }
}
