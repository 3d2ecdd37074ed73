//! Stochastic approximation MLE for missing-data models.
//!
//! Missing data are imputed by Metropolis–Hastings moves targeting the
//! predictive density `p(x, θ)`, then θ moves along the complete-data score
//! `∂_θ log f(x, θ)`. Observed data are closed over by the model.

use std::path::Path;
use std::{fs, io};

use rand::Rng;
use thiserror::Error;

use crate::driver::{run_sa_with, sa_step, RunOptions, SaError, SaProblem, Step};
use crate::kernels::{accept, mh_step, Bounds, KernelError, Proposal, RandomWalk};
use crate::schedule::GainSchedule;
use crate::trace::RunTrace;
use crate::truncation::TruncationLadder;

pub trait MissingDataModel {
    fn theta_dim(&self) -> usize;

    fn x_dim(&self) -> usize;

    /// `∂_θ log f(x, θ)` written into `out`.
    fn grad_complete_loglik(&self, x: &[f64], theta: &[f64], out: &mut [f64]);

    /// `log p(x, θ)` up to an additive constant.
    fn predictive_log_density(&self, x: &[f64], theta: &[f64]) -> f64;
}

/// Half-width of the box standing in for an unbounded missing-data space.
pub const HUGE_BOX: f64 = 1e100;

/// How one imputation sweep moves the missing data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scan {
    /// Every coordinate in turn, each with its own MH accept/reject.
    #[default]
    Componentwise,
    /// A single MH move of the whole vector.
    Joint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamleOptions {
    /// Half-width of the uniform random-walk imputation proposal, per coordinate.
    pub step: f64,
    /// Symmetric reflection box `[−bound, bound]^{d_x}`.
    pub bound: f64,
    /// Imputation sweeps per θ update.
    pub sweeps: usize,
    pub scan: Scan,
}

impl Default for SamleOptions {
    fn default() -> Self {
        SamleOptions {
            step: 1.0,
            bound: HUGE_BOX,
            sweeps: 1,
            scan: Scan::Componentwise,
        }
    }
}

impl SamleOptions {
    pub fn proposal(&self, x_dim: usize) -> Result<RandomWalk, KernelError> {
        RandomWalk::new(self.step, Bounds::cube(x_dim, -self.bound, self.bound)?)
    }
}

/// One imputation sweep targeting `p(·, θ)`.
pub trait Imputer {
    fn impute<M: MissingDataModel, R: Rng + ?Sized>(
        &self,
        model: &M,
        theta: &[f64],
        x: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>, KernelError>;
}

/// A single joint MH move with any proposal.
pub struct JointMove<'a, Q>(pub &'a Q);

impl<Q: Proposal<Point = Vec<f64>>> Imputer for JointMove<'_, Q> {
    fn impute<M: MissingDataModel, R: Rng + ?Sized>(
        &self,
        model: &M,
        theta: &[f64],
        x: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>, KernelError> {
        Ok(mh_step(&x.to_vec(), |p| model.predictive_log_density(p, theta), self.0, rng)?.0)
    }
}

/// Systematic-scan single-site random walk.
pub struct SingleSiteSweep<'a>(pub &'a RandomWalk);

impl Imputer for SingleSiteSweep<'_> {
    fn impute<M: MissingDataModel, R: Rng + ?Sized>(
        &self,
        model: &M,
        theta: &[f64],
        x: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>, KernelError> {
        let mut x = x.to_vec();
        let mut lx = model.predictive_log_density(&x, theta);
        if !lx.is_finite() {
            return Err(KernelError::CurrentNotFinite(lx));
        }
        for i in 0..x.len() {
            let old = x[i];
            x[i] = self.0.propose_coordinate(i, old, rng);
            let ly = model.predictive_log_density(&x, theta);
            if ly.is_nan() {
                return Err(KernelError::TargetNan);
            }
            if accept(ly - lx, rng) {
                lx = ly;
            } else {
                x[i] = old;
            }
        }
        Ok(x)
    }
}

/// Adapter running SA-MLE through the generic driver.
pub struct SamleProblem<'a, M, I> {
    pub model: &'a M,
    pub imputer: I,
    pub sweeps: usize,
}

impl<M, I> SaProblem for SamleProblem<'_, M, I>
where
    M: MissingDataModel,
    I: Imputer,
{
    type State = Vec<f64>;

    fn dim(&self) -> usize {
        self.model.theta_dim()
    }

    fn sample<R: Rng + ?Sized>(&self, theta: &[f64], x: &Vec<f64>, rng: &mut R) -> Result<Vec<f64>, KernelError> {
        let mut x = x.clone();
        for _ in 0..self.sweeps {
            x = self.imputer.impute(self.model, theta, &x, rng)?;
        }
        Ok(x)
    }

    fn field(&self, theta: &[f64], x: &Vec<f64>, out: &mut [f64]) {
        self.model.grad_complete_loglik(x, theta, out);
    }
}

/// One iteration with gain `a`: a single joint MH move of `x`, then the θ update.
#[allow(clippy::too_many_arguments)]
pub fn samle_step<M, Q, R>(
    theta: &[f64],
    x: &Vec<f64>,
    model: &M,
    proposal: &Q,
    a: f64,
    k: u64,
    schedule: &GainSchedule,
    ladder: &mut TruncationLadder<Vec<f64>>,
    rng: &mut R,
) -> Result<Step<Vec<f64>>, SaError>
where
    M: MissingDataModel,
    Q: Proposal<Point = Vec<f64>>,
    R: Rng + ?Sized,
{
    let problem = SamleProblem {
        model,
        imputer: JointMove(proposal),
        sweeps: 1,
    };
    let mut buf = vec![0.0; model.theta_dim()];
    sa_step(&problem, theta, x, a, k, schedule, ladder, &mut buf, rng)
}

pub fn run_samle<M: MissingDataModel>(
    model: &M,
    schedule: &GainSchedule,
    ladder: TruncationLadder<Vec<f64>>,
    k_max: usize,
    seed: u64,
    samle: &SamleOptions,
    options: &RunOptions,
) -> Result<RunTrace, SaError> {
    let proposal = samle
        .proposal(model.x_dim())
        .map_err(|source| SaError::Kernel { iteration: 0, source })?;
    let sweeps = samle.sweeps.max(1);
    match samle.scan {
        Scan::Componentwise => {
            let problem = SamleProblem {
                model,
                imputer: SingleSiteSweep(&proposal),
                sweeps,
            };
            run_sa_with(&problem, schedule, ladder, k_max, seed, options)
        }
        Scan::Joint => {
            let problem = SamleProblem {
                model,
                imputer: JointMove(&proposal),
                sweeps,
            };
            run_sa_with(&problem, schedule, ladder, k_max, seed, options)
        }
    }
}

/// Complete data `x_i ~ N(θ, 1)`, observed `y_i | x_i ~ N(x_i, 1)`.
///
/// The predictive law is `x_i | y_i, θ ~ N((θ + y_i)/2, ½)` and the marginal
/// MLE is `ȳ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianToy {
    y: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: bad observation `{token}`")]
    Parse { line: usize, token: String },
    #[error("no observations")]
    Empty,
}

const GAUSSIAN_TOY_TEXT: &str = include_str!("../data/gaussian_toy.txt");

impl GaussianToy {
    pub fn new(y: Vec<f64>) -> Result<Self, FixtureError> {
        if y.is_empty() {
            return Err(FixtureError::Empty);
        }
        Ok(GaussianToy { y })
    }

    /// The bundled 20-observation dataset.
    pub fn fixture() -> Self {
        Self::parse(GAUSSIAN_TOY_TEXT).expect("bundled fixture is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FixtureError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| FixtureError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// One value per token; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, FixtureError> {
        let mut y = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.starts_with('#') {
                continue;
            }
            for tok in line.split_whitespace() {
                y.push(tok.parse().map_err(|_| FixtureError::Parse {
                    line: i + 1,
                    token: tok.to_string(),
                })?);
            }
        }
        Self::new(y)
    }

    pub fn observations(&self) -> &[f64] {
        &self.y
    }

    pub fn mle(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }

    pub fn predictive_mean(&self, theta: f64) -> Vec<f64> {
        self.y.iter().map(|y| (theta + y) / 2.0).collect()
    }

    /// `h(θ) = Σ (y_i − θ)/2`.
    pub fn mean_field(&self, theta: f64) -> f64 {
        self.y.iter().map(|y| (y - theta) / 2.0).sum()
    }

    /// Observed-data log-likelihood up to a constant, `−Σ (y_i − θ)²/4`.
    pub fn loglik(&self, theta: f64) -> f64 {
        -self.y.iter().map(|y| (y - theta) * (y - theta)).sum::<f64>() / 4.0
    }
}

impl MissingDataModel for GaussianToy {
    fn theta_dim(&self) -> usize {
        1
    }

    fn x_dim(&self) -> usize {
        self.y.len()
    }

    fn grad_complete_loglik(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        out[0] = x.iter().map(|xi| xi - theta[0]).sum();
    }

    fn predictive_log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        x.iter()
            .zip(&self.y)
            .map(|(xi, yi)| {
                let d = xi - (theta[0] + yi) / 2.0;
                -d * d
            })
            .sum()
    }
}
