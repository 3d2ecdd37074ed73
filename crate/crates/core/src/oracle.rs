//! Exact quantities for SAMC on a finite sample space.
//!
//! With `S_i = ω_i·e^(−θ^(i))` (`S_m = ω_m`) and `S = Σ S_j`, the mean field
//! is `h_i(θ) = S_i/S − π_i` and its Jacobian is
//! `F_ii = −(S_i/S)(1 − S_i/S)`, `F_ij = S_iS_j/S²`. The noise covariance `Q`
//! comes from the Poisson equation `u − P_θu = H − h` through
//! `l(θ,x) = Σ_y P(x,y)u(y)u(y)ᵀ − (Pu)(x)(Pu)(x)ᵀ` and `Q = E_f[l(θ, X)]`.
//! All `S`-ratios are formed in log space.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::chain::FiniteChainSpec;
use crate::samc::{log_sum_exp, samc_log_ratio};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("kernel not irreducible: state {0} is not mutually reachable from state 1")]
    Reducible(usize),
    #[error("{what} must be positive, got {value} at index {index}")]
    Domain { what: &'static str, index: usize, value: f64 },
    #[error("length mismatch: {0}")]
    Shape(String),
    #[error("singular linear system in {what} (condition estimate {condition:e})")]
    Singular { what: &'static str, condition: f64 },
    #[error("Jacobian not invertible")]
    JacobianSingular,
    #[error("mean field inconsistent with the field table and stationary law (max diff {0:e})")]
    InconsistentMean(f64),
}

/// Solves are rejected above this 1-norm condition estimate.
pub const MAX_CONDITION: f64 = 1e13;

/// `ω_i = Σ_{x ∈ E_i} ψ(x)`.
pub fn exact_omega(chain: &FiniteChainSpec) -> Vec<f64> {
    exact_log_omega(chain).into_iter().map(f64::exp).collect()
}

pub fn exact_log_omega(chain: &FiniteChainSpec) -> Vec<f64> {
    let mut per_region = vec![Vec::new(); chain.n_regions()];
    for (&lp, &label) in chain.log_psi().iter().zip(chain.labels()) {
        per_region[label].push(lp);
    }
    per_region.iter().map(|v| log_sum_exp(v)).collect()
}

/// `θ*_i = log(ω_i/π_i) − log(ω_m/π_m)`.
pub fn theta_star(omega: &[f64], pi: &[f64]) -> Result<Vec<f64>, OracleError> {
    check_positive("omega", omega)?;
    check_positive("pi", pi)?;
    if omega.len() != pi.len() || omega.is_empty() {
        return Err(OracleError::Shape(format!("{} weights vs {} probabilities", omega.len(), pi.len())));
    }
    let m = omega.len();
    let reference = omega[m - 1].ln() - pi[m - 1].ln();
    Ok((0..m - 1).map(|i| omega[i].ln() - pi[i].ln() - reference).collect())
}

fn check_positive(what: &'static str, v: &[f64]) -> Result<(), OracleError> {
    match v.iter().enumerate().find(|(_, x)| !(**x > 0.0 && x.is_finite())) {
        Some((index, &value)) => Err(OracleError::Domain { what, index, value }),
        None => Ok(()),
    }
}

/// MH transition matrix of the SAMC sampling step at fixed θ.
pub fn transition_matrix(chain: &FiniteChainSpec, theta: &[f64]) -> DMatrix<f64> {
    let n = chain.n_states();
    let q = chain.proposal();
    let lp = chain.log_psi();
    let lab = chain.labels();
    let mut p = DMatrix::zeros(n, n);
    for x in 0..n {
        // Rejected mass is summed directly so the diagonal never goes negative.
        let mut stay = q[(x, x)];
        for y in 0..n {
            if y == x || q[(x, y)] == 0.0 {
                continue;
            }
            let log_r = samc_log_ratio(theta, lab[x], lab[y], lp[x], lp[y], q[(x, y)].ln(), q[(y, x)].ln());
            let acc = if log_r >= 0.0 { 1.0 } else { log_r.exp() };
            p[(x, y)] = q[(x, y)] * acc;
            stay += q[(x, y)] * (1.0 - acc);
        }
        p[(x, x)] = stay;
    }
    p
}

/// Normalized trial density `f_θ(x) ∝ ψ(x)·e^(−θ^(J(x)))`.
pub fn trial_distribution(chain: &FiniteChainSpec, theta: &[f64]) -> DVector<f64> {
    let logs: Vec<f64> = chain
        .log_psi()
        .iter()
        .zip(chain.labels())
        .map(|(lp, &j)| lp - theta.get(j).copied().unwrap_or(0.0))
        .collect();
    let lse = log_sum_exp(&logs);
    DVector::from_iterator(logs.len(), logs.iter().map(|l| (l - lse).exp()))
}

/// Unique stationary law of an irreducible stochastic matrix, by direct solve.
pub fn stationary_dist(p: &DMatrix<f64>) -> Result<DVector<f64>, OracleError> {
    let n = p.nrows();
    if p.ncols() != n || n == 0 {
        return Err(OracleError::Shape(format!("{}x{} transition matrix", p.nrows(), p.ncols())));
    }
    if let Some(state) = unreachable_state(p) {
        return Err(OracleError::Reducible(state + 1));
    }
    // (Pᵀ − I) f = 0 with the last equation replaced by Σ f = 1.
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let f = solve(a, &b, "stationary distribution")?;
    Ok(f.map(|v| v.max(0.0)))
}

/// First state not strongly connected to state 0, if any.
fn unreachable_state(p: &DMatrix<f64>) -> Option<usize> {
    let n = p.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                let w = if forward { p[(i, j)] } else { p[(j, i)] };
                if w > 0.0 && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    };
    let fwd = reach(true);
    let bwd = reach(false);
    (0..n).find(|&i| !(fwd[i] && bwd[i]))
}

fn solve(a: DMatrix<f64>, b: &DVector<f64>, what: &'static str) -> Result<DVector<f64>, OracleError> {
    let condition = condition_estimate(&a);
    if !(condition <= MAX_CONDITION) {
        return Err(OracleError::Singular { what, condition });
    }
    a.lu().solve(b).ok_or(OracleError::Singular {
        what,
        condition: f64::INFINITY,
    })
}

fn solve_matrix(a: DMatrix<f64>, b: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>, OracleError> {
    let condition = condition_estimate(&a);
    if !(condition <= MAX_CONDITION) {
        return Err(OracleError::Singular { what, condition });
    }
    a.lu().solve(b).ok_or(OracleError::Singular {
        what,
        condition: f64::INFINITY,
    })
}

/// `‖A‖₁·‖A⁻¹‖₁`, infinite when `A` is numerically singular.
pub fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let norm1 = |m: &DMatrix<f64>| {
        m.column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    match a.clone().try_inverse() {
        Some(inv) => norm1(a) * norm1(&inv),
        None => f64::INFINITY,
    }
}

/// `S_j/S` for all `m` regions.
fn shares(theta: &[f64], omega: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = omega
        .iter()
        .enumerate()
        .map(|(j, w)| w.ln() - theta.get(j).copied().unwrap_or(0.0))
        .collect();
    let lse = log_sum_exp(&logs);
    logs.iter().map(|l| (l - lse).exp()).collect()
}

/// `h(θ) = (S_i/S − π_i)_{i<m}`.
pub fn mean_field(theta: &[f64], omega: &[f64], pi: &[f64]) -> DVector<f64> {
    let r = shares(theta, omega);
    DVector::from_iterator(theta.len(), (0..theta.len()).map(|i| r[i] - pi[i]))
}

/// `F = ∂h/∂θ`.
pub fn jacobian(theta: &[f64], omega: &[f64], _pi: &[f64]) -> DMatrix<f64> {
    let r = shares(theta, omega);
    let d = theta.len();
    DMatrix::from_fn(d, d, |i, j| if i == j { -r[i] * (1.0 - r[i]) } else { r[i] * r[j] })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lyapunov {
    /// `v(θ) = −log Λ(θ)`, `Λ = 1 − ½ Σ_{j<m} (S_j/S − π_j)²`.
    pub value: f64,
    pub gradient: DVector<f64>,
    /// `⟨∇v, h⟩` from the variance decomposition `−(bσ² + b(1−b)μ²)/Λ`.
    pub descent: f64,
}

pub fn lyapunov(theta: &[f64], omega: &[f64], pi: &[f64]) -> Lyapunov {
    let r = shares(theta, omega);
    let d = theta.len();
    let dev: Vec<f64> = (0..d).map(|i| r[i] - pi[i]).collect();
    let lambda = 1.0 - 0.5 * dev.iter().map(|x| x * x).sum::<f64>();
    let b: f64 = r[..d].iter().sum();
    // μ_ξ: mean of the deviations under weights S_i/(bS).
    let mu = dev.iter().zip(&r).map(|(e, s)| e * s).sum::<f64>() / b;
    let gradient = DVector::from_iterator(d, (0..d).map(|i| (b * mu * r[i] - dev[i] * r[i]) / lambda));
    let var = dev.iter().zip(&r).map(|(e, s)| (e - mu) * (e - mu) * s / b).sum::<f64>();
    let descent = if d == 0 {
        0.0
    } else {
        -(b * var + b * (1.0 - b) * mu * mu) / lambda
    };
    Lyapunov {
        value: -lambda.ln(),
        gradient,
        descent,
    }
}

/// `H(x)` for every state: rows are states, columns the tracked regions.
pub fn field_table(chain: &FiniteChainSpec) -> DMatrix<f64> {
    let pi = chain.pi();
    let d = chain.n_regions() - 1;
    DMatrix::from_fn(chain.n_states(), d, |x, i| {
        f64::from(u8::from(chain.labels()[x] == i)) - pi[i]
    })
}

/// Nullspace pin for the Poisson equation: `wᵀu = 0` with `Σ w = 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Pin {
    /// `fᵀu = 0` under the stationary law.
    StationaryMean,
    /// `u(x) = 0` at one state.
    State(usize),
}

/// Solves `u − Pu = H − h` with `fᵀu = 0`.
pub fn poisson_solve(
    p: &DMatrix<f64>,
    h_table: &DMatrix<f64>,
    h: &DVector<f64>,
    f: &DVector<f64>,
) -> Result<DMatrix<f64>, OracleError> {
    poisson_solve_pinned(p, h_table, h, f, &Pin::StationaryMean)
}

/// Solves `(I − P + 1wᵀ) u = H − h`, whose solution satisfies both the
/// Poisson equation and `wᵀu = 0` because `fᵀ(H − h) = 0`.
pub fn poisson_solve_pinned(
    p: &DMatrix<f64>,
    h_table: &DMatrix<f64>,
    h: &DVector<f64>,
    f: &DVector<f64>,
    pin: &Pin,
) -> Result<DMatrix<f64>, OracleError> {
    let n = p.nrows();
    if h_table.nrows() != n || f.len() != n || h.len() != h_table.ncols() {
        return Err(OracleError::Shape(format!(
            "P {n}x{n}, H {}x{}, h {}, f {}",
            h_table.nrows(),
            h_table.ncols(),
            h.len(),
            f.len()
        )));
    }
    let implied = h_table.transpose() * f;
    let gap = (&implied - h).amax();
    if !(gap <= 1e-10) {
        return Err(OracleError::InconsistentMean(gap));
    }
    let w = match pin {
        Pin::StationaryMean => f.clone(),
        Pin::State(i) => {
            let mut e = DVector::zeros(n);
            e[*i] = 1.0;
            e
        }
    };
    let ones = DVector::from_element(n, 1.0);
    let a = DMatrix::identity(n, n) - p + &ones * w.transpose();
    let rhs = DMatrix::from_fn(n, h.len(), |x, i| h_table[(x, i)] - h[i]);
    let mut u = solve_matrix(a, &rhs, "Poisson equation")?;
    // Remove the O(ε) residual of the pin.
    let offset = w.transpose() * &u;
    for (i, mut col) in u.column_iter_mut().enumerate() {
        col.add_scalar_mut(-offset[i]);
    }
    Ok(u)
}

/// `‖u − Pu − (H − h)‖_∞`.
pub fn poisson_residual(p: &DMatrix<f64>, u: &DMatrix<f64>, h_table: &DMatrix<f64>, h: &DVector<f64>) -> f64 {
    let pu = p * u;
    let mut worst = 0.0f64;
    for x in 0..u.nrows() {
        for i in 0..u.ncols() {
            let r = u[(x, i)] - pu[(x, i)] - (h_table[(x, i)] - h[i]);
            worst = worst.max(r.abs());
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCovariance {
    /// Poisson solution, one row per state.
    pub u: DMatrix<f64>,
    pub q_matrix: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub residual: f64,
}

/// `Q = Σ_x f(x)·l(θ,x)` at `θ`, and `Γ = F⁻¹QF⁻ᵀ` with `F` taken at `θ*`.
pub fn noise_covariance(chain: &FiniteChainSpec, theta: &[f64]) -> Result<NoiseCovariance, OracleError> {
    noise_covariance_pinned(chain, theta, &Pin::StationaryMean)
}

pub fn noise_covariance_pinned(
    chain: &FiniteChainSpec,
    theta: &[f64],
    pin: &Pin,
) -> Result<NoiseCovariance, OracleError> {
    let d = chain.n_regions() - 1;
    if theta.len() != d {
        return Err(OracleError::Shape(format!("θ has {} components, expected {d}", theta.len())));
    }
    let p = transition_matrix(chain, theta);
    let f = stationary_dist(&p)?;
    let h_table = field_table(chain);
    let h = h_table.transpose() * &f;
    let u = poisson_solve_pinned(&p, &h_table, &h, &f, pin)?;
    let residual = poisson_residual(&p, &u, &h_table, &h);
    let pu = &p * &u;

    let n = chain.n_states();
    let mut q = DMatrix::zeros(d, d);
    for x in 0..n {
        // l(θ,x) = Σ_y P(x,y) u(y)u(y)ᵀ − (Pu)(x)(Pu)(x)ᵀ
        let mut l = DMatrix::zeros(d, d);
        for y in 0..n {
            let pxy = p[(x, y)];
            if pxy == 0.0 {
                continue;
            }
            let uy = u.row(y);
            l += pxy * uy.transpose() * uy;
        }
        let pux = pu.row(x);
        l -= pux.transpose() * pux;
        q += f[x] * l;
    }
    q = (&q + q.transpose()) * 0.5;

    let omega = exact_omega(chain);
    let star = theta_star(&omega, chain.pi())?;
    let jac = jacobian(&star, &omega, chain.pi());
    let gamma = asymptotic_cov(&jac, &q)?;
    Ok(NoiseCovariance {
        u,
        q_matrix: q,
        gamma,
        residual,
    })
}

/// `Γ = F⁻¹ Q F⁻ᵀ`.
pub fn asymptotic_cov(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>, OracleError> {
    let inv = f.clone().try_inverse().ok_or(OracleError::JacobianSingular)?;
    if !inv.iter().all(|v| v.is_finite()) {
        return Err(OracleError::JacobianSingular);
    }
    let g = &inv * q * inv.transpose();
    Ok((&g + g.transpose()) * 0.5)
}
