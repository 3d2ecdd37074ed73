//! Metropolis–Hastings kernels.
//!
//! All densities are handled in log space. A [`Proposal`] draws a candidate
//! and reports both the forward and reverse log proposal densities, which
//! [`mh_step`] combines with the target into the acceptance ratio.

use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("non-reversible proposal pair: q({from} -> {to}) > 0 but q({to} -> {from}) = 0")]
    NonReversible { from: usize, to: usize },
    #[error("state {state} outside the {n}-state space")]
    StateOutOfRange { state: usize, n: usize },
    #[error("point has {got} coordinates, bounds have {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid bounds on coordinate {coord}: [{lo}, {hi}]")]
    Bounds { coord: usize, lo: f64, hi: f64 },
    #[error("random-walk step must be finite and positive, got {0}")]
    Step(f64),
    #[error("proposal row {row} is not a probability vector (sum {sum})")]
    RowNotStochastic { row: usize, sum: f64 },
    #[error("proposal matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("log target is not finite at the current point ({0})")]
    CurrentNotFinite(f64),
    #[error("log target evaluated to NaN at the proposed point")]
    TargetNan,
}

/// A candidate move with its forward and reverse log proposal densities.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposed<P> {
    pub point: P,
    pub log_q_forward: f64,
    pub log_q_backward: f64,
}

pub trait Proposal {
    type Point: Clone;

    fn propose<R: Rng + ?Sized>(&self, x: &Self::Point, rng: &mut R) -> Result<Proposed<Self::Point>, KernelError>;

    /// `log q(x, y)`.
    fn log_density(&self, x: &Self::Point, y: &Self::Point) -> f64;

    fn is_symmetric(&self) -> bool {
        false
    }
}

/// Axis-aligned box. Infinite ends are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, KernelError> {
        if lo.len() != hi.len() {
            return Err(KernelError::Dimension {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (coord, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if l.is_nan() || h.is_nan() || l >= h {
                return Err(KernelError::Bounds { coord, lo: l, hi: h });
            }
        }
        Ok(Bounds { lo, hi })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self, KernelError> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn unbounded(dim: usize) -> Self {
        Bounds {
            lo: vec![f64::NEG_INFINITY; dim],
            hi: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.lo).zip(&self.hi).all(|((v, l), h)| *v >= *l && *v <= *h)
    }

    fn reflect(&self, coord: usize, mut z: f64) -> f64 {
        let (lo, hi) = (self.lo[coord], self.hi[coord]);
        // Terminates because every fold strictly reduces the overshoot on a finite interval.
        while z < lo || z > hi {
            if z < lo {
                z = 2.0 * lo - z;
            }
            if z > hi {
                z = 2.0 * hi - z;
            }
        }
        z
    }

    /// Number of preimages `z ∈ [x − s, x + s]` that fold onto `y`.
    fn preimages_within(&self, coord: usize, x: f64, y: f64, s: f64) -> u32 {
        let (lo, hi) = (self.lo[coord], self.hi[coord]);
        if !(lo.is_finite() && hi.is_finite()) {
            // One-sided or free coordinate: images are y and, if bounded, its mirror.
            let mut n = u32::from((y - x).abs() <= s);
            if lo.is_finite() && (2.0 * lo - y - x).abs() <= s && y != lo {
                n += 1;
            }
            if hi.is_finite() && (2.0 * hi - y - x).abs() <= s && y != hi {
                n += 1;
            }
            return n;
        }
        let period = 2.0 * (hi - lo);
        let mut n = 0;
        let mirror = (y != lo && y != hi).then_some(2.0 * lo - y);
        for base in std::iter::once(y).chain(mirror) {
            let first = ((x - s - base) / period).ceil() as i64;
            let last = ((x + s - base) / period).floor() as i64;
            for j in first..=last {
                let z = base + j as f64 * period;
                if (z - x).abs() <= s {
                    n += 1;
                }
            }
        }
        n
    }
}

/// Uniform cube random walk of half-width `step`, reflected into `bounds`.
///
/// The reflected kernel is symmetric, and satisfies `q(x, y) ≥ (2·step)^(−d)`
/// whenever `‖x − y‖ ≤ step`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomWalk {
    step: f64,
    bounds: Bounds,
}

impl RandomWalk {
    pub fn new(step: f64, bounds: Bounds) -> Result<Self, KernelError> {
        if !(step.is_finite() && step > 0.0) {
            return Err(KernelError::Step(step));
        }
        Ok(RandomWalk { step, bounds })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Moves one coordinate by a uniform step and reflects it into the box.
    ///
    /// The resulting single-site kernel is symmetric, so an MH step with it
    /// needs only the target ratio.
    pub fn propose_coordinate<R: Rng + ?Sized>(&self, coord: usize, value: f64, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.bounds.reflect(coord, value + self.step * (2.0 * u - 1.0))
    }

    /// `(ε₁, ε₂)` of the local positivity condition.
    pub fn local_positivity(&self) -> (f64, f64) {
        let d = self.bounds.dim() as i32;
        (self.step, (2.0 * self.step).powi(-d))
    }
}

impl Proposal for RandomWalk {
    type Point = Vec<f64>;

    fn propose<R: Rng + ?Sized>(&self, x: &Vec<f64>, rng: &mut R) -> Result<Proposed<Vec<f64>>, KernelError> {
        if x.len() != self.bounds.dim() {
            return Err(KernelError::Dimension {
                expected: self.bounds.dim(),
                got: x.len(),
            });
        }
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| {
                let u: f64 = rng.random();
                self.bounds.reflect(i, xi + self.step * (2.0 * u - 1.0))
            })
            .collect();
        let lq = self.log_density(x, &y);
        Ok(Proposed {
            point: y,
            log_q_forward: lq,
            log_q_backward: lq,
        })
    }

    fn log_density(&self, x: &Vec<f64>, y: &Vec<f64>) -> f64 {
        let cell = -(2.0 * self.step).ln();
        let mut total = 0.0;
        for (i, (&xi, &yi)) in x.iter().zip(y).enumerate() {
            let n = self.bounds.preimages_within(i, xi, yi, self.step);
            if n == 0 {
                return f64::NEG_INFINITY;
            }
            total += cell + f64::from(n).ln();
        }
        total
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}

/// Proposal on `{0, …, N−1}` given by a row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteNeighbor {
    matrix: DMatrix<f64>,
}

pub const ROW_SUM_TOL: f64 = 1e-12;

impl DiscreteNeighbor {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, KernelError> {
        check_stochastic(&matrix)?;
        Ok(DiscreteNeighbor { matrix })
    }

    /// Uniform over all states other than the current one.
    pub fn uniform_others(n: usize) -> Self {
        let p = 1.0 / (n as f64 - 1.0);
        let matrix = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { p });
        DiscreteNeighbor { matrix }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_states(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn check_stochastic(m: &DMatrix<f64>) -> Result<(), KernelError> {
    if m.nrows() != m.ncols() {
        return Err(KernelError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    for (row, r) in m.row_iter().enumerate() {
        let sum: f64 = r.iter().sum();
        if r.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(KernelError::RowNotStochastic { row, sum });
        }
    }
    Ok(())
}

impl Proposal for DiscreteNeighbor {
    type Point = usize;

    fn propose<R: Rng + ?Sized>(&self, &x: &usize, rng: &mut R) -> Result<Proposed<usize>, KernelError> {
        let n = self.n_states();
        if x >= n {
            return Err(KernelError::StateOutOfRange { state: x, n });
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut y = None;
        let mut last_positive = x;
        for j in 0..n {
            let p = self.matrix[(x, j)];
            if p > 0.0 {
                last_positive = j;
                acc += p;
                if u < acc {
                    y = Some(j);
                    break;
                }
            }
        }
        // Rounding can leave u above the accumulated mass by ~1e-16.
        let y = y.unwrap_or(last_positive);
        let forward = self.matrix[(x, y)];
        let backward = self.matrix[(y, x)];
        if backward <= 0.0 {
            return Err(KernelError::NonReversible { from: x, to: y });
        }
        Ok(Proposed {
            point: y,
            log_q_forward: forward.ln(),
            log_q_backward: backward.ln(),
        })
    }

    fn log_density(&self, &x: &usize, &y: &usize) -> f64 {
        self.matrix[(x, y)].ln()
    }

    fn is_symmetric(&self) -> bool {
        self.matrix == self.matrix.transpose()
    }
}

/// Log acceptance ratio `log π(y) − log π(x) + log q(y,x) − log q(x,y)`.
#[inline]
pub fn log_acceptance(log_target_x: f64, log_target_y: f64, log_q_forward: f64, log_q_backward: f64) -> f64 {
    log_target_y - log_target_x + log_q_backward - log_q_forward
}

/// Accepts with probability `min(1, exp(log_r))`; `log_r >= 0` accepts without a draw.
#[inline]
pub fn accept<R: Rng + ?Sized>(log_r: f64, rng: &mut R) -> bool {
    if log_r >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < log_r
}

/// One Metropolis–Hastings transition. A rejected move returns a clone of `x`.
pub fn mh_step<P, F, R>(x: &P::Point, log_target: F, proposal: &P, rng: &mut R) -> Result<(P::Point, bool), KernelError>
where
    P: Proposal,
    F: Fn(&P::Point) -> f64,
    R: Rng + ?Sized,
{
    let lx = log_target(x);
    if !lx.is_finite() {
        return Err(KernelError::CurrentNotFinite(lx));
    }
    let cand = proposal.propose(x, rng)?;
    let ly = log_target(&cand.point);
    if ly.is_nan() {
        return Err(KernelError::TargetNan);
    }
    let log_r = log_acceptance(lx, ly, cand.log_q_forward, cand.log_q_backward);
    if accept(log_r, rng) {
        Ok((cand.point, true))
    } else {
        Ok((x.clone(), false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_walk_reports_equal_densities() {
        let rw = RandomWalk::new(0.3, Bounds::cube(2, 0.0, 1.0).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p = rw.propose(&vec![0.1, 0.9], &mut rng).unwrap();
            assert_eq!(p.log_q_forward, p.log_q_backward);
            assert!(p.log_q_forward.is_finite());
        }
    }

    #[test]
    fn reflected_walk_stays_in_bounds() {
        let rw = RandomWalk::new(0.1, Bounds::cube(1, 0.0, 1.0).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = vec![0.95];
        for _ in 0..10_000 {
            let y = rw.propose(&x, &mut rng).unwrap().point;
            assert!((0.0..=1.0).contains(&y[0]));
        }
    }

    #[test]
    fn reflected_density_is_symmetric_and_normalized() {
        let rw = RandomWalk::new(0.25, Bounds::cube(1, 0.0, 1.0).unwrap()).unwrap();
        for &(x, y) in &[(0.05, 0.1), (0.95, 0.8), (0.02, 0.2), (0.5, 0.6)] {
            let a = rw.log_density(&vec![x], &vec![y]);
            let b = rw.log_density(&vec![y], &vec![x]);
            assert!((a - b).abs() < 1e-14, "{x} {y}");
        }
        // Midpoint rule over y integrates q(x, ·) to 1 even next to a wall.
        for x in [0.0, 0.03, 0.5, 0.99] {
            let n = 200_000;
            let total: f64 = (0..n)
                .map(|i| {
                    let y = (i as f64 + 0.5) / n as f64;
                    rw.log_density(&vec![x], &vec![y]).exp() / n as f64
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-4, "x = {x}: {total}");
        }
    }

    #[test]
    fn local_positivity_holds_on_sampled_pairs() {
        let rw = RandomWalk::new(0.2, Bounds::cube(3, -1.0, 1.0).unwrap()).unwrap();
        let (eps1, eps2) = rw.local_positivity();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dir: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            let r = eps1 * rng.random::<f64>();
            let y: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| (a + r * d / norm).clamp(-1.0, 1.0)).collect();
            assert!(rw.log_density(&x, &y) >= eps2.ln() - 1e-12);
        }
    }

    #[test]
    fn huge_box_does_not_lose_precision() {
        let rw = RandomWalk::new(0.5, Bounds::cube(2, -1e100, 1e100).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = vec![0.123, -4.5];
        let p = rw.propose(&x, &mut rng).unwrap();
        assert!((p.point[0] - 0.123).abs() <= 0.5 && (p.point[1] + 4.5).abs() <= 0.5);
        // Cell width 2·step = 1 in both coordinates.
        assert_eq!(p.log_q_forward, 0.0);
    }

    #[test]
    fn uniform_neighbor_log_q() {
        let q = DiscreteNeighbor::uniform_others(10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for x in 0..10 {
            let p = q.propose(&x, &mut rng).unwrap();
            assert_ne!(p.point, x);
            assert!((p.log_q_forward + 9f64.ln()).abs() < 1e-15);
            assert_eq!(p.log_q_forward, p.log_q_backward);
        }
    }

    #[test]
    fn non_reversible_pair_is_error() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let mut m3 = DMatrix::zeros(3, 3);
        m3[(0, 1)] = 1.0;
        m3[(1, 2)] = 1.0;
        m3[(2, 0)] = 1.0;
        let ok = DiscreteNeighbor::new(m).unwrap();
        let bad = DiscreteNeighbor::new(m3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(ok.propose(&0, &mut rng).is_ok());
        assert_eq!(
            bad.propose(&0, &mut rng),
            Err(KernelError::NonReversible { from: 0, to: 1 })
        );
    }

    #[test]
    fn stochastic_check() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.3, 0.6]);
        assert!(matches!(DiscreteNeighbor::new(m), Err(KernelError::RowNotStochastic { row: 1, .. })));
    }

    #[test]
    fn flat_target_always_accepts() {
        let q = DiscreteNeighbor::uniform_others(5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut x = 0;
        for _ in 0..1000 {
            let (y, acc) = mh_step(&x, |_| 0.0, &q, &mut rng).unwrap();
            assert!(acc);
            x = y;
        }
    }

    #[test]
    fn uphill_ratio_clamps_to_one() {
        let q = DiscreteNeighbor::uniform_others(2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let target = |s: &usize| if *s == 1 { 2f64.ln() } else { 0.0 };
        for _ in 0..100 {
            let (y, acc) = mh_step(&0, target, &q, &mut rng).unwrap();
            assert!(acc && y == 1);
        }
    }

    #[test]
    fn impossible_target_always_rejects_bit_equal() {
        let rw = RandomWalk::new(1.0, Bounds::unbounded(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = vec![0.1 + 0.2];
        for _ in 0..100 {
            let (y, acc) = mh_step(&x, |p: &Vec<f64>| if p == &x { 0.0 } else { f64::NEG_INFINITY }, &rw, &mut rng).unwrap();
            assert!(!acc);
            assert_eq!(y[0].to_bits(), x[0].to_bits());
        }
    }

    #[test]
    fn extreme_log_ratios_do_not_overflow() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        assert!(accept(700.0, &mut rng));
        let mut n = 0;
        for _ in 0..1000 {
            n += usize::from(accept(-700.0, &mut rng));
        }
        assert_eq!(n, 0);
        assert!(log_acceptance(-700.0, 700.0, 0.0, 0.0).is_finite());
    }
}
