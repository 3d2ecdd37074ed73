//! Nested truncation sets and the reinitialization rule.

use thiserror::Error;

use crate::schedule::GainSchedule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LadderError {
    #[error("r0 must be finite and positive, got {0}")]
    Radius(f64),
    #[error("growth factor must be finite and > 1, got {0}")]
    Growth(f64),
    #[error("dimension mismatch: center has {center} components, reinit theta has {theta}")]
    Dimension { center: usize, theta: usize },
    #[error("reinitialization point lies outside the base set (distance {distance} > r0 = {r0})")]
    ReinitOutsideBase { distance: f64, r0: f64 },
}

/// Euclidean balls `K_s = {θ : ‖θ − center‖ ≤ r0·growth^s}`.
///
/// Each ball lies in the interior of the next and their union is the whole
/// space. `sigma` is the active level; it only ever increases.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationLadder<X> {
    center: Vec<f64>,
    r0: f64,
    growth: f64,
    sigma: u32,
    reinit_theta: Vec<f64>,
    reinit_state: X,
}

pub const DEFAULT_R0: f64 = 10.0;
pub const DEFAULT_GROWTH: f64 = 10.0;

impl<X: Clone> TruncationLadder<X> {
    pub fn new(
        center: Vec<f64>,
        r0: f64,
        growth: f64,
        reinit_theta: Vec<f64>,
        reinit_state: X,
    ) -> Result<Self, LadderError> {
        if !(r0.is_finite() && r0 > 0.0) {
            return Err(LadderError::Radius(r0));
        }
        if !(growth.is_finite() && growth > 1.0) {
            return Err(LadderError::Growth(growth));
        }
        if center.len() != reinit_theta.len() {
            return Err(LadderError::Dimension {
                center: center.len(),
                theta: reinit_theta.len(),
            });
        }
        let distance = distance(&reinit_theta, &center);
        if !(distance <= r0) {
            return Err(LadderError::ReinitOutsideBase { distance, r0 });
        }
        Ok(TruncationLadder {
            center,
            r0,
            growth,
            sigma: 0,
            reinit_theta,
            reinit_state,
        })
    }

    /// Ladder centred on the initial point, which also serves as the reinitialization pair.
    pub fn centered_at(theta0: Vec<f64>, x0: X, r0: f64, growth: f64) -> Result<Self, LadderError> {
        Self::new(theta0.clone(), r0, growth, theta0, x0)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn sigma(&self) -> u32 {
        self.sigma
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn growth(&self) -> f64 {
        self.growth
    }

    pub fn reinit_theta(&self) -> &[f64] {
        &self.reinit_theta
    }

    pub fn reinit_state(&self) -> &X {
        &self.reinit_state
    }

    pub fn radius(&self, level: u32) -> f64 {
        self.r0 * self.growth.powi(level as i32)
    }

    pub fn contains(&self, theta: &[f64], level: u32) -> bool {
        distance(theta, &self.center) <= self.radius(level)
    }

    /// Moves to the level returned by a [`Decision::Reinit`].
    pub(crate) fn set_sigma(&mut self, sigma: u32) {
        debug_assert!(sigma >= self.sigma);
        self.sigma = sigma;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision<X> {
    Accept(Vec<f64>),
    Reinit { theta: Vec<f64>, state: X, sigma: u32 },
}

impl<X> Decision<X> {
    pub fn is_reinit(&self) -> bool {
        matches!(self, Decision::Reinit { .. })
    }
}

/// Accepts `theta_half` iff the move is within `b(k)` and the new point stays
/// inside the active set; otherwise returns the fixed reinitialization pair
/// with the truncation count advanced by one.
pub fn truncation_decide<X: Clone>(
    theta_prev: &[f64],
    theta_half: Vec<f64>,
    k: u64,
    schedule: &GainSchedule,
    ladder: &TruncationLadder<X>,
) -> Decision<X> {
    let step = distance(&theta_half, theta_prev);
    if step <= schedule.threshold(k) && ladder.contains(&theta_half, ladder.sigma) {
        Decision::Accept(theta_half)
    } else {
        Decision::Reinit {
            theta: ladder.reinit_theta.clone(),
            state: ladder.reinit_state.clone(),
            sigma: ladder.sigma + 1,
        }
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ladder(r0: f64) -> TruncationLadder<u8> {
        TruncationLadder::centered_at(vec![0.0, 0.0], 7, r0, 10.0).unwrap()
    }

    #[test]
    fn zero_move_accepts() {
        let l = ladder(1.0);
        let s = GainSchedule::default();
        let d = truncation_decide(&[0.3, 0.4], vec![0.3, 0.4], 1_000_000, &s, &l);
        assert_eq!(d, Decision::Accept(vec![0.3, 0.4]));
    }

    #[test]
    fn outside_active_set_reinits() {
        let l = ladder(0.5);
        let s = GainSchedule::default();
        let d = truncation_decide(&[0.3, 0.0], vec![0.6, 0.0], 1, &s, &l);
        assert_eq!(
            d,
            Decision::Reinit {
                theta: vec![0.0, 0.0],
                state: 7,
                sigma: 1
            }
        );
    }

    #[test]
    fn oversized_move_reinits() {
        let l = ladder(100.0);
        let s = GainSchedule::default();
        let k = 50;
        let step = 1.5 * s.threshold(k);
        let d = truncation_decide(&[0.0, 0.0], vec![step, 0.0], k, &s, &l);
        assert!(d.is_reinit());
    }

    #[test]
    fn sets_are_nested_with_margin() {
        let l = ladder(0.5);
        for s in 0..20 {
            assert!(l.radius(s) < l.radius(s + 1));
        }
        // Boundary of K_s is strictly inside K_{s+1}.
        let edge = vec![l.radius(2), 0.0];
        assert!(l.contains(&edge, 2));
        let beyond = vec![l.radius(2) * 1.0001, 0.0];
        assert!(!l.contains(&beyond, 2) && l.contains(&beyond, 3));
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(TruncationLadder::new(vec![0.0], 0.0, 10.0, vec![0.0], ()).is_err());
        assert!(TruncationLadder::new(vec![0.0], 1.0, 1.0, vec![0.0], ()).is_err());
        assert!(TruncationLadder::new(vec![0.0], 1.0, 10.0, vec![2.0], ()).is_err());
        assert!(TruncationLadder::new(vec![0.0], 1.0, 10.0, vec![0.0, 0.0], ()).is_err());
    }
}
