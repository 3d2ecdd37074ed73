//! Power-law gain and truncation-threshold sequences.
//!
//! The gain is `a(k) = c1 · k^(-eta)` and the move threshold is
//! `b(k) = c2 · k^(-xi)`, both indexed from `k = 1`. [`validate_schedule`]
//! evaluates the step-size conditions required for convergence and for
//! asymptotic efficiency of the trajectory average. For power laws every
//! clause reduces to an inequality between exponents, so the check is exact.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("invalid schedule parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("schedule rejected; failed conditions: {}", .failed.join("; "))]
    Rejected { failed: Vec<String> },
}

/// Power-law gain / threshold family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSchedule {
    pub c1: f64,
    pub eta: f64,
    pub c2: f64,
    pub xi: f64,
    pub tau: f64,
    /// Moment exponent of the drift condition; any value `>= 2` for bounded fields.
    pub alpha: f64,
}

impl Default for GainSchedule {
    fn default() -> Self {
        GainSchedule {
            c1: 1.0,
            eta: 0.7,
            c2: 2.0,
            xi: 0.55,
            tau: 0.5,
            alpha: 10.0,
        }
    }
}

impl GainSchedule {
    /// Builds a schedule, enforcing the type-level domain (positivity,
    /// monotonicity, `tau ∈ (0,1]`, `alpha >= 2`). Convergence clauses are
    /// checked separately by [`validate_schedule`].
    pub fn new(c1: f64, eta: f64, c2: f64, xi: f64, tau: f64, alpha: f64) -> Result<Self, ScheduleError> {
        let s = GainSchedule { c1, eta, c2, xi, tau, alpha };
        s.check_domain()?;
        Ok(s)
    }

    /// Threshold `b(k) = 2 · a(k)^((1+tau)/2)`, which dominates any step of a
    /// field bounded by `sqrt(2)` while `a(k) <= 1`.
    pub fn with_bounded_field_threshold(self) -> Self {
        let p = (1.0 + self.tau) / 2.0;
        GainSchedule {
            c2: 2.0 * self.c1.powf(p),
            xi: self.eta * p,
            ..self
        }
    }

    pub fn check_domain(&self) -> Result<(), ScheduleError> {
        let bad = |field, reason: &str| {
            Err(ScheduleError::InvalidParameter {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.c1.is_finite() && self.c1 > 0.0) {
            return bad("c1", "must be finite and positive");
        }
        if !(self.c2.is_finite() && self.c2 > 0.0) {
            return bad("c2", "must be finite and positive");
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return bad("eta", "must be finite and nonnegative (nonincreasing gain)");
        }
        if !(self.xi.is_finite() && self.xi >= 0.0) {
            return bad("xi", "must be finite and nonnegative (nonincreasing threshold)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau", "must lie in (0, 1]");
        }
        if !(self.alpha.is_finite() && self.alpha >= 2.0) {
            return bad("alpha", "must be finite and at least 2");
        }
        Ok(())
    }

    /// Gain `a(k)`; `k` starts at 1.
    #[inline]
    pub fn gain(&self, k: u64) -> f64 {
        debug_assert!(k >= 1);
        self.c1 * (k as f64).powf(-self.eta)
    }

    /// Move threshold `b(k)`; `k` starts at 1.
    #[inline]
    pub fn threshold(&self, k: u64) -> f64 {
        debug_assert!(k >= 1);
        self.c2 * (k as f64).powf(-self.xi)
    }
}

pub fn gain_at(schedule: &GainSchedule, k: u64) -> f64 {
    schedule.gain(k)
}

/// Condition names used in [`ValidationReport`].
pub mod clause {
    pub const SUM_DIVERGES: &str = "Σ aₖ = ∞";
    pub const K_GAIN_DIVERGES: &str = "lim k·aₖ = ∞";
    pub const RELATIVE_DECREMENT: &str = "(aₖ₊₁ − aₖ)/aₖ = o(aₖ₊₁)";
    pub const WEIGHTED_SUM: &str = "Σ aₖ^((1+τ)/2)/√k < ∞";
    pub const PRODUCT_SUM: &str = "η+ξ>1";
    pub const RATIO_POWER_SUM: &str = "α(η−ξ)>1";
    pub const RATE: &str = "aₖ = O(k^−η) requires η > 1/2";

    pub const ALL: [&str; 7] = [
        SUM_DIVERGES,
        K_GAIN_DIVERGES,
        RELATIVE_DECREMENT,
        WEIGHTED_SUM,
        PRODUCT_SUM,
        RATIO_POWER_SUM,
        RATE,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClauseResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub clauses: Vec<ClauseResult>,
    /// Informational: `eta ∈ (1/2, 1)`, in which case some `tau ∈ (0,1]` satisfies
    /// the weighted-sum clause.
    pub tau_exists: bool,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &ClauseResult> {
        self.clauses.iter().filter(|c| !c.passed)
    }

    pub fn failed_names(&self) -> Vec<&'static str> {
        self.failed().map(|c| c.name).collect()
    }

    pub fn clause(&self, name: &str) -> Option<&ClauseResult> {
        self.clauses.iter().find(|c| c.name == name)
    }

    pub fn into_result(self) -> Result<(), ScheduleError> {
        if self.all_passed() {
            Ok(())
        } else {
            Err(ScheduleError::Rejected {
                failed: self
                    .failed()
                    .map(|c| format!("{} ({})", c.name, c.detail))
                    .collect(),
            })
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.clauses {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag}  {:<32} {}", c.name, c.detail)?;
        }
        write!(
            f,
            "info  valid τ ∈ (0,1] with η ∈ (1/2,1): {}",
            if self.tau_exists { "exists" } else { "none" }
        )
    }
}

/// Evaluates every step-size clause for a power-law schedule.
///
/// Structural domain violations (negative scale, `tau` outside `(0,1]`, ...)
/// are reported as [`ScheduleError::InvalidParameter`]; clause failures are
/// listed in the report and never dropped.
pub fn validate_schedule(schedule: &GainSchedule) -> Result<ValidationReport, ScheduleError> {
    schedule.check_domain()?;
    let GainSchedule { eta, xi, tau, alpha, .. } = *schedule;
    let mut clauses = Vec::with_capacity(clause::ALL.len());
    let mut push = |name, passed, detail: String| clauses.push(ClauseResult { name, passed, detail });

    push(clause::SUM_DIVERGES, eta <= 1.0, format!("needs η ≤ 1, η = {eta}"));
    push(clause::K_GAIN_DIVERGES, eta < 1.0, format!("k·aₖ = C₁k^(1−η) needs η < 1, η = {eta}"));
    // (a_{k+1} - a_k)/a_k ~ -η/k while a_{k+1} ~ C₁k^(-η): the ratio is o(1) iff η < 1.
    push(
        clause::RELATIVE_DECREMENT,
        eta < 1.0,
        format!("ratio ~ −(η/C₁)·k^(η−1) → 0 needs η < 1, η = {eta}"),
    );
    let weighted = eta * (1.0 + tau) / 2.0 + 0.5;
    push(
        clause::WEIGHTED_SUM,
        weighted > 1.0,
        format!("needs η(1+τ)/2 + 1/2 > 1, got {weighted}"),
    );
    push(clause::PRODUCT_SUM, eta + xi > 1.0, format!("Σ aₖbₖ < ∞ needs η+ξ > 1, got {}", eta + xi));
    let ratio_power = alpha * (eta - xi);
    push(
        clause::RATIO_POWER_SUM,
        ratio_power > 1.0,
        format!("Σ (aₖ/bₖ)^α < ∞ needs α(η−ξ) > 1, got {ratio_power}"),
    );
    push(clause::RATE, eta > 0.5, format!("η = {eta}"));

    Ok(ValidationReport {
        clauses,
        tau_exists: eta > 0.5 && eta < 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(eta: f64, xi: f64, alpha: f64, tau: f64) -> GainSchedule {
        GainSchedule::new(1.0, eta, 2.0, xi, tau, alpha).unwrap()
    }

    #[test]
    fn gain_values() {
        let s = GainSchedule::new(1.0, 0.7, 2.0, 0.55, 0.5, 10.0).unwrap();
        assert_eq!(gain_at(&s, 1), 1.0);
        assert!((gain_at(&s, 100) - 10f64.powf(-1.4)).abs() < 1e-15);
        assert!((gain_at(&s, 100) - 0.039811).abs() < 1e-6);
        let s = GainSchedule::new(2.0, 0.6, 2.0, 0.55, 0.5, 10.0).unwrap();
        // 32^(-0.6) = 2^(-3) exactly.
        assert!((gain_at(&s, 32) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sequences_nonincreasing() {
        let s = GainSchedule::default();
        for k in 1..10_000 {
            assert!(s.gain(k + 1) <= s.gain(k));
            assert!(s.threshold(k + 1) <= s.threshold(k));
            assert!(s.gain(k) > 0.0 && s.threshold(k) > 0.0);
        }
    }

    #[test]
    fn default_passes_all() {
        let r = validate_schedule(&sched(0.7, 0.55, 10.0, 0.5)).unwrap();
        assert!(r.all_passed(), "{r}");
        assert!(r.tau_exists);
        assert!(r.into_result().is_ok());
    }

    #[test]
    fn eta_one_fails_k_gain_clause() {
        let r = validate_schedule(&sched(1.0, 0.55, 10.0, 0.5)).unwrap();
        assert!(!r.clause(clause::K_GAIN_DIVERGES).unwrap().passed);
        assert!(r.clause(clause::SUM_DIVERGES).unwrap().passed);
        let err = r.into_result().unwrap_err().to_string();
        assert!(err.contains("lim k·aₖ = ∞"), "{err}");
    }

    #[test]
    fn eta_below_half_fails_rate_clause() {
        let r = validate_schedule(&sched(0.4, 0.2, 10.0, 0.5)).unwrap();
        assert!(!r.clause(clause::RATE).unwrap().passed);
        assert!(!r.tau_exists);
    }

    #[test]
    fn xi_too_close_to_eta_fails_ratio_power() {
        let r = validate_schedule(&sched(0.7, 0.65, 10.0, 0.5)).unwrap();
        assert_eq!(r.failed_names(), vec![clause::RATIO_POWER_SUM]);
    }

    #[test]
    fn single_exponent_perturbations_flip_matching_clause() {
        // (field perturbed, schedule across the boundary, expected failures)
        let cases = [
            (sched(0.7, 0.29, 10.0, 0.5), vec![clause::PRODUCT_SUM]),
            (sched(0.7, 0.61, 10.0, 0.5), vec![clause::RATIO_POWER_SUM]),
            (sched(0.7, 0.55, 6.0, 0.5), vec![clause::RATIO_POWER_SUM]),
            (sched(0.7, 0.55, 10.0, 0.4), vec![clause::WEIGHTED_SUM]),
            (sched(0.66, 0.55, 10.0, 0.5), vec![clause::WEIGHTED_SUM]),
            // Both clauses share the boundary η = 1 for power laws.
            (sched(1.0, 0.55, 10.0, 0.5), vec![clause::K_GAIN_DIVERGES, clause::RELATIVE_DECREMENT]),
            (sched(1.01, 0.55, 10.0, 0.5), vec![clause::SUM_DIVERGES, clause::K_GAIN_DIVERGES, clause::RELATIVE_DECREMENT]),
        ];
        for (s, expected) in cases {
            let r = validate_schedule(&s).unwrap();
            assert_eq!(r.failed_names(), expected, "{s:?}\n{r}");
        }
    }

    #[test]
    fn relative_decrement_matches_numeric_behaviour() {
        // Evaluate (a_{k+1}-a_k)/(a_k a_{k+1}) far out and compare with the symbolic verdict.
        for eta in [0.55, 0.7, 0.9, 1.0] {
            let s = sched(eta, 0.5, 10.0, 1.0);
            let ratio = |k: u64| (s.gain(k + 1) - s.gain(k)) / s.gain(k) / s.gain(k + 1);
            let early = ratio(1_000).abs();
            let late = ratio(1_000_000_000).abs();
            let shrinking = late < 0.5 * early;
            let verdict = validate_schedule(&s).unwrap().clause(clause::RELATIVE_DECREMENT).unwrap().passed;
            assert_eq!(shrinking, verdict, "eta = {eta}");
        }
    }

    #[test]
    fn domain_errors() {
        assert!(GainSchedule::new(0.0, 0.7, 2.0, 0.55, 0.5, 10.0).is_err());
        assert!(GainSchedule::new(1.0, 0.7, 2.0, 0.55, 0.0, 10.0).is_err());
        assert!(GainSchedule::new(1.0, 0.7, 2.0, 0.55, 0.5, 1.5).is_err());
        assert!(GainSchedule::new(1.0, -0.1, 2.0, 0.55, 0.5, 10.0).is_err());
    }

    #[test]
    fn bounded_field_threshold_dominates_steps() {
        let s = GainSchedule::default().with_bounded_field_threshold();
        assert!((s.xi - 0.525).abs() < 1e-15);
        for k in 1..100_000 {
            assert!(s.gain(k) * 2f64.sqrt() <= s.threshold(k));
        }
        assert!(validate_schedule(&s).unwrap().all_passed());
    }
}
