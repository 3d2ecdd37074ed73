//! Run history and trajectory averaging.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("empty averaging window: burn-in {k0} leaves nothing of {k} iterates")]
    EmptyWindow { k0: usize, k: usize },
    #[error("no iterations recorded")]
    Empty,
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Periodic record of the run state.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub k: usize,
    pub theta: Vec<f64>,
    /// Visit frequencies `π̂_k`; empty for runs without a partition.
    pub visit_freq: Vec<f64>,
    pub sigma: u32,
}

/// Everything a finished run produced.
///
/// `thetas` holds `θ_1..θ_k` row-major (`k × dim`); the initial point is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub dim: usize,
    pub thetas: Vec<f64>,
    pub sigma_events: Vec<usize>,
    pub running_sum: Vec<f64>,
    pub k: usize,
    pub seed: u64,
    pub visit_counts: Vec<u64>,
    pub snapshots: Vec<Snapshot>,
}

impl RunTrace {
    pub fn new(dim: usize, seed: u64, n_regions: usize, capacity: usize) -> Self {
        RunTrace {
            dim,
            thetas: Vec::with_capacity(capacity * dim),
            sigma_events: Vec::new(),
            running_sum: vec![0.0; dim],
            k: 0,
            seed,
            visit_counts: vec![0; n_regions],
            snapshots: Vec::new(),
        }
    }

    /// `θ_i` for `i` in `1..=k`.
    pub fn theta(&self, i: usize) -> &[f64] {
        assert!(i >= 1 && i <= self.k, "iterate {i} out of range 1..={}", self.k);
        &self.thetas[(i - 1) * self.dim..i * self.dim]
    }

    pub fn last_theta(&self) -> Option<&[f64]> {
        (self.k > 0).then(|| self.theta(self.k))
    }

    pub fn iterates(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size.
        let dim = self.dim.max(1);
        self.thetas.chunks_exact(dim).take(if self.dim == 0 { 0 } else { self.k })
    }

    /// Final truncation count.
    pub fn sigma(&self) -> u32 {
        self.sigma_events.len() as u32
    }

    /// Iteration of the last truncation, if any.
    pub fn last_truncation(&self) -> Option<usize> {
        self.sigma_events.last().copied()
    }

    pub(crate) fn push(&mut self, theta: &[f64], sums: &mut [CompensatedSum]) {
        debug_assert_eq!(theta.len(), self.dim);
        self.thetas.extend_from_slice(theta);
        for ((s, acc), &t) in self.running_sum.iter_mut().zip(sums.iter_mut()).zip(theta) {
            acc.add(t);
            *s = acc.value();
        }
        self.k += 1;
    }
}

/// Average of `θ_{start+1} .. θ_end` (1-based, inclusive end), compensated.
pub fn average_window(trace: &RunTrace, start: usize, end: usize) -> Result<Vec<f64>, TraceError> {
    if trace.k == 0 {
        return Err(TraceError::Empty);
    }
    let end = end.min(trace.k);
    if start >= end {
        return Err(TraceError::EmptyWindow { k0: start, k: end });
    }
    let mut sums = vec![CompensatedSum::default(); trace.dim];
    for i in start + 1..=end {
        for (acc, &t) in sums.iter_mut().zip(trace.theta(i)) {
            acc.add(t);
        }
    }
    let n = (end - start) as f64;
    Ok(sums.iter().map(|s| s.value() / n).collect())
}

/// Burn-in trajectory average `(1/(k−k0)) Σ_{i=k0+1..k} θ_i`.
pub fn trajectory_average(trace: &RunTrace, k0: usize) -> Result<Vec<f64>, TraceError> {
    if k0 >= trace.k {
        return Err(TraceError::EmptyWindow { k0, k: trace.k });
    }
    average_window(trace, k0, trace.k)
}
