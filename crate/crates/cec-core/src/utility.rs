//! Per-session utility functions behind a black-box evaluation interface.
//!
//! Optimizers only see [`UtilityOracle::eval`] / [`UtilityOracle::eval_sum`]
//! and a query counter; family parameters stay private so zeroth-order
//! methods cannot cheat.

use crate::error::{Error, Result};
use crate::fmath;
use alloc::format;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

/// Closed-form utility families. All are concave; all but a Quadratic with
/// a peak inside the rate domain are nondecreasing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UtilityFamily {
    /// `a * rate`
    Linear { a: f64 },
    /// `a * ln(b * rate + 1)`
    Logarithmic { a: f64, b: f64 },
    /// `-a * rate^2 + b * rate`; nondecreasing only while `rate <= b / (2a)`.
    Quadratic { a: f64, b: f64 },
    /// `a * (sqrt(rate + b) - sqrt(b))`, zero at zero and increasing.
    SquareRoot { a: f64, b: f64 },
}

impl UtilityFamily {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            UtilityFamily::Linear { a } => a > 0.0,
            UtilityFamily::Logarithmic { a, b }
            | UtilityFamily::Quadratic { a, b }
            | UtilityFamily::SquareRoot { a, b } => a > 0.0 && b > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("utility parameters must be positive: {self:?}")))
        }
    }

    pub fn value(&self, rate: f64) -> f64 {
        match *self {
            UtilityFamily::Linear { a } => a * rate,
            UtilityFamily::Logarithmic { a, b } => a * fmath::ln(b * rate + 1.0),
            UtilityFamily::Quadratic { a, b } => -a * rate * rate + b * rate,
            UtilityFamily::SquareRoot { a, b } => a * (fmath::sqrt(rate + b) - fmath::sqrt(b)),
        }
    }
}

/// Grid diagnostics for the standing assumptions on the utilities:
/// nondecreasing, Lipschitz, bounded, concave.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// True when every session's samples are nondecreasing (slack 1e-12).
    pub monotone: bool,
    /// Per-session max |Δu|/Δrate over the grid.
    pub lipschitz_est: Vec<f64>,
    /// Largest sampled utility value across sessions.
    pub bound_est: f64,
    /// True when every session's second differences are ≤ 1e-10.
    pub concave: bool,
}

impl AssumptionReport {
    /// Largest per-session Lipschitz estimate.
    pub fn max_lipschitz(&self) -> f64 {
        self.lipschitz_est.iter().copied().fold(0.0, f64::max)
    }
}

/// One evaluator per session over the rate domain `[0, total_rate]`.
///
/// The query counter increments once per [`eval`](Self::eval) and once per
/// [`eval_sum`](Self::eval_sum) (a joint observation of all sessions counts
/// as a single black-box query). Atomic, so concurrent workers keep exact
/// counts.
#[derive(Debug)]
pub struct UtilityOracle {
    families: Vec<UtilityFamily>,
    total_rate: f64,
    queries: AtomicU64,
}

impl UtilityOracle {
    pub fn new(families: Vec<UtilityFamily>, total_rate: f64) -> Result<Self> {
        if families.is_empty() {
            return Err(Error::InvalidInput("need at least one session".into()));
        }
        if !(total_rate > 0.0) || !total_rate.is_finite() {
            return Err(Error::InvalidInput(format!("total rate must be positive, got {total_rate}")));
        }
        for f in &families {
            f.validate()?;
        }
        Ok(UtilityOracle { families, total_rate, queries: AtomicU64::new(0) })
    }

    pub fn sessions(&self) -> usize {
        self.families.len()
    }

    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    fn check_rate(&self, session: usize, rate: f64) -> Result<()> {
        if session >= self.families.len() {
            return Err(Error::InvalidInput(format!("session {session} out of range")));
        }
        // Tiny negative slack tolerates projection round-off at the boundary.
        if !rate.is_finite() || rate < -1e-12 || rate > self.total_rate + 1e-9 {
            return Err(Error::InvalidInput(format!(
                "rate {rate} outside [0, {}] for session {session}",
                self.total_rate
            )));
        }
        Ok(())
    }

    /// Utility of one session at the given rate. Counts one query.
    pub fn eval(&self, session: usize, rate: f64) -> Result<f64> {
        self.check_rate(session, rate)?;
        self.queries.fetch_add(1, Ordering::Relaxed);
        Ok(self.families[session].value(rate.max(0.0)))
    }

    /// Sum of all session utilities at the given rates. Counts one query.
    pub fn eval_sum(&self, rates: &[f64]) -> Result<f64> {
        if rates.len() != self.families.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} rates, got {}",
                self.families.len(),
                rates.len()
            )));
        }
        for (w, &r) in rates.iter().enumerate() {
            self.check_rate(w, r)?;
        }
        self.queries.fetch_add(1, Ordering::Relaxed);
        Ok(rates
            .iter()
            .enumerate()
            .map(|(w, &r)| self.families[w].value(r.max(0.0)))
            .sum())
    }

    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn reset_queries(&self) {
        self.queries.store(0, Ordering::Relaxed);
    }

    /// Samples each session on a uniform grid over `[0, total_rate]` and
    /// reports monotonicity, per-session Lipschitz estimates, the observed
    /// bound, and concavity. Does not touch the query counter (it is a
    /// diagnostic, not an optimizer query).
    pub fn check_assumptions(&self, grid: usize) -> Result<AssumptionReport> {
        if grid < 3 {
            return Err(Error::InvalidInput(format!("grid must have at least 3 points, got {grid}")));
        }
        let step = self.total_rate / (grid - 1) as f64;
        let mut monotone = true;
        let mut concave = true;
        let mut bound_est = f64::NEG_INFINITY;
        let mut lipschitz_est = Vec::with_capacity(self.families.len());
        for fam in &self.families {
            let samples: Vec<f64> =
                (0..grid).map(|k| fam.value(step * k as f64)).collect();
            let mut lip = 0.0f64;
            for pair in samples.windows(2) {
                let d = pair[1] - pair[0];
                if d < -1e-12 {
                    monotone = false;
                }
                lip = lip.max((d / step).abs());
            }
            for tri in samples.windows(3) {
                if tri[2] - 2.0 * tri[1] + tri[0] > 1e-10 {
                    concave = false;
                }
            }
            bound_est = samples.iter().copied().fold(bound_est, f64::max);
            lipschitz_est.push(lip);
        }
        Ok(AssumptionReport { monotone, lipschitz_est, bound_est, concave })
    }
}
