//! Convex, increasing per-link cost functions with exact first derivatives.
//!
//! Two families are supported. `Mm1` is the expected M/M/1 queueing delay
//! `F / (C - F)`, defined only for `F < C`; evaluating it at or above
//! capacity is a hard error because clamping would corrupt the marginal
//! costs every solver relies on. `ExpRatio` is the smooth relaxation
//! `exp(a * F / C)`, defined for all `F >= 0`; note it costs 1 per link at
//! zero flow.

use crate::error::{Error, Result};
use crate::fmath;

/// Cost function family, shared by all links of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostKind {
    /// `F / (C - F)`, domain `0 <= F < C`.
    Mm1,
    /// `exp(a * F / C)`, domain `F >= 0`.
    ExpRatio { a: f64 },
}

impl Default for CostKind {
    fn default() -> Self {
        CostKind::ExpRatio { a: 1.0 }
    }
}

impl CostKind {
    /// Cost of carrying flow `f` on a link of capacity `c`.
    pub fn value(&self, f: f64, c: f64) -> Result<f64> {
        check_domain(*self, f, c)?;
        Ok(match *self {
            CostKind::Mm1 => f / (c - f),
            CostKind::ExpRatio { a } => fmath::exp(a * f / c),
        })
    }

    /// Exact derivative of `value` with respect to `f`.
    pub fn derivative(&self, f: f64, c: f64) -> Result<f64> {
        check_domain(*self, f, c)?;
        Ok(match *self {
            CostKind::Mm1 => c / ((c - f) * (c - f)),
            CostKind::ExpRatio { a } => a / c * fmath::exp(a * f / c),
        })
    }
}

fn check_domain(kind: CostKind, f: f64, c: f64) -> Result<()> {
    if !(f >= 0.0) || !f.is_finite() {
        return Err(Error::InvalidInput(alloc::format!(
            "flow must be finite and nonnegative, got {f}"
        )));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidInput(alloc::format!(
            "capacity must be positive, got {c}"
        )));
    }
    if matches!(kind, CostKind::Mm1) && f >= c {
        return Err(Error::CapacityExceeded {
            from: usize::MAX,
            to: usize::MAX,
            flow: f,
            capacity: c,
        });
    }
    Ok(())
}

/// A cost function bound to one link's capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkCostModel {
    pub kind: CostKind,
    pub capacity: f64,
}

impl LinkCostModel {
    pub fn new(kind: CostKind, capacity: f64) -> Self {
        Self { kind, capacity }
    }

    pub fn cost_value(&self, f: f64) -> Result<f64> {
        self.kind.value(f, self.capacity)
    }

    pub fn cost_derivative(&self, f: f64) -> Result<f64> {
        self.kind.derivative(f, self.capacity)
    }
}
