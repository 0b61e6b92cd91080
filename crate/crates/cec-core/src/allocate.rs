//! Workload allocation by zeroth-order mirror ascent: two-point gradient
//! estimates of the black-box objective, an exponentiated update on the
//! scaled simplex, projection into the perturbation-safe box, and the
//! equal-marginal optimality residual.

use crate::cost::CostKind;
use crate::error::{Error, Result};
use crate::flow::{Allocation, RoutingConfig};
use crate::routing::{omd_rt_solve, RoutingSolverConfig};
use crate::topology::{AugmentedGraph, SessionDag};
use crate::utility::UtilityOracle;
use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Two-point gradient estimate at one allocation: per-session slopes and
/// the raw objective observations behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    /// `g[w] = (U(Λ+δe_w) - U(Λ-δe_w)) / (2δ)`.
    pub g: Vec<f64>,
    /// The observed `(U_plus, U_minus)` pair per session.
    pub observations: Vec<(f64, f64)>,
    pub delta: f64,
}

impl GradientEstimate {
    /// Midpoint average of the observations: an O(δ²) estimate of U at
    /// the unperturbed allocation, usable without extra queries.
    pub fn utility_estimate(&self) -> f64 {
        let n = self.observations.len() as f64;
        self.observations.iter().map(|&(p, m)| 0.5 * (p + m)).sum::<f64>() / n
    }

    pub fn spread(&self) -> f64 {
        let lo = self.g.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }
}

/// Deviation from the allocation optimality condition: at an optimum all
/// partial derivatives equal one shared multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationOptimalityResidual {
    /// `max_w g_w - min_w g_w`.
    pub spread: f64,
    /// Multiplier estimate: the mean of `g`.
    pub alpha: f64,
}

pub fn allocation_optimality_residual(estimate: &GradientEstimate) -> AllocationOptimalityResidual {
    let alpha = estimate.g.iter().sum::<f64>() / estimate.g.len() as f64;
    AllocationOptimalityResidual { spread: estimate.spread(), alpha }
}

/// Estimates the gradient of a black-box objective by evaluating it at
/// `rates ± delta·e_w` for every session: exactly `2W` evaluator calls, in
/// session order with the positive perturbation first. The perturbed
/// points deliberately leave the sum-to-total simplex, so evaluators must
/// accept unchecked allocations.
pub fn two_point_gradient<F>(
    rates: &[f64],
    total_rate: f64,
    delta: f64,
    mut evaluate: F,
) -> Result<GradientEstimate>
where
    F: FnMut(&Allocation) -> Result<f64>,
{
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("disturbance must be positive, got {delta}")));
    }
    for (w, &r) in rates.iter().enumerate() {
        if r - delta < 0.0 || r + delta > total_rate {
            return Err(Error::InvalidInput(format!(
                "rate {r} of session {w} cannot be perturbed by {delta} within [0, {total_rate}]"
            )));
        }
    }
    let mut g = Vec::with_capacity(rates.len());
    let mut observations = Vec::with_capacity(rates.len());
    for w in 0..rates.len() {
        let mut probe = |sign: f64, positive: bool| -> Result<f64> {
            let mut p = rates.to_vec();
            p[w] += sign * delta;
            let alloc = Allocation::new_unchecked(p, total_rate)?;
            evaluate(&alloc).map_err(|e| Error::EvaluationFailed {
                session: w,
                positive,
                source: Box::new(e),
            })
        };
        let plus = probe(1.0, true)?;
        let minus = probe(-1.0, false)?;
        let gw = (plus - minus) / (2.0 * delta);
        if !gw.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite gradient estimate {gw} for session {w}"
            )));
        }
        g.push(gw);
        observations.push((plus, minus));
    }
    Ok(GradientEstimate { g, observations, delta })
}

/// Exponentiated ascent step on the scaled simplex: rates are reweighted
/// by `exp(eta * g)` and renormalized to the total. Exponents are shifted
/// by their maximum first, which leaves the result unchanged but rules
/// out overflow.
pub fn mirror_ascent_step(
    rates: &[f64],
    g: &[f64],
    eta: f64,
    total_rate: f64,
) -> Result<Allocation> {
    if rates.len() != g.len() {
        return Err(Error::InvalidInput(format!(
            "{} rates but {} gradient entries",
            rates.len(),
            g.len()
        )));
    }
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::InvalidInput(format!("step size must be nonnegative, got {eta}")));
    }
    for &r in rates {
        if !(r > 0.0) {
            return Err(Error::InvalidInput(format!(
                "mirror step requires strictly positive rates, got {r}"
            )));
        }
    }
    let shift = g.iter().map(|&x| eta * x).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> =
        rates.iter().zip(g).map(|(&r, &gw)| r * crate::fmath::exp(eta * gw - shift)).collect();
    let sum: f64 = weights.iter().sum();
    // The shift pins the largest exponent at zero, so with positive rates
    // the sum is always positive and finite.
    debug_assert!(sum > 0.0 && sum.is_finite());
    Allocation::new(weights.iter().map(|&x| total_rate * x / sum).collect(), total_rate)
}

/// Euclidean projection onto the box `[delta, total-delta]^W` intersected
/// with the sum-to-total plane: entries are clipped to the box and the
/// remaining surplus or deficit is spread equally over the unclipped
/// entries, iterating until stable (found directly via the shift
/// parameter). Errors when the box cannot hold the total.
pub fn project_box(rates: &[f64], delta: f64, total_rate: f64) -> Result<Allocation> {
    let w = rates.len();
    if w == 0 {
        return Err(Error::InvalidInput("empty allocation".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("disturbance must be positive, got {delta}")));
    }
    let lo = delta;
    let hi = total_rate - delta;
    if total_rate < w as f64 * lo || total_rate > w as f64 * hi || hi < lo {
        return Err(Error::Infeasible(format!(
            "box [{lo}, {hi}]^{w} cannot hold a total of {total_rate}"
        )));
    }
    // Find tau with sum_w clamp(rate_w - tau) = total by bisection; the
    // clamped sum is continuous and nonincreasing in tau.
    let clamped_sum = |tau: f64| -> f64 { rates.iter().map(|&r| (r - tau).clamp(lo, hi)).sum() };
    let rate_min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let rate_max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut a = rate_min - hi - 1.0;
    let mut b = rate_max - lo + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if clamped_sum(mid) > total_rate {
            a = mid;
        } else {
            b = mid;
        }
    }
    let tau = 0.5 * (a + b);
    let mut out: Vec<f64> = rates.iter().map(|&r| (r - tau).clamp(lo, hi)).collect();
    // Spread the bisection's last-ulp residue over strictly interior
    // entries so the sum is restored to working precision.
    let residue = total_rate - out.iter().sum::<f64>();
    if residue != 0.0 {
        let free: Vec<usize> = (0..w)
            .filter(|&i| out[i] - lo > 1e-12 && hi - out[i] > 1e-12)
            .collect();
        if !free.is_empty() {
            let share = residue / free.len() as f64;
            for i in free {
                out[i] += share;
            }
        }
    }
    Allocation::new(out, total_rate)
}

/// Allocation solver knobs. `delta` defaults to `0.01 * total`; `eta`
/// defaults to `1 / (L + 1)` with `L` the sampled Lipschitz estimate of
/// the utilities (the halving guard reins in an overshoot, so the default
/// leans aggressive). The inner routing configuration drives the objective
/// evaluator's full routing solves.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocSolverConfig {
    pub delta: Option<f64>,
    pub eta: Option<f64>,
    pub max_iters: usize,
    /// Stop when the sup-norm allocation change falls below this.
    pub tol: f64,
    pub routing: RoutingSolverConfig,
    /// Grid size for the assumption scan that calibrates `eta`.
    pub assumption_grid: usize,
}

impl Default for AllocSolverConfig {
    fn default() -> Self {
        AllocSolverConfig {
            delta: None,
            eta: None,
            max_iters: 500,
            tol: 1e-6,
            routing: RoutingSolverConfig::default(),
            assumption_grid: 201,
        }
    }
}

/// One outer-iteration record: the estimated objective, the gradient
/// spread, and the iterate itself.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocTraceRow {
    pub iter: usize,
    pub utility: f64,
    pub grad_spread: f64,
    pub rates: Vec<f64>,
}

/// Allocation solver output. `queries` counts the oracle queries spent by
/// the outer loop itself (exactly `2W` per iteration); the final exact
/// evaluation and the refined residual estimate happen afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocRun {
    pub allocation: Allocation,
    pub routing: RoutingConfig,
    pub trace: Vec<AllocTraceRow>,
    /// Exact objective at the returned allocation and its converged
    /// routing.
    pub final_utility: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub queries: u64,
    /// Residual from a fresh gradient estimate at `delta / 10`.
    pub residual: AllocationOptimalityResidual,
    pub final_eta: f64,
    pub lipschitz_est: f64,
}

/// Mirror-ascent allocation solver with a black-box objective.
///
/// Starts uniform. Each outer iteration estimates the gradient at the
/// current anchor's proposal with exactly `2W` objective observations
/// (each a full routing solve from the uniform start plus one oracle
/// query), then either accepts the proposal (its estimated objective may
/// trail the anchor's by at most the zeroth-order error budget
/// `2·L·delta`) or halves the step and proposes again from the same
/// anchor and gradient. Stops when proposals stop moving (sup-norm below
/// `tol`) or the budget runs out.
pub fn gs_oma_solve(
    augmented: &AugmentedGraph,
    dags: &[SessionDag],
    oracle: &UtilityOracle,
    kind: CostKind,
    config: &AllocSolverConfig,
) -> Result<AllocRun> {
    let sessions = oracle.sessions();
    let total = oracle.total_rate();
    if sessions != dags.len() {
        return Err(Error::InvalidInput(format!(
            "oracle has {sessions} sessions, instance has {}",
            dags.len()
        )));
    }
    if config.max_iters == 0 {
        return Err(Error::InvalidInput("need at least one outer iteration".into()));
    }
    let delta = config.delta.unwrap_or(0.01 * total);
    if !(delta > 0.0 && delta < total / (2.0 * sessions as f64)) {
        return Err(Error::InvalidInput(format!(
            "disturbance {delta} outside (0, total/(2W)) = (0, {})",
            total / (2.0 * sessions as f64)
        )));
    }
    let report = oracle.check_assumptions(config.assumption_grid)?;
    let lipschitz = report.max_lipschitz();
    let mut eta = config.eta.unwrap_or(1.0 / (lipschitz + 1.0));
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("step size must be positive, got {eta}")));
    }
    let slack = 2.0 * lipschitz * delta;

    let evaluate = |alloc: &Allocation| -> Result<f64> {
        let run = omd_rt_solve(augmented, dags, alloc, None, kind, &config.routing)?;
        Ok(oracle.eval_sum(alloc.rates())? - run.final_cost)
    };

    let queries_before = oracle.queries();
    let uniform = vec![total / sessions as f64; sessions];
    let mut anchor = project_box(&uniform, delta, total)?;
    let mut anchor_est = two_point_gradient(anchor.rates(), total, delta, evaluate)?;
    let mut anchor_value = anchor_est.utility_estimate();
    let mut trace = Vec::with_capacity(config.max_iters);
    trace.push(AllocTraceRow {
        iter: 1,
        utility: anchor_value,
        grad_spread: anchor_est.spread(),
        rates: anchor.rates().to_vec(),
    });

    let mut iterations = 1;
    let mut converged = false;
    while iterations < config.max_iters {
        iterations += 1;
        let stepped = mirror_ascent_step(anchor.rates(), &anchor_est.g, eta, total)?;
        let proposal = project_box(stepped.rates(), delta, total)?;
        let change = proposal
            .rates()
            .iter()
            .zip(anchor.rates())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let proposal_est = two_point_gradient(proposal.rates(), total, delta, evaluate)?;
        let proposal_value = proposal_est.utility_estimate();
        if proposal_value >= anchor_value - slack {
            anchor = proposal;
            anchor_est = proposal_est;
            anchor_value = proposal_value;
        } else {
            eta *= 0.5;
        }
        trace.push(AllocTraceRow {
            iter: iterations,
            utility: anchor_value,
            grad_spread: anchor_est.spread(),
            rates: anchor.rates().to_vec(),
        });
        if change < config.tol {
            converged = true;
            break;
        }
    }
    let queries = oracle.queries() - queries_before;

    let final_run = omd_rt_solve(augmented, dags, &anchor, None, kind, &config.routing)?;
    let final_utility = oracle.eval_sum(anchor.rates())? - final_run.final_cost;
    let refined = two_point_gradient(anchor.rates(), total, delta / 10.0, evaluate)?;
    Ok(AllocRun {
        allocation: anchor,
        routing: final_run.routing,
        trace,
        final_utility,
        final_cost: final_run.final_cost,
        iterations,
        converged,
        queries,
        residual: allocation_optimality_residual(&refined),
        final_eta: eta,
        lipschitz_est: lipschitz,
    })
}
