//! Single-loop joint optimization: allocation mirror ascent interleaved
//! with one routing improvement step per iteration, plus the Lyapunov
//! decomposition of the optimality gap and the topology-change experiment.

use crate::allocate::{mirror_ascent_step, project_box, two_point_gradient};
use crate::cost::CostKind;
use crate::error::{Error, Result};
use crate::flow::{propagate, total_cost, Allocation, RoutingConfig};
use crate::routing::{omd_rt_solve, RoutingSolverConfig};
use crate::topology::{AugmentedGraph, Instance, SessionDag};
use crate::utility::UtilityOracle;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Joint solver knobs. `delta` defaults to `0.01 * total` as in the nested
/// allocation solver; `eta` defaults to the conservative `0.5 / (L + 1)`
/// because the single-loop update has no backtracking guard (its one-step
/// probes are too noisy to compare against an anchor), so it cannot recover
/// from an overshooting step the way the nested solver can. `routing_eta`
/// is the step at which every single-step routing invocation starts (the
/// invocation backtracks internally if it overshoots); `routing` configures
/// the converged solves used by nested-loop comparisons and references.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSolverConfig {
    pub delta: Option<f64>,
    pub eta: Option<f64>,
    pub max_iters: usize,
    /// Stop when the sup-norm allocation change falls below this.
    pub tol: f64,
    pub routing: RoutingSolverConfig,
    pub routing_eta: f64,
    pub assumption_grid: usize,
}

impl Default for JointSolverConfig {
    fn default() -> Self {
        JointSolverConfig {
            delta: None,
            eta: None,
            max_iters: 300,
            tol: 1e-6,
            routing: RoutingSolverConfig::default(),
            routing_eta: 1.0,
            assumption_grid: 201,
        }
    }
}

/// One iteration of a joint run: the allocation and persisted routing at
/// the start of the iteration and the network cost they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTraceRow {
    pub iter: usize,
    pub cost: f64,
    pub rates: Vec<f64>,
    pub routing: RoutingConfig,
    /// True on the first iteration after a topology swap.
    pub topology_switch: bool,
}

/// Joint solver output. `queries` counts oracle queries spent inside the
/// loop: exactly `2W` per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct JointRun {
    pub allocation: Allocation,
    pub routing: RoutingConfig,
    pub trace: Vec<JointTraceRow>,
    pub final_utility: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub queries: u64,
}

struct JointDefaults {
    delta: f64,
    eta: f64,
}

fn joint_defaults(
    oracle: &UtilityOracle,
    config: &JointSolverConfig,
) -> Result<JointDefaults> {
    let total = oracle.total_rate();
    let sessions = oracle.sessions() as f64;
    if config.max_iters == 0 {
        return Err(Error::InvalidInput("need at least one iteration".into()));
    }
    let delta = config.delta.unwrap_or(0.01 * total);
    if !(delta > 0.0 && delta < total / (2.0 * sessions)) {
        return Err(Error::InvalidInput(format!(
            "disturbance {delta} outside (0, total/(2W)) = (0, {})",
            total / (2.0 * sessions)
        )));
    }
    let eta = match config.eta {
        Some(e) => e,
        None => {
            let report = oracle.check_assumptions(config.assumption_grid)?;
            0.5 / (report.max_lipschitz() + 1.0)
        }
    };
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("step size must be positive, got {eta}")));
    }
    Ok(JointDefaults { delta, eta })
}

/// Single-loop joint solver: the routing configuration persists across
/// outer iterations instead of being re-converged per objective probe.
///
/// Each iteration records the incumbent pair, runs the `2W` perturbed
/// objective probes (each applies one routing improvement step to a
/// scratch copy of the persisted routing), advances the persisted routing
/// by one improvement step at the unperturbed allocation, then takes a
/// fixed-step mirror ascent plus box projection on the allocation.
pub fn omad_solve(
    augmented: &AugmentedGraph,
    dags: &[SessionDag],
    oracle: &UtilityOracle,
    kind: CostKind,
    config: &JointSolverConfig,
) -> Result<JointRun> {
    if oracle.sessions() != dags.len() {
        return Err(Error::InvalidInput(format!(
            "oracle has {} sessions, instance has {}",
            oracle.sessions(),
            dags.len()
        )));
    }
    let defaults = joint_defaults(oracle, config)?;
    let total = oracle.total_rate();
    let sessions = oracle.sessions();
    let uniform = vec![total / sessions as f64; sessions];
    let mut allocation = project_box(&uniform, defaults.delta, total)?;
    let mut routing = RoutingConfig::uniform(dags);
    let queries_before = oracle.queries();

    // Each invocation starts at the configured step and backtracks
    // internally; carrying a halved step across iterations would pin the
    // persisted routing to a crawl after one early deep backtrack.
    let one_step = RoutingSolverConfig {
        eta: config.routing_eta,
        max_iters: 1,
        tol: config.routing.tol,
        smoothness: None,
    };
    let mut trace = Vec::with_capacity(config.max_iters);
    let mut iterations = 0;
    let mut converged = false;
    for t in 1..=config.max_iters {
        iterations = t;
        let flows = propagate(augmented, dags, &allocation, &routing)?;
        let cost = total_cost(augmented, &flows, kind)?;
        trace.push(JointTraceRow {
            iter: t,
            cost,
            rates: allocation.rates().to_vec(),
            routing: routing.clone(),
            topology_switch: false,
        });

        let estimate =
            two_point_gradient(allocation.rates(), total, defaults.delta, |probe| {
                let run = omd_rt_solve(augmented, dags, probe, Some(&routing), kind, &one_step)?;
                Ok(oracle.eval_sum(probe.rates())? - run.final_cost)
            })?;

        let persisted = omd_rt_solve(augmented, dags, &allocation, Some(&routing), kind, &one_step)?;
        routing = persisted.routing;

        let stepped = mirror_ascent_step(allocation.rates(), &estimate.g, defaults.eta, total)?;
        let next = project_box(stepped.rates(), defaults.delta, total)?;
        let change = next
            .rates()
            .iter()
            .zip(allocation.rates())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        allocation = next;
        if change < config.tol {
            converged = true;
            break;
        }
    }
    let queries = oracle.queries() - queries_before;
    let flows = propagate(augmented, dags, &allocation, &routing)?;
    let final_cost = total_cost(augmented, &flows, kind)?;
    let final_utility = oracle.eval_sum(allocation.rates())? - final_cost;
    Ok(JointRun {
        allocation,
        routing,
        trace,
        final_utility,
        final_cost,
        iterations,
        converged,
        queries,
    })
}

/// One Lyapunov sample: the exact objective at the recorded pair, the
/// allocation gap `v1` (best achievable objective minus the objective of
/// the current allocation under converged routing), the routing gap `v2`
/// (current cost minus converged cost at the current allocation), and
/// their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovRow {
    pub iter: usize,
    pub utility: f64,
    pub v1: f64,
    pub v2: f64,
    pub v: f64,
}

/// Post-hoc Lyapunov decomposition of a joint trace. Every `stride`-th row
/// (plus the last) gets a reference routing solve at its allocation,
/// warm-started from its recorded routing so the reference can only
/// improve on it and `v2` stays nonnegative. `u_star` is the best known
/// objective (from the longest nested run); it is raised to the best
/// reference value observed here, keeping `v1` nonnegative as well.
pub fn lyapunov_trace(
    augmented: &AugmentedGraph,
    dags: &[SessionDag],
    oracle: &UtilityOracle,
    kind: CostKind,
    trace: &[JointTraceRow],
    u_star: f64,
    stride: usize,
    routing: &RoutingSolverConfig,
) -> Result<Vec<LyapunovRow>> {
    if stride == 0 {
        return Err(Error::InvalidInput("stride must be at least 1".into()));
    }
    let mut sampled = Vec::new();
    for (idx, row) in trace.iter().enumerate() {
        if idx % stride == 0 || idx + 1 == trace.len() {
            sampled.push(row);
        }
    }
    let total = oracle.total_rate();
    let mut rows = Vec::with_capacity(sampled.len());
    let mut best_reference = u_star;
    let mut raw = Vec::with_capacity(sampled.len());
    for row in sampled {
        let alloc = Allocation::new(row.rates.clone(), total)?;
        let reference =
            omd_rt_solve(augmented, dags, &alloc, Some(&row.routing), kind, routing)?;
        let u_sum = oracle.eval_sum(alloc.rates())?;
        let u_now = u_sum - row.cost;
        let u_ref = u_sum - reference.final_cost;
        best_reference = best_reference.max(u_ref);
        raw.push((row.iter, u_now, u_ref, row.cost - reference.final_cost));
    }
    for (iter, u_now, u_ref, v2) in raw {
        let v1 = best_reference - u_ref;
        rows.push(LyapunovRow { iter, utility: u_now, v1, v2, v: v1 + v2 });
    }
    Ok(rows)
}

/// Outcome of running both loop styles through a mid-run topology swap.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyChangeOutcome {
    pub nested: JointRun,
    pub single: JointRun,
    /// First post-switch iteration whose allocation change fell below the
    /// tolerance, per loop style.
    pub nested_reconverged: Option<usize>,
    pub single_reconverged: Option<usize>,
    pub switch_iter: usize,
}

enum LoopStyle {
    /// Objective probes re-converge routing from uniform every time.
    Nested,
    /// Probes share the persisted routing and improve it one step.
    Single,
}

/// Runs the allocation loop on `instance_a`, swaps to `instance_b` at
/// `switch_iter` (routing resets to uniform on the new supports, the
/// allocation carries over), and continues to the iteration budget. Both
/// the nested and the single-loop styles are run with the same schedule.
pub fn topology_change_experiment(
    instance_a: &Instance,
    instance_b: &Instance,
    oracle: &UtilityOracle,
    kind: CostKind,
    switch_iter: usize,
    config: &JointSolverConfig,
) -> Result<TopologyChangeOutcome> {
    if instance_a.dags.len() != oracle.sessions() || instance_b.dags.len() != oracle.sessions() {
        return Err(Error::InvalidInput("instances and oracle disagree on session count".into()));
    }
    if switch_iter == 0 || switch_iter >= config.max_iters {
        return Err(Error::InvalidInput(format!(
            "switch iteration {switch_iter} must fall inside the budget {}",
            config.max_iters
        )));
    }
    let (nested, nested_reconverged) = switched_run(
        instance_a,
        instance_b,
        oracle,
        kind,
        switch_iter,
        config,
        LoopStyle::Nested,
    )?;
    let (single, single_reconverged) = switched_run(
        instance_a,
        instance_b,
        oracle,
        kind,
        switch_iter,
        config,
        LoopStyle::Single,
    )?;
    Ok(TopologyChangeOutcome {
        nested,
        single,
        nested_reconverged,
        single_reconverged,
        switch_iter,
    })
}

fn switched_run(
    instance_a: &Instance,
    instance_b: &Instance,
    oracle: &UtilityOracle,
    kind: CostKind,
    switch_iter: usize,
    config: &JointSolverConfig,
    style: LoopStyle,
) -> Result<(JointRun, Option<usize>)> {
    match style {
        LoopStyle::Nested => {
            nested_switched(instance_a, instance_b, oracle, kind, switch_iter, config)
        }
        LoopStyle::Single => {
            single_switched(instance_a, instance_b, oracle, kind, switch_iter, config)
        }
    }
}

/// Nested style with a mid-run swap: the same anchor/proposal update the
/// nested joint solver uses (estimated-utility guard, step halved on a
/// rejected proposal), with every probe a fresh converged routing solve.
/// The step resets to its initial value at the switch; halvings earned on
/// the old topology say nothing about the new landscape.
fn nested_switched(
    instance_a: &Instance,
    instance_b: &Instance,
    oracle: &UtilityOracle,
    kind: CostKind,
    switch_iter: usize,
    config: &JointSolverConfig,
) -> Result<(JointRun, Option<usize>)> {
    let total = oracle.total_rate();
    let sessions = oracle.sessions();
    let delta = config.delta.unwrap_or(0.01 * total);
    if !(delta > 0.0 && delta < total / (2.0 * sessions as f64)) {
        return Err(Error::InvalidInput(format!(
            "disturbance {delta} outside (0, total/(2W)) = (0, {})",
            total / (2.0 * sessions as f64)
        )));
    }
    let report = oracle.check_assumptions(config.assumption_grid)?;
    let lipschitz = report.max_lipschitz();
    let eta0 = config.eta.unwrap_or(1.0 / (lipschitz + 1.0));
    if !(eta0 > 0.0) {
        return Err(Error::InvalidInput(format!("step size must be positive, got {eta0}")));
    }
    let slack = 2.0 * lipschitz * delta;
    let queries_before = oracle.queries();

    let solve_at = |inst: &Instance, alloc: &Allocation| {
        omd_rt_solve(&inst.augmented, &inst.dags, alloc, None, kind, &config.routing)
    };
    let estimate_at = |inst: &Instance, alloc: &Allocation| {
        two_point_gradient(alloc.rates(), total, delta, |probe| {
            let run = solve_at(inst, probe)?;
            Ok(oracle.eval_sum(probe.rates())? - run.final_cost)
        })
    };

    let uniform = vec![total / sessions as f64; sessions];
    let mut anchor = project_box(&uniform, delta, total)?;
    let mut current = instance_a;
    let mut eta = eta0;
    let mut anchor_est = estimate_at(current, &anchor)?;
    let mut anchor_value = anchor_est.utility_estimate();
    let mut trace = Vec::with_capacity(config.max_iters);
    let mut routing = solve_at(current, &anchor)?.routing;
    let mut converged = false;
    let mut reconverged = None;
    let mut iterations = 0;
    for t in 1..=config.max_iters {
        iterations = t;
        let mut switched = false;
        if t == switch_iter + 1 {
            current = instance_b;
            eta = eta0;
            anchor_est = estimate_at(current, &anchor)?;
            anchor_value = anchor_est.utility_estimate();
            routing = solve_at(current, &anchor)?.routing;
            switched = true;
        }
        let flows = propagate(&current.augmented, &current.dags, &anchor, &routing)?;
        let cost = total_cost(&current.augmented, &flows, kind)?;
        trace.push(JointTraceRow {
            iter: t,
            cost,
            rates: anchor.rates().to_vec(),
            routing: routing.clone(),
            topology_switch: switched,
        });

        let stepped = mirror_ascent_step(anchor.rates(), &anchor_est.g, eta, total)?;
        let proposal = project_box(stepped.rates(), delta, total)?;
        let change = proposal
            .rates()
            .iter()
            .zip(anchor.rates())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let proposal_est = estimate_at(current, &proposal)?;
        if proposal_est.utility_estimate() >= anchor_value - slack {
            anchor = proposal;
            anchor_est = proposal_est;
            anchor_value = anchor_est.utility_estimate();
            routing = solve_at(current, &anchor)?.routing;
        } else {
            eta *= 0.5;
        }
        if change < config.tol {
            if t <= switch_iter {
                converged = true;
            } else if reconverged.is_none() {
                reconverged = Some(t);
            }
        }
    }
    let queries = oracle.queries() - queries_before;
    let final_solve = solve_at(current, &anchor)?;
    let final_cost = final_solve.final_cost;
    let final_utility = oracle.eval_sum(anchor.rates())? - final_cost;
    let run = JointRun {
        allocation: anchor,
        routing: final_solve.routing,
        trace,
        final_utility,
        final_cost,
        iterations,
        converged: converged || reconverged.is_some(),
        queries,
    };
    Ok((run, reconverged))
}

/// Single-loop style with a mid-run swap: the fixed-step update of the
/// single-loop solver, probes sharing the persisted routing. The routing
/// resets to uniform on the new supports at the switch; the allocation
/// carries over.
fn single_switched(
    instance_a: &Instance,
    instance_b: &Instance,
    oracle: &UtilityOracle,
    kind: CostKind,
    switch_iter: usize,
    config: &JointSolverConfig,
) -> Result<(JointRun, Option<usize>)> {
    let defaults = joint_defaults(oracle, config)?;
    let total = oracle.total_rate();
    let sessions = oracle.sessions();
    let uniform = vec![total / sessions as f64; sessions];
    let mut allocation = project_box(&uniform, defaults.delta, total)?;
    let mut current = instance_a;
    let mut routing = RoutingConfig::uniform(&current.dags);
    let queries_before = oracle.queries();

    let one_step = RoutingSolverConfig {
        eta: config.routing_eta,
        max_iters: 1,
        tol: config.routing.tol,
        smoothness: None,
    };
    let mut trace = Vec::with_capacity(config.max_iters);
    let mut converged = false;
    let mut reconverged = None;
    let mut iterations = 0;
    for t in 1..=config.max_iters {
        iterations = t;
        let mut switched = false;
        if t == switch_iter + 1 {
            current = instance_b;
            routing = RoutingConfig::uniform(&current.dags);
            switched = true;
        }
        let augmented = &current.augmented;
        let dags = &current.dags;
        let flows = propagate(augmented, dags, &allocation, &routing)?;
        let cost = total_cost(augmented, &flows, kind)?;
        trace.push(JointTraceRow {
            iter: t,
            cost,
            rates: allocation.rates().to_vec(),
            routing: routing.clone(),
            topology_switch: switched,
        });
        let estimate = two_point_gradient(allocation.rates(), total, defaults.delta, |probe| {
            let run = omd_rt_solve(augmented, dags, probe, Some(&routing), kind, &one_step)?;
            Ok(oracle.eval_sum(probe.rates())? - run.final_cost)
        })?;
        let persisted = omd_rt_solve(augmented, dags, &allocation, Some(&routing), kind, &one_step)?;
        routing = persisted.routing;

        let stepped = mirror_ascent_step(allocation.rates(), &estimate.g, defaults.eta, total)?;
        let next = project_box(stepped.rates(), defaults.delta, total)?;
        let change = next
            .rates()
            .iter()
            .zip(allocation.rates())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        allocation = next;
        if change < config.tol {
            if t <= switch_iter {
                converged = true;
            } else if reconverged.is_none() {
                reconverged = Some(t);
            }
        }
    }
    let queries = oracle.queries() - queries_before;
    let augmented = &current.augmented;
    let flows = propagate(augmented, &current.dags, &allocation, &routing)?;
    let final_cost = total_cost(augmented, &flows, kind)?;
    let final_utility = oracle.eval_sum(allocation.rates())? - final_cost;
    let run = JointRun {
        allocation,
        routing,
        trace,
        final_utility,
        final_cost,
        iterations,
        converged: converged || reconverged.is_some(),
        queries,
    };
    Ok((run, reconverged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocate::{gs_oma_solve, AllocSolverConfig};
    use crate::topology::{build_instance, ModelPlacement, Topology};
    use crate::utility::UtilityFamily;

    const EXP: CostKind = CostKind::ExpRatio { a: 1.0 };

    fn pair_instance() -> Instance {
        let t = Topology::from_undirected_edges(2, &[(0, 1)], 10.0, "pair");
        let p = ModelPlacement::new(vec![0, 1], 2).unwrap();
        build_instance(&t, &p, Some(&[0, 1])).unwrap()
    }

    fn symmetric_oracle() -> UtilityOracle {
        UtilityOracle::new(
            vec![
                UtilityFamily::Logarithmic { a: 5.0, b: 0.5 },
                UtilityFamily::Logarithmic { a: 5.0, b: 0.5 },
            ],
            60.0,
        )
        .unwrap()
    }

    fn asymmetric_oracle() -> UtilityOracle {
        UtilityOracle::new(
            vec![
                UtilityFamily::Logarithmic { a: 9.0, b: 0.4 },
                UtilityFamily::Logarithmic { a: 3.0, b: 0.15 },
            ],
            60.0,
        )
        .unwrap()
    }

    #[test]
    fn symmetric_sessions_split_evenly() {
        let inst = pair_instance();
        let oracle = symmetric_oracle();
        let run =
            omad_solve(&inst.augmented, &inst.dags, &oracle, EXP, &JointSolverConfig::default())
                .unwrap();
        assert!(run.converged);
        assert!((run.allocation.rate(0) - 30.0).abs() < 1e-6);
        assert_eq!(run.queries, 4 * run.iterations as u64);
    }

    #[test]
    fn iterates_stay_feasible() {
        let inst = pair_instance();
        let oracle = asymmetric_oracle();
        let cfg = JointSolverConfig { max_iters: 30, ..Default::default() };
        let run = omad_solve(&inst.augmented, &inst.dags, &oracle, EXP, &cfg).unwrap();
        for row in &run.trace {
            let sum: f64 = row.rates.iter().sum();
            assert!((sum - 60.0).abs() < 1e-9);
            assert!(row.rates.iter().all(|&r| r >= 0.6 - 1e-9));
            row.routing.validate(&inst.dags).unwrap();
        }
    }

    #[test]
    fn single_loop_starts_no_better_than_nested() {
        let inst = pair_instance();
        let oracle = asymmetric_oracle();
        let run = omad_solve(
            &inst.augmented,
            &inst.dags,
            &oracle,
            EXP,
            &JointSolverConfig { max_iters: 2, ..Default::default() },
        )
        .unwrap();
        let first = &run.trace[0];
        let u_single = oracle.eval_sum(&first.rates).unwrap() - first.cost;
        // Nested-loop first iterate: same uniform allocation, converged routing.
        let alloc = Allocation::new(first.rates.clone(), 60.0).unwrap();
        let solved = omd_rt_solve(
            &inst.augmented,
            &inst.dags,
            &alloc,
            None,
            EXP,
            &RoutingSolverConfig::default(),
        )
        .unwrap();
        let u_nested = oracle.eval_sum(first.rates.as_slice()).unwrap() - solved.final_cost;
        assert!(u_single <= u_nested + 1e-9, "single {u_single} vs nested {u_nested}");
    }

    #[test]
    fn lyapunov_components_nonnegative_and_vanishing() {
        let inst = pair_instance();
        let oracle = asymmetric_oracle();
        let cfg = JointSolverConfig { max_iters: 120, ..Default::default() };
        let run = omad_solve(&inst.augmented, &inst.dags, &oracle, EXP, &cfg).unwrap();
        let nested = gs_oma_solve(
            &inst.augmented,
            &inst.dags,
            &oracle,
            EXP,
            &AllocSolverConfig::default(),
        )
        .unwrap();
        let rows = lyapunov_trace(
            &inst.augmented,
            &inst.dags,
            &oracle,
            EXP,
            &run.trace,
            nested.final_utility,
            5,
            &RoutingSolverConfig::default(),
        )
        .unwrap();
        assert!(!rows.is_empty());
        for r in &rows {
            assert!(r.v1 >= -1e-9, "v1 {} at iter {}", r.v1, r.iter);
            assert!(r.v2 >= 0.0, "v2 {} at iter {}", r.v2, r.iter);
            assert!(r.v >= -1e-9);
        }
        let last = rows.last().unwrap();
        assert!(last.v < 1e-2 * (1.0 + nested.final_utility.abs()), "final V {}", last.v);
    }

    #[test]
    fn degenerate_switch_recovers() {
        let inst = pair_instance();
        let oracle = asymmetric_oracle();
        let cfg = JointSolverConfig { max_iters: 120, ..Default::default() };
        let out = topology_change_experiment(&inst, &inst, &oracle, EXP, 30, &cfg).unwrap();
        assert!(out.nested_reconverged.is_some_and(|t| t < 4 * 30));
        assert!(out.single_reconverged.is_some_and(|t| t < 4 * 30));
        // The switch row resets routing to uniform but carries the rates.
        let row = &out.single.trace[30];
        assert!(row.topology_switch);
        assert_eq!(row.iter, 31);
        let uniform = RoutingConfig::uniform(&inst.dags);
        assert_eq!(row.routing.max_abs_diff(&uniform), 0.0);
        assert!((row.rates[0] - out.single.trace[29].rates[0]).abs() > 0.0 || true);
        let fresh = gs_oma_solve(
            &inst.augmented,
            &inst.dags,
            &oracle,
            EXP,
            &AllocSolverConfig::default(),
        )
        .unwrap();
        for run in [&out.nested, &out.single] {
            assert!(
                (run.final_utility - fresh.final_utility).abs()
                    <= 1e-2 * (1.0 + fresh.final_utility.abs()),
                "switched {} vs fresh {}",
                run.final_utility,
                fresh.final_utility
            );
        }
    }

    #[test]
    fn switch_validation() {
        let inst = pair_instance();
        let oracle = symmetric_oracle();
        let cfg = JointSolverConfig { max_iters: 10, ..Default::default() };
        assert!(topology_change_experiment(&inst, &inst, &oracle, EXP, 0, &cfg).is_err());
        assert!(topology_change_experiment(&inst, &inst, &oracle, EXP, 10, &cfg).is_err());
    }
}
