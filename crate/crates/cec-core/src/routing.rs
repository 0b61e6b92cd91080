//! Routing optimization: marginal-cost broadcast, the exponentiated
//! mirror-descent routing solver, its optimality residual, a Euclidean
//! projected-gradient baseline, and a centralized conditional-gradient
//! oracle for the minimum routing cost.

use crate::cost::CostKind;
use crate::error::{Error, Result};
use crate::flow::{propagate, total_cost, Allocation, FlowState, RoutingConfig};
use crate::topology::{AugmentedGraph, LinkId, SessionDag};
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Support threshold for optimality checks: exponentiated updates never
/// produce exact zeros, so fractions at or below this are treated as
/// unsupported.
pub const SUPPORT_EPS: f64 = 1e-6;

/// Marginal routing costs of one flow state: per allowed link, the cost of
/// pushing one more unit of the session's node throughput through that
/// link (`delta`), and per node the cost of one more unit arriving there
/// (`node_marginal`).
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalCosts {
    /// `delta[w][k]`: marginal of allowed link `k` of session `w`'s dag;
    /// link derivative plus the downstream node marginal.
    pub delta: Vec<Vec<f64>>,
    /// `node_marginal[w][node]`: zero at the session destination,
    /// elsewhere the fraction-weighted average of outgoing `delta`s.
    pub node_marginal: Vec<Vec<f64>>,
    /// Per-session broadcast rounds (the longest allowed path length).
    pub rounds: Vec<usize>,
}

/// Reverse sweep per session: destinations cost nothing, every other node
/// averages `delta = D'(F) + downstream marginal` over its out-links with
/// its routing fractions. Nodes are visited in increasing hop order, so
/// each round extends the horizon by one hop and the sweep ends within the
/// longest path length.
pub fn broadcast_marginals(
    augmented: &AugmentedGraph,
    dags: &[SessionDag],
    flows: &FlowState,
    routing: &RoutingConfig,
    kind: CostKind,
) -> Result<MarginalCosts> {
    let nodes = augmented.node_count();
    let mut delta = Vec::with_capacity(dags.len());
    let mut node_marginal = Vec::with_capacity(dags.len());
    let mut rounds = Vec::with_capacity(dags.len());
    for (w, dag) in dags.iter().enumerate() {
        let weights = routing.weights(w);
        let mut marg = vec![0.0; nodes];
        let mut d = vec![0.0; dag.allowed.len()];
        for &i in dag.order.iter().rev() {
            let Some((s, e)) = dag.row(i) else { continue };
            let mut acc = 0.0;
            for k in s..e {
                let link_id = dag.allowed[k];
                let link = augmented.link(link_id);
                let dprime =
                    kind.derivative(flows.aggregate[link_id], link.capacity).map_err(|err| {
                        match err {
                            Error::CapacityExceeded { flow, capacity, .. } => {
                                Error::CapacityExceeded {
                                    from: link.from,
                                    to: link.to,
                                    flow,
                                    capacity,
                                }
                            }
                            other => other,
                        }
                    })?;
                d[k] = dprime + marg[link.to];
                acc += weights[k] * d[k];
            }
            marg[i] = acc;
        }
        delta.push(d);
        node_marginal.push(marg);
        rounds.push(dag.longest_path_len());
    }
    Ok(MarginalCosts { delta, node_marginal, rounds })
}

/// One exponentiated-gradient descent step: on every row currently
/// carrying flow, fractions are reweighted by `exp(-eta * delta)` and
/// renormalized; rows without flow are left untouched. Exponents are
/// shifted by the row minimum, so overflow is impossible. A positive
/// weight that underflows is pinned at the smallest positive normal
/// instead of reaching zero: zero is absorbing under multiplicative
/// updates, while the mathematical iterate stays positive forever.
/// Weights that are exactly zero on entry stay zero.
pub fn omd_rt_step(
    dags: &[SessionDag],
    routing: &RoutingConfig,
    flows: &FlowState,
    marginals: &MarginalCosts,
    eta: f64,
) -> Result<RoutingConfig> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidInput(format!("step size must be nonnegative, got {eta}")));
    }
    let mut next = routing.clone();
    for (w, dag) in dags.iter().enumerate() {
        for &(node, s, e) in dag.rows() {
            if flows.node_throughput[w][node] <= 0.0 {
                continue;
            }
            let d = &marginals.delta[w][s..e];
            let shift = d.iter().copied().fold(f64::INFINITY, f64::min);
            let row = &mut next.weights_mut(w)[s..e];
            let mut sum = 0.0;
            for (x, &dk) in row.iter_mut().zip(d) {
                let was_positive = *x > 0.0;
                *x *= crate::fmath::exp(-eta * (dk - shift));
                // Explicit comparison so a NaN weight is not masked by the pin.
                if was_positive && *x < f64::MIN_POSITIVE {
                    *x = f64::MIN_POSITIVE;
                }
                sum += *x;
            }
            if !(sum > 0.0) || !sum.is_finite() {
                return Err(Error::Underflow { node, session: w });
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
    }
    Ok(next)
}

/// Deviation of a flow state from the routing optimality conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingOptimalityResidual {
    pub per_row: Vec<RoutingRowResidual>,
    /// Largest supported-link spread across all rows.
    pub max_spread: f64,
    /// Largest violation of the unsupported-link inequality.
    pub max_kkt_violation: f64,
}

/// One (session, node) row of the residual report. `spread` is the range
/// of `throughput * delta` over links with fraction above [`SUPPORT_EPS`];
/// at an optimum those marginals are all equal to `-alpha`, and every
/// unsupported link's marginal is at least `-alpha` (violations are
/// clamped at zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingRowResidual {
    pub session: usize,
    pub node: usize,
    pub spread: f64,
    pub alpha: f64,
    pub kkt_violation: f64,
}

pub fn routing_optimality_residual(
    dags: &[SessionDag],
    flows: &FlowState,
    marginals: &MarginalCosts,
    routing: &RoutingConfig,
) -> RoutingOptimalityResidual {
    let mut per_row = Vec::new();
    let mut max_spread = 0.0f64;
    let mut max_kkt_violation = 0.0f64;
    for (w, dag) in dags.iter().enumerate() {
        for &(node, s, e) in dag.rows() {
            let t = flows.node_throughput[w][node];
            let weights = &routing.weights(w)[s..e];
            let d = &marginals.delta[w][s..e];
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut sum = 0.0;
            let mut supported = 0usize;
            for (&phi, &dk) in weights.iter().zip(d) {
                if phi > SUPPORT_EPS {
                    let g = t * dk;
                    lo = lo.min(g);
                    hi = hi.max(g);
                    sum += g;
                    supported += 1;
                }
            }
            let (spread, alpha) = if supported > 0 {
                (hi - lo, -sum / supported as f64)
            } else {
                (0.0, 0.0)
            };
            let mut kkt_violation = 0.0f64;
            for (&phi, &dk) in weights.iter().zip(d) {
                if phi <= SUPPORT_EPS {
                    kkt_violation = kkt_violation.max(-alpha - t * dk);
                }
            }
            kkt_violation = kkt_violation.max(0.0);
            max_spread = max_spread.max(spread);
            max_kkt_violation = max_kkt_violation.max(kkt_violation);
            per_row.push(RoutingRowResidual { session: w, node, spread, alpha, kkt_violation });
        }
    }
    RoutingOptimalityResidual { per_row, max_spread, max_kkt_violation }
}

/// Routing solver knobs. The step starts at `eta` (or `eta / smoothness`
/// when an estimate of the cost's smoothness constant is supplied) and is
/// halved persistently whenever a step would increase the cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingSolverConfig {
    pub eta: f64,
    pub max_iters: usize,
    /// Stop when the sup-norm change of the fractions falls below this.
    pub tol: f64,
    pub smoothness: Option<f64>,
}

impl Default for RoutingSolverConfig {
    fn default() -> Self {
        RoutingSolverConfig { eta: 1.0, max_iters: 5000, tol: 1e-8, smoothness: None }
    }
}

impl RoutingSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::InvalidInput(format!("eta must be positive, got {}", self.eta)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("need at least one iteration".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidInput(format!("tol must be nonnegative, got {}", self.tol)));
        }
        Ok(())
    }

    fn initial_eta(&self) -> f64 {
        match self.smoothness {
            Some(l) if l > 0.0 => self.eta / l,
            _ => self.eta,
        }
    }
}

/// One row of a routing trace: cost, residual spread, and sup-norm change
/// after each accepted step (iteration 0 is the starting point).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingTraceRow {
    pub iter: usize,
    pub cost: f64,
    pub residual_spread: f64,
    pub phi_change: f64,
}

/// Routing solver output.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingRun {
    pub routing: RoutingConfig,
    pub trace: Vec<RoutingTraceRow>,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Step size of the last accepted iteration.
    pub final_eta: f64,
}

enum StepRule {
    Exponentiated,
    ProjectedGradient,
}

/// Iterates propagate, broadcast, exponentiated step until the fractions
/// stop moving (sup-norm below `config.tol`) or the budget runs out. A
/// step that would increase the cost (or overload an M/M/1 link) is
/// retried with a halved step size, so the cost trace is nonincreasing.
pub fn omd_rt_solve(
    augmented: &AugmentedGraph,
    dags: &[SessionDag],
    allocation: &Allocation,
    initial: Option<&RoutingConfig>,
    kind: CostKind,
    config: &RoutingSolverConfig,
) -> Result<RoutingRun> {
    descend(augmented, dags, allocation, initial, kind, config, StepRule::Exponentiated)
}

/// Euclidean analogue of [`omd_rt_solve`]: each flowing row takes the step
/// `fractions - eta * throughput * delta` and is projected back onto the
/// simplex. Same stopping and step-halving rules.
pub fn pgd_routing_baseline(
    augmented: &AugmentedGraph,
    dags: &[SessionDag],
    allocation: &Allocation,
    initial: Option<&RoutingConfig>,
    kind: CostKind,
    config: &RoutingSolverConfig,
) -> Result<RoutingRun> {
    descend(augmented, dags, allocation, initial, kind, config, StepRule::ProjectedGradient)
}

fn pgd_step(
    dags: &[SessionDag],
    routing: &RoutingConfig,
    flows: &FlowState,
    marginals: &MarginalCosts,
    eta: f64,
) -> Result<RoutingConfig> {
    let mut next = routing.clone();
    for (w, dag) in dags.iter().enumerate() {
        for &(node, s, e) in dag.rows() {
            let t = flows.node_throughput[w][node];
            if t <= 0.0 {
                continue;
            }
            let d = &marginals.delta[w][s..e];
            let row = &mut next.weights_mut(w)[s..e];
            let moved: Vec<f64> =
                row.iter().zip(d).map(|(&x, &dk)| x - eta * t * dk).collect();
            let projected = project_simplex(&moved);
            row.copy_from_slice(&projected);
        }
    }
    Ok(next)
}

fn descend(
    augmented: &AugmentedGraph,
    dags: &[SessionDag],
    allocation: &Allocation,
    initial: Option<&RoutingConfig>,
    kind: CostKind,
    config: &RoutingSolverConfig,
    rule: StepRule,
) -> Result<RoutingRun> {
    config.validate()?;
    let mut routing = match initial {
        Some(r) => {
            r.validate(dags)?;
            r.clone()
        }
        None => RoutingConfig::uniform(dags),
    };
    let mut flows = propagate(augmented, dags, allocation, &routing)?;
    let mut cost = total_cost(augmented, &flows, kind)?;
    let mut marginals = broadcast_marginals(augmented, dags, &flows, &routing, kind)?;
    let base_eta = config.initial_eta();
    let mut last_eta = base_eta;
    let mut trace = Vec::with_capacity(config.max_iters + 1);
    let spread0 =
        routing_optimality_residual(dags, &flows, &marginals, &routing).max_spread;
    trace.push(RoutingTraceRow { iter: 0, cost, residual_spread: spread0, phi_change: 0.0 });

    let mut converged = false;
    let mut iterations = 0;
    'outer: for k in 1..=config.max_iters {
        // Each iteration retries from the configured step, halving until
        // the cost stops increasing; marginals are unchanged because the
        // iterate is. Halvings do not carry over: a transient steep region
        // must not freeze the step for the rest of the run.
        let mut eta = base_eta;
        let (candidate, cand_flows, cand_cost) = loop {
            let candidate = match rule {
                StepRule::Exponentiated => {
                    omd_rt_step(dags, &routing, &flows, &marginals, eta)?
                }
                StepRule::ProjectedGradient => {
                    pgd_step(dags, &routing, &flows, &marginals, eta)?
                }
            };
            match propagate(augmented, dags, allocation, &candidate)
                .and_then(|f| total_cost(augmented, &f, kind).map(|c| (f, c)))
            {
                Ok((f, c)) if c <= cost + 1e-10 => break (candidate, f, c),
                Ok(_) | Err(Error::CapacityExceeded { .. }) => {
                    eta *= 0.5;
                    if eta < 1e-300 {
                        converged = true;
                        break 'outer;
                    }
                }
                Err(other) => return Err(other),
            }
        };
        let change = routing.max_abs_diff(&candidate);
        last_eta = eta;
        routing = candidate;
        flows = cand_flows;
        cost = cand_cost;
        marginals = broadcast_marginals(augmented, dags, &flows, &routing, kind)?;
        let spread =
            routing_optimality_residual(dags, &flows, &marginals, &routing).max_spread;
        trace.push(RoutingTraceRow { iter: k, cost, residual_spread: spread, phi_change: change });
        iterations = k;
        if change < config.tol {
            converged = true;
            break;
        }
    }
    Ok(RoutingRun { routing, trace, final_cost: cost, iterations, converged, final_eta: last_eta })
}

/// Exact Euclidean projection onto the probability simplex (sort and
/// threshold). Output entries are nonnegative and sum to one within
/// rounding.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Centralized minimum of the total routing cost over all feasible flows.
#[derive(Debug, Clone, PartialEq)]
pub struct OptBaseline {
    pub cost: f64,
    /// Aggregate optimal flow per augmented link.
    pub link_flow: Vec<f64>,
    /// Conditional-gradient duality gap at termination.
    pub gap: f64,
    pub sweeps: usize,
}

const OPT_MAX_SWEEPS: usize = 100_000;
const RESTORE_MAX_SWEEPS: usize = 2_000;

/// Derivative of the objective steering a conditional-gradient phase:
/// either the real cost model or the capacity-overload surrogate
/// `(F/C)^8` used to reach a feasible point under M/M/1.
#[derive(Clone, Copy)]
enum Phase {
    Real(CostKind),
    /// Sum of `(F/C)^p`; large `p` approximates minimizing the worst
    /// load ratio, which is how a strictly feasible point is found.
    Surrogate { p: i32 },
}

impl Phase {
    fn derivative(&self, flow: f64, capacity: f64) -> Result<f64> {
        match *self {
            Phase::Real(kind) => kind.derivative(flow, capacity),
            Phase::Surrogate { p } => {
                let r = flow / capacity;
                Ok(p as f64 * crate::fmath::powi(r, p - 1) / capacity)
            }
        }
    }
}

struct SessionFlows {
    /// Convex combination of paths (each a sequence of allowed-link
    /// indices into the dag), weights summing to one.
    paths: BTreeMap<Vec<u32>, f64>,
    rate: f64,
    /// Dense per-link flow of this session, kept in sync with `paths`.
    flow: Vec<f64>,
}

impl SessionFlows {
    fn rebuild_flow(&mut self, links: usize) {
        self.flow = vec![0.0; links];
        for (path, &weight) in &self.paths {
            for &l in path {
                self.flow[l as usize] += weight * self.rate;
            }
        }
    }
}

/// Cheapest source-to-destination path of one session under the given
/// link prices; ties broken by smallest link id. Returns (path, cost).
fn shortest_path(
    augmented: &AugmentedGraph,
    dag: &SessionDag,
    prices: &[f64],
) -> (Vec<u32>, f64) {
    let nodes = augmented.node_count();
    let mut dist = vec![f64::INFINITY; nodes];
    let mut choice: Vec<Option<LinkId>> = vec![None; nodes];
    dist[augmented.dest(dag.session)] = 0.0;
    for &i in dag.order.iter().rev() {
        let Some((s, e)) = dag.row(i) else { continue };
        for k in s..e {
            let l = dag.allowed[k];
            let cand = prices[l] + dist[augmented.link(l).to];
            if cand < dist[i] {
                dist[i] = cand;
                choice[i] = Some(l);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = augmented.source();
    while let Some(l) = choice[node] {
        path.push(l as u32);
        node = augmented.link(l).to;
    }
    (path, dist[augmented.source()])
}

fn path_cost(path: &[u32], prices: &[f64]) -> f64 {
    path.iter().map(|&l| prices[l as usize]).sum()
}

/// Largest step along `delta` that keeps every M/M/1 link strictly below
/// capacity; unconstrained models keep the proposed maximum.
fn cap_step(
    augmented: &AugmentedGraph,
    aggregate: &[f64],
    delta: &[f64],
    phase: Phase,
    mut gamma_max: f64,
) -> f64 {
    if let Phase::Real(CostKind::Mm1) = phase {
        for (l, link) in augmented.links().iter().enumerate() {
            if delta[l] > 0.0 {
                let room = link.capacity * (1.0 - 1e-9) - aggregate[l];
                gamma_max = gamma_max.min((room / delta[l]).max(0.0));
            }
        }
    }
    gamma_max
}

/// Exact line search: bisection on the (monotone) directional derivative
/// of the convex objective along `delta`.
fn line_search(
    augmented: &AugmentedGraph,
    aggregate: &[f64],
    delta: &[f64],
    phase: Phase,
    gamma_max: f64,
) -> Result<f64> {
    let slope = |gamma: f64| -> Result<f64> {
        let mut s = 0.0;
        for (l, link) in augmented.links().iter().enumerate() {
            if delta[l] != 0.0 {
                // Steps that unload a link completely can undershoot zero
                // by a rounding ulp; the domain is still nonnegative.
                let trial = (aggregate[l] + gamma * delta[l]).max(0.0);
                s += delta[l] * phase.derivative(trial, link.capacity)?;
            }
        }
        Ok(s)
    };
    if gamma_max <= 0.0 || slope(0.0)? >= 0.0 {
        return Ok(0.0);
    }
    if slope(gamma_max)? <= 0.0 {
        return Ok(gamma_max);
    }
    let (mut lo, mut hi) = (0.0, gamma_max);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if slope(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Conditional-gradient minimization of the total cost over per-session
/// DAG flows. Each sweep updates one session at a time: the steepest
/// active path may be unloaded (away step) or the cheapest path loaded
/// (forward step), with exact line search; sweeps stop when the joint
/// duality gap drops below `tol * max(1, cost)`. Under M/M/1 an initial
/// surrogate phase spreads flow until all links are strictly under
/// capacity, or reports infeasibility.
pub fn opt_baseline(
    augmented: &AugmentedGraph,
    dags: &[SessionDag],
    allocation: &Allocation,
    kind: CostKind,
    tol: Option<f64>,
) -> Result<OptBaseline> {
    let tol = tol.unwrap_or(1e-8);
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    if allocation.sessions() != dags.len() {
        return Err(Error::InvalidInput("allocation/dag dimension mismatch".into()));
    }
    let links = augmented.links().len();
    let hop_prices = vec![1.0; links];
    let mut sessions: Vec<SessionFlows> = dags
        .iter()
        .enumerate()
        .map(|(w, dag)| {
            let (path, _) = shortest_path(augmented, dag, &hop_prices);
            let mut s = SessionFlows {
                paths: BTreeMap::from([(path, 1.0)]),
                rate: allocation.rate(w),
                flow: Vec::new(),
            };
            s.rebuild_flow(links);
            s
        })
        .collect();
    let aggregate = |sessions: &[SessionFlows]| -> Vec<f64> {
        let mut f = vec![0.0; links];
        for s in sessions {
            for (l, &x) in s.flow.iter().enumerate() {
                f[l] += x;
            }
        }
        f
    };

    let mut agg = aggregate(&sessions);
    if matches!(kind, CostKind::Mm1) && overloaded(augmented, &agg) {
        restore_feasibility(augmented, dags, &mut sessions, &mut agg)?;
    }
    let phase = Phase::Real(kind);
    let mut gap = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < OPT_MAX_SWEEPS {
        sweeps += 1;
        let prices: Vec<f64> = {
            let mut p = vec![0.0; links];
            for (l, link) in augmented.links().iter().enumerate() {
                p[l] = phase.derivative(agg[l], link.capacity)?;
            }
            p
        };
        // Joint duality gap at a consistent snapshot.
        gap = 0.0;
        for (w, dag) in dags.iter().enumerate() {
            let (_, best) = shortest_path(augmented, dag, &prices);
            let current: f64 = sessions[w]
                .flow
                .iter()
                .zip(&prices)
                .map(|(&f, &p)| f * p)
                .sum();
            gap += current - sessions[w].rate * best;
        }
        let cost_now = real_cost(augmented, &agg, kind)?;
        if gap <= tol * cost_now.abs().max(1.0) {
            return Ok(OptBaseline { cost: cost_now, link_flow: agg, gap, sweeps });
        }
        for w in 0..dags.len() {
            cg_block_step(augmented, &dags[w], &mut sessions[w], &mut agg, phase)?;
        }
        // Guard against accumulated drift in the incremental updates.
        if sweeps % 64 == 0 {
            for s in &mut sessions {
                s.rebuild_flow(links);
            }
            agg = aggregate(&sessions);
        }
    }
    Ok(OptBaseline { cost: real_cost(augmented, &agg, kind)?, link_flow: agg, gap, sweeps })
}

fn real_cost(augmented: &AugmentedGraph, aggregate: &[f64], kind: CostKind) -> Result<f64> {
    let mut c = 0.0;
    for (l, link) in augmented.links().iter().enumerate() {
        c += kind.value(aggregate[l], link.capacity).map_err(|e| match e {
            Error::CapacityExceeded { flow, capacity, .. } => Error::CapacityExceeded {
                from: link.from,
                to: link.to,
                flow,
                capacity,
            },
            other => other,
        })?;
    }
    Ok(c)
}

fn overloaded(augmented: &AugmentedGraph, aggregate: &[f64]) -> bool {
    augmented
        .links()
        .iter()
        .zip(aggregate)
        .any(|(link, &f)| f >= link.capacity * (1.0 - 1e-9))
}

/// Minimizes the overload surrogate until every link is strictly under
/// capacity; if the surrogate stalls while still overloaded, no feasible
/// flow exists.
fn restore_feasibility(
    augmented: &AugmentedGraph,
    dags: &[SessionDag],
    sessions: &mut [SessionFlows],
    agg: &mut Vec<f64>,
) -> Result<()> {
    for p in [8, 16, 32, 64, 128] {
        for _ in 0..RESTORE_MAX_SWEEPS {
            if !overloaded(augmented, agg) {
                return Ok(());
            }
            let mut moved = 0.0f64;
            for (w, dag) in dags.iter().enumerate() {
                moved = moved.max(cg_block_step(
                    augmented,
                    dag,
                    &mut sessions[w],
                    agg,
                    Phase::Surrogate { p },
                )?);
            }
            if moved < 1e-14 {
                break;
            }
        }
    }
    if overloaded(augmented, agg) {
        return Err(Error::Infeasible(
            "no routing keeps every link strictly under capacity".into(),
        ));
    }
    Ok(())
}

/// One conditional-gradient update of a single session: pick the better of
/// the forward direction (toward the cheapest path) and the away direction
/// (off the steepest active path), line-search, and update the path
/// dictionary. Returns the step length taken.
fn cg_block_step(
    augmented: &AugmentedGraph,
    dag: &SessionDag,
    session: &mut SessionFlows,
    agg: &mut Vec<f64>,
    phase: Phase,
) -> Result<f64> {
    if session.rate <= 0.0 {
        return Ok(0.0);
    }
    let links = augmented.links().len();
    let mut prices = vec![0.0; links];
    for (l, link) in augmented.links().iter().enumerate() {
        prices[l] = phase.derivative(agg[l], link.capacity)?;
    }
    let (fw_path, fw_cost) = shortest_path(augmented, dag, &prices);
    let current: f64 = session.flow.iter().zip(&prices).map(|(&f, &p)| f * p).sum();
    let gap_fw = current - session.rate * fw_cost;
    let (away_path, away_cost, away_weight) = session
        .paths
        .iter()
        .map(|(p, &wgt)| (p.clone(), path_cost(p, &prices), wgt))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    let gap_away = session.rate * away_cost - current;

    let mut delta = vec![0.0; links];
    let towards_fw = gap_fw >= gap_away || away_weight >= 1.0 - 1e-12;
    let gamma_max = if towards_fw {
        for &l in &fw_path {
            delta[l as usize] += session.rate;
        }
        for (l, &f) in session.flow.iter().enumerate() {
            delta[l] -= f;
        }
        1.0
    } else {
        // Away step: move from the expensive active path toward the rest
        // of the mixture; the weight bound keeps path weights nonnegative.
        for (l, &f) in session.flow.iter().enumerate() {
            delta[l] = f;
        }
        for &l in &away_path {
            delta[l as usize] -= session.rate;
        }
        away_weight / (1.0 - away_weight)
    };
    if delta.iter().all(|&d| d == 0.0) {
        return Ok(0.0);
    }
    let gamma_max = cap_step(augmented, agg, &delta, phase, gamma_max);
    let gamma = line_search(augmented, agg, &delta, phase, gamma_max)?;
    if gamma <= 0.0 {
        return Ok(0.0);
    }
    for (l, &d) in delta.iter().enumerate() {
        agg[l] += gamma * d;
        session.flow[l] += gamma * d;
        // A drop step lands on zero only in exact arithmetic; scrub the
        // rounding residue so cost evaluation sees a valid flow.
        if agg[l] < 0.0 {
            debug_assert!(agg[l] > -1e-9);
            agg[l] = 0.0;
        }
        if session.flow[l] < 0.0 {
            debug_assert!(session.flow[l] > -1e-9);
            session.flow[l] = 0.0;
        }
    }
    if towards_fw {
        for w in session.paths.values_mut() {
            *w *= 1.0 - gamma;
        }
        *session.paths.entry(fw_path).or_insert(0.0) += gamma;
    } else {
        for w in session.paths.values_mut() {
            *w *= 1.0 + gamma;
        }
        // At the maximal step the away path's weight lands exactly on zero
        // (a drop step) and is removed below.
        *session.paths.get_mut(&away_path).unwrap() -= gamma;
    }
    session.paths.retain(|_, w| *w > 1e-15);
    let total: f64 = session.paths.values().sum();
    if total > 0.0 && (total - 1.0).abs() > 1e-13 {
        for w in session.paths.values_mut() {
            *w /= total;
        }
        session.rebuild_flow(links);
    }
    Ok(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{
        build_instance, build_session_dag, generate_connected_er, random_balanced_placement,
        AugmentedGraph, Link, ModelPlacement,
    };
    use crate::{flow, rng};

    const EXP_TWENTIETH: f64 = 1.0512710963760241;
    const FOUR_EXP_TWENTIETH: f64 = 4.2050843855040965;
    const EXP: CostKind = CostKind::ExpRatio { a: 1.0 };

    fn diamond() -> (AugmentedGraph, Vec<SessionDag>) {
        let g = crate::topology::tests::diamond();
        let dag = build_session_dag(&g, 0).unwrap();
        (g, vec![dag])
    }

    /// Two disjoint 2-hop paths with different capacities: the S->a->D
    /// path has capacity `ca` on both links, the S->b->D path `cb`.
    fn asymmetric_diamond(ca: f64, cb: f64) -> (AugmentedGraph, Vec<SessionDag>) {
        let p = ModelPlacement::new(vec![0, 0], 1).unwrap();
        let g = AugmentedGraph::from_links(
            2,
            p,
            vec![0, 1],
            vec![
                Link { from: 2, to: 0, capacity: ca },
                Link { from: 2, to: 1, capacity: cb },
                Link { from: 0, to: 3, capacity: ca },
                Link { from: 1, to: 3, capacity: cb },
            ],
        )
        .unwrap();
        let dag = build_session_dag(&g, 0).unwrap();
        (g, vec![dag])
    }

    fn state(
        g: &AugmentedGraph,
        dags: &[SessionDag],
        routing: &RoutingConfig,
        rate: f64,
    ) -> (Allocation, FlowState, MarginalCosts) {
        let alloc = Allocation::new(vec![rate], rate).unwrap();
        let flows = propagate(g, dags, &alloc, routing).unwrap();
        let marg = broadcast_marginals(g, dags, &flows, routing, EXP).unwrap();
        (alloc, flows, marg)
    }

    #[test]
    fn diamond_broadcast_matches_hand_recursion() {
        let (g, dags) = diamond();
        let routing = RoutingConfig::uniform(&dags);
        let (_, _flows, marg) = state(&g, &dags, &routing, 1.0);
        // Entry link marginal: own derivative 0.1 e^{0.05} plus the relay
        // node's marginal, itself 0.1 e^{0.05}.
        let (s, e) = dags[0].row(2).unwrap();
        for k in s..e {
            assert!((marg.delta[0][k] - 0.2 * EXP_TWENTIETH).abs() < 1e-12);
        }
        assert!((marg.delta[0][k_for(&g, &dags[0], 0, 3)] - 0.1 * EXP_TWENTIETH).abs() < 1e-12);
        assert_eq!(marg.node_marginal[0][g.dest(0)], 0.0);
        assert_eq!(marg.rounds[0], 2);
    }

    fn k_for(g: &AugmentedGraph, dag: &SessionDag, from: usize, to: usize) -> usize {
        dag.allowed
            .iter()
            .position(|&l| g.link(l).from == from && g.link(l).to == to)
            .unwrap()
    }

    #[test]
    fn broadcast_matches_finite_difference() {
        let (g, dags) = diamond();
        let routing = RoutingConfig::uniform(&dags);
        let (alloc, flows, marg) = state(&g, &dags, &routing, 1.0);
        let k = k_for(&g, &dags[0], 2, 0);
        let t = flows.node_throughput[0][2];
        let h = 1e-6;
        let mut plus = routing.clone();
        plus.weights_mut(0)[k] += h;
        let mut minus = routing.clone();
        minus.weights_mut(0)[k] -= h;
        let cost = |r: &RoutingConfig| {
            let f = flow::propagate_unchecked(&g, &dags, &alloc, r).unwrap();
            total_cost(&g, &f, EXP).unwrap()
        };
        let fd = (cost(&plus) - cost(&minus)) / (2.0 * h);
        assert!((t * marg.delta[0][k] - fd).abs() < 1e-6 * (1.0 + fd.abs()));
    }

    #[test]
    fn three_hop_chain_head_marginal_sums_links() {
        // S(2) -> 0 -> 1 -> D_0(3); node 0 hosts version 1, node 1
        // version 0, so the physical link joins differing versions.
        let p = ModelPlacement::new(vec![1, 0], 2).unwrap();
        let g = AugmentedGraph::from_links(
            2,
            p,
            vec![0],
            vec![
                Link { from: 2, to: 0, capacity: 10.0 },
                Link { from: 0, to: 1, capacity: 8.0 },
                Link { from: 1, to: 3, capacity: 6.0 },
                Link { from: 0, to: 4, capacity: 10.0 },
            ],
        )
        .unwrap();
        let dags = vec![build_session_dag(&g, 0).unwrap()];
        let routing = RoutingConfig::uniform(&dags);
        let alloc = Allocation::new(vec![1.0], 1.0).unwrap();
        let flows = propagate(&g, &dags, &alloc, &routing).unwrap();
        let marg = broadcast_marginals(&g, &dags, &flows, &routing, EXP).unwrap();
        let d = |cap: f64| EXP.derivative(1.0, cap).unwrap();
        let expect = d(10.0) + d(8.0) + d(6.0);
        assert!((marg.node_marginal[0][2] - expect).abs() < 1e-12);
        assert_eq!(marg.rounds[0], 3);
    }

    #[test]
    fn node_marginal_identity_on_random_instance() {
        let t = generate_connected_er(12, 0.4, 5).unwrap();
        let p = random_balanced_placement(12, 3, 5).unwrap();
        let inst = build_instance(&t, &p, None).unwrap();
        let routing = RoutingConfig::uniform(&inst.dags);
        let alloc = Allocation::uniform(3, 6.0).unwrap();
        let flows = propagate(&inst.augmented, &inst.dags, &alloc, &routing).unwrap();
        let marg =
            broadcast_marginals(&inst.augmented, &inst.dags, &flows, &routing, EXP).unwrap();
        for (w, dag) in inst.dags.iter().enumerate() {
            for &(node, s, e) in dag.rows() {
                let avg: f64 = (s..e)
                    .map(|k| routing.weights(w)[k] * marg.delta[w][k])
                    .sum();
                assert!(
                    (marg.node_marginal[w][node] - avg).abs() <= 1e-12,
                    "identity broken at node {node}, session {w}"
                );
            }
        }
    }

    #[test]
    fn step_frozen_example() {
        let (g, dags) = diamond();
        let routing = RoutingConfig::uniform(&dags);
        let (_, flows, mut marg) = state(&g, &dags, &routing, 1.0);
        let (s, _) = dags[0].row(2).unwrap();
        marg.delta[0][s] = 0.0;
        marg.delta[0][s + 1] = 4.0f64.ln();
        let next = omd_rt_step(&dags, &routing, &flows, &marg, 0.5).unwrap();
        assert!((next.weights(0)[s] - 2.0 / 3.0).abs() < 1e-15);
        assert!((next.weights(0)[s + 1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn step_invariances() {
        let (g, dags) = diamond();
        let routing = RoutingConfig::uniform(&dags);
        let (_, flows, mut marg) = state(&g, &dags, &routing, 1.0);
        // Equal marginals: row unchanged.
        let next = omd_rt_step(&dags, &routing, &flows, &marg, 1.0).unwrap();
        assert!(routing.max_abs_diff(&next) < 1e-15);
        // Zero step: unchanged under unequal marginals too.
        let (s, _) = dags[0].row(2).unwrap();
        marg.delta[0][s] = 3.0;
        let next = omd_rt_step(&dags, &routing, &flows, &marg, 0.0).unwrap();
        assert!(routing.max_abs_diff(&next) < 1e-15);
        // Zero-throughput rows stay put.
        let zero = Allocation::new_unchecked(vec![0.0], 1.0).unwrap();
        let flows0 = propagate(&g, &dags, &zero, &routing).unwrap();
        let marg0 = broadcast_marginals(&g, &dags, &flows0, &routing, EXP).unwrap();
        let next = omd_rt_step(&dags, &routing, &flows0, &marg0, 5.0).unwrap();
        assert_eq!(routing.max_abs_diff(&next), 0.0);
    }

    #[test]
    fn step_underflow_is_pinned_not_absorbed() {
        let (g, dags) = diamond();
        let routing = RoutingConfig::uniform(&dags);
        let (_, flows, mut marg) = state(&g, &dags, &routing, 1.0);
        let (s, _) = dags[0].row(2).unwrap();
        marg.delta[0][s] = 0.0;
        marg.delta[0][s + 1] = 1000.0;
        // A catastrophic step drains the second link but must leave a
        // positive residue a later step could in principle regrow.
        let next = omd_rt_step(&dags, &routing, &flows, &marg, 10.0).unwrap();
        assert!((next.weights(0)[s] - 1.0).abs() < 1e-12);
        let tiny = next.weights(0)[s + 1];
        assert!(tiny > 0.0 && tiny < 1e-300, "pinned weight {tiny}");
    }

    #[test]
    fn step_keeps_exact_zeros_and_rejects_nan() {
        let (g, dags) = diamond();
        let mut routing = RoutingConfig::uniform(&dags);
        let (s, _) = dags[0].row(2).unwrap();
        routing.weights_mut(0)[s] = 0.0;
        routing.weights_mut(0)[s + 1] = 1.0;
        let (_, flows, mut marg) = state(&g, &dags, &routing, 1.0);
        // A zero weight is a face of the simplex; multiplicative updates
        // must not resurrect it, however favorable its marginal.
        marg.delta[0][s] = 0.0;
        marg.delta[0][s + 1] = 1000.0;
        let next = omd_rt_step(&dags, &routing, &flows, &marg, 0.5).unwrap();
        assert_eq!(next.weights(0)[s], 0.0);
        assert_eq!(next.weights(0)[s + 1], 1.0);
        marg.delta[0][s + 1] = f64::NAN;
        let err = omd_rt_step(&dags, &routing, &flows, &marg, 0.5).unwrap_err();
        assert_eq!(err, Error::Underflow { node: 2, session: 0 });
    }

    #[test]
    fn symmetric_diamond_is_fixed_point() {
        let (g, dags) = diamond();
        let alloc = Allocation::new(vec![1.0], 1.0).unwrap();
        let run = omd_rt_solve(&g, &dags, &alloc, None, EXP, &RoutingSolverConfig::default())
            .unwrap();
        assert!(run.converged);
        let (s, _) = dags[0].row(2).unwrap();
        assert!((run.routing.weights(0)[s] - 0.5).abs() < 1e-9);
        assert!((run.final_cost - FOUR_EXP_TWENTIETH).abs() < 1e-9);
    }

    #[test]
    fn asymmetric_diamond_prefers_wide_path() {
        let (g, dags) = asymmetric_diamond(20.0, 10.0);
        let alloc = Allocation::new(vec![1.0], 1.0).unwrap();
        let run = omd_rt_solve(&g, &dags, &alloc, None, EXP, &RoutingSolverConfig::default())
            .unwrap();
        let k_wide = k_for(&g, &dags[0], 2, 0);
        assert!(run.routing.weights(0)[k_wide] > 0.99);
        let opt = opt_baseline(&g, &dags, &alloc, EXP, None).unwrap();
        assert!(
            (run.final_cost - opt.cost).abs() <= 1e-4 * opt.cost.abs(),
            "omd {} vs opt {}",
            run.final_cost,
            opt.cost
        );
    }

    #[test]
    fn iteration_budget_respected() {
        let (g, dags) = asymmetric_diamond(20.0, 10.0);
        let alloc = Allocation::new(vec![1.0], 1.0).unwrap();
        let cfg = RoutingSolverConfig { max_iters: 1, ..Default::default() };
        let run = omd_rt_solve(&g, &dags, &alloc, None, EXP, &cfg).unwrap();
        assert_eq!(run.iterations, 1);
        assert_eq!(run.trace.len(), 2);
    }

    #[test]
    fn trace_is_nonincreasing() {
        for seed in [2, 7] {
            let t = generate_connected_er(15, 0.3, seed).unwrap();
            let t = crate::topology::sample_capacities(&t, 10.0, seed).unwrap();
            let p = random_balanced_placement(15, 3, seed).unwrap();
            let inst = build_instance(&t, &p, None).unwrap();
            let alloc = Allocation::uniform(3, 9.0).unwrap();
            let run = omd_rt_solve(
                &inst.augmented,
                &inst.dags,
                &alloc,
                None,
                EXP,
                &RoutingSolverConfig { max_iters: 300, ..Default::default() },
            )
            .unwrap();
            for pair in run.trace.windows(2) {
                assert!(pair[1].cost <= pair[0].cost + 1e-10);
            }
        }
    }

    #[test]
    fn converged_point_is_a_fixed_point() {
        let (g, dags) = asymmetric_diamond(20.0, 10.0);
        let alloc = Allocation::new(vec![1.0], 1.0).unwrap();
        let run = omd_rt_solve(&g, &dags, &alloc, None, EXP, &RoutingSolverConfig::default())
            .unwrap();
        assert!(run.converged);
        let flows = propagate(&g, &dags, &alloc, &run.routing).unwrap();
        let marg = broadcast_marginals(&g, &dags, &flows, &run.routing, EXP).unwrap();
        let res = routing_optimality_residual(&dags, &flows, &marg, &run.routing);
        if res.max_spread < 1e-10 {
            let next = omd_rt_step(&dags, &run.routing, &flows, &marg, run.final_eta).unwrap();
            assert!(run.routing.max_abs_diff(&next) < 1e-8);
        }
    }

    #[test]
    fn residual_spreads() {
        // Symmetric diamond at the even split: spread vanishes.
        let (g, dags) = diamond();
        let routing = RoutingConfig::uniform(&dags);
        let (_, flows, marg) = state(&g, &dags, &routing, 1.0);
        let res = routing_optimality_residual(&dags, &flows, &marg, &routing);
        assert!(res.max_spread < 1e-12);
        assert_eq!(res.max_kkt_violation, 0.0);
        // Uniform split on the asymmetric diamond: positive spread at S.
        let (g, dags) = asymmetric_diamond(20.0, 10.0);
        let routing = RoutingConfig::uniform(&dags);
        let alloc = Allocation::new(vec![1.0], 1.0).unwrap();
        let flows = propagate(&g, &dags, &alloc, &routing).unwrap();
        let marg = broadcast_marginals(&g, &dags, &flows, &routing, EXP).unwrap();
        let res = routing_optimality_residual(&dags, &flows, &marg, &routing);
        assert!(res.max_spread > 1e-3);
        // Single-out-link rows contribute zero spread.
        let row_a = res.per_row.iter().find(|r| r.node == 0).unwrap();
        assert_eq!(row_a.spread, 0.0);
    }

    #[test]
    fn pgd_reaches_the_symmetric_optimum() {
        let (g, dags) = diamond();
        let mut start = RoutingConfig::uniform(&dags);
        let (s, _) = dags[0].row(2).unwrap();
        start.weights_mut(0)[s] = 0.8;
        start.weights_mut(0)[s + 1] = 0.2;
        let alloc = Allocation::new(vec![1.0], 1.0).unwrap();
        let run = pgd_routing_baseline(
            &g,
            &dags,
            &alloc,
            Some(&start),
            EXP,
            &RoutingSolverConfig::default(),
        )
        .unwrap();
        assert!((run.routing.weights(0)[s] - 0.5).abs() < 1e-6);
        for pair in run.trace.windows(2) {
            assert!(pair[1].cost <= pair[0].cost + 1e-10);
        }
    }

    #[test]
    fn simplex_projection_known_points() {
        assert_eq!(project_simplex(&[1.0, 0.0]), vec![1.0, 0.0]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.5, 0.5]);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        let p = project_simplex(&[1.0, 1.0]);
        assert!((p[0] - 0.5).abs() < 1e-15);
        let p = project_simplex(&[-1.0, -2.0, -3.0]);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn simplex_projection_optimality_conditions() {
        let mut r = rng::seeded(31);
        for _ in 0..200 {
            let n = 2 + rng::index(&mut r, 5);
            let v: Vec<f64> = (0..n).map(|_| rng::uniform_in(&mut r, -3.0, 3.0)).collect();
            let x = project_simplex(&v);
            let sum: f64 = x.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(x.iter().all(|&xi| xi >= 0.0));
            // KKT: v - x is constant on the support, and off-support
            // entries satisfy v_j <= that constant.
            let tau = x
                .iter()
                .zip(&v)
                .filter(|(&xi, _)| xi > 0.0)
                .map(|(&xi, &vi)| vi - xi)
                .fold(f64::NEG_INFINITY, f64::max);
            for (&xi, &vi) in x.iter().zip(&v) {
                if xi > 0.0 {
                    assert!((vi - xi - tau).abs() < 1e-10);
                } else {
                    assert!(vi <= tau + 1e-10);
                }
            }
        }
    }

    #[test]
    fn opt_baseline_symmetric_diamond() {
        let (g, dags) = diamond();
        let alloc = Allocation::new(vec![1.0], 1.0).unwrap();
        let opt = opt_baseline(&g, &dags, &alloc, EXP, None).unwrap();
        assert!((opt.cost - FOUR_EXP_TWENTIETH).abs() < 1e-8, "cost {}", opt.cost);
        // Cross-check against a fine grid over the split fraction x: both
        // links of the first path carry x, the second path 1 - x.
        let mut best = f64::INFINITY;
        for i in 0..=1_000_000u32 {
            let x = i as f64 / 1_000_000.0;
            let c = 2.0 * crate::fmath::exp(x / 10.0)
                + 2.0 * crate::fmath::exp((1.0 - x) / 10.0);
            best = best.min(c);
        }
        assert!((opt.cost - best).abs() < 1e-6, "grid {best} vs opt {}", opt.cost);
    }

    #[test]
    fn opt_baseline_single_path() {
        let p = ModelPlacement::new(vec![0], 1).unwrap();
        let g = AugmentedGraph::from_links(
            1,
            p,
            vec![0],
            vec![
                Link { from: 1, to: 0, capacity: 10.0 },
                Link { from: 0, to: 2, capacity: 10.0 },
            ],
        )
        .unwrap();
        let dags = vec![build_session_dag(&g, 0).unwrap()];
        let alloc = Allocation::new(vec![1.0], 1.0).unwrap();
        let opt = opt_baseline(&g, &dags, &alloc, EXP, None).unwrap();
        let flows = propagate(&g, &dags, &alloc, &RoutingConfig::uniform(&dags)).unwrap();
        let only = total_cost(&g, &flows, EXP).unwrap();
        assert!((opt.cost - only).abs() < 1e-12);
    }

    #[test]
    fn opt_lower_bounds_omd() {
        for seed in [3, 8] {
            let t = generate_connected_er(12, 0.4, seed).unwrap();
            let t = crate::topology::sample_capacities(&t, 10.0, seed).unwrap();
            let p = random_balanced_placement(12, 3, seed).unwrap();
            let inst = build_instance(&t, &p, None).unwrap();
            let alloc = Allocation::uniform(3, 6.0).unwrap();
            let run = omd_rt_solve(
                &inst.augmented,
                &inst.dags,
                &alloc,
                None,
                EXP,
                &RoutingSolverConfig::default(),
            )
            .unwrap();
            let opt =
                opt_baseline(&inst.augmented, &inst.dags, &alloc, EXP, None).unwrap();
            assert!(opt.cost <= run.final_cost + 1e-6 * (1.0 + opt.cost.abs()));
        }
    }

    #[test]
    fn opt_baseline_mm1_feasibility() {
        // Narrow first path forces the restoration phase to spread load.
        let (g, dags) = asymmetric_diamond(1.2, 1.2);
        let alloc = Allocation::new(vec![2.0], 2.0).unwrap();
        let opt = opt_baseline(&g, &dags, &alloc, CostKind::Mm1, None).unwrap();
        assert!(opt.cost.is_finite());
        // Even split is the optimum: each path carries 1.0 at capacity 1.2.
        let expect = 4.0 * (1.0 / 0.2);
        assert!((opt.cost - expect).abs() < 1e-4, "cost {}", opt.cost);
        // Total demand above joint capacity is infeasible.
        let alloc = Allocation::new(vec![3.0], 3.0).unwrap();
        assert!(matches!(
            opt_baseline(&g, &dags, &alloc, CostKind::Mm1, None),
            Err(Error::Infeasible(_))
        ));
    }
}
