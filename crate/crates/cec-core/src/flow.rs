//! Deterministic flow propagation: from an allocation and routing
//! fractions to per-link flows, total cost, total utility, and
//! conservation diagnostics.

use crate::cost::CostKind;
use crate::error::{Error, Result};
use crate::topology::{AugmentedGraph, SessionDag};
use crate::utility::UtilityOracle;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Per-session request rates. [`new`](Self::new) enforces that the rates
/// sum to the total; [`new_unchecked`](Self::new_unchecked) skips that for
/// perturbed probe points (zeroth-order estimation evaluates off-simplex).
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    rates: Vec<f64>,
    total_rate: f64,
}

impl Allocation {
    pub fn new(rates: Vec<f64>, total_rate: f64) -> Result<Self> {
        let a = Self::new_unchecked(rates, total_rate)?;
        let sum: f64 = a.rates.iter().sum();
        if (sum - total_rate).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "rates sum to {sum}, expected {total_rate}"
            )));
        }
        Ok(a)
    }

    pub fn new_unchecked(rates: Vec<f64>, total_rate: f64) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::InvalidInput("allocation needs at least one session".into()));
        }
        if !(total_rate > 0.0) || !total_rate.is_finite() {
            return Err(Error::InvalidInput(format!("total rate must be positive, got {total_rate}")));
        }
        for (w, &r) in rates.iter().enumerate() {
            if !r.is_finite() || r < 0.0 {
                return Err(Error::InvalidInput(format!("rate {r} for session {w} is invalid")));
            }
        }
        Ok(Allocation { rates, total_rate })
    }

    pub fn uniform(sessions: usize, total_rate: f64) -> Result<Self> {
        Self::new(vec![total_rate / sessions as f64; sessions], total_rate)
    }

    pub fn sessions(&self) -> usize {
        self.rates.len()
    }

    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    pub fn rate(&self, session: usize) -> f64 {
        self.rates[session]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }
}

/// Routing fractions, stored per session as one weight per allowed link of
/// that session's [`SessionDag`] (grouped into per-node rows by the dag).
/// Support outside the dag is unrepresentable by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingConfig {
    per_session: Vec<Vec<f64>>,
}

impl RoutingConfig {
    /// Every routed node splits its traffic evenly over its allowed
    /// out-links; single-link rows (hosts) get fraction 1.
    pub fn uniform(dags: &[SessionDag]) -> Self {
        let per_session = dags
            .iter()
            .map(|dag| {
                let mut w = vec![0.0; dag.allowed.len()];
                for &(_, s, e) in dag.rows() {
                    let share = 1.0 / (e - s) as f64;
                    for x in &mut w[s..e] {
                        *x = share;
                    }
                }
                w
            })
            .collect();
        RoutingConfig { per_session }
    }

    pub fn from_weights(per_session: Vec<Vec<f64>>) -> Self {
        RoutingConfig { per_session }
    }

    pub fn sessions(&self) -> usize {
        self.per_session.len()
    }

    pub fn weights(&self, session: usize) -> &[f64] {
        &self.per_session[session]
    }

    pub fn weights_mut(&mut self, session: usize) -> &mut [f64] {
        &mut self.per_session[session]
    }

    /// Checks nonnegativity and unit row sums on every row of every
    /// session, regardless of throughput.
    pub fn validate(&self, dags: &[SessionDag]) -> Result<()> {
        if self.per_session.len() != dags.len() {
            return Err(Error::InvalidInput(format!(
                "routing has {} sessions, dags have {}",
                self.per_session.len(),
                dags.len()
            )));
        }
        for (w, dag) in dags.iter().enumerate() {
            let weights = &self.per_session[w];
            if weights.len() != dag.allowed.len() {
                return Err(Error::InvalidInput(format!(
                    "session {w}: {} weights for {} allowed links",
                    weights.len(),
                    dag.allowed.len()
                )));
            }
            for &(node, s, e) in dag.rows() {
                check_row(&weights[s..e], w, node)?;
            }
        }
        Ok(())
    }

    /// Sup-norm distance to another routing config (convergence metric).
    pub fn max_abs_diff(&self, other: &RoutingConfig) -> f64 {
        let mut d = 0.0f64;
        for (a, b) in self.per_session.iter().zip(&other.per_session) {
            for (x, y) in a.iter().zip(b) {
                d = d.max((x - y).abs());
            }
        }
        d
    }
}

fn check_row(row: &[f64], session: usize, node: usize) -> Result<()> {
    let mut sum = 0.0;
    for &x in row {
        if !x.is_finite() || x < -1e-12 {
            return Err(Error::InvalidInput(format!(
                "negative routing fraction {x} at node {node}, session {session}"
            )));
        }
        sum += x;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "routing fractions at node {node}, session {session} sum to {sum}"
        )));
    }
    Ok(())
}

/// Propagation output: node throughputs and link flows per session, plus
/// aggregate flow per link.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    /// `node_throughput[w][node]`: traffic of session `w` through a node.
    pub node_throughput: Vec<Vec<f64>>,
    /// `session_flow[w][link]`: session flow per augmented link id.
    pub session_flow: Vec<Vec<f64>>,
    /// `aggregate[link]`: sum of session flows on each link.
    pub aggregate: Vec<f64>,
}

impl FlowState {
    pub fn sessions(&self) -> usize {
        self.node_throughput.len()
    }
}

/// Pushes each session's rate from the source through its dag in
/// topological order: `f = t * fraction` on every allowed link, throughput
/// accumulates at the head. Rows are validated (nonnegative, unit sum)
/// only where throughput is positive; a node with zero throughput
/// contributes zero flow whatever its fractions say.
pub fn propagate(
    augmented: &AugmentedGraph,
    dags: &[SessionDag],
    allocation: &Allocation,
    routing: &RoutingConfig,
) -> Result<FlowState> {
    propagate_impl(augmented, dags, allocation, routing, true)
}

/// [`propagate`] without row validation; fractions are treated as raw
/// multipliers. Used to finite-difference the cost as a function of a
/// single fraction, which requires stepping off the simplex.
pub fn propagate_unchecked(
    augmented: &AugmentedGraph,
    dags: &[SessionDag],
    allocation: &Allocation,
    routing: &RoutingConfig,
) -> Result<FlowState> {
    propagate_impl(augmented, dags, allocation, routing, false)
}

fn propagate_impl(
    augmented: &AugmentedGraph,
    dags: &[SessionDag],
    allocation: &Allocation,
    routing: &RoutingConfig,
    validate: bool,
) -> Result<FlowState> {
    let sessions = dags.len();
    if allocation.sessions() != sessions || routing.sessions() != sessions {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} dags, {} rates, {} routing sessions",
            sessions,
            allocation.sessions(),
            routing.sessions()
        )));
    }
    let nodes = augmented.node_count();
    let links = augmented.links().len();
    let mut node_throughput = vec![vec![0.0; nodes]; sessions];
    let mut session_flow = vec![vec![0.0; links]; sessions];
    let mut aggregate = vec![0.0; links];

    for (w, dag) in dags.iter().enumerate() {
        let weights = routing.weights(w);
        if weights.len() != dag.allowed.len() {
            return Err(Error::InvalidInput(format!(
                "session {w}: {} weights for {} allowed links",
                weights.len(),
                dag.allowed.len()
            )));
        }
        let t = &mut node_throughput[w];
        t[augmented.source()] = allocation.rate(w);
        for &i in &dag.order {
            let Some((s, e)) = dag.row(i) else { continue };
            let ti = t[i];
            if ti == 0.0 {
                continue;
            }
            if validate {
                check_row(&weights[s..e], w, i)?;
            }
            for k in s..e {
                let link = dag.allowed[k];
                let f = ti * weights[k];
                session_flow[w][link] += f;
                aggregate[link] += f;
                t[augmented.link(link).to] += f;
            }
        }
    }
    Ok(FlowState { node_throughput, session_flow, aggregate })
}

/// Sum of link costs over every physical and virtual link at the
/// aggregate flows. A capacity violation is reported with the offending
/// link's endpoints.
pub fn total_cost(
    augmented: &AugmentedGraph,
    flows: &FlowState,
    kind: CostKind,
) -> Result<f64> {
    let mut total = 0.0;
    for (id, link) in augmented.links().iter().enumerate() {
        total += kind.value(flows.aggregate[id], link.capacity).map_err(|e| match e {
            Error::CapacityExceeded { flow, capacity, .. } => Error::CapacityExceeded {
                from: link.from,
                to: link.to,
                flow,
                capacity,
            },
            other => other,
        })?;
    }
    Ok(total)
}

/// Objective value: sum of session utilities minus total cost. Counts one
/// oracle query (a joint observation).
pub fn total_utility(
    oracle: &UtilityOracle,
    allocation: &Allocation,
    augmented: &AugmentedGraph,
    flows: &FlowState,
    kind: CostKind,
) -> Result<f64> {
    Ok(oracle.eval_sum(allocation.rates())? - total_cost(augmented, flows, kind)?)
}

/// Worst-case conservation residuals of a flow state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationReport {
    /// Max over sessions and nodes of |throughput − inflow − injection|
    /// and |outflow − throughput| (outflow checked away from the
    /// destination).
    pub max_node_residual: f64,
    /// Max over sessions of |throughput at destination − session rate|.
    pub max_dest_residual: f64,
}

impl ConservationReport {
    pub fn max_residual(&self) -> f64 {
        self.max_node_residual.max(self.max_dest_residual)
    }
}

/// Recomputes conservation from the raw link flows (not trusting the
/// stored throughputs' provenance): inflow plus source injection must
/// equal throughput, throughput must equal outflow, and each session's
/// full rate must arrive at its destination.
pub fn check_conservation(
    augmented: &AugmentedGraph,
    allocation: &Allocation,
    flows: &FlowState,
) -> ConservationReport {
    let mut max_node_residual = 0.0f64;
    let mut max_dest_residual = 0.0f64;
    for w in 0..flows.sessions() {
        let dest = augmented.dest(w);
        for node in 0..augmented.node_count() {
            let inflow: f64 =
                augmented.in_links(node).iter().map(|&l| flows.session_flow[w][l]).sum();
            let outflow: f64 =
                augmented.out_links(node).iter().map(|&l| flows.session_flow[w][l]).sum();
            let injection = if node == augmented.source() { allocation.rate(w) } else { 0.0 };
            let t = flows.node_throughput[w][node];
            max_node_residual = max_node_residual.max((t - inflow - injection).abs());
            if node != dest {
                max_node_residual = max_node_residual.max((outflow - t).abs());
            }
        }
        max_dest_residual =
            max_dest_residual.max((flows.node_throughput[w][dest] - allocation.rate(w)).abs());
    }
    ConservationReport { max_node_residual, max_dest_residual }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{
        build_instance, build_session_dag, generate_connected_er, random_balanced_placement,
        AugmentedGraph, Link, ModelPlacement,
    };
    use crate::utility::UtilityFamily;
    use crate::{rng, topology};

    const TWO_EXP_TENTH: f64 = 2.2103418361512954;
    const FOUR_EXP_TWENTIETH: f64 = 4.2050843855040965;

    /// S(1) -> 0 -> D_1(2), both capacities 10.
    fn chain() -> (AugmentedGraph, Vec<crate::topology::SessionDag>) {
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
        let dag = build_session_dag(&g, 0).unwrap();
        (g, vec![dag])
    }

    fn diamond() -> (AugmentedGraph, Vec<crate::topology::SessionDag>) {
        let g = topology::tests::diamond();
        let dag = build_session_dag(&g, 0).unwrap();
        (g, vec![dag])
    }

    /// Routing config with the source row set to the given split (diamond
    /// fixture: the first two allowed entries are S's row).
    fn diamond_split(dags: &[crate::topology::SessionDag], a: f64, b: f64) -> RoutingConfig {
        let mut r = RoutingConfig::uniform(dags);
        let (s, _) = dags[0].row(2).unwrap();
        r.weights_mut(0)[s] = a;
        r.weights_mut(0)[s + 1] = b;
        r
    }

    #[test]
    fn chain_carries_full_rate() {
        let (g, dags) = chain();
        let alloc = Allocation::new(vec![1.0], 1.0).unwrap();
        let routing = RoutingConfig::uniform(&dags);
        let f = propagate(&g, &dags, &alloc, &routing).unwrap();
        assert_eq!(f.node_throughput[0][0], 1.0);
        assert!(f.aggregate.iter().all(|&x| x == 1.0));
        let cost = total_cost(&g, &f, CostKind::ExpRatio { a: 1.0 }).unwrap();
        assert!((cost - TWO_EXP_TENTH).abs() < 1e-12);
    }

    #[test]
    fn diamond_even_split() {
        let (g, dags) = diamond();
        let alloc = Allocation::new(vec![1.0], 1.0).unwrap();
        let f = propagate(&g, &dags, &alloc, &RoutingConfig::uniform(&dags)).unwrap();
        assert!(f.aggregate.iter().all(|&x| (x - 0.5).abs() < 1e-15));
        let cost = total_cost(&g, &f, CostKind::ExpRatio { a: 1.0 }).unwrap();
        assert!((cost - FOUR_EXP_TWENTIETH).abs() < 1e-12);
    }

    #[test]
    fn diamond_uneven_split() {
        let (g, dags) = diamond();
        let alloc = Allocation::new(vec![2.0], 2.0).unwrap();
        let routing = diamond_split(&dags, 0.3, 0.7);
        let f = propagate(&g, &dags, &alloc, &routing).unwrap();
        // Allowed links sorted by id: (0,3), (1,3), (2,0), (2,1).
        let id_sa = g.links().iter().position(|l| l.from == 2 && l.to == 0).unwrap();
        let id_sb = g.links().iter().position(|l| l.from == 2 && l.to == 1).unwrap();
        assert!((f.session_flow[0][id_sa] - 0.6).abs() < 1e-15);
        assert!((f.session_flow[0][id_sb] - 1.4).abs() < 1e-15);
    }

    #[test]
    fn zero_allocation_baseline_cost() {
        let (g, dags) = diamond();
        let alloc = Allocation::new_unchecked(vec![0.0], 1.0).unwrap();
        let f = propagate(&g, &dags, &alloc, &RoutingConfig::uniform(&dags)).unwrap();
        let cost = total_cost(&g, &f, CostKind::ExpRatio { a: 1.0 }).unwrap();
        assert_eq!(cost, g.links().len() as f64);
        let oracle =
            UtilityOracle::new(vec![UtilityFamily::Logarithmic { a: 1.0, b: 1.0 }], 1.0).unwrap();
        let u = total_utility(&oracle, &alloc, &g, &f, CostKind::ExpRatio { a: 1.0 }).unwrap();
        assert_eq!(u, -(g.links().len() as f64));
    }

    #[test]
    fn linear_chain_objective() {
        let (g, dags) = chain();
        let alloc = Allocation::new(vec![1.0], 1.0).unwrap();
        let f = propagate(&g, &dags, &alloc, &RoutingConfig::uniform(&dags)).unwrap();
        let oracle = UtilityOracle::new(vec![UtilityFamily::Linear { a: 1.0 }], 1.0).unwrap();
        let u = total_utility(&oracle, &alloc, &g, &f, CostKind::ExpRatio { a: 1.0 }).unwrap();
        assert!((u - (1.0 - TWO_EXP_TENTH)).abs() < 1e-12);
    }

    #[test]
    fn utility_term_ignores_routing() {
        let (g, dags) = diamond();
        let alloc = Allocation::new(vec![1.0], 1.0).unwrap();
        let oracle =
            UtilityOracle::new(vec![UtilityFamily::Logarithmic { a: 2.0, b: 0.5 }], 1.0).unwrap();
        let kind = CostKind::ExpRatio { a: 1.0 };
        let mut sums = Vec::new();
        for (a, b) in [(0.5, 0.5), (0.2, 0.8)] {
            let routing = diamond_split(&dags, a, b);
            let f = propagate(&g, &dags, &alloc, &routing).unwrap();
            let u = total_utility(&oracle, &alloc, &g, &f, kind).unwrap();
            let d = total_cost(&g, &f, kind).unwrap();
            sums.push(u + d);
        }
        assert!((sums[0] - sums[1]).abs() < 1e-12);
    }

    #[test]
    fn mm1_overload_names_the_link() {
        let (g, dags) = chain();
        let alloc = Allocation::new(vec![12.0], 12.0).unwrap();
        let f = propagate(&g, &dags, &alloc, &RoutingConfig::uniform(&dags)).unwrap();
        let err = total_cost(&g, &f, CostKind::Mm1).unwrap_err();
        match err {
            Error::CapacityExceeded { from, to, flow, capacity } => {
                assert_eq!((from, to), (0, 2));
                assert_eq!(flow, 12.0);
                assert_eq!(capacity, 10.0);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn conservation_holds_on_random_instances() {
        for seed in [1, 4, 6] {
            let t = generate_connected_er(15, 0.3, seed).unwrap();
            let p = random_balanced_placement(15, 3, seed).unwrap();
            let inst = match build_instance(&t, &p, None) {
                Ok(i) => i,
                Err(_) => continue,
            };
            let alloc = Allocation::uniform(3, 9.0).unwrap();
            // Random valid routing: positive draws, normalized per row.
            let mut routing = RoutingConfig::uniform(&inst.dags);
            let mut r = rng::seeded(seed.wrapping_mul(77));
            for w in 0..3 {
                let rows: Vec<(usize, usize, usize)> = inst.dags[w].rows().to_vec();
                let weights = routing.weights_mut(w);
                for (_, s, e) in rows {
                    let mut sum = 0.0;
                    for x in &mut weights[s..e] {
                        *x = 0.05 + rng::uniform(&mut r);
                        sum += *x;
                    }
                    for x in &mut weights[s..e] {
                        *x /= sum;
                    }
                }
            }
            routing.validate(&inst.dags).unwrap();
            let f = propagate(&inst.augmented, &inst.dags, &alloc, &routing).unwrap();
            let rep = check_conservation(&inst.augmented, &alloc, &f);
            assert!(rep.max_residual() <= 1e-9, "residual {}", rep.max_residual());
        }
    }

    #[test]
    fn corrupted_flow_is_detected() {
        let (g, dags) = diamond();
        let alloc = Allocation::new(vec![1.0], 1.0).unwrap();
        let mut f = propagate(&g, &dags, &alloc, &RoutingConfig::uniform(&dags)).unwrap();
        let id_sa = g.links().iter().position(|l| l.from == 2 && l.to == 0).unwrap();
        f.session_flow[0][id_sa] += 0.1;
        let rep = check_conservation(&g, &alloc, &f);
        assert!(rep.max_node_residual >= 0.1 - 1e-9);
    }

    #[test]
    fn zero_rate_session_is_all_zero() {
        let t = generate_connected_er(10, 0.4, 3).unwrap();
        let p = random_balanced_placement(10, 2, 3).unwrap();
        let inst = build_instance(&t, &p, None).unwrap();
        let alloc = Allocation::new_unchecked(vec![4.0, 0.0], 4.0).unwrap();
        let f = propagate(&inst.augmented, &inst.dags, &alloc, &RoutingConfig::uniform(&inst.dags))
            .unwrap();
        assert!(f.session_flow[1].iter().all(|&x| x == 0.0));
        assert!(f.node_throughput[1].iter().all(|&x| x == 0.0));
        let rep = check_conservation(&inst.augmented, &alloc, &f);
        assert!(rep.max_residual() <= 1e-9);
    }

    #[test]
    fn invalid_rows_rejected_only_when_carrying_flow() {
        let (g, dags) = diamond();
        let alloc = Allocation::new(vec![1.0], 1.0).unwrap();
        let routing = diamond_split(&dags, 0.4, 0.4);
        assert!(propagate(&g, &dags, &alloc, &routing).is_err());
        assert!(propagate_unchecked(&g, &dags, &alloc, &routing).is_ok());
        // Same broken row carries no flow at rate zero: accepted.
        let zero = Allocation::new_unchecked(vec![0.0], 1.0).unwrap();
        assert!(propagate(&g, &dags, &zero, &routing).is_ok());
        // But validate() flags it regardless of flow.
        assert!(routing.validate(&dags).is_err());
    }

    #[test]
    fn dimension_mismatches_rejected() {
        let (g, dags) = diamond();
        let alloc2 = Allocation::new(vec![0.5, 0.5], 1.0).unwrap();
        assert!(propagate(&g, &dags, &alloc2, &RoutingConfig::uniform(&dags)).is_err());
        let alloc = Allocation::new(vec![1.0], 1.0).unwrap();
        let short = RoutingConfig::from_weights(vec![vec![1.0]]);
        assert!(propagate(&g, &dags, &alloc, &short).is_err());
    }

    #[test]
    fn allocation_validation() {
        assert!(Allocation::new(vec![0.4, 0.7], 1.0).is_err());
        assert!(Allocation::new(vec![-0.1, 1.1], 1.0).is_err());
        assert!(Allocation::new_unchecked(vec![0.4, 0.7], 1.0).is_ok());
        let u = Allocation::uniform(4, 60.0).unwrap();
        assert!(u.rates().iter().all(|&r| r == 15.0));
    }
}
