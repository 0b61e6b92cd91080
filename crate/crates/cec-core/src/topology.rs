//! Physical topologies, capacity sampling, the augmented graph with virtual
//! source/destination nodes, and per-session acyclic routing supports.
//!
//! Node id scheme in the augmented graph: physical nodes keep their ids
//! `0..n`, the virtual source `S` is `n`, and the virtual destination of
//! session `w` is `n + 1 + w`.

use crate::error::{Error, Result};
use crate::rng;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

pub type NodeId = usize;
pub type LinkId = usize;

/// Directed link with capacity in flow-units/sec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub from: NodeId,
    pub to: NodeId,
    pub capacity: f64,
}

/// Physical network: directed links over `0..nodes`, plus a per-node
/// computation capacity that becomes the capacity of the virtual
/// compute link after augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: usize,
    links: Vec<Link>,
    node_capacity: Vec<f64>,
    pub name: String,
    pub seed: u64,
}

impl Topology {
    /// Builds a topology from undirected edges; both directions get the
    /// same default capacity.
    pub fn from_undirected_edges(
        nodes: usize,
        edges: &[(NodeId, NodeId)],
        capacity: f64,
        name: &str,
    ) -> Self {
        let mut links = Vec::with_capacity(edges.len() * 2);
        for &(a, b) in edges {
            links.push(Link { from: a, to: b, capacity });
            links.push(Link { from: b, to: a, capacity });
        }
        links.sort_by_key(|l| (l.from, l.to));
        Topology {
            nodes,
            links,
            node_capacity: vec![capacity; nodes],
            name: name.to_string(),
            seed: 0,
        }
    }

    /// Builds a topology from explicit directed links (not deduplicated).
    pub fn from_directed_links(
        nodes: usize,
        mut links: Vec<Link>,
        node_capacity: Vec<f64>,
        name: &str,
    ) -> Self {
        links.sort_by_key(|l| (l.from, l.to));
        Topology { nodes, links, node_capacity, name: name.to_string(), seed: 0 }
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    /// Number of directed links.
    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Number of distinct undirected node pairs with at least one link.
    pub fn edge_count(&self) -> usize {
        let mut pairs: Vec<(NodeId, NodeId)> = self
            .links
            .iter()
            .map(|l| if l.from < l.to { (l.from, l.to) } else { (l.to, l.from) })
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node_capacity(&self, node: NodeId) -> f64 {
        self.node_capacity[node]
    }

    pub fn node_capacities(&self) -> &[f64] {
        &self.node_capacity
    }

    pub fn set_node_capacities(&mut self, caps: Vec<f64>) {
        assert_eq!(caps.len(), self.nodes);
        self.node_capacity = caps;
    }

    /// Checks structural invariants: no self-loops, no duplicate links,
    /// positive capacities everywhere, strong connectivity.
    pub fn validate(&self) -> Result<()> {
        for l in &self.links {
            if l.from >= self.nodes || l.to >= self.nodes {
                return Err(Error::InvalidInput(format!(
                    "link ({},{}) out of range for {} nodes",
                    l.from, l.to, self.nodes
                )));
            }
            if l.from == l.to {
                return Err(Error::InvalidInput(format!("self-loop at node {}", l.from)));
            }
            if !(l.capacity > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "nonpositive capacity on link ({},{})",
                    l.from, l.to
                )));
            }
        }
        for w in self.links.windows(2) {
            if w[0].from == w[1].from && w[0].to == w[1].to {
                return Err(Error::InvalidInput(format!(
                    "duplicate link ({},{})",
                    w[0].from, w[0].to
                )));
            }
        }
        for &c in &self.node_capacity {
            if !(c > 0.0) {
                return Err(Error::InvalidInput("nonpositive node capacity".into()));
            }
        }
        if !self.is_strongly_connected() {
            return Err(Error::InvalidInput("topology is not strongly connected".into()));
        }
        Ok(())
    }

    pub fn is_strongly_connected(&self) -> bool {
        if self.nodes == 0 {
            return false;
        }
        let mut fwd = vec![Vec::new(); self.nodes];
        let mut bwd = vec![Vec::new(); self.nodes];
        for l in &self.links {
            fwd[l.from].push(l.to);
            bwd[l.to].push(l.from);
        }
        reaches_all(&fwd, 0) && reaches_all(&bwd, 0)
    }
}

fn reaches_all(adj: &[Vec<NodeId>], start: NodeId) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut count = 1;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                stack.push(j);
            }
        }
    }
    count == adj.len()
}

pub const DEFAULT_ER_ATTEMPTS: u32 = 1000;

/// Samples Erdos-Renyi graphs (each undirected pair independently with
/// probability `p`, both directions added) until one is strongly connected.
/// Deterministic for a fixed seed. Capacities default to 1.0 until
/// [`sample_capacities`] replaces them.
pub fn generate_connected_er(n: usize, p: f64, seed: u64) -> Result<Topology> {
    generate_connected_er_budget(n, p, seed, DEFAULT_ER_ATTEMPTS)
}

pub fn generate_connected_er_budget(n: usize, p: f64, seed: u64, attempts: u32) -> Result<Topology> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 nodes, got {n}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidInput(format!("edge probability must be in (0,1], got {p}")));
    }
    let mut r = rng::seeded(seed);
    for attempt in 0..attempts {
        let mut edges = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                if rng::uniform(&mut r) < p {
                    edges.push((a, b));
                }
            }
        }
        let mut topo =
            Topology::from_undirected_edges(n, &edges, 1.0, &format!("er-{n}-{p}"));
        topo.seed = seed;
        if topo.is_strongly_connected() {
            let _ = attempt;
            return Ok(topo);
        }
    }
    Err(Error::ConnectivityUnreachable { attempts })
}

/// Catalog of fixed reference networks. Node and undirected-link counts:
/// Abilene 11/14, BalancedTree 14/23, Fog 15/30, Geant 22/33.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedTopology {
    Abilene,
    BalancedTree,
    Fog,
    Geant,
}

impl NamedTopology {
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "abilene" => Ok(NamedTopology::Abilene),
            "balanced_tree" | "balanced-tree" | "balancedtree" => Ok(NamedTopology::BalancedTree),
            "fog" => Ok(NamedTopology::Fog),
            "geant" => Ok(NamedTopology::Geant),
            other => Err(Error::InvalidInput(format!("unknown topology name: {other}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NamedTopology::Abilene => "abilene",
            NamedTopology::BalancedTree => "balanced_tree",
            NamedTopology::Fog => "fog",
            NamedTopology::Geant => "geant",
        }
    }

    /// Default mean capacity attached to every link of the catalog entry.
    pub fn default_mean_capacity(&self) -> f64 {
        match self {
            NamedTopology::Abilene => 15.0,
            _ => 10.0,
        }
    }
}

/// Internet2 Abilene backbone: Seattle, Sunnyvale, Los Angeles, Denver,
/// Kansas City, Houston, Chicago, Indianapolis, Atlanta, Washington DC,
/// New York.
const ABILENE_EDGES: [(NodeId, NodeId); 14] = [
    (0, 1),
    (0, 3),
    (1, 2),
    (1, 3),
    (2, 5),
    (3, 4),
    (4, 5),
    (4, 7),
    (5, 8),
    (6, 7),
    (6, 10),
    (7, 8),
    (8, 9),
    (9, 10),
];

/// Complete binary tree on 14 nodes plus chains linking siblings on each
/// level (1 + 3 + 6 cross links).
fn balanced_tree_edges() -> Vec<(NodeId, NodeId)> {
    let mut edges: Vec<(NodeId, NodeId)> = (1..14).map(|i| ((i - 1) / 2, i)).collect();
    for level in [&[1usize, 2][..], &[3, 4, 5, 6], &[7, 8, 9, 10, 11, 12, 13]] {
        for pair in level.windows(2) {
            edges.push((pair[0], pair[1]));
        }
    }
    edges
}

/// Four-layer fog hierarchy: cloud 0, gateways 1-2, fog nodes 3-6,
/// edge devices 7-14, with redundant cross links at each layer.
const FOG_EDGES: [(NodeId, NodeId); 30] = [
    (0, 1),
    (0, 2),
    (1, 2),
    (1, 3),
    (1, 4),
    (1, 5),
    (1, 6),
    (2, 3),
    (2, 4),
    (2, 5),
    (2, 6),
    (3, 4),
    (4, 5),
    (5, 6),
    (6, 3),
    (3, 7),
    (3, 8),
    (4, 9),
    (4, 10),
    (5, 11),
    (5, 12),
    (6, 13),
    (6, 14),
    (7, 8),
    (9, 10),
    (11, 12),
    (13, 14),
    (3, 9),
    (4, 11),
    (5, 13),
];

/// European research backbone with 22 points of presence (at, be, ch, cz,
/// de, es, fr, gr, hr, hu, ie, il, it, lu, nl, ny, pl, pt, se, si, sk, uk in
/// index order); the link set approximates the public map while matching
/// the catalog's fixed counts.
const GEANT_EDGES: [(NodeId, NodeId); 33] = [
    (0, 3),
    (0, 4),
    (0, 9),
    (0, 19),
    (1, 4),
    (1, 6),
    (1, 14),
    (2, 4),
    (2, 6),
    (2, 12),
    (3, 4),
    (3, 16),
    (3, 20),
    (4, 7),
    (4, 12),
    (4, 13),
    (4, 14),
    (4, 15),
    (4, 18),
    (5, 6),
    (5, 12),
    (5, 17),
    (6, 13),
    (6, 21),
    (7, 12),
    (8, 9),
    (8, 19),
    (9, 20),
    (10, 21),
    (11, 12),
    (14, 21),
    (15, 21),
    (16, 18),
];

pub fn load_named_topology(name: NamedTopology) -> Topology {
    let cap = name.default_mean_capacity();
    let edges: Vec<(NodeId, NodeId)> = match name {
        NamedTopology::Abilene => ABILENE_EDGES.to_vec(),
        NamedTopology::BalancedTree => balanced_tree_edges(),
        NamedTopology::Fog => FOG_EDGES.to_vec(),
        NamedTopology::Geant => GEANT_EDGES.to_vec(),
    };
    let nodes = 1 + edges.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(0);
    Topology::from_undirected_edges(nodes, &edges, cap, name.name())
}

/// Redraws every link and node capacity as Uniform(0, 2*mean) floored at
/// 0.05*mean; the floor keeps M/M/1 costs defined for small positive flows.
/// Link draws happen in stored link order, then node draws, so results are
/// deterministic per seed.
pub fn sample_capacities(topology: &Topology, mean: f64, seed: u64) -> Result<Topology> {
    if !(mean > 0.0) {
        return Err(Error::InvalidInput(format!("mean capacity must be positive, got {mean}")));
    }
    let floor = 0.05 * mean;
    let mut r = rng::seeded(seed);
    let mut out = topology.clone();
    for l in &mut out.links {
        l.capacity = rng::uniform_in(&mut r, 0.0, 2.0 * mean).max(floor);
    }
    for c in &mut out.node_capacity {
        *c = rng::uniform_in(&mut r, 0.0, 2.0 * mean).max(floor);
    }
    out.seed = seed;
    Ok(out)
}

/// Assignment of one model version to every node.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPlacement {
    version_of: Vec<usize>,
    sessions: usize,
}

impl ModelPlacement {
    /// `version_of[node]` in `0..sessions`; every version must be hosted
    /// by at least one node.
    pub fn new(version_of: Vec<usize>, sessions: usize) -> Result<Self> {
        if sessions == 0 {
            return Err(Error::InvalidInput("need at least one version".into()));
        }
        let mut hosted = vec![false; sessions];
        for (node, &w) in version_of.iter().enumerate() {
            if w >= sessions {
                return Err(Error::InvalidInput(format!(
                    "node {node} hosts version {w} out of range 0..{sessions}"
                )));
            }
            hosted[w] = true;
        }
        if let Some(w) = hosted.iter().position(|h| !h) {
            return Err(Error::InvalidInput(format!("version {w} is hosted by no node")));
        }
        Ok(ModelPlacement { version_of, sessions })
    }

    pub fn sessions(&self) -> usize {
        self.sessions
    }

    pub fn node_count(&self) -> usize {
        self.version_of.len()
    }

    pub fn version_of(&self, node: NodeId) -> usize {
        self.version_of[node]
    }

    pub fn hosts(&self, session: usize) -> Vec<NodeId> {
        (0..self.version_of.len()).filter(|&i| self.version_of[i] == session).collect()
    }
}

/// Shuffles the nodes and deals versions round-robin, so host counts
/// differ by at most one. Deterministic per seed.
pub fn random_balanced_placement(nodes: usize, sessions: usize, seed: u64) -> Result<ModelPlacement> {
    if nodes < sessions {
        return Err(Error::InvalidInput(format!(
            "cannot host {sessions} versions on {nodes} nodes"
        )));
    }
    let mut order: Vec<NodeId> = (0..nodes).collect();
    let mut r = rng::seeded(seed);
    rng::shuffle(&mut r, &mut order);
    let mut version_of = vec![0usize; nodes];
    for (pos, &node) in order.iter().enumerate() {
        version_of[node] = pos % sessions;
    }
    ModelPlacement::new(version_of, sessions)
}

/// Physical topology plus virtual source `S` and per-session virtual
/// destinations `D_w`. Computation at node `i` hosting version `w` is
/// modeled as the virtual link `(i, D_w)` whose capacity is `i`'s
/// computation capacity; controller ingress is modeled as links `(S, i)`
/// for the entry nodes, with the entry node's computation capacity.
#[derive(Debug, Clone)]
pub struct AugmentedGraph {
    physical_nodes: usize,
    sessions: usize,
    links: Vec<Link>,
    placement: ModelPlacement,
    entry: Vec<NodeId>,
    out: Vec<Vec<LinkId>>,
    incoming: Vec<Vec<LinkId>>,
}

impl AugmentedGraph {
    /// Assembles an augmented graph from an explicit link list (physical
    /// and virtual alike, using this type's node id scheme). Intended for
    /// hand-built fixtures; [`augment`] is the production path.
    pub fn from_links(
        physical_nodes: usize,
        placement: ModelPlacement,
        entry: Vec<NodeId>,
        mut links: Vec<Link>,
    ) -> Result<Self> {
        let sessions = placement.sessions();
        if placement.node_count() != physical_nodes {
            return Err(Error::InvalidInput("placement does not cover all nodes".into()));
        }
        if entry.is_empty() {
            return Err(Error::InvalidInput("entry node set is empty".into()));
        }
        let total = physical_nodes + 1 + sessions;
        let source = physical_nodes;
        links.sort_by_key(|l| (l.from, l.to));
        let g = AugmentedGraph {
            physical_nodes,
            sessions,
            out: build_adjacency(&links, total, true),
            incoming: build_adjacency(&links, total, false),
            links,
            placement,
            entry,
        };
        for (id, l) in g.links.iter().enumerate() {
            if l.from >= total || l.to >= total {
                return Err(Error::InvalidInput(format!(
                    "link ({},{}) out of node range",
                    l.from, l.to
                )));
            }
            if !(l.capacity > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "nonpositive capacity on link ({},{})",
                    l.from, l.to
                )));
            }
            if l.to == source {
                return Err(Error::InvalidInput("virtual source has an incoming link".into()));
            }
            if l.from == source && !g.entry.contains(&l.to) {
                return Err(Error::InvalidInput(format!(
                    "source link to non-entry node {}",
                    l.to
                )));
            }
            if let Some(w) = g.session_of_dest(l.from) {
                return Err(Error::InvalidInput(format!(
                    "virtual destination of session {w} has an outgoing link"
                )));
            }
            if let Some(w) = g.session_of_dest(l.to) {
                if l.from >= physical_nodes || g.placement.version_of(l.from) != w {
                    return Err(Error::InvalidInput(format!(
                        "compute link {id} into destination {w} from a non-host"
                    )));
                }
            }
        }
        for w in 0..sessions {
            for host in g.placement.hosts(w) {
                let n = g.out[host]
                    .iter()
                    .filter(|&&l| g.links[l].to == g.dest(w))
                    .count();
                if n != 1 {
                    return Err(Error::InvalidInput(format!(
                        "host {host} has {n} compute links for session {w}, expected 1"
                    )));
                }
            }
        }
        Ok(g)
    }

    pub fn physical_node_count(&self) -> usize {
        self.physical_nodes
    }

    pub fn sessions(&self) -> usize {
        self.sessions
    }

    pub fn node_count(&self) -> usize {
        self.physical_nodes + 1 + self.sessions
    }

    /// Virtual source node id.
    pub fn source(&self) -> NodeId {
        self.physical_nodes
    }

    /// Virtual destination node id of a session.
    pub fn dest(&self, session: usize) -> NodeId {
        self.physical_nodes + 1 + session
    }

    /// Session index if `node` is a virtual destination.
    pub fn session_of_dest(&self, node: NodeId) -> Option<usize> {
        (node > self.physical_nodes && node < self.node_count())
            .then(|| node - self.physical_nodes - 1)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id]
    }

    pub fn out_links(&self, node: NodeId) -> &[LinkId] {
        &self.out[node]
    }

    pub fn in_links(&self, node: NodeId) -> &[LinkId] {
        &self.incoming[node]
    }

    pub fn placement(&self) -> &ModelPlacement {
        &self.placement
    }

    pub fn entry_nodes(&self) -> &[NodeId] {
        &self.entry
    }

    pub fn is_physical_link(&self, id: LinkId) -> bool {
        let l = &self.links[id];
        l.from < self.physical_nodes && l.to < self.physical_nodes
    }

    /// Human-readable node label: physical index, `S`, or `D<w>` (1-based).
    pub fn node_label(&self, node: NodeId) -> String {
        if node < self.physical_nodes {
            node.to_string()
        } else if node == self.source() {
            "S".to_string()
        } else {
            format!("D{}", node - self.physical_nodes)
        }
    }
}

fn build_adjacency(links: &[Link], nodes: usize, outgoing: bool) -> Vec<Vec<LinkId>> {
    let mut adj = vec![Vec::new(); nodes];
    for (id, l) in links.iter().enumerate() {
        adj[if outgoing { l.from } else { l.to }].push(id);
    }
    adj
}

/// Adds the virtual source, destinations, entry links `(S, i)` for the
/// given entry nodes, and one compute link `(i, D_w)` per node (into its
/// hosted version's destination). Virtual link capacities come from the
/// topology's node capacities. Physical links are unchanged.
pub fn augment(
    topology: &Topology,
    placement: &ModelPlacement,
    entry_nodes: &[NodeId],
) -> Result<AugmentedGraph> {
    let n = topology.node_count();
    if placement.node_count() != n {
        return Err(Error::InvalidInput(format!(
            "placement covers {} nodes, topology has {n}",
            placement.node_count()
        )));
    }
    if entry_nodes.is_empty() {
        return Err(Error::InvalidInput("entry node set is empty".into()));
    }
    for &e in entry_nodes {
        if e >= n {
            return Err(Error::InvalidInput(format!("entry node {e} not in topology")));
        }
    }
    let source = n;
    let mut links = topology.links().to_vec();
    let mut entry: Vec<NodeId> = entry_nodes.to_vec();
    entry.sort_unstable();
    entry.dedup();
    for &i in &entry {
        links.push(Link { from: source, to: i, capacity: topology.node_capacity(i) });
    }
    for i in 0..n {
        let w = placement.version_of(i);
        links.push(Link { from: i, to: n + 1 + w, capacity: topology.node_capacity(i) });
    }
    AugmentedGraph::from_links(n, placement.clone(), entry, links)
}

/// Acyclic routing support of one session: the links a router may use and
/// the order in which flow propagates over them.
#[derive(Debug, Clone)]
pub struct SessionDag {
    pub session: usize,
    /// Per augmented node: BFS hop count to the session destination over
    /// usable links (relay-prohibited links excluded), `None` if the node
    /// cannot reach it.
    pub hop: Vec<Option<u32>>,
    /// Reached nodes in decreasing hop order (ties by id); a valid
    /// topological order of the allowed links.
    pub order: Vec<NodeId>,
    /// Allowed link ids, grouped per `order` node.
    pub allowed: Vec<LinkId>,
    rows: Vec<(NodeId, usize, usize)>,
    row_of: Vec<Option<usize>>,
}

impl SessionDag {
    /// Range into [`Self::allowed`] holding `node`'s out-links.
    pub fn row(&self, node: NodeId) -> Option<(usize, usize)> {
        self.row_of[node].map(|i| (self.rows[i].1, self.rows[i].2))
    }

    /// Nodes with at least one allowed out-link, with their ranges.
    pub fn rows(&self) -> &[(NodeId, usize, usize)] {
        &self.rows
    }

    pub fn out_degree(&self, node: NodeId) -> usize {
        self.row(node).map_or(0, |(s, e)| e - s)
    }

    /// Longest allowed path length; every link decreases the hop count by
    /// at least one, so this bounds the marginal-cost broadcast rounds.
    pub fn longest_path_len(&self) -> usize {
        self.hop.iter().flatten().copied().max().unwrap_or(0) as usize
    }
}

/// Derives the session's allowed links: a link qualifies if it moves
/// strictly closer to the destination in BFS hops and, for physical links,
/// joins nodes hosting different versions (a node never relays to a peer
/// with the same version). Hop counts are measured on that same usable
/// subgraph, which guarantees every reached node keeps a path to the
/// destination inside the allowed set.
pub fn build_session_dag(augmented: &AugmentedGraph, session: usize) -> Result<SessionDag> {
    if session >= augmented.sessions() {
        return Err(Error::InvalidInput(format!("session {session} out of range")));
    }
    let total = augmented.node_count();
    let dest = augmented.dest(session);
    let usable = |id: LinkId| -> bool {
        let l = augmented.link(id);
        if let Some(w) = augmented.session_of_dest(l.to) {
            return w == session;
        }
        if l.from == augmented.source() {
            return true;
        }
        augmented.placement().version_of(l.from) != augmented.placement().version_of(l.to)
    };

    let mut hop: Vec<Option<u32>> = vec![None; total];
    hop[dest] = Some(0);
    let mut queue = alloc::collections::VecDeque::new();
    queue.push_back(dest);
    while let Some(j) = queue.pop_front() {
        let next = hop[j].unwrap() + 1;
        for &id in augmented.in_links(j) {
            if !usable(id) {
                continue;
            }
            let i = augmented.link(id).from;
            if hop[i].is_none() {
                hop[i] = Some(next);
                queue.push_back(i);
            }
        }
    }
    if hop[augmented.source()].is_none() {
        return Err(Error::UnreachableDestination { session });
    }

    let mut order: Vec<NodeId> = (0..total).filter(|&i| hop[i].is_some()).collect();
    order.sort_by_key(|&i| (core::cmp::Reverse(hop[i].unwrap()), i));

    let mut allowed = Vec::new();
    let mut rows = Vec::new();
    let mut row_of = vec![None; total];
    for &i in &order {
        if i == dest {
            continue;
        }
        let start = allowed.len();
        for &id in augmented.out_links(i) {
            let j = augmented.link(id).to;
            if usable(id) && hop[j].is_some_and(|hj| hj < hop[i].unwrap()) {
                allowed.push(id);
            }
        }
        if allowed.len() > start {
            row_of[i] = Some(rows.len());
            rows.push((i, start, allowed.len()));
        }
    }
    Ok(SessionDag { session, hop, order, allowed, rows, row_of })
}

/// An augmented graph together with every session's routing support.
#[derive(Debug, Clone)]
pub struct Instance {
    pub augmented: AugmentedGraph,
    pub dags: Vec<SessionDag>,
}

/// Augments the topology and builds all session supports. Entry nodes
/// default to the hosts of the first version (the controller connects to
/// the devices running the smallest model).
pub fn build_instance(
    topology: &Topology,
    placement: &ModelPlacement,
    entry_nodes: Option<&[NodeId]>,
) -> Result<Instance> {
    let default_entry;
    let entry = match entry_nodes {
        Some(e) => e,
        None => {
            default_entry = placement.hosts(0);
            &default_entry
        }
    };
    let augmented = augment(topology, placement, entry)?;
    let dags = (0..placement.sessions())
        .map(|w| build_session_dag(&augmented, w))
        .collect::<Result<Vec<_>>>()?;
    Ok(Instance { augmented, dags })
}
