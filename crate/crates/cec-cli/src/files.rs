//! Artifact formats: a plain-text topology format that round-trips
//! bit-exactly, and the CSV schemas for traces, flows, and run summaries.

use anyhow::{bail, Context, Result};
use cec_core::{
    Allocation, AugmentedGraph, FlowState, JointTraceRow, Link, LyapunovRow, RoutingTraceRow,
    Topology,
};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Shortest round-trip decimal form of a float (CSV payload).
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// 17-significant-digit scientific form; parses back to the same bits.
fn fmt_exact(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serializes a topology as commented plain text: `node <i> <capacity>`
/// lines, then one `<from> <to> <capacity>` line per directed link.
pub fn topology_to_string(topology: &Topology) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# name: {}", topology.name);
    let _ = writeln!(out, "# seed: {}", topology.seed);
    let _ = writeln!(out, "# nodes: {}", topology.node_count());
    let _ = writeln!(out, "# node <i> <compute capacity>");
    for (i, &c) in topology.node_capacities().iter().enumerate() {
        let _ = writeln!(out, "node {i} {}", fmt_exact(c));
    }
    let _ = writeln!(out, "# <from> <to> <link capacity>");
    for l in topology.links() {
        let _ = writeln!(out, "{} {} {}", l.from, l.to, fmt_exact(l.capacity));
    }
    out
}

/// Parses the [`topology_to_string`] format back; unknown comment lines
/// are ignored.
pub fn topology_from_str(text: &str) -> Result<Topology> {
    let mut name = String::new();
    let mut seed = 0u64;
    let mut nodes = None;
    let mut node_caps: Vec<(usize, f64)> = Vec::new();
    let mut links: Vec<Link> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("name:") {
                name = v.trim().to_string();
            } else if let Some(v) = comment.strip_prefix("seed:") {
                seed = v.trim().parse().with_context(|| format!("line {}: bad seed", lineno + 1))?;
            } else if let Some(v) = comment.strip_prefix("nodes:") {
                nodes =
                    Some(v.trim().parse::<usize>().with_context(|| format!("line {}: bad node count", lineno + 1))?);
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["node", i, c] => {
                let i: usize = i.parse().with_context(|| format!("line {}: bad node id", lineno + 1))?;
                let c: f64 = c.parse().with_context(|| format!("line {}: bad capacity", lineno + 1))?;
                node_caps.push((i, c));
            }
            [from, to, c] => {
                let from: usize = from.parse().with_context(|| format!("line {}: bad source id", lineno + 1))?;
                let to: usize = to.parse().with_context(|| format!("line {}: bad target id", lineno + 1))?;
                let capacity: f64 =
                    c.parse().with_context(|| format!("line {}: bad capacity", lineno + 1))?;
                links.push(Link { from, to, capacity });
            }
            _ => bail!("line {}: expected `node <i> <c>` or `<i> <j> <c>`", lineno + 1),
        }
    }
    let n = nodes.unwrap_or_else(|| {
        node_caps.iter().map(|&(i, _)| i + 1).chain(links.iter().map(|l| l.from.max(l.to) + 1)).max().unwrap_or(0)
    });
    if node_caps.len() != n {
        bail!("{} node capacity lines for {} nodes", node_caps.len(), n);
    }
    let mut caps = vec![0.0; n];
    for (i, c) in node_caps {
        if i >= n {
            bail!("node id {i} out of range 0..{n}");
        }
        caps[i] = c;
    }
    let mut topology = Topology::from_directed_links(n, links, caps, &name);
    topology.seed = seed;
    topology.validate()?;
    Ok(topology)
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `iter,D,residual_spread,phi_change` per accepted routing iteration.
pub fn write_routing_trace(path: &Path, trace: &[RoutingTraceRow]) -> Result<()> {
    let rows = trace
        .iter()
        .map(|r| {
            vec![
                r.iter.to_string(),
                fmt_f64(r.cost),
                fmt_f64(r.residual_spread),
                fmt_f64(r.phi_change),
            ]
        })
        .collect();
    write_csv(path, &["iter", "D", "residual_spread", "phi_change"], rows)
}

/// `iter,U,grad_spread,lambda_1..lambda_W` per outer allocation iteration.
pub fn write_alloc_trace(
    path: &Path,
    trace: &[cec_core::AllocTraceRow],
    sessions: usize,
) -> Result<()> {
    let mut header = vec!["iter".to_string(), "U".to_string(), "grad_spread".to_string()];
    for w in 1..=sessions {
        header.push(format!("lambda_{w}"));
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = trace
        .iter()
        .map(|r| {
            let mut row =
                vec![r.iter.to_string(), fmt_f64(r.utility), fmt_f64(r.grad_spread)];
            row.extend(r.rates.iter().map(|&x| fmt_f64(x)));
            row
        })
        .collect();
    write_csv(path, &header_refs, rows)
}

/// `iter,algo,U,V1,V2,V,event`: one row per Lyapunov sample of a joint
/// run; `event` marks topology switches.
pub fn write_joint_trace(
    path: &Path,
    algo: &str,
    rows: &[LyapunovRow],
    trace: &[JointTraceRow],
) -> Result<()> {
    let switch_iters: Vec<usize> =
        trace.iter().filter(|r| r.topology_switch).map(|r| r.iter).collect();
    let data = rows
        .iter()
        .map(|r| {
            let event =
                if switch_iters.contains(&r.iter) { "topology_switch" } else { "" };
            vec![
                r.iter.to_string(),
                algo.to_string(),
                fmt_f64(r.utility),
                fmt_f64(r.v1),
                fmt_f64(r.v2),
                fmt_f64(r.v),
                event.to_string(),
            ]
        })
        .collect();
    write_csv(path, &["iter", "algo", "U", "V1", "V2", "V", "event"], data)
}

/// `session,i,j,f_ij`: per-session flow on every augmented link that
/// carries any.
pub fn write_session_flows(
    path: &Path,
    augmented: &AugmentedGraph,
    flows: &FlowState,
) -> Result<()> {
    let mut rows = Vec::new();
    for w in 0..flows.sessions() {
        for (l, link) in augmented.links().iter().enumerate() {
            let f = flows.session_flow[w][l];
            if f != 0.0 {
                rows.push(vec![
                    w.to_string(),
                    augmented.node_label(link.from),
                    augmented.node_label(link.to),
                    fmt_f64(f),
                ]);
            }
        }
    }
    write_csv(path, &["session", "i", "j", "f_ij"], rows)
}

/// `link,i,j,F_ij`: aggregate flow per augmented link.
pub fn write_link_flows(
    path: &Path,
    augmented: &AugmentedGraph,
    flows: &FlowState,
) -> Result<()> {
    let rows = augmented
        .links()
        .iter()
        .enumerate()
        .map(|(l, link)| {
            vec![
                l.to_string(),
                augmented.node_label(link.from),
                augmented.node_label(link.to),
                fmt_f64(flows.aggregate[l]),
            ]
        })
        .collect();
    write_csv(path, &["link", "i", "j", "F_ij"], rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub seed: u64,
    pub algo: String,
    pub final_value: f64,
    pub iters: usize,
    pub wall_ms: u64,
}

/// `seed,algo,final_value,iters,wall_ms`, sorted by (seed, algo).
pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut sorted: Vec<&SummaryRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (a.seed, &a.algo).cmp(&(b.seed, &b.algo)));
    let data = sorted
        .into_iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                r.algo.clone(),
                fmt_f64(r.final_value),
                r.iters.to_string(),
                r.wall_ms.to_string(),
            ]
        })
        .collect();
    write_csv(path, &["seed", "algo", "final_value", "iters", "wall_ms"], data)
}

/// `seed,algo,error`: one row per failed cell.
pub fn write_failures(path: &Path, rows: &[(u64, String, String)]) -> Result<()> {
    let data = rows
        .iter()
        .map(|(seed, algo, msg)| vec![seed.to_string(), algo.clone(), msg.clone()])
        .collect();
    write_csv(path, &["seed", "algo", "error"], data)
}

pub fn save_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Final flows of a routing solution, for the flow CSV artifacts.
pub fn final_flows(
    augmented: &AugmentedGraph,
    dags: &[cec_core::SessionDag],
    allocation: &Allocation,
    routing: &cec_core::RoutingConfig,
) -> Result<FlowState> {
    Ok(cec_core::propagate(augmented, dags, allocation, routing)?)
}
