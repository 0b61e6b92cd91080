//! Experiment driver: expands a config into (seed, algorithm) cells, runs
//! them on a small worker pool, and writes the per-cell trace, flow, and
//! summary artifacts.

use crate::config::{Algorithm, ExperimentConfig};
use crate::files::{self, SummaryRow};
use crate::instance::{self, BuiltInstance};
use crate::svg;
use anyhow::{Context, Result};
use cec_core::{
    gs_oma_solve, lyapunov_trace, omad_solve, omd_rt_solve, opt_baseline, pgd_routing_baseline,
    propagate, Allocation, AllocSolverConfig, CostKind, JointSolverConfig, RoutingSolverConfig,
    RoutingTraceRow,
};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

pub struct RunReport {
    pub summary: Vec<SummaryRow>,
    /// `(seed, algo, message)` per cell whose solver returned an error.
    pub failures: Vec<(u64, String, String)>,
}

impl RunReport {
    pub fn all_completed(&self) -> bool {
        self.failures.is_empty()
    }
}

struct CellResult {
    summary: SummaryRow,
    traces: Vec<PathBuf>,
}

fn routing_config(config: &ExperimentConfig) -> RoutingSolverConfig {
    RoutingSolverConfig {
        eta: config.budget.routing_eta,
        max_iters: config.budget.routing_iters,
        tol: config.budget.routing_tol,
        smoothness: None,
    }
}

fn alloc_config(config: &ExperimentConfig) -> AllocSolverConfig {
    AllocSolverConfig {
        delta: config.budget.delta,
        eta: config.budget.eta,
        max_iters: config.budget.outer_iters,
        tol: config.budget.outer_tol,
        routing: routing_config(config),
        ..AllocSolverConfig::default()
    }
}

fn joint_config(config: &ExperimentConfig) -> JointSolverConfig {
    JointSolverConfig {
        delta: config.budget.delta,
        eta: config.budget.eta,
        max_iters: config.budget.outer_iters,
        tol: config.budget.outer_tol,
        routing: routing_config(config),
        routing_eta: config.budget.routing_eta,
        ..JointSolverConfig::default()
    }
}

fn worker_count(cells: usize) -> usize {
    if let Ok(v) = std::env::var("CEC_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n > 0 {
                return n.min(cells.max(1));
            }
        }
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(cells.max(1))
}

/// Writes an `OptBaseline`'s aggregate flows with the usual link schema.
fn write_opt_links(path: &Path, built: &BuiltInstance, link_flow: &[f64]) -> Result<()> {
    let flows = cec_core::FlowState {
        node_throughput: vec![vec![0.0; built.instance.augmented.node_count()]],
        session_flow: vec![vec![0.0; built.instance.augmented.links().len()]],
        aggregate: link_flow.to_vec(),
    };
    files::write_link_flows(path, &built.instance.augmented, &flows)
}

fn run_cell(
    config: &ExperimentConfig,
    built: &BuiltInstance,
    seed: u64,
    algo: Algorithm,
    out: &Path,
) -> Result<CellResult> {
    let kind: CostKind = config.cost.to_kind();
    let augmented = &built.instance.augmented;
    let dags = &built.instance.dags;
    let stem = format!("seed{seed}_{}", algo.as_str());
    let trace_path = out.join(format!("trace_{stem}.csv"));
    let session_path = out.join(format!("flows_{stem}.csv"));
    let link_path = out.join(format!("links_{stem}.csv"));
    let start = Instant::now();
    let traces = vec![trace_path.clone()];

    let (final_value, iters) = match algo {
        Algorithm::OmdRt | Algorithm::Pgd => {
            let uniform = Allocation::uniform(built.oracle.sessions(), built.oracle.total_rate())?;
            let cfg = routing_config(config);
            let run = if algo == Algorithm::OmdRt {
                omd_rt_solve(augmented, dags, &uniform, None, kind, &cfg)?
            } else {
                pgd_routing_baseline(augmented, dags, &uniform, None, kind, &cfg)?
            };
            files::write_routing_trace(&trace_path, &run.trace)?;
            let flows = propagate(augmented, dags, &uniform, &run.routing)?;
            files::write_session_flows(&session_path, augmented, &flows)?;
            files::write_link_flows(&link_path, augmented, &flows)?;
            (run.final_cost, run.iterations)
        }
        Algorithm::Opt => {
            let uniform = Allocation::uniform(built.oracle.sessions(), built.oracle.total_rate())?;
            let run = opt_baseline(augmented, dags, &uniform, kind, Some(config.budget.opt_tol))?;
            let row = RoutingTraceRow {
                iter: run.sweeps,
                cost: run.cost,
                residual_spread: run.gap,
                phi_change: 0.0,
            };
            files::write_routing_trace(&trace_path, &[row])?;
            write_opt_links(&link_path, built, &run.link_flow)?;
            (run.cost, run.sweeps)
        }
        Algorithm::GsOma => {
            let run = gs_oma_solve(augmented, dags, &built.oracle, kind, &alloc_config(config))?;
            files::write_alloc_trace(&trace_path, &run.trace, built.oracle.sessions())?;
            let flows = propagate(augmented, dags, &run.allocation, &run.routing)?;
            files::write_session_flows(&session_path, augmented, &flows)?;
            files::write_link_flows(&link_path, augmented, &flows)?;
            (run.final_utility, run.iterations)
        }
        Algorithm::Omad => {
            let run = omad_solve(augmented, dags, &built.oracle, kind, &joint_config(config))?;
            let rows = lyapunov_trace(
                augmented,
                dags,
                &built.oracle,
                kind,
                &run.trace,
                f64::NEG_INFINITY,
                config.budget.lyapunov_stride,
                &routing_config(config),
            )?;
            files::write_joint_trace(&trace_path, algo.as_str(), &rows, &run.trace)?;
            let flows = propagate(augmented, dags, &run.allocation, &run.routing)?;
            files::write_session_flows(&session_path, augmented, &flows)?;
            files::write_link_flows(&link_path, augmented, &flows)?;
            (run.final_utility, run.iterations)
        }
    };
    let wall_ms = start.elapsed().as_millis() as u64;
    Ok(CellResult {
        summary: SummaryRow {
            seed,
            algo: algo.as_str().to_string(),
            final_value,
            iters,
            wall_ms,
        },
        traces,
    })
}

/// Runs every (seed, algorithm) cell of the config, writing artifacts under
/// `out`. Cells run on a worker pool (`CEC_THREADS` caps it) but results are
/// assembled in deterministic cell order.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    // Build each seed's instance once, up front, so parallel cells share it
    // and the topology artifact is written exactly once per seed.
    let mut built: Vec<(u64, BuiltInstance)> = Vec::new();
    for &seed in &config.run.seeds {
        let b = instance::build(config, seed)
            .with_context(|| format!("building the instance for seed {seed}"))?;
        files::save_text(
            &out.join(format!("topology_seed{seed}.txt")),
            &files::topology_to_string(&b.topology),
        )?;
        built.push((seed, b));
    }

    let cells: Vec<(usize, u64, Algorithm)> = built
        .iter()
        .enumerate()
        .flat_map(|(i, (seed, _))| {
            config.run.algorithms.iter().map(move |&a| (i, *seed, a))
        })
        .collect();

    let results: Mutex<Vec<Option<std::result::Result<CellResult, String>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let workers = worker_count(cells.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if idx >= cells.len() {
                    break;
                }
                let (inst_idx, seed, algo) = cells[idx];
                let outcome = run_cell(config, &built[inst_idx].1, seed, algo, out)
                    .map_err(|e| format!("{e:#}"));
                results.lock().expect("result store poisoned")[idx] = Some(outcome);
            });
        }
    });

    let mut summary = Vec::new();
    let mut failures = Vec::new();
    let mut trace_files = Vec::new();
    for (cell, slot) in cells.iter().zip(results.into_inner().expect("result store poisoned")) {
        let (_, seed, algo) = *cell;
        match slot.expect("worker skipped a cell") {
            Ok(res) => {
                summary.push(res.summary);
                trace_files.extend(res.traces);
            }
            Err(msg) => failures.push((seed, algo.as_str().to_string(), msg)),
        }
    }

    files::write_summary(&out.join("summary.csv"), &summary)?;
    if !failures.is_empty() {
        files::write_failures(&out.join("failures.csv"), &failures)?;
    }

    if config.run.svg {
        for path in &trace_files {
            let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let chart = svg::emit_svg(&bytes)
                .with_context(|| format!("rendering {}", path.display()))?;
            files::save_text(&path.with_extension("svg"), &chart)?;
        }
    }

    Ok(RunReport { summary, failures })
}
