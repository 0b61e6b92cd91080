//! Invariant audit for a config: rebuilds each seed's instance and checks
//! conservation, marginal correctness, descent monotonicity, baseline
//! ordering, and utility assumptions, printing one PASS/FAIL line each.

use crate::config::ExperimentConfig;
use crate::instance::{self, BuiltInstance};
use anyhow::Result;
use cec_core::{
    broadcast_marginals, check_conservation, omd_rt_solve, opt_baseline, propagate,
    propagate_unchecked, total_cost, Allocation, CostKind, RoutingConfig, RoutingSolverConfig,
};
use std::io::Write;

pub struct CheckOutcome {
    pub passed: usize,
    pub failed: usize,
}

impl CheckOutcome {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

struct Reporter<'a> {
    out: &'a mut dyn Write,
    seed: u64,
    passed: usize,
    failed: usize,
}

impl Reporter<'_> {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        let verdict = if ok { "PASS" } else { "FAIL" };
        let _ = writeln!(self.out, "{verdict} seed {} {name}: {detail}", self.seed);
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
    }
}

/// Runs the audit for every seed in the config, writing check lines to
/// `out`. Returns the pass/fail tally; solver errors become failed checks
/// rather than early exits.
pub fn verify(config: &ExperimentConfig, out: &mut dyn Write) -> Result<CheckOutcome> {
    let mut passed = 0;
    let mut failed = 0;
    for &seed in &config.run.seeds {
        let mut r = Reporter { out, seed, passed: 0, failed: 0 };
        match instance::build(config, seed) {
            Ok(built) => verify_seed(config, &built, &mut r),
            Err(e) => r.check("instance_build", false, format!("{e:#}")),
        }
        passed += r.passed;
        failed += r.failed;
    }
    Ok(CheckOutcome { passed, failed })
}

fn verify_seed(config: &ExperimentConfig, built: &BuiltInstance, r: &mut Reporter<'_>) {
    let kind: CostKind = config.cost.to_kind();
    let augmented = &built.instance.augmented;
    let dags = &built.instance.dags;
    let uniform = match Allocation::uniform(built.oracle.sessions(), built.oracle.total_rate()) {
        Ok(a) => a,
        Err(e) => {
            r.check("uniform_allocation", false, e.to_string());
            return;
        }
    };
    let routing = RoutingConfig::uniform(dags);

    // Flow conservation at the uniform operating point.
    match propagate(augmented, dags, &uniform, &routing) {
        Ok(flows) => {
            let report = check_conservation(augmented, &uniform, &flows);
            let worst = report.max_node_residual.max(report.max_dest_residual);
            r.check("conservation", worst < 1e-9, format!("max residual {worst:.3e}"));

            // Broadcast marginals against central differences on a few
            // supported coordinates.
            match (
                total_cost(augmented, &flows, kind),
                broadcast_marginals(augmented, dags, &flows, &routing, kind),
            ) {
                (Ok(cost0), Ok(marginals)) => {
                    let mut worst_rel = 0.0f64;
                    let mut tested = 0;
                    'outer: for (w, dag) in dags.iter().enumerate() {
                        for &(node, s, e) in dag.rows() {
                            let t = flows.node_throughput[w][node];
                            if t < 1e-3 {
                                continue;
                            }
                            for k in s..e {
                                if tested >= 3 {
                                    break 'outer;
                                }
                                let analytic = t * marginals.delta[w][k];
                                if analytic.abs() < 1e-8 {
                                    continue;
                                }
                                let h = (5e-9 * (1.0 + cost0) / (1.0 + analytic.abs()))
                                    .clamp(1e-7, 1e-4);
                                let cost_at = |bump: f64| -> Option<f64> {
                                    let mut rc = routing.clone();
                                    rc.weights_mut(w)[k] += bump;
                                    let f =
                                        propagate_unchecked(augmented, dags, &uniform, &rc).ok()?;
                                    total_cost(augmented, &f, kind).ok()
                                };
                                if let (Some(up), Some(down)) = (cost_at(h), cost_at(-h)) {
                                    let fd = (up - down) / (2.0 * h);
                                    let rel = (fd - analytic).abs()
                                        / analytic.abs().max(fd.abs()).max(1e-12);
                                    worst_rel = worst_rel.max(rel);
                                    tested += 1;
                                }
                            }
                        }
                    }
                    r.check(
                        "marginal_finite_difference",
                        tested > 0 && worst_rel < 1e-5,
                        format!("{tested} coordinates, worst relative error {worst_rel:.3e}"),
                    );
                }
                (Err(e), _) | (_, Err(e)) => {
                    r.check("marginal_finite_difference", false, e.to_string())
                }
            }
        }
        Err(e) => r.check("conservation", false, e.to_string()),
    }

    // Descent trace must never increase, and the centralized baseline must
    // lower-bound it.
    let cfg = RoutingSolverConfig {
        eta: config.budget.routing_eta,
        max_iters: config.budget.routing_iters.min(200),
        tol: config.budget.routing_tol,
        smoothness: None,
    };
    match omd_rt_solve(augmented, dags, &uniform, None, kind, &cfg) {
        Ok(run) => {
            let monotone = run
                .trace
                .windows(2)
                .all(|w| w[1].cost <= w[0].cost + 1e-10 * (1.0 + w[0].cost.abs()));
            r.check(
                "descent_monotone",
                monotone,
                format!("{} iterations, final cost {:.6}", run.iterations, run.final_cost),
            );
            match opt_baseline(augmented, dags, &uniform, kind, Some(config.budget.opt_tol)) {
                Ok(opt) => r.check(
                    "baseline_lower_bounds_descent",
                    opt.cost <= run.final_cost + 1e-6 * (1.0 + opt.cost.abs()),
                    format!("baseline {:.6} vs descent {:.6}", opt.cost, run.final_cost),
                ),
                Err(e) => r.check("baseline_lower_bounds_descent", false, e.to_string()),
            }
        }
        Err(e) => r.check("descent_monotone", false, e.to_string()),
    }

    // Utility oracle shape assumptions on a moderate grid.
    match built.oracle.check_assumptions(201) {
        Ok(report) => r.check(
            "utility_assumptions",
            report.monotone && report.concave,
            format!("monotone {}, concave {}", report.monotone, report.concave),
        ),
        Err(e) => r.check("utility_assumptions", false, e.to_string()),
    }
}
