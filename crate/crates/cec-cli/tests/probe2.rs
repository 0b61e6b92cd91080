//! Temporary diagnostics; not part of the test suite.

use cec_cli::config::ExperimentConfig;
use cec_cli::instance;
use cec_core::flow::{propagate, Allocation};
use cec_core::routing::{
    broadcast_marginals, omd_rt_solve, opt_baseline, routing_optimality_residual,
    RoutingSolverConfig,
};

#[test]
fn probe_long_horizon() {
    let manifest = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let path = manifest.join("../../configs/default.toml");
    let text = std::fs::read_to_string(path).unwrap();
    let config = ExperimentConfig::from_toml(&text).unwrap();
    let kind = config.cost.to_kind();
    let built = instance::build(&config, 1).unwrap();
    let inst = &built.instance;
    let alloc = Allocation::uniform(built.oracle.sessions(), built.oracle.total_rate()).unwrap();
    let opt = opt_baseline(&inst.augmented, &inst.dags, &alloc, kind, Some(1e-8))
        .unwrap()
        .cost;
    let cfg = RoutingSolverConfig { max_iters: 50_000, tol: 0.0, ..Default::default() };
    let t0 = std::time::Instant::now();
    let run = omd_rt_solve(&inst.augmented, &inst.dags, &alloc, None, kind, &cfg).unwrap();
    println!("50k iterations in {} ms", t0.elapsed().as_millis());
    for &k in &[100usize, 500, 1000, 1500, 2000, 3000, 5000, 10_000, 20_000, 50_000] {
        let row = &run.trace[k];
        println!(
            "k {:>6}: gap {:+.6e} spread {:.3e} phi_change {:.3e}",
            k,
            row.cost - opt,
            row.residual_spread,
            row.phi_change
        );
    }
    // Where does the sup-norm change dip below common tolerances?
    for &tol in &[1e-8f64, 1e-9, 1e-10, 1e-11, 1e-12] {
        let hit = run
            .trace
            .iter()
            .skip(1)
            .find(|r| r.phi_change < tol)
            .map(|r| (r.iter, r.cost - opt));
        println!("first phi_change < {:.0e}: {:?}", tol, hit);
    }
    let flows = propagate(&inst.augmented, &inst.dags, &alloc, &run.routing).unwrap();
    let marg =
        broadcast_marginals(&inst.augmented, &inst.dags, &flows, &run.routing, kind).unwrap();
    let res = routing_optimality_residual(&inst.dags, &flows, &marg, &run.routing);
    println!(
        "final: gap {:+.3e} max_spread {:.3e} max_kkt {:.3e}",
        run.final_cost - opt,
        res.max_spread,
        res.max_kkt_violation
    );
}
