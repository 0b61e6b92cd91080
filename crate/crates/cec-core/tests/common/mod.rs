//! Shared fixtures for the integration suites: seeded random instances,
//! random feasible points, and a least-squares slope helper.

#![allow(dead_code)]

use cec_core::{
    build_instance, generate_connected_er, random_balanced_placement, sample_capacities,
    Allocation, Instance, RoutingConfig, SessionDag, UtilityFamily, UtilityOracle,
};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(r: &mut ChaCha8Rng) -> f64 {
    (r.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn uniform_in(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(r)
}

/// Connected ER instance with sampled capacities; the placement seed is
/// bumped until every session can reach its destination.
pub fn er_instance(n: usize, p: f64, seed: u64, sessions: usize, mean_cap: f64) -> Instance {
    let topo = generate_connected_er(n, p, seed).unwrap();
    let topo = sample_capacities(&topo, mean_cap, seed ^ 0x9e3779b97f4a7c15).unwrap();
    for bump in 0..32 {
        let placement =
            random_balanced_placement(n, sessions, seed.wrapping_add(bump * 0x100)).unwrap();
        if let Ok(inst) = build_instance(&topo, &placement, None) {
            return inst;
        }
    }
    panic!("no reachable placement found for seed {seed}");
}

/// Random interior allocation: positive shares scaled onto the plane,
/// each at least `floor`.
pub fn random_rates(r: &mut ChaCha8Rng, sessions: usize, total: f64, floor: f64) -> Vec<f64> {
    let shares: Vec<f64> = (0..sessions).map(|_| uniform_in(r, 0.05, 1.0)).collect();
    let sum: f64 = shares.iter().sum();
    let spend = total - floor * sessions as f64;
    shares.iter().map(|s| floor + spend * s / sum).collect()
}

pub fn random_allocation(r: &mut ChaCha8Rng, sessions: usize, total: f64) -> Allocation {
    Allocation::new(random_rates(r, sessions, total, 1e-3 * total), total).unwrap()
}

/// Random row-stochastic routing over the allowed links of each dag.
pub fn random_routing(r: &mut ChaCha8Rng, dags: &[SessionDag]) -> RoutingConfig {
    let per_session = dags
        .iter()
        .map(|dag| {
            let mut w = vec![0.0; dag.allowed.len()];
            for &(_, s, e) in dag.rows() {
                let mut sum = 0.0;
                for x in &mut w[s..e] {
                    *x = uniform_in(r, 1e-3, 1.0);
                    sum += *x;
                }
                for x in &mut w[s..e] {
                    *x /= sum;
                }
            }
            w
        })
        .collect();
    RoutingConfig::from_weights(per_session)
}

/// Logarithmic utility set with mildly distinct parameters per session.
pub fn log_oracle(sessions: usize, total: f64) -> UtilityOracle {
    let families = (0..sessions)
        .map(|w| UtilityFamily::Logarithmic {
            a: 10.0 - 2.0 * w as f64,
            b: 0.3 - 0.05 * w as f64,
        })
        .collect();
    UtilityOracle::new(families, total).unwrap()
}

/// Least-squares slope of y against x.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}
