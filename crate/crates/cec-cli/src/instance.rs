//! Deterministic per-seed instance derivation: the run seed is mixed into
//! the topology, capacity, and placement draws so each (config, seed) pair
//! yields one reproducible instance.

use crate::config::{ExperimentConfig, TopologySpec, UtilitySpec};
use anyhow::{bail, Context, Result};
use cec_core::{
    build_instance, generate_connected_er, load_named_topology, random_balanced_placement,
    sample_capacities, Error as CoreError, Instance, NamedTopology, Topology, UtilityOracle,
};

/// SplitMix64 finalizer; decorrelates structured seed inputs.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Mixes a base seed, the per-run seed, and a domain salt into one stream
/// seed.
pub fn mix(base: u64, run_seed: u64, salt: u64) -> u64 {
    splitmix64(base ^ splitmix64(run_seed ^ splitmix64(salt)))
}

const SALT_TOPOLOGY: u64 = 0x746f706f;
const SALT_CAPACITY: u64 = 0x63617073;
const SALT_PLACEMENT: u64 = 0x706c6163;

/// Everything the solvers need for one (config, seed) cell.
pub struct BuiltInstance {
    pub topology: Topology,
    pub instance: Instance,
    pub oracle: UtilityOracle,
}

/// Placement draws occasionally leave a session without a usable path to
/// its destination; bump the placement stream at most this many times.
const PLACEMENT_ATTEMPTS: u64 = 32;

pub fn build(config: &ExperimentConfig, run_seed: u64) -> Result<BuiltInstance> {
    let base = match &config.topology {
        TopologySpec::Er { nodes, edge_prob, .. } => {
            generate_connected_er(*nodes, *edge_prob, mix(0, run_seed, SALT_TOPOLOGY))
                .context("drawing the random topology")?
        }
        TopologySpec::Abilene { .. } => load_named_topology(NamedTopology::Abilene),
        TopologySpec::BalancedTree { .. } => load_named_topology(NamedTopology::BalancedTree),
        TopologySpec::Fog { .. } => load_named_topology(NamedTopology::Fog),
        TopologySpec::Geant { .. } => load_named_topology(NamedTopology::Geant),
    };
    let topology = sample_capacities(
        &base,
        config.mean_capacity(),
        mix(config.workload.capacity_seed, run_seed, SALT_CAPACITY),
    )
    .context("sampling capacities")?;

    let sessions = config.workload.sessions;
    let placement_base = mix(config.workload.placement_seed, run_seed, SALT_PLACEMENT);
    let mut instance = None;
    let mut last_err = None;
    for bump in 0..PLACEMENT_ATTEMPTS {
        let placement =
            random_balanced_placement(topology.node_count(), sessions, placement_base.wrapping_add(bump))
                .context("placing model versions")?;
        match build_instance(&topology, &placement, None) {
            Ok(built) => {
                instance = Some(built);
                break;
            }
            Err(e @ CoreError::UnreachableDestination { .. }) => last_err = Some(e),
            Err(e) => return Err(e).context("building the augmented instance"),
        }
    }
    let Some(instance) = instance else {
        bail!(
            "no placement with all destinations reachable after {PLACEMENT_ATTEMPTS} draws \
             (seed {run_seed}): {}",
            last_err.expect("at least one attempt")
        );
    };

    let families = config.utility.iter().map(UtilitySpec::to_family).collect();
    let oracle = UtilityOracle::new(families, config.workload.total_rate)
        .context("constructing the utility oracle")?;
    Ok(BuiltInstance { topology, instance, oracle })
}
