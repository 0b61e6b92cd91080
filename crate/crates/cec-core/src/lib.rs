//! Flow-model simulation and online optimization of inference workload
//! allocation and multi-hop routing in collaborative edge networks.
//!
//! A network of edge devices hosts W versions of an inference model, one
//! version per device. A controller splits a fixed task input rate among the
//! versions (black-box utility per version) and the network routes each
//! version's traffic hop by hop toward a device that hosts it, paying convex
//! congestion costs on every traversed link plus a computation cost modeled
//! as one extra link. The crate provides the simulator and three solvers:
//!
//! * `omd_rt_solve` — exponentiated-gradient routing descent on fixed rates,
//! * `gs_oma_solve` — two-point gradient mirror ascent on the rate split,
//!   with a converged routing solve inside every utility observation,
//! * `omad_solve` — the single-loop variant that interleaves one routing
//!   improvement step per allocation step,
//!
//! plus a centralized conditional-gradient routing optimum (`opt_baseline`),
//! a Euclidean projected-gradient routing baseline, and first-order
//! optimality residuals usable as runtime convergence certificates.
//!
//! Data flows through the modules as follows:
//!
//! ```text
//! topology ─► AugmentedGraph ─► SessionDag (per version)
//!                 │                  │
//!                 ▼                  ▼
//!       flow::propagate(rates Λ, routing φ) ──► FlowState ──► cost
//!                 │                                            │
//!                 ▼                                            ▼
//!      routing::broadcast_marginals ◄── link derivatives ── total_cost
//!                 │
//!        ┌────────┴─────────┐
//!        ▼                  ▼
//!  routing solvers    allocate / joint solvers (query utility oracles)
//! ```
//!
//! The crate is `no_std`-compatible (requires `alloc`); the default `std`
//! feature only switches float intrinsics and enables `std::error::Error`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod allocate;
pub mod cost;
pub mod error;
pub mod flow;
pub mod joint;
pub mod routing;
pub mod topology;
pub mod utility;

pub(crate) mod fmath;
pub(crate) mod rng;

pub use allocate::{
    gs_oma_solve, mirror_ascent_step, project_box, two_point_gradient, AllocRun,
    AllocSolverConfig, AllocTraceRow, AllocationOptimalityResidual, GradientEstimate,
    allocation_optimality_residual,
};
pub use cost::{CostKind, LinkCostModel};
pub use error::{Error, Result};
pub use flow::{
    check_conservation, propagate, propagate_unchecked, total_cost, total_utility, Allocation,
    ConservationReport, FlowState, RoutingConfig,
};
pub use joint::{
    lyapunov_trace, omad_solve, topology_change_experiment, JointRun, JointSolverConfig,
    JointTraceRow, LyapunovRow, TopologyChangeOutcome,
};
pub use routing::{
    broadcast_marginals, omd_rt_solve, omd_rt_step, opt_baseline, pgd_routing_baseline,
    project_simplex, routing_optimality_residual, MarginalCosts, OptBaseline, RoutingRun,
    RoutingOptimalityResidual, RoutingSolverConfig, RoutingTraceRow,
};
pub use topology::{
    augment, build_instance, build_session_dag, generate_connected_er, load_named_topology,
    random_balanced_placement, sample_capacities, AugmentedGraph, Instance, Link, ModelPlacement,
    NamedTopology, NodeId, SessionDag, Topology,
};
pub use utility::{AssumptionReport, UtilityFamily, UtilityOracle};
