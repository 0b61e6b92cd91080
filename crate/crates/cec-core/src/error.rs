//! Error type shared by all modules.

use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

/// Unified error for construction, simulation, and solver failures.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Structurally invalid argument (dimension mismatch, bad parameter, ...).
    InvalidInput(String),
    /// M/M/1 cost evaluated at flow >= capacity. Fields: link endpoints,
    /// offending flow, capacity. Hard domain violation, never clamped.
    CapacityExceeded {
        from: usize,
        to: usize,
        flow: f64,
        capacity: f64,
    },
    /// Exponentiated update produced an all-zero or non-finite row;
    /// the step size must be reduced.
    Underflow { node: usize, session: usize },
    /// A session destination cannot be reached from the source under the
    /// allowed link set.
    UnreachableDestination { session: usize },
    /// Random graph generation exhausted its attempt budget without
    /// producing a connected topology.
    ConnectivityUnreachable { attempts: u32 },
    /// No feasible point found (e.g. M/M/1 capacities too small for the
    /// requested rates, or an infeasible projection box).
    Infeasible(String),
    /// A black-box objective evaluation failed during two-point gradient
    /// estimation; carries which perturbed coordinate was being probed.
    EvaluationFailed {
        session: usize,
        positive: bool,
        source: Box<Error>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::CapacityExceeded {
                from,
                to,
                flow,
                capacity,
            } => write!(
                f,
                "capacity exceeded on link ({from},{to}): flow {flow} >= capacity {capacity}"
            ),
            Error::Underflow { node, session } => write!(
                f,
                "underflow in routing update at node {node}, session {session}; reduce the step size"
            ),
            Error::UnreachableDestination { session } => {
                write!(f, "unreachable destination for session {session}")
            }
            Error::ConnectivityUnreachable { attempts } => {
                write!(f, "connectivity unreachable after {attempts} attempts")
            }
            Error::Infeasible(msg) => write!(f, "infeasible: {msg}"),
            Error::EvaluationFailed { session, positive, source } => write!(
                f,
                "objective evaluation failed at perturbation {}e_{session}: {source}",
                if *positive { "+" } else { "-" }
            ),
        }
    }
}

impl core::error::Error for Error {}
