//! Experiment configuration: a TOML file describing the instance family,
//! workload, cost model, utilities, algorithm set, and budgets. Configs
//! serialize back to TOML losslessly.

use cec_core::{CostKind, UtilityFamily};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologySpec,
    pub workload: WorkloadSpec,
    pub cost: CostSpec,
    pub utility: Vec<UtilitySpec>,
    pub run: RunSpec,
    #[serde(default)]
    pub budget: BudgetSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    /// Connected Erdos-Renyi draw, redrawn per run seed.
    Er {
        nodes: usize,
        edge_prob: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_capacity: Option<f64>,
    },
    Abilene {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_capacity: Option<f64>,
    },
    BalancedTree {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_capacity: Option<f64>,
    },
    Fog {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_capacity: Option<f64>,
    },
    Geant {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_capacity: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub total_rate: f64,
    pub sessions: usize,
    pub placement_seed: u64,
    pub capacity_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    ExpRatio {
        #[serde(default = "default_scale")]
        scale: f64,
    },
    Mm1,
}

fn default_scale() -> f64 {
    1.0
}

impl CostSpec {
    pub fn to_kind(&self) -> CostKind {
        match *self {
            CostSpec::ExpRatio { scale } => CostKind::ExpRatio { a: scale },
            CostSpec::Mm1 => CostKind::Mm1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilitySpec {
    Linear { a: f64 },
    Logarithmic { a: f64, b: f64 },
    Quadratic { a: f64, b: f64 },
    SquareRoot { a: f64, b: f64 },
}

impl UtilitySpec {
    pub fn to_family(&self) -> UtilityFamily {
        match *self {
            UtilitySpec::Linear { a } => UtilityFamily::Linear { a },
            UtilitySpec::Logarithmic { a, b } => UtilityFamily::Logarithmic { a, b },
            UtilitySpec::Quadratic { a, b } => UtilityFamily::Quadratic { a, b },
            UtilitySpec::SquareRoot { a, b } => UtilityFamily::SquareRoot { a, b },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    OmdRt,
    Pgd,
    Opt,
    GsOma,
    Omad,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::OmdRt, Algorithm::Pgd, Algorithm::Opt, Algorithm::GsOma, Algorithm::Omad];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::OmdRt => "omd_rt",
            Algorithm::Pgd => "pgd",
            Algorithm::Opt => "opt",
            Algorithm::GsOma => "gs_oma",
            Algorithm::Omad => "omad",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?}; expected one of omd_rt, pgd, opt, gs_oma, omad"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetSpec {
    /// Inner (routing) iteration cap and sup-norm stop tolerance.
    pub routing_iters: usize,
    pub routing_tol: f64,
    /// Initial step size of the exponentiated routing update.
    pub routing_eta: f64,
    /// Relative duality-gap tolerance of the centralized baseline.
    pub opt_tol: f64,
    /// Outer (allocation) iteration cap and sup-norm stop tolerance.
    pub outer_iters: usize,
    pub outer_tol: f64,
    /// Every how many joint iterations the Lyapunov gap is sampled.
    pub lyapunov_stride: usize,
    /// Allocation perturbation radius; defaults to 1% of the total rate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Allocation step size; defaults to 0.5 / (L + 1).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

impl Default for BudgetSpec {
    fn default() -> Self {
        BudgetSpec {
            routing_iters: 5000,
            routing_tol: 1e-8,
            routing_eta: 1.0,
            opt_tol: 1e-8,
            outer_iters: 200,
            outer_tol: 1e-6,
            lyapunov_stride: 5,
            delta: None,
            eta: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field {field}: {problem}")]
    Invalid { field: &'static str, problem: String },
}

fn invalid(field: &'static str, problem: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, problem: problem.into() }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.topology {
            TopologySpec::Er { nodes, edge_prob, mean_capacity } => {
                if nodes < 2 {
                    return Err(invalid("topology.nodes", format!("need at least 2, got {nodes}")));
                }
                if !(edge_prob > 0.0 && edge_prob <= 1.0) {
                    return Err(invalid(
                        "topology.edge_prob",
                        format!("must be in (0, 1], got {edge_prob}"),
                    ));
                }
                if let Some(c) = mean_capacity {
                    if !(c > 0.0) {
                        return Err(invalid("topology.mean_capacity", format!("must be positive, got {c}")));
                    }
                }
            }
            TopologySpec::Abilene { mean_capacity }
            | TopologySpec::BalancedTree { mean_capacity }
            | TopologySpec::Fog { mean_capacity }
            | TopologySpec::Geant { mean_capacity } => {
                if let Some(c) = mean_capacity {
                    if !(c > 0.0) {
                        return Err(invalid("topology.mean_capacity", format!("must be positive, got {c}")));
                    }
                }
            }
        }
        if !(self.workload.total_rate > 0.0) {
            return Err(invalid(
                "workload.total_rate",
                format!("must be positive, got {}", self.workload.total_rate),
            ));
        }
        if self.workload.sessions == 0 {
            return Err(invalid("workload.sessions", "need at least one session"));
        }
        if self.utility.len() != self.workload.sessions {
            return Err(invalid(
                "utility",
                format!(
                    "{} utility entries for {} sessions",
                    self.utility.len(),
                    self.workload.sessions
                ),
            ));
        }
        if self.run.algorithms.is_empty() {
            return Err(invalid("run.algorithms", "at least one algorithm required"));
        }
        if self.run.seeds.is_empty() {
            return Err(invalid("run.seeds", "at least one seed required"));
        }
        let b = &self.budget;
        if b.routing_iters == 0 || b.outer_iters == 0 {
            return Err(invalid("budget", "iteration budgets must be at least 1"));
        }
        if !(b.routing_tol >= 0.0) || !(b.outer_tol >= 0.0) || !(b.opt_tol > 0.0) {
            return Err(invalid("budget", "tolerances must be nonnegative (opt_tol positive)"));
        }
        if !(b.routing_eta > 0.0) {
            return Err(invalid("budget.routing_eta", format!("must be positive, got {}", b.routing_eta)));
        }
        if b.lyapunov_stride == 0 {
            return Err(invalid("budget.lyapunov_stride", "must be at least 1"));
        }
        if let Some(d) = b.delta {
            let cap = self.workload.total_rate / (2.0 * self.workload.sessions as f64);
            if !(d > 0.0 && d < cap) {
                return Err(invalid("budget.delta", format!("must lie in (0, {cap}), got {d}")));
            }
        }
        if let Some(e) = b.eta {
            if !(e > 0.0) {
                return Err(invalid("budget.eta", format!("must be positive, got {e}")));
            }
        }
        // Deep parameter validation is delegated to the utility oracle.
        let families: Vec<_> = self.utility.iter().map(UtilitySpec::to_family).collect();
        cec_core::UtilityOracle::new(families, self.workload.total_rate)
            .map_err(|e| invalid("utility", e.to_string()))?;
        Ok(())
    }

    pub fn mean_capacity(&self) -> f64 {
        match self.topology {
            TopologySpec::Er { mean_capacity, .. } => mean_capacity.unwrap_or(10.0),
            TopologySpec::Abilene { mean_capacity } => mean_capacity.unwrap_or(15.0),
            TopologySpec::BalancedTree { mean_capacity }
            | TopologySpec::Fog { mean_capacity }
            | TopologySpec::Geant { mean_capacity } => mean_capacity.unwrap_or(10.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentConfig {
        ExperimentConfig {
            topology: TopologySpec::Er { nodes: 25, edge_prob: 0.2, mean_capacity: None },
            workload: WorkloadSpec {
                total_rate: 60.0,
                sessions: 3,
                placement_seed: 11,
                capacity_seed: 7,
            },
            cost: CostSpec::ExpRatio { scale: 1.0 },
            utility: vec![
                UtilitySpec::Logarithmic { a: 10.0, b: 0.3 },
                UtilitySpec::Logarithmic { a: 8.0, b: 0.25 },
                UtilitySpec::Logarithmic { a: 6.0, b: 0.2 },
            ],
            run: RunSpec {
                algorithms: vec![Algorithm::OmdRt, Algorithm::Opt],
                seeds: vec![1, 2],
                output_dir: PathBuf::from("out"),
                svg: false,
            },
            budget: BudgetSpec::default(),
        }
    }

    #[test]
    fn toml_round_trip() {
        let config = sample();
        let text = config.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn rejects_empty_algorithms() {
        let mut config = sample();
        config.run.algorithms.clear();
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("run.algorithms"), "{err}");
    }

    #[test]
    fn rejects_session_mismatch() {
        let mut config = sample();
        config.utility.pop();
        assert!(config.validate().is_err());
    }

    #[test]
    fn parse_errors_carry_position() {
        let text = "topology = 5\n";
        let err = ExperimentConfig::from_toml(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("topology") || msg.contains("line"), "{msg}");
    }

    #[test]
    fn algorithm_names_round_trip() {
        for algo in Algorithm::ALL {
            assert_eq!(algo.as_str().parse::<Algorithm>().unwrap(), algo);
        }
        assert!("bogus".parse::<Algorithm>().is_err());
    }
}
