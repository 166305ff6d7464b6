//! Target algorithms: the map from (configuration, instance, seed) to cost.

pub mod aco;
pub mod external;
pub mod synthetic;
pub mod tsp;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{parse_parameter_file, Configuration, ParameterSpace};

pub use aco::{run_aco, AcoParams, AcoRun, Variant};
pub use external::ExternalRunner;
pub use synthetic::SyntheticTarget;
pub use tsp::{generate_tsp, TspInstance};

pub const SYNTHETIC_SPACE: &str = include_str!("../../data/synthetic.params");
pub const ACOTSP_SPACE: &str = include_str!("../../data/acotsp.params");

/// One of the shipped parameter spaces: `synthetic` or `acotsp`.
pub fn builtin_space(name: &str) -> Option<ParameterSpace> {
    let text = match name {
        "synthetic" => SYNTHETIC_SPACE,
        "acotsp" | "aco_tsp" => ACOTSP_SPACE,
        _ => return None,
    };
    Some(parse_parameter_file(text).expect("shipped space parses"))
}

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("target configuration: {0}")]
    Config(String),
    #[error("instance: {0}")]
    Instance(String),
    #[error("could not run target: {0}")]
    Spawn(String),
    #[error("target {status:?} on config {config} / instance {instance} (seed {seed}): {detail}")]
    Failed {
        status: EvalStatus,
        config: u64,
        instance: String,
        seed: u64,
        detail: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalStatus {
    Ok,
    Crashed,
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub cost: f64,
    pub runtime_s: f64,
    pub status: EvalStatus,
    pub detail: Option<String>,
}

impl EvalResult {
    pub fn ok(cost: f64, runtime_s: f64) -> Self {
        Self {
            cost,
            runtime_s,
            status: EvalStatus::Ok,
            detail: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    /// Stable numeric identity, used where the instance feeds a hash.
    pub key: u64,
    pub base_seed: u64,
    pub path: Option<PathBuf>,
    pub tsp: Option<Arc<TspInstance>>,
}

impl Instance {
    pub fn named(id: &str, key: u64, base_seed: u64) -> Self {
        Self {
            id: id.to_string(),
            key,
            base_seed,
            path: None,
            tsp: None,
        }
    }
}

/// Anything that can evaluate configurations. Implementations must be
/// safe to call from several threads at once.
pub trait Evaluate: Sync {
    fn evaluate(&self, config: &Configuration, instance: &Instance, seed: u64) -> Result<EvalResult, TargetError>;
}

impl<F> Evaluate for F
where
    F: Fn(&Configuration, &Instance, u64) -> Result<EvalResult, TargetError> + Sync,
{
    fn evaluate(&self, config: &Configuration, instance: &Instance, seed: u64) -> Result<EvalResult, TargetError> {
        self(config, instance, seed)
    }
}

/// Target description as written in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    Synthetic,
    AcoTsp {
        tour_budget: usize,
    },
    External {
        command: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timeout_s: Option<f64>,
        /// Cost recorded for crashed or timed-out runs; abort when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        crash_cost: Option<f64>,
    },
}

enum Kind {
    Synthetic(SyntheticTarget),
    AcoTsp { space: Arc<ParameterSpace>, tour_budget: usize },
    External(ExternalRunner),
}

/// A ready-to-run target with its crash policy.
pub struct Target {
    kind: Kind,
    crash_cost: Option<f64>,
}

impl Target {
    pub fn build(spec: &TargetSpec, space: Arc<ParameterSpace>) -> Result<Self, TargetError> {
        let (kind, crash_cost) = match spec {
            TargetSpec::Synthetic => (Kind::Synthetic(SyntheticTarget::new(&space)?), None),
            TargetSpec::AcoTsp { tour_budget } => {
                if *tour_budget == 0 {
                    return Err(TargetError::Config("tour_budget must be at least 1".into()));
                }
                (
                    Kind::AcoTsp {
                        space,
                        tour_budget: *tour_budget,
                    },
                    None,
                )
            }
            TargetSpec::External {
                command,
                timeout_s,
                crash_cost,
            } => {
                let timeout = match timeout_s {
                    Some(t) if !(t.is_finite() && *t > 0.0) => {
                        return Err(TargetError::Config(format!("timeout_s must be positive, got {t}")))
                    }
                    Some(t) => Some(Duration::from_secs_f64(*t)),
                    None => None,
                };
                if let Some(c) = crash_cost.filter(|c| !c.is_finite()) {
                    return Err(TargetError::Config(format!("crash_cost must be finite, got {c}")));
                }
                (Kind::External(ExternalRunner::new(command, timeout, space)?), *crash_cost)
            }
        };
        Ok(Self { kind, crash_cost })
    }

    fn raw(&self, config: &Configuration, instance: &Instance, seed: u64) -> Result<EvalResult, TargetError> {
        match &self.kind {
            Kind::Synthetic(t) => Ok(t.evaluate(config, instance, seed)),
            Kind::AcoTsp { space, tour_budget } => {
                let tsp = instance
                    .tsp
                    .as_ref()
                    .ok_or_else(|| TargetError::Instance(format!("instance '{}' is not a TSP instance", instance.id)))?;
                let params = AcoParams::from_config(space, config)?;
                let run = run_aco(tsp, &params, *tour_budget, seed);
                Ok(EvalResult::ok(run.best_length as f64, 0.0))
            }
            Kind::External(runner) => runner.evaluate(config, instance, seed),
        }
    }
}

impl Evaluate for Target {
    /// Applies the crash policy: failed runs either take the configured
    /// penalty cost (keeping their status) or abort with an error.
    fn evaluate(&self, config: &Configuration, instance: &Instance, seed: u64) -> Result<EvalResult, TargetError> {
        let mut result = self.raw(config, instance, seed)?;
        if result.status == EvalStatus::Ok && result.cost.is_finite() {
            return Ok(result);
        }
        match self.crash_cost {
            Some(penalty) => {
                result.cost = penalty;
                Ok(result)
            }
            None => Err(TargetError::Failed {
                status: result.status,
                config: config.id,
                instance: instance.id.clone(),
                seed,
                detail: result.detail.unwrap_or_else(|| format!("non-finite cost {}", result.cost)),
            }),
        }
    }
}
