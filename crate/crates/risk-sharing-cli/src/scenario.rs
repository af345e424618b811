//! Scenario files: a state model, a list of agents and solver settings.

use serde::{Deserialize, Serialize};

use risk_sharing::NashConfig;

use crate::error::{IoError, Result};

pub const DEFAULT_MAX_STATES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub states: StateModel,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<LimitsSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateModel {
    Explicit {
        weights: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        labels: Vec<String>,
        /// Named variables, one value per state.
        #[serde(default)]
        variables: std::collections::BTreeMap<String, Vec<f64>>,
    },
    Gaussian(GaussianSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub variables: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    /// Either `covariance`, or `std` together with `correlation`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
    /// Gauss-Hermite nodes per dimension. Ignored when `samples` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature_order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub psd_repair: PsdRepair,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsdRepair {
    /// Reject a covariance with a negative eigenvalue.
    #[default]
    None,
    /// Clip negative eigenvalues of the correlation matrix to zero and restore its unit diagonal.
    Clip,
}

/// One agent. Actual beliefs are `weights` if given, else the baseline tilted
/// by `exp(log_density)`, else the baseline. An `endowment` is then folded in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_density: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endowment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub tol: f64,
    pub pricing_tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub multistart: bool,
    pub max_states: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let c = NashConfig::default();
        Self {
            tol: c.tol,
            pricing_tol: c.pricing_tol,
            max_iter: c.max_iter,
            damping: c.damping,
            multistart: c.multistart,
            max_states: DEFAULT_MAX_STATES,
        }
    }
}

impl SolverSpec {
    pub fn nash_config(&self) -> NashConfig {
        NashConfig {
            tol: self.tol,
            pricing_tol: self.pricing_tol,
            max_iter: self.max_iter,
            damping: self.damping,
            multistart: self.multistart,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LimitsSpec {
    /// Agent 0 becomes risk neutral against agent 1.
    OneAgent { delta0: Vec<f64> },
    /// Both tolerances scale as `λ_i δ` with `log dP_i/dP ∼ ξ_i/δ_i`.
    Both {
        xi0: String,
        xi1: String,
        lambda0: f64,
        delta: Vec<f64>,
    },
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub seed: Option<u64>,
    pub quadrature_order: Option<usize>,
    pub samples: Option<usize>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| IoError::Parse {
            what: "scenario".into(),
            detail: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(tol) = o.tol {
            self.solver.tol = tol;
        }
        if let Some(m) = o.max_iter {
            self.solver.max_iter = m;
        }
        let sampling = o.seed.is_some() || o.quadrature_order.is_some() || o.samples.is_some();
        match &mut self.states {
            StateModel::Gaussian(g) => {
                if let Some(q) = o.quadrature_order {
                    g.quadrature_order = Some(q);
                    g.samples = None;
                }
                if let Some(n) = o.samples {
                    g.samples = Some(n);
                }
                if let Some(seed) = o.seed {
                    g.seed = Some(seed);
                }
            }
            StateModel::Explicit { .. } if sampling => {
                return Err(IoError::validation(
                    "--seed, --samples and --quadrature-order need a gaussian state model",
                ));
            }
            StateModel::Explicit { .. } => {}
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let both = matches!(self.limits, Some(LimitsSpec::Both { .. }));
        if self.agents.len() < 2 && !both {
            return Err(IoError::validation(format!(
                "a scenario needs at least 2 agents, found {}",
                self.agents.len()
            )));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if !(a.delta.is_finite() && a.delta > 0.0) {
                return Err(IoError::validation(format!("agent {i}: delta must be positive, got {}", a.delta)));
            }
            if a.weights.is_some() && a.log_density.is_some() {
                return Err(IoError::validation(format!(
                    "agent {i}: give either weights or log_density, not both"
                )));
            }
        }
        let s = &self.solver;
        if !(s.tol > 0.0 && s.pricing_tol > 0.0) || !(s.damping > 0.0 && s.damping <= 1.0) || s.max_iter == 0 {
            return Err(IoError::validation("solver: tolerances and max_iter must be positive, damping in (0, 1]"));
        }
        match &self.states {
            StateModel::Explicit { weights, labels, variables } => {
                if !labels.is_empty() && labels.len() != weights.len() {
                    return Err(IoError::validation("states: labels and weights differ in length"));
                }
                for (name, v) in variables {
                    if v.len() != weights.len() {
                        return Err(IoError::validation(format!(
                            "states: variable {name} has {} values for {} states",
                            v.len(),
                            weights.len()
                        )));
                    }
                }
            }
            StateModel::Gaussian(g) => {
                if g.variables.is_empty() {
                    return Err(IoError::validation("states: a gaussian model needs variables"));
                }
                match (g.samples, g.quadrature_order) {
                    (Some(0), _) | (None, Some(0)) => {
                        return Err(IoError::validation("states: samples and quadrature_order must be positive"));
                    }
                    (Some(_), _) if g.seed.is_none() => {
                        return Err(IoError::validation("states: sampling requires a seed"));
                    }
                    (None, None) => {
                        return Err(IoError::validation("states: set quadrature_order or samples"));
                    }
                    _ => {}
                }
            }
        }
        if let Some(LimitsSpec::Both { lambda0, delta, .. }) = &self.limits {
            if !(*lambda0 > 0.0 && *lambda0 < 1.0) || delta.iter().any(|d| !d.is_finite() || *d <= 0.0) {
                return Err(IoError::validation("limits: lambda0 must lie in (0, 1) and deltas be positive"));
            }
        }
        if let Some(LimitsSpec::OneAgent { delta0 }) = &self.limits {
            if delta0.iter().any(|d| !d.is_finite() || *d <= 0.0) {
                return Err(IoError::validation("limits: delta0 values must be positive"));
            }
        }
        Ok(())
    }
}
