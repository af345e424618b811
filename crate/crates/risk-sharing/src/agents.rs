//! CARA agents in reduced form and the market they trade in.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::measures::{log_sum_exp, normalize_log_density, Measure, RandomVariable};

pub const MIN_DELTA: f64 = 1e-9;
pub const MAX_DELTA: f64 = 1e12;

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() && (MIN_DELTA..=MAX_DELTA).contains(&delta) {
        Ok(())
    } else {
        Err(Error::contract(format!(
            "risk tolerance {delta:e} outside [{MIN_DELTA:e}, {MAX_DELTA:e}]"
        )))
    }
}

/// Risk tolerance together with endowment-adjusted subjective beliefs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub delta: f64,
    pub beliefs: Measure,
}

impl Agent {
    pub fn new(delta: f64, beliefs: Measure) -> Result<Self> {
        check_delta(delta)?;
        Ok(Self { delta, beliefs })
    }
}

/// Entropic certainty equivalent `-δ log E_P[exp(-X/δ)]`.
pub fn certainty_equivalent(delta: f64, beliefs: &Measure, x: &RandomVariable) -> Result<f64> {
    check_len(beliefs.len(), x.len())?;
    let terms: Vec<f64> = beliefs
        .log_weights()
        .iter()
        .zip(x.values())
        .map(|(l, v)| l - v / delta)
        .collect();
    Ok(-delta * log_sum_exp(&terms))
}

pub fn cara_utility(agent: &Agent, x: &RandomVariable) -> Result<f64> {
    certainty_equivalent(agent.delta, &agent.beliefs, x)
}

/// Folds a random endowment into the beliefs: `log dP/dP̃ ∼ -E/δ`.
pub fn endowment_to_beliefs(
    actual_beliefs: &Measure,
    endowment: &RandomVariable,
    delta: f64,
) -> Result<Agent> {
    check_delta(delta)?;
    let beliefs = normalize_log_density(actual_beliefs, &endowment.scale(-1.0 / delta)?)?;
    Agent::new(delta, beliefs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Agent>", into = "Vec<Agent>")]
pub struct Market {
    agents: Vec<Agent>,
    delta_total: f64,
}

impl TryFrom<Vec<Agent>> for Market {
    type Error = Error;

    fn try_from(agents: Vec<Agent>) -> Result<Self> {
        Self::new(agents)
    }
}

impl From<Market> for Vec<Agent> {
    fn from(m: Market) -> Self {
        m.agents
    }
}

impl Market {
    pub fn new(agents: Vec<Agent>) -> Result<Self> {
        if agents.len() < 2 {
            return Err(Error::contract(format!(
                "a market needs at least 2 agents, got {}",
                agents.len()
            )));
        }
        let states = agents[0].beliefs.len();
        for a in &agents {
            check_delta(a.delta)?;
            check_len(states, a.beliefs.len())?;
        }
        let delta_total = agents.iter().map(|a| a.delta).sum();
        Ok(Self { agents, delta_total })
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> &Agent {
        &self.agents[i]
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn n_states(&self) -> usize {
        self.agents[0].beliefs.len()
    }

    pub fn delta_total(&self) -> f64 {
        self.delta_total
    }

    pub fn delta(&self, i: usize) -> f64 {
        self.agents[i].delta
    }

    pub fn delta_minus(&self, i: usize) -> f64 {
        self.agents
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, a)| a.delta)
            .sum()
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.agents[i].delta / self.delta_total
    }

    pub fn lambda_minus(&self, i: usize) -> f64 {
        self.delta_minus(i) / self.delta_total
    }

    pub fn lambdas(&self) -> Vec<f64> {
        (0..self.n_agents()).map(|i| self.lambda(i)).collect()
    }

    pub fn beliefs(&self, i: usize) -> &Measure {
        &self.agents[i].beliefs
    }

    pub fn check_agent(&self, i: usize) -> Result<()> {
        if i < self.n_agents() {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "agent index {i} out of range for {} agents",
                self.n_agents()
            )))
        }
    }
}
