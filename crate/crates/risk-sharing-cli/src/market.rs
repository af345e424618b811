//! Agents of a scenario, realised on its state space.

use risk_sharing::{endowment_to_beliefs, normalize_log_density, Agent, Market, Measure};

use crate::error::{IoError, Result};
use crate::expr::evaluate;
use crate::scenario::{AgentSpec, Scenario};
use crate::states::States;

fn actual_beliefs(i: usize, spec: &AgentSpec, states: &States) -> Result<Measure> {
    let n = states.len();
    if let Some(w) = &spec.weights {
        if w.len() != n {
            return Err(IoError::validation(format!("agent {i}: {} weights for {n} states", w.len())));
        }
        if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(IoError::validation(format!("agent {i}: weights must be positive")));
        }
        let total: f64 = w.iter().sum();
        return Ok(Measure::from_weights(w.iter().map(|v| v / total).collect())?);
    }
    match &spec.log_density {
        Some(expr) => Ok(normalize_log_density(&states.baseline, &evaluate(expr, &states.variables, n)?)?),
        None => Ok(states.baseline.clone()),
    }
}

pub fn build_agent(i: usize, spec: &AgentSpec, states: &States) -> Result<(Agent, Measure)> {
    let actual = actual_beliefs(i, spec, states)?;
    let agent = match &spec.endowment {
        Some(expr) => endowment_to_beliefs(&actual, &evaluate(expr, &states.variables, states.len())?, spec.delta)?,
        None => Agent::new(spec.delta, actual.clone())?,
    };
    Ok((agent, actual))
}

/// The market together with each agent's beliefs before any endowment is folded in.
pub fn build_market(scenario: &Scenario, states: &States) -> Result<(Market, Vec<Measure>)> {
    let mut agents = Vec::with_capacity(scenario.agents.len());
    let mut actual = Vec::with_capacity(scenario.agents.len());
    for (i, spec) in scenario.agents.iter().enumerate() {
        let (a, p) = build_agent(i, spec, states)?;
        agents.push(a);
        actual.push(p);
    }
    Ok((Market::new(agents)?, actual))
}
