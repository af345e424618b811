//! The competitive benchmark: geometric-mean pricing and optimal securities.

use serde::{Deserialize, Serialize};

use crate::agents::{certainty_equivalent, Market};
use crate::error::{check_len, Error, Result};
use crate::measures::{geometric_mean_measure, relative_entropy, Measure, RandomVariable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrowDebreuEquilibrium {
    pub pricing: Measure,
    pub securities: Vec<RandomVariable>,
    pub agent_gains: Vec<f64>,
    pub aggregate_gain: f64,
}

pub fn solve_arrow_debreu(market: &Market) -> Result<ArrowDebreuEquilibrium> {
    let n = market.n_agents();
    let beliefs: Vec<&Measure> = (0..n).map(|i| market.beliefs(i)).collect();
    let pricing = geometric_mean_measure(&beliefs, &market.lambdas())?;

    let mut agent_gains = Vec::with_capacity(n);
    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let delta = market.delta(i);
        let h = relative_entropy(&pricing, beliefs[i])?;
        let c = beliefs[i].log_density(&pricing)?.map(|l| delta * l + delta * h)?;
        agent_gains.push(delta * h);
        raw.push(c);
    }

    // Clearing holds exactly: the last security absorbs the rounding of the others.
    let states = market.n_states();
    let mut last = vec![0.0; states];
    for c in &raw[..n - 1] {
        for (acc, v) in last.iter_mut().zip(c.values()) {
            *acc -= v;
        }
    }
    let last = RandomVariable::new(last)?;
    let drift = last.sup_distance(&raw[n - 1])?;
    let scale = raw.iter().map(RandomVariable::sup_norm).fold(1.0, f64::max);
    if drift > 1e-9 * scale {
        return Err(Error::solver(
            "arrow-debreu clearing",
            format!("last security deviates from its formula by {drift:e}"),
        ));
    }
    raw[n - 1] = last;

    let aggregate_gain = agent_gains.iter().sum();
    Ok(ArrowDebreuEquilibrium {
        pricing,
        securities: raw,
        agent_gains,
        aggregate_gain,
    })
}

/// `U_i(c) - U_i(C*_i) = -δ_i log E_{Q*}[exp(-(c - C*_i)/δ_i)]`.
pub fn utility_gain_vs_ad(
    market: &Market,
    ad: &ArrowDebreuEquilibrium,
    i: usize,
    c: &RandomVariable,
) -> Result<f64> {
    market.check_agent(i)?;
    check_len(market.n_states(), c.len())?;
    let diff = c.sub(&ad.securities[i])?;
    certainty_equivalent(market.delta(i), &ad.pricing, &diff)
}

/// Total certainty equivalent of an allocation, used for Pareto comparisons.
pub fn total_utility(market: &Market, allocation: &[RandomVariable]) -> Result<f64> {
    check_len(market.n_agents(), allocation.len())?;
    allocation
        .iter()
        .enumerate()
        .map(|(i, c)| certainty_equivalent(market.delta(i), market.beliefs(i), c))
        .sum()
}
