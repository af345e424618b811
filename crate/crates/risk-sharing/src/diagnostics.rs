//! Post-equilibrium analytics: efficiency loss, entropy decompositions,
//! marginal indifference measures and revealed-belief bounds.
//!
//! Every identity is evaluated on both sides from the securities, the pricing
//! measure and the market, and the gap is kept as a [`Residual`].

use serde::{Deserialize, Serialize};

use crate::agents::{cara_utility, Market};
use crate::arrow_debreu::ArrowDebreuEquilibrium;
use crate::error::{check_len, Error, Result};
use crate::measures::{
    expect, log_expect_exp, normalize_log_density, relative_entropy, variance, Measure, RandomVariable,
};
use crate::nash::NashEquilibrium;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// Two sides of an equality; passes when `|value| <= tolerance`.
    Identity,
    /// Worst excess of a one-sided bound; passes when `value <= tolerance`.
    Bound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub name: String,
    pub kind: ResidualKind,
    pub value: f64,
    pub tolerance: f64,
}

impl Residual {
    pub fn identity(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            kind: ResidualKind::Identity,
            value,
            tolerance,
        }
    }

    pub fn bound(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            kind: ResidualKind::Bound,
            value,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        match self.kind {
            ResidualKind::Identity => self.value.abs() <= self.tolerance,
            ResidualKind::Bound => self.value <= self.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashDiagnostics {
    /// `u* - u◇`.
    pub efficiency_loss: f64,
    /// `u◇_i - u*_i`.
    pub per_agent_delta: Vec<f64>,
    /// `Q◇_i` with `dQ◇_i/dQ◇ = 1 + C◇_i/δ_{-i}`.
    pub marginal_measures: Vec<Measure>,
    /// `α_i = λ_{-i}/n` where `n + 1` is the number of agents.
    pub alpha_weights: Vec<f64>,
    /// `δ_i H(Q* | Q◇_i)`.
    pub entropy_terms: Vec<f64>,
    /// `E_{Q*}[C◇_i]`.
    pub undervaluation: Vec<f64>,
    /// `H(P_i | R◇_i)`.
    pub belief_distance: Vec<f64>,
    /// `E_{Q◇_i}[C◇_i]`.
    pub marginal_prices: Vec<f64>,
    pub residuals: Vec<Residual>,
}

impl NashDiagnostics {
    pub fn all_passed(&self) -> bool {
        self.residuals.iter().all(Residual::passed)
    }

    pub fn residual(&self, name: &str) -> Option<&Residual> {
        self.residuals.iter().find(|r| r.name == name)
    }
}

fn worst(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m: f64, v| if v.abs() > m.abs() { v } else { m })
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

pub fn compute_diagnostics(
    market: &Market,
    ad: &ArrowDebreuEquilibrium,
    nash: &NashEquilibrium,
) -> Result<NashDiagnostics> {
    let agents = market.n_agents();
    let states = market.n_states();
    check_len(agents, ad.securities.len())?;
    check_len(agents, nash.securities.len())?;
    check_len(agents, nash.log_margins.len())?;
    check_len(agents, nash.revealed.len())?;
    check_len(agents, nash.z.len())?;
    check_len(states, nash.pricing.len())?;
    check_len(states, ad.pricing.len())?;

    let delta = market.delta_total();
    let scale = delta.max(1.0);
    let counterparties = (agents - 1) as f64;
    let q = &nash.pricing;
    let c = &nash.securities;
    let t = &nash.log_margins;

    // The log-margins must describe the same securities.
    let mut margin_gap: f64 = 0.0;
    for i in 0..agents {
        let dm = market.delta_minus(i);
        for (ci, ti) in c[i].iter().zip(t[i].iter()) {
            let gap = (dm * ti.exp_m1() - ci).abs() / ci.abs().max(1.0);
            margin_gap = margin_gap.max(gap);
        }
    }
    if margin_gap > 1e-6 {
        return Err(Error::contract(format!(
            "log-margins disagree with the securities by {margin_gap:e}"
        )));
    }

    let u_star = ad.aggregate_gain;
    let u_nash_i = (0..agents)
        .map(|i| cara_utility(market.agent(i), &c[i]))
        .collect::<Result<Vec<_>>>()?;
    let u_nash: f64 = u_nash_i.iter().sum();
    let efficiency_loss = u_star - u_nash;
    let per_agent_delta: Vec<f64> = (0..agents).map(|i| u_nash_i[i] - ad.agent_gains[i]).collect();

    let marginal_measures = (0..agents)
        .map(|i| normalize_log_density(q, &t[i]))
        .collect::<Result<Vec<_>>>()?;
    let alpha_weights: Vec<f64> = (0..agents).map(|i| market.lambda_minus(i) / counterparties).collect();
    let entropy_terms = (0..agents)
        .map(|i| Ok(market.delta(i) * relative_entropy(&ad.pricing, &marginal_measures[i])?))
        .collect::<Result<Vec<_>>>()?;
    let undervaluation = (0..agents)
        .map(|i| expect(&ad.pricing, &c[i]))
        .collect::<Result<Vec<_>>>()?;
    let belief_distance = (0..agents)
        .map(|i| relative_entropy(market.beliefs(i), &nash.revealed[i]))
        .collect::<Result<Vec<_>>>()?;
    let marginal_prices = (0..agents)
        .map(|i| expect(&marginal_measures[i], &c[i]))
        .collect::<Result<Vec<_>>>()?;

    let id_tol = 1e-8 * scale;
    let mut residuals = Vec::new();

    let pricing = (0..agents).map(|i| expect(q, &c[i])).collect::<Result<Vec<_>>>()?;
    residuals.push(Residual::identity("zero_price", worst(pricing), 1e-9 * scale));
    let clearing = (0..states).map(|s| c.iter().map(|ci| ci.values()[s]).sum::<f64>());
    residuals.push(Residual::identity("clearing", worst(clearing), 1e-9 * scale));
    residuals.push(Residual::identity("margin_consistency", margin_gap, 1e-9));

    let lower = (0..agents).flat_map(|i| {
        let dm = market.delta_minus(i);
        c[i].iter().map(move |v| -dm - v).collect::<Vec<_>>()
    });
    residuals.push(Residual::bound("security_lower_bound", max_of(lower), 1e-12 * scale));
    let upper = (0..agents).flat_map(|i| {
        let cap = (counterparties - 1.0) * delta + market.delta(i);
        c[i].iter().map(move |v| v - cap).collect::<Vec<_>>()
    });
    residuals.push(Residual::bound("security_upper_bound", max_of(upper), 1e-12 * scale));

    let lambdas = market.lambdas();
    let aggregate_margin = RandomVariable::new(
        (0..states)
            .map(|s| (0..agents).map(|i| lambdas[i] * t[i].values()[s]).sum())
            .collect(),
    )?;
    let loss_formula = -efficiency_loss - delta * log_expect_exp(q, &aggregate_margin)?;
    residuals.push(Residual::identity("loss_formula", loss_formula, id_tol));

    let decomposition = (0..agents).map(|i| {
        per_agent_delta[i] - (nash.z.as_slice()[i] - lambdas[i] * efficiency_loss)
    });
    residuals.push(Residual::identity("loss_decomposition", worst(decomposition), id_tol));

    let aggregate_entropy = efficiency_loss - entropy_terms.iter().sum::<f64>();
    residuals.push(Residual::identity("entropy_aggregate", aggregate_entropy, id_tol));

    let individual = (0..agents).map(|i| per_agent_delta[i] - (undervaluation[i] - entropy_terms[i]));
    residuals.push(Residual::identity("entropy_individual", worst(individual), id_tol));

    let mut density_gap: f64 = 0.0;
    for i in 0..agents {
        let direct = normalize_log_density(market.beliefs(i), &c[i].scale(-1.0 / market.delta(i))?)?;
        density_gap = density_gap.max(marginal_measures[i].sup_distance(&direct)?);
    }
    residuals.push(Residual::identity("marginal_density", density_gap, 1e-10));

    let decomposition_gap = (0..states).map(|s| {
        let mix: f64 = (0..agents)
            .map(|i| alpha_weights[i] * marginal_measures[i].weights()[s])
            .sum();
        q.weights()[s] - mix
    });
    residuals.push(Residual::identity("pricing_decomposition", worst(decomposition_gap), 1e-12));

    let mut valuation = Vec::with_capacity(agents);
    for i in 0..agents {
        valuation.push(marginal_prices[i] - variance(q, &c[i])? / market.delta_minus(i));
    }
    residuals.push(Residual::identity("marginal_valuation", worst(valuation), id_tol));

    let mut utility = Vec::with_capacity(agents);
    for i in 0..agents {
        let d = market.delta(i);
        let rhs = d * relative_entropy(q, market.beliefs(i))? - d * relative_entropy(q, &marginal_measures[i])?;
        utility.push(u_nash_i[i] - rhs);
    }
    residuals.push(Residual::identity("utility_identity", worst(utility), id_tol));

    let mut revealed_gap: f64 = 0.0;
    for i in 0..agents {
        let direct = normalize_log_density(market.beliefs(i), &t[i].scale(-1.0)?)?;
        revealed_gap = revealed_gap.max(nash.revealed[i].sup_distance(&direct)?);
    }
    residuals.push(Residual::identity("revealed_beliefs", revealed_gap, 1e-10));

    let ratios = (0..agents)
        .map(|i| market.beliefs(i).density(&nash.revealed[i]))
        .collect::<Result<Vec<_>>>()?;
    let cap_excess = (0..agents).flat_map(|i| {
        let cap = counterparties / market.lambda_minus(i);
        ratios[i].iter().map(move |r| r - cap).collect::<Vec<_>>()
    });
    residuals.push(Residual::bound("density_bound", max_of(cap_excess), 1e-12));
    let weighted = (0..states).map(|s| {
        (0..agents).map(|i| alpha_weights[i] * ratios[i].values()[s]).sum::<f64>() - 1.0
    });
    residuals.push(Residual::bound("sandwich_lower", max_of(weighted), 1e-12));
    let plain = (0..states).map(|s| 1.0 - (0..agents).map(|i| ratios[i].values()[s]).sum::<f64>());
    residuals.push(Residual::bound("sandwich_upper", max_of(plain), 1e-12));
    let entropy_cap = (0..agents).map(|i| belief_distance[i] - (counterparties / market.lambda_minus(i)).ln());
    residuals.push(Residual::bound("belief_entropy_bound", max_of(entropy_cap), 1e-12));
    residuals.push(Residual::bound("efficiency_loss_sign", -efficiency_loss, 1e-9 * scale));

    Ok(NashDiagnostics {
        efficiency_loss,
        per_agent_delta,
        marginal_measures,
        alpha_weights,
        entropy_terms,
        undervaluation,
        belief_distance,
        marginal_prices,
        residuals,
    })
}
