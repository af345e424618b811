//! Limits of the equilibria when risk tolerance grows without bound, either
//! for agent 0 alone or for both agents at a fixed ratio.

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, Market};
use crate::arrow_debreu::solve_arrow_debreu;
use crate::error::{check_len, Error, Result};
use crate::measures::{
    expect, log_sum_exp, normalize_log_density, relative_entropy, variance, Measure, RandomVariable,
};
use crate::nash::{solve_nash_with, NashConfig};
use crate::solve1d::{exp_linear_root, expand_bracket_increasing, newton_bisect, RootOptions};

/// `(C∞*_0, 0, δ_1 H(P_0|P_1))`: the limiting security of agent 0 and the
/// limiting gains of both agents.
pub fn limiting_arrow_debreu(p0: &Measure, agent1: &Agent) -> Result<(RandomVariable, f64, f64)> {
    check_len(agent1.beliefs.len(), p0.len())?;
    let d1 = agent1.delta;
    let h = relative_entropy(p0, &agent1.beliefs)?;
    let security = p0.log_density(&agent1.beliefs)?.map(|l| d1 * l - d1 * h)?;
    Ok((security, 0.0, d1 * h))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitingNash {
    pub z: f64,
    pub security: RandomVariable,
    /// `dQ∞◇/dP_0 = (1 + C∞◇_0/δ_1)^{-1}`.
    pub pricing: Measure,
    /// `log(1 + C∞◇_0/δ_1)`.
    pub log_margin: RandomVariable,
    /// `E_{P_0}[(1 + C∞◇_0/δ_1)^{-1}] - 1`.
    pub root_residual: f64,
}

fn limit_margins(d1: f64, z: f64, c_star: &RandomVariable) -> Result<Vec<f64>> {
    c_star
        .iter()
        .enumerate()
        .map(|(s, c)| {
            exp_linear_root(d1, d1, z + c)
                .ok_or_else(|| Error::solver("limiting security", format!("state {s}: no convergence")))
        })
        .collect()
}

/// `-log E_{P_0}[e^{-t(z)}]` and its derivative; increasing in `z`.
fn limit_root_fn(p0: &Measure, d1: f64, z: f64, c_star: &RandomVariable) -> Result<(f64, f64)> {
    let t = limit_margins(d1, z, c_star)?;
    let terms: Vec<f64> = p0.log_weights().iter().zip(&t).map(|(l, t)| l - t).collect();
    let lse = log_sum_exp(&terms);
    let slope: f64 = terms
        .iter()
        .zip(&t)
        .map(|(w, t)| (w - lse).exp() / (d1 * (t.exp() + 1.0)))
        .sum();
    Ok((-lse, slope))
}

pub fn limiting_nash(p0: &Measure, agent1: &Agent) -> Result<LimitingNash> {
    let (c_star, _, _) = limiting_arrow_debreu(p0, agent1)?;
    let d1 = agent1.delta;
    let g = |z: f64| limit_root_fn(p0, d1, z, &c_star).map(|v| v.0);
    let (lo, hi) = expand_bracket_increasing("limiting nash bracket", g, 0.0, d1, 1e6 * d1.max(1.0))?;
    let z = if lo == hi {
        lo
    } else {
        let mut failure = None;
        let root = newton_bisect(
            "limiting nash root",
            |z| match limit_root_fn(p0, d1, z, &c_star) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    (f64::NAN, f64::NAN)
                }
            },
            lo,
            hi,
            0.5 * (lo + hi),
            RootOptions::default(),
        );
        if let Some(e) = failure {
            return Err(e);
        }
        root?.x
    };
    let log_margin = RandomVariable::new(limit_margins(d1, z, &c_star)?)?;
    let security = log_margin.map(|t| d1 * t.exp_m1())?;
    let pricing = normalize_log_density(p0, &log_margin.scale(-1.0)?)?;
    let root_residual = expect(p0, &log_margin.map(|t| (-t).exp())?)? - 1.0;
    Ok(LimitingNash {
        z,
        security,
        pricing,
        log_margin,
        root_residual,
    })
}

/// `(Var_{Q∞◇}(C∞◇_0)/δ_1, -Var_{Q∞◇}(C∞◇_0)/δ_1 - δ_1 H(P_0|Q∞◇))`.
pub fn limiting_gains(p0: &Measure, agent1: &Agent) -> Result<(f64, f64)> {
    let lim = limiting_nash(p0, agent1)?;
    gains_of(p0, agent1, &lim)
}

fn gains_of(p0: &Measure, agent1: &Agent, lim: &LimitingNash) -> Result<(f64, f64)> {
    let d1 = agent1.delta;
    let v = variance(&lim.pricing, &lim.security)? / d1;
    let h = relative_entropy(p0, &lim.pricing)?;
    Ok((v, -v - d1 * h))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub delta0: f64,
    /// `‖C*_0 - C∞*_0‖∞`.
    pub ad_distance: f64,
    /// `‖C◇_0 - C∞◇_0‖∞`.
    pub nash_distance: f64,
    pub z0: f64,
    /// `u◇_0 - u*_0`.
    pub gain_agent0: f64,
    /// `u◇_1 - u*_1`.
    pub gain_agent1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub limiting_ad_security: RandomVariable,
    pub limiting_ad_gain_agent1: f64,
    pub limiting_nash_security: RandomVariable,
    pub z_infinity: f64,
    pub limiting_pricing: Measure,
    pub gain_agent0: f64,
    pub loss_agent1: f64,
    pub root_residual: f64,
    /// `z∞ - Var_{Q∞◇}(C∞◇_0)/δ_1 - δ_1 H(P_0|Q∞◇)`.
    pub accounting_residual: f64,
    pub convergence_table: Vec<ConvergenceRow>,
}

/// Limit objects for agent 0 together with finite-`δ_0` solutions along `delta0_sequence`.
pub fn limit_report(
    p0: &Measure,
    agent1: &Agent,
    delta0_sequence: &[f64],
    config: &NashConfig,
) -> Result<LimitReport> {
    let (ad_limit, _, ad_gain1) = limiting_arrow_debreu(p0, agent1)?;
    let lim = limiting_nash(p0, agent1)?;
    let (gain0, loss1) = gains_of(p0, agent1, &lim)?;
    let d1 = agent1.delta;
    let accounting_residual = lim.z
        - variance(&lim.pricing, &lim.security)? / d1
        - d1 * relative_entropy(p0, &lim.pricing)?;

    let mut convergence_table = Vec::with_capacity(delta0_sequence.len());
    for &delta0 in delta0_sequence {
        let market = Market::new(vec![Agent::new(delta0, p0.clone())?, agent1.clone()])?;
        let ad = solve_arrow_debreu(&market)?;
        let nash = solve_nash_with(&market, &ad, config)?;
        convergence_table.push(ConvergenceRow {
            delta0,
            ad_distance: ad.securities[0].sup_distance(&ad_limit)?,
            nash_distance: nash.securities[0].sup_distance(&lim.security)?,
            z0: nash.z.as_slice()[0],
            gain_agent0: nash.agent_values[0] - ad.agent_gains[0],
            gain_agent1: nash.agent_values[1] - ad.agent_gains[1],
        });
    }
    Ok(LimitReport {
        limiting_ad_security: ad_limit,
        limiting_ad_gain_agent1: ad_gain1,
        limiting_nash_security: lim.security,
        z_infinity: lim.z,
        limiting_pricing: lim.pricing,
        gain_agent0: gain0,
        loss_agent1: loss1,
        root_residual: lim.root_residual,
        accounting_residual,
        convergence_table,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BothLimitRow {
    pub delta: f64,
    /// `‖C*_0 - (λ_1 ξ_0 - λ_0 ξ_1)‖∞`.
    pub ad_distance: f64,
    /// `‖C◇_0 - (λ_1 ξ_0 - λ_0 ξ_1)/2‖∞`.
    pub nash_distance: f64,
    /// `‖C◇_0‖∞ / ‖C*_0‖∞`.
    pub volume_ratio: f64,
}

/// Both risk tolerances scale as `δ_i = λ_i δ` with beliefs `log dP_i/dP ∼ ξ_i/δ_i`.
pub fn both_limit_check(
    baseline: &Measure,
    xi0: &RandomVariable,
    xi1: &RandomVariable,
    lambda0: f64,
    delta_sequence: &[f64],
    config: &NashConfig,
) -> Result<Vec<BothLimitRow>> {
    check_len(baseline.len(), xi0.len())?;
    check_len(baseline.len(), xi1.len())?;
    if !(lambda0 > 0.0 && lambda0 < 1.0) {
        return Err(Error::contract(format!("lambda0 = {lambda0} must lie in (0, 1)")));
    }
    let lambda1 = 1.0 - lambda0;
    let xi0 = xi0.shift(-expect(baseline, xi0)?)?;
    let xi1 = xi1.shift(-expect(baseline, xi1)?)?;
    let ad_limit = xi0.zip_with(&xi1, |a, b| lambda1 * a - lambda0 * b)?;
    let nash_limit = ad_limit.scale(0.5)?;

    let mut rows = Vec::with_capacity(delta_sequence.len());
    for &delta in delta_sequence {
        let (d0, d1) = (lambda0 * delta, lambda1 * delta);
        let p0 = normalize_log_density(baseline, &xi0.scale(1.0 / d0)?)?;
        let p1 = normalize_log_density(baseline, &xi1.scale(1.0 / d1)?)?;
        let market = Market::new(vec![Agent::new(d0, p0)?, Agent::new(d1, p1)?])?;
        let ad = solve_arrow_debreu(&market)?;
        let nash = solve_nash_with(&market, &ad, config)?;
        let ad_norm = ad.securities[0].sup_norm();
        rows.push(BothLimitRow {
            delta,
            ad_distance: ad.securities[0].sup_distance(&ad_limit)?,
            nash_distance: nash.securities[0].sup_distance(&nash_limit)?,
            volume_ratio: if ad_norm > 0.0 { nash.securities[0].sup_norm() / ad_norm } else { 0.0 },
        });
    }
    Ok(rows)
}
