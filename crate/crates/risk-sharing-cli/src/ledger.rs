//! The residual ledger: every stored result is checked against a fresh
//! recomputation from the scenario and against its defining identities.

use risk_sharing::limits::both_limit_check;
use risk_sharing::nash::inner_solve;
use risk_sharing::{
    cara_utility, compute_diagnostics, expect, geometric_mean_measure, limit_report, nash_distance,
    normalize_log_density, response_value, solve_arrow_debreu, solve_best_response, ArrowDebreuEquilibrium,
    Market, Measure, NashEquilibrium, RandomVariable, Residual,
};

use crate::bundle::{BestResponseSection, LimitsSection, ResultBundle};
use crate::commands::{limits_inputs, realize, LimitsInputs, Realized};
use crate::error::Result;

/// `ℓ(z)` accepted at a stored Nash root, relative to the aggregate tolerance.
pub const DISTANCE_TOL: f64 = 1e-8;

fn sup(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

fn sup_rv(a: &[RandomVariable], b: &[RandomVariable]) -> f64 {
    if a.len() != b.len() {
        return f64::MAX;
    }
    sup(a.iter().zip(b).map(|(x, y)| x.sup_distance(y).unwrap_or(f64::MAX)))
}

fn clearing(securities: &[RandomVariable]) -> f64 {
    let n = securities.first().map_or(0, RandomVariable::len);
    sup((0..n).map(|s| securities.iter().map(|c| c.values().get(s).copied().unwrap_or(f64::MAX)).sum::<f64>()))
}

fn zero_price(q: &Measure, securities: &[RandomVariable]) -> f64 {
    sup(securities.iter().map(|c| expect(q, c).unwrap_or(f64::MAX)))
}

/// A check that could not be evaluated.
fn broken(name: &str) -> Residual {
    Residual::bound(format!("{name}_evaluable"), 1.0, 0.0)
}

/// Recomputes the ledger of `bundle` from its scenario echo.
pub fn recompute(bundle: &ResultBundle) -> Result<Vec<Residual>> {
    let realized = realize(&bundle.scenario)?;
    Ok(build(&realized, bundle))
}

pub fn build(realized: &Realized, b: &ResultBundle) -> Vec<Residual> {
    let mut out = Vec::new();
    match (&realized.market, &b.market) {
        (Some(m), Some(stored)) => {
            out.push(Residual::identity("market_rebuild", market_gap(m, stored), 1e-12));
            let ad = match solve_arrow_debreu(m) {
                Ok(ad) => ad,
                Err(_) => {
                    out.push(broken("arrow_debreu"));
                    return out;
                }
            };
            if let Some(stored) = &b.arrow_debreu {
                arrow_debreu_checks(m, &ad, stored, &mut out);
            }
            if let Some(nash) = &b.nash {
                nash_checks(m, &ad, nash, b, &mut out);
            }
            if let Some(br) = &b.best_response {
                best_response_checks(m, br, b.nash.as_ref(), &mut out);
            }
        }
        (None, None) => {}
        _ => out.push(Residual::identity("market_rebuild", 1.0, 0.0)),
    }
    if let Some(lim) = &b.limits {
        limits_checks(realized, lim, &mut out);
    }
    out
}

fn market_gap(a: &Market, b: &Market) -> f64 {
    if a.n_agents() != b.n_agents() || a.n_states() != b.n_states() {
        return 1.0;
    }
    sup((0..a.n_agents()).map(|i| {
        let d = (a.delta(i) - b.delta(i)).abs() / a.delta(i);
        d.max(a.beliefs(i).sup_distance(b.beliefs(i)).unwrap_or(1.0))
    }))
}

fn arrow_debreu_checks(m: &Market, fresh: &ArrowDebreuEquilibrium, stored: &ArrowDebreuEquilibrium, out: &mut Vec<Residual>) {
    let scale = m.delta_total().max(1.0);
    out.push(Residual::identity("ad_clearing", clearing(&stored.securities), 1e-9 * scale));
    out.push(Residual::identity("ad_zero_price", zero_price(&stored.pricing, &stored.securities), 1e-9 * scale));
    let beliefs: Vec<&Measure> = m.agents().iter().map(|a| &a.beliefs).collect();
    let geometric = geometric_mean_measure(&beliefs, &m.lambdas())
        .and_then(|q| q.sup_distance(&stored.pricing))
        .unwrap_or(f64::MAX);
    out.push(Residual::identity("ad_pricing", geometric, 1e-12));
    out.push(Residual::identity("ad_recompute", sup_rv(&fresh.securities, &stored.securities), 1e-9 * scale));
    let gains = if fresh.agent_gains.len() == stored.agent_gains.len() {
        sup(fresh.agent_gains.iter().zip(&stored.agent_gains).map(|(a, b)| a - b))
    } else {
        f64::MAX
    };
    out.push(Residual::identity("ad_gains", gains, 1e-9 * scale));
}

fn nash_checks(m: &Market, ad: &ArrowDebreuEquilibrium, nash: &NashEquilibrium, b: &ResultBundle, out: &mut Vec<Residual>) {
    let scale = m.delta_total().max(1.0);
    match nash_distance(m, ad, &nash.z) {
        Ok(d) => out.push(Residual::bound("nash_distance", d, DISTANCE_TOL * scale)),
        Err(_) => out.push(broken("nash_distance")),
    }
    match inner_solve(m, ad, &nash.z) {
        Ok(inner) => {
            out.push(Residual::identity(
                "nash_recompute",
                sup_rv(&inner.securities, &nash.securities),
                1e-9 * scale,
            ));
            let q = inner.valuation.sup_distance(&nash.pricing).unwrap_or(f64::MAX);
            out.push(Residual::identity("nash_pricing_recompute", q, 1e-12));
        }
        Err(_) => out.push(broken("nash_recompute")),
    }
    let values = (0..m.n_agents().min(nash.securities.len()))
        .map(|i| cara_utility(m.agent(i), &nash.securities[i]).map(|u| u - nash.agent_values[i]))
        .collect::<risk_sharing::Result<Vec<_>>>();
    match values {
        Ok(v) if v.len() == nash.agent_values.len() => {
            out.push(Residual::identity("nash_values", sup(v), 1e-9 * scale))
        }
        _ => out.push(broken("nash_values")),
    }
    // The diagnostics trust the log-margins only when they match the securities.
    match compute_diagnostics(m, ad, nash) {
        Ok(d) => {
            if let Some(stored) = &b.diagnostics {
                let gap = (d.efficiency_loss - stored.efficiency_loss)
                    .abs()
                    .max(sup(d.per_agent_delta.iter().zip(&stored.per_agent_delta).map(|(a, b)| a - b)));
                out.push(Residual::identity("diagnostics_recompute", gap, 1e-9 * scale));
            }
            out.extend(d.residuals);
        }
        Err(_) => {
            out.push(Residual::identity("clearing", clearing(&nash.securities), 1e-9 * scale));
            out.push(Residual::identity("zero_price", zero_price(&nash.pricing, &nash.securities), 1e-9 * scale));
            out.push(broken("diagnostics"));
        }
    }
}

fn best_response_checks(m: &Market, br: &BestResponseSection, nash: Option<&NashEquilibrium>, out: &mut Vec<Residual>) {
    let i = br.agent;
    if i >= m.n_agents() || br.reports_others.len() + 1 != m.n_agents() {
        out.push(broken("best_response"));
        return;
    }
    let scale = m.delta_total().max(1.0);
    let expected: Option<Vec<Measure>> = if br.truthful_others {
        Some((0..m.n_agents()).filter(|&j| j != i).map(|j| m.beliefs(j).clone()).collect())
    } else {
        nash.map(|n| (0..m.n_agents()).filter(|&j| j != i).map(|j| n.revealed[j].clone()).collect())
    };
    let reports_gap = match expected {
        Some(e) => sup(e.iter().zip(&br.reports_others).map(|(a, b)| a.sup_distance(b).unwrap_or(1.0))),
        None => 1.0,
    };
    out.push(Residual::identity("br_reports_others", reports_gap, 1e-12));

    let r = &br.response;
    let dm = m.delta_minus(i);
    let margin_gap = sup(
        r.security
            .iter()
            .zip(r.log_margin.iter())
            .map(|(c, t)| (dm * t.exp_m1() - c) / c.abs().max(1.0)),
    );
    out.push(Residual::identity("br_margin_consistency", margin_gap, 1e-9));
    let lower = r.security.iter().fold(f64::NEG_INFINITY, |a, c| a.max(-dm - c));
    out.push(Residual::bound("br_lower_bound", lower, 1e-12 * scale));
    let price = expect(&r.valuation, &r.security).unwrap_or(f64::MAX);
    out.push(Residual::identity("br_zero_price", price, 1e-10 * scale));
    let reported = r
        .log_margin
        .scale(-1.0)
        .and_then(|l| normalize_log_density(m.beliefs(i), &l))
        .and_then(|q| q.sup_distance(&r.reported))
        .unwrap_or(f64::MAX);
    out.push(Residual::identity("br_reported_density", reported, 1e-10));
    let value = response_value(m, i, &r.reported, &br.reports_others)
        .map(|v| v - r.response_value)
        .unwrap_or(f64::MAX);
    out.push(Residual::identity("br_value", value, 1e-9 * scale));
    match solve_best_response(m, i, &br.reports_others) {
        Ok(fresh) => out.push(Residual::identity(
            "br_recompute",
            fresh.security.sup_distance(&r.security).unwrap_or(f64::MAX),
            1e-9 * scale,
        )),
        Err(_) => out.push(broken("br_recompute")),
    }
}

fn limits_checks(realized: &Realized, lim: &LimitsSection, out: &mut Vec<Residual>) {
    let inputs = match limits_inputs(realized) {
        Ok(i) => i,
        Err(_) => {
            out.push(broken("limits"));
            return;
        }
    };
    let config = realized.scenario.solver.nash_config();
    match (inputs, lim) {
        (LimitsInputs::OneAgent { p0, agent1, delta0 }, LimitsSection::OneAgent(stored)) => {
            out.push(Residual::identity("limit_root", stored.root_residual, 1e-10));
            out.push(Residual::identity("limit_accounting", stored.accounting_residual, 1e-8));
            match limit_report(&p0, &agent1, &delta0, &config) {
                Ok(fresh) => {
                    let sec = fresh
                        .limiting_nash_security
                        .sup_distance(&stored.limiting_nash_security)
                        .unwrap_or(f64::MAX)
                        .max(fresh.limiting_ad_security.sup_distance(&stored.limiting_ad_security).unwrap_or(f64::MAX))
                        .max((fresh.z_infinity - stored.z_infinity).abs());
                    out.push(Residual::identity("limit_recompute", sec, 1e-10));
                    let table = if fresh.convergence_table.len() == stored.convergence_table.len() {
                        sup(fresh.convergence_table.iter().zip(&stored.convergence_table).flat_map(|(a, b)| {
                            [a.ad_distance - b.ad_distance, a.nash_distance - b.nash_distance, a.z0 - b.z0]
                        }))
                    } else {
                        f64::MAX
                    };
                    out.push(Residual::identity("limit_table_recompute", table, 1e-8));
                }
                Err(_) => out.push(broken("limit_recompute")),
            }
        }
        (LimitsInputs::Both { baseline, xi0, xi1, lambda0, delta }, LimitsSection::Both { rows }) => {
            match both_limit_check(&baseline, &xi0, &xi1, lambda0, &delta, &config) {
                Ok(fresh) if fresh.len() == rows.len() => {
                    let gap = sup(fresh.iter().zip(rows).flat_map(|(a, b)| {
                        [a.ad_distance - b.ad_distance, a.nash_distance - b.nash_distance, a.volume_ratio - b.volume_ratio]
                    }));
                    out.push(Residual::identity("both_limit_recompute", gap, 1e-8));
                }
                _ => out.push(broken("both_limit_recompute")),
            }
        }
        _ => out.push(Residual::identity("limits_mode", 1.0, 0.0)),
    }
}
