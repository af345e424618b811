//! Best probability response of one agent against fixed reports of the others.
//!
//! The optimal report is parametrised by a scalar `ζ`. For fixed `ζ` each
//! state solves `(D - 1)/λ_i + log D = ζ - R_{-i}` for the margin
//! `D = 1 + C/δ_{-i}`; `ζ` itself is pinned by `E_{Q(ζ)}[D] = 1`.

use serde::{Deserialize, Serialize};

use crate::agents::{cara_utility, Market};
use crate::error::{check_len, Error, Result};
use crate::measures::{
    geometric_mean_measure, log_sum_exp, normalize_log_density, relative_entropy, Measure, RandomVariable,
};
use crate::solve1d::{exp_linear_root, expand_bracket_increasing, newton_bisect, RootOptions};

/// Largest `|ζ|` explored while bracketing.
pub const ZETA_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub reported: Measure,
    pub security: RandomVariable,
    pub valuation: Measure,
    pub zeta: f64,
    pub response_value: f64,
    /// `log(1 + C/δ_{-i})` per state.
    pub log_margin: RandomVariable,
}

/// Pricing measure and securities produced by the sharing rule applied to a
/// full profile of reports.
pub fn sharing_rule(market: &Market, reports: &[&Measure]) -> Result<(Measure, Vec<RandomVariable>)> {
    check_len(market.n_agents(), reports.len())?;
    let q = geometric_mean_measure(reports, &market.lambdas())?;
    let securities = reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let d = market.delta(i);
            let h = relative_entropy(&q, r)?;
            r.log_density(&q)?.map(|l| d * l + d * h)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((q, securities))
}

fn profile<'a>(market: &Market, i: usize, own: &'a Measure, others: &'a [Measure]) -> Result<Vec<&'a Measure>> {
    market.check_agent(i)?;
    if others.len() + 1 != market.n_agents() {
        return Err(Error::contract(format!(
            "expected {} counterparty reports, got {}",
            market.n_agents() - 1,
            others.len()
        )));
    }
    let mut out: Vec<&Measure> = others.iter().collect();
    out.insert(i, own);
    Ok(out)
}

/// `V_i(R_i; R_{-i})`: utility of agent `i` under the sharing rule.
pub fn response_value(market: &Market, i: usize, reported_i: &Measure, reports_others: &[Measure]) -> Result<f64> {
    let reports = profile(market, i, reported_i, reports_others)?;
    let (_, securities) = sharing_rule(market, &reports)?;
    cara_utility(market.agent(i), &securities[i])
}

/// `R_{-i} = (1/λ_{-i}) Σ_{j≠i} λ_j log(dR_j/dP_i)`.
pub fn counterparty_log_density(market: &Market, i: usize, reports_others: &[Measure]) -> Result<RandomVariable> {
    let own = market.beliefs(i);
    let reports = profile(market, i, own, reports_others)?;
    let dm = market.delta_minus(i);
    let mut acc = vec![0.0; market.n_states()];
    for (j, r) in reports.iter().enumerate() {
        if j == i {
            continue;
        }
        let w = market.delta(j) / dm;
        for (a, l) in acc.iter_mut().zip(r.log_density(own)?.values()) {
            *a += w * l;
        }
    }
    RandomVariable::new(acc)
}

fn inner_log_d(lambda_i: f64, z: f64, r_minus: &RandomVariable) -> Result<Vec<f64>> {
    let a = 1.0 / lambda_i;
    r_minus
        .iter()
        .enumerate()
        .map(|(s, r)| {
            exp_linear_root(a, 1.0, z - r).ok_or_else(|| {
                Error::solver("best-response margin", format!("state {s}: no convergence for z - R = {}", z - r))
            })
        })
        .collect()
}

/// Per-state solution `D` of `(D - 1)/λ_i + log D = z - R_{-i}`.
pub fn solve_inner_d(market: &Market, i: usize, z: f64, r_minus: &RandomVariable) -> Result<RandomVariable> {
    market.check_agent(i)?;
    check_len(market.n_states(), r_minus.len())?;
    if !z.is_finite() {
        return Err(Error::contract("z must be finite"));
    }
    let t = inner_log_d(market.lambda(i), z, r_minus)?;
    RandomVariable::new(t.into_iter().map(f64::exp).collect())
}

/// `log f(z)` and its derivative, where `f(z) = E_{Q(z)}[D(z)]`.
fn log_f(
    market: &Market,
    i: usize,
    z: f64,
    r_minus: &RandomVariable,
) -> Result<(f64, f64)> {
    let lam = market.lambda(i);
    let lam_m = market.lambda_minus(i);
    let t = inner_log_d(lam, z, r_minus)?;
    let lq: Vec<f64> = market
        .beliefs(i)
        .log_weights()
        .iter()
        .zip(&t)
        .zip(r_minus.values())
        .map(|((p, t), r)| p - lam * t + lam_m * r)
        .collect();
    let norm = log_sum_exp(&lq);
    let lqd: Vec<f64> = lq.iter().zip(&t).map(|(l, t)| l + t).collect();
    let value = log_sum_exp(&lqd) - norm;

    // d/dz log D = λ_i / (D + λ_i); the derivative of log f mixes its mean
    // under Q and under the D-tilted Q.
    let (mut e_q, mut e_tilt) = (0.0, 0.0);
    for s in 0..t.len() {
        let dt = lam / (t[s].exp() + lam);
        e_q += (lq[s] - norm).exp() * dt;
        e_tilt += (lqd[s] - norm - value).exp() * dt;
    }
    Ok((value, lam_m * e_tilt + lam * e_q))
}

pub fn solve_best_response(market: &Market, i: usize, reports_others: &[Measure]) -> Result<BestResponse> {
    let r_minus = counterparty_log_density(market, i, reports_others)?;
    let g = |z: f64| log_f(market, i, z, &r_minus).map(|v| v.0);
    let (lo, hi) = expand_bracket_increasing("best-response bracket", g, 0.0, 1.0, ZETA_LIMIT)?;
    let zeta = if lo == hi {
        lo
    } else {
        let mut failure = None;
        let root = newton_bisect(
            "best-response zeta",
            |z| match log_f(market, i, z, &r_minus) {
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

    let t = inner_log_d(market.lambda(i), zeta, &r_minus)?;
    let log_margin = RandomVariable::new(t)?;
    let dm = market.delta_minus(i);
    let security = log_margin.map(|t| dm * t.exp_m1())?;
    let p = market.beliefs(i);
    let reported = normalize_log_density(p, &log_margin.scale(-1.0)?)?;
    let lam = market.lambda(i);
    let lam_m = market.lambda_minus(i);
    let valuation = normalize_log_density(p, &log_margin.zip_with(&r_minus, |t, r| -lam * t + lam_m * r)?)?;
    let response_value = cara_utility(market.agent(i), &security)?;
    Ok(BestResponse {
        reported,
        security,
        valuation,
        zeta,
        response_value,
        log_margin,
    })
}
