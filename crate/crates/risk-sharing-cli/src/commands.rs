//! Solve pipelines shared by the CLI subcommands.

use std::collections::BTreeMap;
use std::fmt::Write;

use risk_sharing::limits::both_limit_check;
use risk_sharing::{
    compute_diagnostics, limit_report, normalize_log_density, solve_arrow_debreu, solve_best_response,
    solve_nash_with, Agent, Market, Measure, RandomVariable, Residual,
};

use crate::bundle::{BestResponseSection, LimitsSection, Provenance, ResultBundle, SCHEMA_VERSION};
use crate::error::{IoError, Result};
use crate::expr::evaluate;
use crate::histogram::{histogram, Histogram};
use crate::ledger;
use crate::market::build_market;
use crate::scenario::{LimitsSpec, Scenario};
use crate::states::{build_state_space, States};

/// A scenario realised on its state space.
#[derive(Debug, Clone)]
pub struct Realized {
    pub scenario: Scenario,
    pub states: States,
    /// Beliefs before endowments are folded in.
    pub actual: Vec<Measure>,
    pub market: Option<Market>,
}

pub fn realize(scenario: &Scenario) -> Result<Realized> {
    scenario.validate()?;
    let states = build_state_space(scenario)?;
    let (market, actual) = if scenario.agents.is_empty() {
        (None, Vec::new())
    } else {
        let (m, a) = build_market(scenario, &states)?;
        (Some(m), a)
    };
    Ok(Realized {
        scenario: scenario.clone(),
        states,
        actual,
        market,
    })
}

impl Realized {
    pub fn market(&self) -> Result<&Market> {
        self.market
            .as_ref()
            .ok_or_else(|| IoError::validation("this command needs at least 2 agents"))
    }
}

pub enum LimitsInputs {
    OneAgent {
        p0: Measure,
        agent1: Agent,
        delta0: Vec<f64>,
    },
    Both {
        baseline: Measure,
        xi0: RandomVariable,
        xi1: RandomVariable,
        lambda0: f64,
        delta: Vec<f64>,
    },
}

pub fn limits_inputs(r: &Realized) -> Result<LimitsInputs> {
    match &r.scenario.limits {
        None => Err(IoError::validation("the scenario has no [limits] section")),
        Some(LimitsSpec::OneAgent { delta0 }) => {
            let m = r.market()?;
            if m.n_agents() != 2 {
                return Err(IoError::validation("one-agent limits need exactly 2 agents"));
            }
            Ok(LimitsInputs::OneAgent {
                p0: m.beliefs(0).clone(),
                agent1: m.agent(1).clone(),
                delta0: delta0.clone(),
            })
        }
        Some(LimitsSpec::Both { xi0, xi1, lambda0, delta }) => {
            let n = r.states.len();
            Ok(LimitsInputs::Both {
                baseline: r.states.baseline.clone(),
                xi0: evaluate(xi0, &r.states.variables, n)?,
                xi1: evaluate(xi1, &r.states.variables, n)?,
                lambda0: *lambda0,
                delta: delta.clone(),
            })
        }
    }
}

/// Which objects a command solves for.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Steps {
    pub arrow_debreu: bool,
    pub nash: bool,
    /// Strategic agent and whether the others report truthfully.
    pub best_response: Option<(usize, bool)>,
    pub limits: bool,
}

impl Steps {
    pub fn arrow_debreu() -> Self {
        Self { arrow_debreu: true, ..Self::default() }
    }

    pub fn nash() -> Self {
        Self { arrow_debreu: true, nash: true, ..Self::default() }
    }

    pub fn best_response(agent: usize, truthful_others: bool) -> Self {
        Self {
            arrow_debreu: true,
            nash: !truthful_others,
            best_response: Some((agent, truthful_others)),
            limits: false,
        }
    }

    pub fn limits() -> Self {
        Self { limits: true, ..Self::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HistRequest {
    pub expressions: Vec<String>,
    pub bins: usize,
    pub range: Option<(f64, f64)>,
}

pub fn run(scenario: &Scenario, command: &str, steps: Steps, hist: &HistRequest) -> Result<ResultBundle> {
    let realized = realize(scenario)?;
    let config = scenario.solver.nash_config();
    let mut bundle = ResultBundle {
        schema_version: SCHEMA_VERSION,
        command: command.to_string(),
        provenance: Provenance::new(realized.states.info.clone()),
        scenario: scenario.clone(),
        market: realized.market.clone(),
        arrow_debreu: None,
        nash: None,
        diagnostics: None,
        best_response: None,
        limits: None,
        histograms: Vec::new(),
        ledger: Vec::new(),
        certified: false,
    };

    if steps.arrow_debreu || steps.nash || steps.best_response.is_some() {
        let market = realized.market()?;
        let ad = solve_arrow_debreu(market)?;
        if steps.nash {
            let nash = solve_nash_with(market, &ad, &config)?;
            bundle.diagnostics = compute_diagnostics(market, &ad, &nash).ok();
            bundle.nash = Some(nash);
        }
        if let Some((agent, truthful_others)) = steps.best_response {
            market.check_agent(agent)?;
            let reports_others: Vec<Measure> = (0..market.n_agents())
                .filter(|&j| j != agent)
                .map(|j| match (&bundle.nash, truthful_others) {
                    (Some(n), false) => n.revealed[j].clone(),
                    _ => market.beliefs(j).clone(),
                })
                .collect();
            let response = solve_best_response(market, agent, &reports_others)?;
            bundle.best_response = Some(BestResponseSection {
                agent,
                truthful_others,
                reports_others,
                response,
            });
        }
        bundle.arrow_debreu = Some(ad);
    }

    if steps.limits {
        bundle.limits = Some(match limits_inputs(&realized)? {
            LimitsInputs::OneAgent { p0, agent1, delta0 } => {
                LimitsSection::OneAgent(limit_report(&p0, &agent1, &delta0, &config)?)
            }
            LimitsInputs::Both { baseline, xi0, xi1, lambda0, delta } => LimitsSection::Both {
                rows: both_limit_check(&baseline, &xi0, &xi1, lambda0, &delta, &config)?,
            },
        });
    }

    bundle.histograms = histograms(&realized, &bundle, hist)?;
    bundle.ledger = ledger::build(&realized, &bundle);
    bundle.certified = bundle.ledger.iter().all(Residual::passed);
    Ok(bundle)
}

/// Random variables available to histogram expressions: the state variables,
/// `Cstar{i}`, `Cnash{i}` and `Cr`.
pub fn histogram_variables(r: &Realized, b: &ResultBundle) -> Result<BTreeMap<String, RandomVariable>> {
    let mut vars = r.states.variables.clone();
    let mut add = |name: String, v: &RandomVariable| {
        if vars.insert(name.clone(), v.clone()).is_some() {
            return Err(IoError::validation(format!("state variable `{name}` shadows a result variable")));
        }
        Ok(())
    };
    if let Some(ad) = &b.arrow_debreu {
        for (i, c) in ad.securities.iter().enumerate() {
            add(format!("Cstar{i}"), c)?;
        }
    }
    if let Some(n) = &b.nash {
        for (i, c) in n.securities.iter().enumerate() {
            add(format!("Cnash{i}"), c)?;
        }
    }
    if let Some(br) = &b.best_response {
        add("Cr".to_string(), &br.response.security)?;
    }
    Ok(vars)
}

/// Measures available to histograms, by name.
///
/// `P{i}` are the endowment-adjusted beliefs and `Pact{i}` the beliefs before
/// adjustment. `Rr` is the best response in adjusted form and `Rr_act` the
/// same report expressed against the unadjusted beliefs.
pub fn histogram_measures(r: &Realized, b: &ResultBundle) -> Result<Vec<(String, Measure)>> {
    let mut out = vec![("baseline".to_string(), r.states.baseline.clone())];
    if let Some(m) = &r.market {
        for i in 0..m.n_agents() {
            out.push((format!("P{i}"), m.beliefs(i).clone()));
        }
        for (i, p) in r.actual.iter().enumerate() {
            out.push((format!("Pact{i}"), p.clone()));
        }
    }
    if let Some(ad) = &b.arrow_debreu {
        out.push(("Qstar".to_string(), ad.pricing.clone()));
    }
    if let Some(n) = &b.nash {
        out.push(("Qnash".to_string(), n.pricing.clone()));
        for (i, q) in n.revealed.iter().enumerate() {
            out.push((format!("R{i}"), q.clone()));
        }
    }
    if let Some(br) = &b.best_response {
        let resp = &br.response;
        out.push(("Rr".to_string(), resp.reported.clone()));
        if let Some(actual) = r.actual.get(br.agent) {
            let act = normalize_log_density(actual, &resp.log_margin.scale(-1.0)?)?;
            out.push(("Rr_act".to_string(), act));
        }
        out.push(("Qr".to_string(), resp.valuation.clone()));
    }
    Ok(out)
}

fn histograms(r: &Realized, b: &ResultBundle, req: &HistRequest) -> Result<Vec<Histogram>> {
    if req.expressions.is_empty() {
        return Ok(Vec::new());
    }
    let vars = histogram_variables(r, b)?;
    let measures = histogram_measures(r, b)?;
    let mut out = Vec::new();
    for expr in &req.expressions {
        let values = evaluate(expr, &vars, r.states.len())?;
        for (name, q) in &measures {
            out.push(histogram(expr, name, &values, q, req.bins, req.range)?);
        }
    }
    Ok(out)
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

/// Human-readable report of a bundle.
pub fn summary(b: &ResultBundle) -> String {
    let mut s = String::new();
    let p = &b.provenance.states;
    let _ = writeln!(s, "{}: {}", b.command, b.scenario.name);
    let _ = write!(s, "  states        {}", p.states);
    if let Some(q) = p.quadrature_order {
        let _ = write!(s, " (Gauss-Hermite order {q}");
        if let Some(r) = p.rank {
            let _ = write!(s, ", rank {r}");
        }
        let _ = write!(s, ")");
    }
    if let (Some(n), Some(seed)) = (p.samples, p.seed) {
        let _ = write!(s, " ({n} samples, seed {seed})");
    }
    if p.repaired {
        let _ = write!(s, " [correlation clipped to PSD]");
    }
    let _ = writeln!(s);
    if let Some(m) = &b.market {
        let d: Vec<f64> = m.agents().iter().map(|a| a.delta).collect();
        let _ = writeln!(s, "  delta         {}", fmt_list(&d));
    }
    if let Some(ad) = &b.arrow_debreu {
        let _ = writeln!(s, "  u*_i          {}", fmt_list(&ad.agent_gains));
        let _ = writeln!(s, "  u*            {:.6}", ad.aggregate_gain);
    }
    if let Some(n) = &b.nash {
        let _ = writeln!(s, "  z◇            {}", fmt_list(n.z.as_slice()));
        let _ = writeln!(s, "  u◇_i          {}", fmt_list(&n.agent_values));
        let _ = writeln!(s, "  ℓ(z◇)         {:.3e}", n.distance);
        if !n.other_roots.is_empty() {
            let _ = writeln!(s, "  other roots   {}", n.other_roots.len());
        }
    }
    if let Some(d) = &b.diagnostics {
        let _ = writeln!(s, "  u* - u◇       {:.6e}", d.efficiency_loss);
    }
    if let Some(br) = &b.best_response {
        let _ = writeln!(
            s,
            "  best response agent {} ({} others): ζ = {:.6}, value = {:.6}",
            br.agent,
            if br.truthful_others { "truthful" } else { "Nash-revealed" },
            br.response.zeta,
            br.response.response_value
        );
    }
    match &b.limits {
        Some(LimitsSection::OneAgent(l)) => {
            let _ = writeln!(s, "  z∞            {:.6}", l.z_infinity);
            let _ = writeln!(s, "  gain agent 0  {:.6}   loss agent 1 {:.6}", l.gain_agent0, l.loss_agent1);
            let _ = writeln!(s, "  {:>10} {:>12} {:>12} {:>12}", "delta0", "|C*-C∞*|", "|C◇-C∞◇|", "z0");
            for row in &l.convergence_table {
                let _ = writeln!(
                    s,
                    "  {:>10.0e} {:>12.3e} {:>12.3e} {:>12.6}",
                    row.delta0, row.ad_distance, row.nash_distance, row.z0
                );
            }
        }
        Some(LimitsSection::Both { rows }) => {
            let _ = writeln!(s, "  {:>10} {:>12} {:>12} {:>8}", "delta", "|C*-lim|", "|C◇-lim/2|", "ratio");
            for row in rows {
                let _ = writeln!(
                    s,
                    "  {:>10.0e} {:>12.3e} {:>12.3e} {:>8.4}",
                    row.delta, row.ad_distance, row.nash_distance, row.volume_ratio
                );
            }
        }
        None => {}
    }
    if !b.histograms.is_empty() {
        let _ = writeln!(s, "  histograms    {}", b.histograms.len());
    }
    let failed: Vec<&Residual> = b.failed().collect();
    let _ = writeln!(
        s,
        "  ledger        {} checks, {} failed -> {}",
        b.ledger.len(),
        failed.len(),
        if b.certified { "certified" } else { "NOT certified" }
    );
    for r in failed {
        let _ = writeln!(s, "    FAIL {:<28} {:.3e} (tolerance {:.1e})", r.name, r.value, r.tolerance);
    }
    s
}
