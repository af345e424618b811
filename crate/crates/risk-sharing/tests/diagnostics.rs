mod common;

use approx::assert_abs_diff_eq;
use common::{beta_market, random_market, rng};
use risk_sharing::{
    compute_diagnostics, expect, relative_entropy, solve_arrow_debreu, solve_nash_with, variance, Error, Measure,
    NashConfig, ResidualKind,
};

#[test]
fn no_trade_diagnostics_vanish() {
    let mut r = rng(31);
    let market = random_market(&mut r, 3, 20, true);
    let ad = solve_arrow_debreu(&market).unwrap();
    let ne = solve_nash_with(&market, &ad, &NashConfig::default()).unwrap();
    let d = compute_diagnostics(&market, &ad, &ne).unwrap();
    assert!(d.all_passed());
    assert!(d.efficiency_loss.abs() < 1e-12);
    for i in 0..3 {
        assert!(d.per_agent_delta[i].abs() < 1e-12);
        assert!(d.entropy_terms[i].abs() < 1e-12);
        assert!(d.undervaluation[i].abs() < 1e-12);
        assert!(d.belief_distance[i].abs() < 1e-12);
        assert!(d.marginal_prices[i].abs() < 1e-12);
        assert!(d.marginal_measures[i].sup_distance(market.beliefs(0)).unwrap() < 1e-12);
    }
}

#[test]
fn symmetric_example_loses_efficiency_evenly() {
    let (market, _) = beta_market(1.0, 64);
    let ad = solve_arrow_debreu(&market).unwrap();
    let ne = solve_nash_with(&market, &ad, &NashConfig::default()).unwrap();
    let d = compute_diagnostics(&market, &ad, &ne).unwrap();
    assert!(d.all_passed(), "{:?}", d.residuals.iter().filter(|r| !r.passed()).collect::<Vec<_>>());
    assert!(d.efficiency_loss > 1e-3);
    assert_abs_diff_eq!(d.per_agent_delta[0], d.per_agent_delta[1], epsilon = 1e-9);
}

#[test]
fn identity_suite_on_random_markets() {
    let mut r = rng(32);
    for k in 0..10 {
        let agents = 2 + k % 3;
        let market = random_market(&mut r, agents, 30 + 7 * k, false);
        let ad = solve_arrow_debreu(&market).unwrap();
        let ne = solve_nash_with(&market, &ad, &NashConfig::default()).unwrap();
        let d = compute_diagnostics(&market, &ad, &ne).unwrap();
        for res in &d.residuals {
            assert!(res.passed(), "market {k}: {} = {:e}", res.name, res.value);
            if res.kind == ResidualKind::Identity && res.name != "zero_price" && res.name != "clearing" {
                assert!(res.tolerance <= 1e-8 * market.delta_total().max(1.0));
            }
        }
        assert_abs_diff_eq!(d.alpha_weights.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        let counterparties = (agents - 1) as f64;
        assert!(d.alpha_weights.iter().all(|a| *a > 0.0 && *a < 1.0 / counterparties));
        assert!(d.efficiency_loss > 0.0);
        assert!(d.marginal_prices.iter().all(|p| *p >= 0.0));
    }
}

#[test]
fn fields_match_direct_recomputation() {
    let mut r = rng(33);
    let market = random_market(&mut r, 3, 25, false);
    let ad = solve_arrow_debreu(&market).unwrap();
    let ne = solve_nash_with(&market, &ad, &NashConfig::default()).unwrap();
    let d = compute_diagnostics(&market, &ad, &ne).unwrap();
    for i in 0..3 {
        let dm = market.delta_minus(i);
        // dQ◇_i/dQ◇ = 1 + C◇_i/δ_{-i}, which already integrates to one.
        let w: Vec<f64> = (0..25)
            .map(|s| ne.pricing.weights()[s] * (1.0 + ne.securities[i].values()[s] / dm))
            .collect();
        let qi = Measure::from_weights(w).unwrap();
        assert!(qi.sup_distance(&d.marginal_measures[i]).unwrap() < 1e-12);
        assert_abs_diff_eq!(
            d.entropy_terms[i],
            market.delta(i) * relative_entropy(&ad.pricing, &qi).unwrap(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            d.marginal_prices[i],
            variance(&ne.pricing, &ne.securities[i]).unwrap() / dm,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(d.undervaluation[i], expect(&ad.pricing, &ne.securities[i]).unwrap(), epsilon = 1e-14);
    }
    assert_abs_diff_eq!(d.efficiency_loss, ad.aggregate_gain - ne.aggregate_value, epsilon = 1e-14);
}

#[test]
fn mismatched_inputs_are_rejected() {
    let mut r = rng(34);
    let market = random_market(&mut r, 2, 12, false);
    let other = random_market(&mut r, 2, 12, false);
    let ad = solve_arrow_debreu(&market).unwrap();
    let ne_other = solve_nash_with(&other, &solve_arrow_debreu(&other).unwrap(), &NashConfig::default()).unwrap();
    let mut ne = solve_nash_with(&market, &ad, &NashConfig::default()).unwrap();
    let d = compute_diagnostics(&market, &ad, &ne_other);
    assert!(d.is_err() || !d.unwrap().all_passed());
    ne.log_margins[0] = ne.log_margins[0].shift(0.1).unwrap();
    assert!(matches!(compute_diagnostics(&market, &ad, &ne), Err(Error::Contract(_))));
    let small = random_market(&mut r, 2, 5, false);
    assert!(matches!(compute_diagnostics(&small, &ad, &ne), Err(Error::Dimension { .. })));
}

#[test]
fn residual_ledger_serialises() {
    let mut r = rng(35);
    let market = random_market(&mut r, 3, 10, false);
    let ad = solve_arrow_debreu(&market).unwrap();
    let ne = solve_nash_with(&market, &ad, &NashConfig::default()).unwrap();
    let d = compute_diagnostics(&market, &ad, &ne).unwrap();
    let text = serde_json::to_string(&d).unwrap();
    assert!(text.contains("\"kind\":\"bound\""));
    assert_eq!(serde_json::from_str::<risk_sharing::NashDiagnostics>(&text).unwrap(), d);
    assert!(d.residual("pricing_decomposition").is_some());
}
