mod common;

use approx::assert_abs_diff_eq;
use risk_sharing::limits::limit_report;
use risk_sharing::{
    both_limit_check, expect, limiting_arrow_debreu, limiting_gains, limiting_nash, solve_arrow_debreu,
    solve_best_response, solve_nash, Agent, Market, Measure, NashConfig, RandomVariable,
};

fn m(w: &[f64]) -> Measure {
    Measure::from_weights(w.to_vec()).unwrap()
}

fn instance() -> (Measure, Agent) {
    (m(&[0.6, 0.4]), Agent::new(1.0, m(&[0.5, 0.5])).unwrap())
}

#[test]
fn identical_beliefs_have_trivial_limits() {
    let p = m(&[0.3, 0.3, 0.4]);
    let a1 = Agent::new(2.0, p.clone()).unwrap();
    let (c, g0, g1) = limiting_arrow_debreu(&p, &a1).unwrap();
    assert!(c.sup_norm() < 1e-15);
    assert_eq!(g0, 0.0);
    assert!(g1.abs() < 1e-15);
    let lim = limiting_nash(&p, &a1).unwrap();
    assert!(lim.z.abs() < 1e-12);
    assert!(lim.security.sup_norm() < 1e-12);
    let (gain, loss) = limiting_gains(&p, &a1).unwrap();
    assert!(gain.abs() < 1e-12 && loss.abs() < 1e-12);
}

#[test]
fn limiting_benchmark_by_hand() {
    let (p0, a1) = instance();
    let h = 0.6 * 1.2f64.ln() + 0.4 * 0.8f64.ln();
    assert_abs_diff_eq!(h, 0.02014, epsilon = 1e-5);
    let (c, g0, g1) = limiting_arrow_debreu(&p0, &a1).unwrap();
    assert_abs_diff_eq!(c.values()[0], 1.2f64.ln() - h, epsilon = 1e-15);
    assert_abs_diff_eq!(c.values()[1], 0.8f64.ln() - h, epsilon = 1e-15);
    assert_eq!(g0, 0.0);
    assert_abs_diff_eq!(g1, h, epsilon = 1e-15);

    let market = Market::new(vec![Agent::new(1e4, p0).unwrap(), a1]).unwrap();
    let ad = solve_arrow_debreu(&market).unwrap();
    assert!(ad.securities[0].sup_distance(&c).unwrap() < 1e-3);
}

#[test]
fn limiting_nash_root_and_bounds() {
    let (p0, a1) = instance();
    let lim = limiting_nash(&p0, &a1).unwrap();
    assert!(lim.root_residual.abs() <= 1e-10);
    assert!(lim.security.min() > -a1.delta);
    let (c_star, _, _) = limiting_arrow_debreu(&p0, &a1).unwrap();
    for s in 0..2 {
        let c = lim.security.values()[s];
        let res = c + a1.delta * (1.0 + c / a1.delta).ln() - lim.z - c_star.values()[s];
        assert!(res.abs() < 1e-12);
    }
    let inv = lim.security.map(|c| 1.0 / (1.0 + c / a1.delta)).unwrap();
    assert_abs_diff_eq!(expect(&p0, &inv).unwrap(), 1.0, epsilon = 1e-10);
}

#[test]
fn finite_tolerance_solutions_approach_the_limit() {
    let (p0, a1) = instance();
    let lim = limiting_nash(&p0, &a1).unwrap();
    let market = Market::new(vec![Agent::new(1e5, p0.clone()).unwrap(), a1.clone()]).unwrap();
    let ne = solve_nash(&market, &NashConfig::default()).unwrap();
    assert!(ne.securities[0].sup_distance(&lim.security).unwrap() < 1e-3);
    let br = solve_best_response(&market, 0, &[a1.beliefs.clone()]).unwrap();
    assert!(br.security.sup_distance(&lim.security).unwrap() < 1e-3);

    let ad = solve_arrow_debreu(&market).unwrap();
    let (gain, loss) = limiting_gains(&p0, &a1).unwrap();
    assert!(gain > 0.0 && loss < 0.0);
    assert_abs_diff_eq!(ne.agent_values[0] - ad.agent_gains[0], gain, epsilon = 1e-2);
    assert_abs_diff_eq!(ne.agent_values[1] - ad.agent_gains[1], loss, epsilon = 1e-2);
}

#[test]
fn convergence_table_is_monotone() {
    let (p0, a1) = instance();
    let report = limit_report(&p0, &a1, &[1e2, 1e3, 1e4, 1e5], &NashConfig::default()).unwrap();
    assert!(report.root_residual.abs() <= 1e-10);
    assert!(report.accounting_residual.abs() <= 1e-8);
    let rows = &report.convergence_table;
    for w in rows.windows(2) {
        assert!(w[1].ad_distance < w[0].ad_distance);
        assert!(w[1].nash_distance < w[0].nash_distance);
    }
    let last = rows.last().unwrap();
    assert!(last.ad_distance <= 1e-3 && last.nash_distance <= 1e-3);
    assert!((last.gain_agent0 - report.gain_agent0).abs() <= 1e-2);
    assert!((last.gain_agent1 - report.loss_agent1).abs() <= 1e-2);
}

#[test]
fn both_scaling_halves_the_benchmark() {
    let base = m(&[0.5, 0.5]);
    let xi0 = RandomVariable::new(vec![1.0, -1.0]).unwrap();
    let xi1 = RandomVariable::new(vec![-1.0, 1.0]).unwrap();
    let rows = both_limit_check(&base, &xi0, &xi1, 0.5, &[10.0, 1e2, 1e3, 1e4], &NashConfig::default()).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].nash_distance * 5.0 <= w[0].nash_distance);
        // The benchmark is exact on this instance at every scale.
        assert!(w[1].ad_distance < 1e-12);
    }
    assert!(rows.last().unwrap().nash_distance <= 1e-3);
    assert_abs_diff_eq!(rows.last().unwrap().volume_ratio, 0.5, epsilon = 1e-3);

    let same = both_limit_check(&base, &xi0, &xi0, 0.5, &[1e2], &NashConfig::default()).unwrap();
    assert!(same[0].ad_distance < 1e-12 && same[0].nash_distance < 1e-12);
}

#[test]
fn both_scaling_rejects_bad_shares() {
    let base = m(&[0.5, 0.5]);
    let xi = RandomVariable::new(vec![1.0, -1.0]).unwrap();
    assert!(both_limit_check(&base, &xi, &xi, 1.0, &[10.0], &NashConfig::default()).is_err());
}
