mod common;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use risk_sharing::{Measure, RandomVariable};
use scenario_io::histogram::histogram;
use scenario_io::ledger::recompute;
use scenario_io::{run, HistRequest, ResultBundle, Steps};

fn three_agent_bundle() -> ResultBundle {
    run(&common::scenario(common::THREE_AGENTS), "nash", Steps::nash(), &HistRequest::default()).unwrap()
}

#[test]
fn json_round_trip_is_bit_exact() {
    let b = three_agent_bundle();
    assert!(b.certified, "{:?}", b.failed().collect::<Vec<_>>());
    let text = b.to_json();
    let back = ResultBundle::from_json(&text).unwrap();
    assert_eq!(back, b);
    assert_eq!(back.to_json(), text);
    let nash = back.nash.as_ref().unwrap();
    for (a, c) in nash.securities.iter().zip(&b.nash.as_ref().unwrap().securities) {
        for (x, y) in a.iter().zip(c.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn atomic_write_then_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.json");
    let b = three_agent_bundle();
    b.write(&path).unwrap();
    b.write(&path).unwrap();
    assert_eq!(ResultBundle::read(&path).unwrap(), b);
    let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 1);
}

#[test]
fn stored_ledger_matches_recomputation() {
    let b = three_agent_bundle();
    assert_eq!(recompute(&b).unwrap(), b.ledger);
}

#[test]
fn tampered_securities_trip_the_ledger() {
    let mut b = three_agent_bundle();
    let nash = b.nash.as_mut().unwrap();
    let c = &nash.securities[1];
    nash.securities[1] = c.shift(1e-3).unwrap();
    let ledger = recompute(&b).unwrap();
    let failed: Vec<&str> = ledger.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    assert!(failed.contains(&"nash_recompute"), "{failed:?}");
    assert!(failed.contains(&"clearing"), "{failed:?}");
}

#[test]
fn tampered_pricing_or_z_trips_the_ledger() {
    let mut b = three_agent_bundle();
    let ad = b.arrow_debreu.as_mut().unwrap();
    let mut w = ad.pricing.weights().to_vec();
    w[0] += 1e-4;
    w[1] -= 1e-4;
    ad.pricing = Measure::from_weights(w).unwrap();
    assert!(recompute(&b).unwrap().iter().any(|r| !r.passed()));

    let mut b = three_agent_bundle();
    let z: Vec<f64> = b.nash.as_ref().unwrap().z.as_slice().to_vec();
    let moved = vec![z[0] + 1e-3, z[1] - 1e-3, z[2]];
    b.nash.as_mut().unwrap().z = risk_sharing::SimplexPoint::new(moved).unwrap();
    let failed: Vec<String> = recompute(&b).unwrap().into_iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    assert!(failed.iter().any(|n| n == "nash_distance"), "{failed:?}");
}

#[test]
fn histogram_of_known_law() {
    let v = RandomVariable::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    let q = Measure::from_weights(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let h = histogram("v", "q", &v, &q, 3, None).unwrap();
    assert_eq!(h.edges, vec![0.0, 1.0, 2.0, 3.0]);
    assert_abs_diff_eq!(h.mass[0], 0.1, epsilon = 1e-15);
    assert_abs_diff_eq!(h.mass[1], 0.2, epsilon = 1e-15);
    assert_abs_diff_eq!(h.mass[2], 0.7, epsilon = 1e-15);
    assert_abs_diff_eq!(h.mass_below(1.0), 0.1, epsilon = 1e-15);

    let h = histogram("v", "q", &v, &q, 2, Some((0.5, 2.5))).unwrap();
    assert_abs_diff_eq!(h.underflow, 0.1, epsilon = 1e-15);
    assert_abs_diff_eq!(h.overflow, 0.4, epsilon = 1e-15);
    assert_abs_diff_eq!(h.density[0], 0.2, epsilon = 1e-15);
}

#[test]
fn histograms_follow_requests() {
    let req = HistRequest {
        expressions: vec!["x".into(), "Cnash0 + x".into()],
        bins: 5,
        range: None,
    };
    let b = run(&common::scenario(common::THREE_AGENTS), "nash", Steps::nash(), &req).unwrap();
    // baseline, P0..P2, Pact0..Pact2, Qstar, Qnash, R0..R2 per expression.
    assert_eq!(b.histograms.len(), 2 * 12);
    for h in &b.histograms {
        assert_abs_diff_eq!(h.mass.iter().sum::<f64>() + h.underflow + h.overflow, 1.0, epsilon = 1e-12);
    }
}

proptest! {
    #[test]
    fn histogram_conserves_mass(values in proptest::collection::vec(-5.0f64..5.0, 1..40), bins in 1usize..20) {
        let n = values.len();
        let v = RandomVariable::new(values).unwrap();
        let q = Measure::uniform(n);
        let h = histogram("v", "q", &v, &q, bins, None).unwrap();
        prop_assert_eq!(h.underflow + h.overflow, 0.0);
        prop_assert!((h.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert_eq!(h.edges.len(), bins + 1);
    }
}
