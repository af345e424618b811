#![allow(dead_code)]

use std::num::NonZeroUsize;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use risk_sharing::{normalize_log_density, Agent, Market, Measure, RandomVariable};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gauss-Hermite rule for a standard normal, symmetrised so that `x_k = -x_{n-1-k}`.
pub fn standard_normal_rule(order: usize) -> (Vec<f64>, Vec<f64>) {
    let rule = gauss_quad::GaussHermite::new(NonZeroUsize::new(order).unwrap());
    let mut pairs: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (x * 2f64.sqrt(), w / std::f64::consts::PI.sqrt()))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let x: Vec<f64> = (0..n).map(|k| 0.5 * (pairs[k].0 - pairs[n - 1 - k].0)).collect();
    let w: Vec<f64> = (0..n).map(|k| 0.5 * (pairs[k].1 + pairs[n - 1 - k].1)).collect();
    let total: f64 = w.iter().sum();
    (x, w.into_iter().map(|v| v / total).collect())
}

/// Two unit-tolerance agents with `log dP_0/dP ∼ βX` and `log dP_1/dP ∼ -βX`.
pub fn beta_market(beta: f64, order: usize) -> (Market, RandomVariable) {
    let (x, w) = standard_normal_rule(order);
    let base = Measure::from_weights(w).unwrap();
    let x = RandomVariable::new(x).unwrap();
    let p0 = normalize_log_density(&base, &x.scale(beta).unwrap()).unwrap();
    let p1 = normalize_log_density(&base, &x.scale(-beta).unwrap()).unwrap();
    let market = Market::new(vec![Agent::new(1.0, p0).unwrap(), Agent::new(1.0, p1).unwrap()]).unwrap();
    (market, x)
}

pub fn random_measure(rng: &mut ChaCha8Rng, states: usize) -> Measure {
    let w: Vec<f64> = (0..states).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = w.iter().sum();
    Measure::from_weights(w.into_iter().map(|v| v / total).collect()).unwrap()
}

pub fn tilt(rng: &mut ChaCha8Rng, base: &Measure, spread: f64) -> Measure {
    let l: Vec<f64> = (0..base.len()).map(|_| rng.random_range(-spread..spread)).collect();
    normalize_log_density(base, &RandomVariable::new(l).unwrap()).unwrap()
}

/// Random market; `common` gives every agent the same beliefs.
pub fn random_market(rng: &mut ChaCha8Rng, agents: usize, states: usize, common: bool) -> Market {
    let base = random_measure(rng, states);
    let list = (0..agents)
        .map(|_| {
            let delta = rng.random_range(0.5..2.0);
            let beliefs = if common { base.clone() } else { tilt(rng, &base, 1.0) };
            Agent::new(delta, beliefs).unwrap()
        })
        .collect();
    Market::new(list).unwrap()
}

pub fn max_abs(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Tensor Gauss-Hermite grid for `(E_0, E_1)` with unit variances and correlation `rho`.
pub fn correlated_pair(order: usize, rho: f64) -> (Measure, RandomVariable, RandomVariable) {
    let (x, w) = standard_normal_rule(order);
    let mut e0 = Vec::with_capacity(order * order);
    let mut e1 = Vec::with_capacity(order * order);
    let mut weights = Vec::with_capacity(order * order);
    let tail = (1.0 - rho * rho).sqrt();
    for a in 0..order {
        for b in 0..order {
            e0.push(x[a]);
            e1.push(rho * x[a] + tail * x[b]);
            weights.push(w[a] * w[b]);
        }
    }
    let l: Vec<f64> = weights.iter().map(|v| v.ln()).collect();
    (
        Measure::from_log_density(&l).unwrap(),
        RandomVariable::new(e0).unwrap(),
        RandomVariable::new(e1).unwrap(),
    )
}
