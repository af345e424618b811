//! Probability measures and random variables on a finite state space.
//!
//! Measures keep their log-weights next to the weights. Densities are always
//! formed as differences of log-weights and renormalised with a max shift, so
//! a measure can carry states whose weight underflows `f64` without losing
//! equivalence to the baseline.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Explicitly supplied weights below this are rejected.
pub const MIN_WEIGHT: f64 = 1e-300;
/// Allowed deviation of the weight total from one.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// `log sum exp(x)`, shifted by the maximum.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Real value per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RandomVariable {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for RandomVariable {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<RandomVariable> for Vec<f64> {
    fn from(rv: RandomVariable) -> Self {
        rv.values
    }
}

impl RandomVariable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(s) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!("random variable is not finite in state {s}")));
        }
        Ok(Self { values })
    }

    /// Internal constructor for values produced by finite arithmetic.
    pub(crate) fn from_vec(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values }
    }

    pub fn constant(len: usize, c: f64) -> Self {
        Self { values: vec![c; len] }
    }

    pub fn zeros(len: usize) -> Self {
        Self::constant(len, 0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.values.iter()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_len(self.len(), other.len())?;
        Self::new(self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, k: f64) -> Result<Self> {
        self.map(|v| k * v)
    }

    pub fn shift(&self, c: f64) -> Result<Self> {
        self.map(|v| v + c)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        check_len(self.len(), other.len())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// Finite list of labelled states with a strictly positive baseline law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    labels: Vec<String>,
    baseline: Measure,
}

impl StateSpace {
    pub fn new(labels: Vec<String>, baseline_weights: Vec<f64>) -> Result<Self> {
        check_len(baseline_weights.len(), labels.len())?;
        let baseline = Measure::from_weights(baseline_weights)?;
        Ok(Self { labels, baseline })
    }

    /// States labelled `s0, s1, ...`.
    pub fn unlabelled(baseline_weights: Vec<f64>) -> Result<Self> {
        let labels = (0..baseline_weights.len()).map(|s| format!("s{s}")).collect();
        Self::new(labels, baseline_weights)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn baseline(&self) -> &Measure {
        &self.baseline
    }
}

/// Probability vector equivalent to the baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measure {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

#[derive(Deserialize)]
struct MeasureRepr {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

impl<'de> Deserialize<'de> for Measure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = MeasureRepr::deserialize(d)?;
        Measure::from_parts(r.weights, r.log_weights).map_err(serde::de::Error::custom)
    }
}

impl Measure {
    /// Validates explicit weights: positive, at least [`MIN_WEIGHT`], summing to one.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::contract("measure needs at least one state"));
        }
        if let Some(s) = weights.iter().position(|w| !(w.is_finite() && *w >= MIN_WEIGHT)) {
            return Err(Error::contract(format!(
                "weight {:e} in state {s} is below the floor {MIN_WEIGHT:e}",
                weights[s]
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::contract(format!("weights sum to {total}, not 1")));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self { weights, log_weights })
    }

    /// Normalises `exp(log_unnormalised)`.
    pub fn from_log_density(log_unnormalised: &[f64]) -> Result<Self> {
        if log_unnormalised.is_empty() {
            return Err(Error::contract("measure needs at least one state"));
        }
        if let Some(s) = log_unnormalised.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!("log-density is not finite in state {s}")));
        }
        let lse = log_sum_exp(log_unnormalised);
        let log_weights: Vec<f64> = log_unnormalised.iter().map(|l| l - lse).collect();
        let weights = log_weights.iter().map(|l| l.exp()).collect();
        Ok(Self { weights, log_weights })
    }

    fn from_parts(weights: Vec<f64>, log_weights: Vec<f64>) -> Result<Self> {
        check_len(weights.len(), log_weights.len())?;
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::contract(format!("weights sum to {total}, not 1")));
        }
        for (s, (w, l)) in weights.iter().zip(&log_weights).enumerate() {
            let consistent = l.is_finite() && *w >= 0.0 && (w - l.exp()).abs() <= 1e-12 * w.max(1e-300);
            if !consistent {
                return Err(Error::contract(format!(
                    "weight {w:e} and log-weight {l:e} disagree in state {s}"
                )));
            }
        }
        Ok(Self { weights, log_weights })
    }

    pub fn uniform(len: usize) -> Self {
        let w = 1.0 / len as f64;
        Self {
            weights: vec![w; len],
            log_weights: vec![w.ln(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// `log(d self / d other)` per state.
    pub fn log_density(&self, other: &Measure) -> Result<RandomVariable> {
        check_len(other.len(), self.len())?;
        Ok(RandomVariable::from_vec(
            self.log_weights.iter().zip(&other.log_weights).map(|(a, b)| a - b).collect(),
        ))
    }

    /// `d self / d other` per state.
    pub fn density(&self, other: &Measure) -> Result<RandomVariable> {
        check_len(other.len(), self.len())?;
        RandomVariable::new(
            self.log_weights.iter().zip(&other.log_weights).map(|(a, b)| (a - b).exp()).collect(),
        )
    }

    /// Largest per-state difference of weights.
    pub fn sup_distance(&self, other: &Measure) -> Result<f64> {
        check_len(other.len(), self.len())?;
        Ok(self
            .weights
            .iter()
            .zip(&other.weights)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// The measure with `dQ/d base ∝ exp(log_density)`.
pub fn normalize_log_density(base: &Measure, log_density: &RandomVariable) -> Result<Measure> {
    check_len(base.len(), log_density.len())?;
    let raw: Vec<f64> = base
        .log_weights
        .iter()
        .zip(log_density.values())
        .map(|(b, l)| b + l)
        .collect();
    Measure::from_log_density(&raw)
}

/// Weighted geometric mean: `log dQ ∼ Σ λ_i log dR_i`.
pub fn geometric_mean_measure(measures: &[&Measure], weights: &[f64]) -> Result<Measure> {
    check_len(measures.len(), weights.len())?;
    let Some(first) = measures.first() else {
        return Err(Error::contract("geometric mean of an empty family"));
    };
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::contract("geometric-mean weights must be non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::contract(format!("geometric-mean weights sum to {total}, not 1")));
    }
    let n = first.len();
    for m in measures {
        check_len(n, m.len())?;
    }
    let raw: Vec<f64> = (0..n)
        .map(|s| {
            measures
                .iter()
                .zip(weights)
                .filter(|(_, w)| **w > 0.0)
                .map(|(m, w)| w * m.log_weights[s])
                .sum()
        })
        .collect();
    Measure::from_log_density(&raw)
}

/// `H(q2 | q1) = E_{q2}[log dq2/dq1]`, clamped at zero against rounding.
pub fn relative_entropy(q2: &Measure, q1: &Measure) -> Result<f64> {
    check_len(q1.len(), q2.len())?;
    let h: f64 = q2
        .weights
        .iter()
        .zip(q2.log_weights.iter().zip(&q1.log_weights))
        .map(|(w, (l2, l1))| if *w == 0.0 { 0.0 } else { w * (l2 - l1) })
        .sum();
    Ok(h.max(0.0))
}

pub fn expect(q: &Measure, x: &RandomVariable) -> Result<f64> {
    check_len(q.len(), x.len())?;
    Ok(q.weights.iter().zip(x.values()).map(|(w, v)| w * v).sum())
}

/// `log E_q[exp(x)]`, evaluated with a max shift.
pub fn log_expect_exp(q: &Measure, x: &RandomVariable) -> Result<f64> {
    check_len(q.len(), x.len())?;
    let terms: Vec<f64> = q.log_weights.iter().zip(x.values()).map(|(l, v)| l + v).collect();
    Ok(log_sum_exp(&terms))
}

pub fn variance(q: &Measure, x: &RandomVariable) -> Result<f64> {
    let m = expect(q, x)?;
    Ok(q
        .weights
        .iter()
        .zip(x.values())
        .map(|(w, v)| w * (v - m) * (v - m))
        .sum())
}
