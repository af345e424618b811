//! Binned probability masses of a random variable under a measure.

use serde::{Deserialize, Serialize};

use risk_sharing::{Measure, RandomVariable};

use crate::error::{IoError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub expression: String,
    pub measure: String,
    /// `bins + 1` equal-width edges.
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
    /// Mass divided by bin width.
    pub density: Vec<f64>,
    /// Mass below the first edge and above the last one.
    pub underflow: f64,
    pub overflow: f64,
}

impl Histogram {
    /// Total mass in bins whose upper edge is at most `x`, plus the underflow.
    pub fn mass_below(&self, x: f64) -> f64 {
        self.underflow
            + self
                .mass
                .iter()
                .zip(&self.edges[1..])
                .filter(|(_, e)| **e <= x)
                .map(|(m, _)| m)
                .sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.mass
            .iter()
            .zip(self.edges.windows(2))
            .map(|(m, e)| m * 0.5 * (e[0] + e[1]))
            .sum()
    }
}

/// Equal-width bins over `range`, or over `[min, max]` of `values` when no range is given.
pub fn histogram(
    expression: &str,
    measure_name: &str,
    values: &RandomVariable,
    measure: &Measure,
    bins: usize,
    range: Option<(f64, f64)>,
) -> Result<Histogram> {
    if bins == 0 {
        return Err(IoError::validation("histogram needs at least one bin"));
    }
    if values.len() != measure.len() {
        return Err(IoError::validation("histogram variable and measure differ in length"));
    }
    let (lo, hi) = range.unwrap_or((values.min(), values.max()));
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(IoError::validation(format!("histogram range [{lo}, {hi}] is invalid")));
    }
    // A degenerate range still gets a bin of positive width.
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 / bins as f64 };
    let mut edges: Vec<f64> = (0..=bins).map(|k| lo + width * k as f64).collect();
    if hi > lo {
        edges[bins] = hi;
    }
    let mut mass = vec![0.0; bins];
    let (mut underflow, mut overflow) = (0.0, 0.0);
    for (x, w) in values.iter().zip(measure.weights()) {
        if *x < lo {
            underflow += w;
        } else if *x > edges[bins] {
            overflow += w;
        } else {
            let k = (((x - lo) / width) as usize).min(bins - 1);
            mass[k] += w;
        }
    }
    let density = mass.iter().map(|m| m / width).collect();
    Ok(Histogram {
        expression: expression.to_string(),
        measure: measure_name.to_string(),
        edges,
        mass,
        density,
        underflow,
        overflow,
    })
}
