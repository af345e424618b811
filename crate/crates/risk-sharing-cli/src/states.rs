//! State-space construction from a scenario's state model.

use std::collections::BTreeMap;
use std::num::NonZeroUsize;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use risk_sharing::{Measure, RandomVariable};

use crate::error::{IoError, Result};
use crate::scenario::{GaussianSpec, PsdRepair, Scenario, StateModel};

/// Relative size below which an eigenvalue counts as zero.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct States {
    pub labels: Vec<String>,
    pub baseline: Measure,
    pub variables: BTreeMap<String, RandomVariable>,
    pub info: StateInfo,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StateInfo {
    pub states: usize,
    pub quadrature_order: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    /// Number of independent Gaussian factors after dropping null directions.
    pub rank: Option<usize>,
    /// Smallest eigenvalue of the correlation matrix before any repair.
    pub min_eigenvalue: Option<f64>,
    pub repaired: bool,
}

impl States {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn build_state_space(scenario: &Scenario) -> Result<States> {
    let cap = scenario.solver.max_states;
    match &scenario.states {
        StateModel::Explicit { weights, labels, variables } => {
            if weights.len() > cap {
                return Err(IoError::Size { states: weights.len() as u128, cap });
            }
            let total: f64 = weights.iter().sum();
            if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                return Err(IoError::validation("states: weights must be positive and finite"));
            }
            let baseline = Measure::from_weights(weights.iter().map(|w| w / total).collect())?;
            let labels = if labels.is_empty() {
                (0..weights.len()).map(|s| format!("s{s}")).collect()
            } else {
                labels.clone()
            };
            let variables = variables
                .iter()
                .map(|(k, v)| Ok((k.clone(), RandomVariable::new(v.clone())?)))
                .collect::<Result<_>>()?;
            Ok(States {
                labels,
                baseline,
                variables,
                info: StateInfo { states: weights.len(), ..StateInfo::default() },
            })
        }
        StateModel::Gaussian(g) => gaussian_states(g, cap),
    }
}

/// Gauss-Hermite rule for a standard normal, symmetrised so that `x_k = -x_{n-1-k}`.
/// Returns nodes and log-weights.
pub fn standard_normal_rule(order: usize) -> (Vec<f64>, Vec<f64>) {
    let order = NonZeroUsize::new(order).expect("order is positive");
    let rule = gauss_quad::GaussHermite::new(order);
    let mut pairs: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (x * std::f64::consts::SQRT_2, w / std::f64::consts::PI.sqrt()))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let x = (0..n).map(|k| 0.5 * (pairs[k].0 - pairs[n - 1 - k].0)).collect();
    let w: Vec<f64> = (0..n).map(|k| 0.5 * (pairs[k].1 + pairs[n - 1 - k].1)).collect();
    let log_total = w.iter().sum::<f64>().ln();
    (x, w.iter().map(|v| v.ln() - log_total).collect())
}

fn square(name: &str, rows: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(IoError::validation(format!("states: {name} must be {d}x{d}")));
    }
    let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(IoError::validation(format!("states: {name} has non-finite entries")));
    }
    let scale = m.amax().max(1.0);
    for i in 0..d {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(IoError::validation(format!("states: {name} is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(m)
}

/// Standard deviations and correlation matrix of the model.
fn moments(g: &GaussianSpec) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let d = g.variables.len();
    match (&g.covariance, &g.std, &g.correlation) {
        (Some(cov), None, None) => {
            let cov = square("covariance", cov, d)?;
            let std: Vec<f64> = (0..d).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
            let corr = DMatrix::from_fn(d, d, |i, j| {
                if i == j {
                    1.0
                } else if std[i] > 0.0 && std[j] > 0.0 {
                    cov[(i, j)] / (std[i] * std[j])
                } else {
                    0.0
                }
            });
            for i in 0..d {
                if cov[(i, i)] < 0.0 {
                    return Err(IoError::validation(format!("states: negative variance for {}", g.variables[i])));
                }
                for j in 0..d {
                    if (std[i] == 0.0 || std[j] == 0.0) && cov[(i, j)].abs() > 0.0 && i != j {
                        return Err(IoError::validation("states: covariance is not positive semi-definite"));
                    }
                }
            }
            Ok((std, corr))
        }
        (None, std, corr) => {
            let std = std.clone().unwrap_or_else(|| vec![1.0; d]);
            if std.len() != d || std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(IoError::validation(format!("states: std needs {d} non-negative entries")));
            }
            let corr = match corr {
                Some(c) => square("correlation", c, d)?,
                None => DMatrix::identity(d, d),
            };
            if (0..d).any(|i| (corr[(i, i)] - 1.0).abs() > 1e-12) {
                return Err(IoError::validation("states: correlation must have a unit diagonal"));
            }
            Ok((std, corr))
        }
        _ => Err(IoError::validation("states: give either covariance, or std and correlation")),
    }
}

/// Eigen-pairs sorted by decreasing eigenvalue, eigenvectors signed so that
/// their largest component is positive.
fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let d = m.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(d, d);
    for (c, &k) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        let pivot = v.iter().copied().fold(0.0, |m: f64, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            v = -v;
        }
        vectors.set_column(c, &v);
    }
    (values, vectors)
}

/// Clips negative eigenvalues to zero and rescales back to a unit diagonal.
pub fn clip_correlation(corr: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sorted_eigen(corr);
    let d = corr.nrows();
    let clipped = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(d, values.iter().map(|v| v.max(0.0))));
    let m = &vectors * clipped * vectors.transpose();
    let s: Vec<f64> = (0..d).map(|i| m[(i, i)].sqrt()).collect();
    DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { m[(i, j)] / (s[i] * s[j]) })
}

/// Factor `L` (d x rank) with `L Lᵀ` equal to the covariance.
fn factor(g: &GaussianSpec, info: &mut StateInfo) -> Result<DMatrix<f64>> {
    let (std, mut corr) = moments(g)?;
    let d = std.len();
    let (values, _) = sorted_eigen(&corr);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    info.min_eigenvalue = Some(min);
    if min < -RANK_TOL * values[0].abs().max(1.0) {
        match g.psd_repair {
            PsdRepair::None => {
                return Err(IoError::validation(format!(
                    "states: covariance is not positive semi-definite (smallest correlation eigenvalue {min:e})"
                )));
            }
            PsdRepair::Clip => {
                corr = clip_correlation(&corr);
                info.repaired = true;
            }
        }
    }
    let cov = DMatrix::from_fn(d, d, |i, j| std[i] * corr[(i, j)] * std[j]);
    let (values, vectors) = sorted_eigen(&cov);
    let top = values[0].max(0.0);
    let kept: Vec<usize> = (0..d).filter(|&k| values[k] > RANK_TOL * top && values[k] > 0.0).collect();
    let mut l = DMatrix::zeros(d, kept.len());
    for (c, &k) in kept.iter().enumerate() {
        l.set_column(c, &(vectors.column(k) * values[k].sqrt()));
    }
    Ok(l)
}

fn gaussian_states(g: &GaussianSpec, cap: usize) -> Result<States> {
    let d = g.variables.len();
    let mean = g.mean.clone().unwrap_or_else(|| vec![0.0; d]);
    if mean.len() != d {
        return Err(IoError::validation(format!("states: mean needs {d} entries")));
    }
    let mut info = StateInfo::default();
    let l = factor(g, &mut info)?;
    let rank = l.ncols();
    info.rank = Some(rank);

    // Standard normal factor values per state, and log-weights.
    let (factors, log_weights): (Vec<Vec<f64>>, Vec<f64>) = if let Some(n) = g.samples {
        if n > cap {
            return Err(IoError::Size { states: n as u128, cap });
        }
        let seed = g.seed.ok_or_else(|| IoError::validation("states: sampling requires a seed"))?;
        info.samples = Some(n);
        info.seed = Some(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = (0..n)
            .map(|_| (0..rank).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        (f, vec![-(n as f64).ln(); n])
    } else {
        let q = g.quadrature_order.ok_or_else(|| IoError::validation("states: set quadrature_order or samples"))?;
        let total = (q as u128).checked_pow(rank as u32).unwrap_or(u128::MAX);
        if total > cap as u128 {
            return Err(IoError::Size { states: total, cap });
        }
        info.quadrature_order = Some(q);
        tensor_grid(q, rank)
    };
    let n = log_weights.len();
    info.states = n;

    let mut columns = vec![Vec::with_capacity(n); d];
    for f in &factors {
        for (i, col) in columns.iter_mut().enumerate() {
            let v: f64 = mean[i] + (0..rank).map(|k| l[(i, k)] * f[k]).sum::<f64>();
            col.push(v);
        }
    }
    let variables = g
        .variables
        .iter()
        .cloned()
        .zip(columns)
        .map(|(k, v)| Ok((k, RandomVariable::new(v)?)))
        .collect::<Result<_>>()?;
    Ok(States {
        labels: (0..n).map(|s| format!("s{s}")).collect(),
        baseline: Measure::from_log_density(&log_weights)?,
        variables,
        info,
    })
}

/// Tensor product of the one-dimensional rule, last factor fastest.
fn tensor_grid(q: usize, rank: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (x, lw) = standard_normal_rule(q);
    let mut points = vec![Vec::new()];
    let mut weights = vec![0.0];
    for _ in 0..rank {
        let mut next_p = Vec::with_capacity(points.len() * q);
        let mut next_w = Vec::with_capacity(points.len() * q);
        for (p, w) in points.iter().zip(&weights) {
            for k in 0..q {
                let mut p = p.clone();
                p.push(x[k]);
                next_p.push(p);
                next_w.push(w + lw[k]);
            }
        }
        points = next_p;
        weights = next_w;
    }
    (points, weights)
}
