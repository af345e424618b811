//! Nash risk-sharing equilibria.
//!
//! Candidates are indexed by points `z` of the zero-sum simplex. For each `z`
//! the per-state system for `C_i(z)` is reduced to one scalar equation in
//! `L(z)`; equilibria are the zeros of the distance `ℓ`. Two agents get a
//! bisection on a strictly increasing scalar map. More agents run a damped
//! fixed-point iteration on `φ`, a Newton polish on the pricing residuals and,
//! if both stall, a Nelder-Mead search on `ℓ`, all from several starts.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::agents::{cara_utility, Market};
use crate::arrow_debreu::{solve_arrow_debreu, ArrowDebreuEquilibrium};
use crate::error::{check_len, Error, Result};
use crate::measures::{expect, log_expect_exp, normalize_log_density, Measure, RandomVariable};
use crate::solve1d::{bisect_increasing, exp_linear_root_from, newton_bisect, RootOptions};

/// Point of `{z : Σ z_i = 0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPoint {
    z: Vec<f64>,
}

impl TryFrom<Vec<f64>> for SimplexPoint {
    type Error = Error;

    fn try_from(z: Vec<f64>) -> Result<Self> {
        Self::new(z)
    }
}

impl From<SimplexPoint> for Vec<f64> {
    fn from(p: SimplexPoint) -> Self {
        p.z
    }
}

impl SimplexPoint {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("simplex point must be finite"));
        }
        let total: f64 = z.iter().sum();
        let scale: f64 = z.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        if total.abs() > 1e-9 * scale {
            return Err(Error::contract(format!("simplex point sums to {total:e}, not 0")));
        }
        Ok(Self { z })
    }

    pub fn zero(n: usize) -> Self {
        Self { z: vec![0.0; n] }
    }

    /// Takes `z_1, ..., z_{n-1}` and sets `z_0` to minus their sum.
    pub fn from_tail(tail: &[f64]) -> Self {
        let mut z = Vec::with_capacity(tail.len() + 1);
        z.push(-tail.iter().sum::<f64>());
        z.extend_from_slice(tail);
        Self { z }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn sup_distance(&self, other: &SimplexPoint) -> f64 {
        self.z.iter().zip(&other.z).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerSolution {
    pub securities: Vec<RandomVariable>,
    /// `log(1 + C_i(z)/δ_{-i})` per agent and state.
    pub log_margins: Vec<RandomVariable>,
    /// `L(z) = Σ_i λ_i log(1 + C_i(z)/δ_{-i})`.
    #[serde(rename = "L")]
    pub l: RandomVariable,
    pub valuation: Measure,
}

const STATE_ITER_CAP: usize = 300;

struct Coefficients {
    delta: Vec<f64>,
    delta_minus: Vec<f64>,
    lambda: Vec<f64>,
}

impl Coefficients {
    fn new(market: &Market) -> Self {
        let n = market.n_agents();
        Self {
            delta: (0..n).map(|i| market.delta(i)).collect(),
            delta_minus: (0..n).map(|i| market.delta_minus(i)).collect(),
            lambda: market.lambdas(),
        }
    }

    /// `log θ_i(arg)`, Newton started from `hint`.
    fn log_theta(&self, i: usize, arg: f64, hint: f64) -> Option<f64> {
        exp_linear_root_from(self.delta_minus[i], self.delta[i], arg, hint)
    }

    /// `w(y)` and `w'(y)` for intercepts `a_i = z_i + C*_i`. `t` holds the
    /// previous log-margins on entry and the new ones on exit.
    fn w(&self, a: &[f64], y: f64, t: &mut [f64]) -> (f64, f64) {
        let mut value = y;
        let mut slope = 1.0;
        for i in 0..a.len() {
            let Some(ti) = self.log_theta(i, a[i] + self.delta[i] * y, t[i]) else {
                return (f64::NAN, f64::NAN);
            };
            t[i] = ti;
            value -= self.lambda[i] * ti;
            slope -= self.lambda[i] * self.delta[i] / (self.delta_minus[i] * ti.exp() + self.delta[i]);
        }
        (value, slope)
    }
}

/// Solves `w(y) = 0` in one state, starting from `y0`; returns `L` and leaves
/// the log-margins in `t`.
fn solve_state(coef: &Coefficients, a: &[f64], t: &mut [f64], y0: f64, state: usize) -> Result<f64> {
    let ratios = a.iter().zip(&coef.delta).map(|(a, d)| a / d);
    let (lo, hi) = ratios.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(-r), hi.max(-r))
    });
    // The analytic bracket relies on Σ a_i = 0, which holds only up to rounding.
    let pad = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    let (mut lo, mut hi) = (lo - pad, hi + pad);

    let mut y = if y0 > lo && y0 < hi { y0 } else { 0.5 * (lo + hi) };
    for _ in 0..STATE_ITER_CAP {
        let (value, slope) = coef.w(a, y, t);
        if !value.is_finite() {
            break;
        }
        let scale = 1.0 + y.abs();
        if value.abs() <= 4.0 * f64::EPSILON * scale {
            return Ok(y);
        }
        if value < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let mut next = y - value / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 4.0 * f64::EPSILON * scale || hi - lo <= 4.0 * f64::EPSILON * scale {
            if value.abs() <= 1e-12 * scale {
                return Ok(y);
            }
            break;
        }
        y = next;
    }
    solve_state_widened(coef, a, t, state)
}

/// Slow path: widen the bracket until the signs are verified, then iterate.
fn solve_state_widened(coef: &Coefficients, a: &[f64], t: &mut [f64], state: usize) -> Result<f64> {
    let ratios = a.iter().zip(&coef.delta).map(|(a, d)| a / d);
    let (mut lo, mut hi) = ratios.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(-r), hi.max(-r))
    });
    let mut pad = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    for _ in 0..200 {
        lo -= pad;
        pad *= 2.0;
        let w_lo = coef.w(a, lo, t).0;
        if w_lo <= 0.0 || w_lo.is_nan() {
            break;
        }
    }
    pad = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    for _ in 0..200 {
        hi += pad;
        pad *= 2.0;
        let w_hi = coef.w(a, hi, t).0;
        if w_hi >= 0.0 || w_hi.is_nan() {
            break;
        }
    }
    let scratch = std::cell::RefCell::new(t.to_vec());
    let opts = RootOptions {
        x_tol: 4.0 * f64::EPSILON,
        f_tol: 4.0 * f64::EPSILON * (1.0 + lo.abs().max(hi.abs())),
        max_iter: STATE_ITER_CAP,
    };
    let root = newton_bisect(
        "nash state equation",
        |y| coef.w(a, y, &mut scratch.borrow_mut()),
        lo,
        hi,
        0.5 * (lo + hi),
        opts,
    )
    .map_err(|e| Error::solver("nash state equation", format!("state {state}: {e}")))?;
    let (value, _) = coef.w(a, root.x, t);
    if !value.is_finite() {
        return Err(Error::solver(
            "nash state equation",
            format!("state {state}: residual {value:e} at L = {:e}", root.x),
        ));
    }
    Ok(root.x)
}

fn check_inputs(market: &Market, ad: &ArrowDebreuEquilibrium, z: &SimplexPoint) -> Result<()> {
    check_len(market.n_agents(), z.len())?;
    check_len(market.n_agents(), ad.securities.len())?;
    check_len(market.n_states(), ad.pricing.len())
}

pub fn inner_solve(market: &Market, ad: &ArrowDebreuEquilibrium, z: &SimplexPoint) -> Result<InnerSolution> {
    inner_solve_from(market, ad, z, None)
}

/// Inner solve warm-started from a nearby solution. The result does not
/// depend on the hint beyond rounding.
fn inner_solve_from(
    market: &Market,
    ad: &ArrowDebreuEquilibrium,
    z: &SimplexPoint,
    hint: Option<&InnerSolution>,
) -> Result<InnerSolution> {
    check_inputs(market, ad, z)?;
    let n = market.n_agents();
    let states = market.n_states();
    let coef = Coefficients::new(market);

    let mut log_margins = vec![vec![0.0; states]; n];
    let mut l = vec![0.0; states];
    let mut a = vec![0.0; n];
    let mut t = vec![0.0; n];
    for s in 0..states {
        for i in 0..n {
            a[i] = z.z[i] + ad.securities[i].values()[s];
        }
        let y0 = match hint {
            Some(h) => {
                for i in 0..n {
                    t[i] = h.log_margins[i].values()[s];
                }
                h.l.values()[s]
            }
            None => f64::NAN,
        };
        l[s] = solve_state(&coef, &a, &mut t, y0, s)?;
        for i in 0..n {
            log_margins[i][s] = t[i];
        }
    }

    let log_margins = log_margins
        .into_iter()
        .map(RandomVariable::new)
        .collect::<Result<Vec<_>>>()?;
    let securities = securities_from_margins(&coef.delta_minus, &log_margins)?;
    let l = RandomVariable::new(l)?;
    let valuation = normalize_log_density(&ad.pricing, &l.scale(-1.0)?)?;
    Ok(InnerSolution {
        securities,
        log_margins,
        l,
        valuation,
    })
}

/// `C_i = δ_{-i}(e^{t_i} - 1)`, except that in each state the largest security
/// is set to minus the sum of the others. Clearing is then exact and every
/// security stays inside its closed bound even when a margin underflows.
fn securities_from_margins(delta_minus: &[f64], log_margins: &[RandomVariable]) -> Result<Vec<RandomVariable>> {
    let n = log_margins.len();
    let states = log_margins.first().map_or(0, RandomVariable::len);
    let mut out = vec![vec![0.0; states]; n];
    for s in 0..states {
        let mut top = 0;
        for i in 0..n {
            out[i][s] = delta_minus[i] * log_margins[i].values()[s].exp_m1();
            if out[i][s] > out[top][s] {
                top = i;
            }
        }
        out[top][s] = -(0..n).filter(|j| *j != top).map(|j| out[j][s]).sum::<f64>();
    }
    out.into_iter().map(RandomVariable::new).collect()
}

/// `log E_{Q(z)}[1 + C_i(z)/δ_{-i}]` per agent.
fn log_price_margins(inner: &InnerSolution) -> Result<Vec<f64>> {
    inner
        .log_margins
        .iter()
        .map(|t| log_expect_exp(&inner.valuation, t))
        .collect()
}

fn distance_of(market: &Market, inner: &InnerSolution) -> Result<f64> {
    let m = log_price_margins(inner)?;
    Ok(-(0..market.n_agents()).map(|i| market.delta_minus(i) * m[i]).sum::<f64>())
}

/// Jacobian `∂ m_i / ∂ z_k` of `m_i(z) = log E_{Q(z)}[1 + C_i(z)/δ_{-i}]`,
/// obtained by differentiating the per-state system implicitly.
fn margin_jacobian(coef: &Coefficients, inner: &InnerSolution) -> Result<DMatrix<f64>> {
    let n = coef.delta.len();
    let m = log_price_margins(inner)?;
    let q = inner.valuation.weights();
    let lq = inner.valuation.log_weights();
    let mut jac = DMatrix::zeros(n, n);
    let mut mean_dl = vec![0.0; n];
    let mut kappa = vec![0.0; n];
    let mut dl = vec![0.0; n];
    for s in 0..q.len() {
        let mut slope = 1.0;
        for i in 0..n {
            kappa[i] = coef.delta_minus[i] * inner.log_margins[i].values()[s].exp() + coef.delta[i];
            slope -= coef.lambda[i] * coef.delta[i] / kappa[i];
        }
        for k in 0..n {
            dl[k] = coef.lambda[k] / (kappa[k] * slope);
            mean_dl[k] += q[s] * dl[k];
        }
        for i in 0..n {
            let qi = (lq[s] + inner.log_margins[i].values()[s] - m[i]).exp();
            if qi == 0.0 {
                continue;
            }
            for k in 0..n {
                let unit = if i == k { 1.0 } else { 0.0 };
                let dt = (unit + coef.delta[i] * dl[k]) / kappa[i];
                jac[(i, k)] += qi * (dt - dl[k]);
            }
        }
    }
    for i in 0..n {
        for k in 0..n {
            jac[(i, k)] += mean_dl[k];
        }
    }
    Ok(jac)
}

/// `ℓ(z) = -Σ_i δ_{-i} log(1 + E_{Q(z)}[C_i(z)]/δ_{-i})`.
pub fn nash_distance(market: &Market, ad: &ArrowDebreuEquilibrium, z: &SimplexPoint) -> Result<f64> {
    distance_of(market, &inner_solve(market, ad, z)?)
}

fn phi_of(market: &Market, ad: &ArrowDebreuEquilibrium, inner: &InnerSolution) -> Result<Vec<f64>> {
    let n = market.n_agents();
    let u = (0..n)
        .map(|i| cara_utility(market.agent(i), &inner.securities[i]))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = u.iter().sum();
    Ok((0..n)
        .map(|i| u[i] - ad.agent_gains[i] + market.lambda(i) * (ad.aggregate_gain - total))
        .collect())
}

/// `φ_i(z) = u_i(z) - u*_i + λ_i (u* - u(z))`, with `u_i(z) = U_i(C_i(z))`.
pub fn phi_map(market: &Market, ad: &ArrowDebreuEquilibrium, z: &SimplexPoint) -> Result<SimplexPoint> {
    let inner = inner_solve(market, ad, z)?;
    let phi = phi_of(market, ad, &inner)?;
    Ok(SimplexPoint::from_tail(&phi[1..]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashConfig {
    /// Accept when `ℓ(z) <= tol · δ`.
    pub tol: f64,
    /// Accept when every `|E_{Q(z)}[C_i(z)]| <= pricing_tol · δ`.
    pub pricing_tol: f64,
    /// Fixed-point iterations per start.
    pub max_iter: usize,
    /// Initial damping `γ` of the fixed-point iteration.
    pub damping: f64,
    /// Run all `1 + n` starts even after a root has been found.
    pub multistart: bool,
}

impl Default for NashConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            pricing_tol: 1e-11,
            max_iter: 500,
            damping: 0.5,
            multistart: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashEquilibrium {
    pub z: SimplexPoint,
    pub securities: Vec<RandomVariable>,
    pub pricing: Measure,
    pub revealed: Vec<Measure>,
    pub agent_values: Vec<f64>,
    pub aggregate_value: f64,
    pub distance: f64,
    /// `log(1 + C◇_i/δ_{-i})`, kept because `C◇_i` alone can round onto `-δ_{-i}`.
    pub log_margins: Vec<RandomVariable>,
    /// Further distinct roots met by the multistart search.
    pub other_roots: Vec<SimplexPoint>,
    /// Distance `ℓ` after each accepted outer step of the primary search.
    pub distance_trace: Vec<f64>,
}

pub fn solve_nash(market: &Market, config: &NashConfig) -> Result<NashEquilibrium> {
    let ad = solve_arrow_debreu(market)?;
    solve_nash_with(market, &ad, config)
}

pub fn solve_nash_with(market: &Market, ad: &ArrowDebreuEquilibrium, config: &NashConfig) -> Result<NashEquilibrium> {
    if market.n_agents() == 2 {
        let (z, trace) = solve_two_agents(market, ad)?;
        assemble(market, ad, z, Vec::new(), trace)
    } else {
        let (z, others, trace) = solve_many_agents(market, ad, config)?;
        assemble(market, ad, z, others, trace)
    }
}

/// Builds the equilibrium objects at a solved `z`.
pub fn assemble(
    market: &Market,
    ad: &ArrowDebreuEquilibrium,
    z: SimplexPoint,
    other_roots: Vec<SimplexPoint>,
    distance_trace: Vec<f64>,
) -> Result<NashEquilibrium> {
    let inner = inner_solve(market, ad, &z)?;
    let distance = distance_of(market, &inner)?;
    let n = market.n_agents();
    let revealed = (0..n)
        .map(|i| normalize_log_density(&inner.valuation, &inner.securities[i].scale(1.0 / market.delta(i))?))
        .collect::<Result<Vec<_>>>()?;
    let agent_values = (0..n)
        .map(|i| cara_utility(market.agent(i), &inner.securities[i]))
        .collect::<Result<Vec<_>>>()?;
    let aggregate_value = agent_values.iter().sum();
    Ok(NashEquilibrium {
        z,
        securities: inner.securities,
        pricing: inner.valuation,
        revealed,
        agent_values,
        aggregate_value,
        distance,
        log_margins: inner.log_margins,
        other_roots,
        distance_trace,
    })
}

/// `z_0 ↦ E_{Q(z)}[C_0(z)]` is strictly increasing; bisect it.
fn solve_two_agents(market: &Market, ad: &ArrowDebreuEquilibrium) -> Result<(SimplexPoint, Vec<f64>)> {
    let point = |z0: f64| SimplexPoint { z: vec![z0, -z0] };
    let price = |z0: f64| -> Result<f64> {
        let inner = inner_solve(market, ad, &point(z0))?;
        expect(&inner.valuation, &inner.securities[0])
    };
    let mut lo = -ad.agent_gains[0];
    let mut hi = ad.agent_gains[1];
    let mut step = 1e-12 * market.delta_total();
    while price(lo)? > 0.0 {
        lo -= step;
        step *= 2.0;
        if step > 1e3 * market.delta_total() {
            return Err(Error::solver("two-agent bracket", "lower end never priced below zero"));
        }
    }
    step = 1e-12 * market.delta_total();
    while price(hi)? < 0.0 {
        hi += step;
        step *= 2.0;
        if step > 1e3 * market.delta_total() {
            return Err(Error::solver("two-agent bracket", "upper end never priced above zero"));
        }
    }
    let root = if lo >= hi {
        lo
    } else {
        bisect_increasing(price, lo, hi, 0.0, 200)?.x
    };
    let z = point(root);
    let d = nash_distance(market, ad, &z)?;
    Ok((z, vec![d]))
}

struct Evaluation {
    z: SimplexPoint,
    distance: f64,
    pricing: Vec<f64>,
    inner: InnerSolution,
}

fn evaluate(
    market: &Market,
    ad: &ArrowDebreuEquilibrium,
    z: SimplexPoint,
    hint: Option<&InnerSolution>,
) -> Result<Evaluation> {
    let inner = inner_solve_from(market, ad, &z, hint)?;
    let distance = distance_of(market, &inner)?;
    let pricing = inner
        .securities
        .iter()
        .map(|c| expect(&inner.valuation, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        z,
        distance,
        pricing,
        inner,
    })
}

struct Search<'a> {
    market: &'a Market,
    ad: &'a ArrowDebreuEquilibrium,
    config: &'a NashConfig,
    lower: Vec<f64>,
}

impl Search<'_> {
    fn converged(&self, e: &Evaluation) -> bool {
        let scale = self.market.delta_total();
        e.distance <= self.config.tol * scale
            && e.pricing.iter().all(|p| p.abs() <= self.config.pricing_tol * scale)
    }

    /// Projects onto `K = {Σ z = 0, z_i >= lower_i}`.
    fn clip(&self, z: &[f64]) -> SimplexPoint {
        let n = z.len();
        let mut z = z.to_vec();
        for _ in 0..n {
            let mut free = 0usize;
            let mut excess = 0.0;
            for i in 0..n {
                if z[i] < self.lower[i] {
                    excess += self.lower[i] - z[i];
                    z[i] = self.lower[i];
                } else if z[i] > self.lower[i] {
                    free += 1;
                }
            }
            let total: f64 = z.iter().sum();
            if excess == 0.0 && total == 0.0 {
                break;
            }
            if free == 0 {
                break;
            }
            let shift = total / free as f64;
            for i in 0..n {
                if z[i] > self.lower[i] {
                    z[i] -= shift;
                }
            }
        }
        SimplexPoint::from_tail(&z[1..])
    }

    fn starts(&self) -> Vec<SimplexPoint> {
        let n = self.lower.len();
        let slack = -self.lower.iter().sum::<f64>();
        let centre: Vec<f64> = self.lower.iter().map(|l| l + slack / n as f64).collect();
        let mut out = vec![SimplexPoint::from_tail(&centre[1..])];
        for k in 0..n {
            let corner: Vec<f64> = (0..n)
                .map(|i| if i == k { self.lower[i] + slack } else { self.lower[i] })
                .collect();
            out.push(SimplexPoint::from_tail(&corner[1..]));
        }
        out
    }

    /// Damped iteration `z ← (1 - γ) z + γ φ(z)`.
    fn fixed_point(&self, start: SimplexPoint, trace: &mut Vec<f64>) -> Result<Evaluation> {
        let handoff = 1e-4 * self.market.delta_total();
        let mut current = evaluate(self.market, self.ad, start, None)?;
        trace.push(current.distance);
        let mut gamma = self.config.damping;
        let mut decreases = 0;
        for _ in 0..self.config.max_iter {
            if self.converged(&current) || current.distance <= handoff {
                break;
            }
            let phi = phi_of(self.market, self.ad, &current.inner)?;
            let z = current.z.as_slice();
            let mixed: Vec<f64> = z.iter().zip(&phi).map(|(a, b)| (1.0 - gamma) * a + gamma * b).collect();
            let candidate = evaluate(self.market, self.ad, self.clip(&mixed), Some(&current.inner))?;
            if candidate.distance < current.distance {
                current = candidate;
                trace.push(current.distance);
                decreases += 1;
                if decreases >= 3 {
                    gamma = (2.0 * gamma).min(1.0);
                    decreases = 0;
                }
            } else {
                gamma *= 0.5;
                decreases = 0;
                if gamma < 1e-8 {
                    break;
                }
            }
        }
        Ok(current)
    }

    /// Residuals `log E_{Q(z)}[1 + C_i/δ_{-i}]` for agents `1..n`.
    fn residual(&self, e: &Evaluation) -> Result<DVector<f64>> {
        let m = log_price_margins(&e.inner)?;
        Ok(DVector::from_iterator(m.len() - 1, m[1..].iter().copied()))
    }

    /// Newton iteration on the pricing residuals in the coordinates `z_1..z_{n-1}`.
    fn polish(&self, start: Evaluation, trace: &mut Vec<f64>) -> Result<Evaluation> {
        let n = self.lower.len();
        let coef = Coefficients::new(self.market);
        let mut current = start;
        let mut r = self.residual(&current)?;
        for _ in 0..40 {
            if self.converged(&current) {
                break;
            }
            let full = margin_jacobian(&coef, &current.inner)?;
            let jac = DMatrix::from_fn(n - 1, n - 1, |i, k| full[(i + 1, k + 1)] - full[(i + 1, 0)]);
            let Some(step) = jac.lu().solve(&(-&r)) else {
                break;
            };
            let tail: Vec<f64> = current.z.as_slice()[1..].to_vec();
            let mut alpha = 1.0;
            let mut improved = false;
            for _ in 0..30 {
                let trial: Vec<f64> = tail.iter().zip(step.iter()).map(|(a, b)| a + alpha * b).collect();
                let z = SimplexPoint::from_tail(&trial);
                if z.as_slice().iter().zip(&self.lower).all(|(z, l)| z >= l) {
                    let cand = evaluate(self.market, self.ad, z, Some(&current.inner))?;
                    let rc = self.residual(&cand)?;
                    if rc.norm() < r.norm() {
                        current = cand;
                        r = rc;
                        trace.push(current.distance);
                        improved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !improved {
                break;
            }
        }
        Ok(current)
    }

    /// Nelder-Mead on `ℓ` over `z_1..z_{n-1}`, with `+∞` outside `K`.
    fn nelder_mead(&self, start: &SimplexPoint, trace: &mut Vec<f64>) -> Result<Evaluation> {
        let dim = self.lower.len() - 1;
        let objective = |x: &[f64]| -> Result<f64> {
            let z = SimplexPoint::from_tail(x);
            if z.as_slice().iter().zip(&self.lower).any(|(z, l)| z < l) {
                return Ok(f64::INFINITY);
            }
            nash_distance(self.market, self.ad, &z)
        };
        let x0 = start.as_slice()[1..].to_vec();
        let size = 0.1 * self.market.delta_total();
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
        simplex.push((x0.clone(), objective(&x0)?));
        for k in 0..dim {
            let mut x = x0.clone();
            x[k] += size;
            let f = objective(&x)?;
            simplex.push((x, f));
        }
        let target = self.config.tol * self.market.delta_total();
        for _ in 0..(200 * (dim + 1)) {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            trace.push(simplex[0].1);
            if simplex[0].1 <= target {
                break;
            }
            let centroid: Vec<f64> = (0..dim)
                .map(|k| simplex[..dim].iter().map(|p| p.0[k]).sum::<f64>() / dim as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                centroid.iter().zip(&simplex[dim].0).map(|(c, w)| c + t * (c - w)).collect()
            };
            let xr = along(1.0);
            let fr = objective(&xr)?;
            if fr < simplex[0].1 {
                let xe = along(2.0);
                let fe = objective(&xe)?;
                simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[dim - 1].1 {
                simplex[dim] = (xr, fr);
            } else {
                let xc = if fr < simplex[dim].1 { along(0.5) } else { along(-0.5) };
                let fc = objective(&xc)?;
                if fc < simplex[dim].1.min(fr) {
                    simplex[dim] = (xc, fc);
                } else {
                    let best = simplex[0].0.clone();
                    for p in simplex.iter_mut().skip(1) {
                        let x: Vec<f64> = best.iter().zip(&p.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                        let f = objective(&x)?;
                        *p = (x, f);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        evaluate(self.market, self.ad, SimplexPoint::from_tail(&simplex[0].0), None)
    }

    fn run(&self, start: SimplexPoint, trace: &mut Vec<f64>) -> Result<Evaluation> {
        let first = evaluate(self.market, self.ad, start, None)?;
        trace.push(first.distance);
        let e = self.polish(first, trace)?;
        if self.converged(&e) {
            return Ok(e);
        }
        let e = self.fixed_point(e.z, trace)?;
        let e = self.polish(e, trace)?;
        if self.converged(&e) {
            return Ok(e);
        }
        let e = self.nelder_mead(&e.z, trace)?;
        self.polish(e, trace)
    }
}

fn solve_many_agents(
    market: &Market,
    ad: &ArrowDebreuEquilibrium,
    config: &NashConfig,
) -> Result<(SimplexPoint, Vec<SimplexPoint>, Vec<f64>)> {
    let n = market.n_agents();
    let search = Search {
        market,
        ad,
        config,
        lower: (0..n).map(|i| -market.delta_minus(i) - ad.agent_gains[i]).collect(),
    };
    let mut roots: Vec<SimplexPoint> = Vec::new();
    let mut primary_trace = Vec::new();
    let mut best: Option<(SimplexPoint, f64)> = None;
    let mut iterations = 0;
    for (k, start) in search.starts().into_iter().enumerate() {
        let mut trace = Vec::new();
        let e = search.run(start, &mut trace)?;
        iterations += trace.len();
        if best.as_ref().is_none_or(|b| e.distance < b.1) {
            best = Some((e.z.clone(), e.distance));
        }
        if search.converged(&e) {
            let scale = 1e-6 * (1.0 + market.delta_total());
            if !roots.iter().any(|r| r.sup_distance(&e.z) <= scale) {
                if roots.is_empty() {
                    primary_trace = trace;
                }
                roots.push(e.z);
            }
            if !config.multistart {
                break;
            }
        } else if k == 0 {
            primary_trace = trace;
        }
    }
    if roots.is_empty() {
        let (best_z, best_distance) = best.expect("at least one start");
        return Err(Error::NashNotConverged {
            best_z: best_z.as_slice().to_vec(),
            best_distance,
            target: config.tol * market.delta_total(),
            iterations,
            trace: primary_trace,
        });
    }
    let primary = roots.remove(0);
    Ok((primary, roots, primary_trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Agent;

    #[test]
    fn margin_jacobian_matches_differences() {
        let beliefs = [
            vec![0.1, 0.2, 0.3, 0.4],
            vec![0.4, 0.3, 0.2, 0.1],
            vec![0.25, 0.25, 0.3, 0.2],
        ];
        let agents = beliefs
            .iter()
            .zip([0.7, 1.3, 2.1])
            .map(|(w, d)| Agent::new(d, Measure::from_weights(w.clone()).unwrap()).unwrap())
            .collect();
        let market = Market::new(agents).unwrap();
        let ad = solve_arrow_debreu(&market).unwrap();
        let z = SimplexPoint::new(vec![0.05, -0.08, 0.03]).unwrap();
        let inner = inner_solve(&market, &ad, &z).unwrap();
        let jac = margin_jacobian(&Coefficients::new(&market), &inner).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            let mut plus = z.as_slice().to_vec();
            plus[k] += h;
            let mut minus = z.as_slice().to_vec();
            minus[k] -= h;
            // Off the simplex is fine here: the per-state system is defined for any z.
            let mp = log_price_margins(&inner_solve(&market, &ad, &SimplexPoint { z: plus }).unwrap()).unwrap();
            let mm = log_price_margins(&inner_solve(&market, &ad, &SimplexPoint { z: minus }).unwrap()).unwrap();
            for i in 0..3 {
                let fd = (mp[i] - mm[i]) / (2.0 * h);
                assert!((fd - jac[(i, k)]).abs() < 1e-7, "i={i} k={k} fd={fd} analytic={}", jac[(i, k)]);
            }
        }
    }
}
