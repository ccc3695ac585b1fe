//! Closed-form error bounds for the private search and the least-squares
//! rate fit used to read α off empirical error curves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::datagen::FatnessConstant;
use crate::error::{Error, Result};
use crate::ldp::PrivacyBudget;

/// (e^ε − 1)²/(4(e^ε + 1)e^ε), rewritten with q = e^{−ε} as
/// (1 − q)²/(4(1 + q)).
fn concentration_rate(epsilon_round: f64) -> f64 {
    let q = (-epsilon_round).exp();
    let one_minus_q = -(-epsilon_round).exp_m1();
    one_minus_q * one_minus_q / (4.0 * (1.0 + q))
}

/// Tail bound exp(−(e^ε−1)²·d²·N / (4(e^ε+1)e^ε)) on a wrong decision in
/// one round, where d = |F̃(τ) − γ| and ε is the per-round budget.
pub fn tail_bound(epsilon_round: f64, deviation: f64, n: usize) -> f64 {
    let d = deviation.abs();
    (-concentration_rate(epsilon_round) * d * d * n as f64)
        .exp()
        .clamp(0.0, 1.0)
}

/// Γ(x + a)/Γ(x) through log-gamma.
pub fn rising_factorial(x: f64, a: f64) -> Result<f64> {
    if !(x > 0.0) || !(x + a > 0.0) || !x.is_finite() || !a.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "rising factorial needs x > 0 and x + a > 0, got x = {x}, a = {a}"
        )));
    }
    Ok(ln_rising(x, a).exp())
}

/// ln Γ(x + a) − ln Γ(x). Small integer orders use the finite product,
/// which avoids cancelling two large log-gamma values.
fn ln_rising(x: f64, a: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    if a.fract() == 0.0 && a > 0.0 && a <= 64.0 {
        return (0..a as u32).map(|k| (x + k as f64).ln()).sum();
    }
    ln_gamma(x + a) - ln_gamma(x)
}

/// The three additive pieces of the upper bound on the mean absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    /// Distance from the minimum to the 2γ-quantile.
    pub quantile_term: f64,
    /// Probability that some round decides wrongly.
    pub tail_term: f64,
    /// 2^{−L}.
    pub discretization_term: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.quantile_term + self.tail_term + self.discretization_term
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundEval {
    Applicable(BoundTerms),
    /// 2γ ≥ C·(x̄ − x_min)^α: the bound says nothing.
    Inapplicable { two_gamma: f64, limit: f64 },
}

impl BoundEval {
    pub fn total(&self) -> Option<f64> {
        match self {
            BoundEval::Applicable(t) => Some(t.total()),
            BoundEval::Inapplicable { .. } => None,
        }
    }

    pub fn terms(&self) -> Option<&BoundTerms> {
        match self {
            BoundEval::Applicable(t) => Some(t),
            BoundEval::Inapplicable { .. } => None,
        }
    }
}

/// Inputs shared by the fixed and i.i.d. bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub gamma: f64,
    pub epsilon: PrivacyBudget,
    pub depth: usize,
    pub n: usize,
    pub fatness: FatnessConstant,
    pub x_min: f64,
}

impl BoundInputs {
    fn check(&self) -> Result<Option<BoundEval>> {
        if self.depth < 1 || self.n < 1 || !(self.gamma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bound needs depth >= 1, n >= 1, gamma >= 0; got {}, {}, {}",
                self.depth, self.n, self.gamma
            )));
        }
        let f = &self.fatness;
        if !(f.alpha > 0.0 && f.c > 0.0) {
            return Err(Error::InvalidArgument("fatness alpha and C must be positive".into()));
        }
        let limit = f.c * (f.x_bar - self.x_min).max(0.0).powf(f.alpha);
        let two_gamma = 2.0 * self.gamma;
        if two_gamma < limit {
            Ok(None)
        } else {
            Ok(Some(BoundEval::Inapplicable { two_gamma, limit }))
        }
    }

    fn shared_terms(&self) -> (f64, f64) {
        let er = self.epsilon.epsilon() / self.depth as f64;
        let tail = tail_bound(er, self.gamma, self.n);
        let disc = (2.0f64).powi(-(self.depth as i32));
        (tail, disc)
    }
}

/// Fixed-data bound: 2(2γ/C)^{1/α} + tail + 2^{−L}.
pub fn error_bound_fixed(inputs: &BoundInputs) -> Result<BoundEval> {
    if let Some(flag) = inputs.check()? {
        return Ok(flag);
    }
    let f = &inputs.fatness;
    let (tail_term, discretization_term) = inputs.shared_terms();
    Ok(BoundEval::Applicable(BoundTerms {
        quantile_term: 2.0 * (2.0 * inputs.gamma / f.c).powf(1.0 / f.alpha),
        tail_term,
        discretization_term,
    }))
}

/// I.i.d. bound: 2(1/C)^{1/α}·(⌈2γN⌉)^{(1/α)}/(N+1)^{(1/α)} + tail + 2^{−L},
/// with rising factorials in the ratio.
pub fn error_bound_iid(inputs: &BoundInputs) -> Result<BoundEval> {
    if let Some(flag) = inputs.check()? {
        return Ok(flag);
    }
    let f = &inputs.fatness;
    let inv_alpha = 1.0 / f.alpha;
    let k = (2.0 * inputs.gamma * inputs.n as f64).ceil();
    let ratio = if k <= 0.0 {
        0.0
    } else {
        rising_factorial_ratio(k, inputs.n as f64 + 1.0, inv_alpha)
    };
    let (tail_term, discretization_term) = inputs.shared_terms();
    Ok(BoundEval::Applicable(BoundTerms {
        quantile_term: 2.0 * (1.0 / f.c).powf(inv_alpha) * ratio,
        tail_term,
        discretization_term,
    }))
}

/// (x)^{(a)} / (y)^{(a)} in one log-space expression.
pub fn rising_factorial_ratio(x: f64, y: f64, a: f64) -> f64 {
    (ln_rising(x, a) - ln_rising(y, a)).exp()
}

/// err ≈ C·ln^B(n)/n^A fitted by least squares in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// RMS residual of ln err.
    pub residual: f64,
}

impl RateFit {
    /// α̂ = 1/(2A), only meaningful for a decaying curve.
    pub fn alpha_hat(&self) -> Option<f64> {
        (self.a > 0.0).then(|| 1.0 / (2.0 * self.a))
    }

    pub fn predict(&self, n: f64) -> f64 {
        self.c * n.ln().powf(self.b) / n.powf(self.a)
    }
}

/// Ordinary least squares on ln err = ln C + B·ln ln n − A·ln n.
///
/// Natural logs throughout; a different base for the inner log would only
/// rescale C, never A or B.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "rate fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    for &(n, err) in points {
        if !(n > 1.0 && n.is_finite()) {
            return Err(Error::InvalidArgument(format!("n must exceed 1, got {n}")));
        }
        if !(err > 0.0 && err.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "errors must be positive, got {err} at n = {n}"
            )));
        }
    }
    let m = points.len();
    let design = DMatrix::from_fn(m, 3, |i, j| {
        let ln_n = points[i].0.ln();
        match j {
            0 => 1.0,
            1 => ln_n.ln(),
            _ => -ln_n,
        }
    });
    let y = DVector::from_iterator(m, points.iter().map(|p| p.1.ln()));
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-12 * m as f64;
    if svd.rank(tol) < 3 {
        return Err(Error::Singular(format!(
            "{m} points do not determine (ln C, B, A); need at least 3 distinct n"
        )));
    }
    let beta = svd
        .solve(&y, tol)
        .map_err(|e| Error::Singular(e.to_string()))?;
    let resid = &y - &design * &beta;
    let residual = (resid.norm_squared() / m as f64).sqrt();
    Ok(RateFit {
        a: beta[2],
        b: beta[1],
        c: beta[0].exp(),
        residual,
    })
}
