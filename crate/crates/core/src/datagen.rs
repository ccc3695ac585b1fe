//! α-fat data models on [−1, 1] and cohort construction.
//!
//! A [`FatModel`] is a CDF F with a known left end of support. Cohorts are
//! built either as the deterministic quantiles F*((i−1)/(N−1)) ("fixed"
//! setting) or as i.i.d. inverse-CDF draws. Every inversion is bisection on a
//! monotone CDF, so densities with singularities at the minimum (α < 1) are
//! handled without derivatives.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta, beta_reg};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Right-continuous empirical CDF F̃(x) = (1/N)·#{x_i ≤ x}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyCohort);
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("NaN in empirical values".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.len() as f64
    }

    /// F̃*(γ) = inf{τ : F̃(τ) ≥ γ}, i.e. the k-th order statistic for the
    /// smallest k with k/N ≥ γ. γ ≤ 0 returns the sample minimum.
    pub fn quantile(&self, gamma: f64) -> f64 {
        let n = self.len();
        if gamma <= 0.0 {
            return self.min();
        }
        if gamma > 1.0 {
            return f64::INFINITY;
        }
        let nf = n as f64;
        // Start from ⌈γN⌉ and fix up so the comparison matches k/N ≥ γ in
        // floating point exactly.
        let mut k = ((gamma * nf).ceil() as usize).clamp(1, n);
        while k > 1 && (k - 1) as f64 / nf >= gamma {
            k -= 1;
        }
        while k < n && (k as f64 / nf) < gamma {
            k += 1;
        }
        self.sorted[k - 1]
    }
}

/// Parametric or empirical data distribution supported inside [−1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FatModel {
    /// Law of x_min + Δ·X with X ~ Beta(alpha, beta).
    BetaScaled {
        alpha: f64,
        beta: f64,
        x_min: f64,
        delta: f64,
    },
    /// Normal(mu, sigma²) truncated to [x_min, x_max].
    TruncNormal {
        mu: f64,
        sigma: f64,
        x_min: f64,
        x_max: f64,
    },
    Empirical(EmpiricalCdf),
}

/// Constants of the fatness inequality F(x) ≥ C·(x − x_min)^α on (x_min, x̄).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FatnessConstant {
    pub alpha: f64,
    pub c: f64,
    pub x_bar: f64,
}

// Slack for x_min + Δ landing a rounding step above 1.
const PLACEMENT_SLACK: f64 = 1e-12;

impl FatModel {
    pub fn beta_scaled(alpha: f64, beta: f64, x_min: f64, delta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta shape parameters must be positive, got ({alpha}, {beta})"
            )));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
        }
        if !(-1.0..=1.0).contains(&x_min) {
            return Err(Error::OutOfDomain {
                value: x_min,
                lo: -1.0,
                hi: 1.0,
            });
        }
        if x_min + delta > 1.0 + PLACEMENT_SLACK {
            return Err(Error::InfeasiblePlacement {
                x_min,
                width: delta,
            });
        }
        Ok(FatModel::BetaScaled {
            alpha,
            beta,
            x_min,
            delta,
        })
    }

    /// Uniform on [x_min, x_min + delta].
    pub fn uniform(x_min: f64, delta: f64) -> Result<Self> {
        Self::beta_scaled(1.0, 1.0, x_min, delta)
    }

    pub fn trunc_normal(mu: f64, sigma: f64, x_min: f64, x_max: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || !mu.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "truncated normal needs finite mu and positive sigma, got ({mu}, {sigma})"
            )));
        }
        if !(-1.0 <= x_min && x_min < x_max && x_max <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "truncation bounds must satisfy -1 <= x_min < x_max <= 1, got [{x_min}, {x_max}]"
            )));
        }
        Ok(FatModel::TruncNormal {
            mu,
            sigma,
            x_min,
            x_max,
        })
    }

    pub fn empirical(values: Vec<f64>) -> Result<Self> {
        let e = EmpiricalCdf::new(values)?;
        if e.min() < -1.0 || e.max() > 1.0 {
            return Err(Error::InvalidArgument("empirical values must lie in [-1, 1]".into()));
        }
        Ok(FatModel::Empirical(e))
    }

    pub fn name(&self) -> &'static str {
        match self {
            FatModel::BetaScaled { .. } => "beta",
            FatModel::TruncNormal { .. } => "truncnormal",
            FatModel::Empirical(_) => "empirical",
        }
    }

    /// Left and right end of the support.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            FatModel::BetaScaled { x_min, delta, .. } => (x_min, (x_min + delta).min(1.0)),
            FatModel::TruncNormal { x_min, x_max, .. } => (x_min, x_max),
            FatModel::Empirical(ref e) => (e.min(), e.max()),
        }
    }

    pub fn x_min(&self) -> f64 {
        self.support().0
    }

    /// Exact CDF. Errors for x outside [−1, 1].
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain {
                value: x,
                lo: -1.0,
                hi: 1.0,
            });
        }
        Ok(self.cdf_unchecked(x))
    }

    fn cdf_unchecked(&self, x: f64) -> f64 {
        match *self {
            FatModel::BetaScaled {
                alpha,
                beta,
                x_min,
                delta,
            } => {
                let u = (x - x_min) / delta;
                if u <= 0.0 {
                    0.0
                } else if u >= 1.0 {
                    1.0
                } else {
                    beta_reg(alpha, beta, u)
                }
            }
            FatModel::TruncNormal {
                mu,
                sigma,
                x_min,
                x_max,
            } => {
                if x <= x_min {
                    return 0.0;
                }
                if x >= x_max {
                    return 1.0;
                }
                let lo = std_normal_cdf((x_min - mu) / sigma);
                let hi = std_normal_cdf((x_max - mu) / sigma);
                ((std_normal_cdf((x - mu) / sigma) - lo) / (hi - lo)).clamp(0.0, 1.0)
            }
            FatModel::Empirical(ref e) => e.eval(x),
        }
    }

    /// F*(p) = inf{τ : F(τ) ≥ p}; p ≤ 0 returns x_min.
    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            FatModel::BetaScaled { .. } => self.from_unit(self.unit_quantile(p)),
            FatModel::TruncNormal { x_min, x_max, .. } => {
                if p <= 0.0 {
                    return x_min;
                }
                if p >= 1.0 {
                    return x_max;
                }
                bisect_inf(x_min, x_max, p, |x| self.cdf_unchecked(x))
            }
            FatModel::Empirical(ref e) => e.quantile(p),
        }
    }

    /// Quantile in the model's location-free coordinate: the Beta variate
    /// u ∈ [0, 1] for the scaled beta, x itself otherwise. Unit quantiles
    /// do not depend on where the model is placed, so callers sweeping x_min
    /// can reuse them through [`Self::from_unit`].
    pub fn unit_quantile(&self, p: f64) -> f64 {
        match *self {
            FatModel::BetaScaled { alpha, beta, .. } => {
                if p <= 0.0 {
                    0.0
                } else if p >= 1.0 {
                    1.0
                } else {
                    bisect_inf(0.0, 1.0, p, |u| beta_reg(alpha, beta, u))
                }
            }
            _ => self.quantile(p),
        }
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        match *self {
            FatModel::BetaScaled { x_min, delta, .. } => {
                if u <= 0.0 {
                    x_min
                } else {
                    (x_min + delta * u).min(1.0)
                }
            }
            _ => u,
        }
    }

    /// Closed-form fatness constants for the parametric families.
    ///
    /// Scaled beta: α is the first shape parameter, x̄ = x_min + Δ and
    /// C = min{1, (α·B(α, β))⁻¹}/Δ^α. F(u)/u^α is monotone in u between
    /// (α·B)⁻¹ at 0 and 1 at u = 1, so the smaller endpoint is the
    /// admissible constant.
    ///
    /// Truncated normal: α = 1, x̄ = x_max and C is the smaller boundary
    /// density.
    pub fn fatness_constant(&self) -> Result<FatnessConstant> {
        match *self {
            FatModel::BetaScaled {
                alpha,
                beta: b,
                x_min,
                delta,
            } => {
                let inv = 1.0 / (alpha * beta(alpha, b));
                Ok(FatnessConstant {
                    alpha,
                    c: inv.min(1.0) / delta.powf(alpha),
                    x_bar: x_min + delta,
                })
            }
            FatModel::TruncNormal {
                mu,
                sigma,
                x_min,
                x_max,
            } => {
                let a = (x_min - mu) / sigma;
                let b = (x_max - mu) / sigma;
                let mass = std_normal_cdf(b) - std_normal_cdf(a);
                let dens = std_normal_pdf(a).min(std_normal_pdf(b));
                Ok(FatnessConstant {
                    alpha: 1.0,
                    c: dens / (sigma * mass),
                    x_bar: x_max,
                })
            }
            FatModel::Empirical(_) => Err(Error::NoFatnessConstant("empirical")),
        }
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Smallest t in [lo, hi] (to machine resolution) with f(t) ≥ p, for
/// non-decreasing f with f(hi) ≥ p.
fn bisect_inf(mut lo: f64, mut hi: f64, p: f64, f: impl Fn(f64) -> f64) -> f64 {
    if f(lo) >= p {
        return lo;
    }
    loop {
        let mid = lo + (hi - lo) / 2.0;
        if mid <= lo || mid >= hi {
            return hi;
        }
        if f(mid) >= p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    Fixed,
    Iid,
    External,
}

/// N user values in [−1, 1] and the minimum the estimator is scored against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    values: Vec<f64>,
    setting: Setting,
    target_min: f64,
}

impl Cohort {
    /// External cohort; the target is the sample minimum.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::with_target(values, Setting::External, None)
    }

    fn with_target(values: Vec<f64>, setting: Setting, target: Option<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyCohort);
        }
        if let Some(&bad) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::OutOfDomain {
                value: bad,
                lo: -1.0,
                hi: 1.0,
            });
        }
        let sample_min = values.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            values,
            setting,
            target_min: target.unwrap_or(sample_min),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn setting(&self) -> Setting {
        self.setting
    }

    /// x_min the error is measured against: the sample minimum for fixed and
    /// external cohorts, the support minimum of the model for i.i.d. ones.
    pub fn target_min(&self) -> f64 {
        self.target_min
    }

    pub fn sample_min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sample_max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Reflection x ↦ −x; the target becomes the (negated) maximum.
    pub fn negated(&self) -> Self {
        let values: Vec<f64> = self.values.iter().map(|v| -v).collect();
        let target = values.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            values,
            setting: self.setting,
            target_min: target,
        }
    }

    pub fn empirical_cdf(&self) -> EmpiricalCdf {
        EmpiricalCdf::new(self.values.clone()).expect("cohort is nonempty")
    }
}

/// Fixed-setting cohort: values F*((i−1)/(N−1)) for i = 1..N, sorted.
pub fn fixed_cohort(model: &FatModel, n: usize) -> Result<Cohort> {
    let units = fixed_unit_quantiles(model, n)?;
    fixed_cohort_from_units(model, &units)
}

/// Unit quantiles at levels (i−1)/(N−1); see [`FatModel::unit_quantile`].
pub fn fixed_unit_quantiles(model: &FatModel, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "fixed cohort needs n >= 2, got {n}"
        )));
    }
    let denom = (n - 1) as f64;
    Ok((0..n).map(|i| model.unit_quantile(i as f64 / denom)).collect())
}

/// Fixed-setting cohort from precomputed unit quantiles.
pub fn fixed_cohort_from_units(model: &FatModel, units: &[f64]) -> Result<Cohort> {
    let values = units.iter().map(|&u| model.from_unit(u)).collect();
    Cohort::with_target(values, Setting::Fixed, Some(model.x_min()))
}

/// I.i.d. cohort by inverse-CDF sampling; one uniform per value.
pub fn iid_cohort<R: RandomStream + ?Sized>(
    model: &FatModel,
    n: usize,
    rng: &mut R,
) -> Result<Cohort> {
    if n == 0 {
        return Err(Error::EmptyCohort);
    }
    let values = (0..n).map(|_| model.quantile(rng.next_uniform())).collect();
    Cohort::with_target(values, Setting::Iid, Some(model.x_min()))
}

/// Affine map [lo, hi] → [−1, 1].
pub fn rescale(x: f64, lo: f64, hi: f64) -> f64 {
    2.0 * (x - lo) / (hi - lo) - 1.0
}

/// Inverse of [`rescale`].
pub fn unscale(y: f64, lo: f64, hi: f64) -> f64 {
    lo + (y + 1.0) * (hi - lo) / 2.0
}

/// Reads one decimal value per line, rescaling [lo, hi] onto [−1, 1]. A
/// non-numeric first line is treated as a header; blank lines are skipped.
pub fn ingest_csv_cohort(path: &Path, lo: f64, hi: f64) -> Result<Cohort> {
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "ingest range needs lo < hi, got [{lo}, {hi}]"
        )));
    }
    let text = fs::read_to_string(path)?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut values = Vec::new();
    let mut first = true;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let field = raw.trim().trim_matches(',').trim();
        if field.is_empty() {
            continue;
        }
        let parsed = field.parse::<f64>();
        let is_first = std::mem::replace(&mut first, false);
        let v = match parsed {
            Ok(v) if v.is_finite() => v,
            Err(_) if is_first => continue,
            _ => return Err(parse_err(line, format!("not a finite number: {field:?}"))),
        };
        if !(lo..=hi).contains(&v) {
            return Err(parse_err(line, format!("value {v} outside [{lo}, {hi}]")));
        }
        values.push(rescale(v, lo, hi).clamp(-1.0, 1.0));
    }
    if values.is_empty() {
        return Err(Error::EmptyCohort);
    }
    Cohort::from_values(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{ScriptedStream, SeededStream};
    use std::io::Write;

    #[test]
    fn uniform_cdf_is_clamped_linear() {
        let m = FatModel::uniform(-0.4, 0.8).unwrap();
        for &x in &[-1.0, -0.4, -0.2, 0.0, 0.3, 0.4, 0.9] {
            let expect = ((x + 0.4) / 0.8f64).clamp(0.0, 1.0);
            assert!((m.cdf(x).unwrap() - expect).abs() < 1e-14, "{x}");
        }
        assert!(m.cdf(1.2).is_err());
        assert!(m.cdf(-1.01).is_err());
    }

    #[test]
    fn support_endpoints() {
        let m = FatModel::beta_scaled(0.5, 2.0, -0.7, 0.9).unwrap();
        assert_eq!(m.cdf(-0.7).unwrap(), 0.0);
        assert_eq!(m.cdf(0.2).unwrap(), 1.0);
    }

    #[test]
    fn beta21_cdf_is_square() {
        let m = FatModel::beta_scaled(2.0, 1.0, -1.0, 2.0).unwrap();
        assert!((m.cdf(0.0).unwrap() - 0.25).abs() < 1e-14);
        assert!((m.cdf(0.5).unwrap() - 0.5625).abs() < 1e-14);
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(FatModel::beta_scaled(0.0, 1.0, 0.0, 0.5).is_err());
        assert!(FatModel::beta_scaled(1.0, 1.0, 0.5, 0.6).is_err());
        assert!(FatModel::trunc_normal(0.0, 0.0, -1.0, 1.0).is_err());
        assert!(FatModel::trunc_normal(0.0, 1.0, 0.5, 0.5).is_err());
        assert!(FatModel::empirical(vec![]).is_err());
        assert!(FatModel::empirical(vec![2.0]).is_err());
    }

    #[test]
    fn fixed_uniform_three_points() {
        let m = FatModel::uniform(-1.0, 2.0).unwrap();
        let c = fixed_cohort(&m, 3).unwrap();
        let expect = [-1.0, 0.0, 1.0];
        for (v, e) in c.values().iter().zip(expect) {
            assert!((v - e).abs() < 1e-12, "{v} vs {e}");
        }
        assert_eq!(c.values()[0], -1.0);
        assert_eq!(c.values()[2], 1.0);
    }

    #[test]
    fn fixed_beta21_two_points() {
        let m = FatModel::beta_scaled(2.0, 1.0, -1.0, 2.0).unwrap();
        let c = fixed_cohort(&m, 2).unwrap();
        assert_eq!(c.values(), &[-1.0, 1.0]);
        assert!(fixed_cohort(&m, 1).is_err());
    }

    #[test]
    fn fixed_cohort_first_value_is_x_min() {
        for m in [
            FatModel::beta_scaled(0.5, 2.0, -0.3, 0.6).unwrap(),
            FatModel::trunc_normal(0.1, 0.4, -0.5, 0.8).unwrap(),
        ] {
            let c = fixed_cohort(&m, 50).unwrap();
            assert_eq!(c.values()[0], m.x_min());
            assert_eq!(c.target_min(), m.x_min());
            assert!(c.values().windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn fixed_cohort_inverts_cdf() {
        let models = [
            FatModel::uniform(-0.66, 0.3).unwrap(),
            FatModel::beta_scaled(0.5, 1.0, -1.0, 0.9).unwrap(),
            FatModel::beta_scaled(2.0, 2.0, 0.1, 0.9).unwrap(),
            FatModel::beta_scaled(4.0, 1.0, -0.2, 0.6).unwrap(),
            FatModel::trunc_normal(0.0, 0.3, -0.8, 0.8).unwrap(),
        ];
        let n = 1000;
        for m in &models {
            let c = fixed_cohort(m, n).unwrap();
            for (i, &x) in c.values().iter().enumerate() {
                let p = i as f64 / (n - 1) as f64;
                let err = (m.cdf(x).unwrap() - p).abs();
                assert!(err <= 1e-10, "{m:?} i={i} err={err}");
            }
        }
    }

    #[test]
    fn iid_forced_zero_gives_x_min() {
        let m = FatModel::beta_scaled(2.0, 3.0, -0.2, 0.5).unwrap();
        let mut s = ScriptedStream::constant(0.0);
        let c = iid_cohort(&m, 4, &mut s).unwrap();
        assert!(c.values().iter().all(|&v| v == -0.2));
        assert_eq!(s.drawn(), 4);
    }

    #[test]
    fn iid_ks_statistic() {
        let m = FatModel::beta_scaled(2.0, 1.0, -0.5, 1.2).unwrap();
        let n = 100_000;
        let mut s = SeededStream::new(5);
        let c = iid_cohort(&m, n, &mut s).unwrap();
        let e = c.empirical_cdf();
        let mut d: f64 = 0.0;
        for (i, &x) in e.sorted().iter().enumerate() {
            let f = m.cdf(x).unwrap();
            d = d.max((f - i as f64 / n as f64).abs());
            d = d.max(((i + 1) as f64 / n as f64 - f).abs());
        }
        assert!(d < 1.63 / (n as f64).sqrt(), "KS {d}");
    }

    #[test]
    fn iid_beta_mean() {
        let (a, b, x0, delta) = (2.0, 3.0, -0.8, 1.5);
        let m = FatModel::beta_scaled(a, b, x0, delta).unwrap();
        let n = 100_000;
        let mut s = SeededStream::new(9);
        let c = iid_cohort(&m, n, &mut s).unwrap();
        let mean = c.values().iter().sum::<f64>() / n as f64;
        let expect = x0 + delta * a / (a + b);
        let var = delta * delta * a * b / ((a + b) * (a + b) * (a + b + 1.0));
        assert!((mean - expect).abs() < 3.0 * (var / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn fatness_constant_uniform() {
        let m = FatModel::uniform(-0.9, 2.0 - 0.1).unwrap();
        let k = m.fatness_constant().unwrap();
        assert!((k.c - 1.0 / 1.9).abs() < 1e-14);
        let m = FatModel::uniform(-1.0, 2.0).unwrap();
        let k = m.fatness_constant().unwrap();
        assert!((k.c - 0.5).abs() < 1e-15);
        assert_eq!(k.x_bar, 1.0);
        assert_eq!(k.alpha, 1.0);
    }

    #[test]
    fn fatness_inequality_on_grid() {
        let models = [
            FatModel::uniform(-0.66, 0.3).unwrap(),
            FatModel::beta_scaled(0.5, 1.0, -1.0, 0.9).unwrap(),
            FatModel::beta_scaled(0.5, 2.0, -1.0, 0.9).unwrap(),
            FatModel::beta_scaled(0.9, 2.0, -0.5, 0.6).unwrap(),
            FatModel::beta_scaled(2.0, 1.0, -1.0, 2.0).unwrap(),
            FatModel::beta_scaled(2.0, 2.0, 0.1, 0.9).unwrap(),
            FatModel::beta_scaled(4.0, 2.0, -0.2, 0.6).unwrap(),
            FatModel::beta_scaled(1.0, 0.5, -0.2, 0.6).unwrap(),
            FatModel::trunc_normal(0.0, 0.3, -0.8, 0.8).unwrap(),
            FatModel::trunc_normal(-0.9, 0.2, -0.8, 0.8).unwrap(),
            FatModel::trunc_normal(0.7, 1.5, -1.0, 1.0).unwrap(),
        ];
        for m in &models {
            let k = m.fatness_constant().unwrap();
            let x0 = m.x_min();
            for j in 1..1000 {
                let x = x0 + (k.x_bar - x0) * j as f64 / 1000.0;
                let lower = k.c * (x - x0).powf(k.alpha);
                let f = m.cdf(x).unwrap();
                assert!(f >= lower * (1.0 - 1e-12), "{m:?} x={x} F={f} bound={lower}");
            }
        }
    }

    #[test]
    fn trunc_normal_symmetric_boundary_densities() {
        let m = FatModel::trunc_normal(0.1, 0.5, -0.4, 0.6).unwrap();
        let k = m.fatness_constant().unwrap();
        let a = (-0.4f64 - 0.1) / 0.5;
        let mass = std_normal_cdf(-a) - std_normal_cdf(a);
        assert!((k.c - std_normal_pdf(a) / (0.5 * mass)).abs() < 1e-14);
    }

    #[test]
    fn empirical_has_no_fatness_constant() {
        let m = FatModel::empirical(vec![0.1, 0.2]).unwrap();
        assert!(matches!(m.fatness_constant(), Err(Error::NoFatnessConstant(_))));
    }

    #[test]
    fn empirical_cdf_quantile_basics() {
        let e = EmpiricalCdf::new(vec![0.3, -0.2, 0.3, 0.9, 0.1]).unwrap();
        assert_eq!(e.eval(-0.3), 0.0);
        assert_eq!(e.eval(0.3), 0.8);
        assert_eq!(e.eval(0.9), 1.0);
        assert_eq!(e.quantile(0.0), -0.2);
        assert_eq!(e.quantile(0.2), -0.2);
        assert_eq!(e.quantile(0.21), 0.1);
        assert_eq!(e.quantile(0.5), 0.3);
        assert_eq!(e.quantile(1.0), 0.9);
    }

    #[test]
    fn csv_ingest_rescales() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "age\n75\n0\n\n150\n37.5").unwrap();
        let c = ingest_csv_cohort(f.path(), 0.0, 150.0).unwrap();
        assert_eq!(c.values(), &[0.0, -1.0, 1.0, -0.5]);
    }

    #[test]
    fn csv_ingest_reports_rows() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1\n2\nabc").unwrap();
        match ingest_csv_cohort(f.path(), 0.0, 5.0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1\n7").unwrap();
        match ingest_csv_cohort(f.path(), 0.0, 5.0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rescale_round_trip() {
        for &x in &[0.0, 3.7, 149.99, 75.0, 12.125] {
            let y = rescale(x, 0.0, 150.0);
            assert!((unscale(y, 0.0, 150.0) - x).abs() < 1e-12);
        }
    }
}
