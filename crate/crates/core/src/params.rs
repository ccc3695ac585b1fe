//! Threshold and depth schedules for the private search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ldp::PrivacyBudget;

/// Base of the unknown-α schedule used in the reference experiments.
pub const DEFAULT_UNKNOWN_ALPHA_SCALE: f64 = 1000.0;

/// γ = √(4·e^{ε/L}(1 + e^{ε/L})·h / ((e^{ε/L} − 1)²·N)).
///
/// Evaluated as √(4h(1 + q)/((1 − q)²N)) with q = e^{−ε/L}, which is the
/// same expression divided through by e^{2ε/L}; it stays finite for large
/// ε/L and gives √(4h/N) at ε = ∞.
pub fn gamma_threshold(epsilon: PrivacyBudget, depth: usize, h: f64, n: usize) -> f64 {
    let er = epsilon.epsilon() / depth as f64;
    let q = (-er).exp();
    let one_minus_q = -(-er).exp_m1();
    (4.0 * h * (1.0 + q) / (one_minus_q * one_minus_q * n as f64)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ParamMode {
    /// The aggregator knows α ≥ alpha0.
    KnownAlphaLowerBound { alpha0: f64 },
    /// Θ(log² N) schedule: L = ⌈log₂²N / (2 log₂ s)⌉, h = ln²N / (2 ln s).
    UnknownAlpha { scale: f64 },
    /// Known-α schedule with alpha0 = 1.
    LowerAlphaPreset,
    /// Unknown-α schedule with s = 1000.
    UnknownAlphaPreset,
}

impl ParamMode {
    pub fn label(&self) -> String {
        match *self {
            ParamMode::KnownAlphaLowerBound { alpha0 } => format!("known:{alpha0}"),
            ParamMode::UnknownAlpha { scale } => format!("unknown:{scale}"),
            ParamMode::LowerAlphaPreset => "lower".into(),
            ParamMode::UnknownAlphaPreset => "unknown".into(),
        }
    }

    /// Parses `lower`, `unknown`, `known:<alpha0>` or `unknown:<scale>`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("unrecognized parameter mode {s:?}"));
        match s {
            "lower" => return Ok(ParamMode::LowerAlphaPreset),
            "unknown" => return Ok(ParamMode::UnknownAlphaPreset),
            _ => {}
        }
        let (head, arg) = s.split_once(':').ok_or_else(bad)?;
        let v: f64 = arg.trim().parse().map_err(|_| bad())?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(bad());
        }
        match head.trim() {
            "known" => Ok(ParamMode::KnownAlphaLowerBound { alpha0: v }),
            "unknown" if v > 1.0 => Ok(ParamMode::UnknownAlpha { scale: v }),
            _ => Err(bad()),
        }
    }

    /// Depth and h for `n` users.
    pub fn schedule(&self, n: usize) -> Result<(usize, f64)> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "parameter schedules need n >= 2, got {n}"
            )));
        }
        let nf = n as f64;
        match *self {
            ParamMode::KnownAlphaLowerBound { alpha0 } => known_alpha_schedule(nf, alpha0),
            ParamMode::LowerAlphaPreset => known_alpha_schedule(nf, 1.0),
            ParamMode::UnknownAlpha { scale } => unknown_alpha_schedule(nf, scale),
            ParamMode::UnknownAlphaPreset => {
                unknown_alpha_schedule(nf, DEFAULT_UNKNOWN_ALPHA_SCALE)
            }
        }
    }

    pub fn choose(&self, n: usize, epsilon: PrivacyBudget) -> Result<ParamChoice> {
        let (depth, h) = self.schedule(n)?;
        Ok(ParamChoice {
            mode: *self,
            depth,
            h,
            gamma: gamma_threshold(epsilon, depth, h, n),
        })
    }
}

fn known_alpha_schedule(nf: f64, alpha0: f64) -> Result<(usize, f64)> {
    if !(alpha0 > 0.0 && alpha0.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "alpha lower bound must be positive, got {alpha0}"
        )));
    }
    let depth = ((nf.log2() / (2.0 * alpha0)).ceil() as usize).max(1);
    Ok((depth, nf.ln() / (2.0 * alpha0)))
}

fn unknown_alpha_schedule(nf: f64, scale: f64) -> Result<(usize, f64)> {
    if !(scale > 1.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "unknown-alpha scale must exceed 1, got {scale}"
        )));
    }
    // Grouped as log(N)·(log(N)/(2·log s)) so that N = s reduces to log(N)/2
    // bit for bit, matching the known-α schedule at alpha0 = 1.
    let (l2, ln) = (nf.log2(), nf.ln());
    let depth = ((l2 * (l2 / (2.0 * scale.log2()))).ceil() as usize).max(1);
    Ok((depth, ln * (ln / (2.0 * scale.ln()))))
}

/// A resolved schedule. γ is computed once at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamChoice {
    pub mode: ParamMode,
    pub depth: usize,
    pub h: f64,
    pub gamma: f64,
}

pub fn params_known_alpha(n: usize, alpha0: f64, epsilon: PrivacyBudget) -> Result<ParamChoice> {
    ParamMode::KnownAlphaLowerBound { alpha0 }.choose(n, epsilon)
}

pub fn params_unknown_alpha(n: usize, epsilon: PrivacyBudget) -> Result<ParamChoice> {
    ParamMode::UnknownAlphaPreset.choose(n, epsilon)
}
