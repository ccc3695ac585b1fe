//! Monte Carlo sweeps over N and ε.
//!
//! For every (N, ε, mechanism) the model is placed at each x_min of a grid,
//! `reps` independent runs are scored by |x̃ − x_min|, and the row reports
//! the x_min whose mean error is largest, with the 5% and 95% error quantiles
//! taken at that same x_min. Every run draws from a stream derived from
//! (seed, N, ε, x_min, mechanism, rep), so a cell never depends on which
//! other cells were evaluated or in what order.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{fixed_cohort_from_units, fixed_unit_quantiles, iid_cohort, Cohort, FatModel, Setting};
use crate::error::{Error, Result};
use crate::ldp::PrivacyBudget;
use crate::params::ParamMode;
use crate::protocol::{baseline_min, run_nonprivate_min, run_private_min, ProtocolConfig};
use crate::rng::SeededStream;

/// Desk-scale default repetition count.
pub const DEFAULT_REPS: usize = 200;
/// Largest N accepted unless the spec opts into full scale.
pub const DEFAULT_MAX_N: usize = 1 << 16;
pub const FULL_SCALE_MAX_N: usize = 1 << 20;

/// A data model with its left end left free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelTemplate {
    Beta { alpha: f64, beta: f64, delta: f64 },
    /// Normal with mean x_min + mu_offset, truncated to [x_min, x_min + width].
    TruncNormal { mu_offset: f64, sigma: f64, width: f64 },
}

impl ModelTemplate {
    pub fn uniform(delta: f64) -> Self {
        ModelTemplate::Beta {
            alpha: 1.0,
            beta: 1.0,
            delta,
        }
    }

    pub fn width(&self) -> f64 {
        match *self {
            ModelTemplate::Beta { delta, .. } => delta,
            ModelTemplate::TruncNormal { width, .. } => width,
        }
    }

    /// The tail exponent α of the placed model.
    pub fn alpha(&self) -> f64 {
        match *self {
            ModelTemplate::Beta { alpha, .. } => alpha,
            ModelTemplate::TruncNormal { .. } => 1.0,
        }
    }

    pub fn place(&self, x_min: f64) -> Result<FatModel> {
        match *self {
            ModelTemplate::Beta { alpha, beta, delta } => {
                FatModel::beta_scaled(alpha, beta, x_min, delta)
            }
            ModelTemplate::TruncNormal {
                mu_offset,
                sigma,
                width,
            } => {
                if x_min + width > 1.0 + 1e-12 {
                    return Err(Error::InfeasiblePlacement { x_min, width });
                }
                FatModel::trunc_normal(x_min + mu_offset, sigma, x_min, (x_min + width).min(1.0))
            }
        }
    }

    /// {k·0.2·(2 − Δ) − 1 : k = 0..5}: six placements from the left edge to
    /// the right edge of [−1, 1].
    pub fn default_xmin_grid(&self) -> Vec<f64> {
        xmin_grid(self.width())
    }
}

pub fn xmin_grid(width: f64) -> Vec<f64> {
    (0..=5)
        .map(|k| k as f64 * 0.2 * (2.0 - width) - 1.0)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mechanism {
    BinarySearch,
    LaplaceBaseline,
    NonPrivate,
}

impl Mechanism {
    pub fn label(&self) -> &'static str {
        match self {
            Mechanism::BinarySearch => "binary_search",
            Mechanism::LaplaceBaseline => "laplace",
            Mechanism::NonPrivate => "nonprivate",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "binary_search" | "binary" => Ok(Mechanism::BinarySearch),
            "laplace" | "baseline" => Ok(Mechanism::LaplaceBaseline),
            "nonprivate" => Ok(Mechanism::NonPrivate),
            other => Err(Error::InvalidArgument(format!("unknown mechanism {other:?}"))),
        }
    }

    fn tag(&self) -> u64 {
        match self {
            Mechanism::BinarySearch => 1,
            Mechanism::LaplaceBaseline => 2,
            Mechanism::NonPrivate => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub model: ModelTemplate,
    pub setting: Setting,
    pub n_grid: Vec<usize>,
    pub epsilon_grid: Vec<f64>,
    pub param_mode: ParamMode,
    pub reps: usize,
    pub xmin_grid: Vec<f64>,
    pub seed: u64,
    pub mechanisms: Vec<Mechanism>,
    /// Allow N up to 2^20.
    pub full_scale: bool,
}

impl ExperimentSpec {
    /// Uniform-width template with the default x_min grid and desk-scale reps.
    pub fn new(model: ModelTemplate, n_grid: Vec<usize>, epsilon_grid: Vec<f64>) -> Self {
        Self {
            model,
            setting: Setting::Fixed,
            xmin_grid: model.default_xmin_grid(),
            n_grid,
            epsilon_grid,
            param_mode: ParamMode::LowerAlphaPreset,
            reps: DEFAULT_REPS,
            seed: 0,
            mechanisms: vec![Mechanism::BinarySearch],
            full_scale: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.reps < 1 {
            return bad("reps must be at least 1".into());
        }
        if self.n_grid.is_empty() {
            return bad("n_grid is empty".into());
        }
        if self.epsilon_grid.is_empty() {
            return bad("epsilon_grid is empty".into());
        }
        if self.xmin_grid.is_empty() {
            return bad("xmin_grid is empty".into());
        }
        if self.mechanisms.is_empty() {
            return bad("no mechanisms selected".into());
        }
        if self.setting == Setting::External {
            return bad("experiments generate their own data: setting must be fixed or iid".into());
        }
        let cap = if self.full_scale { FULL_SCALE_MAX_N } else { DEFAULT_MAX_N };
        for &n in &self.n_grid {
            if n < 2 || n > cap {
                return bad(format!("n = {n} outside [2, {cap}]"));
            }
        }
        for &e in &self.epsilon_grid {
            PrivacyBudget::from_f64(e)?;
        }
        for &x in &self.xmin_grid {
            if !(-1.0..=1.0).contains(&x) {
                return bad(format!("x_min = {x} outside [-1, 1]"));
            }
        }
        if self.xmin_grid.iter().all(|&x| self.model.place(x).is_err()) {
            return bad("no feasible x_min in xmin_grid for this model".into());
        }
        Ok(())
    }
}

/// Error statistics of one (N, ε, mechanism, x_min) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub x_min: f64,
    pub mean_abs_err: f64,
    pub q05: f64,
    pub q95: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub n: usize,
    pub epsilon: f64,
    pub mechanism: Mechanism,
    pub param_mode: ParamMode,
    /// The x_min with the largest mean error; quantiles are taken there.
    pub worst: CellStats,
    /// Depth used (0 for the Laplace baseline).
    pub depth: usize,
    pub seed: u64,
    /// Every feasible x_min, in grid order.
    pub cells: Vec<CellStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    /// Grid points where x_min + width > 1, with the reason.
    pub infeasible: Vec<(f64, String)>,
}

impl ExperimentResult {
    pub fn row(&self, n: usize, epsilon: f64, mechanism: Mechanism) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.epsilon == epsilon && r.mechanism == mechanism)
    }

    /// (n, worst mean error) for one (ε, mechanism), in n_grid order.
    pub fn curve(&self, epsilon: f64, mechanism: Mechanism) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.epsilon == epsilon && r.mechanism == mechanism)
            .map(|r| (r.n, r.worst.mean_abs_err))
            .collect()
    }
}

/// Linear-interpolation sample quantile (the "type 7" rule) of sorted data.
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn cell_stats(x_min: f64, mut errors: Vec<f64>) -> CellStats {
    let reps = errors.len();
    let mean_abs_err = errors.iter().sum::<f64>() / reps as f64;
    errors.sort_by(f64::total_cmp);
    CellStats {
        x_min,
        mean_abs_err,
        q05: sorted_quantile(&errors, 0.05),
        q95: sorted_quantile(&errors, 0.95),
        reps,
    }
}

const COHORT_TAG: u64 = 0xc0;

struct Placement {
    x_min: f64,
    model: FatModel,
    /// Only for the fixed setting.
    cohort: Option<Cohort>,
}

#[allow(clippy::too_many_arguments)]
fn single_run(
    spec: &ExperimentSpec,
    placement: &Placement,
    n: usize,
    epsilon: PrivacyBudget,
    mechanism: Mechanism,
    depth: usize,
    gamma: f64,
    rep: usize,
) -> Result<f64> {
    let owned;
    let cohort = match &placement.cohort {
        Some(c) => c,
        None => {
            let mut s = SeededStream::derive(
                spec.seed,
                &[COHORT_TAG, n as u64, placement.x_min.to_bits(), rep as u64],
            );
            owned = iid_cohort(&placement.model, n, &mut s)?;
            &owned
        }
    };
    let mut rng = SeededStream::derive(
        spec.seed,
        &[
            n as u64,
            epsilon.epsilon().to_bits(),
            placement.x_min.to_bits(),
            mechanism.tag(),
            rep as u64,
        ],
    );
    let estimate = match mechanism {
        Mechanism::BinarySearch => {
            let cfg = ProtocolConfig::new(epsilon, depth, gamma, n)?;
            run_private_min(cohort, &cfg, &mut rng)?.estimate
        }
        Mechanism::NonPrivate => run_nonprivate_min(cohort, depth)?.estimate,
        Mechanism::LaplaceBaseline => baseline_min(cohort, epsilon, &mut rng)?,
    };
    Ok((estimate - cohort.target_min()).abs())
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut infeasible = Vec::new();
    let mut feasible = Vec::new();
    for &x in &spec.xmin_grid {
        match spec.model.place(x) {
            Ok(m) => feasible.push((x, m)),
            Err(e) => infeasible.push((x, e.to_string())),
        }
    }

    let mut rows = Vec::new();
    for &n in &spec.n_grid {
        // Fixed cohorts are deterministic: build each placement once per N.
        let placements: Vec<Placement> = match spec.setting {
            Setting::Fixed => {
                let units = fixed_unit_quantiles(&feasible[0].1, n)?;
                feasible
                    .iter()
                    .map(|(x, m)| {
                        let cohort = match m {
                            FatModel::BetaScaled { .. } => fixed_cohort_from_units(m, &units)?,
                            _ => crate::datagen::fixed_cohort(m, n)?,
                        };
                        Ok(Placement {
                            x_min: *x,
                            model: m.clone(),
                            cohort: Some(cohort),
                        })
                    })
                    .collect::<Result<_>>()?
            }
            _ => feasible
                .iter()
                .map(|(x, m)| Placement {
                    x_min: *x,
                    model: m.clone(),
                    cohort: None,
                })
                .collect(),
        };

        for &eps_value in &spec.epsilon_grid {
            let epsilon = PrivacyBudget::from_f64(eps_value)?;
            let (depth, h) = spec.param_mode.schedule(n)?;
            let gamma = crate::params::gamma_threshold(epsilon, depth, h, n);
            for &mechanism in &spec.mechanisms {
                let cells: Vec<CellStats> = placements
                    .par_iter()
                    .map(|p| {
                        let errors = (0..spec.reps)
                            .map(|rep| single_run(spec, p, n, epsilon, mechanism, depth, gamma, rep))
                            .collect::<Result<Vec<f64>>>()?;
                        Ok(cell_stats(p.x_min, errors))
                    })
                    .collect::<Result<_>>()?;
                let worst = *cells
                    .iter()
                    .max_by(|a, b| a.mean_abs_err.total_cmp(&b.mean_abs_err))
                    .expect("at least one feasible placement");
                rows.push(ResultRow {
                    n,
                    epsilon: eps_value,
                    mechanism,
                    param_mode: spec.param_mode,
                    worst,
                    depth: if mechanism == Mechanism::LaplaceBaseline { 0 } else { depth },
                    seed: spec.seed,
                    cells,
                });
            }
        }
    }
    Ok(ExperimentResult { rows, infeasible })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub epsilon: f64,
    pub binary_search_err: f64,
    pub baseline_err: f64,
    /// baseline / binary search.
    pub ratio: f64,
}

/// Runs the binary search and the Laplace baseline on the same grid.
pub fn compare_baseline(spec: &ExperimentSpec) -> Result<Vec<ComparisonRow>> {
    let mut spec = spec.clone();
    spec.mechanisms = vec![Mechanism::BinarySearch, Mechanism::LaplaceBaseline];
    let result = run_experiment(&spec)?;
    let mut out = Vec::new();
    for &n in &spec.n_grid {
        for &e in &spec.epsilon_grid {
            let b = result.row(n, e, Mechanism::BinarySearch).expect("row present");
            let l = result.row(n, e, Mechanism::LaplaceBaseline).expect("row present");
            out.push(ComparisonRow {
                n,
                epsilon: e,
                binary_search_err: b.worst.mean_abs_err,
                baseline_err: l.worst.mean_abs_err,
                ratio: l.worst.mean_abs_err / b.worst.mean_abs_err,
            });
        }
    }
    Ok(out)
}

/// Unscaled guideline rate: (ln³N/(ε²N))^{1/2α} for the known-α schedules,
/// (ln⁶N/(ε²N))^{1/2α} for the unknown-α ones.
pub fn guideline_rate(mode: ParamMode, alpha: f64, n: usize, epsilon: f64) -> f64 {
    let nf = n as f64;
    let power = match mode {
        ParamMode::KnownAlphaLowerBound { .. } | ParamMode::LowerAlphaPreset => 3,
        ParamMode::UnknownAlpha { .. } | ParamMode::UnknownAlphaPreset => 6,
    };
    (nf.ln().powi(power) / (epsilon * epsilon * nf)).powf(1.0 / (2.0 * alpha))
}

/// Guideline curve on `n_grid`, scaled so it passes through `anchor`
/// (normally the largest-N empirical point). Without a usable anchor the
/// unscaled rate is returned.
pub fn guideline_curve(
    mode: ParamMode,
    alpha: f64,
    n_grid: &[usize],
    epsilon: f64,
    anchor: Option<(usize, f64)>,
) -> Vec<(usize, f64)> {
    let scale = anchor
        .map(|(n, v)| v / guideline_rate(mode, alpha, n, epsilon))
        .filter(|s| s.is_finite() && *s > 0.0)
        .unwrap_or(1.0);
    n_grid
        .iter()
        .map(|&n| (n, scale * guideline_rate(mode, alpha, n, epsilon)))
        .collect()
}

/// Guideline curves for every ε of a result, anchored at the binary-search
/// error at the largest N.
pub fn guidelines_for(spec: &ExperimentSpec, result: &ExperimentResult) -> Vec<(f64, usize, f64)> {
    let mut out = Vec::new();
    for &e in &spec.epsilon_grid {
        let curve = result.curve(e, Mechanism::BinarySearch);
        let anchor = curve.iter().copied().max_by_key(|&(n, _)| n);
        if anchor.is_none() {
            continue;
        }
        for (n, v) in guideline_curve(spec.param_mode, spec.model.alpha(), &spec.n_grid, e, anchor) {
            out.push((e, n, v));
        }
    }
    out
}

fn parse_n_token(tok: &str) -> Option<usize> {
    let tok = tok.trim();
    if let Some(exp) = tok.strip_prefix("2^") {
        let k: u32 = exp.trim().parse().ok()?;
        return 1usize.checked_shl(k);
    }
    tok.parse().ok()
}

/// Accepts comma-separated counts, `2^k` tokens, and `2^a..2^b` ranges of
/// powers of two.
pub fn parse_n_grid(s: &str) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        if let Some((a, b)) = tok.split_once("..") {
            let (a, b) = (a.trim().strip_prefix("2^")?, b.trim().strip_prefix("2^")?);
            let (a, b): (u32, u32) = (a.parse().ok()?, b.parse().ok()?);
            if a > b || b >= usize::BITS {
                return None;
            }
            out.extend((a..=b).map(|k| 1usize << k));
        } else {
            out.push(parse_n_token(tok)?);
        }
    }
    Some(out)
}

fn parse_f64_list(s: &str) -> Option<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().ok())
        .collect()
}

const CONFIG_KEYS: &[&str] = &[
    "model",
    "alpha",
    "beta",
    "delta",
    "mu_offset",
    "sigma",
    "width",
    "setting",
    "n_grid",
    "epsilon_grid",
    "param_mode",
    "reps",
    "xmin_grid",
    "seed",
    "mechanisms",
    "full_scale",
];

impl ExperimentSpec {
    pub fn from_config_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_config_str(&text, path)
    }

    /// Flat `key = value` file; `#` starts a comment, lists are
    /// comma-separated. Errors carry the offending line number.
    pub fn from_config_str(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut kv: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected key = value, got {content:?}")))?;
            let k = k.trim();
            if !CONFIG_KEYS.contains(&k) {
                return Err(err(line, format!("unknown key {k:?}")));
            }
            if kv.insert(k, (line, v.trim())).is_some() {
                return Err(err(line, format!("duplicate key {k:?}")));
            }
        }
        let last_line = text.lines().count().max(1);
        let get = |k: &str| kv.get(k).copied();
        let num = |k: &str, default: Option<f64>| -> Result<f64> {
            match get(k) {
                Some((line, v)) => v
                    .parse::<f64>()
                    .map_err(|_| err(line, format!("{k}: not a number: {v:?}"))),
                None => default.ok_or_else(|| err(last_line, format!("missing key {k:?}"))),
            }
        };

        let model_name = get("model").map(|(_, v)| v).unwrap_or("uniform");
        let model = match model_name {
            "uniform" => ModelTemplate::uniform(num("delta", None)?),
            "beta" => ModelTemplate::Beta {
                alpha: num("alpha", None)?,
                beta: num("beta", Some(1.0))?,
                delta: num("delta", None)?,
            },
            "truncnormal" => ModelTemplate::TruncNormal {
                mu_offset: num("mu_offset", None)?,
                sigma: num("sigma", None)?,
                width: num("width", None)?,
            },
            other => {
                let line = get("model").map(|(l, _)| l).unwrap_or(last_line);
                return Err(err(line, format!("unknown model {other:?}")));
            }
        };

        let setting = match get("setting") {
            None => Setting::Fixed,
            Some((_, "fixed")) => Setting::Fixed,
            Some((_, "iid")) => Setting::Iid,
            Some((line, v)) => return Err(err(line, format!("setting must be fixed or iid, got {v:?}"))),
        };

        let (n_line, n_text) = get("n_grid").ok_or_else(|| err(last_line, "missing key \"n_grid\"".into()))?;
        let n_grid = parse_n_grid(n_text).ok_or_else(|| err(n_line, format!("bad n_grid {n_text:?}")))?;
        if n_grid.is_empty() {
            return Err(err(n_line, "n_grid is empty".into()));
        }

        let (e_line, e_text) =
            get("epsilon_grid").ok_or_else(|| err(last_line, "missing key \"epsilon_grid\"".into()))?;
        let epsilon_grid =
            parse_f64_list(e_text).ok_or_else(|| err(e_line, format!("bad epsilon_grid {e_text:?}")))?;
        if epsilon_grid.is_empty() {
            return Err(err(e_line, "epsilon_grid is empty".into()));
        }

        let param_mode = match get("param_mode") {
            None => ParamMode::LowerAlphaPreset,
            Some((line, v)) => ParamMode::parse(v).map_err(|e| err(line, e.to_string()))?,
        };

        let reps = match get("reps") {
            None => DEFAULT_REPS,
            Some((line, v)) => v.parse().map_err(|_| err(line, format!("bad reps {v:?}")))?,
        };

        let xmin_grid = match get("xmin_grid") {
            None => model.default_xmin_grid(),
            Some((line, v)) => parse_f64_list(v).ok_or_else(|| err(line, format!("bad xmin_grid {v:?}")))?,
        };

        let seed = match get("seed") {
            None => 0,
            Some((line, v)) => v.parse().map_err(|_| err(line, format!("bad seed {v:?}")))?,
        };

        let mechanisms = match get("mechanisms") {
            None => vec![Mechanism::BinarySearch],
            Some((line, v)) => {
                let mut seen = HashSet::new();
                let mut out = Vec::new();
                for tok in v.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                    let m = Mechanism::parse(tok).map_err(|e| err(line, e.to_string()))?;
                    if seen.insert(m) {
                        out.push(m);
                    }
                }
                out
            }
        };

        let full_scale = match get("full_scale") {
            None | Some((_, "false")) => false,
            Some((_, "true")) => true,
            Some((line, v)) => return Err(err(line, format!("full_scale must be true or false, got {v:?}"))),
        };

        let spec = ExperimentSpec {
            model,
            setting,
            n_grid,
            epsilon_grid,
            param_mode,
            reps,
            xmin_grid,
            seed,
            mechanisms,
            full_scale,
        };
        spec.validate().map_err(|e| err(last_line, e.to_string()))?;
        Ok(spec)
    }
}
