//! Interactive binary search for the minimum.
//!
//! Each round halves the current interval [lo, hi] at τ = lo + (hi − lo)/2.
//! Users answer sign(τ − x_i); the search keeps the left half when the
//! aggregate says some mass lies at or below τ. The non-private variant uses
//! the raw frequency and tests Φ > 0; the private variant sanitizes every
//! answer with randomized response at ε/L and tests the debiased Φ′ ≥ γ.

use serde::{Deserialize, Serialize};

use crate::datagen::Cohort;
use crate::error::{Error, Result};
use crate::ldp::{
    laplace_sanitize, randomized_response, unbiased_phi, Bit, PrivacyBudget, RoundBudget,
};
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn full() -> Self {
        Self { lo: -1.0, hi: 1.0 }
    }

    pub fn midpoint(&self) -> f64 {
        self.lo + (self.hi - self.lo) / 2.0
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn step(&self, branch: Branch) -> Self {
        let tau = self.midpoint();
        match branch {
            Branch::Left => Self {
                lo: self.lo,
                hi: tau,
            },
            Branch::Right => Self {
                lo: tau,
                hi: self.hi,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Left,
    Right,
}

impl Branch {
    fn mirrored(self) -> Self {
        match self {
            Branch::Left => Branch::Right,
            Branch::Right => Branch::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub epsilon: PrivacyBudget,
    pub depth: usize,
    pub gamma: f64,
    pub n: usize,
}

impl ProtocolConfig {
    pub fn new(epsilon: PrivacyBudget, depth: usize, gamma: f64, n: usize) -> Result<Self> {
        let cfg = Self {
            epsilon,
            depth,
            gamma,
            n,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::InvalidArgument("depth must be at least 1".into()));
        }
        if !(self.gamma >= 0.0) || self.gamma.is_infinite() {
            return Err(Error::InvalidArgument(format!(
                "gamma must be finite and nonnegative, got {}",
                self.gamma
            )));
        }
        if self.n < 1 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        Ok(())
    }

    pub fn round_budget(&self) -> RoundBudget {
        self.epsilon.per_round(self.depth)
    }

    /// γ above the largest attainable Φ′: every round goes Right.
    pub fn is_degenerate(&self) -> bool {
        self.gamma > self.round_budget().max_phi()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub tau: f64,
    pub sum_z: i64,
    pub phi: f64,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    /// `None` for the non-private search.
    pub config: Option<ProtocolConfig>,
    pub depth: usize,
    pub n: usize,
    pub rounds: Vec<RoundRecord>,
    pub estimate: f64,
    /// γ exceeded the largest attainable Φ′.
    pub degenerate: bool,
    /// Produced by the maximum-finding adapter; τ values are in the original
    /// (unreflected) coordinates.
    pub reflected: bool,
}

impl Transcript {
    pub fn final_interval(&self) -> Interval {
        let half = (2.0f64).powi(-(self.depth as i32));
        Interval {
            lo: self.estimate - half,
            hi: self.estimate + half,
        }
    }
}

/// The raw answer sign(τ − x), randomized at the round budget. Draws one
/// uniform.
pub fn user_respond<R: RandomStream + ?Sized>(
    x: f64,
    tau: f64,
    budget: RoundBudget,
    rng: &mut R,
) -> Bit {
    randomized_response(Bit::sign_of(tau - x), budget, rng)
}

fn check_cohort(cohort: &Cohort) -> Result<()> {
    if cohort.is_empty() {
        return Err(Error::EmptyCohort);
    }
    Ok(())
}

/// Plain binary search. Deterministic, |estimate − min| ≤ 2^{−L}.
pub fn run_nonprivate_min(cohort: &Cohort, depth: usize) -> Result<Transcript> {
    check_cohort(cohort)?;
    if depth < 1 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    let n = cohort.len();
    let mut interval = Interval::full();
    let mut rounds = Vec::with_capacity(depth);
    for t in 1..=depth {
        let tau = interval.midpoint();
        let sum_z: i64 = cohort
            .values()
            .iter()
            .map(|&x| Bit::sign_of(tau - x).value())
            .sum();
        let phi = (sum_z + n as i64) as f64 / (2 * n) as f64;
        let branch = if phi > 0.0 { Branch::Left } else { Branch::Right };
        rounds.push(RoundRecord {
            round: t,
            tau,
            sum_z,
            phi,
            branch,
        });
        interval = interval.step(branch);
    }
    Ok(Transcript {
        config: None,
        depth,
        n,
        rounds,
        estimate: interval.midpoint(),
        degenerate: false,
        reflected: false,
    })
}

/// Source of per-user randomness for a private run.
trait UserStreams {
    fn respond(&mut self, user: usize, x: f64, tau: f64, budget: RoundBudget) -> Bit;
}

struct Shared<'a, R: ?Sized>(&'a mut R);

impl<R: RandomStream + ?Sized> UserStreams for Shared<'_, R> {
    fn respond(&mut self, _user: usize, x: f64, tau: f64, budget: RoundBudget) -> Bit {
        user_respond(x, tau, budget, self.0)
    }
}

struct PerUser<'a, R>(&'a mut [R]);

impl<R: RandomStream> UserStreams for PerUser<'_, R> {
    fn respond(&mut self, user: usize, x: f64, tau: f64, budget: RoundBudget) -> Bit {
        user_respond(x, tau, budget, &mut self.0[user])
    }
}

fn run_private_inner(
    cohort: &Cohort,
    config: &ProtocolConfig,
    streams: &mut impl UserStreams,
) -> Result<Transcript> {
    check_cohort(cohort)?;
    config.validate()?;
    if cohort.len() != config.n {
        return Err(Error::CohortSizeMismatch {
            expected: config.n,
            actual: cohort.len(),
        });
    }
    let budget = config.round_budget();
    let mut interval = Interval::full();
    let mut rounds = Vec::with_capacity(config.depth);
    for t in 1..=config.depth {
        let tau = interval.midpoint();
        let sum_z: i64 = cohort
            .values()
            .iter()
            .enumerate()
            .map(|(i, &x)| streams.respond(i, x, tau, budget).value())
            .sum();
        let phi = unbiased_phi(sum_z, config.n, budget)?;
        let branch = if phi >= config.gamma {
            Branch::Left
        } else {
            Branch::Right
        };
        rounds.push(RoundRecord {
            round: t,
            tau,
            sum_z,
            phi,
            branch,
        });
        interval = interval.step(branch);
    }
    Ok(Transcript {
        config: Some(*config),
        depth: config.depth,
        n: config.n,
        rounds,
        estimate: interval.midpoint(),
        degenerate: config.is_degenerate(),
        reflected: false,
    })
}

/// Private binary search. One shared stream, consumed in user order within
/// each round: exactly N uniforms per round.
pub fn run_private_min<R: RandomStream + ?Sized>(
    cohort: &Cohort,
    config: &ProtocolConfig,
    rng: &mut R,
) -> Result<Transcript> {
    run_private_inner(cohort, config, &mut Shared(rng))
}

/// As [`run_private_min`], but user i draws only from `streams[i]`. This is
/// how a deployment with independent clients consumes randomness.
pub fn run_private_min_per_user<R: RandomStream>(
    cohort: &Cohort,
    config: &ProtocolConfig,
    streams: &mut [R],
) -> Result<Transcript> {
    if streams.len() != cohort.len() {
        return Err(Error::InvalidArgument(format!(
            "{} streams for {} users",
            streams.len(),
            cohort.len()
        )));
    }
    run_private_inner(cohort, config, &mut PerUser(streams))
}

/// Maximum finding by reflection: −(private min of −X), same stream.
pub fn run_private_max<R: RandomStream + ?Sized>(
    cohort: &Cohort,
    config: &ProtocolConfig,
    rng: &mut R,
) -> Result<Transcript> {
    check_cohort(cohort)?;
    let mut t = run_private_min(&cohort.negated(), config, rng)?;
    for r in &mut t.rounds {
        r.tau = -r.tau;
        r.branch = r.branch.mirrored();
    }
    t.estimate = -t.estimate;
    t.reflected = true;
    Ok(t)
}

/// Naive baseline: every user reports x_i + Laplace(0, 2/ε) and the server
/// takes the minimum. One uniform per user.
pub fn baseline_min<R: RandomStream + ?Sized>(
    cohort: &Cohort,
    budget: PrivacyBudget,
    rng: &mut R,
) -> Result<f64> {
    check_cohort(cohort)?;
    let mut best = f64::INFINITY;
    for &x in cohort.values() {
        best = best.min(laplace_sanitize(x, budget, rng)?);
    }
    Ok(best)
}
