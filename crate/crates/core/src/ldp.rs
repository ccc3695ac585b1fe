//! Local privacy primitives: binary randomized response, the debiased
//! frequency estimate used by the private search, and a Laplace sanitizer
//! for the naive baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Total privacy loss ε of one user's participation.
///
/// Finite budgets come from [`PrivacyBudget::new`]. [`PrivacyBudget::unbounded`]
/// is the ε = ∞ noise-free switch: randomized response always keeps the bit
/// and the Laplace scale is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon > 0.0 && epsilon.is_finite() {
            Ok(Self { epsilon })
        } else {
            Err(Error::InvalidBudget(epsilon))
        }
    }

    pub fn unbounded() -> Self {
        Self {
            epsilon: f64::INFINITY,
        }
    }

    /// Accepts `+inf` as the noise-free switch, otherwise as [`Self::new`].
    pub fn from_f64(epsilon: f64) -> Result<Self> {
        if epsilon == f64::INFINITY {
            Ok(Self::unbounded())
        } else {
            Self::new(epsilon)
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_unbounded(&self) -> bool {
        self.epsilon.is_infinite()
    }

    /// Even split over `depth` rounds.
    pub fn per_round(&self, depth: usize) -> RoundBudget {
        assert!(depth >= 1, "depth must be at least 1");
        RoundBudget::from_parts(self.epsilon / depth as f64)
    }
}

/// Privacy parameter of a single randomized-response invocation.
/// Serializes as the bare ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RoundBudget {
    epsilon_round: f64,
    /// Cached 1/(1 + e^{−ε}); randomized response is the hot loop.
    keep: f64,
}

impl RoundBudget {
    /// `epsilon_round` may be `+inf` (noise-free).
    pub fn new(epsilon_round: f64) -> Result<Self> {
        if epsilon_round > 0.0 && !epsilon_round.is_nan() {
            Ok(Self::from_parts(epsilon_round))
        } else {
            Err(Error::InvalidBudget(epsilon_round))
        }
    }

    fn from_parts(epsilon_round: f64) -> Self {
        Self {
            epsilon_round,
            keep: 1.0 / (1.0 + (-epsilon_round).exp()),
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon_round
    }

    /// Debiasing factor (e^ε + 1)/(e^ε − 1), written as coth(ε/2) so that it
    /// stays finite and tends to 1 as ε grows.
    pub fn correction_factor(&self) -> f64 {
        1.0 / (self.epsilon_round / 2.0).tanh()
    }

    /// Largest value the debiased estimate can take (every report +1).
    pub fn max_phi(&self) -> f64 {
        0.5 * self.correction_factor() + 0.5
    }
}

impl TryFrom<f64> for RoundBudget {
    type Error = Error;

    fn try_from(epsilon_round: f64) -> Result<Self> {
        Self::new(epsilon_round)
    }
}

impl From<RoundBudget> for f64 {
    fn from(b: RoundBudget) -> f64 {
        b.epsilon_round
    }
}

/// A ±1 response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bit {
    Minus,
    Plus,
}

impl Bit {
    /// sign(v) with sign(0) = +1.
    pub fn sign_of(v: f64) -> Self {
        if v >= 0.0 {
            Bit::Plus
        } else {
            Bit::Minus
        }
    }

    pub fn value(self) -> i64 {
        match self {
            Bit::Plus => 1,
            Bit::Minus => -1,
        }
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            1 => Some(Bit::Plus),
            -1 => Some(Bit::Minus),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Bit::Plus => Bit::Minus,
            Bit::Minus => Bit::Plus,
        }
    }
}

/// e^ε/(1+e^ε), evaluated as 1/(1+e^{−ε}) so ε = ∞ gives exactly 1.
pub fn rr_keep_probability(budget: RoundBudget) -> f64 {
    budget.keep
}

/// Probability that randomized response outputs `output` given `input`.
pub fn rr_output_probability(input: Bit, output: Bit, budget: RoundBudget) -> f64 {
    if input == output {
        rr_keep_probability(budget)
    } else {
        1.0 / (1.0 + budget.epsilon().exp())
    }
}

/// Randomized response. Draws exactly one uniform; keeps the bit iff the
/// uniform is below the keep probability.
pub fn randomized_response<R: RandomStream + ?Sized>(
    input: Bit,
    budget: RoundBudget,
    rng: &mut R,
) -> Bit {
    if rng.next_uniform() < rr_keep_probability(budget) {
        input
    } else {
        input.flipped()
    }
}

/// Debiased estimate of the fraction of +1 inputs from the sum of `n`
/// randomized-response reports. Not clamped to [0, 1].
pub fn unbiased_phi(sum_z: i64, n: usize, budget: RoundBudget) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let n_i = n as i64;
    if sum_z.abs() > n_i || (sum_z - n_i).rem_euclid(2) != 0 {
        return Err(Error::InvalidArgument(format!(
            "sum of {n} ±1 reports cannot be {sum_z}"
        )));
    }
    // (c·Σz + n)/(2n) == (1/2n)·c·Σz + 1/2, exact for c = 1.
    Ok((budget.correction_factor() * sum_z as f64 + n as f64) / (2.0 * n as f64))
}

/// Laplace scale 2/ε for inputs on [−1, 1].
pub fn laplace_scale(budget: PrivacyBudget) -> f64 {
    2.0 / budget.epsilon()
}

/// Inverse-CDF Laplace(0, scale) draw from a single uniform. u = 1/2 maps to 0.
pub fn laplace_noise<R: RandomStream + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let v = rng.next_uniform() - 0.5;
    if v == 0.0 || scale == 0.0 {
        return 0.0;
    }
    let tail = (1.0 - 2.0 * v.abs()).max(f64::MIN_POSITIVE);
    -scale * v.signum() * tail.ln()
}

/// x + Laplace(0, 2/ε). Draws exactly one uniform; output is not clamped.
pub fn laplace_sanitize<R: RandomStream + ?Sized>(
    x: f64,
    budget: PrivacyBudget,
    rng: &mut R,
) -> Result<f64> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::OutOfDomain {
            value: x,
            lo: -1.0,
            hi: 1.0,
        });
    }
    Ok(x + laplace_noise(laplace_scale(budget), rng))
}
