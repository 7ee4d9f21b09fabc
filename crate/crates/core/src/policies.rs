//! Arm-selection policies.
//!
//! Every policy reduces to an index rule `a* = argmax_k I_k`:
//!
//! * `UCB1` — `mean + sqrt(beta * ln t / (2 N))`.
//! * `MV-UCB1` — `rho * mean - (1 - rho) * sd + sqrt(beta * ln t / N)`.
//! * `CP-UCB` — conformal upper bound `U`.
//! * `CP-Bandit` — `(1 - lambda) * U - lambda * |L|`.
//! * `CP-ESI` — `U / |L|`, the exploratory skewness index.
//! * Regime-aware variants switch between optimistic and downside-protective
//!   indices on the inferred market regime.
//!
//! The deterministic argmax may then be randomised: with probability
//! `eps` the choice is replaced by a uniform draw over the other arms.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::ConformalInterval;
use crate::error::{Error, Result};

/// Guards the ESI division when the lower bound is (near) zero.
pub const ESI_FLOOR: f64 = 1e-12;

/// Market regime label produced by the regime detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Bull,
    Neutral,
    Bear,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Bull => write!(f, "bull"),
            Regime::Neutral => write!(f, "neutral"),
            Regime::Bear => write!(f, "bear"),
        }
    }
}

/// Policy family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Ucb1,
    MvUcb1,
    CpUcb,
    CpBandit,
    CpEsi,
    RegimeAwareCp,
    RegimeAwareMvUcb1,
}

impl PolicyKind {
    /// Conformal-interval policies need 2 observations per arm before the
    /// first interval; UCB-family policies need a single pull.
    pub fn is_conformal(self) -> bool {
        matches!(
            self,
            PolicyKind::CpUcb | PolicyKind::CpBandit | PolicyKind::CpEsi | PolicyKind::RegimeAwareCp
        )
    }

    pub fn is_regime_aware(self) -> bool {
        matches!(self, PolicyKind::RegimeAwareCp | PolicyKind::RegimeAwareMvUcb1)
    }
}

/// Exploration-probability schedule for the randomised selection step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonSchedule {
    /// No randomisation: always play the deterministic argmax.
    None,
    /// `eps_t = t^(-gamma) / (K - 1)`.
    Decay(f64),
    /// Fixed exploration threshold.
    Constant(f64),
}

impl EpsilonSchedule {
    /// Exploration probability at round `t` with `k` arms.
    pub fn at(&self, t: usize, k: usize) -> Result<f64> {
        debug_assert!(t >= 1);
        match *self {
            EpsilonSchedule::None => Ok(0.0),
            EpsilonSchedule::Decay(gamma) => {
                if k < 2 {
                    return Err(Error::Config(
                        "decaying epsilon schedule needs K >= 2 arms".into(),
                    ));
                }
                Ok((t as f64).powf(-gamma) / (k as f64 - 1.0))
            }
            EpsilonSchedule::Constant(eps) => Ok(eps),
        }
    }
}

/// How argmax ties are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Uniformly at random among the tied arms (from the seeded stream).
    Random,
    /// Lowest arm index wins.
    First,
}

/// Fully specified policy: family plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// UCB exploration constant beta > 0.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Mean-variance weight rho in [0, 1].
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// CP-Bandit blend weight lambda in [0, 1].
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: EpsilonSchedule,
}

fn default_beta() -> f64 {
    2.0
}

fn default_rho() -> f64 {
    0.5
}

fn default_epsilon() -> EpsilonSchedule {
    EpsilonSchedule::None
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            beta: default_beta(),
            rho: default_rho(),
            lambda: 0.0,
            epsilon: default_epsilon(),
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_epsilon(mut self, epsilon: EpsilonSchedule) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if let EpsilonSchedule::Constant(eps) = self.epsilon {
            if !(0.0..1.0).contains(&eps) {
                return Err(Error::Config(format!(
                    "constant epsilon must lie in [0, 1), got {eps}"
                )));
            }
        }
        if let EpsilonSchedule::Decay(gamma) = self.epsilon {
            if !(gamma > 0.0) {
                return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
            }
        }
        Ok(())
    }

    /// Warm-up length: 2K rounds for conformal policies, K for UCB-family.
    pub fn warmup_len(&self, k: usize) -> usize {
        if self.kind.is_conformal() {
            2 * k
        } else {
            k
        }
    }
}

impl std::fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            PolicyKind::Ucb1 => write!(f, "UCB1"),
            PolicyKind::MvUcb1 => write!(f, "MV-UCB1"),
            PolicyKind::CpUcb => write!(f, "CP-UCB"),
            PolicyKind::CpBandit => write!(f, "CP-Bandit (lambda={})", self.lambda),
            PolicyKind::CpEsi => write!(f, "CP-ESI"),
            PolicyKind::RegimeAwareCp => write!(f, "Regime-Aware CP"),
            PolicyKind::RegimeAwareMvUcb1 => write!(f, "Regime-Aware MV-UCB1"),
        }
    }
}

/// One resolved selection round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// Arm actually played.
    pub chosen_arm: usize,
    /// Pre-randomisation argmax of the indices.
    pub deterministic_arm: usize,
    /// Per-arm selection indices I_k.
    pub indices: Vec<f64>,
    /// Whether the exploration branch replaced the argmax.
    pub randomised: bool,
}

/// `mean + sqrt(beta * ln t / (2 N))`; `+inf` while the arm is unpulled.
pub fn ucb1_index(mean: f64, pulls: usize, t: usize, beta: f64) -> f64 {
    if pulls == 0 {
        return f64::INFINITY;
    }
    mean + (beta * (t as f64).ln() / (2.0 * pulls as f64)).sqrt()
}

/// `rho * mean - (1 - rho) * sd + sqrt(beta * ln t / N)`.
pub fn mv_ucb1_index(mean: f64, sd: f64, pulls: usize, t: usize, beta: f64, rho: f64) -> f64 {
    if pulls == 0 {
        return f64::INFINITY;
    }
    rho * mean - (1.0 - rho) * sd + (beta * (t as f64).ln() / pulls as f64).sqrt()
}

/// Conformal index for the interval-based policies.
pub fn cp_index(interval: &ConformalInterval, kind: PolicyKind, lambda: f64) -> f64 {
    let u = interval.upper;
    let l = interval.lower;
    match kind {
        PolicyKind::CpUcb => u,
        PolicyKind::CpBandit => (1.0 - lambda) * u - lambda * l.abs(),
        PolicyKind::CpEsi => u / l.abs().max(ESI_FLOOR),
        _ => unreachable!("cp_index only applies to conformal policies"),
    }
}

/// Regime-dependent conformal index: optimistic upper bound in calm regimes,
/// downside-protective `-|L|` in bear markets.
pub fn regime_cp_index(interval: &ConformalInterval, regime: Regime) -> f64 {
    match regime {
        Regime::Bull | Regime::Neutral => interval.upper,
        Regime::Bear => -interval.lower.abs(),
    }
}

/// Regime-dependent UCB index: plain mean optimism in calm regimes, the
/// volatility-penalised mean-variance score in bear markets.
pub fn regime_mv_index(
    mean: f64,
    sd: f64,
    pulls: usize,
    t: usize,
    beta: f64,
    rho: f64,
    regime: Regime,
) -> f64 {
    if pulls == 0 {
        return f64::INFINITY;
    }
    let bonus = (beta * (t as f64).ln() / pulls as f64).sqrt();
    match regime {
        Regime::Bull | Regime::Neutral => mean + bonus,
        Regime::Bear => rho * mean - (1.0 - rho) * sd + bonus,
    }
}

/// Argmax over the indices with the configured tie rule. NaN entries are
/// skipped; an all-NaN vector is an error.
pub fn select<R: Rng + ?Sized>(indices: &[f64], tie_rule: TieRule, rng: &mut R) -> Result<usize> {
    debug_assert!(indices.len() >= 2);
    let mut best = f64::NEG_INFINITY;
    let mut tied: Vec<usize> = Vec::new();
    for (k, &v) in indices.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if v > best {
            best = v;
            tied.clear();
            tied.push(k);
        } else if v == best {
            tied.push(k);
        }
    }
    match tied.len() {
        0 => Err(Error::InvalidIndex("all selection indices are NaN".into())),
        1 => Ok(tied[0]),
        _ => match tie_rule {
            TieRule::First => Ok(tied[0]),
            TieRule::Random => Ok(tied[rng.random_range(0..tied.len())]),
        },
    }
}

/// Selection law of the randomised policy: probability of playing each arm
/// given the deterministic argmax and the exploration factor.
pub fn selection_law(deterministic_arm: usize, eps: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|arm| {
            if arm == deterministic_arm {
                1.0 - eps
            } else {
                eps / (k as f64 - 1.0)
            }
        })
        .collect()
}

/// Keeps the argmax with probability `1 - eps`, otherwise plays a uniform
/// draw over the remaining arms. Returns the arm and whether the
/// exploration branch fired.
pub fn randomise<R: Rng + ?Sized>(
    deterministic_arm: usize,
    eps: f64,
    k: usize,
    rng: &mut R,
) -> (usize, bool) {
    debug_assert!((0.0..1.0).contains(&eps));
    debug_assert!(k >= 2);
    if eps == 0.0 {
        return (deterministic_arm, false);
    }
    if rng.random::<f64>() < 1.0 - eps {
        (deterministic_arm, false)
    } else {
        let mut other = rng.random_range(0..k - 1);
        if other >= deterministic_arm {
            other += 1;
        }
        (other, true)
    }
}

/// Runs select + randomise and assembles the [`Decision`].
pub fn decide<R: Rng + ?Sized>(
    indices: Vec<f64>,
    eps: f64,
    tie_rule: TieRule,
    rng: &mut R,
) -> Result<Decision> {
    let deterministic_arm = select(&indices, tie_rule, rng)?;
    let (chosen_arm, randomised) = randomise(deterministic_arm, eps, indices.len(), rng);
    Ok(Decision {
        chosen_arm,
        deterministic_arm,
        indices,
        randomised,
    })
}
