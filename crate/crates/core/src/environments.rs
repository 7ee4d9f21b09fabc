//! Stochastic K-armed reward generators.
//!
//! A [`RewardModel`] draws the full vector of potential rewards for every arm
//! each round, so counterfactual coverage of unpulled arms stays computable.
//! Three families are supported:
//!
//! * `Gaussian` — `Y_k = mu_k + sigma * Z`, `Z ~ N(0, 1)`.
//! * `StudentT` — `Y_k = mu_k + sigma * T`, `T ~ t_nu` (standard Student-t;
//!   note its variance is `nu / (nu - 2)`, not 1).
//! * `SkewT` — `Y_k = mu_k + sigma * Z_k` where `Z_k` is an Azzalini-type
//!   skew-t with shape `lambda_k`, affinely standardised to zero mean and
//!   unit variance via its closed-form first two moments.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Reward distribution family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardFamily {
    Gaussian,
    StudentT,
    SkewT,
}

/// Generator of the per-round vector of potential rewards.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardModel {
    pub kind: RewardFamily,
    /// Per-arm means; exactly one entry attains the maximum.
    pub means: Vec<f64>,
    /// Common scale sigma > 0.
    pub scale: f64,
    /// Degrees of freedom nu > 2 (StudentT / SkewT only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dof: Option<f64>,
    /// Per-arm skew shapes lambda_k (SkewT only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skew_shapes: Option<Vec<f64>>,
}

/// One round's potential rewards, one entry per arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardVector {
    pub values: Vec<f64>,
    pub round: usize,
}

impl RewardModel {
    pub fn gaussian(means: Vec<f64>, scale: f64) -> Result<Self> {
        let model = Self {
            kind: RewardFamily::Gaussian,
            means,
            scale,
            dof: None,
            skew_shapes: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn student_t(means: Vec<f64>, scale: f64, dof: f64) -> Result<Self> {
        let model = Self {
            kind: RewardFamily::StudentT,
            means,
            scale,
            dof: Some(dof),
            skew_shapes: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn skew_t(means: Vec<f64>, scale: f64, dof: f64, skew_shapes: Vec<f64>) -> Result<Self> {
        let model = Self {
            kind: RewardFamily::SkewT,
            means,
            scale,
            dof: Some(dof),
            skew_shapes: Some(skew_shapes),
        };
        model.validate()?;
        Ok(model)
    }

    /// Number of arms K.
    pub fn arms(&self) -> usize {
        self.means.len()
    }

    /// Zero-based index of the unique optimal arm.
    pub fn optimal_arm(&self) -> usize {
        let mut best = 0;
        for (k, &m) in self.means.iter().enumerate() {
            if m > self.means[best] {
                best = k;
            }
        }
        best
    }

    /// Highest mean reward mu*.
    pub fn optimal_mean(&self) -> f64 {
        self.means[self.optimal_arm()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.means.len() < 2 {
            return Err(Error::Config(format!(
                "reward model needs K >= 2 arms, got {}",
                self.means.len()
            )));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::Config(format!(
                "scale must be a positive finite real, got {}",
                self.scale
            )));
        }
        let max = self.means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Config("means must be finite".into()));
        }
        let n_max = self.means.iter().filter(|&&m| m == max).count();
        if n_max != 1 {
            return Err(Error::Config(format!(
                "means must have a unique optimal arm, {n_max} arms attain the maximum"
            )));
        }
        match self.kind {
            RewardFamily::Gaussian => {}
            RewardFamily::StudentT => {
                let nu = self
                    .dof
                    .ok_or_else(|| Error::Config("student_t family requires dof".into()))?;
                if !(nu > 2.0) {
                    return Err(Error::Config(format!(
                        "dof must exceed 2 for a finite variance, got {nu}"
                    )));
                }
            }
            RewardFamily::SkewT => {
                let nu = self
                    .dof
                    .ok_or_else(|| Error::Config("skew_t family requires dof".into()))?;
                if !(nu > 2.0) {
                    return Err(Error::Config(format!(
                        "dof must exceed 2 for a finite variance, got {nu}"
                    )));
                }
                let shapes = self
                    .skew_shapes
                    .as_ref()
                    .ok_or_else(|| Error::Config("skew_t family requires skew_shapes".into()))?;
                if shapes.len() != self.means.len() {
                    return Err(Error::Config(format!(
                        "skew_shapes has length {}, expected K = {}",
                        shapes.len(),
                        self.means.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Draws the full K-vector of potential rewards for round `round`.
    pub fn sample_round<R: Rng + ?Sized>(&self, round: usize, rng: &mut R) -> RewardVector {
        let values = match self.kind {
            RewardFamily::Gaussian => self
                .means
                .iter()
                .map(|&mu| {
                    let z: f64 = StandardNormal.sample(rng);
                    mu + self.scale * z
                })
                .collect(),
            RewardFamily::StudentT => {
                let t = StudentT::new(self.dof.expect("validated")).expect("validated dof");
                self.means
                    .iter()
                    .map(|&mu| mu + self.scale * t.sample(rng))
                    .collect()
            }
            RewardFamily::SkewT => {
                let nu = self.dof.expect("validated");
                let shapes = self.skew_shapes.as_ref().expect("validated");
                self.means
                    .iter()
                    .zip(shapes)
                    .map(|(&mu, &lambda)| mu + self.scale * standard_skew_t(nu, lambda, rng))
                    .collect()
            }
        };
        RewardVector { values, round }
    }
}

/// Closed-form moments of the Azzalini skew-t with shape `lambda` and `dof` nu.
///
/// With `delta = lambda / sqrt(1 + lambda^2)` and
/// `b_nu = sqrt(nu / pi) * Gamma((nu - 1) / 2) / Gamma(nu / 2)`, the raw draw
/// has mean `delta * b_nu` and variance `nu / (nu - 2) - (delta * b_nu)^2`.
pub fn skew_t_moments(dof: f64, shape: f64) -> (f64, f64) {
    let delta = shape / (1.0 + shape * shape).sqrt();
    let b = (dof / std::f64::consts::PI).sqrt()
        * (ln_gamma((dof - 1.0) / 2.0) - ln_gamma(dof / 2.0)).exp();
    let mean = delta * b;
    let var = dof / (dof - 2.0) - mean * mean;
    (mean, var.sqrt())
}

/// One draw from the Azzalini skew-t, standardised to zero mean and unit
/// variance. Requires `dof > 2`.
pub fn standard_skew_t<R: Rng + ?Sized>(dof: f64, shape: f64, rng: &mut R) -> f64 {
    debug_assert!(dof > 2.0, "variance undefined for dof <= 2");
    let delta = shape / (1.0 + shape * shape).sqrt();
    let u0: f64 = StandardNormal.sample(rng);
    let u1: f64 = StandardNormal.sample(rng);
    // Skew-normal draw, then divide by sqrt(chi^2_nu / nu).
    let w = delta * u0.abs() + (1.0 - delta * delta).sqrt() * u1;
    let v = ChiSquared::new(dof).expect("dof > 2").sample(rng);
    let t = w / (v / dof).sqrt();
    let (mean, sd) = skew_t_moments(dof, shape);
    (t - mean) / sd
}

/// Fallible wrapper around [`standard_skew_t`] for configuration-time checks.
pub fn try_standard_skew_t<R: Rng + ?Sized>(dof: f64, shape: f64, rng: &mut R) -> Result<f64> {
    if !(dof > 2.0) {
        return Err(Error::Config(format!(
            "dof must exceed 2 for a finite variance, got {dof}"
        )));
    }
    Ok(standard_skew_t(dof, shape, rng))
}
