//! Scenario configuration: a documented TOML key-value format plus the
//! built-in named scenarios used by the simulation experiments.
//!
//! ```toml
//! name = "small_gap_gaussian"
//! family = "gaussian"            # gaussian | student_t | skew_t
//! means = [0.05, 0.0, 0.0]
//! scale = 0.1
//! # dof = 3.0                    # student_t / skew_t only
//! # skew_shapes = [0.3, -0.5, 0.6]
//! horizon = 2000
//! replicates = 1000
//! seed = 42
//! feedback = "partial"           # partial | full
//! alpha = 0.2
//! aci_step = 0.005
//! split_rule = "alternating"     # alternating | chronological
//! predictor = "constant_empirical"
//! tie_rule = "random"            # random | first
//!
//! [[policies]]
//! kind = "cp-bandit"
//! lambda = 0.5
//! epsilon = { decay = 1.0 }
//!
//! [[policies]]
//! kind = "ucb1"
//! beta = 2.0
//! ```

use serde::{Deserialize, Serialize};

use crate::conformal::{PredictorKind, SplitRule};
use crate::environments::{RewardFamily, RewardModel};
use crate::error::{Error, Result};
use crate::harness::Feedback;
use crate::policies::{EpsilonSchedule, PolicyKind, PolicySpec, TieRule};

/// A fully resolved simulation scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationScenario {
    pub name: String,
    pub model: RewardModel,
    pub horizon: usize,
    pub replicates: usize,
    pub seed: u64,
    pub feedback: Feedback,
    pub alpha: f64,
    pub aci_step: f64,
    pub split_rule: SplitRule,
    pub predictor: PredictorKind,
    pub tie_rule: TieRule,
    pub policies: Vec<PolicySpec>,
}

#[derive(Debug, Deserialize)]
struct RawScenario {
    name: String,
    family: RewardFamily,
    means: Vec<f64>,
    scale: f64,
    #[serde(default)]
    dof: Option<f64>,
    #[serde(default)]
    skew_shapes: Option<Vec<f64>>,
    horizon: usize,
    replicates: usize,
    seed: u64,
    #[serde(default = "default_feedback")]
    feedback: Feedback,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default = "default_aci_step")]
    aci_step: f64,
    #[serde(default = "default_split_rule")]
    split_rule: SplitRule,
    #[serde(default = "default_predictor")]
    predictor: PredictorKind,
    #[serde(default = "default_tie_rule")]
    tie_rule: TieRule,
    #[serde(default)]
    policies: Vec<PolicySpec>,
}

fn default_feedback() -> Feedback {
    Feedback::Partial
}

fn default_alpha() -> f64 {
    0.2
}

fn default_aci_step() -> f64 {
    0.005
}

fn default_split_rule() -> SplitRule {
    SplitRule::Alternating
}

fn default_predictor() -> PredictorKind {
    PredictorKind::ConstantEmpirical
}

fn default_tie_rule() -> TieRule {
    TieRule::Random
}

impl SimulationScenario {
    /// Parses a scenario from its TOML representation.
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawScenario =
            toml::from_str(text).map_err(|e| Error::Config(format!("scenario parse: {e}")))?;
        let model = RewardModel {
            kind: raw.family,
            means: raw.means,
            scale: raw.scale,
            dof: raw.dof,
            skew_shapes: raw.skew_shapes,
        };
        model.validate()?;
        let mut scenario = SimulationScenario {
            name: raw.name,
            model,
            horizon: raw.horizon,
            replicates: raw.replicates,
            seed: raw.seed,
            feedback: raw.feedback,
            alpha: raw.alpha,
            aci_step: raw.aci_step,
            split_rule: raw.split_rule,
            predictor: raw.predictor,
            tie_rule: raw.tie_rule,
            policies: raw.policies,
        };
        if scenario.policies.is_empty() {
            scenario.policies = default_policy_grid();
        }
        scenario.validate()?;
        Ok(scenario)
    }

    /// Canonical TOML echo of the resolved scenario.
    pub fn to_toml(&self) -> String {
        #[derive(Serialize)]
        struct Echo<'a> {
            name: &'a str,
            family: RewardFamily,
            means: &'a [f64],
            scale: f64,
            #[serde(skip_serializing_if = "Option::is_none")]
            dof: Option<f64>,
            #[serde(skip_serializing_if = "Option::is_none")]
            skew_shapes: Option<&'a Vec<f64>>,
            horizon: usize,
            replicates: usize,
            seed: u64,
            feedback: Feedback,
            alpha: f64,
            aci_step: f64,
            split_rule: SplitRule,
            predictor: PredictorKind,
            tie_rule: TieRule,
            policies: &'a [PolicySpec],
        }
        let echo = Echo {
            name: &self.name,
            family: self.model.kind,
            means: &self.model.means,
            scale: self.model.scale,
            dof: self.model.dof,
            skew_shapes: self.model.skew_shapes.as_ref(),
            horizon: self.horizon,
            replicates: self.replicates,
            seed: self.seed,
            feedback: self.feedback,
            alpha: self.alpha,
            aci_step: self.aci_step,
            split_rule: self.split_rule,
            predictor: self.predictor,
            tie_rule: self.tie_rule,
            policies: &self.policies,
        };
        toml::to_string(&echo).expect("scenario serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.aci_step > 0.0) {
            return Err(Error::Config(format!(
                "aci_step must be positive, got {}",
                self.aci_step
            )));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        for spec in &self.policies {
            spec.validate()?;
            if spec.kind.is_regime_aware() {
                return Err(Error::Config(format!(
                    "{spec} is regime-aware and only available in the backtester"
                )));
            }
        }
        Ok(())
    }
}

/// The six-policy grid evaluated in the simulation studies: four CP-Bandit
/// blends, CP-ESI, and the UCB1 benchmark. CP policies explore with the
/// decaying schedule `eps_t = t^-1 / (K - 1)`.
pub fn default_policy_grid() -> Vec<PolicySpec> {
    let eps = EpsilonSchedule::Decay(1.0);
    vec![
        PolicySpec::new(PolicyKind::CpBandit).with_lambda(0.0).with_epsilon(eps),
        PolicySpec::new(PolicyKind::CpBandit).with_lambda(0.5).with_epsilon(eps),
        PolicySpec::new(PolicyKind::CpBandit).with_lambda(0.7).with_epsilon(eps),
        PolicySpec::new(PolicyKind::CpBandit).with_lambda(1.0).with_epsilon(eps),
        PolicySpec::new(PolicyKind::CpEsi).with_epsilon(eps),
        PolicySpec::new(PolicyKind::Ucb1),
    ]
}

fn base_scenario(name: &str, model: RewardModel) -> SimulationScenario {
    SimulationScenario {
        name: name.to_string(),
        model,
        horizon: 2000,
        replicates: 1000,
        seed: 42,
        feedback: Feedback::Partial,
        alpha: 0.2,
        aci_step: 0.005,
        split_rule: SplitRule::Alternating,
        predictor: PredictorKind::ConstantEmpirical,
        tie_rule: TieRule::Random,
        policies: default_policy_grid(),
    }
}

/// Built-in named scenarios. Small-gap: gap 0.05, scale 0.1; big-gap: gap
/// 0.5, scale 1. Heavy-tail variants use 3 degrees of freedom; the skew-t
/// shapes are (0.3, -0.5, 0.6).
pub fn builtin_scenario(name: &str) -> Option<SimulationScenario> {
    let (means, scale) = match name {
        n if n.starts_with("small_gap") => (vec![0.05, 0.0, 0.0], 0.1),
        n if n.starts_with("big_gap") => (vec![0.5, 0.0, 0.0], 1.0),
        _ => return None,
    };
    let model = match name {
        "small_gap_gaussian" | "big_gap_gaussian" => RewardModel::gaussian(means, scale),
        "small_gap_student_t" | "big_gap_student_t" => RewardModel::student_t(means, scale, 3.0),
        "small_gap_skew_t" | "big_gap_skew_t" => {
            RewardModel::skew_t(means, scale, 3.0, vec![0.3, -0.5, 0.6])
        }
        _ => return None,
    }
    .expect("builtin scenario parameters are valid");
    Some(base_scenario(name, model))
}

/// Names accepted by [`builtin_scenario`].
pub const BUILTIN_SCENARIOS: [&str; 6] = [
    "small_gap_gaussian",
    "small_gap_student_t",
    "small_gap_skew_t",
    "big_gap_gaussian",
    "big_gap_student_t",
    "big_gap_skew_t",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_scenarios_resolve() {
        for name in BUILTIN_SCENARIOS {
            let scn = builtin_scenario(name).unwrap();
            assert_eq!(scn.name, name);
            assert_eq!(scn.policies.len(), 6);
            scn.validate().unwrap();
        }
        assert!(builtin_scenario("nope").is_none());
    }

    #[test]
    fn toml_round_trip() {
        let scn = builtin_scenario("small_gap_skew_t").unwrap();
        let text = scn.to_toml();
        let parsed = SimulationScenario::from_toml(&text).unwrap();
        assert_eq!(parsed, scn);
    }

    #[test]
    fn minimal_toml_applies_defaults() {
        let text = r#"
            name = "tiny"
            family = "gaussian"
            means = [0.1, 0.0]
            scale = 0.5
            horizon = 100
            replicates = 10
            seed = 7
        "#;
        let scn = SimulationScenario::from_toml(text).unwrap();
        assert_eq!(scn.alpha, 0.2);
        assert_eq!(scn.feedback, Feedback::Partial);
        assert_eq!(scn.policies.len(), 6);
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let text = r#"
            name = "bad"
            family = "student_t"
            means = [0.1, 0.0]
            scale = 0.5
            dof = 1.5
            horizon = 100
            replicates = 10
            seed = 7
        "#;
        assert!(SimulationScenario::from_toml(text).is_err());

        let mut scn = builtin_scenario("small_gap_gaussian").unwrap();
        scn.policies.push(PolicySpec::new(PolicyKind::RegimeAwareCp));
        assert!(scn.validate().is_err());
    }
}
