//! Episode runner and Monte-Carlo evaluation harness.
//!
//! An episode starts with a pure-exploration warm-up (round-robin pulls:
//! 2K rounds for conformal policies, K for the UCB family), then per round
//! computes every arm's interval and selection index, takes the randomised
//! argmax, observes the chosen arm (partial information) or all arms (full
//! information), and updates the observed arms' histories and ACI state.
//!
//! Replicates draw from independent RNG streams derived from the master
//! seed by replicate index, so runs are order-independent: with the
//! `parallel` feature they fan out over rayon, and the sequential fallback
//! produces byte-identical summaries.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::SimulationScenario;
use crate::conformal::{ArmState, ConformalInterval};
use crate::error::{Error, Result};
use crate::policies::{self, Decision, PolicyKind, PolicySpec, Regime};

/// Feedback model: whether the agent sees only the chosen arm's reward or
/// the whole reward vector each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    Partial,
    Full,
}

/// Per-round record of everything the metrics need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round number.
    pub t: usize,
    pub chosen_arm: usize,
    pub deterministic_arm: usize,
    pub randomised: bool,
    /// Full potential-reward vector (all K arms).
    pub rewards: Vec<f64>,
    /// Arms whose rewards entered their histories this round.
    pub observed: Vec<usize>,
    /// One interval per arm; `None` during warm-up.
    pub intervals: Option<Vec<ConformalInterval>>,
    pub regime: Option<Regime>,
}

/// Episode metadata carried alongside the per-round records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub scenario: String,
    pub policy: PolicySpec,
    /// Ground-truth arm means, for regret.
    pub means: Vec<f64>,
    pub horizon: usize,
    pub warmup: usize,
    pub feedback: Feedback,
    pub alpha: f64,
    pub master_seed: u64,
    pub replicate: u64,
}

/// Full per-round history of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub meta: TraceMeta,
    pub rounds: Vec<RoundRecord>,
}

/// Mean curve with empirical 2.5% / 97.5% Monte-Carlo bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Mean and standard deviation across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmStat {
    pub mean: f64,
    pub sd: f64,
}

/// Aggregated metrics for one (scenario, policy) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub scenario: String,
    pub policy: String,
    pub replicates: usize,
    pub horizon: usize,
    pub arms: usize,
    /// Time-averaged pseudo-regret curve.
    pub regret_avg: CurveSummary,
    /// Raw cumulative pseudo-regret curve.
    pub regret_cum: CurveSummary,
    /// Cumulative best-arm selection share.
    pub best_arm: CurveSummary,
    /// Per-arm counterfactual coverage (fractions in [0, 1]).
    pub coverage: Vec<ArmStat>,
    /// Per-arm mean interval width.
    pub width: Vec<ArmStat>,
}

/// Per-replicate reduction of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub regret_avg: Vec<f64>,
    pub regret_cum: Vec<f64>,
    pub best_arm: Vec<f64>,
    pub coverage: Vec<f64>,
    pub width: Vec<f64>,
}

/// Selection indices for all arms at round `t`.
///
/// Conformal kinds read the intervals; UCB kinds read the running
/// statistics; regime-aware kinds additionally require the current regime.
pub fn compute_indices(
    states: &[ArmState],
    intervals: &[ConformalInterval],
    spec: &PolicySpec,
    t: usize,
    regime: Option<Regime>,
) -> Result<Vec<f64>> {
    let need_regime = spec.kind.is_regime_aware();
    let regime = match (need_regime, regime) {
        (true, Some(r)) => Some(r),
        (true, None) => {
            return Err(Error::Config(format!(
                "{} requires a regime source; synthetic scenarios have none",
                spec
            )))
        }
        (false, _) => None,
    };
    Ok(states
        .iter()
        .enumerate()
        .map(|(k, state)| match spec.kind {
            PolicyKind::Ucb1 => policies::ucb1_index(state.mean(), state.pull_count(), t, spec.beta),
            PolicyKind::MvUcb1 => policies::mv_ucb1_index(
                state.mean(),
                state.sd(),
                state.pull_count(),
                t,
                spec.beta,
                spec.rho,
            ),
            PolicyKind::CpUcb | PolicyKind::CpBandit | PolicyKind::CpEsi => {
                policies::cp_index(&intervals[k], spec.kind, spec.lambda)
            }
            PolicyKind::RegimeAwareCp => {
                policies::regime_cp_index(&intervals[k], regime.expect("checked"))
            }
            PolicyKind::RegimeAwareMvUcb1 => policies::regime_mv_index(
                state.mean(),
                state.sd(),
                state.pull_count(),
                t,
                spec.beta,
                spec.rho,
                regime.expect("checked"),
            ),
        })
        .collect())
}

/// Per-arm intervals at round `t`: CQR intervals for conformal policies, the
/// symmetric Hoeffding band `mean ± sqrt(beta ln t / (2N))` for UCB1 and
/// `mean ± sqrt(beta ln t / N)` for the mean-variance family (matching each
/// policy's exploration radius). The recorded level is the scenario's
/// nominal `1 - alpha` the bands are scored against.
pub fn compute_intervals(
    states: &[ArmState],
    spec: &PolicySpec,
    t: usize,
    alpha: f64,
    split_rule: crate::conformal::SplitRule,
    predictor: crate::conformal::PredictorKind,
    context: &[f64],
) -> Result<Vec<ConformalInterval>> {
    states
        .iter()
        .map(|state| {
            if spec.kind.is_conformal() {
                state.predict_interval(context, split_rule, predictor)
            } else {
                if state.pull_count() == 0 {
                    return Err(Error::InsufficientData(format!(
                        "arm {} has no pulls; UCB band undefined",
                        state.arm_id
                    )));
                }
                let denom = match spec.kind {
                    PolicyKind::Ucb1 => 2.0 * state.pull_count() as f64,
                    _ => state.pull_count() as f64,
                };
                let radius = (spec.beta * (t as f64).ln() / denom).sqrt();
                Ok(ConformalInterval {
                    lower: state.mean() - radius,
                    upper: state.mean() + radius,
                    level: 1.0 - alpha,
                    score_quantile: radius,
                })
            }
        })
        .collect()
}

/// Runs one episode of Algorithm 1 (or its UCB analogue) and returns the
/// full trace. `regimes`, when supplied, must hold one label per round.
pub fn run_episode_with_regimes(
    scenario: &SimulationScenario,
    spec: &PolicySpec,
    regimes: Option<&[Regime]>,
    master_seed: u64,
    replicate: u64,
) -> Result<EpisodeTrace> {
    spec.validate()?;
    scenario.model.validate()?;
    let k = scenario.model.arms();
    let t_max = scenario.horizon;
    let warmup = spec.warmup_len(k);
    if t_max <= warmup {
        return Err(Error::Config(format!(
            "horizon {t_max} must exceed the warm-up length {warmup}"
        )));
    }
    if let Some(r) = regimes {
        if r.len() < t_max {
            return Err(Error::Config(format!(
                "regime sequence has {} labels for horizon {t_max}",
                r.len()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate);

    let mut states: Vec<ArmState> = (0..k).map(|a| ArmState::new(a, scenario.alpha)).collect();
    let mut rounds = Vec::with_capacity(t_max);
    let context: &[f64] = &[];

    for t in 1..=t_max {
        let rewards = scenario.model.sample_round(t, &mut rng).values;
        let regime = regimes.map(|r| r[t - 1]);

        let (decision, intervals) = if t <= warmup {
            let arm = (t - 1) % k;
            (
                Decision {
                    chosen_arm: arm,
                    deterministic_arm: arm,
                    indices: Vec::new(),
                    randomised: false,
                },
                None,
            )
        } else {
            let intervals = compute_intervals(
                &states,
                spec,
                t,
                scenario.alpha,
                scenario.split_rule,
                scenario.predictor,
                context,
            )?;
            let indices = compute_indices(&states, &intervals, spec, t, regime)?;
            let eps = spec.epsilon.at(t, k)?;
            let decision = policies::decide(indices, eps, scenario.tie_rule, &mut rng)?;
            (decision, Some(intervals))
        };

        let observed: Vec<usize> = match scenario.feedback {
            Feedback::Partial => vec![decision.chosen_arm],
            Feedback::Full => (0..k).collect(),
        };
        for &arm in &observed {
            if let Some(ivs) = &intervals {
                if spec.kind.is_conformal() {
                    let covered = ivs[arm].contains(rewards[arm]);
                    states[arm].aci_update(covered, scenario.aci_step, scenario.alpha);
                }
            }
            states[arm].observe(rewards[arm], context);
        }

        rounds.push(RoundRecord {
            t,
            chosen_arm: decision.chosen_arm,
            deterministic_arm: decision.deterministic_arm,
            randomised: decision.randomised,
            rewards,
            observed,
            intervals,
            regime,
        });
    }

    Ok(EpisodeTrace {
        meta: TraceMeta {
            scenario: scenario.name.clone(),
            policy: spec.clone(),
            means: scenario.model.means.clone(),
            horizon: t_max,
            warmup,
            feedback: scenario.feedback,
            alpha: scenario.alpha,
            master_seed,
            replicate,
        },
        rounds,
    })
}

/// Convenience wrapper for synthetic scenarios (no regime source).
pub fn run_episode(
    scenario: &SimulationScenario,
    spec: &PolicySpec,
    replicate: u64,
) -> Result<EpisodeTrace> {
    run_episode_with_regimes(scenario, spec, None, scenario.seed, replicate)
}

/// Reduces a trace to its per-replicate metric curves. Everything is
/// recomputable from the serialised trace alone.
pub fn replicate_metrics(trace: &EpisodeTrace) -> ReplicateMetrics {
    let means = &trace.meta.means;
    let k = means.len();
    let best = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let optimal = means.iter().position(|&m| m == best).expect("non-empty means");

    let t_max = trace.rounds.len();
    let mut regret_cum = Vec::with_capacity(t_max);
    let mut regret_avg = Vec::with_capacity(t_max);
    let mut best_arm = Vec::with_capacity(t_max);
    let mut cum = 0.0f64;
    let mut hits = 0usize;
    let mut covered = vec![0usize; k];
    let mut width_sum = vec![0.0f64; k];
    let mut interval_rounds = vec![0usize; k];

    for (i, round) in trace.rounds.iter().enumerate() {
        cum += best - means[round.chosen_arm];
        if round.chosen_arm == optimal {
            hits += 1;
        }
        regret_cum.push(cum);
        regret_avg.push(cum / (i + 1) as f64);
        best_arm.push(hits as f64 / (i + 1) as f64);
        if let Some(ivs) = &round.intervals {
            for (arm, iv) in ivs.iter().enumerate() {
                interval_rounds[arm] += 1;
                if iv.contains(round.rewards[arm]) {
                    covered[arm] += 1;
                }
                width_sum[arm] += iv.width();
            }
        }
    }

    let coverage: Vec<f64> = (0..k)
        .map(|arm| {
            if interval_rounds[arm] > 0 {
                covered[arm] as f64 / interval_rounds[arm] as f64
            } else {
                0.0
            }
        })
        .collect();
    let width: Vec<f64> = (0..k)
        .map(|arm| {
            if interval_rounds[arm] > 0 {
                width_sum[arm] / interval_rounds[arm] as f64
            } else {
                0.0
            }
        })
        .collect();

    ReplicateMetrics {
        regret_avg,
        regret_cum,
        best_arm,
        coverage,
        width,
    }
}

fn band_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[idx - 1]
}

fn summarise_curves(curves: Vec<&[f64]>) -> CurveSummary {
    let m = curves.len();
    let t_max = curves[0].len();
    let mut mean = Vec::with_capacity(t_max);
    let mut lo = Vec::with_capacity(t_max);
    let mut hi = Vec::with_capacity(t_max);
    let mut column = vec![0.0f64; m];
    for t in 0..t_max {
        for (i, c) in curves.iter().enumerate() {
            column[i] = c[t];
        }
        mean.push(column.iter().sum::<f64>() / m as f64);
        column.sort_unstable_by(f64::total_cmp);
        lo.push(band_quantile(&column, 0.025));
        hi.push(band_quantile(&column, 0.975));
    }
    CurveSummary { mean, lo, hi }
}

fn mean_sd(values: &[f64]) -> ArmStat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    ArmStat { mean, sd }
}

/// Aggregates per-replicate metrics into the summary reported in tables.
pub fn summarise(
    scenario: &str,
    policy: &PolicySpec,
    horizon: usize,
    arms: usize,
    replicates: &[ReplicateMetrics],
) -> MetricsSummary {
    let coverage = (0..arms)
        .map(|arm| mean_sd(&replicates.iter().map(|r| r.coverage[arm]).collect::<Vec<_>>()))
        .collect();
    let width = (0..arms)
        .map(|arm| mean_sd(&replicates.iter().map(|r| r.width[arm]).collect::<Vec<_>>()))
        .collect();
    MetricsSummary {
        scenario: scenario.to_string(),
        policy: policy.to_string(),
        replicates: replicates.len(),
        horizon,
        arms,
        regret_avg: summarise_curves(replicates.iter().map(|r| r.regret_avg.as_slice()).collect()),
        regret_cum: summarise_curves(replicates.iter().map(|r| r.regret_cum.as_slice()).collect()),
        best_arm: summarise_curves(replicates.iter().map(|r| r.best_arm.as_slice()).collect()),
        coverage,
        width,
    }
}

/// Output of a Monte-Carlo run: the aggregate summary plus the first
/// `keep_traces` replicate traces for export.
#[derive(Debug, Clone)]
pub struct MonteCarloOutput {
    pub summary: MetricsSummary,
    pub traces: Vec<EpisodeTrace>,
}

fn replicate_job(
    scenario: &SimulationScenario,
    spec: &PolicySpec,
    replicate: u64,
    keep_trace: bool,
) -> Result<(ReplicateMetrics, Option<EpisodeTrace>)> {
    let trace = run_episode(scenario, spec, replicate)?;
    let metrics = replicate_metrics(&trace);
    Ok((metrics, keep_trace.then_some(trace)))
}

fn assemble(
    scenario: &SimulationScenario,
    spec: &PolicySpec,
    results: Vec<(ReplicateMetrics, Option<EpisodeTrace>)>,
) -> MonteCarloOutput {
    let mut metrics = Vec::with_capacity(results.len());
    let mut traces = Vec::new();
    for (m, t) in results {
        metrics.push(m);
        if let Some(t) = t {
            traces.push(t);
        }
    }
    let summary = summarise(
        &scenario.name,
        spec,
        scenario.horizon,
        scenario.model.arms(),
        &metrics,
    );
    MonteCarloOutput { summary, traces }
}

/// Sequential Monte-Carlo run over `scenario.replicates` episodes.
pub fn run_monte_carlo_seq(
    scenario: &SimulationScenario,
    spec: &PolicySpec,
    keep_traces: usize,
) -> Result<MonteCarloOutput> {
    if scenario.replicates == 0 {
        return Err(Error::Config("replicate count must be at least 1".into()));
    }
    let results = (0..scenario.replicates as u64)
        .map(|m| replicate_job(scenario, spec, m, (m as usize) < keep_traces))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(scenario, spec, results))
}

/// Monte-Carlo run over independent replicate streams. With the `parallel`
/// feature the replicates fan out over rayon; aggregation is an
/// order-preserving reduction, so both paths produce identical summaries.
#[cfg(feature = "parallel")]
pub fn run_monte_carlo(
    scenario: &SimulationScenario,
    spec: &PolicySpec,
    keep_traces: usize,
) -> Result<MonteCarloOutput> {
    use rayon::prelude::*;
    if scenario.replicates == 0 {
        return Err(Error::Config("replicate count must be at least 1".into()));
    }
    let results = (0..scenario.replicates as u64)
        .into_par_iter()
        .map(|m| replicate_job(scenario, spec, m, (m as usize) < keep_traces))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(scenario, spec, results))
}

/// Monte-Carlo run; sequential fallback (the `parallel` feature is off).
#[cfg(not(feature = "parallel"))]
pub fn run_monte_carlo(
    scenario: &SimulationScenario,
    spec: &PolicySpec,
    keep_traces: usize,
) -> Result<MonteCarloOutput> {
    run_monte_carlo_seq(scenario, spec, keep_traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimulationScenario;
    use crate::conformal::{PredictorKind, SplitRule};
    use crate::environments::RewardModel;
    use crate::policies::{EpsilonSchedule, TieRule};
    use approx::assert_abs_diff_eq;

    fn scenario(model: RewardModel, horizon: usize, feedback: Feedback) -> SimulationScenario {
        SimulationScenario {
            name: "test".into(),
            model,
            horizon,
            replicates: 4,
            seed: 42,
            feedback,
            alpha: 0.2,
            aci_step: 0.005,
            split_rule: SplitRule::Alternating,
            predictor: PredictorKind::ConstantEmpirical,
            tie_rule: TieRule::Random,
            policies: Vec::new(),
        }
    }

    fn small_gap() -> RewardModel {
        RewardModel::gaussian(vec![0.05, 0.0, 0.0], 0.1).unwrap()
    }

    #[test]
    fn cp_warmup_is_round_robin_over_two_cycles() {
        let scn = scenario(small_gap(), 30, Feedback::Partial);
        let spec = PolicySpec::new(PolicyKind::CpBandit);
        let trace = run_episode(&scn, &spec, 0).unwrap();
        let arms: Vec<usize> = trace.rounds[..6].iter().map(|r| r.chosen_arm).collect();
        assert_eq!(arms, vec![0, 1, 2, 0, 1, 2]);
        assert!(trace.rounds[..6].iter().all(|r| r.intervals.is_none()));
        assert!(trace.rounds[6..].iter().all(|r| r.intervals.is_some()));
    }

    #[test]
    fn ucb_warmup_is_one_pull_each() {
        let scn = scenario(small_gap(), 30, Feedback::Partial);
        let spec = PolicySpec::new(PolicyKind::Ucb1);
        let trace = run_episode(&scn, &spec, 0).unwrap();
        let arms: Vec<usize> = trace.rounds[..3].iter().map(|r| r.chosen_arm).collect();
        assert_eq!(arms, vec![0, 1, 2]);
        assert!(trace.rounds[3].intervals.is_some());
    }

    #[test]
    fn no_randomisation_without_schedule() {
        let scn = scenario(small_gap(), 50, Feedback::Partial);
        let spec = PolicySpec::new(PolicyKind::CpBandit).with_epsilon(EpsilonSchedule::None);
        let trace = run_episode(&scn, &spec, 0).unwrap();
        assert!(trace.rounds.iter().all(|r| !r.randomised));
    }

    #[test]
    fn full_feedback_updates_every_arm_each_round() {
        let model = RewardModel::gaussian(vec![0.05, 0.0], 0.1).unwrap();
        let scn = scenario(model, 10, Feedback::Full);
        let spec = PolicySpec::new(PolicyKind::CpBandit);
        let trace = run_episode(&scn, &spec, 0).unwrap();
        for round in &trace.rounds {
            assert_eq!(round.observed, vec![0, 1]);
        }
        // Each arm accumulates one observation per round.
        assert_eq!(trace.rounds.len(), 10);
    }

    #[test]
    fn partial_feedback_conserves_pulls() {
        let scn = scenario(small_gap(), 100, Feedback::Partial);
        let spec = PolicySpec::new(PolicyKind::CpBandit);
        let trace = run_episode(&scn, &spec, 1).unwrap();
        let mut pulls = vec![0usize; 3];
        for r in &trace.rounds {
            assert_eq!(r.observed.len(), 1);
            pulls[r.chosen_arm] += 1;
        }
        assert_eq!(pulls.iter().sum::<usize>(), 100);
    }

    #[test]
    fn horizon_not_exceeding_warmup_is_rejected() {
        let scn = scenario(small_gap(), 6, Feedback::Partial);
        let spec = PolicySpec::new(PolicyKind::CpBandit);
        assert!(matches!(run_episode(&scn, &spec, 0), Err(Error::Config(_))));
    }

    #[test]
    fn regime_aware_policy_needs_a_regime_source() {
        let scn = scenario(small_gap(), 50, Feedback::Partial);
        let spec = PolicySpec::new(PolicyKind::RegimeAwareCp);
        assert!(matches!(run_episode(&scn, &spec, 0), Err(Error::Config(_))));
    }

    #[test]
    fn regret_curve_examples() {
        let scn = scenario(small_gap(), 20, Feedback::Partial);
        let spec = PolicySpec::new(PolicyKind::CpBandit);
        let mut trace = run_episode(&scn, &spec, 0).unwrap();

        // Always-optimal trace: zero regret everywhere.
        for r in trace.rounds.iter_mut() {
            r.chosen_arm = 0;
        }
        let m = replicate_metrics(&trace);
        assert!(m.regret_avg.iter().all(|&x| x == 0.0));
        assert!(m.best_arm.iter().all(|&x| x == 1.0));

        // Always-worst: time-averaged regret pinned at the gap.
        for r in trace.rounds.iter_mut() {
            r.chosen_arm = 1;
        }
        let m = replicate_metrics(&trace);
        for &x in &m.regret_avg {
            assert_abs_diff_eq!(x, 0.05, epsilon = 1e-12);
        }

        // Alternating optimal/suboptimal: 0.025 at t = 2.
        for (i, r) in trace.rounds.iter_mut().enumerate() {
            r.chosen_arm = i % 2;
        }
        let m = replicate_metrics(&trace);
        assert_abs_diff_eq!(m.regret_avg[1], 0.025, epsilon = 1e-12);
        assert_abs_diff_eq!(m.regret_cum[1], 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(m.best_arm[3], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn best_arm_share_after_round_robin_warmup() {
        let scn = scenario(small_gap(), 20, Feedback::Partial);
        let spec = PolicySpec::new(PolicyKind::CpBandit);
        let trace = run_episode(&scn, &spec, 0).unwrap();
        let m = replicate_metrics(&trace);
        assert_abs_diff_eq!(m.best_arm[5], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn coverage_of_degenerate_intervals() {
        let scn = scenario(small_gap(), 30, Feedback::Partial);
        let spec = PolicySpec::new(PolicyKind::CpBandit);
        let mut trace = run_episode(&scn, &spec, 0).unwrap();
        // Force intervals that always cover.
        for r in trace.rounds.iter_mut() {
            if let Some(ivs) = r.intervals.as_mut() {
                for iv in ivs.iter_mut() {
                    iv.lower = -1e9;
                    iv.upper = 1e9;
                }
            }
        }
        let m = replicate_metrics(&trace);
        assert!(m.coverage.iter().all(|&c| c == 1.0));

        // Zero-width intervals at an unattainable point: zero coverage.
        for r in trace.rounds.iter_mut() {
            if let Some(ivs) = r.intervals.as_mut() {
                for iv in ivs.iter_mut() {
                    iv.lower = 1e9;
                    iv.upper = 1e9;
                }
            }
        }
        let m = replicate_metrics(&trace);
        assert!(m.coverage.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn single_replicate_summary_has_zero_width_bounds() {
        let mut scn = scenario(small_gap(), 30, Feedback::Partial);
        scn.replicates = 1;
        let spec = PolicySpec::new(PolicyKind::CpBandit);
        let out = run_monte_carlo_seq(&scn, &spec, 0).unwrap();
        assert_eq!(out.summary.replicates, 1);
        assert_eq!(out.summary.regret_avg.lo, out.summary.regret_avg.mean);
        assert_eq!(out.summary.regret_avg.hi, out.summary.regret_avg.mean);
        assert!(out.summary.coverage.iter().all(|s| s.sd == 0.0));
    }

    #[test]
    fn doubling_replicates_preserves_seed_prefix() {
        let mut scn = scenario(small_gap(), 25, Feedback::Partial);
        let spec = PolicySpec::new(PolicyKind::CpBandit);
        scn.replicates = 3;
        let a = run_monte_carlo_seq(&scn, &spec, 3).unwrap();
        scn.replicates = 6;
        let b = run_monte_carlo_seq(&scn, &spec, 6).unwrap();
        for (ta, tb) in a.traces.iter().zip(&b.traces) {
            assert_eq!(ta.rounds, tb.rounds);
        }
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let mut scn = scenario(small_gap(), 40, Feedback::Partial);
        scn.replicates = 5;
        let spec = PolicySpec::new(PolicyKind::CpBandit).with_epsilon(EpsilonSchedule::Decay(1.0));
        let a = run_monte_carlo_seq(&scn, &spec, 0).unwrap();
        let b = run_monte_carlo_seq(&scn, &spec, 0).unwrap();
        assert_eq!(a.summary, b.summary);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_matches_sequential_exactly() {
        let mut scn = scenario(small_gap(), 60, Feedback::Partial);
        scn.replicates = 8;
        let spec = PolicySpec::new(PolicyKind::CpEsi).with_epsilon(EpsilonSchedule::Decay(1.0));
        let par = run_monte_carlo(&scn, &spec, 0).unwrap();
        let seq = run_monte_carlo_seq(&scn, &spec, 0).unwrap();
        assert_eq!(par.summary, seq.summary);
    }

    #[test]
    fn warmup_rounds_identical_across_policies() {
        let scn = scenario(small_gap(), 30, Feedback::Partial);
        let cp_specs = [
            PolicySpec::new(PolicyKind::CpBandit).with_lambda(0.5),
            PolicySpec::new(PolicyKind::CpUcb),
            PolicySpec::new(PolicyKind::CpEsi),
        ];
        let traces: Vec<EpisodeTrace> = cp_specs
            .iter()
            .map(|s| run_episode(&scn, s, 2).unwrap())
            .collect();
        for tr in &traces[1..] {
            for (a, b) in tr.rounds[..6].iter().zip(&traces[0].rounds[..6]) {
                assert_eq!(a.chosen_arm, b.chosen_arm);
                assert_eq!(a.rewards, b.rewards);
            }
        }
        // UCB-family warm-up (first K rounds) coincides too.
        let ucb = run_episode(&scn, &PolicySpec::new(PolicyKind::Ucb1), 2).unwrap();
        for (a, b) in ucb.rounds[..3].iter().zip(&traces[0].rounds[..3]) {
            assert_eq!(a.chosen_arm, b.chosen_arm);
            assert_eq!(a.rewards, b.rewards);
        }
    }
}
