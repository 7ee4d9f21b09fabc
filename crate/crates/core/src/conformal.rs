//! Split conformal prediction and conformalised quantile regression.
//!
//! Per-arm histories are split into disjoint training and calibration sets.
//! Lower and upper quantile predictors are fitted on the training set, the
//! calibration set yields conformity scores
//!
//! ```text
//! S_i = max(q_lo(X_i) - Y_i, Y_i - q_hi(X_i)),
//! ```
//!
//! and the interval for a new point is
//!
//! ```text
//! [q_lo(x) - Q, q_hi(x) + Q],   Q = (1 - alpha)(1 + 1/n)-quantile of the S_i.
//! ```
//!
//! When the adjusted level reaches 1 the quantile falls back to `max(S_i)`,
//! keeping bounds finite. An adaptive-conformal-inference update nudges the
//! per-arm effective miscoverage level after every observed reward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp for the ACI effective miscoverage level.
pub const ALPHA_FLOOR: f64 = 0.01;
/// Upper clamp for the ACI effective miscoverage level.
pub const ALPHA_CEILING: f64 = 0.99;

/// Deterministic rule assigning observations to train / calibration sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Odd-numbered observations (1st, 3rd, ...) train, even-numbered calibrate.
    Alternating,
    /// First half trains, second half calibrates (later half rounded up).
    Chronological,
}

/// Quantile model family fitted on the training split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    /// Context-free empirical quantiles of the training rewards.
    ConstantEmpirical,
    /// Linear-in-context quantile regression fitted by subgradient descent
    /// on the pinball loss with an optional ridge penalty.
    LinearPinball,
}

/// Per-arm observation history and adaptive miscoverage state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmState {
    /// Zero-based arm index.
    pub arm_id: usize,
    rewards: Vec<f64>,
    contexts: Vec<Vec<f64>>,
    mean: f64,
    m2: f64,
    aci_alpha: f64,
}

impl ArmState {
    pub fn new(arm_id: usize, target_alpha: f64) -> Self {
        Self {
            arm_id,
            rewards: Vec::new(),
            contexts: Vec::new(),
            mean: 0.0,
            m2: 0.0,
            aci_alpha: target_alpha.clamp(ALPHA_FLOOR, ALPHA_CEILING),
        }
    }

    /// Appends one observed reward with its context (empty slice when
    /// the environment is non-contextual).
    pub fn observe(&mut self, reward: f64, context: &[f64]) {
        self.rewards.push(reward);
        self.contexts.push(context.to_vec());
        // Welford running statistics.
        let n = self.rewards.len() as f64;
        let delta = reward - self.mean;
        self.mean += delta / n;
        self.m2 += delta * (reward - self.mean);
    }

    pub fn pull_count(&self) -> usize {
        self.rewards.len()
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn contexts(&self) -> &[Vec<f64>] {
        &self.contexts
    }

    /// Empirical mean of the observed rewards (0 before the first pull).
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample standard deviation of the observed rewards (0 below 2 pulls).
    pub fn sd(&self) -> f64 {
        let n = self.rewards.len();
        if n < 2 {
            0.0
        } else {
            (self.m2 / (n as f64 - 1.0)).sqrt()
        }
    }

    /// Current effective miscoverage level alpha_t for this arm.
    pub fn aci_alpha(&self) -> f64 {
        self.aci_alpha
    }

    /// ACI step: `alpha <- clamp(alpha + step * (target - miss))` where
    /// `miss` is 1 when the observed reward fell outside its interval.
    pub fn aci_update(&mut self, covered: bool, step: f64, target_alpha: f64) {
        debug_assert!(step > 0.0);
        let miss = if covered { 0.0 } else { 1.0 };
        self.aci_alpha =
            (self.aci_alpha + step * (target_alpha - miss)).clamp(ALPHA_FLOOR, ALPHA_CEILING);
    }

    /// Splits the history into disjoint, exhaustive, non-empty train and
    /// calibration sets of (context, reward) pairs.
    pub fn split_history(&self, rule: SplitRule) -> Result<(Vec<(&[f64], f64)>, Vec<(&[f64], f64)>)> {
        let n = self.rewards.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "arm {} has {} observation(s); splitting needs at least 2",
                self.arm_id, n
            )));
        }
        let pair = |i: usize| (self.contexts[i].as_slice(), self.rewards[i]);
        let (train, calib) = match rule {
            SplitRule::Alternating => {
                let train = (0..n).step_by(2).map(pair).collect();
                let calib = (1..n).step_by(2).map(pair).collect();
                (train, calib)
            }
            SplitRule::Chronological => {
                let cut = n / 2;
                let train = (0..cut).map(pair).collect();
                let calib = (cut..n).map(pair).collect();
                (train, calib)
            }
        };
        Ok((train, calib))
    }

    /// Full CQR pipeline for this arm at its current ACI level: split, fit
    /// lower/upper quantile predictors, conformalise on the calibration set.
    pub fn predict_interval(
        &self,
        context: &[f64],
        rule: SplitRule,
        kind: PredictorKind,
    ) -> Result<ConformalInterval> {
        let alpha = self.aci_alpha;
        let (train, calib) = self.split_history(rule)?;
        let predictor = fit_quantiles(&train, alpha / 2.0, 1.0 - alpha / 2.0, kind)?;
        let scores = cqr_scores(&calib, &predictor);
        let q = conformal_quantile(&scores, alpha)?;
        let (lo, hi) = predictor.predict(context);
        let mut lower = lo - q;
        let mut upper = hi + q;
        if lower > upper {
            std::mem::swap(&mut lower, &mut upper);
        }
        Ok(ConformalInterval {
            lower,
            upper,
            level: 1.0 - alpha,
            score_quantile: q,
        })
    }
}

/// Fitted lower/upper quantile model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantilePredictor {
    pub kind: PredictorKind,
    pub lo_level: f64,
    pub hi_level: f64,
    /// `ConstantEmpirical`: the two fitted quantiles.
    /// `LinearPinball`: intercept followed by slopes, for each level.
    pub lo_params: Vec<f64>,
    pub hi_params: Vec<f64>,
}

impl QuantilePredictor {
    /// Evaluates both quantiles at `context`, swapping them if they cross.
    pub fn predict(&self, context: &[f64]) -> (f64, f64) {
        let eval = |params: &[f64]| match self.kind {
            PredictorKind::ConstantEmpirical => params[0],
            PredictorKind::LinearPinball => {
                params[0]
                    + params[1..]
                        .iter()
                        .zip(context)
                        .map(|(p, x)| p * x)
                        .sum::<f64>()
            }
        };
        let lo = eval(&self.lo_params);
        let hi = eval(&self.hi_params);
        if lo <= hi {
            (lo, hi)
        } else {
            (hi, lo)
        }
    }
}

/// A conformal prediction interval `[lower, upper]` at nominal level
/// `1 - alpha`, together with the calibration-score quantile used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub score_quantile: f64,
}

impl ConformalInterval {
    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Empirical `tau`-quantile under the ceiling (higher-order-statistic) rule:
/// the `ceil(tau * n)`-th order statistic, 1-based.
fn empirical_quantile(sorted: &[f64], tau: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let idx = ((tau * n as f64).ceil() as usize).clamp(1, n);
    sorted[idx - 1]
}

/// Fits lower/upper quantile predictors on the training pairs.
pub fn fit_quantiles(
    train: &[(&[f64], f64)],
    lo_level: f64,
    hi_level: f64,
    kind: PredictorKind,
) -> Result<QuantilePredictor> {
    if train.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    if !(0.0 < lo_level && lo_level < hi_level && hi_level < 1.0) {
        return Err(Error::Config(format!(
            "quantile levels must satisfy 0 < lo < hi < 1, got ({lo_level}, {hi_level})"
        )));
    }
    match kind {
        PredictorKind::ConstantEmpirical => {
            let mut ys: Vec<f64> = train.iter().map(|&(_, y)| y).collect();
            ys.sort_unstable_by(f64::total_cmp);
            Ok(QuantilePredictor {
                kind,
                lo_level,
                hi_level,
                lo_params: vec![empirical_quantile(&ys, lo_level)],
                hi_params: vec![empirical_quantile(&ys, hi_level)],
            })
        }
        PredictorKind::LinearPinball => {
            let dim = train[0].0.len();
            let lo_params = fit_linear_pinball(train, lo_level, dim, 0.0);
            let hi_params = fit_linear_pinball(train, hi_level, dim, 0.0);
            Ok(QuantilePredictor {
                kind,
                lo_level,
                hi_level,
                lo_params,
                hi_params,
            })
        }
    }
}

/// Linear quantile regression by projected subgradient descent on the mean
/// pinball loss plus `ridge / 2 * |theta|^2`. Parameters are intercept-first.
fn fit_linear_pinball(train: &[(&[f64], f64)], tau: f64, dim: usize, ridge: f64) -> Vec<f64> {
    let n = train.len() as f64;
    let mut theta = vec![0.0f64; dim + 1];
    // Warm start the intercept at the empirical quantile.
    let mut ys: Vec<f64> = train.iter().map(|&(_, y)| y).collect();
    ys.sort_unstable_by(f64::total_cmp);
    theta[0] = empirical_quantile(&ys, tau);

    let mut best = theta.clone();
    let mut best_loss = pinball_objective(train, &theta, tau, ridge);
    let scale = train
        .iter()
        .flat_map(|&(x, _)| x.iter().map(|v| v.abs()))
        .fold(1.0f64, f64::max);
    let lr0 = ys.last().map(|&a| (a - ys[0]).abs()).unwrap_or(1.0).max(1e-3) / scale;

    const MAX_ITER: usize = 20_000;
    const TOL: f64 = 1e-12;
    let mut grad = vec![0.0f64; dim + 1];
    for iter in 1..=MAX_ITER {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for &(x, y) in train {
            let pred = theta[0]
                + theta[1..].iter().zip(x).map(|(p, v)| p * v).sum::<f64>();
            let u = y - pred;
            // Subgradient of the pinball loss in the prediction.
            let g = if u > 0.0 {
                -tau
            } else if u < 0.0 {
                1.0 - tau
            } else {
                0.0
            };
            grad[0] += g / n;
            for (gi, &xi) in grad[1..].iter_mut().zip(x) {
                *gi += g * xi / n;
            }
        }
        for (gi, ti) in grad.iter_mut().zip(theta.iter()) {
            *gi += ridge * ti;
        }
        let lr = lr0 / (iter as f64).sqrt();
        for (ti, gi) in theta.iter_mut().zip(grad.iter()) {
            *ti -= lr * gi;
        }
        let loss = pinball_objective(train, &theta, tau, ridge);
        if loss < best_loss {
            if best_loss - loss < TOL && iter > 100 {
                best_loss = loss;
                best.copy_from_slice(&theta);
                break;
            }
            best_loss = loss;
            best.copy_from_slice(&theta);
        }
        if best_loss < TOL {
            break;
        }
    }
    best
}

fn pinball_objective(train: &[(&[f64], f64)], theta: &[f64], tau: f64, ridge: f64) -> f64 {
    let n = train.len() as f64;
    let mut loss = 0.0;
    for &(x, y) in train {
        let pred = theta[0] + theta[1..].iter().zip(x).map(|(p, v)| p * v).sum::<f64>();
        let u = y - pred;
        loss += if u >= 0.0 { tau * u } else { (tau - 1.0) * u };
    }
    loss / n + 0.5 * ridge * theta.iter().map(|t| t * t).sum::<f64>()
}

/// Quantile conformity scores of the calibration pairs.
pub fn cqr_scores(calib: &[(&[f64], f64)], predictor: &QuantilePredictor) -> Vec<f64> {
    calib
        .iter()
        .map(|&(x, y)| {
            let (lo, hi) = predictor.predict(x);
            (lo - y).max(y - hi)
        })
        .collect()
}

/// Empirical `(1 - alpha)(1 + 1/n)`-quantile of the calibration scores,
/// falling back to `max(scores)` when the adjusted level reaches 1.
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InsufficientData("empty calibration score set".into()));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let n = scores.len();
    let level = (1.0 - alpha) * (1.0 + 1.0 / n as f64);
    if level >= 1.0 {
        return Ok(scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }
    // k-th order statistic, 1-based ceiling rule, via quickselect.
    let k = ((level * n as f64).ceil() as usize).clamp(1, n);
    let mut buf: Vec<f64> = scores.to_vec();
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn arm_with(rewards: &[f64]) -> ArmState {
        let mut s = ArmState::new(0, 0.2);
        for &r in rewards {
            s.observe(r, &[]);
        }
        s
    }

    #[test]
    fn minimal_split_two_observations() {
        let s = arm_with(&[1.0, 2.0]);
        let (train, calib) = s.split_history(SplitRule::Alternating).unwrap();
        assert_eq!(train, vec![(&[][..], 1.0)]);
        assert_eq!(calib, vec![(&[][..], 2.0)]);
    }

    #[test]
    fn alternating_split_ten_observations() {
        let s = arm_with(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        let (train, calib) = s.split_history(SplitRule::Alternating).unwrap();
        let train_ys: Vec<f64> = train.iter().map(|&(_, y)| y).collect();
        let calib_ys: Vec<f64> = calib.iter().map(|&(_, y)| y).collect();
        assert_eq!(train_ys, vec![1.0, 3.0, 5.0, 7.0, 9.0]);
        assert_eq!(calib_ys, vec![2.0, 4.0, 6.0, 8.0, 10.0]);
    }

    #[test]
    fn empty_history_split_is_insufficient_data() {
        let s = arm_with(&[]);
        assert!(matches!(
            s.split_history(SplitRule::Alternating),
            Err(crate::error::Error::InsufficientData(_))
        ));
    }

    #[test]
    fn single_point_quantile_is_that_point() {
        let train = [(&[][..], 5.0)];
        let p = fit_quantiles(&train, 0.1, 0.9, PredictorKind::ConstantEmpirical).unwrap();
        assert_eq!(p.predict(&[]), (5.0, 5.0));
    }

    #[test]
    fn median_of_five_uses_ceiling_rule() {
        let train: Vec<(&[f64], f64)> = [1.0, 2.0, 3.0, 4.0, 5.0].iter().map(|&y| (&[][..], y)).collect();
        let p = fit_quantiles(&train, 0.5, 0.9, PredictorKind::ConstantEmpirical).unwrap();
        assert_eq!(p.lo_params[0], 3.0);
    }

    #[test]
    fn linear_pinball_recovers_noiseless_slope() {
        let xs: Vec<[f64; 1]> = (0..40).map(|i| [i as f64 / 10.0]).collect();
        let train: Vec<(&[f64], f64)> = xs.iter().map(|x| (&x[..], 2.0 * x[0])).collect();
        let p = fit_quantiles(&train, 0.1, 0.9, PredictorKind::LinearPinball).unwrap();
        assert!((p.hi_params[1] - 2.0).abs() < 1e-3, "slope {}", p.hi_params[1]);
    }

    #[test]
    fn cqr_score_examples() {
        let p = QuantilePredictor {
            kind: PredictorKind::ConstantEmpirical,
            lo_level: 0.1,
            hi_level: 0.9,
            lo_params: vec![0.0],
            hi_params: vec![1.0],
        };
        assert_eq!(cqr_scores(&[(&[], 0.5)], &p), vec![-0.5]);
        assert_eq!(cqr_scores(&[(&[], 1.7)], &p), vec![0.7]);
        let degenerate = QuantilePredictor {
            lo_params: vec![0.0],
            hi_params: vec![0.0],
            ..p
        };
        assert_eq!(cqr_scores(&[(&[], -2.0)], &degenerate), vec![2.0]);
    }

    #[test]
    fn conformal_quantile_overflow_returns_max() {
        // Adjusted level 0.8 * 1.25 = 1.0.
        assert_eq!(conformal_quantile(&[1.0, 2.0, 3.0, 4.0], 0.2).unwrap(), 4.0);
    }

    #[test]
    fn conformal_quantile_single_score() {
        assert_eq!(conformal_quantile(&[7.0], 0.5).unwrap(), 7.0);
    }

    #[test]
    fn conformal_quantile_hundred_scores_is_81st_order_statistic() {
        let scores: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        // Brute-force oracle: sort and take the ceil(0.808 * 100) = 81st value.
        let mut sorted = scores.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        let level = (1.0 - 0.2) * (1.0 + 1.0 / 100.0);
        let oracle = sorted[(level * 100.0).ceil() as usize - 1];
        assert_eq!(oracle, 81.0);
        assert_eq!(conformal_quantile(&scores, 0.2).unwrap(), oracle);
    }

    #[test]
    fn zero_spread_history_gives_point_interval() {
        let s = arm_with(&[0.3, 0.3]);
        let iv = s
            .predict_interval(&[], SplitRule::Alternating, PredictorKind::ConstantEmpirical)
            .unwrap();
        assert_eq!((iv.lower, iv.upper), (0.3, 0.3));
        assert!(iv.contains(0.3));
    }

    #[test]
    fn hand_traced_two_point_interval() {
        // train={0}, calib={1}: q_lo = q_hi = 0, S = 1, adjusted level
        // overflows so Q = 1, interval [-1, 1].
        let s = arm_with(&[0.0, 1.0]);
        let iv = s
            .predict_interval(&[], SplitRule::Alternating, PredictorKind::ConstantEmpirical)
            .unwrap();
        assert_eq!((iv.lower, iv.upper), (-1.0, 1.0));
        assert_eq!(iv.score_quantile, 1.0);
        assert_abs_diff_eq!(iv.level, 0.8);
    }

    #[test]
    fn aci_update_arithmetic() {
        let mut s = arm_with(&[0.0, 1.0]);
        s.aci_update(true, 0.005, 0.2);
        assert_abs_diff_eq!(s.aci_alpha(), 0.201, epsilon = 1e-12);

        let mut s = arm_with(&[0.0, 1.0]);
        s.aci_update(false, 0.005, 0.2);
        assert_abs_diff_eq!(s.aci_alpha(), 0.196, epsilon = 1e-12);
    }

    #[test]
    fn aci_alpha_stays_clamped_at_floor() {
        let mut s = arm_with(&[0.0, 1.0]);
        for _ in 0..10_000 {
            s.aci_update(false, 0.005, 0.2);
        }
        assert_eq!(s.aci_alpha(), ALPHA_FLOOR);
    }

    #[test]
    fn running_stats_match_recomputation() {
        let rewards = [0.3, -1.2, 4.5, 0.0, 2.2, -0.7, 1.9];
        let s = arm_with(&rewards);
        let n = rewards.len() as f64;
        let mean = rewards.iter().sum::<f64>() / n;
        let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert_abs_diff_eq!(s.mean(), mean, epsilon = 1e-12);
        assert_abs_diff_eq!(s.sd(), var.sqrt(), epsilon = 1e-12);
        assert_eq!(s.pull_count(), rewards.len());
    }
}
