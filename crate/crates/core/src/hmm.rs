//! Gaussian-emission hidden Markov model for market-regime detection.
//!
//! A three-state chain is fitted to a benchmark return series by EM
//! (Baum-Welch with scaled forward-backward passes). Regimes are inferred
//! causally from the filtering distribution `P(Z_t = s | R_{1:t})` — never
//! smoothed — so the backtest sees no look-ahead. States map to
//! `Bull`/`Neutral`/`Bear` by ascending emission variance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policies::Regime;

/// Emission variances never collapse below this.
pub const VAR_FLOOR: f64 = 1e-10;

/// Fitted Gaussian-emission HMM.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HmmModel {
    pub n_states: usize,
    /// Initial state distribution delta.
    pub initial: Vec<f64>,
    /// Row-stochastic transition matrix, row-major.
    pub transition: Vec<Vec<f64>>,
    pub emission_means: Vec<f64>,
    pub emission_vars: Vec<f64>,
    /// Log-likelihood after each EM iteration (non-decreasing).
    pub loglik_path: Vec<f64>,
    /// Set when the input series was (near-)constant and the emission
    /// variances had to be floored.
    #[serde(default)]
    pub degenerate: bool,
}

/// EM fit options.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Extra random restarts on top of the deterministic quantile-based
    /// initialisation; the best log-likelihood wins.
    pub restarts: usize,
    pub restart_seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
            restarts: 0,
            restart_seed: 0,
        }
    }
}

/// Bijective map from HMM state index to regime label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeMap {
    pub state_to_label: Vec<Regime>,
}

impl RegimeMap {
    pub fn label(&self, state: usize) -> Regime {
        self.state_to_label[state]
    }
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-(d * d) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

impl HmmModel {
    /// Per-state emission densities at one observation.
    fn emissions(&self, x: f64) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| normal_pdf(x, self.emission_means[s], self.emission_vars[s]))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.n_states;
        if self.initial.len() != s || self.transition.len() != s {
            return Err(Error::Config("HMM parameter dimensions disagree".into()));
        }
        let dsum: f64 = self.initial.iter().sum();
        if (dsum - 1.0).abs() > 1e-8 {
            return Err(Error::Config(format!("initial distribution sums to {dsum}")));
        }
        for row in &self.transition {
            let rsum: f64 = row.iter().sum();
            if (rsum - 1.0).abs() > 1e-10 {
                return Err(Error::Config(format!("transition row sums to {rsum}")));
            }
        }
        if self.emission_vars.iter().any(|&v| v < VAR_FLOOR) {
            return Err(Error::Config("emission variance below floor".into()));
        }
        Ok(())
    }

    /// Total log-likelihood of a series under the current parameters.
    pub fn log_likelihood(&self, returns: &[f64]) -> f64 {
        let mut filter = ForwardFilter::new(self);
        for &r in returns {
            filter.push(r);
        }
        filter.log_likelihood()
    }

    /// Filtering distribution `P(Z_t = s | R_{1:t})` at the end of `prefix`.
    pub fn forward_filter(&self, prefix: &[f64]) -> Result<Vec<f64>> {
        if prefix.is_empty() {
            return Err(Error::InsufficientData(
                "forward filter needs a non-empty prefix".into(),
            ));
        }
        let mut filter = ForwardFilter::new(self);
        for &r in prefix {
            filter.push(r);
        }
        Ok(filter.probs().to_vec())
    }

    /// Maps fitted states to regime labels by ascending emission variance
    /// (ties broken by descending mean). Requires exactly 3 states.
    pub fn label_states(&self) -> Result<RegimeMap> {
        if self.n_states != 3 {
            return Err(Error::Config(format!(
                "regime labelling needs a 3-state model, got {}",
                self.n_states
            )));
        }
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            self.emission_vars[a]
                .total_cmp(&self.emission_vars[b])
                .then(self.emission_means[b].total_cmp(&self.emission_means[a]))
        });
        let mut state_to_label = vec![Regime::Neutral; 3];
        state_to_label[order[0]] = Regime::Bull;
        state_to_label[order[1]] = Regime::Neutral;
        state_to_label[order[2]] = Regime::Bear;
        Ok(RegimeMap { state_to_label })
    }

    /// Causal regime inference: label of the argmax filtered state.
    /// Exact probability ties go to the lowest-variance state.
    pub fn infer_regime(&self, prefix: &[f64], map: &RegimeMap) -> Result<Regime> {
        let probs = self.forward_filter(prefix)?;
        Ok(map.label(argmax_state(&probs, &self.emission_vars)))
    }
}

pub(crate) fn argmax_state(probs: &[f64], vars: &[f64]) -> usize {
    let mut best = 0;
    for s in 1..probs.len() {
        if probs[s] > probs[best]
            || (probs[s] == probs[best] && vars[s] < vars[best])
        {
            best = s;
        }
    }
    best
}

/// Incremental scaled forward recursion; one `push` per observation.
#[derive(Debug, Clone)]
pub struct ForwardFilter<'a> {
    model: &'a HmmModel,
    probs: Vec<f64>,
    loglik: f64,
    t: usize,
}

impl<'a> ForwardFilter<'a> {
    pub fn new(model: &'a HmmModel) -> Self {
        Self {
            model,
            probs: vec![0.0; model.n_states],
            loglik: 0.0,
            t: 0,
        }
    }

    /// Advances the filter by one observation.
    pub fn push(&mut self, x: f64) {
        let s = self.model.n_states;
        let em = self.model.emissions(x);
        let mut next = vec![0.0; s];
        if self.t == 0 {
            for j in 0..s {
                next[j] = self.model.initial[j] * em[j];
            }
        } else {
            for j in 0..s {
                let mut acc = 0.0;
                for i in 0..s {
                    acc += self.probs[i] * self.model.transition[i][j];
                }
                next[j] = acc * em[j];
            }
        }
        let norm: f64 = next.iter().sum();
        if norm > 0.0 && norm.is_finite() {
            for p in next.iter_mut() {
                *p /= norm;
            }
            self.loglik += norm.ln();
        } else {
            // Observation with zero likelihood under every state.
            log::warn!("forward filter hit a zero-likelihood observation; using uniform fallback");
            for p in next.iter_mut() {
                *p = 1.0 / s as f64;
            }
            self.loglik += f64::MIN_POSITIVE.ln();
        }
        self.probs = next;
        self.t += 1;
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_likelihood(&self) -> f64 {
        self.loglik
    }
}

/// Deterministic initialisation: sort the observations, cut them into `s`
/// equal blocks by value, and use per-block moments as emission parameters.
fn quantile_init(returns: &[f64], s: usize) -> (Vec<f64>, Vec<f64>) {
    let mut sorted = returns.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    let mut means = Vec::with_capacity(s);
    let mut vars = Vec::with_capacity(s);
    for b in 0..s {
        let lo = b * n / s;
        let hi = ((b + 1) * n / s).max(lo + 1).min(n);
        let block = &sorted[lo..hi];
        let m = block.iter().sum::<f64>() / block.len() as f64;
        let v = block.iter().map(|x| (x - m).powi(2)).sum::<f64>() / block.len() as f64;
        means.push(m);
        vars.push(v.max(VAR_FLOOR));
    }
    (means, vars)
}

/// Fits an `s`-state Gaussian-emission HMM by EM.
///
/// Stops when the log-likelihood gain drops below `opts.tol` or after
/// `opts.max_iter` iterations. A constant input series yields a
/// variance-floored model flagged as degenerate.
pub fn em_fit(returns: &[f64], s: usize, opts: &FitOptions) -> Result<HmmModel> {
    if s == 0 {
        return Err(Error::Config("HMM needs at least one state".into()));
    }
    if returns.len() < 10 * s {
        return Err(Error::InsufficientData(format!(
            "EM fit needs at least {} observations for {} states, got {}",
            10 * s,
            s,
            returns.len()
        )));
    }

    let spread = returns.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - returns.iter().cloned().fold(f64::INFINITY, f64::min);
    let degenerate = !(spread > 0.0);
    if degenerate {
        log::warn!("constant return series; emission variances floored");
        let m = returns[0];
        return Ok(HmmModel {
            n_states: s,
            initial: vec![1.0 / s as f64; s],
            transition: vec![vec![1.0 / s as f64; s]; s],
            emission_means: vec![m; s],
            emission_vars: vec![VAR_FLOOR; s],
            loglik_path: Vec::new(),
            degenerate: true,
        });
    }

    let (means, vars) = quantile_init(returns, s);
    let mut best = em_run(returns, s, means, vars, opts);

    if opts.restarts > 0 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.restart_seed);
        let n = returns.len();
        let full_mean = returns.iter().sum::<f64>() / n as f64;
        let full_var = returns
            .iter()
            .map(|x| (x - full_mean).powi(2))
            .sum::<f64>()
            / n as f64;
        for _ in 0..opts.restarts {
            let means: Vec<f64> = (0..s)
                .map(|_| returns[rng.random_range(0..n)])
                .collect();
            let vars = vec![full_var.max(VAR_FLOOR); s];
            let candidate = em_run(returns, s, means, vars, opts);
            let best_ll = best.loglik_path.last().copied().unwrap_or(f64::NEG_INFINITY);
            let cand_ll = candidate
                .loglik_path
                .last()
                .copied()
                .unwrap_or(f64::NEG_INFINITY);
            if cand_ll > best_ll {
                best = candidate;
            }
        }
    }
    Ok(best)
}

fn em_run(
    returns: &[f64],
    s: usize,
    init_means: Vec<f64>,
    init_vars: Vec<f64>,
    opts: &FitOptions,
) -> HmmModel {
    let n = returns.len();
    let self_bias = 0.8;
    let off = if s > 1 { (1.0 - self_bias) / (s as f64 - 1.0) } else { 0.0 };
    let mut model = HmmModel {
        n_states: s,
        initial: vec![1.0 / s as f64; s],
        transition: (0..s)
            .map(|i| {
                (0..s)
                    .map(|j| if i == j && s > 1 { self_bias } else if s > 1 { off } else { 1.0 })
                    .collect()
            })
            .collect(),
        emission_means: init_means,
        emission_vars: init_vars,
        loglik_path: Vec::new(),
        degenerate: false,
    };

    // Scratch space for the scaled passes.
    let mut alpha = vec![vec![0.0f64; s]; n];
    let mut beta = vec![vec![0.0f64; s]; n];
    let mut norms = vec![0.0f64; n];
    let mut em = vec![vec![0.0f64; s]; n];

    for _iter in 0..opts.max_iter {
        for (t, &x) in returns.iter().enumerate() {
            em[t] = model.emissions(x);
        }

        // Scaled forward pass.
        let mut loglik = 0.0;
        for t in 0..n {
            for j in 0..s {
                alpha[t][j] = if t == 0 {
                    model.initial[j] * em[0][j]
                } else {
                    (0..s).map(|i| alpha[t - 1][i] * model.transition[i][j]).sum::<f64>()
                        * em[t][j]
                };
            }
            let norm: f64 = alpha[t].iter().sum();
            let norm = if norm > 0.0 && norm.is_finite() {
                norm
            } else {
                for a in alpha[t].iter_mut() {
                    *a = 1.0 / s as f64;
                }
                f64::MIN_POSITIVE
            };
            if norm != f64::MIN_POSITIVE {
                for a in alpha[t].iter_mut() {
                    *a /= norm;
                }
            }
            norms[t] = norm;
            loglik += norm.ln();
        }
        model.loglik_path.push(loglik);

        // Scaled backward pass (same normalisers).
        for b in beta[n - 1].iter_mut() {
            *b = 1.0;
        }
        for t in (0..n - 1).rev() {
            for i in 0..s {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += model.transition[i][j] * em[t + 1][j] * beta[t + 1][j];
                }
                beta[t][i] = acc / norms[t + 1];
            }
        }

        // Posteriors, renormalised explicitly.
        let mut gamma_sum = vec![0.0f64; s]; // over t = 0..n-2, for transitions
        let mut gamma_full = vec![0.0f64; s]; // over all t, for emissions
        let mut xi_sum = vec![vec![0.0f64; s]; s];
        let mut mean_num = vec![0.0f64; s];
        let mut gamma0 = vec![0.0f64; s];

        let mut gammas = vec![vec![0.0f64; s]; n];
        for t in 0..n {
            let mut g: Vec<f64> = (0..s).map(|i| alpha[t][i] * beta[t][i]).collect();
            let z: f64 = g.iter().sum();
            if z > 0.0 {
                for v in g.iter_mut() {
                    *v /= z;
                }
            } else {
                for v in g.iter_mut() {
                    *v = 1.0 / s as f64;
                }
            }
            for i in 0..s {
                gamma_full[i] += g[i];
                mean_num[i] += g[i] * returns[t];
                if t == 0 {
                    gamma0[i] = g[i];
                }
                if t + 1 < n {
                    gamma_sum[i] += g[i];
                }
            }
            gammas[t] = g;
        }

        for t in 0..n - 1 {
            let mut total = 0.0;
            let mut xi_t = vec![vec![0.0f64; s]; s];
            for i in 0..s {
                for j in 0..s {
                    let v = alpha[t][i] * model.transition[i][j] * em[t + 1][j] * beta[t + 1][j];
                    xi_t[i][j] = v;
                    total += v;
                }
            }
            if total > 0.0 {
                for i in 0..s {
                    for j in 0..s {
                        xi_sum[i][j] += xi_t[i][j] / total;
                    }
                }
            }
        }

        // M-step.
        model.initial = gamma0;
        for i in 0..s {
            let denom = gamma_sum[i];
            if denom > 0.0 {
                for j in 0..s {
                    model.transition[i][j] = xi_sum[i][j] / denom;
                }
            }
            let rsum: f64 = model.transition[i].iter().sum();
            if rsum > 0.0 {
                for j in 0..s {
                    model.transition[i][j] /= rsum;
                }
            }
        }
        let old_means = model.emission_means.clone();
        for i in 0..s {
            if gamma_full[i] > 0.0 {
                model.emission_means[i] = mean_num[i] / gamma_full[i];
            }
        }
        let mut var_num = vec![0.0f64; s];
        for t in 0..n {
            for i in 0..s {
                let d = returns[t] - model.emission_means[i];
                var_num[i] += gammas[t][i] * d * d;
            }
        }
        for i in 0..s {
            if gamma_full[i] > 0.0 {
                model.emission_vars[i] = (var_num[i] / gamma_full[i]).max(VAR_FLOOR);
            } else {
                model.emission_means[i] = old_means[i];
            }
        }

        // Convergence on the log-likelihood gain.
        let len = model.loglik_path.len();
        if len >= 2 {
            let gain = model.loglik_path[len - 1] - model.loglik_path[len - 2];
            if gain.abs() < opts.tol {
                break;
            }
        }
    }
    model
}
