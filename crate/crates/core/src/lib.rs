//! Bandit policies whose exploration bonuses are finite-sample-valid
//! conformal prediction intervals, together with the synthetic reward
//! environments, the Monte-Carlo evaluation harness, a Gaussian-emission
//! HMM regime detector, and a portfolio-allocation backtester.
//!
//! The crate is organised by concern:
//!
//! * [`environments`] — stochastic K-armed reward generators (Gaussian,
//!   Student-t, skew-t).
//! * [`conformal`] — split conformal prediction, conformalised quantile
//!   regression, and adaptive conformal inference over per-arm histories.
//! * [`policies`] — selection indices (UCB1, MV-UCB1, CP-UCB, CP-Bandit,
//!   CP-ESI and the regime-aware variants), tie-breaking, randomisation.
//! * [`hmm`] — EM-fitted Gaussian-emission HMM with causal forward
//!   filtering for Bull/Neutral/Bear regime labels.
//! * [`harness`] — warm-up + episode loop, seeded Monte-Carlo replicates
//!   (rayon-parallel with a sequential fallback behind the `parallel`
//!   feature), pseudo-regret / best-arm / coverage / width metrics.
//! * [`portfolio`] — price ingestion, log returns, the SA/EW/MV strategy
//!   arms, and financial performance metrics.
//! * [`backtest`] — regime-aware bandit backtesting over a price series.
//! * [`config`] — the TOML scenario format and built-in named scenarios.
//! * [`export`] — documented on-disk formats (traces, metric tables,
//!   curve files) and their readers.

pub mod backtest;
pub mod config;
pub mod conformal;
pub mod environments;
pub mod error;
pub mod export;
pub mod harness;
pub mod hmm;
pub mod policies;
pub mod portfolio;

pub use config::{builtin_scenario, SimulationScenario, BUILTIN_SCENARIOS};
pub use conformal::{ArmState, ConformalInterval, PredictorKind, SplitRule};
pub use environments::{RewardFamily, RewardModel, RewardVector};
pub use error::{Error, Result};
pub use harness::{run_episode, run_monte_carlo, run_monte_carlo_seq, Feedback, MetricsSummary};
pub use hmm::{em_fit, HmmModel, RegimeMap};
pub use policies::{Decision, EpsilonSchedule, PolicyKind, PolicySpec, Regime, TieRule};
