//! Safe exploration of finite grid MDPs whose safety function is unknown
//! a priori and drifts over time.
//!
//! An agent moves on a grid world and may only occupy states whose safety
//! value `g(t, s)` lies above a threshold `h`. The safety field is observed
//! through noisy point measurements and modelled with a spatio-temporal
//! Gaussian process. Safety certificates are propagated from observed states
//! to unobserved ones with Lipschitz bounds, restricted by one-step
//! reachability and returnability, and the agent samples the candidate that
//! best trades off predicted safety against uncertainty.
//!
//! Module map:
//!
//! * [`stateset`] — dense bitsets over row-major grid states.
//! * [`stgp`]     — kernel algebra, GP posterior, confidence bounds,
//!   information gain, and the confidence scaling schedule.
//! * [`env`]      — grid worlds: random generation and terrain-stack ingestion.
//! * [`safesets`] — Lipschitz-propagated safe sets, reach/return operators,
//!   expanders, and the safe-state lower-bound diagnostic.
//! * [`agent`]    — the exploration control loop and the baseline policies.
//! * [`eval`]     — RMSE, safety counts, classification metrics, aggregation.

pub mod agent;
pub mod env;
pub mod eval;
pub mod safesets;
pub mod stateset;
pub mod stgp;

pub use agent::{run_policy, AgentConfig, EpisodeRun, EpisodeTrace, Policy, StepRecord};
pub use env::{generate_random_env, load_terrain_env, Action, EnvError, EnvGenSpec, GridWorld};
pub use eval::{aggregate_runs, run_metrics, ClassCounts, PerRunMetrics, SummaryRow};
pub use safesets::{LipschitzParams, SafeSets};
pub use stateset::StateSet;
pub use stgp::{
    compute_beta, eval_kernel, information_gain, BoundsTable, GpError, GpModel, GridMetric,
    InfoGainMode, InfoGainResult, Interval, KernelSpec, SpaceTimePoint,
};
