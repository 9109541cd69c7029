//! Reliability model for retried multi-step tool-call pipelines in which a
//! failed attempt contaminates the context of the next one.
//!
//! - [`model`]: success probabilities under contaminated, clean-restart and
//!   independent retries, plus a brute-force enumeration oracle.
//! - [`analysis`]: attempt thresholds, cascade overhead, phase-transition
//!   levels, budget allocation, the two-point lower bound and clean-restart gains.
//! - [`simulator`]: seeded, worker-count-independent Monte Carlo.
//! - [`calibration`]: fitting model rates to observed pass@k data.

pub mod analysis;
pub mod calibration;
pub mod error;
pub mod model;
pub mod simulator;

pub use analysis::{
    attempts_required_ccrm, attempts_required_iid, cascade_overhead, critical_cascade_ratio,
    critical_contamination, hellinger_sq, improvement_ratio, lecam_lower_bound,
    optimal_depth_closed, optimal_depth_exact, savings_approx, BudgetPlan, LeCamBound,
    OverheadReport, Regime, ReliabilityTarget,
};
pub use calibration::{
    assess, fit_ccrm, iid_prediction, ingest, Assessment, FitResult, PassAtKObservation, RetryMode,
};
pub use error::{Error, Result};
pub use model::{
    derive_rates, enumeration_oracle, failure_clean, failure_iid, failure_within, success_clean,
    success_iid, success_within, DerivedRates, ModelParams, RetryPolicy,
};
pub use simulator::{
    estimate_success, run_trial, success_curve, sweep_cascade, sweep_depth, sweep_overhead,
    Granularity, SimConfig, SimEstimate, TrialRecord,
};
