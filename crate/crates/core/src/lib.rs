//! Adaptive control-chart triggering for ecological momentary assessments.
//!
//! At each self-report the chart fits a Beta model to the subject's past
//! reports and triggers a burdensome secondary task when the new report is
//! extreme at a significance level chosen so that, on average, a target
//! number of tasks is triggered. The level adapts to the subject's
//! observed adherence.
//!
//! Besides the triggering policies the crate carries the experiment
//! harness: a cohort simulator, an ingestion pipeline for raw EMA exports,
//! ground-truth labeling, F1/utility scoring and one-sided rank-sum
//! comparisons between policies.

pub mod beta;
pub mod design;
pub mod error;
pub mod evaluate;
pub mod ingest;
pub mod io;
pub mod schedulers;
pub mod simulate;
pub mod types;

pub use beta::{beta_quantile, fit_beta_mom, is_extreme, reg_inc_beta, BetaParams, ControlLimits};
pub use design::{optimal_alpha, optimal_set, DesignPoint};
pub use error::{Error, Result};
pub use schedulers::{Algorithm, PolicyOptions};
pub use types::{Event, Observation, ObservationSeries, Slot, StudyDesign, TriggerDecision, TriggerLog};
