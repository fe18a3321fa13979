//! Triggering policies.
//!
//! All policies consume a series strictly in temporal order and emit one
//! [`TriggerDecision`] per series event. The two chart policies fit a Beta
//! model to every observation preceding the current one and trigger when
//! the current value falls outside the two-sided region of level alpha:
//!
//! * [`run_control_chart_fixed`] uses one alpha computed from an expected
//!   sample size known in advance;
//! * [`run_control_chart_adaptive`] recomputes alpha at every observation
//!   from the subject's own adherence so far.
//!
//! [`run_random`] and [`run_static`] are the baselines.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beta::{fit_beta_mom, ControlLimits};
use crate::design::optimal_alpha;
use crate::error::{Error, Result};
use crate::types::{Event, ObservationSeries, StudyDesign, TriggerDecision, TriggerLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Random,
    Static,
    Alg1,
    Alg2,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Random, Algorithm::Static, Algorithm::Alg1, Algorithm::Alg2];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Random => "random",
            Algorithm::Static => "static",
            Algorithm::Alg1 => "alg1",
            Algorithm::Alg2 => "alg2",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Parse {
                location: "algorithm".into(),
                reason: format!("unknown algorithm `{s}` (expected random, static, alg1 or alg2)"),
            })
    }
}

/// Baseline behaviour switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOptions {
    /// Apply the trigger cap to the static policy.
    pub cap_static: bool,
    /// Static policy only triggers from the start point on.
    pub static_from_start: bool,
    /// Random policy draws from all slots instead of start point onwards.
    pub random_full_window: bool,
}

impl Default for PolicyOptions {
    fn default() -> Self {
        Self {
            cap_static: true,
            static_from_start: true,
            random_full_window: false,
        }
    }
}

fn check_inputs(series: &ObservationSeries, design: &StudyDesign) -> Result<()> {
    design.validate()?;
    if series.total_slots() != design.total_slots() || series.slots_per_day() != design.slots_per_day {
        return Err(Error::InvalidSeries {
            subject: series.subject_id().to_string(),
            reason: format!(
                "series has {} slots ({} per day), design expects {} ({} per day)",
                series.total_slots(),
                series.slots_per_day(),
                design.total_slots(),
                design.slots_per_day
            ),
        });
    }
    Ok(())
}

fn under_cap(cap: Option<usize>, total: usize) -> bool {
    cap.is_none_or(|r| total < r)
}

/// Estimated adherence rate: capped adherence count up to `t` divided by `t`.
pub fn estimate_adherence_rate(series: &ObservationSeries, t: usize, design: &StudyDesign) -> f64 {
    series.adherence_count(t, design.slots_per_day) as f64 / t as f64
}

/// Expected final number of samples, `rate * n_total`.
pub fn estimate_final_samples(rate: f64, n_total: usize) -> f64 {
    rate * n_total as f64
}

/// Adaptive significance level at slot `t`.
pub fn adaptive_alpha(series: &ObservationSeries, t: usize, design: &StudyDesign) -> f64 {
    let rate = estimate_adherence_rate(series, t, design);
    optimal_alpha(
        estimate_final_samples(rate, design.total_slots()),
        design.start_point,
        design.target_triggers,
    )
}

/// Shared chart loop. `alpha_at(t, answered)` gives the level at slot `t`
/// where `answered` is the capped adherence count up to `t`.
fn run_chart(
    series: &ObservationSeries,
    design: &StudyDesign,
    mut alpha_at: impl FnMut(usize, usize) -> f64,
) -> Result<TriggerLog> {
    let mut log = TriggerLog::new(series.subject_id());
    let mut history: Vec<f64> = Vec::with_capacity(series.observation_count());
    let mut answered = 0;
    let mut day = 0;
    let mut answered_today = 0;
    for event in series.events() {
        let obs = match event {
            Event::Missing { slot } => {
                log.push(TriggerDecision::idle(slot, false));
                continue;
            }
            Event::Observed(o) => o,
        };
        let t = obs.slot;
        let today = design.day_of(t);
        if today != day {
            day = today;
            answered_today = 0;
        }
        if !obs.overflow && answered_today < design.slots_per_day {
            answered_today += 1;
            answered += 1;
        }
        if t < design.start_point {
            log.push(TriggerDecision::idle(t, true));
            history.push(obs.value);
            continue;
        }
        let alpha = alpha_at(t, answered);
        let mut decision = TriggerDecision {
            alpha: Some(alpha),
            ..TriggerDecision::idle(t, true)
        };
        let room = under_cap(design.trigger_cap, log.total());
        if alpha >= 1.0 {
            decision.triggered = room;
        } else if alpha > 0.0 && history.len() >= 2 {
            let params = fit_beta_mom(&history).map_err(|e| e.for_subject(series.subject_id()))?;
            let limits = ControlLimits::new(&params, alpha).map_err(|e| e.for_subject(series.subject_id()))?;
            decision.lower = Some(limits.lower);
            decision.upper = Some(limits.upper);
            decision.triggered = room && limits.is_outside(obs.value);
        }
        log.push(decision);
        history.push(obs.value);
    }
    Ok(log)
}

/// Control chart with a fixed significance level derived from the expected
/// number of samples per subject `n_bar_prime`.
pub fn run_control_chart_fixed(
    series: &ObservationSeries,
    design: &StudyDesign,
    n_bar_prime: f64,
) -> Result<TriggerLog> {
    check_inputs(series, design)?;
    if !(n_bar_prime > 0.0 && n_bar_prime.is_finite()) {
        return Err(Error::Domain(format!(
            "expected sample size must be positive, got {n_bar_prime}"
        )));
    }
    let alpha = optimal_alpha(n_bar_prime, design.start_point, design.target_triggers);
    run_chart(series, design, |_, _| alpha)
}

/// Control chart whose significance level follows the subject's adherence.
pub fn run_control_chart_adaptive(series: &ObservationSeries, design: &StudyDesign) -> Result<TriggerLog> {
    check_inputs(series, design)?;
    let n = design.total_slots();
    run_chart(series, design, |t, answered| {
        let rate = answered as f64 / t as f64;
        optimal_alpha(
            estimate_final_samples(rate, n),
            design.start_point,
            design.target_triggers,
        )
    })
}

/// Random schedule: draws distinct slots uniformly; a selection that lands
/// on a missing slot moves to the next observation not already claimed by
/// another selection, and lapses at the end of the series.
pub fn run_random(
    series: &ObservationSeries,
    design: &StudyDesign,
    options: &PolicyOptions,
    seed: u64,
) -> Result<TriggerLog> {
    check_inputs(series, design)?;
    let first = if options.random_full_window {
        1
    } else {
        design.start_point
    };
    let pool = design.total_slots() - first + 1;
    let k = design.random_trigger_count.min(pool);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = vec![false; design.total_slots() + 1];
    for i in index::sample(&mut rng, pool, k) {
        selected[first + i] = true;
    }

    let mut log = TriggerLog::new(series.subject_id());
    let mut pending = 0usize;
    for event in series.events() {
        match event {
            Event::Missing { slot } => {
                if selected[slot] {
                    pending += 1;
                }
                log.push(TriggerDecision::idle(slot, false));
            }
            Event::Observed(o) => {
                let triggered = if !o.overflow && selected[o.slot] {
                    true
                } else if pending > 0 {
                    pending -= 1;
                    true
                } else {
                    false
                };
                log.push(TriggerDecision {
                    triggered,
                    ..TriggerDecision::idle(o.slot, true)
                });
            }
        }
    }
    Ok(log)
}

/// Fixed-threshold rule: trigger when the value is strictly below
/// `static_lo` or strictly above `static_hi`.
pub fn run_static(series: &ObservationSeries, design: &StudyDesign, options: &PolicyOptions) -> Result<TriggerLog> {
    check_inputs(series, design)?;
    let cap = if options.cap_static { design.trigger_cap } else { None };
    let first = if options.static_from_start {
        design.start_point
    } else {
        1
    };
    let mut log = TriggerLog::new(series.subject_id());
    for event in series.events() {
        let decision = match event {
            Event::Missing { slot } => TriggerDecision::idle(slot, false),
            Event::Observed(o) => TriggerDecision {
                triggered: o.slot >= first
                    && (o.value < design.static_lo || o.value > design.static_hi)
                    && under_cap(cap, log.total()),
                ..TriggerDecision::idle(o.slot, true)
            },
        };
        log.push(decision);
    }
    Ok(log)
}

/// Inputs beyond the series that a policy may need.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext {
    pub n_bar_prime: f64,
    pub seed: u64,
}

impl Algorithm {
    pub fn run(
        self,
        series: &ObservationSeries,
        design: &StudyDesign,
        options: &PolicyOptions,
        ctx: PolicyContext,
    ) -> Result<TriggerLog> {
        match self {
            Algorithm::Random => run_random(series, design, options, ctx.seed),
            Algorithm::Static => run_static(series, design, options),
            Algorithm::Alg1 => run_control_chart_fixed(series, design, ctx.n_bar_prime),
            Algorithm::Alg2 => run_control_chart_adaptive(series, design),
        }
    }
}
