//! Shared domain types: study design constants, slotted observation series
//! and trigger logs.
//!
//! Slots are 1-based: slot `t` ranges over `1..=total_slots`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Experiment-level constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDesign {
    pub n_days: usize,
    pub slots_per_day: usize,
    /// First slot at which the secondary task may be triggered (S*).
    pub start_point: usize,
    /// Desired number of triggers per subject (v).
    pub target_triggers: usize,
    /// Hard cap on triggers per subject (R). `None` disables the stopping rule.
    pub trigger_cap: Option<usize>,
    pub static_lo: f64,
    pub static_hi: f64,
    pub random_trigger_count: usize,
}

impl Default for StudyDesign {
    fn default() -> Self {
        Self {
            n_days: 30,
            slots_per_day: 6,
            start_point: 6,
            target_triggers: 4,
            trigger_cap: Some(10),
            static_lo: 0.15,
            static_hi: 0.85,
            random_trigger_count: 10,
        }
    }
}

impl StudyDesign {
    pub fn total_slots(&self) -> usize {
        self.n_days * self.slots_per_day
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.total_slots();
        if self.n_days == 0 || self.slots_per_day == 0 {
            return Err(Error::InvalidDesign("n_days and slots_per_day must be positive".into()));
        }
        if self.start_point < 2 || self.start_point > n {
            return Err(Error::InvalidDesign(format!(
                "start_point {} outside 2..={n}",
                self.start_point
            )));
        }
        if self.target_triggers < 1 || self.target_triggers > n {
            return Err(Error::InvalidDesign(format!(
                "target_triggers {} outside 1..={n}",
                self.target_triggers
            )));
        }
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(self.static_lo) || !in_unit(self.static_hi) || self.static_lo >= self.static_hi {
            return Err(Error::InvalidDesign(format!(
                "static thresholds must satisfy 0 <= lo < hi <= 1, got {} / {}",
                self.static_lo, self.static_hi
            )));
        }
        Ok(())
    }

    /// Calendar day (1-based) that contains `slot`.
    pub fn day_of(&self, slot: usize) -> usize {
        (slot - 1) / self.slots_per_day + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slot {
    Missing,
    Present(f64),
}

impl Slot {
    pub fn value(self) -> Option<f64> {
        match self {
            Slot::Present(x) => Some(x),
            Slot::Missing => None,
        }
    }

    pub fn is_present(self) -> bool {
        matches!(self, Slot::Present(_))
    }
}

/// A single self-report.
///
/// `overflow` marks same-day interactions beyond the notification slots of
/// that day. They take part in estimation and triggering but not in
/// adherence counting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub slot: usize,
    pub value: f64,
    pub overflow: bool,
}

/// One step of the streaming view of a series: a missing slot or an observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    Missing { slot: usize },
    Observed(Observation),
}

impl Event {
    pub fn slot(&self) -> usize {
        match self {
            Event::Missing { slot } => *slot,
            Event::Observed(o) => o.slot,
        }
    }

    pub fn observation(&self) -> Option<Observation> {
        match self {
            Event::Observed(o) => Some(*o),
            Event::Missing { .. } => None,
        }
    }
}

/// Per-subject slotted time series of self-reports in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    subject_id: String,
    slots_per_day: usize,
    slots: Vec<Slot>,
    overflow: BTreeMap<usize, Vec<f64>>,
}

fn check_value(subject: &str, slot: usize, x: f64) -> Result<()> {
    if x.is_finite() && (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::InvalidSeries {
            subject: subject.to_string(),
            reason: format!("value {x} at slot {slot} outside [0, 1]"),
        })
    }
}

impl ObservationSeries {
    pub fn new(subject_id: impl Into<String>, slots_per_day: usize, slots: Vec<Slot>) -> Result<Self> {
        let subject_id = subject_id.into();
        if slots_per_day == 0 || slots.is_empty() || !slots.len().is_multiple_of(slots_per_day) {
            return Err(Error::InvalidSeries {
                subject: subject_id,
                reason: format!(
                    "{} slots is not a positive whole number of {slots_per_day}-slot days",
                    slots.len()
                ),
            });
        }
        for (i, s) in slots.iter().enumerate() {
            if let Slot::Present(x) = s {
                check_value(&subject_id, i + 1, *x)?;
            }
        }
        Ok(Self {
            subject_id,
            slots_per_day,
            slots,
            overflow: BTreeMap::new(),
        })
    }

    /// Builds a series from optional values, `None` marking a missing slot.
    pub fn from_values(subject_id: impl Into<String>, slots_per_day: usize, values: &[Option<f64>]) -> Result<Self> {
        let slots = values.iter().map(|v| v.map_or(Slot::Missing, Slot::Present)).collect();
        Self::new(subject_id, slots_per_day, slots)
    }

    /// Attaches an extra observation after the primary value of `slot`.
    pub fn push_overflow(&mut self, slot: usize, value: f64) -> Result<()> {
        check_value(&self.subject_id, slot, value)?;
        if slot == 0 || slot > self.slots.len() || !self.slots[slot - 1].is_present() {
            return Err(Error::InvalidSeries {
                subject: self.subject_id.clone(),
                reason: format!("overflow value at slot {slot} requires a present primary value"),
            });
        }
        self.overflow.entry(slot).or_default().push(value);
        Ok(())
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn with_subject_id(mut self, subject_id: impl Into<String>) -> Self {
        self.subject_id = subject_id.into();
        self
    }

    pub fn total_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn slots_per_day(&self) -> usize {
        self.slots_per_day
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn slot(&self, t: usize) -> Slot {
        self.slots[t - 1]
    }

    /// Adherence indicator a_t.
    pub fn adherence(&self, t: usize) -> u8 {
        u8::from(self.slot(t).is_present())
    }

    pub fn overflow(&self, t: usize) -> &[f64] {
        self.overflow.get(&t).map_or(&[], Vec::as_slice)
    }

    pub fn has_overflow(&self) -> bool {
        !self.overflow.is_empty()
    }

    /// Number of present slots (overflow not included).
    pub fn present_slots(&self) -> usize {
        self.slots.iter().filter(|s| s.is_present()).count()
    }

    /// Number of observations including overflow.
    pub fn observation_count(&self) -> usize {
        self.present_slots() + self.overflow.values().map(Vec::len).sum::<usize>()
    }

    /// Streaming view in temporal order: each slot yields either a missing
    /// event or its primary observation followed by any overflow.
    pub fn events(&self) -> impl Iterator<Item = Event> + '_ {
        self.slots.iter().enumerate().flat_map(move |(i, s)| {
            let slot = i + 1;
            let head = match s {
                Slot::Missing => Event::Missing { slot },
                Slot::Present(value) => Event::Observed(Observation {
                    slot,
                    value: *value,
                    overflow: false,
                }),
            };
            std::iter::once(head).chain(self.overflow(slot).iter().map(move |&value| {
                Event::Observed(Observation {
                    slot,
                    value,
                    overflow: true,
                })
            }))
        })
    }

    pub fn observations(&self) -> impl Iterator<Item = Observation> + '_ {
        self.events().filter_map(|e| e.observation())
    }

    pub fn values(&self) -> Vec<f64> {
        self.observations().map(|o| o.value).collect()
    }

    /// Adherence count up to and including slot `up_to`: the number of
    /// answered slots, at most `cap_per_day` per calendar day. Overflow
    /// observations never count.
    pub fn adherence_count(&self, up_to: usize, cap_per_day: usize) -> usize {
        let up_to = up_to.min(self.slots.len());
        self.slots[..up_to]
            .chunks(self.slots_per_day)
            .map(|day| day.iter().filter(|s| s.is_present()).count().min(cap_per_day))
            .sum()
    }
}

/// Decision taken at one event of a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerDecision {
    pub slot: usize,
    /// Whether an observation was present for this decision.
    pub observed: bool,
    pub triggered: bool,
    pub alpha: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl TriggerDecision {
    pub fn idle(slot: usize, observed: bool) -> Self {
        Self {
            slot,
            observed,
            triggered: false,
            alpha: None,
            lower: None,
            upper: None,
        }
    }
}

/// Per-subject trigger decisions aligned with [`ObservationSeries::events`].
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerLog {
    pub subject_id: String,
    decisions: Vec<TriggerDecision>,
    total: usize,
}

impl TriggerLog {
    pub fn new(subject_id: impl Into<String>) -> Self {
        Self {
            subject_id: subject_id.into(),
            decisions: Vec::new(),
            total: 0,
        }
    }

    pub fn push(&mut self, decision: TriggerDecision) {
        debug_assert!(!decision.triggered || decision.observed);
        self.total += usize::from(decision.triggered);
        self.decisions.push(decision);
    }

    pub fn decisions(&self) -> &[TriggerDecision] {
        &self.decisions
    }

    /// Realized number of triggers (V).
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn triggered_slots(&self) -> Vec<usize> {
        self.decisions.iter().filter(|d| d.triggered).map(|d| d.slot).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(n: usize, x: f64) -> ObservationSeries {
        ObservationSeries::from_values("s", 6, &vec![Some(x); n]).unwrap()
    }

    #[test]
    fn default_design_matches_study_constants() {
        let d = StudyDesign::default();
        assert_eq!(d.total_slots(), 180);
        assert_eq!(d.start_point, 6);
        assert_eq!(d.target_triggers, 4);
        assert_eq!(d.trigger_cap, Some(10));
        d.validate().unwrap();
    }

    #[test]
    fn design_validation_rejects_bad_start() {
        let d = StudyDesign {
            start_point: 1,
            ..Default::default()
        };
        assert!(d.validate().is_err());
        let d = StudyDesign {
            static_lo: 0.9,
            static_hi: 0.1,
            ..Default::default()
        };
        assert!(d.validate().is_err());
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(ObservationSeries::from_values("s", 6, &[Some(1.5), None, None, None, None, None]).is_err());
        assert!(ObservationSeries::from_values("s", 6, &[Some(f64::NAN), None, None, None, None, None]).is_err());
        assert!(ObservationSeries::from_values("s", 6, &[None; 5]).is_err());
    }

    #[test]
    fn adherence_all_present_cap_not_binding() {
        assert_eq!(full(180, 0.5).adherence_count(10, 6), 10);
    }

    #[test]
    fn adherence_all_missing() {
        let s = ObservationSeries::from_values("s", 6, &[None; 180]).unwrap();
        for t in [1, 6, 90, 180] {
            assert_eq!(s.adherence_count(t, 6), 0);
        }
    }

    #[test]
    fn adherence_caps_overflow_per_day() {
        // nine interactions on day 1: six slots plus three overflow
        let mut s = full(12, 0.5);
        for _ in 0..3 {
            s.push_overflow(6, 0.7).unwrap();
        }
        assert_eq!(s.observation_count(), 15);
        assert_eq!(s.adherence_count(6, 6), 6);
        assert_eq!(s.adherence_count(6, 100), 6);
        assert_eq!(s.adherence_count(6, 4), 4);
        assert_eq!(s.adherence_count(12, 6), 12);
    }

    #[test]
    fn overflow_requires_present_slot() {
        let mut s = ObservationSeries::from_values("s", 6, &[None; 6]).unwrap();
        assert!(s.push_overflow(3, 0.2).is_err());
    }

    #[test]
    fn events_follow_temporal_order() {
        let mut s = ObservationSeries::from_values("s", 2, &[Some(0.1), None, Some(0.3), None]).unwrap();
        s.push_overflow(3, 0.9).unwrap();
        let slots: Vec<_> = s
            .events()
            .map(|e| (e.slot(), e.observation().map(|o| o.value)))
            .collect();
        assert_eq!(
            slots,
            vec![(1, Some(0.1)), (2, None), (3, Some(0.3)), (3, Some(0.9)), (4, None)]
        );
    }

    #[test]
    fn log_total_tracks_triggers() {
        let mut log = TriggerLog::new("s");
        log.push(TriggerDecision::idle(1, false));
        log.push(TriggerDecision {
            triggered: true,
            ..TriggerDecision::idle(2, true)
        });
        assert_eq!(log.total(), 1);
        assert_eq!(log.triggered_slots(), vec![2]);
    }
}
