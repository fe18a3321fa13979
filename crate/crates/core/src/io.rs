//! CSV formats for observation series and trigger logs.
//!
//! Series: `subject_id,slot,value` with `NA` for a missing slot. Repeated
//! rows for one present slot carry overflow observations in arrival order.
//!
//! Trigger logs: `subject_id,slot,triggered,alpha,lower,upper`, one row per
//! series event, empty fields where a value does not apply.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::types::{Event, ObservationSeries, Slot, StudyDesign, TriggerDecision, TriggerLog};

const MISSING: &str = "NA";

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_series_csv<W: Write>(writer: W, cohort: &[ObservationSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["subject_id", "slot", "value"])?;
    for series in cohort {
        for event in series.events() {
            let slot = event.slot().to_string();
            let value = match event {
                Event::Missing { .. } => MISSING.to_string(),
                Event::Observed(o) => o.value.to_string(),
            };
            w.write_record([series.subject_id(), slot.as_str(), value.as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

enum Pending {
    Unset,
    Missing,
    Present(f64, Vec<f64>),
}

/// Reads a cohort; subjects keep their order of first appearance and
/// unlisted slots are missing.
pub fn read_series_csv<R: Read>(reader: R, design: &StudyDesign) -> Result<Vec<ObservationSeries>> {
    let n = design.total_slots();
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            location: "header".into(),
            reason: format!("missing column `{name}`"),
        })
    };
    let (c_subject, c_slot, c_value) = (col("subject_id")?, col("slot")?, col("value")?);

    let mut order: Vec<String> = Vec::new();
    let mut pending: HashMap<String, Vec<Pending>> = HashMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let err = |reason: String| Error::Parse {
            location: format!("line {line}"),
            reason,
        };
        let subject = rec.get(c_subject).unwrap_or("").to_string();
        if subject.is_empty() {
            return Err(err("empty subject_id".into()));
        }
        let slot: usize = rec
            .get(c_slot)
            .unwrap_or("")
            .parse()
            .map_err(|_| err("slot is not an integer".into()))?;
        if slot == 0 || slot > n {
            return Err(err(format!("slot {slot} outside 1..={n}")));
        }
        let raw = rec.get(c_value).unwrap_or("");
        let value = if raw == MISSING {
            None
        } else {
            let x: f64 = raw.parse().map_err(|_| err(format!("bad value `{raw}`")))?;
            if !(0.0..=1.0).contains(&x) {
                return Err(err(format!("value {x} outside [0, 1]")));
            }
            Some(x)
        };
        let slots = pending.entry(subject.clone()).or_insert_with(|| {
            order.push(subject.clone());
            (0..n).map(|_| Pending::Unset).collect()
        });
        let cell = &mut slots[slot - 1];
        match (&mut *cell, value) {
            (Pending::Unset, None) => *cell = Pending::Missing,
            (Pending::Unset, Some(x)) => *cell = Pending::Present(x, Vec::new()),
            (Pending::Present(_, extra), Some(x)) => extra.push(x),
            _ => return Err(err(format!("conflicting rows for subject {subject} slot {slot}"))),
        }
    }

    order
        .into_iter()
        .map(|subject| {
            let cells = pending.remove(&subject).expect("grouped subject");
            let mut slots = Vec::with_capacity(n);
            let mut extras = Vec::new();
            for (i, c) in cells.into_iter().enumerate() {
                match c {
                    Pending::Unset | Pending::Missing => slots.push(Slot::Missing),
                    Pending::Present(x, extra) => {
                        slots.push(Slot::Present(x));
                        extras.extend(extra.into_iter().map(|e| (i + 1, e)));
                    }
                }
            }
            let mut series = ObservationSeries::new(subject, design.slots_per_day, slots)?;
            for (slot, x) in extras {
                series.push_overflow(slot, x)?;
            }
            Ok(series)
        })
        .collect()
}

pub fn write_trigger_logs_csv<W: Write>(writer: W, logs: &[TriggerLog]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["subject_id", "slot", "triggered", "alpha", "lower", "upper"])?;
    for log in logs {
        for d in log.decisions() {
            w.write_record([
                log.subject_id.clone(),
                d.slot.to_string(),
                u8::from(d.triggered).to_string(),
                fmt_opt(d.alpha),
                fmt_opt(d.lower),
                fmt_opt(d.upper),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads trigger logs back. The `observed` flag is not part of the format
/// and is reconstructed as `true` for triggered rows or rows carrying an alpha.
pub fn read_trigger_logs_csv<R: Read>(reader: R) -> Result<Vec<TriggerLog>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut logs: Vec<TriggerLog> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let err = |reason: &str| Error::Parse {
            location: format!("line {}", i + 2),
            reason: reason.to_string(),
        };
        let opt = |k: usize| -> Result<Option<f64>> {
            match rec.get(k).unwrap_or("") {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| err("bad number")),
            }
        };
        let subject = rec.get(0).unwrap_or("");
        let slot = rec.get(1).unwrap_or("").parse().map_err(|_| err("bad slot"))?;
        let triggered = match rec.get(2).unwrap_or("") {
            "1" => true,
            "0" => false,
            _ => return Err(err("triggered must be 0 or 1")),
        };
        let alpha = opt(3)?;
        let decision = TriggerDecision {
            slot,
            observed: triggered || alpha.is_some(),
            triggered,
            alpha,
            lower: opt(4)?,
            upper: opt(5)?,
        };
        match logs.last_mut() {
            Some(log) if log.subject_id == subject => log.push(decision),
            _ => {
                let mut log = TriggerLog::new(subject);
                log.push(decision);
                logs.push(log);
            }
        }
    }
    Ok(logs)
}
