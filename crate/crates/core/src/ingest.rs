//! Cleaning pipeline for raw EMA exports with the columns `user_id`,
//! `save_date`, `question_2` and optionally `save`.
//!
//! Stages, in order:
//! 1. rows with a missing projected value are dropped;
//! 2. exact duplicate rows (after projection) are dropped;
//! 3. rows whose timestamp or severity cannot be parsed are rejected;
//! 4. of several rows sharing a user and timestamp only the first-listed is kept;
//! 5. rows after the first `n_days` calendar days of a user are dropped;
//! 6. users with fewer than `min_interactions` remaining rows are dropped.
//!
//! Remaining interactions fill the slots of their calendar day in arrival
//! order. Interactions beyond the slots of a day become overflow
//! observations of the day's last slot.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ObservationSeries, Slot, StudyDesign};

/// How `save_date` and `save` combine into a timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TimestampRule {
    /// `save` if it holds a full date-time, else `save_date`'s date plus
    /// `save`'s time, else `save_date` alone.
    #[default]
    Auto,
    /// `save_date` holds the full date-time (or a bare date); `save` is ignored.
    SaveDate,
    /// Date from `save_date`, time of day from `save`.
    Combine,
}

impl std::str::FromStr for TimestampRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "save-date" => Ok(Self::SaveDate),
            "combine" => Ok(Self::Combine),
            _ => Err(Error::Parse {
                location: "timestamp-rule".into(),
                reason: format!("expected auto, save-date or combine, got `{s}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub delimiter: u8,
    pub datetime_format: String,
    pub date_format: String,
    pub time_format: String,
    pub timestamp_rule: TimestampRule,
    /// Offset from UTC applied before taking calendar dates.
    pub utc_offset_minutes: i64,
    pub min_interactions: usize,
    pub missing_tokens: Vec<String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            delimiter: b',',
            datetime_format: "%Y-%m-%d %H:%M:%S".into(),
            date_format: "%Y-%m-%d".into(),
            time_format: "%H:%M:%S".into(),
            timestamp_rule: TimestampRule::Auto,
            utc_offset_minutes: 0,
            min_interactions: 6,
            missing_tokens: vec!["".into(), "NA".into(), "NaN".into(), "nan".into(), "null".into()],
        }
    }
}

/// A row after column projection, values kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawRow {
    pub line: usize,
    pub user_id: String,
    pub save: Option<String>,
    pub save_date: String,
    pub question_2: String,
}

impl RawRow {
    fn key(&self) -> (&str, Option<&str>, &str, &str) {
        (&self.user_id, self.save.as_deref(), &self.save_date, &self.question_2)
    }
}

/// A parsed interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub user_id: String,
    pub timestamp: NaiveDateTime,
    pub severity: f64,
    pub row: RawRow,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reject {
    pub line: usize,
    pub user_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RowCounts {
    pub input: usize,
    pub incomplete: usize,
    pub duplicate: usize,
    pub malformed: usize,
    pub same_time: usize,
    pub out_of_window: usize,
    pub retained: usize,
    /// Retained interactions stored as overflow (beyond the day's slots).
    pub overflow: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct UserCounts {
    pub input: usize,
    pub dropped_incomplete: usize,
    pub dropped_malformed: usize,
    pub dropped_too_few: usize,
    pub retained: usize,
    /// Retained users that lost no interaction to the day window.
    pub fully_within_window: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CleaningReport {
    pub rows: RowCounts,
    pub users: UserCounts,
    pub rejects: Vec<Reject>,
}

#[derive(Debug, Clone)]
pub struct CleanOutput {
    pub series: Vec<ObservationSeries>,
    /// Retained rows, grouped by user in time order.
    pub records: Vec<RawRow>,
    pub report: CleaningReport,
}

struct Columns {
    user_id: usize,
    save: Option<usize>,
    save_date: usize,
    question_2: usize,
}

/// Reads and projects the raw export.
pub fn read_raw_rows<R: Read>(reader: R, config: &IngestConfig) -> Result<Vec<RawRow>> {
    let mut r = csv::ReaderBuilder::new()
        .delimiter(config.delimiter)
        .flexible(true)
        .from_reader(reader);
    let headers = r.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let need = |name: &str| {
        find(name).ok_or_else(|| Error::Parse {
            location: "header".into(),
            reason: format!("missing column `{name}`"),
        })
    };
    let cols = Columns {
        user_id: need("user_id")?,
        save: match config.timestamp_rule {
            TimestampRule::SaveDate => None,
            TimestampRule::Combine => Some(need("save")?),
            TimestampRule::Auto => find("save"),
        },
        save_date: need("save_date")?,
        question_2: need("question_2")?,
    };
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let get = |k: usize| rec.get(k).unwrap_or("").trim().to_string();
        rows.push(RawRow {
            line: i + 2,
            user_id: get(cols.user_id),
            save: cols.save.map(get),
            save_date: get(cols.save_date),
            question_2: get(cols.question_2),
        });
    }
    Ok(rows)
}

/// Writes rows back in the raw schema.
pub fn write_raw_rows<W: Write>(writer: W, rows: &[RawRow]) -> Result<()> {
    let with_save = rows.iter().any(|r| r.save.is_some());
    let mut w = csv::Writer::from_writer(writer);
    if with_save {
        w.write_record(["user_id", "save", "save_date", "question_2"])?;
    } else {
        w.write_record(["user_id", "save_date", "question_2"])?;
    }
    for r in rows {
        if with_save {
            w.write_record([&r.user_id, r.save.as_deref().unwrap_or(""), &r.save_date, &r.question_2])?;
        } else {
            w.write_record([&r.user_id, &r.save_date, &r.question_2])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_timestamp(row: &RawRow, config: &IngestConfig) -> std::result::Result<NaiveDateTime, String> {
    let datetime = |s: &str| NaiveDateTime::parse_from_str(s, &config.datetime_format).ok();
    let date = |s: &str| {
        datetime(s)
            .map(|dt| dt.date())
            .or_else(|| NaiveDate::parse_from_str(s, &config.date_format).ok())
    };
    let time = |s: &str| NaiveTime::parse_from_str(s, &config.time_format).ok();
    let from_save_date = || {
        datetime(&row.save_date)
            .or_else(|| date(&row.save_date).map(|d| d.and_time(NaiveTime::MIN)))
            .ok_or_else(|| format!("unparseable save_date `{}`", row.save_date))
    };
    let combine = |save: &str| match (date(&row.save_date), time(save)) {
        (Some(d), Some(t)) => Ok(d.and_time(t)),
        (None, _) => Err(format!("unparseable save_date `{}`", row.save_date)),
        (_, None) => Err(format!("unparseable save `{save}`")),
    };
    match (config.timestamp_rule, row.save.as_deref()) {
        (TimestampRule::SaveDate, _) | (TimestampRule::Auto, None) => from_save_date(),
        (TimestampRule::Combine, Some(save)) => combine(save),
        (TimestampRule::Combine, None) => Err("missing save column".into()),
        (TimestampRule::Auto, Some(save)) => match datetime(save) {
            Some(dt) => Ok(dt),
            None => combine(save),
        },
    }
}

fn parse_severity(raw: &str) -> std::result::Result<f64, String> {
    match raw.parse::<f64>() {
        Ok(x) if (0.0..=1.0).contains(&x) => Ok(x),
        Ok(x) => Err(format!("severity {x} outside [0, 1]")),
        Err(_) => Err(format!("unparseable severity `{raw}`")),
    }
}

/// Runs the full pipeline on projected rows.
pub fn clean_and_slot(rows: &[RawRow], design: &StudyDesign, config: &IngestConfig) -> Result<CleanOutput> {
    design.validate()?;
    let mut report = CleaningReport::default();
    report.rows.input = rows.len();

    let mut user_order: Vec<&str> = Vec::new();
    let mut seen_users: HashSet<&str> = HashSet::new();
    for r in rows {
        if !r.user_id.is_empty() && seen_users.insert(&r.user_id) {
            user_order.push(&r.user_id);
        }
    }
    report.users.input = user_order.len();

    let is_missing = |s: &str| config.missing_tokens.iter().any(|m| m == s);
    let complete: Vec<&RawRow> = rows
        .iter()
        .filter(|r| {
            !(is_missing(&r.user_id)
                || is_missing(&r.save_date)
                || is_missing(&r.question_2)
                || r.save.as_deref().is_some_and(is_missing))
        })
        .collect();
    report.rows.incomplete = rows.len() - complete.len();
    let users_after_complete: HashSet<&str> = complete.iter().map(|r| r.user_id.as_str()).collect();
    report.users.dropped_incomplete = report.users.input - users_after_complete.len();

    let mut seen_rows = HashSet::new();
    let unique: Vec<&RawRow> = complete.into_iter().filter(|r| seen_rows.insert(r.key())).collect();
    report.rows.duplicate = rows.len() - report.rows.incomplete - unique.len();

    let mut parsed: Vec<RawRecord> = Vec::with_capacity(unique.len());
    for r in unique {
        let outcome = parse_timestamp(r, config).and_then(|ts| parse_severity(&r.question_2).map(|x| (ts, x)));
        match outcome {
            Ok((timestamp, severity)) => parsed.push(RawRecord {
                user_id: r.user_id.clone(),
                timestamp,
                severity,
                row: r.clone(),
            }),
            Err(reason) => report.rejects.push(Reject {
                line: r.line,
                user_id: r.user_id.clone(),
                reason,
            }),
        }
    }
    report.rows.malformed = report.rejects.len();
    let users_after_parse: HashSet<&str> = parsed.iter().map(|r| r.user_id.as_str()).collect();
    report.users.dropped_malformed = users_after_complete.len() - users_after_parse.len();

    let mut by_user: HashMap<&str, Vec<RawRecord>> = HashMap::new();
    let mut seen_times = HashSet::new();
    for rec in &parsed {
        if seen_times.insert((rec.user_id.as_str(), rec.timestamp)) {
            by_user.entry(rec.user_id.as_str()).or_default().push(rec.clone());
        } else {
            report.rows.same_time += 1;
        }
    }

    let offset = Duration::minutes(config.utc_offset_minutes);
    let mut series = Vec::new();
    let mut records = Vec::new();
    for user in user_order {
        let Some(mut recs) = by_user.remove(user) else {
            continue;
        };
        recs.sort_by_key(|r| r.timestamp);
        let first_day = (recs[0].timestamp + offset).date();
        let before = recs.len();
        let day_index = |r: &RawRecord| ((r.timestamp + offset).date() - first_day).num_days() as usize + 1;
        recs.retain(|r| day_index(r) <= design.n_days);
        let lost = before - recs.len();
        report.rows.out_of_window += lost;
        if recs.len() < config.min_interactions {
            report.users.dropped_too_few += 1;
            continue;
        }
        if lost == 0 {
            report.users.fully_within_window += 1;
        }

        let mut slots = vec![Slot::Missing; design.total_slots()];
        let mut overflow = Vec::new();
        let mut day = 0;
        let mut in_day = 0;
        for r in &recs {
            let d = day_index(r);
            if d != day {
                day = d;
                in_day = 0;
            }
            in_day += 1;
            let day_start = (d - 1) * design.slots_per_day;
            if in_day <= design.slots_per_day {
                slots[day_start + in_day - 1] = Slot::Present(r.severity);
            } else {
                overflow.push((day_start + design.slots_per_day, r.severity));
            }
        }
        let mut s = ObservationSeries::new(user, design.slots_per_day, slots)?;
        report.rows.overflow += overflow.len();
        for (slot, x) in overflow {
            s.push_overflow(slot, x)?;
        }
        report.rows.retained += recs.len();
        report.users.retained += 1;
        records.extend(recs.into_iter().map(|r| r.row));
        series.push(s);
    }

    Ok(CleanOutput {
        series,
        records,
        report,
    })
}

/// Reads a raw export and cleans it.
pub fn ingest<R: Read>(reader: R, design: &StudyDesign, config: &IngestConfig) -> Result<CleanOutput> {
    let rows = read_raw_rows(reader, config)?;
    clean_and_slot(&rows, design, config)
}
