//! Run settings shared by the subcommands. Values come from a flat TOML
//! file (`--config`) and are overridden by command-line flags.

use std::path::Path;

use anyhow::Context;
use clap::Args;
use ema_chart::evaluate::UtilitySign;
use ema_chart::ingest::{IngestConfig, TimestampRule};
use ema_chart::simulate::SimConfig;
use ema_chart::{PolicyOptions, StudyDesign};
use serde::{Deserialize, Serialize};

/// Bad invocation, reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Flat TOML file with any of the settings below; flags take precedence.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<std::path::PathBuf>,

    /// Number of simulated subjects.
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Per-slot answer probability of simulated subjects.
    #[arg(long)]
    pub chi: Option<f64>,
    /// Range of the uniform draw of both Beta shapes, as lo:hi.
    #[arg(long, value_name = "LO:HI")]
    pub param_range: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub n_days: Option<usize>,
    #[arg(long)]
    pub slots_per_day: Option<usize>,
    /// First slot at which triggering may happen.
    #[arg(long)]
    pub start_point: Option<usize>,
    /// Target number of triggers per subject.
    #[arg(long = "v")]
    pub v: Option<usize>,
    /// Trigger cap per subject, or `none`.
    #[arg(long)]
    pub cap: Option<String>,
    #[arg(long)]
    pub static_lo: Option<f64>,
    #[arg(long)]
    pub static_hi: Option<f64>,
    #[arg(long)]
    pub random_triggers: Option<usize>,

    /// Expected samples per subject for Algorithm 1.
    #[arg(long)]
    pub n_bar_prime: Option<f64>,
    /// Orientation of u1 in the rank-sum tests: negated or raw.
    #[arg(long)]
    pub utility_sign: Option<String>,
    /// Random policy draws from every slot instead of from the start point.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub random_full_window: Option<bool>,
    /// Apply the trigger cap to the static policy.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub static_cap: Option<bool>,
    /// Static policy only triggers from the start point on.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub static_from_start: Option<bool>,

    /// Offset from UTC in minutes used to find calendar days.
    #[arg(long, allow_hyphen_values = true)]
    pub utc_offset_minutes: Option<i64>,
    #[arg(long)]
    pub min_interactions: Option<usize>,
    /// How timestamps are built: auto, save-date or combine.
    #[arg(long)]
    pub timestamp_rule: Option<String>,
    #[arg(long)]
    pub delimiter: Option<char>,

    /// Worker threads; defaults to the number of processors.
    #[arg(long)]
    pub threads: Option<usize>,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f; } )*
    };
}

impl Settings {
    /// Fills unset fields from the config file, if one was given.
    pub fn resolve(mut self) -> anyhow::Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let file = read_config(&path)?;
        merge_fields!(
            self,
            file,
            subjects,
            chi,
            param_range,
            seed,
            n_days,
            slots_per_day,
            start_point,
            v,
            cap,
            static_lo,
            static_hi,
            random_triggers,
            n_bar_prime,
            utility_sign,
            random_full_window,
            static_cap,
            static_from_start,
            utc_offset_minutes,
            min_interactions,
            timestamp_rule,
            delimiter,
            threads
        );
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn design(&self) -> anyhow::Result<StudyDesign> {
        let d = StudyDesign::default();
        let cap = match self.cap.as_deref() {
            None => d.trigger_cap,
            Some("none") => None,
            Some(s) => Some(
                s.parse()
                    .map_err(|_| usage(format!("invalid cap `{s}` (expected a count or none)")))?,
            ),
        };
        let design = StudyDesign {
            n_days: self.n_days.unwrap_or(d.n_days),
            slots_per_day: self.slots_per_day.unwrap_or(d.slots_per_day),
            start_point: self.start_point.unwrap_or(d.start_point),
            target_triggers: self.v.unwrap_or(d.target_triggers),
            trigger_cap: cap,
            static_lo: self.static_lo.unwrap_or(d.static_lo),
            static_hi: self.static_hi.unwrap_or(d.static_hi),
            random_trigger_count: self.random_triggers.unwrap_or(d.random_trigger_count),
        };
        design.validate()?;
        Ok(design)
    }

    pub fn sim_config(&self) -> anyhow::Result<SimConfig> {
        let d = SimConfig::default();
        let (param_lo, param_hi) = match self.param_range.as_deref() {
            None => (d.param_lo, d.param_hi),
            Some(s) => parse_range(s)?,
        };
        let config = SimConfig {
            n_subjects: self.subjects.unwrap_or(d.n_subjects),
            adherence_rate: self.chi.unwrap_or(d.adherence_rate),
            param_lo,
            param_hi,
            design: self.design()?,
            seed: self.seed(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn policy_options(&self) -> PolicyOptions {
        let d = PolicyOptions::default();
        PolicyOptions {
            cap_static: self.static_cap.unwrap_or(d.cap_static),
            static_from_start: self.static_from_start.unwrap_or(d.static_from_start),
            random_full_window: self.random_full_window.unwrap_or(d.random_full_window),
        }
    }

    pub fn utility_sign(&self) -> anyhow::Result<UtilitySign> {
        Ok(match self.utility_sign.as_deref() {
            None => UtilitySign::default(),
            Some(s) => s.parse().map_err(|e| usage(format!("{e}")))?,
        })
    }

    pub fn ingest_config(&self) -> anyhow::Result<IngestConfig> {
        let d = IngestConfig::default();
        let delimiter = match self.delimiter {
            None => d.delimiter,
            Some(c) if c.is_ascii() => c as u8,
            Some(c) => return Err(usage(format!("delimiter must be a single ASCII character, got `{c}`"))),
        };
        let timestamp_rule = match self.timestamp_rule.as_deref() {
            None => d.timestamp_rule,
            Some(s) => s.parse::<TimestampRule>().map_err(|e| usage(format!("{e}")))?,
        };
        Ok(IngestConfig {
            delimiter,
            timestamp_rule,
            utc_offset_minutes: self.utc_offset_minutes.unwrap_or(d.utc_offset_minutes),
            min_interactions: self.min_interactions.unwrap_or(d.min_interactions),
            ..d
        })
    }
}

fn read_config(path: &Path) -> anyhow::Result<Settings> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).map_err(|e| usage(format!("parsing config {}: {e}", path.display())))
}

pub fn parse_range(s: &str) -> anyhow::Result<(f64, f64)> {
    let bad = || usage(format!("expected a range lo:hi, got `{s}`"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    Ok((lo, hi))
}
