//! Scoring trigger logs against a per-subject ground truth and comparing
//! policies across a cohort.
//!
//! The ground truth of a subject is the two-sided region obtained from a
//! Beta fit on all of its data, at the significance level implied by its
//! realized adherence. Observations outside that interval are positives.

pub mod ecdf;
pub mod rank_sum;

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beta::{fit_beta_mom, BetaParams, ControlLimits};
use crate::design::optimal_alpha;
use crate::error::{Error, Result};
use crate::schedulers::{Algorithm, PolicyContext, PolicyOptions};
use crate::simulate::derive_seed;
use crate::types::{Event, ObservationSeries, StudyDesign, TriggerLog};

pub use ecdf::ecdf;
pub use rank_sum::{mann_whitney_greater, rank_sum_greater, RankSumResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Extreme,
    Normal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub params: BetaParams,
    pub alpha: f64,
    /// The interval of normal values, when `0 < alpha < 1`.
    pub interval: Option<ControlLimits>,
    /// One entry per series event; `None` for missing slots and slots
    /// before the start point.
    pub labels: Vec<Option<Label>>,
}

impl GroundTruth {
    pub fn extreme_count(&self) -> usize {
        self.labels.iter().filter(|l| **l == Some(Label::Extreme)).count()
    }
}

pub fn compute_ground_truth(series: &ObservationSeries, design: &StudyDesign) -> Result<GroundTruth> {
    let params = fit_beta_mom(&series.values())?;
    let realized = series.adherence_count(series.total_slots(), design.slots_per_day) as f64;
    let alpha = optimal_alpha(realized, design.start_point, design.target_triggers);
    let interval = if alpha > 0.0 && alpha < 1.0 {
        Some(ControlLimits::new(&params, alpha)?)
    } else {
        None
    };
    let labels = series
        .events()
        .map(|e| match e {
            Event::Observed(o) if o.slot >= design.start_point => {
                let extreme = match interval {
                    Some(limits) => limits.is_outside(o.value),
                    None => alpha >= 1.0,
                };
                Some(if extreme { Label::Extreme } else { Label::Normal })
            }
            _ => None,
        })
        .collect();
    Ok(GroundTruth {
        params,
        alpha,
        interval,
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubjectMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Undefined when there are no positives and no triggers in the window.
    pub f1: Option<f64>,
    /// (trigger_total - v)^2
    pub u1: f64,
    pub trigger_total: usize,
}

pub fn f1_score(tp: usize, fp: usize, fn_: usize) -> Option<f64> {
    let denom = 2 * tp + fp + fn_;
    (denom > 0).then(|| (2 * tp) as f64 / denom as f64)
}

pub fn score_subject(truth: &GroundTruth, log: &TriggerLog, design: &StudyDesign) -> Result<SubjectMetrics> {
    if truth.labels.len() != log.decisions().len() {
        return Err(Error::InvalidSeries {
            subject: log.subject_id.clone(),
            reason: format!(
                "trigger log has {} decisions, ground truth {} labels",
                log.decisions().len(),
                truth.labels.len()
            ),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (label, d) in truth.labels.iter().zip(log.decisions()) {
        match (label, d.triggered) {
            (Some(Label::Extreme), true) => tp += 1,
            (Some(Label::Normal), true) => fp += 1,
            (Some(Label::Normal), false) => tn += 1,
            (Some(Label::Extreme), false) => fn_ += 1,
            (None, _) => {}
        }
    }
    let deviation = log.total() as f64 - design.target_triggers as f64;
    Ok(SubjectMetrics {
        tp,
        fp,
        tn,
        fn_,
        f1: f1_score(tp, fp, fn_),
        u1: deviation * deviation,
        trigger_total: log.total(),
    })
}

/// Orientation of u1 in the rank-sum comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UtilitySign {
    /// Test on -u1 so that "greater" means trigger counts closer to the target.
    #[default]
    Negated,
    /// Test on u1 as defined.
    Raw,
}

impl std::str::FromStr for UtilitySign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negated" => Ok(Self::Negated),
            "raw" => Ok(Self::Raw),
            _ => Err(Error::Parse {
                location: "utility-sign".into(),
                reason: format!("expected `negated` or `raw`, got `{s}`"),
            }),
        }
    }
}

/// The six one-sided orderings, as (greater, lesser).
pub const PAIRS: [(Algorithm, Algorithm); 6] = [
    (Algorithm::Static, Algorithm::Random),
    (Algorithm::Alg1, Algorithm::Random),
    (Algorithm::Alg1, Algorithm::Static),
    (Algorithm::Alg2, Algorithm::Random),
    (Algorithm::Alg2, Algorithm::Static),
    (Algorithm::Alg2, Algorithm::Alg1),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    F1,
    U1,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::F1 => "f1",
            Metric::U1 => "u1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub options: PolicyOptions,
    /// Expected samples per subject for the fixed chart; cohort mean when `None`.
    pub n_bar_prime: Option<f64>,
    pub seed: u64,
    pub utility_sign: UtilitySign,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            options: PolicyOptions::default(),
            n_bar_prime: None,
            seed: 0,
            utility_sign: UtilitySign::Negated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub subject_id: String,
    pub algorithm: Algorithm,
    #[serde(flatten)]
    pub metrics: SubjectMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PValueRow {
    pub pair: String,
    pub metric: Metric,
    /// `None` when the test was infeasible (an empty sample).
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EcdfRow {
    pub algorithm: Algorithm,
    pub metric: Metric,
    pub x: f64,
    #[serde(rename = "F")]
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportHeader {
    pub subjects: usize,
    /// Decisions are scored on present observations at slots >= this.
    pub scoring_window_start: usize,
    pub random_window_start: usize,
    pub static_window_start: usize,
    pub utility_sign: UtilitySign,
    pub n_bar_prime: f64,
    pub fixed_alpha: f64,
    /// Per algorithm, subjects whose F1 is undefined (excluded from tests).
    pub f1_undefined: BTreeMap<Algorithm, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub header: ReportHeader,
    pub metrics: Vec<MetricsRow>,
    pub pvalues: Vec<PValueRow>,
    pub ecdf: Vec<EcdfRow>,
}

/// Mean capped adherence count of a cohort.
pub fn mean_present_count(cohort: &[ObservationSeries], design: &StudyDesign) -> f64 {
    if cohort.is_empty() {
        return 0.0;
    }
    let total: usize = cohort
        .iter()
        .map(|s| s.adherence_count(s.total_slots(), design.slots_per_day))
        .sum();
    total as f64 / cohort.len() as f64
}

/// Per-subject logs and metrics of all four policies.
#[derive(Debug, Clone)]
pub struct SubjectRun {
    pub truth: GroundTruth,
    pub logs: BTreeMap<Algorithm, TriggerLog>,
    pub metrics: BTreeMap<Algorithm, SubjectMetrics>,
}

pub fn run_subject(
    series: &ObservationSeries,
    design: &StudyDesign,
    options: &PolicyOptions,
    n_bar_prime: f64,
    seed: u64,
) -> Result<SubjectRun> {
    let attribute = |e: Error| match e {
        Error::Subject { .. } => e,
        other => other.for_subject(series.subject_id()),
    };
    let truth = compute_ground_truth(series, design).map_err(attribute)?;
    let ctx = PolicyContext {
        n_bar_prime,
        seed: derive_seed(seed, series.subject_id()),
    };
    let mut logs = BTreeMap::new();
    let mut metrics = BTreeMap::new();
    for alg in Algorithm::ALL {
        let log = alg.run(series, design, options, ctx).map_err(attribute)?;
        metrics.insert(alg, score_subject(&truth, &log, design).map_err(attribute)?);
        logs.insert(alg, log);
    }
    Ok(SubjectRun { truth, logs, metrics })
}

fn metric_sample(
    rows: &[BTreeMap<Algorithm, SubjectMetrics>],
    alg: Algorithm,
    metric: Metric,
    sign: UtilitySign,
) -> Vec<f64> {
    rows.iter()
        .map(|m| {
            let m = &m[&alg];
            match metric {
                Metric::F1 => m.f1.unwrap_or(f64::NAN),
                Metric::U1 => match sign {
                    UtilitySign::Negated => -m.u1,
                    UtilitySign::Raw => m.u1,
                },
            }
        })
        .collect()
}

/// Runs every policy on every subject, scores them and compares the
/// per-subject F1 and u1 distributions pairwise.
pub fn compare_algorithms(
    cohort: &[ObservationSeries],
    design: &StudyDesign,
    config: &CompareConfig,
) -> Result<EvaluationReport> {
    if cohort.is_empty() {
        return Err(Error::TestInfeasible("empty cohort".into()));
    }
    design.validate()?;
    let n_bar_prime = config.n_bar_prime.unwrap_or_else(|| mean_present_count(cohort, design));
    let per_subject: Vec<BTreeMap<Algorithm, SubjectMetrics>> = cohort
        .par_iter()
        .map(|s| run_subject(s, design, &config.options, n_bar_prime, config.seed).map(|r| r.metrics))
        .collect::<Result<_>>()?;

    let metrics = cohort
        .iter()
        .zip(&per_subject)
        .flat_map(|(s, m)| {
            m.iter().map(|(alg, metrics)| MetricsRow {
                subject_id: s.subject_id().to_string(),
                algorithm: *alg,
                metrics: *metrics,
            })
        })
        .collect();

    let mut pvalues = Vec::new();
    for metric in [Metric::F1, Metric::U1] {
        for (greater, lesser) in PAIRS {
            let a = metric_sample(&per_subject, greater, metric, config.utility_sign);
            let b = metric_sample(&per_subject, lesser, metric, config.utility_sign);
            pvalues.push(PValueRow {
                pair: format!("{greater}>{lesser}"),
                metric,
                p: mann_whitney_greater(&a, &b).ok(),
            });
        }
    }

    let mut ecdf_rows = Vec::new();
    for alg in Algorithm::ALL {
        for metric in [Metric::F1, Metric::U1] {
            let values = metric_sample(&per_subject, alg, metric, UtilitySign::Raw);
            ecdf_rows.extend(ecdf(&values).into_iter().map(|(x, f)| EcdfRow {
                algorithm: alg,
                metric,
                x,
                f,
            }));
        }
    }

    let f1_undefined = Algorithm::ALL
        .into_iter()
        .map(|alg| (alg, per_subject.iter().filter(|m| m[&alg].f1.is_none()).count()))
        .collect();
    Ok(EvaluationReport {
        header: ReportHeader {
            subjects: cohort.len(),
            scoring_window_start: design.start_point,
            random_window_start: if config.options.random_full_window {
                1
            } else {
                design.start_point
            },
            static_window_start: if config.options.static_from_start {
                design.start_point
            } else {
                1
            },
            utility_sign: config.utility_sign,
            n_bar_prime,
            fixed_alpha: optimal_alpha(n_bar_prime, design.start_point, design.target_triggers),
            f1_undefined,
        },
        metrics,
        pvalues,
        ecdf: ecdf_rows,
    })
}

impl EvaluationReport {
    pub fn p_value(&self, pair: &str, metric: Metric) -> Option<f64> {
        self.pvalues
            .iter()
            .find(|r| r.pair == pair && r.metric == metric)
            .and_then(|r| r.p)
    }

    pub fn write_metrics_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "subject_id",
            "algorithm",
            "tp",
            "fp",
            "tn",
            "fn",
            "f1",
            "u1",
            "triggers",
        ])?;
        for r in &self.metrics {
            let m = &r.metrics;
            w.write_record([
                r.subject_id.clone(),
                r.algorithm.to_string(),
                m.tp.to_string(),
                m.fp.to_string(),
                m.tn.to_string(),
                m.fn_.to_string(),
                m.f1.map(|f| f.to_string()).unwrap_or_default(),
                m.u1.to_string(),
                m.trigger_total.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_pvalues_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["pair", "metric", "p"])?;
        for r in &self.pvalues {
            w.write_record([
                r.pair.clone(),
                r.metric.name().to_string(),
                r.p.map(|p| format!("{p:e}")).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_ecdf_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["algorithm", "metric", "x", "F"])?;
        for r in &self.ecdf {
            w.write_record([
                r.algorithm.to_string(),
                r.metric.name().to_string(),
                r.x.to_string(),
                r.f.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::TriggerDecision;

    fn design() -> StudyDesign {
        StudyDesign::default()
    }

    fn constant(id: &str, x: f64) -> ObservationSeries {
        ObservationSeries::from_values(id, 6, &[Some(x); 180]).unwrap()
    }

    #[test]
    fn f1_formula() {
        assert_eq!(f1_score(3, 1, 1), Some(0.75));
        assert_eq!(f1_score(0, 0, 4), Some(0.0));
        assert_eq!(f1_score(0, 0, 0), None);
        assert_eq!(f1_score(4, 0, 0), Some(1.0));
    }

    #[test]
    fn constant_series_has_no_extremes() {
        let truth = compute_ground_truth(&constant("c", 0.5), &design()).unwrap();
        assert!(truth.params.dummy_augmented);
        assert_eq!(truth.extreme_count(), 0);
        assert_eq!(truth.alpha, 4.0 / 175.0);
    }

    #[test]
    fn low_adherence_labels_everything_extreme() {
        // N' = 8: window 3 <= v -> alpha 1
        let mut v = vec![None; 180];
        for (i, t) in [0, 10, 20, 30, 40, 50, 60, 70].iter().enumerate() {
            v[*t] = Some(0.1 * (i + 1) as f64);
        }
        let s = ObservationSeries::from_values("s", 6, &v).unwrap();
        let truth = compute_ground_truth(&s, &design()).unwrap();
        assert_eq!(truth.alpha, 1.0);
        assert!(truth.interval.is_none());
        // slot 1 precedes the start point
        assert_eq!(truth.extreme_count(), 7);
    }

    #[test]
    fn perfect_log_scores_one() {
        let values: Vec<_> = (0..180)
            .map(|i| Some(0.3 + 0.4 * ((i * 7919) % 180) as f64 / 180.0))
            .collect();
        let mut values = values;
        for t in [20, 60, 100, 140] {
            values[t] = Some(if t % 40 == 20 { 0.001 } else { 0.999 });
        }
        let s = ObservationSeries::from_values("s", 6, &values).unwrap();
        let d = design();
        let truth = compute_ground_truth(&s, &d).unwrap();
        assert_eq!(truth.extreme_count(), 4);
        let mut log = TriggerLog::new("s");
        for (e, l) in s.events().zip(&truth.labels) {
            log.push(TriggerDecision {
                triggered: *l == Some(Label::Extreme),
                ..TriggerDecision::idle(e.slot(), e.observation().is_some())
            });
        }
        let m = score_subject(&truth, &log, &d).unwrap();
        assert_eq!(m.f1, Some(1.0));
        assert_eq!(m.u1, 0.0);
        assert_eq!(m.tp + m.fp + m.tn + m.fn_, 175);
    }

    #[test]
    fn misaligned_log_rejected() {
        let s = constant("c", 0.5);
        let truth = compute_ground_truth(&s, &design()).unwrap();
        assert!(score_subject(&truth, &TriggerLog::new("c"), &design()).is_err());
    }

    #[test]
    fn ground_truth_needs_two_observations() {
        let mut v = vec![None; 180];
        v[7] = Some(0.5);
        let s = ObservationSeries::from_values("s", 6, &v).unwrap();
        assert!(compute_ground_truth(&s, &design()).is_err());
    }

    #[test]
    fn extreme_free_cohort_gives_neutral_u1_tests() {
        let cohort: Vec<_> = (0..30).map(|i| constant(&format!("c{i}"), 0.5)).collect();
        let report = compare_algorithms(&cohort, &design(), &CompareConfig::default()).unwrap();
        for row in report.metrics.iter().filter(|r| r.algorithm != Algorithm::Random) {
            assert_eq!(row.metrics.trigger_total, 0);
        }
        assert_eq!(report.p_value("alg1>static", Metric::U1), Some(0.5));
        assert_eq!(report.p_value("alg2>alg1", Metric::U1), Some(0.5));
        // F1 is undefined for every non-triggering subject, so those tests are infeasible
        assert_eq!(report.p_value("alg2>alg1", Metric::F1), None);
        assert_eq!(report.header.f1_undefined[&Algorithm::Alg1], 30);
    }

    #[test]
    fn ecdf_rows_are_steps_to_one() {
        let cohort: Vec<_> = (0..10)
            .map(|i| constant(&format!("c{i}"), 0.2 + 0.05 * i as f64))
            .collect();
        let report = compare_algorithms(&cohort, &design(), &CompareConfig::default()).unwrap();
        for alg in Algorithm::ALL {
            let u1: Vec<_> = report
                .ecdf
                .iter()
                .filter(|r| r.algorithm == alg && r.metric == Metric::U1)
                .collect();
            assert!(u1.windows(2).all(|w| w[0].x < w[1].x && w[0].f < w[1].f));
            assert_eq!(u1.last().unwrap().f, 1.0);
        }
    }

    #[test]
    fn empty_cohort_rejected() {
        assert!(compare_algorithms(&[], &design(), &CompareConfig::default()).is_err());
    }
}
