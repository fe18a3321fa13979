mod settings;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use ema_chart::design::design_grid;
use ema_chart::evaluate::{compare_algorithms, mean_present_count, CompareConfig};
use ema_chart::ingest::{ingest, write_raw_rows};
use ema_chart::io::{read_series_csv, write_series_csv, write_trigger_logs_csv};
use ema_chart::schedulers::PolicyContext;
use ema_chart::simulate::{derive_seed, generate_cohort};
use ema_chart::{Algorithm, ObservationSeries, StudyDesign, TriggerLog};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use settings::{usage, Settings, UsageError};

#[derive(Parser)]
#[command(
    name = "ema-chart",
    version,
    about = "Adaptive control-chart triggering for EMA studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Source {
    /// Series CSV (subject_id,slot,value) to use as the cohort.
    #[arg(long, value_name = "FILE", conflicts_with = "simulate")]
    series: Option<PathBuf>,
    /// Simulate the cohort instead of reading it.
    #[arg(long)]
    simulate: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a cohort and write it as a series CSV.
    Simulate {
        #[command(flatten)]
        settings: Settings,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Clean a raw EMA export into a series CSV.
    Ingest {
        /// Raw export with user_id, save_date, question_2 and optionally save.
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        #[command(flatten)]
        settings: Settings,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run one policy over every subject and write the per-slot trigger log.
    Replay {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        algorithm: Algorithm,
        #[command(flatten)]
        settings: Settings,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run all policies, score them and compare them pairwise.
    Compare {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        settings: Settings,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write the design utilities on a grid plus the optimal set.
    DesignGrid {
        /// Series length N.
        #[arg(long = "N", default_value_t = 180)]
        n_total: usize,
        /// Grid points along the start point axis.
        #[arg(long, default_value_t = 180)]
        s_steps: usize,
        /// Grid points along the significance axis.
        #[arg(long, default_value_t = 101)]
        alpha_steps: usize,
        #[command(flatten)]
        settings: Settings,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    settings: Settings,
    resolved: Value,
    outputs: Vec<String>,
}

/// What a command produced, for the manifest.
#[derive(Default)]
struct Run {
    resolved: serde_json::Map<String, Value>,
    outputs: Vec<String>,
}

impl Run {
    fn record(&mut self, key: &str, value: impl Serialize) -> anyhow::Result<()> {
        self.resolved.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    fn create(&mut self, dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
        let path = dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(file))
    }
}

fn load_cohort(
    source: &Source,
    settings: &Settings,
    design: &StudyDesign,
    run: &mut Run,
) -> anyhow::Result<Vec<ObservationSeries>> {
    match (&source.series, source.simulate) {
        (Some(path), false) => {
            run.record("series", path.display().to_string())?;
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            read_series_csv(file, design).with_context(|| format!("reading {}", path.display()))
        }
        (None, true) => {
            let sim = settings.sim_config()?;
            run.record("simulation", &sim)?;
            Ok(generate_cohort(&sim)?)
        }
        _ => Err(usage("exactly one of --series or --simulate is required")),
    }
}

fn simulate(settings: &Settings, out: &Path, run: &mut Run) -> anyhow::Result<()> {
    let sim = settings.sim_config()?;
    run.record("simulation", &sim)?;
    let cohort = generate_cohort(&sim)?;
    write_series_csv(run.create(out, "series.csv")?, &cohort)?;
    Ok(())
}

fn ingest_cmd(input: &Path, settings: &Settings, out: &Path, run: &mut Run) -> anyhow::Result<()> {
    let design = settings.design()?;
    let config = settings.ingest_config()?;
    run.record("design", &design)?;
    run.record("ingest", &config)?;
    run.record("input", input.display().to_string())?;
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let cleaned = ingest(file, &design, &config).with_context(|| format!("ingesting {}", input.display()))?;
    write_series_csv(run.create(out, "series.csv")?, &cleaned.series)?;
    write_raw_rows(run.create(out, "cleaned.csv")?, &cleaned.records)?;
    serde_json::to_writer_pretty(run.create(out, "report.json")?, &cleaned.report)?;
    run.record("users_retained", cleaned.report.users.retained)?;
    Ok(())
}

fn replay(source: &Source, algorithm: Algorithm, settings: &Settings, out: &Path, run: &mut Run) -> anyhow::Result<()> {
    let design = settings.design()?;
    let options = settings.policy_options();
    if algorithm == Algorithm::Alg1 && source.series.is_some() && settings.n_bar_prime.is_none() {
        return Err(usage("--n-bar-prime is required to replay external data with alg1"));
    }
    let cohort = load_cohort(source, settings, &design, run)?;
    let n_bar_prime = settings
        .n_bar_prime
        .unwrap_or_else(|| mean_present_count(&cohort, &design));
    run.record("design", &design)?;
    run.record("options", &options)?;
    run.record("algorithm", algorithm)?;
    run.record("n_bar_prime", n_bar_prime)?;
    run.record("seed", settings.seed())?;
    let logs: Vec<TriggerLog> = cohort
        .par_iter()
        .map(|s| {
            let ctx = PolicyContext {
                n_bar_prime,
                seed: derive_seed(settings.seed(), s.subject_id()),
            };
            algorithm.run(s, &design, &options, ctx)
        })
        .collect::<Result<_, _>>()?;
    write_trigger_logs_csv(run.create(out, "trigger_log.csv")?, &logs)?;
    Ok(())
}

fn compare(source: &Source, settings: &Settings, out: &Path, run: &mut Run) -> anyhow::Result<()> {
    let design = settings.design()?;
    let config = CompareConfig {
        options: settings.policy_options(),
        n_bar_prime: settings.n_bar_prime,
        seed: settings.seed(),
        utility_sign: settings.utility_sign()?,
    };
    let cohort = load_cohort(source, settings, &design, run)?;
    run.record("design", &design)?;
    run.record("compare", &config)?;
    let report = compare_algorithms(&cohort, &design, &config)?;
    run.record("report", &report.header)?;
    report.write_metrics_csv(run.create(out, "metrics.csv")?)?;
    report.write_pvalues_csv(run.create(out, "pvalues.csv")?)?;
    report.write_ecdf_csv(run.create(out, "ecdf.csv")?)?;
    Ok(())
}

fn grid(
    n_total: usize,
    s_steps: usize,
    alpha_steps: usize,
    settings: &Settings,
    out: &Path,
    run: &mut Run,
) -> anyhow::Result<()> {
    let v = settings.v.unwrap_or(StudyDesign::default().target_triggers);
    if n_total < 2 || v < 1 {
        return Err(usage("--N must be at least 2 and --v at least 1"));
    }
    run.record("N", n_total)?;
    run.record("v", v)?;
    run.record("s_steps", s_steps)?;
    run.record("alpha_steps", alpha_steps)?;
    let mut w = csv::Writer::from_writer(run.create(out, "design_grid.csv")?);
    for row in design_grid(n_total, v, s_steps, alpha_steps) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn execute(command: Command) -> ExitCode {
    let (name, settings, out) = match &command {
        Command::Simulate { settings, out } => ("simulate", settings, out),
        Command::Ingest { settings, out, .. } => ("ingest", settings, out),
        Command::Replay { settings, out, .. } => ("replay", settings, out),
        Command::Compare { settings, out, .. } => ("compare", settings, out),
        Command::DesignGrid { settings, out, .. } => ("design-grid", settings, out),
    };
    let mut run = Run::default();
    let settings = settings.clone().resolve();
    let result = settings
        .as_ref()
        .map_err(|e| anyhow::anyhow!("{e:#}"))
        .and_then(|settings| {
            if let Some(threads) = settings.threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global()
                    .context("configuring the worker pool")?;
            }
            fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            match &command {
                Command::Simulate { .. } => simulate(settings, out, &mut run),
                Command::Ingest { input, .. } => ingest_cmd(input, settings, out, &mut run),
                Command::Replay { source, algorithm, .. } => replay(source, *algorithm, settings, out, &mut run),
                Command::Compare { source, .. } => compare(source, settings, out, &mut run),
                Command::DesignGrid {
                    n_total,
                    s_steps,
                    alpha_steps,
                    ..
                } => grid(*n_total, *s_steps, *alpha_steps, settings, out, &mut run),
            }
        });

    let manifest = Manifest {
        tool: "ema-chart",
        version: env!("CARGO_PKG_VERSION"),
        command: name,
        status: if result.is_ok() { "ok" } else { "error" },
        error: result.as_ref().err().map(|e| format!("{e:#}")),
        settings: settings.unwrap_or_default(),
        resolved: Value::Object(run.resolved),
        outputs: run.outputs,
    };
    let written = fs::create_dir_all(out).map_err(anyhow::Error::from).and_then(|_| {
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(out.join("manifest.json"), text)?;
        Ok(())
    });
    if let Err(e) = written {
        eprintln!("error: writing manifest: {e:#}");
    }

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    execute(cli.command)
}
