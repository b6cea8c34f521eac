use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use annocamp::campaign::{
    build_verification_queue, ingest, known_positive_questions, pack_hits, qc_flag, read_worker_stats_csv,
    run_experiment, simulate_campaign, write_atomic, write_hits_jsonl, write_verification_jsonl,
    write_worker_stats_csv, Blacklist, BlacklistEntry, Experiment, ExperimentSettings, PackOptions, QcThresholds,
    StatsAccumulator,
};
use annocamp::config::Config;
use annocamp::costmodel::{fit_time_model, read_timing_csv};
use annocamp::evaluate::{
    aggregate, metrics, timing_summary, write_metrics_csv, BinaryLabels, MetricsRow,
};
use annocamp::planner::{enumerate_plans, optimize_over, default_k_values, budget_iterations, write_plans_csv, BudgetConstraint};
use annocamp::taxonomy::{LabelId, Taxonomy};
use annocamp::workersim::{
    read_events_csv, read_truth_jsonl, sample_worker_pool, synthesize_truth, write_events_csv, write_truth_jsonl,
    ModifierSet, Simulator, SynthOptions, VideoTruth,
};

#[derive(Parser)]
#[command(name = "annocamp", version, about = "Plan, simulate and evaluate multi-label video annotation campaigns")]
struct Cli {
    /// Master seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the linear task-time model to a timing CSV.
    FitTime {
        /// CSV with `questions,seconds[,video_seconds]`.
        timing: PathBuf,
    },
    /// Derive the worker model from the configured anchors.
    Calibrate,
    /// Pack one iteration of tasks into HIT specifications (JSON lines).
    PackHits(PackArgs),
    /// Simulate annotation events for a set of videos.
    Simulate(SimulateArgs),
    /// Validate an event CSV and report per-worker statistics.
    Ingest(IngestArgs),
    /// Union (or thresholded) label matrix from events.
    Aggregate(AggregateArgs),
    /// Precision, recall and timing of predicted labels against truth.
    Metrics(MetricsArgs),
    /// Best plan under the configured budget, or every feasible plan.
    Plan(PlanArgs),
    /// Advisory outlier flags from worker statistics.
    Qc(QcArgs),
    /// Append a worker to the blacklist log.
    Blacklist(BlacklistArgs),
    /// Verification tasks for unverified predicted positives.
    VerifyQueue(VerifyArgs),
    /// Regenerate one experiment's CSV.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct PackArgs {
    /// Ground truth or video list as JSON lines (only ids are used, plus
    /// positives when no --known file is given).
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, short)]
    k: usize,
    #[arg(long)]
    positive_bias: bool,
    #[arg(long)]
    grouping: bool,
    /// Known positives as `video,label` CSV for gold duplicates.
    #[arg(long)]
    known: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Ground truth JSON lines; synthesized when omitted.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Number of synthetic videos.
    #[arg(long, default_value_t = 1000)]
    videos: usize,
    /// Where to write synthesized truth.
    #[arg(long)]
    truth_out: Option<PathBuf>,
    #[arg(long, short, default_value_t = 52)]
    k: usize,
    #[arg(long, short = 'n', default_value_t = 1)]
    iterations: u32,
    /// Modifier set such as `none` or `positive_bias+grouping`; defaults to
    /// the configured set.
    #[arg(long)]
    modifiers: Option<ModifierSet>,
    #[arg(long, default_value_t = 100)]
    workers: usize,
    #[arg(long, default_value_t = 0.0)]
    spammer_fraction: f64,
    /// Blacklist log; listed workers receive no tasks.
    #[arg(long)]
    blacklist: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    events: PathBuf,
    /// Restrict videos to those in this truth file.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Where to write per-worker statistics CSV.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct AggregateArgs {
    events: PathBuf,
    /// Truth or video list JSON lines fixing the video set.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = 1)]
    threshold: u32,
}

#[derive(Args)]
struct MetricsArgs {
    /// Predicted labels as `video,label` CSV.
    labels: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Events for timing columns.
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long, default_value = "custom")]
    experiment: String,
    #[arg(long, short, default_value_t = 52)]
    k: usize,
    #[arg(long, short = 'n', default_value_t = 1)]
    iterations: u32,
    #[arg(long, default_value = "none")]
    modifiers: ModifierSet,
}

#[derive(Args)]
struct PlanArgs {
    /// Minutes per video; overrides the configuration.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    min_precision: Option<f64>,
    /// Interface sizes to consider (comma separated); the measured anchors
    /// by default.
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    /// Emit every feasible plan as CSV instead of the optimum as JSON.
    #[arg(long)]
    all: bool,
}

#[derive(Args)]
struct QcArgs {
    /// Worker statistics CSV from `ingest --stats`.
    stats: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    z: f64,
}

#[derive(Args)]
struct BlacklistArgs {
    /// Append-only blacklist log.
    #[arg(long)]
    file: PathBuf,
    #[arg(long)]
    worker: String,
    #[arg(long)]
    reason: String,
}

#[derive(Args)]
struct VerifyArgs {
    /// Predicted labels as `video,label` CSV.
    labels: PathBuf,
    /// Already verified pairs as `video,label` CSV.
    #[arg(long)]
    verified: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    name: String,
    #[arg(long, default_value_t = ExperimentSettings::default().videos)]
    videos: usize,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, bytes)?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn read_truth(path: &Path, tax: &Taxonomy) -> Result<Vec<VideoTruth>> {
    read_truth_jsonl(BufReader::new(open(path)?), tax).with_context(|| format!("reading {}", path.display()))
}

fn read_pairs(path: &Path) -> Result<Vec<(String, LabelId)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let label: u32 = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .with_context(|| format!("{}: line {}: expected video,label", path.display(), i + 2))?;
        out.push((rec[0].to_string(), LabelId(label)));
    }
    Ok(out)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let out = cli.out.as_deref();
    match cli.command {
        Command::FitTime { timing } => {
            let obs = read_timing_csv(open(&timing)?)?;
            let model = fit_time_model(&obs)?;
            emit(out, format!("{}\n", serde_json::to_string_pretty(&model)?).as_bytes())
        }
        Command::Calibrate => {
            let tax = cfg.taxonomy()?;
            let b = cfg.behavior(tax.question_count())?;
            emit(out, format!("{}\n", serde_json::to_string_pretty(&b)?).as_bytes())
        }
        Command::PackHits(a) => {
            let tax = cfg.taxonomy()?;
            let truths = read_truth(&a.truth, &tax)?;
            let videos: Vec<String> = truths.iter().map(|t| t.video.clone()).collect();
            let known = match &a.known {
                Some(p) => {
                    let pairs = read_pairs(p)?;
                    known_positive_questions(&tax, pairs.iter().map(|(v, l)| (v.as_str(), *l)))
                }
                None => known_positive_questions(
                    &tax,
                    truths.iter().flat_map(|t| t.labels.iter().map(move |l| (t.video.as_str(), *l))),
                ),
            };
            let plan = tax.partition_questions(a.k, cli.seed)?;
            let opts = PackOptions {
                positive_bias: a.positive_bias || cfg.modifiers.positive_bias,
                grouping: a.grouping || cfg.modifiers.grouping,
                mean_positives: cfg.mean_positives,
            };
            let hits = pack_hits(&videos, &plan, &cfg.time_model, &cfg.budget, &opts, &known, cli.seed)?;
            let mut buf = Vec::new();
            write_hits_jsonl(&mut buf, &hits)?;
            emit(out, &buf)
        }
        Command::Simulate(a) => {
            let tax = cfg.taxonomy()?;
            let b = cfg.behavior(tax.question_count())?;
            let truths = match &a.truth {
                Some(p) => read_truth(p, &tax)?,
                None => {
                    let opts = SynthOptions {
                        mean_positives: cfg.mean_positives,
                        ..SynthOptions::default()
                    };
                    synthesize_truth(&tax, a.videos, &opts, cli.seed)?
                }
            };
            if let Some(p) = &a.truth_out {
                let mut buf = Vec::new();
                write_truth_jsonl(&mut buf, &truths)?;
                write_atomic(p, &buf)?;
            }
            let blacklist = match &a.blacklist {
                Some(p) => Blacklist::load(p)?,
                None => Blacklist::new(),
            };
            let pool = sample_worker_pool(a.workers, a.spammer_fraction, cli.seed)?;
            let workers: Vec<_> = blacklist.eligible(&pool).into_iter().cloned().collect();
            if workers.is_empty() {
                bail!("every worker in the pool is blacklisted");
            }
            let sim = Simulator::with_clock(&tax, &b, cfg.clock(&b));
            let modifiers = a.modifiers.unwrap_or(cfg.modifiers);
            let events = simulate_campaign(&sim, &truths, a.k, a.iterations, modifiers, &workers, cli.seed)?;
            let mut buf = Vec::new();
            write_events_csv(&mut buf, &events)?;
            emit(out, &buf)
        }
        Command::Ingest(a) => {
            let tax = cfg.taxonomy()?;
            let videos: Option<HashSet<String>> = match &a.truth {
                Some(p) => Some(read_truth(p, &tax)?.into_iter().map(|t| t.video).collect()),
                None => None,
            };
            let mut acc = StatsAccumulator::new();
            let got = ingest(open(&a.events)?, &tax, videos.as_ref(), &mut acc)
                .with_context(|| format!("ingesting {}", a.events.display()))?;
            if let Some(p) = &a.stats {
                let mut buf = Vec::new();
                write_worker_stats_csv(&mut buf, &got.stats)?;
                write_atomic(p, &buf)?;
            }
            eprintln!(
                "{} events, {} gold answers set aside, {} workers",
                got.events.len(),
                got.gold.len(),
                got.stats.len()
            );
            let mut buf = Vec::new();
            write_events_csv(&mut buf, &got.events)?;
            emit(out, &buf)
        }
        Command::Aggregate(a) => {
            let tax = cfg.taxonomy()?;
            let videos: Vec<String> = read_truth(&a.truth, &tax)?.into_iter().map(|t| t.video).collect();
            let events = read_events_csv(open(&a.events)?)?;
            let labels = aggregate(&tax, &videos, &events, a.threshold)?;
            let mut buf = Vec::new();
            labels.write_csv(&mut buf)?;
            emit(out, &buf)
        }
        Command::Metrics(a) => {
            let tax = cfg.taxonomy()?;
            let truths = read_truth(&a.truth, &tax)?;
            let videos: Vec<String> = truths.iter().map(|t| t.video.clone()).collect();
            let truth = BinaryLabels::from_truth(&truths, tax.label_count())?;
            let pred = BinaryLabels::read_csv(open(&a.labels)?, &videos, tax.label_count())?;
            let mut m = metrics(&pred, &truth)?;
            if let Some(p) = &a.events {
                let events = read_events_csv(open(p)?)?;
                m = m.with_timing(timing_summary(&events, videos.len(), a.iterations));
            }
            let row = MetricsRow {
                experiment: a.experiment,
                k: a.k,
                iterations: a.iterations,
                modifiers: a.modifiers,
                metrics: m,
            };
            let mut buf = Vec::new();
            write_metrics_csv(&mut buf, &[row])?;
            emit(out, &buf)
        }
        Command::Plan(a) => {
            let tax = cfg.taxonomy()?;
            let b = cfg.behavior(tax.question_count())?;
            let clock = cfg.clock(&b);
            let constraint = BudgetConstraint::new(
                a.budget.unwrap_or(cfg.max_minutes_per_video),
                a.min_precision.or(cfg.min_precision),
            )?;
            let ks = if a.k.is_empty() { default_k_values(&b) } else { a.k };
            if a.all {
                let max_n = budget_iterations(&b, &clock, &constraint, &ks)?;
                let e = enumerate_plans(&b, &clock, &constraint, &ks, max_n)?;
                if let Some(notice) = &e.notice {
                    eprintln!("{notice}");
                }
                let mut buf = Vec::new();
                write_plans_csv(&mut buf, &e.plans)?;
                emit(out, &buf)
            } else {
                let plan = optimize_over(&b, &clock, &constraint, &ks)?;
                emit(out, format!("{}\n", serde_json::to_string_pretty(&plan)?).as_bytes())
            }
        }
        Command::Qc(a) => {
            let stats = read_worker_stats_csv(open(&a.stats)?)?;
            let thresholds = QcThresholds {
                z: a.z,
                ..QcThresholds::default()
            };
            let flags = qc_flag(&stats, &thresholds)?;
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            w.write_record(["worker", "signal", "z"])?;
            for f in &flags {
                for (s, z) in &f.signals {
                    w.write_record([f.worker.clone(), s.to_string(), format!("{z:.3}")])?;
                }
            }
            emit(out, &w.into_inner()?)
        }
        Command::Blacklist(a) => {
            let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            let entry = BlacklistEntry {
                worker: a.worker,
                reason: a.reason,
                timestamp,
            };
            Blacklist::append_to(&a.file, &entry)?;
            Ok(())
        }
        Command::VerifyQueue(a) => {
            let tax = cfg.taxonomy()?;
            let pairs = read_pairs(&a.labels)?;
            let mut videos: Vec<String> = Vec::new();
            let mut seen = BTreeSet::new();
            for (v, _) in &pairs {
                if seen.insert(v.clone()) {
                    videos.push(v.clone());
                }
            }
            let mut labels = BinaryLabels::empty(&videos, tax.label_count())?;
            let index: BTreeMap<&str, usize> = videos.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
            for (v, l) in &pairs {
                labels.set(index[v.as_str()], *l, true)?;
            }
            let verified: BTreeSet<(String, LabelId)> = match &a.verified {
                Some(p) => read_pairs(p)?.into_iter().collect(),
                None => BTreeSet::new(),
            };
            let queue = build_verification_queue(&labels, &verified);
            let mut buf = Vec::new();
            write_verification_jsonl(&mut buf, &queue)?;
            emit(out, &buf)
        }
        Command::Reproduce(a) => {
            let experiment: Experiment = a.name.parse()?;
            let tax = cfg.taxonomy()?;
            let b = cfg.behavior(tax.question_count())?;
            let settings = ExperimentSettings {
                videos: a.videos,
                behavior: b,
                time_model: cfg.time_model,
                ..ExperimentSettings::default()
            };
            let text = run_experiment(experiment, &tax, &settings, cli.seed)?;
            emit(out, text.as_bytes())
        }
    }
}
