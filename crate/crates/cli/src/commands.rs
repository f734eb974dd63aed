use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use affuse_core::featpack::{read_pack, validate_pack, FeaturePack, Task};
use affuse_core::neural::io::read_header;
use affuse_core::pipeline::{
    format_sig9, run_ah, run_emi, run_expr, train_ah, train_emi, train_expr, FusionSpec, MetricsReport,
    ModelSet, Outcome,
};
use affuse_core::synth;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const MODELS_DIR: &str = "models";
pub const HISTORY_FILE: &str = "history.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const REPORT_FILE: &str = "report.json";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSON: &str = "sweep.json";
pub const THREADS_ENV: &str = "AFFUSE_THREADS";

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn open_pack(cfg: &ExperimentConfig) -> Result<FeaturePack, CliError> {
    let pack = read_pack(&cfg.pack)?;
    if pack.manifest().task != cfg.task {
        return Err(CliError::Domain(format!(
            "config task is {} but the pack at {} holds {}",
            cfg.task,
            cfg.pack.display(),
            pack.manifest().task
        )));
    }
    Ok(pack)
}

pub fn validate(path: &Path) -> Result<ExitCode, CliError> {
    if !path.is_dir() {
        return Err(CliError::Io(format!("{} is not a readable pack directory", path.display())));
    }
    let pack = read_pack(path)?;
    let report = validate_pack(&pack);
    if report.is_empty() {
        println!("OK");
        return Ok(ExitCode::SUCCESS);
    }
    for v in &report.violations {
        println!("{v}");
    }
    println!("{} violation(s)", report.violations.len());
    Ok(ExitCode::from(1))
}

/// Removes a previous run's model directory, refusing anything that does
/// not look like one.
fn clear_models(dir: &Path) -> Result<(), CliError> {
    if !dir.exists() {
        return Ok(());
    }
    let entries = fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        if read_header(&entry.path()).is_err() {
            return Err(CliError::Domain(format!(
                "{} holds {} which is not a saved model; refusing to overwrite",
                dir.display(),
                entry.path().display()
            )));
        }
    }
    fs::remove_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

pub fn train(config: &Path) -> Result<ExitCode, CliError> {
    let cfg = ExperimentConfig::load(config)?;
    let pack = open_pack(&cfg)?;
    let settings = cfg.settings();
    let (models, histories) = match cfg.task {
        Task::Expr => train_expr(&pack, &cfg.fusion, &settings)?,
        Task::Emi => train_emi(&pack, &cfg.fusion, &settings)?,
        Task::Ah => train_ah(&pack, &cfg.fusion, &settings)?,
    };
    let dir = cfg.output.join(MODELS_DIR);
    clear_models(&dir)?;
    models.save(&dir, &cfg.training_digest(&pack))?;
    let history = serde_json::to_string_pretty(&histories).expect("history serializes") + "\n";
    write(&cfg.output.join(HISTORY_FILE), &history)?;
    for (key, h) in &histories {
        let last = h.epochs.last().map(|e| format_sig9(e.train_loss)).unwrap_or_default();
        println!("{key}: {} epochs, best epoch {}, final train loss {last}", h.epochs.len(), h.best_epoch);
    }
    if models.gate.is_some() {
        println!("gate: trained");
    }
    println!("models written to {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn run(task: Task, pack: &FeaturePack, models: &ModelSet, spec: &FusionSpec) -> affuse_core::Result<Outcome> {
    Ok(match task {
        Task::Expr => Outcome::Frames(run_expr(pack, models, spec)?),
        Task::Emi => Outcome::Videos(run_emi(pack, models, spec)?),
        Task::Ah => Outcome::Frames(run_ah(pack, models, spec)?),
    })
}

fn load_models(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<ModelSet, CliError> {
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.join(MODELS_DIR));
    if !dir.is_dir() {
        return Err(CliError::Io(format!("no models at {}; run `affuse train` first", dir.display())));
    }
    Ok(ModelSet::load(&dir)?)
}

fn metric_line(report: &MetricsReport) -> String {
    let name = MetricsReport::primary_metric_name(report.task);
    match report.primary_metric() {
        Some(v) => format!("{name}={}", format_sig9(v)),
        None => format!("{name}=n/a (unlabelled pack)"),
    }
}

pub fn predict(config: &Path, models: Option<&Path>) -> Result<ExitCode, CliError> {
    let cfg = ExperimentConfig::load(config)?;
    let pack = open_pack(&cfg)?;
    let models = load_models(&cfg, models)?;
    let outcome = run(cfg.task, &pack, &models, &cfg.fusion)?;
    write(&cfg.output.join(PREDICTIONS_FILE), &outcome.to_csv())?;
    write(&cfg.output.join(REPORT_FILE), &outcome.report().to_json())?;
    println!("{}: {}", outcome.report().method, metric_line(outcome.report()));
    Ok(ExitCode::SUCCESS)
}

/// Worker count from the flag, else the environment, else rayon's default.
fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Domain(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

pub fn sweep(config: &Path, models: Option<&Path>, threads: Option<usize>) -> Result<ExitCode, CliError> {
    let cfg = ExperimentConfig::load(config)?;
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| CliError::Schema("at /sweep: the config defines no sweep".into()))?;
    let pack = open_pack(&cfg)?;
    let models = load_models(&cfg, models)?;
    let specs: Vec<FusionSpec> = sweep
        .values
        .iter()
        .map(|&v| cfg.spec_at(v).expect("checked on load"))
        .collect();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(threads)? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Domain(format!("thread pool: {e}")))?;
    let outcomes: Vec<affuse_core::Result<Outcome>> =
        pool.install(|| specs.par_iter().map(|s| run(cfg.task, &pack, &models, s)).collect());

    let metric_name = MetricsReport::primary_metric_name(cfg.task);
    let mut csv = format!("{},{metric_name}\n", sweep.axis.name());
    let mut reports = Vec::with_capacity(outcomes.len());
    let mut best: Option<(f64, f64)> = None;
    for (&value, outcome) in sweep.values.iter().zip(outcomes) {
        let report = outcome?.report().clone();
        let metric = report.primary_metric().ok_or_else(|| {
            CliError::Domain(format!("{} has unlabelled videos; a sweep needs labels", cfg.pack.display()))
        })?;
        csv.push_str(&format!("{},{}\n", format_sig9(value), format_sig9(metric)));
        if best.is_none_or(|(_, m)| metric > m) {
            best = Some((value, metric));
        }
        reports.push(report);
    }
    write(&cfg.output.join(SWEEP_CSV), &csv)?;
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n";
    write(&cfg.output.join(SWEEP_JSON), &json)?;
    print!("{csv}");
    let (value, metric) = best.expect("non-empty sweep");
    println!(
        "best {}={}: {metric_name}={}",
        sweep.axis.name(),
        format_sig9(value),
        format_sig9(metric)
    );
    Ok(ExitCode::SUCCESS)
}

struct Row {
    file: String,
    report: MetricsReport,
}

pub fn report(files: &[PathBuf], csv: Option<&Path>) -> Result<ExitCode, CliError> {
    let mut rows = Vec::with_capacity(files.len());
    for f in files {
        let text = fs::read_to_string(f).map_err(|e| CliError::Io(format!("{}: {e}", f.display())))?;
        let report: MetricsReport = serde_json::from_str(&text)
            .map_err(|e| CliError::Domain(format!("{} is not a report: {e}", f.display())))?;
        rows.push(Row { file: f.display().to_string(), report });
    }
    let task = rows[0].report.task;
    if let Some(other) = rows.iter().find(|r| r.report.task != task) {
        return Err(CliError::Domain(format!(
            "cannot compare {task} and {} reports ({})",
            other.report.task, other.file
        )));
    }
    rows.sort_by(|a, b| {
        let (x, y) = (a.report.primary_metric(), b.report.primary_metric());
        y.partial_cmp(&x)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.report.config_digest.cmp(&b.report.config_digest))
    });

    let metric_name = MetricsReport::primary_metric_name(task);
    let metric = |r: &MetricsReport| r.primary_metric().map(format_sig9).unwrap_or_else(|| "n/a".into());
    let method_width = rows.iter().map(|r| r.report.method.len()).max().unwrap_or(0).max(6);
    println!("{:<4} {:<method_width$} {:>12}  digest", "rank", "method", metric_name);
    for (i, r) in rows.iter().enumerate() {
        println!(
            "{:<4} {:<method_width$} {:>12}  {}",
            i + 1,
            r.report.method,
            metric(&r.report),
            &r.report.config_digest[..r.report.config_digest.len().min(12)]
        );
    }
    if let Some(path) = csv {
        let mut out = format!("rank,method,{metric_name},config_digest,file\n");
        for (i, r) in rows.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i + 1,
                csv_field(&r.report.method),
                metric(&r.report),
                r.report.config_digest,
                csv_field(&r.file)
            ));
        }
        write(path, &out)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum SynthTask {
    Expr,
    Emi,
    Ah,
}

pub struct SynthArgs {
    pub task: SynthTask,
    pub out: PathBuf,
    pub seed: u64,
    pub world_seed: u64,
    pub videos: Option<usize>,
    pub frames: Option<usize>,
    pub unlabelled: bool,
}

pub fn synth(args: &SynthArgs) -> Result<ExitCode, CliError> {
    if args.out.exists() && fs::read_dir(&args.out).map(|mut d| d.next().is_some()).unwrap_or(true) {
        return Err(CliError::Domain(format!("{} exists and is not empty", args.out.display())));
    }
    let pack = match args.task {
        SynthTask::Expr => {
            let d = synth::ExprSynth::default();
            let cfg = synth::ExprSynth {
                videos: args.videos.unwrap_or(d.videos),
                frames: args.frames.unwrap_or(d.frames),
                labelled: !args.unlabelled,
                ..d
            };
            synth::expr_pack(&args.out, &cfg, args.seed)?
        }
        SynthTask::Emi => {
            let d = synth::EmiSynth::default();
            let cfg = synth::EmiSynth {
                videos: args.videos.unwrap_or(d.videos),
                frames: args.frames.unwrap_or(d.frames),
                labelled: !args.unlabelled,
                ..d
            };
            synth::emi_pack(&args.out, &cfg, args.world_seed, args.seed)?
        }
        SynthTask::Ah => {
            let d = synth::AhSynth::default();
            let cfg = synth::AhSynth {
                videos: args.videos.unwrap_or(d.videos),
                frames: args.frames.unwrap_or(d.frames),
                labelled: !args.unlabelled,
                pretrained: Some(2.0),
                ..d
            };
            synth::ah_pack(&args.out, &cfg, args.seed)?
        }
    };
    println!(
        "{} pack with {} videos written to {}",
        pack.manifest().task,
        pack.manifest().videos.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}
