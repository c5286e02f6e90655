//! `radar` command line: `gen-synth`, `pretrain`, `adapt`, `mmd`, `report`.
//!
//! Every command resolves a [`RunConfig`] from defaults, an optional
//! `--config` file, `--set key=value` overrides and its own flags, in that
//! order. Failures print one JSON line (`{"error":..,"message":..}`) and a
//! human-readable line on stderr. Exit codes: 0 success, 1 runtime failure,
//! 2 usage or configuration error.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::adaptation::{
    adapt_stream, entropy_buckets, read_report, summary_table, write_report, ReportFile,
    ReportOptions,
};
use crate::error::RadarError;
use crate::feature_io::{
    generate_synthetic, load_dataset, plan_eventwise_batches, plan_random_batches, save_dataset,
    BatchMode, Dataset, Role,
};
use crate::mmd::{dataset_mmd_with, display_value};
use crate::source_model::{entropy, init_model, pretrain, Checkpoint, ModelConfig};

pub use config::{ModelSettings, RunConfig};

#[derive(Debug)]
enum CliError {
    Usage(String),
    Invalid(String),
    Run(RadarError),
}

impl From<RadarError> for CliError {
    fn from(e: RadarError) -> Self {
        match e {
            RadarError::InvalidArgument(m) => CliError::Invalid(m),
            other => CliError::Run(other),
        }
    }
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Invalid(_) => "invalid_argument",
            CliError::Run(e) => e.kind(),
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Invalid(m) => m.clone(),
            CliError::Run(e) => e.to_string(),
        }
    }

    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Invalid(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "radar",
    version,
    about = "Retrieval-guided test-time adaptation for fake news video detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled source and shifted target dataset.
    GenSynth(GenSynthArgs),
    /// Train the detection network on a labeled source dataset.
    Pretrain(PretrainArgs),
    /// Adapt a checkpoint over a stream of target batches.
    Adapt(AdaptArgs),
    /// Kernel MMD between the features of two datasets.
    Mmd(MmdArgs),
    /// Summarize an adaptation report stream.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct GenSynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    events: Option<usize>,
    #[arg(long)]
    per_event: Option<usize>,
    /// One width for all modalities, or `v,t,a`.
    #[arg(long)]
    dims: Option<String>,
    #[arg(long)]
    shift: Option<f64>,
    #[arg(long)]
    imbalance: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    out_source: Option<String>,
    #[arg(long, value_name = "FILE")]
    out_target: Option<String>,
    /// Defaults to `manifest.json` next to the source file.
    #[arg(long, value_name = "FILE")]
    manifest: Option<String>,
}

#[derive(Args)]
struct PretrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_name = "FILE")]
    source: Option<String>,
    /// Checkpoint to write.
    #[arg(long, value_name = "FILE")]
    out: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Seeds initialization and shuffling.
    #[arg(long)]
    seed: Option<u64>,
    /// Encoder output width `D_m`.
    #[arg(long)]
    encoder_out: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct AdaptArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<String>,
    #[arg(long, value_name = "FILE")]
    target: Option<String>,
    /// Report stream to write.
    #[arg(long, value_name = "FILE")]
    out: Option<String>,
    /// `random` or `eventwise`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Ablation to apply; repeatable.
    #[arg(long = "ablate", value_name = "NAME")]
    ablate: Vec<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    e0: Option<f64>,
    #[arg(long)]
    bank_capacity: Option<usize>,
    /// Seed of the random batch plan.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trace_entropy: bool,
    #[arg(long)]
    trace_pseudo: bool,
    #[arg(long)]
    trace_bank: bool,
    #[arg(long)]
    reset_optimizer_per_batch: bool,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct MmdArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_name = "FILE")]
    a: Option<String>,
    #[arg(long, value_name = "FILE")]
    b: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Print one JSON object instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// Report stream written by `adapt`.
    #[arg(long, value_name = "FILE")]
    input: Option<String>,
    #[arg(long)]
    buckets: Option<usize>,
    /// Print the series as one JSON object instead of tables.
    #[arg(long)]
    json: bool,
    /// Also list memory bank contents, when traced.
    #[arg(long)]
    bank: bool,
}

fn push<T: ToString>(out: &mut Vec<(String, String)>, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        out.push((key.to_string(), v.to_string()));
    }
}

fn resolve(common: &Common, flags: Vec<(String, String)>) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(CliError::Usage)?,
        None => RunConfig::default(),
    };
    let mut pairs = Vec::new();
    for s in &common.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
        pairs.push((k.to_string(), v.to_string()));
    }
    pairs.extend(flags);
    cfg.apply(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
        .map_err(CliError::Usage)?;
    Ok(cfg)
}

fn ensure_parent(path: &str) -> CliResult {
    if let Some(dir) = Path::new(path)
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
    {
        std::fs::create_dir_all(dir).map_err(|e| RadarError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    Ok(())
}

fn create(path: &str) -> CliResult<BufWriter<File>> {
    ensure_parent(path)?;
    let f = File::create(path).map_err(|e| RadarError::Io {
        path: path.into(),
        source: e,
    })?;
    Ok(BufWriter::new(f))
}

fn write_json(path: &str, v: &Value) -> CliResult {
    let mut w = create(path)?;
    let io = |e: std::io::Error| {
        CliError::Run(RadarError::Io {
            path: path.into(),
            source: e,
        })
    };
    serde_json::to_writer_pretty(&mut w, v).map_err(|e| io(e.into()))?;
    writeln!(w).map_err(io)?;
    w.flush().map_err(io)
}

fn class_counts(ds: &Dataset) -> Value {
    let labels: Vec<_> = (0..ds.len())
        .filter_map(|i| ds.evaluation_label(i))
        .collect();
    let fake = labels
        .iter()
        .filter(|&&c| c == crate::feature_io::FAKE)
        .count();
    let mut events: Vec<&str> = ds.records().iter().map(|r| r.event_id.as_str()).collect();
    events.sort_unstable();
    events.dedup();
    json!({
        "records": ds.len(),
        "events": events.len(),
        "fake": fake,
        "real": labels.len() - fake,
    })
}

fn cmd_gen_synth(a: GenSynthArgs) -> CliResult {
    let mut flags = Vec::new();
    push(&mut flags, "synth.events", &a.events);
    push(&mut flags, "synth.per_event", &a.per_event);
    push(&mut flags, "synth.dims", &a.dims);
    push(&mut flags, "synth.shift", &a.shift);
    push(&mut flags, "synth.imbalance", &a.imbalance);
    push(&mut flags, "seed", &a.seed);
    push(&mut flags, "paths.source", &a.out_source);
    push(&mut flags, "paths.target", &a.out_target);
    push(&mut flags, "paths.manifest", &a.manifest);
    let mut cfg = resolve(&a.common, flags)?;
    if a.manifest.is_none() && a.out_source.is_some() {
        let dir = Path::new(&cfg.paths.source)
            .parent()
            .unwrap_or(Path::new(""));
        cfg.paths.manifest = dir.join("manifest.json").to_string_lossy().into_owned();
    }
    if a.common.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let (source, target) = generate_synthetic(&cfg.synth, cfg.seed)?;
    for path in [&cfg.paths.source, &cfg.paths.target, &cfg.paths.manifest] {
        ensure_parent(path)?;
    }
    save_dataset(&source, &cfg.paths.source)?;
    save_dataset(&target, &cfg.paths.target)?;
    let manifest = json!({
        "command": "gen-synth",
        "config": cfg.echo(),
        "source": {"path": cfg.paths.source, "counts": class_counts(&source)},
        "target": {"path": cfg.paths.target, "counts": class_counts(&target)},
    });
    write_json(&cfg.paths.manifest, &manifest)?;
    println!(
        "wrote {} source and {} target records ({} and {}), manifest {}",
        source.len(),
        target.len(),
        cfg.paths.source,
        cfg.paths.target,
        cfg.paths.manifest
    );
    Ok(())
}

fn cmd_pretrain(a: PretrainArgs) -> CliResult {
    let mut flags = Vec::new();
    push(&mut flags, "paths.source", &a.source);
    push(&mut flags, "paths.checkpoint", &a.out);
    push(&mut flags, "pretrain.epochs", &a.epochs);
    push(&mut flags, "pretrain.optimizer.learning_rate", &a.lr);
    push(&mut flags, "pretrain.batch_size", &a.batch_size);
    push(&mut flags, "pretrain.seed", &a.seed);
    push(&mut flags, "model.encoder_out", &a.encoder_out);
    let cfg = resolve(&a.common, flags)?;
    if a.common.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let source = load_dataset(&cfg.paths.source, Role::Source)?;
    let model_cfg = cfg.model.resolve(source.dims());
    let init = init_model(&model_cfg, cfg.pretrain.seed)?;
    let (params, log) = pretrain(init, &source, &cfg.pretrain)?;
    if !a.quiet {
        for e in &log {
            println!(
                "epoch {:>3}  loss {:.6}  accuracy {:.4}",
                e.epoch, e.loss, e.accuracy
            );
        }
    }
    let meta = json!({
        "command": "pretrain",
        "config": cfg.echo(),
        "model": model_cfg,
        "epochs": log,
    });
    ensure_parent(&cfg.paths.checkpoint)?;
    Checkpoint::new(params, meta.to_string()).save(&cfg.paths.checkpoint)?;
    println!("wrote checkpoint {}", cfg.paths.checkpoint);
    Ok(())
}

fn settings_of(c: &ModelConfig) -> ModelSettings {
    ModelSettings {
        encoder_out: c.encoder_out,
        encoder_hidden: Some(c.encoder_hidden),
        fusion_layers: c.fusion_layers,
        fusion_heads: Some(c.fusion_heads),
        fusion_ff_dim: Some(c.fusion_ff_dim),
        classifier_hidden: Some(c.classifier_hidden),
    }
}

fn cmd_adapt(a: AdaptArgs) -> CliResult {
    let mut flags = Vec::new();
    push(&mut flags, "paths.checkpoint", &a.checkpoint);
    push(&mut flags, "paths.target", &a.target);
    push(&mut flags, "paths.report", &a.out);
    push(&mut flags, "adapt.mode", &a.mode);
    push(&mut flags, "adapt.batch_size", &a.batch_size);
    push(&mut flags, "adapt.learning_rate", &a.lr);
    push(&mut flags, "adapt.k", &a.k);
    push(&mut flags, "adapt.entropy_threshold", &a.e0);
    push(&mut flags, "adapt.bank_capacity", &a.bank_capacity);
    push(&mut flags, "adapt.seed", &a.seed);
    if !a.ablate.is_empty() {
        flags.push(("adapt.ablations".into(), a.ablate.join(",")));
    }
    for (on, key) in [
        (a.trace_entropy, "report.trace_entropy"),
        (a.trace_pseudo, "report.trace_pseudo"),
        (a.trace_bank, "report.trace_bank"),
        (
            a.reset_optimizer_per_batch,
            "adapt.reset_optimizer_per_batch",
        ),
    ] {
        if on {
            flags.push((key.into(), "true".into()));
        }
    }
    if let Some(m) = &a.mode {
        m.parse::<BatchMode>()?;
    }
    let mut cfg = resolve(&a.common, flags)?;
    if a.common.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    cfg.adapt.validate()?;
    let ckpt = Checkpoint::load(&cfg.paths.checkpoint)?;
    cfg.model = settings_of(&ckpt.params.config);
    let target = load_dataset(&cfg.paths.target, Role::Target)?;
    let plan = match cfg.adapt.mode {
        BatchMode::EventWise => plan_eventwise_batches(&target, cfg.adapt.batch_size)?,
        BatchMode::Random => plan_random_batches(&target, cfg.adapt.batch_size, cfg.adapt.seed)?,
    };
    let mut model = ckpt.params;
    let report = adapt_stream(&mut model, &target, &plan, &cfg.adapt)?;
    let opts = ReportOptions {
        trace_entropy: cfg.report.trace_entropy,
        trace_pseudo: cfg.report.trace_pseudo,
        trace_bank: cfg.report.trace_bank,
        echo: Some(cfg.echo()),
    };
    let path = cfg.paths.report.clone();
    let mut w = create(&path)?;
    write_report(&report, &opts, &mut w)?;
    w.flush().map_err(|e| RadarError::Io {
        path: path.clone().into(),
        source: e,
    })?;
    if !a.quiet {
        print!("{}", summary_table(&report));
    }
    println!("wrote report {path}");
    Ok(())
}

fn cmd_mmd(a: MmdArgs) -> CliResult {
    let mut flags = Vec::new();
    push(&mut flags, "paths.source", &a.a);
    push(&mut flags, "paths.target", &a.b);
    push(&mut flags, "mmd.sigma", &a.sigma);
    let cfg = resolve(&a.common, flags)?;
    if a.common.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    // labels play no part here, so both sides load as unlabeled streams
    let da = load_dataset(&cfg.paths.source, Role::Target)?;
    let db = load_dataset(&cfg.paths.target, Role::Target)?;
    let r = dataset_mmd_with(&da, &db, &cfg.mmd)?;
    if a.json {
        let out = json!({
            "config": cfg.echo(),
            "per_modality": {"v": r.per_modality[0], "t": r.per_modality[1], "a": r.per_modality[2]},
            "total": r.total,
        });
        println!("{out}");
    } else {
        if cfg.mmd.per_modality {
            for (k, v) in ["v", "t", "a"].iter().zip(r.per_modality) {
                println!("{k:<6} {:.9} (raw {v:.9e})", display_value(v));
            }
        }
        println!("total  {:.9} (raw {:.9e})", display_value(r.total), r.total);
    }
    Ok(())
}

struct BatchSeries {
    index: usize,
    size: usize,
    pre: Option<f64>,
    post: f64,
    total: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn batch_series(r: &ReportFile) -> CliResult<Vec<BatchSeries>> {
    let mut out = Vec::new();
    for b in &r.batches {
        let post: Vec<f64> = b
            .records
            .iter()
            .map(|rec| rec.post_entropy.map_or_else(|| entropy(&rec.probs), Ok))
            .collect::<Result<_, _>>()?;
        out.push(BatchSeries {
            index: b.index,
            size: b.size,
            pre: mean(b.records.iter().filter_map(|rec| rec.pre_entropy)),
            post: mean(post.into_iter()).unwrap_or(0.0),
            total: b.total,
        });
    }
    Ok(out)
}

fn cmd_report(a: ReportArgs) -> CliResult {
    let mut flags = Vec::new();
    push(&mut flags, "paths.report", &a.input);
    push(&mut flags, "report.buckets", &a.buckets);
    let cfg = resolve(&a.common, flags)?;
    if a.common.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let path = &cfg.paths.report;
    let f = File::open(path).map_err(|e| RadarError::Io {
        path: path.into(),
        source: e,
    })?;
    let report = read_report(BufReader::new(f))?;
    let series = batch_series(&report)?;
    let samples = report
        .records()
        .filter_map(|rec| {
            rec.label
                .map(|l| entropy(&rec.probs).map(|h| (h, l == rec.prediction)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let buckets = entropy_buckets(&samples, cfg.report.buckets)?;
    let events: Vec<_> = report
        .aggregate
        .as_ref()
        .map(|agg| {
            agg.events
                .iter()
                .filter(|e| agg.imbalanced_events.contains(&e.event_id))
                .cloned()
                .collect()
        })
        .unwrap_or_default();

    if a.json {
        let out = json!({
            "config": cfg.echo(),
            "run_config": report.config,
            "records": report.num_records(),
            "entropy_reduction": series.iter().map(|s| json!({
                "batch": s.index, "size": s.size, "pre_entropy": s.pre, "post_entropy": s.post, "total_loss": s.total,
            })).collect::<Vec<_>>(),
            "entropy_buckets": buckets.iter().map(|b| json!({
                "lo": b.lo, "hi": b.hi, "count": b.count, "errors": b.errors, "error_rate": b.error_rate(),
            })).collect::<Vec<_>>(),
            "imbalanced_events": events,
            "bank": if a.bank { report.batches.iter().map(|b| json!({"batch": b.index, "ids": b.bank})).collect::<Vec<_>>() } else { vec![] },
        });
        emit(&format!("{out}\n"));
        return Ok(());
    }

    let mut o = String::new();
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
    let _ = writeln!(o, "records {}", report.num_records());
    o.push('\n');
    let _ = writeln!(o, "entropy reduction");
    let _ = writeln!(
        o,
        "{:>6} {:>5} {:>10} {:>10} {:>10}",
        "batch", "n", "pre", "post", "L_total"
    );
    for s in &series {
        let _ = writeln!(
            o,
            "{:>6} {:>5} {:>10} {:>10.6} {:>10.6}",
            s.index,
            s.size,
            fmt(s.pre),
            s.post,
            s.total
        );
    }
    o.push('\n');
    let _ = writeln!(o, "error rate by prediction entropy");
    let _ = writeln!(
        o,
        "{:>9} {:>9} {:>6} {:>6} {:>8}",
        "lo", "hi", "n", "err", "rate"
    );
    for b in &buckets {
        let _ = writeln!(
            o,
            "{:>9.6} {:>9.6} {:>6} {:>6} {:>8}",
            b.lo,
            b.hi,
            b.count,
            b.errors,
            b.error_rate()
                .map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
        );
    }
    o.push('\n');
    let _ = writeln!(o, "pseudo-label accuracy on imbalanced events");
    let _ = writeln!(
        o,
        "{:<12} {:>5} {:>8} {:>8} {:>8}",
        "event", "n", "ratio", "acc", "pseudo"
    );
    for e in &events {
        let _ = writeln!(
            o,
            "{:<12} {:>5} {:>8} {:>8.4} {:>8}",
            e.event_id,
            e.count,
            e.imbalance_ratio
                .map_or_else(|| "inf".to_string(), |r| format!("{r:.1}")),
            e.accuracy,
            e.pseudo_label_accuracy
                .map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
        );
    }
    if a.bank {
        o.push('\n');
        let _ = writeln!(o, "memory bank");
        for b in &report.batches {
            let _ = match &b.bank {
                Some(ids) => writeln!(o, "{:>6} {}", b.index, ids.join(" ")),
                None => writeln!(o, "{:>6} (not traced)", b.index),
            };
        }
    }
    emit(&o);
    Ok(())
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(s: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(s.as_bytes()).and_then(|_| out.flush());
}

fn report_error(e: &CliError) {
    let line = json!({"error": e.kind(), "message": e.message()});
    eprintln!("{line}");
    eprintln!("radar: error: {}", e.message());
}

/// Runs the command line with explicit arguments; returns the exit code.
pub fn run_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let msg = e.render().to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ")
                .to_string();
            eprintln!("{}", json!({"error": "usage", "message": first}));
            let _ = e.print();
            return 2;
        }
    };
    let out = match cli.command {
        Command::GenSynth(a) => cmd_gen_synth(a),
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Adapt(a) => cmd_adapt(a),
        Command::Mmd(a) => cmd_mmd(a),
        Command::Report(a) => cmd_report(a),
    };
    match out {
        Ok(()) => 0,
        Err(e) => {
            report_error(&e);
            e.code()
        }
    }
}

pub fn run() -> i32 {
    run_with(std::env::args_os())
}
