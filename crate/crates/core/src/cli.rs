//! Command-line front end: `generate`, `preview`, `validate`, `sweep`, `info`.
//!
//! Exit status: 0 on success, 1 on failed samples or checks, 2 on
//! configuration errors or unreadable input. Progress goes to standard
//! error; `--json` prints a one-line summary on standard output.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::{parse_assignment, ConfigError, DatasetConfig, GENERATOR_VERSION};
use crate::geometry::Phenotype;
use crate::pipeline::{
    self, generate_dataset, generate_sample_as, phenotype_for, preview::write_previews, run_sweep,
    sample_dir_name, validate_path, write_sample, PipelineError,
};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "CORNEA_OCT_OUTPUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURES: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cornea-oct", version, about = "Synthetic corneal OCT B-scan dataset generator")]
pub struct Cli {
    /// Increase log verbosity (-v debug, -vv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    /// Print a one-line JSON summary on standard output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset and its manifest.
    Generate(GenerateArgs),
    /// Generate one sample and write colour-mapped PNG previews.
    Preview(PreviewArgs),
    /// Check a sample directory, dataset root or sweep root.
    Validate(ValidateArgs),
    /// Generate one sub-dataset per combination of the configured sweep.
    Sweep(GenerateArgs),
    /// Print the fully resolved configuration and its hash.
    Info(ConfigArgs),
}

/// Configuration sources. Flags override `--set`, which overrides the file,
/// which overrides built-in defaults.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// JSON configuration file; every field is optional.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a field by dotted path, e.g. `--set transport.photons_per_aline=1000`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub overrides: Vec<String>,
    /// Root seed from which every per-sample stream is derived.
    #[arg(long)]
    pub seed_root: Option<u64>,
    /// Total number of samples.
    #[arg(long)]
    pub samples: Option<u64>,
    /// Photons launched per A-line.
    #[arg(long)]
    pub photons: Option<u64>,
    /// Output root; defaults to the config value, then the environment.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Concurrent samples; defaults to the available parallelism.
    #[arg(short, long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PreviewArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value_t = 0)]
    pub sample_id: u64,
    /// Phenotype to generate; defaults to the sample's partition phenotype.
    #[arg(long)]
    pub phenotype: Option<Phenotype>,
    #[arg(short, long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Sample directory, dataset root or sweep root.
    pub path: PathBuf,
    /// Also regenerate every sample from its metadata and compare bitwise.
    #[arg(long)]
    pub deep: bool,
    #[arg(short, long)]
    pub workers: Option<usize>,
}

impl ConfigArgs {
    /// Merges defaults, the config file, `--set` overrides and flags.
    pub fn resolve(&self) -> Result<DatasetConfig, ConfigError> {
        let (mut cfg, file_sets_output) = match &self.config {
            Some(path) => {
                let cfg = DatasetConfig::from_file(path)?;
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                let has_output = serde_json::from_str::<Value>(&text)
                    .ok()
                    .and_then(|v| v.get("output_root").cloned())
                    .is_some();
                (cfg, has_output)
            }
            None => (DatasetConfig::default(), false),
        };
        if !file_sets_output {
            if let Some(dir) = std::env::var_os(OUTPUT_ENV).filter(|d| !d.is_empty()) {
                cfg.output_root = PathBuf::from(dir);
            }
        }
        for text in &self.overrides {
            let (path, value) = parse_assignment(text)?;
            cfg = cfg.with_override(&path, value)?;
        }
        if let Some(seed) = self.seed_root {
            cfg.seed_root = seed;
        }
        if let Some(n) = self.samples {
            cfg.total_samples = n;
        }
        if let Some(p) = self.photons {
            cfg.transport.photons_per_aline = p;
        }
        if let Some(out) = &self.output {
            cfg.output_root = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn default_workers(requested: Option<usize>) -> usize {
    requested
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        log::LevelFilter::Warn
    } else {
        match cli.verbose {
            0 => log::LevelFilter::Info,
            1 => log::LevelFilter::Debug,
            _ => log::LevelFilter::Trace,
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("CORNEA_OCT_LOG")
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Writes to stdout, ignoring a closed pipe (e.g. output piped into `head`).
fn print_stdout(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}").and_then(|_| out.flush());
}

fn emit(json_mode: bool, summary: Value) {
    if json_mode {
        print_stdout(&summary.to_string());
    }
}

/// Parses arguments and runs the command, returning the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    init_logging(&cli);
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, cli.json),
        Command::Sweep(a) => cmd_sweep(a, cli.json),
        Command::Preview(a) => cmd_preview(a, cli.json),
        Command::Validate(a) => cmd_validate(a, cli.json, cli.quiet),
        Command::Info(a) => cmd_info(a, cli.json),
    }
}

fn config_or_exit(args: &ConfigArgs) -> Result<DatasetConfig, i32> {
    args.resolve().map_err(|e| {
        log::error!("{e}");
        EXIT_INPUT
    })
}

fn pipeline_exit(e: &PipelineError) -> i32 {
    log::error!("{e}");
    match e {
        PipelineError::Config(_) | PipelineError::NotFound(_) => EXIT_INPUT,
        _ => EXIT_FAILURES,
    }
}

fn report_summary(report: &pipeline::DatasetReport, elapsed: f64) -> Value {
    let healthy = report
        .manifest
        .rows
        .iter()
        .filter(|r| r.phenotype == Phenotype::Healthy)
        .count();
    json!({
        "root": report.root,
        "samples": report.manifest.rows.len(),
        "healthy": healthy,
        "keratoconus": report.manifest.rows.len() - healthy,
        "generated": report.generated,
        "skipped": report.skipped,
        "failed": report.failures.iter().map(|f| f.sample_id).collect::<Vec<_>>(),
        "config_hash": report.manifest.header.config_hash,
        "seconds": elapsed,
    })
}

fn log_report(report: &pipeline::DatasetReport, elapsed: f64) {
    log::info!(
        "{}: {} samples ({} generated, {} kept), {} failed, {:.1} s",
        report.root.display(),
        report.manifest.rows.len(),
        report.generated,
        report.skipped,
        report.failures.len(),
        elapsed
    );
    for f in &report.failures {
        log::error!("sample {} failed: {}", f.sample_id, f.error);
    }
}

fn cmd_generate(args: &GenerateArgs, json_mode: bool) -> i32 {
    let cfg = match config_or_exit(&args.config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let start = Instant::now();
    match generate_dataset(&cfg, default_workers(args.workers)) {
        Err(e) => pipeline_exit(&e),
        Ok(report) => {
            let elapsed = start.elapsed().as_secs_f64();
            log_report(&report, elapsed);
            emit(json_mode, report_summary(&report, elapsed));
            if report.succeeded() {
                EXIT_OK
            } else {
                EXIT_FAILURES
            }
        }
    }
}

fn cmd_sweep(args: &GenerateArgs, json_mode: bool) -> i32 {
    let cfg = match config_or_exit(&args.config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Err(e) = pipeline::plan_sweep(&cfg) {
        return pipeline_exit(&e);
    }
    let start = Instant::now();
    match run_sweep(&cfg, default_workers(args.workers)) {
        Err(e) => pipeline_exit(&e),
        Ok(runs) => {
            let elapsed = start.elapsed().as_secs_f64();
            let mut ok = true;
            let mut subs = Vec::new();
            for run in &runs {
                log_report(&run.report, elapsed);
                ok &= run.report.succeeded();
                let mut s = report_summary(&run.report, elapsed);
                s["combination"] = json!(run.name);
                subs.push(s);
            }
            emit(json_mode, json!({ "combinations": subs, "seconds": elapsed }));
            if ok {
                EXIT_OK
            } else {
                EXIT_FAILURES
            }
        }
    }
}

fn cmd_preview(args: &PreviewArgs, json_mode: bool) -> i32 {
    let cfg = match config_or_exit(&args.config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let phenotype = args
        .phenotype
        .unwrap_or_else(|| phenotype_for(&cfg, args.sample_id));
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(default_workers(args.workers))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            log::error!("{e}");
            return EXIT_FAILURES;
        }
    };
    let start = Instant::now();
    let result = pool.install(|| generate_sample_as(&cfg, args.sample_id, phenotype));
    let record = match result {
        Ok(r) => r,
        Err(e) => return pipeline_exit(&e),
    };
    let dir = cfg.output_root.join(sample_dir_name(args.sample_id));
    let written = write_sample(&dir, &record).and_then(|_| write_previews(&dir, &record, &cfg.optics));
    match written {
        Err(e) => pipeline_exit(&e),
        Ok(paths) => {
            let elapsed = start.elapsed().as_secs_f64();
            for p in &paths {
                log::info!("wrote {}", p.display());
            }
            log::info!(
                "sample {} ({}) H = {:.2} µm at x0 = {:.1} µm, {:.1} s",
                args.sample_id,
                phenotype,
                record.meta.geometry.bulge_height,
                record.meta.geometry.bulge_center,
                elapsed
            );
            emit(
                json_mode,
                json!({
                    "dir": dir,
                    "sample_id": args.sample_id,
                    "phenotype": phenotype,
                    "bulge_height": record.meta.geometry.bulge_height,
                    "previews": paths,
                    "seconds": elapsed,
                }),
            );
            EXIT_OK
        }
    }
}

fn cmd_validate(args: &ValidateArgs, json_mode: bool, quiet: bool) -> i32 {
    if !Path::new(&args.path).exists() {
        log::error!("{}: no such file or directory", args.path.display());
        return EXIT_INPUT;
    }
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(default_workers(args.workers))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            log::error!("{e}");
            return EXIT_FAILURES;
        }
    };
    let reports = match pool.install(|| validate_path(&args.path, args.deep)) {
        Ok(r) => r,
        Err(e) => return pipeline_exit(&e),
    };
    let mut failed = Vec::new();
    for r in &reports {
        if !quiet || !r.passed() {
            eprint!("{r}");
        }
        for c in r.failures() {
            failed.push(json!({ "target": r.target, "check": c.check, "detail": c.detail }));
        }
    }
    let checks: usize = reports.iter().map(|r| r.checks.len()).sum();
    log::info!("{} targets, {checks} checks, {} failed", reports.len(), failed.len());
    let ok = failed.is_empty();
    emit(
        json_mode,
        json!({ "targets": reports.len(), "checks": checks, "passed": ok, "failures": failed }),
    );
    if ok {
        EXIT_OK
    } else {
        EXIT_FAILURES
    }
}

fn cmd_info(args: &ConfigArgs, json_mode: bool) -> i32 {
    let cfg = match config_or_exit(args) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let hash = cfg.content_hash();
    if json_mode {
        emit(
            true,
            json!({ "generator_version": GENERATOR_VERSION, "config_hash": hash, "config": cfg }),
        );
    } else {
        print_stdout(&format!(
            "generator_version: {GENERATOR_VERSION}\nconfig_hash: {hash}\n{}",
            cfg.to_json_pretty()
        ));
    }
    EXIT_OK
}
