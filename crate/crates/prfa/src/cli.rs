//! `prfa` command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use prfa_core::synthetic::{suite, SceneConfig};
use prfa_core::{evaluate, DetectorOracle, ToyDetector, ToyDetectorConfig};

use crate::batch::{default_workers, run_batch_parallel};
use crate::config::{OracleChoice, RunConfig, Settings};
use crate::io::{load_dataset, write_dataset, Dataset};
use crate::remote::{HttpOracle, ENDPOINT_ENV};
use crate::report::{build_attack_report, to_json, write_attack_outputs, EvalOutput, RunInfo};

#[derive(Debug, Parser)]
#[command(name = "prfa", version, about = "Query-based black-box attacks on object detectors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Attack every annotated image and write adversarial images, traces and a report.
    Attack(RunArgs),
    /// Score the oracle on clean images.
    Eval(RunArgs),
    /// Serve the toy detector over the version-1 wire protocol.
    ServeToy {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
    /// Write a synthetic dataset the toy detector can score.
    MakeToySet {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

fn resolve(args: RunArgs) -> anyhow::Result<RunConfig> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Settings::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => Settings::default(),
    };
    let cfg = RunConfig::resolve(args.settings.over(file), std::env::var(ENDPOINT_ENV).ok(), default_workers())?;
    cfg.check_paths()?;
    Ok(cfg)
}

fn make_oracle(cfg: &RunConfig) -> anyhow::Result<Box<dyn DetectorOracle + Sync>> {
    Ok(match &cfg.oracle {
        OracleChoice::Toy => Box::new(ToyDetector::new(ToyDetectorConfig::default())?),
        OracleChoice::Http(url) => {
            Box::new(HttpOracle::connect(url, cfg.timeout).with_context(|| format!("connecting to {url}"))?)
        }
    })
}

fn load(cfg: &RunConfig) -> anyhow::Result<Dataset> {
    let data = load_dataset(&cfg.images, &cfg.annotations, cfg.mask_dir.as_deref())?;
    for e in &data.errors {
        eprintln!("warning: skipping {}: {}", e.name, e.message);
    }
    anyhow::ensure!(!data.samples.is_empty(), "no loadable images in {}", cfg.images.display());
    Ok(data)
}

fn attack(cfg: RunConfig) -> anyhow::Result<()> {
    let out = cfg.out.clone().ok_or_else(|| anyhow::anyhow!("attack needs --out"))?;
    let oracle = make_oracle(&cfg)?;
    let data = load(&cfg)?;
    let num_classes = data.num_classes.max(oracle.info().num_classes);
    let attack_cfg = cfg.attack_config(num_classes);
    let results = run_batch_parallel(&data.samples, oracle.as_ref(), cfg.mode, &attack_cfg, cfg.seed, cfg.workers);
    let name = oracle.info().name;
    let info = RunInfo {
        mode: cfg.mode,
        oracle: &name,
        budget: cfg.budget,
        seed: cfg.seed,
        epsilon: cfg.schedule.epsilon,
        num_classes,
    };
    let report = build_attack_report(&info, &data.samples, &results, &data.errors)?;
    write_attack_outputs(&out, cfg.mode, cfg.schedule.epsilon, &data.samples, &results, &report)?;
    eprintln!(
        "{}: mAP50 {} -> {}, success {:.2}, AQ {:.1}; wrote {}",
        cfg.mode,
        fmt_opt(report.clean.map50),
        fmt_opt(report.metrics.map50),
        report.success_rate,
        report.metrics.aq,
        out.join("report.json").display()
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.3}"))
}

fn eval(cfg: RunConfig) -> anyhow::Result<()> {
    let oracle = make_oracle(&cfg)?;
    let data = load(&cfg)?;
    let num_classes = data.num_classes.max(oracle.info().num_classes);
    let mut preds = Vec::with_capacity(data.samples.len());
    for s in &data.samples {
        preds.push(oracle.detect(&s.image).with_context(|| format!("querying {}", s.name))?);
    }
    let gts: Vec<_> = data.samples.iter().map(|s| s.objects.clone()).collect();
    let report = evaluate(&preds, &gts, num_classes, &vec![1; gts.len()])?;
    let output = EvalOutput {
        metrics: report.into(),
        oracle: oracle.info().name,
        images: data.samples.len(),
        errors: data.errors,
    };
    let text = to_json(&output);
    if let Some(out) = &cfg.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("report.json"), &text)?;
    }
    print!("{text}");
    Ok(())
}

fn make_toy_set(out: &Path, count: usize, seed: u64) -> anyhow::Result<()> {
    let det = ToyDetectorConfig::default();
    let samples = suite(seed, count, &SceneConfig::default(), &det);
    write_dataset(out, det.class_colors.len(), &samples)?;
    eprintln!("wrote {count} scenes to {}", out.display());
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Attack(args) => attack(resolve(args)?),
        Command::Eval(args) => eval(resolve(args)?),
        Command::ServeToy { addr, workers } => {
            let server = crate::server::serve(&addr, ToyDetector::new(ToyDetectorConfig::default())?, workers)?;
            eprintln!("serving toy detector on {}", server.base_url());
            server.join();
            Ok(())
        }
        Command::MakeToySet { out, count, seed } => make_toy_set(&out, count, seed),
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
