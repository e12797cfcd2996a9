//! Run configuration: command-line flags over a TOML file over built-in defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use prfa_core::{AttackConfig, AttackMode, ObjectiveConfig, ScheduleConfig};
use serde::Deserialize;

/// Optional settings shared by the config file and the flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, clap::Args)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    /// Attack mode: ss, ss-prior, ss-prior-flip, ss-prior-parallel or prfa.
    #[arg(long)]
    pub mode: Option<String>,
    /// Detector oracle: `toy` or `http`.
    #[arg(long)]
    pub oracle: Option<String>,
    /// Base URL of an HTTP detector. Overridden by PRFA_ENDPOINT.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Maximum queries per image, the clean query included.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub iou_threshold: Option<f64>,
    /// Initial patch area fraction.
    #[arg(long)]
    pub e0: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub e_milestones: Option<Vec<usize>>,
    /// Initial number of parallel patches.
    #[arg(long)]
    pub p0: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub p_milestones: Option<Vec<usize>>,
    /// Prior margin in pixels (default: 10% of sqrt(w*h)).
    #[arg(long)]
    pub dilation: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Per-request timeout for the HTTP oracle, in seconds.
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Directory of `<image stem>.png` objectness masks.
    #[arg(long)]
    pub mask_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Fields set in `self` win over `lower`.
    pub fn over(self, lower: Settings) -> Settings {
        macro_rules! pick {
            ($($f:ident),*) => { Settings { $($f: self.$f.or(lower.$f)),* } };
        }
        pick!(
            mode, oracle, endpoint, budget, epsilon, zeta, lambda, iou_threshold, e0, e_milestones, p0,
            p_milestones, dilation, seed, workers, timeout_secs, images, annotations, mask_dir, out
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleChoice {
    Toy,
    Http(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: AttackMode,
    pub oracle: OracleChoice,
    pub budget: usize,
    pub zeta: f64,
    pub lambda: f64,
    pub iou_threshold: f64,
    pub schedule: ScheduleConfig,
    pub dilation: Option<usize>,
    pub seed: u64,
    pub workers: usize,
    pub timeout: Duration,
    pub images: PathBuf,
    pub annotations: PathBuf,
    pub mask_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub const DEFAULT_BUDGET: usize = 4000;

impl RunConfig {
    /// Resolves settings against defaults. `endpoint_env` overrides any configured endpoint.
    pub fn resolve(s: Settings, endpoint_env: Option<String>, default_workers: usize) -> anyhow::Result<Self> {
        let defaults = ScheduleConfig::default();
        let mode: AttackMode = s.mode.as_deref().unwrap_or("prfa").parse()?;
        let oracle = match s.oracle.as_deref().unwrap_or("toy") {
            "toy" => OracleChoice::Toy,
            "http" => OracleChoice::Http(
                endpoint_env
                    .or(s.endpoint)
                    .ok_or_else(|| anyhow::anyhow!("--oracle http needs --endpoint or PRFA_ENDPOINT"))?,
            ),
            other => anyhow::bail!("unknown oracle `{other}` (expected `toy` or `http`)"),
        };
        let schedule = ScheduleConfig {
            e0: s.e0.unwrap_or(defaults.e0),
            e_milestones: s.e_milestones.unwrap_or(defaults.e_milestones),
            p0: s.p0.unwrap_or(defaults.p0),
            p_milestones: s.p_milestones.unwrap_or(defaults.p_milestones),
            epsilon: s.epsilon.unwrap_or(defaults.epsilon),
        };
        let cfg = Self {
            mode,
            oracle,
            budget: s.budget.unwrap_or(DEFAULT_BUDGET),
            zeta: s.zeta.unwrap_or(0.90),
            lambda: s.lambda.unwrap_or(1.0),
            iou_threshold: s.iou_threshold.unwrap_or(0.50),
            schedule,
            dilation: s.dilation,
            seed: s.seed.unwrap_or(0),
            workers: s.workers.unwrap_or(default_workers).max(1),
            timeout: Duration::from_secs(s.timeout_secs.unwrap_or(30)),
            images: s.images.ok_or_else(|| anyhow::anyhow!("--images is required"))?,
            annotations: s.annotations.ok_or_else(|| anyhow::anyhow!("--annotations is required"))?,
            mask_dir: s.mask_dir,
            out: s.out,
        };
        cfg.attack_config(1).validate()?;
        Ok(cfg)
    }

    pub fn attack_config(&self, num_classes: usize) -> AttackConfig {
        AttackConfig {
            objective: ObjectiveConfig {
                zeta: self.zeta,
                lambda: self.lambda,
                iou_threshold: self.iou_threshold,
                num_classes,
            },
            schedule: self.schedule.clone(),
            budget: self.budget,
            dilation: self.dilation,
        }
    }

    /// Checks that every input path exists.
    pub fn check_paths(&self) -> anyhow::Result<()> {
        let mut paths: Vec<&Path> = vec![&self.images, &self.annotations];
        paths.extend(self.mask_dir.as_deref());
        for p in paths {
            anyhow::ensure!(p.exists(), "{} does not exist", p.display());
        }
        Ok(())
    }
}
