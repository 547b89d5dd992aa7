//! TOML run configuration.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use tenantsched_core::baselines::{BaselineKind, SchedulerPolicy};
use tenantsched_core::mdp::{FeatureParams, MdpConfig};
use tenantsched_core::net::MlpParams;
use tenantsched_core::ppo::{PolicyScheduler, PpoHyper, Scenario, WorkloadSource};
use tenantsched_core::sim::{ClusterConfig, Millis, TaskSpec};
use tenantsched_core::workload::{parse_trace, FluctuationConfig, Phase, TenantProfile, WorkloadConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. Drives the synthetic workload, training and evaluation.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_schedulers")]
    pub schedulers: Vec<String>,
    /// Evaluation episodes, one per derived seed.
    #[serde(default = "default_eval_seeds")]
    pub eval_seeds: usize,
    /// Policy checkpoint, relative to the config file. Defaults to `policy.ckpt` in `out_dir`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    pub cluster: ClusterConfig,
    pub workload: WorkloadSection,
    #[serde(default)]
    pub fluctuation: Option<FluctuationConfig>,
    #[serde(default)]
    pub mdp: MdpConfig,
    #[serde(default)]
    pub ppo: PpoHyper,
    #[serde(default)]
    pub sweep: SweepConfig,
}

/// Either a trace file or a synthetic workload description.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    /// Trace file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tenants: Vec<TenantProfile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phases: Vec<Phase>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Tumbling window for the JFI-over-time series.
    pub jfi_window_ms: Millis,
    /// Capacity schedule for the fluctuation sweep; falls back to the top-level one.
    pub fluctuation: Option<FluctuationConfig>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            jfi_window_ms: 10_000,
            fluctuation: None,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_schedulers() -> Vec<String> {
    vec!["fifo".into(), "random".into()]
}

fn default_eval_seeds() -> usize {
    5
}

/// A scheduler selectable by name: one of the baselines or the trained policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchedulerChoice {
    Baseline(BaselineKind),
    Rl,
}

impl SchedulerChoice {
    pub fn name(self) -> &'static str {
        match self {
            SchedulerChoice::Baseline(k) => k.name(),
            SchedulerChoice::Rl => "rl",
        }
    }

    /// `rl` runs greedily and needs `params`.
    pub fn build(self, params: Option<&MlpParams>, features: FeatureParams) -> Result<Box<dyn SchedulerPolicy + Send>> {
        Ok(match self {
            SchedulerChoice::Baseline(k) => k.build(),
            SchedulerChoice::Rl => {
                let params = params.context("the `rl` scheduler needs a trained checkpoint")?;
                Box::new(PolicyScheduler::new(params.clone(), features, true))
            }
        })
    }
}

impl FromStr for SchedulerChoice {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "rl" {
            return Ok(SchedulerChoice::Rl);
        }
        Ok(SchedulerChoice::Baseline(s.parse()?))
    }
}

impl RunConfig {
    /// Read, resolve relative paths and validate.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.workload.trace, &mut cfg.checkpoint].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.eval_seeds > 0, "eval_seeds must be > 0");
        ensure!(self.sweep.jfi_window_ms > 0, "sweep.jfi_window_ms must be > 0");
        if let Some(f) = &self.sweep.fluctuation {
            f.validate()?;
        }
        self.scheduler_choices()?;
        self.ppo.validate()?;
        match (&self.workload.trace, self.workload.tenants.is_empty()) {
            (Some(_), false) => bail!("workload: give either `trace` or `tenants`/`phases`, not both"),
            (None, true) => bail!("workload: `trace` or at least one tenant profile is required"),
            (Some(p), true) => ensure!(p.is_file(), "trace file {} does not exist", p.display()),
            (None, false) => ensure!(!self.workload.phases.is_empty(), "workload: at least one phase is required"),
        }
        self.base_scenario()?.validate()?;
        Ok(())
    }

    pub fn scheduler_choices(&self) -> Result<Vec<SchedulerChoice>> {
        ensure!(!self.schedulers.is_empty(), "no schedulers selected");
        self.schedulers.iter().map(|s| s.parse()).collect()
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out_dir.join("policy.ckpt"))
    }

    /// Synthetic workload seeded from the master seed, if one is configured.
    pub fn synthetic_workload(&self) -> Option<WorkloadConfig> {
        if self.workload.trace.is_some() {
            return None;
        }
        Some(WorkloadConfig {
            tenants: self.workload.tenants.clone(),
            phases: self.workload.phases.clone(),
            seed: self.seed,
        })
    }

    pub fn read_trace(&self) -> Result<Option<Vec<TaskSpec>>> {
        let Some(path) = &self.workload.trace else {
            return Ok(None);
        };
        let file = fs::File::open(path).with_context(|| format!("opening trace {}", path.display()))?;
        let tasks = parse_trace(BufReader::new(file)).with_context(|| format!("parsing trace {}", path.display()))?;
        Ok(Some(tasks))
    }

    /// Scenario without capacity fluctuation unless configured at top level.
    pub fn base_scenario(&self) -> Result<Scenario> {
        let workload = match self.read_trace()? {
            Some(tasks) => WorkloadSource::Trace(tasks),
            None => WorkloadSource::Synthetic(self.synthetic_workload().expect("no trace configured")),
        };
        Ok(Scenario {
            cluster: self.cluster.clone(),
            workload,
            fluctuation: self.fluctuation,
            mdp: self.mdp.clone(),
        })
    }

    pub fn hyper(&self) -> PpoHyper {
        PpoHyper {
            seed: self.seed,
            ..self.ppo.clone()
        }
    }
}
