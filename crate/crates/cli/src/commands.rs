//! The harness commands. Each returns the paths it wrote.
//!
//! Everything except the `wall_clock_s` field of the JSON reports is a pure
//! function of the configuration, so reruns produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;

use tenantsched_core::mdp::jain_index;
use tenantsched_core::net::{load_checkpoint, save_checkpoint, MlpParams};
use tenantsched_core::ppo::{curve_csv, run_episode, train_with, EpisodeResult, SchedEnv, Scenario, WorkloadSource};
use tenantsched_core::seed::{derive_seed, rng_from_seed};
use tenantsched_core::sim::Millis;
use tenantsched_core::workload::{generate_workload, serialize_trace};

use crate::config::{RunConfig, SchedulerChoice};
use crate::plot::{line_chart, Series};
use crate::report::{episodes_csv, rows_csv, MeanStd, RunReport, SchedulerRow, TrainingSummary};

const EVAL_ENV_STREAM: u64 = 0xE7A1_0001;
const EVAL_RNG_STREAM: u64 = 0xE7A1_0002;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepMode {
    /// One evaluation per configured workload phase.
    #[value(name = "load_phases")]
    LoadPhases,
    /// JFI over time under a capacity-fluctuation schedule.
    #[value(name = "fluctuation")]
    Fluctuation,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("creating directory {}", dir.display()))?;
        }
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(path.to_path_buf())
}

fn write_report(cfg: &RunConfig, name: &str, report: &RunReport) -> Result<PathBuf> {
    write_file(&cfg.out_dir.join(name), report.to_json()?)
}

/// Write one synthetic trace drawn with the master seed.
pub fn cmd_gen_trace(cfg: &RunConfig, out_path: &Path) -> Result<PathBuf> {
    let Some(workload) = cfg.synthetic_workload() else {
        bail!("gen-trace needs a synthetic workload (tenants and phases), not a trace file");
    };
    let tasks = generate_workload(&workload)?;
    write_file(out_path, serialize_trace(&tasks))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let start = Instant::now();
    let scenario = cfg.base_scenario()?;
    let hyper = cfg.hyper();
    let out = train_with(&scenario, &hyper, |p| {
        println!(
            "update {:>4}  reward {:>9.5}  policy_loss {:>9.5}  value_loss {:>9.5}  entropy {:.4}",
            p.update, p.mean_reward, p.policy_loss, p.value_loss, p.entropy
        );
    })?;

    let ckpt = cfg.checkpoint_path();
    if let Some(dir) = ckpt.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating directory {}", dir.display()))?;
    }
    save_checkpoint(&out.params, &ckpt).with_context(|| format!("writing checkpoint {}", ckpt.display()))?;
    log::info!("wrote {}", ckpt.display());
    let mut written = vec![ckpt];
    written.push(write_file(&cfg.out_dir.join("curve.csv"), curve_csv(&out.curve))?);

    let mut report = RunReport::new("train", cfg, start.elapsed().as_secs_f64());
    report.training = out.curve.last().map(|p| TrainingSummary {
        updates: out.curve.len(),
        episodes: out.episodes,
        final_mean_reward: p.mean_reward,
        final_value_loss: p.value_loss,
    });
    written.push(write_report(cfg, "train_report.json", &report)?);
    Ok(written)
}

/// Greedy evaluation of the trained policy, one row per seed.
pub fn cmd_eval(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let start = Instant::now();
    let scenario = cfg.base_scenario()?;
    let params = load_policy(cfg, &scenario)?;
    let runs = run_seeds(&scenario, SchedulerChoice::Rl, Some(&params), cfg.seed, cfg.eval_seeds, None)?;
    let episodes: Vec<EpisodeResult> = runs.into_iter().map(|r| r.result).collect();

    let mut written = vec![write_file(&cfg.out_dir.join("eval.csv"), episodes_csv(&episodes))?];
    let mut report = RunReport::new("eval", cfg, start.elapsed().as_secs_f64());
    report.schedulers.push(SchedulerRow::from_episodes("rl", None, &episodes));
    written.push(write_report(cfg, "eval_report.json", &report)?);
    Ok(written)
}

/// Evaluate every selected scheduler on the same episodes.
pub fn compare_rows(cfg: &RunConfig) -> Result<Vec<SchedulerRow>> {
    let scenario = cfg.base_scenario()?;
    let choices = cfg.scheduler_choices()?;
    let params = policy_if_needed(cfg, &scenario, &choices)?;
    choices
        .iter()
        .map(|&c| {
            let runs = run_seeds(&scenario, c, params.as_ref(), cfg.seed, cfg.eval_seeds, None)?;
            let episodes: Vec<EpisodeResult> = runs.into_iter().map(|r| r.result).collect();
            Ok(SchedulerRow::from_episodes(c.name(), None, &episodes))
        })
        .collect()
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let start = Instant::now();
    let rows = compare_rows(cfg)?;
    let mut written = vec![write_file(&cfg.out_dir.join("compare.csv"), rows_csv(&rows, None))?];
    let mut report = RunReport::new("compare", cfg, start.elapsed().as_secs_f64());
    report.schedulers = rows;
    written.push(write_report(cfg, "compare_report.json", &report)?);
    Ok(written)
}

pub fn cmd_sweep(cfg: &RunConfig, mode: SweepMode) -> Result<Vec<PathBuf>> {
    match mode {
        SweepMode::LoadPhases => sweep_load_phases(cfg),
        SweepMode::Fluctuation => sweep_fluctuation(cfg),
    }
}

/// Rows ordered by scheduler, then by phase as configured.
pub fn load_phase_rows(cfg: &RunConfig) -> Result<Vec<SchedulerRow>> {
    let Some(workload) = cfg.synthetic_workload() else {
        bail!("the load_phases sweep needs a synthetic workload with phases");
    };
    let base = cfg.base_scenario()?;
    let choices = cfg.scheduler_choices()?;
    let params = policy_if_needed(cfg, &base, &choices)?;
    let mut rows = Vec::new();
    for &c in &choices {
        for phase in &workload.phases {
            let scenario = Scenario {
                workload: WorkloadSource::Synthetic(workload.single_phase(phase.level, phase.duration_ms)),
                ..base.clone()
            };
            let runs = run_seeds(&scenario, c, params.as_ref(), cfg.seed, cfg.eval_seeds, None)?;
            let episodes: Vec<EpisodeResult> = runs.into_iter().map(|r| r.result).collect();
            rows.push(SchedulerRow::from_episodes(c.name(), Some(phase.level.name()), &episodes));
        }
    }
    Ok(rows)
}

fn sweep_load_phases(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let start = Instant::now();
    let rows = load_phase_rows(cfg)?;
    let mut series: Vec<Series> = Vec::new();
    for row in &rows {
        match series.last_mut() {
            Some(s) if s.name == row.scheduler => {
                let x = s.points.len() as f64;
                s.points.push((x, row.jfi.mean));
            }
            _ => series.push(Series {
                name: row.scheduler.clone(),
                points: vec![(0.0, row.jfi.mean)],
            }),
        }
    }
    let svg = line_chart("Final JFI per load phase", "phase index", "JFI", &series);
    let mut written = vec![
        write_file(&cfg.out_dir.join("sweep_load_phases.csv"), rows_csv(&rows, Some("phase")))?,
        write_file(&cfg.out_dir.join("sweep_load_phases.svg"), svg)?,
    ];
    let mut report = RunReport::new("sweep load_phases", cfg, start.elapsed().as_secs_f64());
    report.schedulers = rows;
    written.push(write_report(cfg, "sweep_load_phases_report.json", &report)?);
    Ok(written)
}

/// Per-window JFI of one scheduler, mean and std over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct JfiSeries {
    pub scheduler: String,
    pub window_ms: Millis,
    pub jfi: Vec<MeanStd>,
    pub episodes: Vec<EpisodeResult>,
}

pub fn fluctuation_series(cfg: &RunConfig) -> Result<Vec<JfiSeries>> {
    let mut scenario = cfg.base_scenario()?;
    scenario.fluctuation = cfg.sweep.fluctuation.or(cfg.fluctuation);
    if scenario.fluctuation.is_none() {
        log::warn!("no fluctuation schedule configured; capacities stay constant");
    }
    let horizon = scenario_horizon(&scenario);
    let window = cfg.sweep.jfi_window_ms;
    let choices = cfg.scheduler_choices()?;
    let params = policy_if_needed(cfg, &scenario, &choices)?;
    choices
        .iter()
        .map(|&c| {
            let runs = run_seeds(&scenario, c, params.as_ref(), cfg.seed, cfg.eval_seeds, Some((window, horizon)))?;
            let windows = runs.first().map_or(0, |r| r.window_jfi.len());
            let jfi = (0..windows)
                .map(|w| MeanStd::of(&runs.iter().map(|r| r.window_jfi[w]).collect::<Vec<_>>()))
                .collect();
            Ok(JfiSeries {
                scheduler: c.name().to_string(),
                window_ms: window,
                jfi,
                episodes: runs.into_iter().map(|r| r.result).collect(),
            })
        })
        .collect()
}

pub fn fluctuation_csv(series: &[JfiSeries]) -> String {
    let mut out = String::from("scheduler,window_start_ms,window_end_ms,jfi_mean,jfi_std\n");
    for s in series {
        for (i, m) in s.jfi.iter().enumerate() {
            let from = i as Millis * s.window_ms;
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6}\n",
                s.scheduler,
                from,
                from + s.window_ms,
                m.mean,
                m.std
            ));
        }
    }
    out
}

fn sweep_fluctuation(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let start = Instant::now();
    let series = fluctuation_series(cfg)?;
    let plot: Vec<Series> = series
        .iter()
        .map(|s| Series {
            name: s.scheduler.clone(),
            points: s
                .jfi
                .iter()
                .enumerate()
                .map(|(i, m)| ((i as Millis + 1) as f64 * s.window_ms as f64 / 1000.0, m.mean))
                .collect(),
        })
        .collect();
    let svg = line_chart("JFI over time under capacity fluctuation", "time (s)", "window JFI", &plot);
    let mut written = vec![
        write_file(&cfg.out_dir.join("sweep_fluctuation.csv"), fluctuation_csv(&series))?,
        write_file(&cfg.out_dir.join("sweep_fluctuation.svg"), svg)?,
    ];
    let mut report = RunReport::new("sweep fluctuation", cfg, start.elapsed().as_secs_f64());
    report.schedulers = series
        .iter()
        .map(|s| SchedulerRow::from_episodes(&s.scheduler, Some("fluctuation"), &s.episodes))
        .collect();
    written.push(write_report(cfg, "sweep_fluctuation_report.json", &report)?);
    Ok(written)
}

/// Length of the simulated period that arrivals can occupy.
pub fn scenario_horizon(scenario: &Scenario) -> Millis {
    match &scenario.workload {
        WorkloadSource::Synthetic(w) => w.horizon_ms(),
        WorkloadSource::Trace(t) => t.iter().map(|t| t.submit_time + t.duration).max().unwrap_or(0),
    }
}

pub struct SeedRun {
    pub result: EpisodeResult,
    /// JFI of each tumbling window, when windows were requested.
    pub window_jfi: Vec<f64>,
}

/// Run `choice` for one episode per seed `0..seeds`, in parallel, returned in seed order.
///
/// Seed `k` fixes both the episode (trace and fluctuation schedule) and the
/// scheduler's random stream, so all schedulers face the same episodes.
pub fn run_seeds(
    scenario: &Scenario,
    choice: SchedulerChoice,
    params: Option<&MlpParams>,
    seed: u64,
    seeds: usize,
    windows: Option<(Millis, Millis)>,
) -> Result<Vec<SeedRun>> {
    let env_base = derive_seed(seed, EVAL_ENV_STREAM);
    let rng_base = derive_seed(seed, EVAL_RNG_STREAM);
    (0..seeds as u64)
        .into_par_iter()
        .map(|k| {
            let mut env = SchedEnv::new(scenario.clone(), derive_seed(env_base, k))?;
            let mut policy = choice.build(params, env.feature_params())?;
            let mut rng = rng_from_seed(derive_seed(rng_base, k));
            let result = run_episode(&mut env, &mut *policy, &mut rng)?;
            let window_jfi = match windows {
                None => Vec::new(),
                Some((w, horizon)) => {
                    let state = env.state().expect("episode was run");
                    (0..horizon.div_ceil(w))
                        .map(|i| {
                            let from = i * w;
                            jain_index(&state.tenant_resource_time_between(from, (from + w).min(horizon)))
                        })
                        .collect::<tenantsched_core::Result<Vec<f64>>>()?
                }
            };
            Ok(SeedRun { result, window_jfi })
        })
        .collect()
}

fn policy_if_needed(cfg: &RunConfig, scenario: &Scenario, choices: &[SchedulerChoice]) -> Result<Option<MlpParams>> {
    if choices.contains(&SchedulerChoice::Rl) {
        Ok(Some(load_policy(cfg, scenario)?))
    } else {
        Ok(None)
    }
}

pub fn load_policy(cfg: &RunConfig, scenario: &Scenario) -> Result<MlpParams> {
    let path = cfg.checkpoint_path();
    ensure!(
        path.is_file(),
        "checkpoint {} not found; run `tenantsched train` first",
        path.display()
    );
    let params = load_checkpoint(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let env = SchedEnv::new(scenario.clone(), 0)?;
    ensure!(
        params.obs_dim() == env.obs_dim() && params.action_dim() == env.action_dim(),
        "checkpoint {} was trained for a different cluster ({} inputs, {} actions; this cluster needs {} and {})",
        path.display(),
        params.obs_dim(),
        params.action_dim(),
        env.obs_dim(),
        env.action_dim()
    );
    Ok(params)
}
