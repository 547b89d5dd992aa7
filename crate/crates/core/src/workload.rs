//! Task traces: parsing, serialization and seeded synthesis.
//!
//! Trace files are comma-separated UTF-8 text with a header line:
//!
//! ```text
//! task_id,tenant_id,priority,submit_time_ms,start_time_ms,end_time_ms,cpu,mem,disk
//! ```
//!
//! A task's duration is `end_time_ms - start_time_ms`; the recorded start time
//! is otherwise ignored since the simulator decides when tasks start.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::seed::rng_from_seed;
use crate::sim::{Millis, NodeId, ResourceVector, SimEvent, TaskSpec, TenantId};
use crate::{Error, Result};

pub const TRACE_HEADER: &str = "task_id,tenant_id,priority,submit_time_ms,start_time_ms,end_time_ms,cpu,mem,disk";

const COLUMNS: [&str; 9] = [
    "task_id",
    "tenant_id",
    "priority",
    "submit_time_ms",
    "start_time_ms",
    "end_time_ms",
    "cpu",
    "mem",
    "disk",
];

/// Parse a trace; output is sorted by submit time (then task id).
pub fn parse_trace<R: BufRead>(reader: R) -> Result<Vec<TaskSpec>> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => {
                return Err(Error::TraceParse {
                    line: 1,
                    reason: "missing header".into(),
                })
            }
            Some((i, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break (i + 1, line);
                }
            }
        }
    };
    let names: Vec<&str> = header.1.split(',').map(str::trim).collect();
    let mut index = [0usize; COLUMNS.len()];
    for (slot, col) in index.iter_mut().zip(COLUMNS) {
        *slot = names.iter().position(|n| *n == col).ok_or_else(|| Error::TraceParse {
            line: header.0,
            reason: format!("missing column `{col}`"),
        })?;
    }

    let mut out = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != names.len() {
            return Err(Error::TraceParse {
                line: line_no,
                reason: format!("expected {} fields, found {}", names.len(), fields.len()),
            });
        }
        let err = |reason: String| Error::TraceParse { line: line_no, reason };
        let field = |k: usize| fields[index[k]];
        fn int<T: std::str::FromStr>(s: &str, col: &str) -> std::result::Result<T, String> {
            s.parse().map_err(|_| format!("`{col}` is not an integer: {s:?}"))
        }
        fn real(s: &str, col: &str) -> std::result::Result<f64, String> {
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
                Ok(_) => Err(format!("`{col}` must be finite and >= 0: {s:?}")),
                Err(_) => Err(format!("`{col}` is not a number: {s:?}")),
            }
        }

        let task_id: u64 = int(field(0), COLUMNS[0]).map_err(err)?;
        let tenant_id: TenantId = int(field(1), COLUMNS[1]).map_err(err)?;
        let priority: u8 = int(field(2), COLUMNS[2]).map_err(err)?;
        let submit: Millis = int(field(3), COLUMNS[3]).map_err(err)?;
        let start: Millis = int(field(4), COLUMNS[4]).map_err(err)?;
        let end: Millis = int(field(5), COLUMNS[5]).map_err(err)?;
        let cpu = real(field(6), COLUMNS[6]).map_err(err)?;
        let mem = real(field(7), COLUMNS[7]).map_err(err)?;
        let disk = real(field(8), COLUMNS[8]).map_err(err)?;

        if start < submit {
            return Err(err(format!("start_time_ms {start} before submit_time_ms {submit}")));
        }
        if end <= start {
            return Err(err(format!("end_time_ms {end} not after start_time_ms {start}")));
        }
        out.push(TaskSpec {
            task_id,
            tenant_id,
            priority,
            submit_time: submit,
            duration: end - start,
            demand: ResourceVector::new(cpu, mem, disk),
        });
    }
    out.sort_by_key(|t| (t.submit_time, t.task_id));
    Ok(out)
}

/// Serialize in trace format, with start = submit and end = submit + duration.
pub fn serialize_trace(tasks: &[TaskSpec]) -> String {
    let mut s = String::with_capacity(64 * (tasks.len() + 1));
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for t in tasks {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            t.task_id,
            t.tenant_id,
            t.priority,
            t.submit_time,
            t.submit_time,
            t.submit_time + t.duration,
            t.demand.cpu,
            t.demand.mem,
            t.demand.disk
        );
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadLevel {
    Low,
    Med,
    High,
}

impl LoadLevel {
    pub const ALL: [LoadLevel; 3] = [LoadLevel::Low, LoadLevel::Med, LoadLevel::High];

    pub fn name(self) -> &'static str {
        match self {
            LoadLevel::Low => "low",
            LoadLevel::Med => "med",
            LoadLevel::High => "high",
        }
    }
}

/// Closed interval `[min, max]` sampled uniformly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    pub fn fixed(v: f64) -> Self {
        Range { min: v, max: v }
    }

    fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min >= 0.0 && self.min <= self.max
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

/// Arrival rates in tasks per second for each load level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRates {
    pub low: f64,
    pub med: f64,
    pub high: f64,
}

impl PhaseRates {
    pub fn uniform(rate: f64) -> Self {
        PhaseRates {
            low: rate,
            med: rate,
            high: rate,
        }
    }

    pub fn get(&self, level: LoadLevel) -> f64 {
        match level {
            LoadLevel::Low => self.low,
            LoadLevel::Med => self.med,
            LoadLevel::High => self.high,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TenantProfile {
    pub tenant_id: TenantId,
    pub rates: PhaseRates,
    pub cpu: Range,
    pub mem: Range,
    pub disk: Range,
    pub duration_ms: Range,
    #[serde(default = "default_priority")]
    pub priority: (u8, u8),
}

fn default_priority() -> (u8, u8) {
    (0, 0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub level: LoadLevel,
    pub duration_ms: Millis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub tenants: Vec<TenantProfile>,
    pub phases: Vec<Phase>,
    #[serde(default)]
    pub seed: u64,
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        for t in &self.tenants {
            let r = t.rates;
            if [r.low, r.med, r.high].iter().any(|x| !x.is_finite() || *x < 0.0) {
                return bad(format!("tenant {}: arrival rates must be >= 0", t.tenant_id));
            }
            for (name, range) in [("cpu", t.cpu), ("mem", t.mem), ("disk", t.disk), ("duration_ms", t.duration_ms)] {
                if !range.is_valid() {
                    return bad(format!("tenant {}: invalid {name} range {range:?}", t.tenant_id));
                }
            }
            if t.cpu.min <= 0.0 && t.mem.min <= 0.0 && t.disk.min <= 0.0 {
                return bad(format!(
                    "tenant {}: at least one demand range needs a positive minimum",
                    t.tenant_id
                ));
            }
            if t.duration_ms.min < 1.0 {
                return bad(format!("tenant {}: durations must be at least 1ms", t.tenant_id));
            }
            if t.priority.0 > t.priority.1 {
                return bad(format!("tenant {}: empty priority range", t.tenant_id));
            }
        }
        Ok(())
    }

    pub fn horizon_ms(&self) -> Millis {
        self.phases.iter().map(|p| p.duration_ms).sum()
    }

    /// Same tenants, a single phase at `level`.
    pub fn single_phase(&self, level: LoadLevel, duration_ms: Millis) -> WorkloadConfig {
        WorkloadConfig {
            tenants: self.tenants.clone(),
            phases: vec![Phase { level, duration_ms }],
            seed: self.seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> WorkloadConfig {
        WorkloadConfig {
            seed,
            ..self.clone()
        }
    }
}

/// Poisson arrivals per tenant and phase with uniform demands and durations.
///
/// Task ids are assigned 1.. in submit order (ties by tenant, then draw order).
pub fn generate_workload(config: &WorkloadConfig) -> Result<Vec<TaskSpec>> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let mut drawn: Vec<(Millis, usize, usize, TaskSpec)> = Vec::new();
    let mut draw = 0usize;
    for (ti, tenant) in config.tenants.iter().enumerate() {
        let mut phase_start: Millis = 0;
        for phase in &config.phases {
            let rate = tenant.rates.get(phase.level);
            let phase_end = phase_start + phase.duration_ms;
            if rate > 0.0 {
                let gap = Exp::new(rate / 1000.0).expect("positive rate");
                let mut t = phase_start as f64;
                loop {
                    t += gap.sample(&mut rng);
                    if t >= phase_end as f64 {
                        break;
                    }
                    let demand = ResourceVector::new(
                        tenant.cpu.sample(&mut rng),
                        tenant.mem.sample(&mut rng),
                        tenant.disk.sample(&mut rng),
                    );
                    let duration = tenant.duration_ms.sample(&mut rng).round().max(1.0) as Millis;
                    let priority = rng.random_range(tenant.priority.0..=tenant.priority.1);
                    let submit = t.floor() as Millis;
                    drawn.push((
                        submit,
                        ti,
                        draw,
                        TaskSpec {
                            task_id: 0,
                            tenant_id: tenant.tenant_id,
                            priority,
                            submit_time: submit,
                            duration,
                            demand,
                        },
                    ));
                    draw += 1;
                }
            }
            phase_start = phase_end;
        }
    }
    drawn.sort_by_key(|(submit, ti, d, _)| (*submit, *ti, *d));
    Ok(drawn
        .into_iter()
        .enumerate()
        .map(|(i, (_, _, _, mut spec))| {
            spec.task_id = i as u64 + 1;
            spec
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuationConfig {
    pub min_scale: f64,
    pub max_scale: f64,
    pub interval_ms: Millis,
    pub seed: u64,
}

impl FluctuationConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_scale > 0.0 && self.max_scale <= 1.0 && self.min_scale <= self.max_scale;
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "fluctuation bounds must satisfy 0 < min <= max <= 1, got [{}, {}]",
                self.min_scale, self.max_scale
            )));
        }
        if self.interval_ms == 0 {
            return Err(Error::InvalidConfig("fluctuation interval must be > 0".into()));
        }
        Ok(())
    }
}

/// Piecewise-constant capacity rescaling: every `interval_ms` up to and including
/// `horizon_ms`, each node gets a fresh scale drawn uniformly from the bounds.
pub fn generate_fluctuation(config: &FluctuationConfig, nodes: &[NodeId], horizon_ms: Millis) -> Result<Vec<SimEvent>> {
    config.validate()?;
    let range = Range::new(config.min_scale, config.max_scale);
    let mut rng = rng_from_seed(config.seed);
    let mut out = Vec::new();
    let mut t = config.interval_ms;
    while t <= horizon_ms {
        for &node in nodes {
            out.push(SimEvent::capacity_change(t, node, range.sample(&mut rng)));
        }
        t += config.interval_ms;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::EventKind;
    use proptest::prelude::*;

    const FIXTURE: &str = "\
task_id,tenant_id,priority,submit_time_ms,start_time_ms,end_time_ms,cpu,mem,disk
2,1,3,500,700,1700,0.5,2,0
1,0,0,100,100,350,1,1.5,10
";

    #[test]
    fn parses_fixture() {
        let tasks = parse_trace(FIXTURE.as_bytes()).unwrap();
        assert_eq!(tasks.len(), 2);
        assert_eq!(tasks[0].task_id, 1);
        assert_eq!(tasks[0].duration, 250);
        assert_eq!(tasks[0].demand, ResourceVector::new(1.0, 1.5, 10.0));
        assert_eq!(tasks[1].task_id, 2);
        assert_eq!(tasks[1].tenant_id, 1);
        assert_eq!(tasks[1].priority, 3);
        assert_eq!(tasks[1].submit_time, 500);
        assert_eq!(tasks[1].duration, 1000);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_trace(format!("{TRACE_HEADER}\n").as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn columns_may_be_reordered() {
        let text = "cpu,mem,disk,task_id,tenant_id,priority,submit_time_ms,start_time_ms,end_time_ms\n1,0,0,5,0,0,0,0,10\n";
        let t = parse_trace(text.as_bytes()).unwrap();
        assert_eq!(t[0].task_id, 5);
        assert_eq!(t[0].duration, 10);
    }

    fn parse_err_line(text: &str) -> usize {
        match parse_trace(text.as_bytes()) {
            Err(Error::TraceParse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_name_the_line() {
        assert_eq!(parse_err_line(""), 1);
        assert_eq!(parse_err_line("task_id,tenant_id\n"), 1);
        let bad_order = format!("{TRACE_HEADER}\n1,0,0,0,0,10,1,0,0\n2,0,0,0,50,40,1,0,0\n");
        assert_eq!(parse_err_line(&bad_order), 3);
        let before_submit = format!("{TRACE_HEADER}\n1,0,0,10,5,40,1,0,0\n");
        assert_eq!(parse_err_line(&before_submit), 2);
        let non_numeric = format!("{TRACE_HEADER}\n1,0,0,0,0,10,x,0,0\n");
        assert_eq!(parse_err_line(&non_numeric), 2);
        let short = format!("{TRACE_HEADER}\n1,0,0,0,0,10,1,0\n");
        assert_eq!(parse_err_line(&short), 2);
        let negative = format!("{TRACE_HEADER}\n1,0,0,0,0,10,-1,0,0\n");
        assert_eq!(parse_err_line(&negative), 2);
    }

    fn profile(rate: f64) -> TenantProfile {
        TenantProfile {
            tenant_id: 0,
            rates: PhaseRates::uniform(rate),
            cpu: Range::new(0.5, 2.0),
            mem: Range::new(1.0, 4.0),
            disk: Range::fixed(0.0),
            duration_ms: Range::new(100.0, 1000.0),
            priority: (0, 3),
        }
    }

    fn config(rate: f64, seconds: u64, seed: u64) -> WorkloadConfig {
        WorkloadConfig {
            tenants: vec![profile(rate)],
            phases: vec![Phase {
                level: LoadLevel::Med,
                duration_ms: seconds * 1000,
            }],
            seed,
        }
    }

    #[test]
    fn zero_rate_is_empty() {
        assert!(generate_workload(&config(0.0, 100, 1)).unwrap().is_empty());
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate_workload(&config(2.0, 50, 9)).unwrap();
        let b = generate_workload(&config(2.0, 50, 9)).unwrap();
        let c = generate_workload(&config(2.0, 50, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn poisson_count_matches_rate() {
        // 1 task/s over 100s: per-seed counts near 100, mean over 20 seeds within 10%
        let counts: Vec<usize> = (0..20)
            .map(|s| generate_workload(&config(1.0, 100, s)).unwrap().len())
            .collect();
        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        assert!((90.0..=110.0).contains(&mean), "mean {mean}");
        assert!(counts.iter().all(|c| (70..=130).contains(c)), "{counts:?}");
    }

    #[test]
    fn phases_follow_their_rates() {
        let cfg = WorkloadConfig {
            tenants: vec![TenantProfile {
                rates: PhaseRates {
                    low: 0.0,
                    med: 0.0,
                    high: 5.0,
                },
                ..profile(0.0)
            }],
            phases: vec![
                Phase {
                    level: LoadLevel::Low,
                    duration_ms: 10_000,
                },
                Phase {
                    level: LoadLevel::High,
                    duration_ms: 10_000,
                },
            ],
            seed: 4,
        };
        let tasks = generate_workload(&cfg).unwrap();
        assert!(!tasks.is_empty());
        assert!(tasks.iter().all(|t| (10_000..20_000).contains(&t.submit_time)));
    }

    #[test]
    fn invalid_ranges_rejected() {
        let mut cfg = config(1.0, 10, 0);
        cfg.tenants[0].cpu = Range::new(3.0, 1.0);
        assert!(generate_workload(&cfg).is_err());
        let mut cfg = config(1.0, 10, 0);
        cfg.tenants[0].rates.med = -1.0;
        assert!(generate_workload(&cfg).is_err());
    }

    fn fluct(min: f64, max: f64, interval: Millis) -> FluctuationConfig {
        FluctuationConfig {
            min_scale: min,
            max_scale: max,
            interval_ms: interval,
            seed: 3,
        }
    }

    #[test]
    fn fluctuation_degenerate_bounds() {
        let evs = generate_fluctuation(&fluct(1.0, 1.0, 100), &[0, 1], 1000).unwrap();
        assert_eq!(evs.len(), 20);
        assert!(evs
            .iter()
            .all(|e| matches!(e.kind, EventKind::CapacityChange { scale, .. } if scale == 1.0)));
    }

    #[test]
    fn fluctuation_counts() {
        assert!(generate_fluctuation(&fluct(0.5, 1.0, 100), &[0], 99).unwrap().is_empty());
        let evs = generate_fluctuation(&fluct(0.5, 1.0, 100), &[0], 1000).unwrap();
        let times: Vec<Millis> = evs.iter().map(|e| e.time).collect();
        assert_eq!(times, (1..=10).map(|k| k * 100).collect::<Vec<_>>());
        assert!(generate_fluctuation(&fluct(0.0, 1.0, 100), &[0], 1000).is_err());
        assert!(generate_fluctuation(&fluct(0.8, 0.5, 100), &[0], 1000).is_err());
    }

    fn arb_task() -> impl Strategy<Value = TaskSpec> {
        (
            any::<u64>(),
            any::<u32>(),
            any::<u8>(),
            0u64..1_000_000_000,
            1u64..1_000_000,
            prop::array::uniform3(0.0f64..1e6),
        )
            .prop_map(|(id, tenant, prio, submit, dur, d)| TaskSpec {
                task_id: id,
                tenant_id: tenant,
                priority: prio,
                submit_time: submit,
                duration: dur,
                demand: ResourceVector::from_array(d),
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_roundtrip(mut tasks in prop::collection::vec(arb_task(), 0..20)) {
            tasks.sort_by_key(|t| (t.submit_time, t.task_id));
            let text = serialize_trace(&tasks);
            prop_assert_eq!(parse_trace(text.as_bytes()).unwrap(), tasks);
        }

        #[test]
        fn generated_tasks_are_valid(seed in any::<u64>(), rate in 0.0f64..5.0) {
            let tasks = generate_workload(&config(rate, 20, seed)).unwrap();
            for t in &tasks {
                prop_assert!(t.validate().is_ok());
                prop_assert!(t.submit_time < 20_000);
            }
            prop_assert!(tasks.windows(2).all(|w| w[0].submit_time <= w[1].submit_time));
        }

        #[test]
        fn fluctuation_scales_within_bounds(lo in 0.05f64..1.0, span in 0.0f64..1.0, seed in any::<u64>()) {
            let hi = (lo + span).min(1.0);
            let cfg = FluctuationConfig { min_scale: lo, max_scale: hi, interval_ms: 50, seed };
            for e in generate_fluctuation(&cfg, &[0, 1, 2], 1000).unwrap() {
                let EventKind::CapacityChange { scale, .. } = e.kind else { unreachable!() };
                prop_assert!(scale >= lo && scale <= hi);
            }
        }
    }
}
