//! Small built-in environments that train in seconds on a laptop.

use crate::mdp::MdpConfig;
use crate::ppo::{Scenario, WorkloadSource};
use crate::sim::{ClusterConfig, ResourceVector};
use crate::workload::{LoadLevel, Phase, PhaseRates, Range, TenantProfile, WorkloadConfig};

pub const REFERENCE_NODES: usize = 4;

/// Two big and two small nodes. Only the big ones fit tenant 0.
pub fn reference_cluster() -> ClusterConfig {
    let big = ResourceVector::new(16.0, 32.0, 100.0);
    let small = ResourceVector::new(4.0, 8.0, 100.0);
    ClusterConfig {
        nodes: vec![big, big, small, small],
        tenants: vec![0, 1],
    }
}

/// Two tenants with very different task shapes: tenant 0 sends few large,
/// long tasks that only fit the big nodes, tenant 1 many small short ones.
pub fn reference_tenants() -> Vec<TenantProfile> {
    vec![
        TenantProfile {
            tenant_id: 0,
            rates: PhaseRates {
                low: 0.2,
                med: 0.4,
                high: 0.55,
            },
            cpu: Range::new(6.0, 10.0),
            mem: Range::new(4.0, 12.0),
            disk: Range::new(5.0, 20.0),
            duration_ms: Range::new(3_000.0, 8_000.0),
            priority: (0, 5),
        },
        TenantProfile {
            tenant_id: 1,
            rates: PhaseRates {
                low: 0.8,
                med: 1.6,
                high: 2.2,
            },
            cpu: Range::new(0.5, 1.5),
            mem: Range::new(0.5, 2.0),
            disk: Range::new(1.0, 5.0),
            duration_ms: Range::new(1_000.0, 4_000.0),
            priority: (0, 5),
        },
    ]
}

/// 100 s at medium load, about 200 tasks.
pub fn reference_workload(seed: u64) -> WorkloadConfig {
    WorkloadConfig {
        tenants: reference_tenants(),
        phases: vec![Phase {
            level: LoadLevel::Med,
            duration_ms: 100_000,
        }],
        seed,
    }
}

/// Low, medium and high phases of 40 s each.
pub fn phased_workload(seed: u64) -> WorkloadConfig {
    WorkloadConfig {
        tenants: reference_tenants(),
        phases: LoadLevel::ALL
            .iter()
            .map(|&level| Phase {
                level,
                duration_ms: 40_000,
            })
            .collect(),
        seed,
    }
}

/// Reference cluster with a fresh synthetic trace per episode.
pub fn reference_scenario(seed: u64) -> Scenario {
    Scenario {
        cluster: reference_cluster(),
        workload: WorkloadSource::Synthetic(reference_workload(seed)),
        fluctuation: None,
        mdp: MdpConfig::default(),
    }
}
