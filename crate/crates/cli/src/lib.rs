//! Experiment harness around `tenantsched-core`: configuration, commands,
//! reports and plots. The `tenantsched` binary is a thin wrapper over
//! [`commands`].

pub mod commands;
pub mod config;
pub mod plot;
pub mod report;

pub use commands::SweepMode;
pub use config::{RunConfig, SchedulerChoice};
pub use report::{RunReport, SchedulerRow};
