//! Configuration, orchestration and output artifacts for T-flow runs.

pub mod config;
pub mod dump;
pub mod run;

pub use config::{parse_config, ConfigError, RunConfig};
pub use dump::{dump_kernel, load_kernel, DumpError, KernelDump};
pub use run::{cmd_run, cmd_validate, execute, CliError, CSV_HEADER};
