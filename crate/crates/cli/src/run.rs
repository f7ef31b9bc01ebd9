//! Run orchestration, output files and validation checks.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use tflow::observables_validation::{
    current, local_observables, observable_records, stationary_extract, u0_oracle, ObservableRecord, U0Comparison,
};
use tflow::superfermion_algebra::{algebra_residuals, apply_superop, Spin};
use tflow::tflow_core::{flow_run, FlowError, FlowSetup, FlowTrajectory, Snapshot};

use crate::config::{ConfigError, RunConfig};
use crate::dump::{dump_kernel, DumpError, KernelDump};

pub const CSV_HEADER: &str = "T,t,n_up,n_down,n_corr,fluct,I_L,I_R,choi_min,trace_err";

/// Propagators with a Choi eigenvalue below this are a fatal error.
const CHOI_FATAL: f64 = -1e-6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Dump(#[from] DumpError),
    #[error("flow failed: {0}")]
    Flow(#[from] FlowError),
    #[error("non-physical propagator: {0}")]
    NonPhysical(String),
    #[error("{0} validation check(s) failed")]
    ValidationFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ValidationFailed(_) => 1,
            CliError::Config(_) | CliError::Io(_) | CliError::Dump(_) => 2,
            CliError::Flow(FlowError::BadConfig(_)) => 2,
            CliError::Flow(_) | CliError::NonPhysical(_) => 3,
        }
    }
}

/// A finished flow with observables at every recorded temperature.
pub struct RunResult {
    pub setup: FlowSetup,
    pub trajectory: FlowTrajectory,
    pub records: Vec<Vec<ObservableRecord>>,
    pub u0: Option<U0Comparison>,
}

impl RunResult {
    pub fn choi_min(&self) -> f64 {
        self.records.iter().flatten().map(|r| r.choi_min).fold(f64::INFINITY, f64::min)
    }

    pub fn trace_err(&self) -> f64 {
        self.records.iter().flatten().map(|r| r.trace_err).fold(0.0, f64::max)
    }

    pub fn snapshot_at(&self, temperature: f64) -> Option<&Snapshot> {
        self.trajectory.snapshots.iter().find(|s| (min(&s.temps) - temperature).abs() <= 1e-9 * temperature.max(1.0))
    }
}

fn min(t: &[f64]) -> f64 {
    t.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Run the flow of `cfg`, recording the requested and the `extra` temperatures.
pub fn execute(cfg: &RunConfig, extra: &[f64], mutate_sign: bool) -> Result<RunResult, CliError> {
    let mut setup = FlowSetup::new(&cfg.model, cfg.grid, cfg.vertex, cfg.path())?;
    setup.mutate_sign = mutate_sign;
    let alphas: Vec<f64> = cfg
        .record_temperatures
        .iter()
        .chain(extra)
        .filter_map(|&t| setup.alpha_of_temperature(t))
        .collect();
    let trajectory = flow_run(&setup, &cfg.stepper, &alphas)?;
    let records = trajectory
        .snapshots
        .iter()
        .map(|s| observable_records(&setup.pt, s, &cfg.rho0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::NonPhysical(e.to_string()))?;
    let u0 = if cfg.model.u == 0.0 {
        let last = trajectory.last();
        let t_lim = cfg.grid.t_max().min(5.0);
        Some(u0_oracle(&setup.pt, &last.sigma, &last.temps, t_lim, &cfg.rho0).map_err(FlowError::from)?)
    } else {
        None
    };
    Ok(RunResult { setup, trajectory, records, u0 })
}

fn num(x: f64) -> String {
    format!("{x:.12e}")
}

pub fn csv_text(result: &RunResult) -> String {
    let mut s = String::new();
    writeln!(s, "{CSV_HEADER}").unwrap();
    for rows in &result.records {
        for r in rows {
            let i = |k: usize| r.currents.get(k).map_or("nan".to_string(), |x| num(*x));
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                num(r.temperature),
                num(r.t),
                num(r.n_up),
                num(r.n_down),
                num(r.n_corr),
                num(r.fluct),
                i(0),
                i(1),
                num(r.choi_min),
                num(r.trace_err)
            )
            .unwrap();
        }
    }
    s
}

#[derive(Serialize)]
struct Manifest {
    tool_version: String,
    config_sha256: String,
    rho0: String,
    grid: ManifestGrid,
    flow: ManifestFlow,
    checks: ManifestChecks,
    kernels: Vec<String>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct ManifestGrid {
    t_max: f64,
    n_points: usize,
    vertex_t_max: f64,
    vertex_points: usize,
    vertex_points_two: usize,
}

#[derive(Serialize)]
struct ManifestFlow {
    t_inf: f64,
    t_floor: f64,
    accepted_steps: usize,
    rejected_steps: usize,
    rhs_evaluations: usize,
    unconverged_iterations: usize,
}

#[derive(Serialize)]
struct ManifestChecks {
    choi_min: f64,
    trace_err_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    u0_oracle: Option<String>,
}

pub fn kernel_file_name(temperature: f64) -> String {
    format!("kernel_T{temperature:.6}.tflk")
}

/// Run and write `observables.csv`, one kernel dump per recorded
/// temperature and `manifest.toml` into `out`.
pub fn cmd_run(cfg: &RunConfig, config_text: &str, out: Option<&Path>) -> Result<RunResult, CliError> {
    let out: PathBuf = out.map_or_else(|| cfg.outputs.clone(), Path::to_path_buf);
    let result = execute(cfg, &[], false)?;
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("observables.csv"), csv_text(&result))?;
    let mut kernels = Vec::new();
    for &t in &cfg.record_temperatures {
        if let Some(s) = result.snapshot_at(t) {
            let name = kernel_file_name(t);
            dump_kernel(&out.join(&name), &KernelDump::from_kernel(&s.sigma, t))?;
            kernels.push(name);
        }
    }
    let traj = &result.trajectory;
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: Sha256::digest(config_text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect(),
        rho0: cfg.rho0_label.clone(),
        grid: ManifestGrid {
            t_max: cfg.grid.t_max(),
            n_points: cfg.grid.n,
            vertex_t_max: result.setup.vgrid.t_max(),
            vertex_points: result.setup.vgrid.n,
            vertex_points_two: result.setup.qgrid.n,
        },
        flow: ManifestFlow {
            t_inf: cfg.t_inf,
            t_floor: cfg.t_floor(),
            accepted_steps: traj.stats.accepted,
            rejected_steps: traj.stats.rejected,
            rhs_evaluations: traj.stats.rhs_evals,
            unconverged_iterations: traj.stats.unconverged,
        },
        checks: ManifestChecks {
            choi_min: result.choi_min(),
            trace_err_max: result.trace_err(),
            u0_oracle: result
                .u0
                .map(|u| format!("kernel_rel={:.3e} occupation_diff={:.3e}", u.kernel_rel, u.occupation_diff)),
        },
        kernels,
        warnings: traj.warnings.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| std::io::Error::other(e.to_string()))?;
    std::fs::write(out.join("manifest.toml"), text)?;
    if result.choi_min() < CHOI_FATAL {
        return Err(CliError::NonPhysical(format!("Choi eigenvalue {:.3e}", result.choi_min())));
    }
    Ok(result)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub measured: f64,
    pub tolerance: f64,
    pub note: String,
}

impl Check {
    fn at_most(name: &'static str, measured: f64, tolerance: f64) -> Self {
        let status = if measured <= tolerance { Status::Pass } else { Status::Fail };
        Check { name, status, measured, tolerance, note: String::new() }
    }

    fn skipped(name: &'static str, note: &str) -> Self {
        Check { name, status: Status::Skipped, measured: f64::NAN, tolerance: f64::NAN, note: note.into() }
    }

    pub fn line(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        if self.status == Status::Skipped {
            format!("{tag} {} ({})", self.name, self.note)
        } else {
            format!("{tag} {} measured={:.3e} tolerance={:.3e}", self.name, self.measured, self.tolerance)
        }
    }
}

/// All checks that apply to `cfg`.
pub fn validation_checks(cfg: &RunConfig, mutate_sign: bool) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    let a = algebra_residuals(&tflow::superfermion_algebra::Superfermions::new());
    checks.push(Check::at_most("algebra", a.anticommutator.max(a.pauli).max(a.trace), 1e-14));

    let fixed_point_possible = cfg.t_floor() <= 0.05 && cfg.t_inf > 1.0;
    let extra: Vec<f64> = if fixed_point_possible { vec![1.0] } else { vec![] };
    let res = execute(cfg, &extra, mutate_sign)?;
    checks.push(Check::at_most("complete_positivity", -res.choi_min(), 1e-8));
    checks.push(Check::at_most("trace_preservation", res.trace_err(), 1e-8));

    let rho = &cfg.rho0;
    let o = local_observables(rho);
    let mut jump = 0.0_f64;
    for rows in &res.records {
        for (r, res_r) in cfg.model.reservoirs.iter().enumerate() {
            let want = res_r.gamma(Spin::Up) * (0.5 - o.n_up) + res_r.gamma(Spin::Down) * (0.5 - o.n_down);
            jump = jump.max((rows[0].currents[r] - want).abs());
        }
    }
    checks.push(Check::at_most("initial_current", jump, 1e-10));

    let last = res.trajectory.last();
    if cfg.model.reservoirs.len() == 2 {
        let ts = cfg.grid.times();
        let i: Vec<Vec<f64>> = (0..2)
            .map(|r| current(&res.setup.pt, &last.sigma_i[r], r, &last.pi, rho))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::NonPhysical(e.to_string()))?;
        let (l, r) = (stationary_extract(&ts, &i[0], 1.0), stationary_extract(&ts, &i[1], 1.0));
        let n: Vec<f64> = last.pi.values.iter().map(|p| local_observables(&apply_superop(p, rho)).n()).collect();
        if l.reached && r.reached && stationary_extract(&ts, &n, 1.0).reached {
            checks.push(Check::at_most("charge_conservation", (l.value + r.value).abs(), 1e-4));
        } else {
            checks.push(Check::skipped("charge_conservation", "not stationary on the time grid"));
        }
    } else {
        checks.push(Check::skipped("charge_conservation", "needs two reservoirs"));
    }

    match (fixed_point_possible, res.snapshot_at(1.0)) {
        (true, Some(s1)) => {
            let ratio = last.dsigma_norm / s1.dsigma_norm;
            checks.push(Check::at_most("fixed_point", ratio, 1e-3));
        }
        _ => checks.push(Check::skipped("fixed_point", "flow does not reach low temperature")),
    }

    match res.u0 {
        Some(u) => {
            checks.push(Check::at_most("u0_oracle_kernel", u.kernel_rel, 1e-2));
            checks.push(Check::at_most("u0_oracle_occupation", u.occupation_diff, 1e-3));
        }
        None => checks.push(Check::skipped("u0_oracle", "interacting model")),
    }
    Ok(checks)
}

/// Print one line per check; fails if any check failed.
pub fn cmd_validate(cfg: &RunConfig, out: &mut impl std::io::Write) -> Result<Vec<Check>, CliError> {
    let checks = validation_checks(cfg, false)?;
    for c in &checks {
        writeln!(out, "{}", c.line())?;
    }
    let failed = checks.iter().filter(|c| c.status == Status::Fail).count();
    if failed > 0 {
        return Err(CliError::ValidationFailed(failed));
    }
    Ok(checks)
}
