//! Run configuration in TOML.
//!
//! ```toml
//! rho0 = "empty"    # or a 4x4 array of [re, im] pairs
//! record_temperatures = [1.0, 0.1]
//! outputs = "out"
//!
//! [model]
//! epsilon = -2.0
//! U = 4.0
//! [[model.reservoirs]]
//! gamma = 1.0
//! mu = 0.5
//!
//! [grid]            # optional
//! t_max = 10.0
//! n_points = 256
//!
//! [stepper]         # optional, see StepperConfig
//! t_floor = 0.01
//! error_tol = 2e-4
//!
//! [path]            # optional
//! t_inf = 200.0     # default 50 x largest model scale
//! ```

use std::path::PathBuf;

use num_complex::Complex64 as C64;
use serde::Deserialize;
use thiserror::Error;

use tflow::renormalized_pt::default_t_inf;
use tflow::reservoir_contractions::TemperaturePath;
use tflow::superfermion_algebra::{fock_state, ModelError, ModelParams, Op4, Reservoir};
use tflow::tflow_core::{StepperConfig, VertexGrids};
use tflow::timegrid_calculus::TimeGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("invalid `{field}`: {msg}")]
    Validation { field: String, msg: String },
}

fn invalid(field: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation { field: field.into(), msg: msg.into() }
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: RawModel,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    vertex_grid: RawVertex,
    #[serde(default)]
    stepper: RawStepper,
    #[serde(default)]
    path: RawPath,
    #[serde(default)]
    rho0: Option<RawRho>,
    #[serde(default)]
    record_temperatures: Vec<f64>,
    #[serde(default)]
    outputs: Option<String>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawModel {
    epsilon: f64,
    #[serde(rename = "U", alias = "u")]
    u: f64,
    reservoirs: Vec<RawReservoir>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawReservoir {
    gamma: Option<f64>,
    gamma_up: Option<f64>,
    gamma_down: Option<f64>,
    #[serde(default)]
    mu: f64,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    #[serde(default = "default_t_max")]
    t_max: f64,
    #[serde(default = "default_n_points")]
    n_points: usize,
}

fn default_t_max() -> f64 {
    10.0
}

fn default_n_points() -> usize {
    256
}

impl Default for RawGrid {
    fn default() -> Self {
        RawGrid { t_max: default_t_max(), n_points: default_n_points() }
    }
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct RawVertex {
    t_max: Option<f64>,
    points: Option<usize>,
    points_two: Option<usize>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct RawStepper {
    dt_init: Option<f64>,
    dt_min: Option<f64>,
    dt_max: Option<f64>,
    error_tol: Option<f64>,
    t_floor: Option<f64>,
    max_iter: Option<usize>,
    iter_tol: Option<f64>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct RawPath {
    t_inf: Option<f64>,
}

#[derive(Deserialize, Debug)]
#[serde(untagged)]
enum RawRho {
    Preset(String),
    Matrix(Vec<Vec<[f64; 2]>>),
}

/// Validated run configuration with defaults applied.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: ModelParams,
    pub grid: TimeGrid,
    pub vertex: VertexGrids,
    pub stepper: StepperConfig,
    pub t_inf: f64,
    pub rho0: Op4,
    pub rho0_label: String,
    pub record_temperatures: Vec<f64>,
    pub outputs: PathBuf,
}

impl RunConfig {
    pub fn t_floor(&self) -> f64 {
        self.stepper.t_floor
    }

    pub fn path(&self) -> TemperaturePath {
        TemperaturePath::common(self.model.reservoirs.len(), self.t_inf, self.t_floor())
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

pub fn preset(name: &str) -> Option<Op4> {
    let half = C64::new(0.5, 0.0);
    match name {
        "empty" => Some(fock_state(0)),
        "up" => Some(fock_state(1)),
        "down" => Some(fock_state(2)),
        "double" => Some(fock_state(3)),
        "mixed" => Some(Op4::identity() * half * half),
        _ => None,
    }
}

fn check_density(rho: &Op4) -> Result<(), ConfigError> {
    if (rho - rho.adjoint()).iter().any(|z| z.norm() > 1e-12) {
        return Err(invalid("rho0", "not Hermitian"));
    }
    if (rho.trace() - 1.0).norm() > 1e-12 {
        return Err(invalid("rho0", "trace is not 1"));
    }
    let min = rho.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-12 {
        return Err(invalid("rho0", format!("negative eigenvalue {min}")));
    }
    Ok(())
}

fn positive(field: &str, x: f64) -> Result<f64, ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(invalid(field, format!("{x} is not positive")))
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, col) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ConfigError::Parse { line, col, msg: e.message().to_string() }
    })?;
    let t_floor = raw.stepper.t_floor.unwrap_or(0.01);
    let mut reservoirs = Vec::new();
    for r in &raw.model.reservoirs {
        let (up, down) = match (r.gamma, r.gamma_up, r.gamma_down) {
            (Some(g), None, None) => (g, g),
            (None, Some(u), Some(d)) => (u, d),
            _ => return Err(invalid("gamma", "give either `gamma` or both `gamma_up` and `gamma_down`")),
        };
        reservoirs.push(Reservoir { gamma_up: up, gamma_down: down, mu: r.mu, temperature: t_floor });
    }
    let model = ModelParams { epsilon: raw.model.epsilon, u: raw.model.u, reservoirs };
    model.validate().map_err(|ModelError::Invalid { field, reason }| invalid(field, reason))?;
    positive("t_floor", t_floor)?;

    positive("grid.t_max", raw.grid.t_max)?;
    let grid = TimeGrid::new(raw.grid.t_max, raw.grid.n_points).map_err(|e| invalid("grid", e.to_string()))?;
    let d = VertexGrids::for_grid(grid);
    let vertex = VertexGrids {
        t_max: positive("vertex_grid.t_max", raw.vertex_grid.t_max.unwrap_or(d.t_max))?,
        points: raw.vertex_grid.points.unwrap_or(d.points),
        points_two: raw.vertex_grid.points_two.unwrap_or(d.points_two),
    };
    if vertex.points < 4 || vertex.points_two < 4 {
        return Err(invalid("vertex_grid", "at least 4 points per axis"));
    }

    let s = StepperConfig::default();
    let rs = &raw.stepper;
    let stepper = StepperConfig {
        dt_init: rs.dt_init.unwrap_or(s.dt_init),
        dt_min: rs.dt_min.unwrap_or(s.dt_min),
        dt_max: rs.dt_max.unwrap_or(s.dt_max),
        error_tol: rs.error_tol.unwrap_or(s.error_tol),
        t_floor,
        max_iter: rs.max_iter.unwrap_or(s.max_iter),
        iter_tol: rs.iter_tol.unwrap_or(s.iter_tol),
    };
    stepper.validate().map_err(|e| invalid("stepper", e.to_string()))?;

    let t_inf = raw.path.t_inf.unwrap_or_else(|| default_t_inf(&model));
    if !(t_inf > t_floor) {
        return Err(invalid("path.t_inf", format!("{t_inf} is not above t_floor {t_floor}")));
    }

    let (rho0, rho0_label) = match raw.rho0 {
        None => (preset("empty").unwrap(), "empty".to_string()),
        Some(RawRho::Preset(name)) => {
            (preset(&name).ok_or_else(|| invalid("rho0", format!("unknown preset `{name}`")))?, name)
        }
        Some(RawRho::Matrix(rows)) => {
            if rows.len() != 4 || rows.iter().any(|r| r.len() != 4) {
                return Err(invalid("rho0", "expected a 4x4 array of [re, im] pairs"));
            }
            let m = Op4::from_fn(|i, j| C64::new(rows[i][j][0], rows[i][j][1]));
            (m, "explicit".to_string())
        }
    };
    check_density(&rho0)?;

    for &t in &raw.record_temperatures {
        if !(t >= t_floor && t <= t_inf) {
            return Err(invalid("record_temperatures", format!("{t} is outside [{t_floor}, {t_inf}]")));
        }
    }
    Ok(RunConfig {
        model,
        grid,
        vertex,
        stepper,
        t_inf,
        rho0,
        rho0_label,
        record_temperatures: raw.record_temperatures,
        outputs: PathBuf::from(raw.outputs.unwrap_or_else(|| "out".into())),
    })
}
