//! Run configuration files.
//!
//! A config is either a bare system (`{"n", "family", "b", "c"}`) or an
//! object with a `spec` field plus optional command blocks.

use std::fs;
use std::path::{Path, PathBuf};

use permanence::simulate::OutputGrid;
use permanence::{IntegratorOptions, SpecFile, SystemSpec};
use serde::Deserialize;
use serde_json::Value;

use crate::error::CliError;
use crate::sweep::{ParamPath, SweepAxis};

fn default_samples() -> usize {
    8
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub spec: SpecFile,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    /// Starting states for `simulate`; quasi-random starts are drawn when empty.
    #[serde(default)]
    pub initial_conditions: Vec<Vec<f64>>,
    /// Number of quasi-random starts for simulation-based diagnostics.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub t_max: Option<f64>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub max_steps: Option<usize>,
    pub min_log_density: Option<f64>,
    /// Report states on multiples of this stride instead of every step.
    pub output_stride: Option<f64>,
}

impl IntegratorConfig {
    pub fn options(&self) -> Result<IntegratorOptions, CliError> {
        let d = IntegratorOptions::default();
        let opts = IntegratorOptions {
            t_max: self.t_max.unwrap_or(d.t_max),
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            abs_tol: self.abs_tol.unwrap_or(d.abs_tol),
            max_steps: self.max_steps.unwrap_or(d.max_steps),
            min_log_density: self.min_log_density.unwrap_or(d.min_log_density),
            initial_step: None,
            output: self.output_stride.map_or(OutputGrid::Steps, OutputGrid::Stride),
        };
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(opts.t_max) {
            return Err(CliError::Input("integrator.t_max must be positive and finite".into()));
        }
        if !positive(opts.rel_tol) || !positive(opts.abs_tol) {
            return Err(CliError::Input("integrator tolerances must be positive".into()));
        }
        if matches!(opts.output, OutputGrid::Stride(s) if !positive(s)) {
            return Err(CliError::Input("integrator.output_stride must be positive".into()));
        }
        if opts.max_steps == 0 {
            return Err(CliError::Input("integrator.max_steps must be at least 1".into()));
        }
        Ok(opts)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameters: Vec<SweepParameter>,
    /// Quasi-random simulations per cell; 0 skips the empirical check.
    #[serde(default)]
    pub empirical_samples: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParameter {
    pub name: String,
    /// 1-based entries such as `b[1][2]` or `c[3]`, all set to the same value.
    pub paths: Vec<String>,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

/// A parsed config with its validated system.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub config: RunConfig,
    pub spec: SystemSpec,
}

impl Loaded {
    pub fn integrator(&self) -> Result<IntegratorOptions, CliError> {
        self.config.integrator.options()
    }

    /// Sweep axes with parsed, range-checked paths.
    pub fn sweep_axes(&self) -> Result<Vec<SweepAxis>, CliError> {
        let sweep = self
            .config
            .sweep
            .as_ref()
            .ok_or_else(|| CliError::Input("config has no sweep block".into()))?;
        if sweep.parameters.is_empty() || sweep.parameters.len() > 2 {
            return Err(CliError::Input(format!(
                "sweep needs 1 or 2 parameters, got {}",
                sweep.parameters.len()
            )));
        }
        let n = self.spec.dim();
        sweep
            .parameters
            .iter()
            .map(|p| {
                if !(p.min.is_finite() && p.max.is_finite()) || p.max < p.min {
                    return Err(CliError::Input(format!("sweep parameter '{}' needs finite min <= max", p.name)));
                }
                if p.steps == 0 {
                    return Err(CliError::Input(format!("sweep parameter '{}' needs steps >= 1", p.name)));
                }
                if p.paths.is_empty() {
                    return Err(CliError::Input(format!("sweep parameter '{}' has no paths", p.name)));
                }
                let paths = p
                    .paths
                    .iter()
                    .map(|s| {
                        let path: ParamPath = s.parse().map_err(CliError::Input)?;
                        if !path.fits(n) {
                            return Err(CliError::Input(format!("path {s} does not exist for n = {n}")));
                        }
                        Ok(path)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(SweepAxis::linspace(&p.name, paths, p.min, p.max, p.steps))
            })
            .collect()
    }
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Loaded, CliError> {
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::Input(format!("malformed JSON: {e}")))?;
    let value = match value {
        Value::Object(map) if !map.contains_key("spec") => serde_json::json!({ "spec": Value::Object(map) }),
        other => other,
    };
    let config: RunConfig =
        serde_json::from_value(value).map_err(|e| CliError::Input(format!("invalid config: {e}")))?;
    let spec = config.spec.clone().into_spec()?;
    let n = spec.dim();
    for (k, x0) in config.initial_conditions.iter().enumerate() {
        if x0.len() != n {
            return Err(CliError::Input(format!(
                "initial condition {} has length {}, expected {n}",
                k + 1,
                x0.len()
            )));
        }
        if x0.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CliError::Input(format!(
                "initial condition {} must be finite and nonnegative",
                k + 1
            )));
        }
    }
    let loaded = Loaded { config, spec };
    loaded.integrator()?;
    if loaded.config.sweep.is_some() {
        loaded.sweep_axes()?;
    }
    Ok(loaded)
}
