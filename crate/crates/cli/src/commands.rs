use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use permanence::model::BUILTIN_FAMILIES;
use permanence::simulate::{halton_points, integrate, TrajectoryFlags};
use permanence::{analyze_with, AnalyzeOptions, Verdict};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Loaded;
use crate::error::CliError;
use crate::sweep::{run_sweep, write_csv, SweepSettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Flags shared by every subcommand.
#[derive(Clone, Debug)]
pub struct Global {
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub format: Option<Format>,
}

fn out_dir(global: &Global, loaded: &Loaded) -> Option<PathBuf> {
    global.out.clone().or_else(|| loaded.config.out.clone())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CliError::write(dir))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(CliError::write(path))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("results serialize");
    text.push('\n');
    text
}

pub fn analyze_options(loaded: &Loaded, seed: u64) -> AnalyzeOptions {
    AnalyzeOptions {
        high_dim_samples: loaded.config.samples,
        high_dim_t_max: loaded.config.integrator.t_max.unwrap_or(AnalyzeOptions::default().high_dim_t_max),
        seed,
    }
}

pub fn verdict(loaded: &Loaded, seed: u64) -> Result<Verdict, CliError> {
    Ok(analyze_with(&loaded.spec, &analyze_options(loaded, seed))?)
}

fn verdict_csv(v: &Verdict) -> String {
    let num = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let nu = v
        .nu
        .as_ref()
        .map(|nu| nu.iter().map(f64::to_string).collect::<Vec<_>>().join(" "))
        .unwrap_or_default();
    format!("outcome,margin,rho,nu\n{:?},{},{},{}\n", v.outcome, num(v.margin), num(v.rho), nu)
}

pub fn cmd_analyze(loaded: &Loaded, global: &Global) -> Result<String, CliError> {
    let v = verdict(loaded, global.seed)?;
    log::info!("analyze: {:?}", v.outcome);
    let (text, name) = match global.format.unwrap_or(Format::Json) {
        Format::Json => (to_json(&v), "verdict.json"),
        Format::Csv => (verdict_csv(&v), "verdict.csv"),
    };
    if let Some(dir) = out_dir(global, loaded) {
        ensure_dir(&dir)?;
        write_file(&dir.join(name), text.as_bytes())?;
    }
    Ok(text)
}

#[derive(Debug, Serialize)]
struct RunSummary {
    index: usize,
    file: Option<String>,
    x0: Vec<f64>,
    #[serde(rename = "final")]
    last: Option<Vec<f64>>,
    /// Extremes of the components over the second half of the horizon.
    min_late: Option<f64>,
    max_late: Option<f64>,
    flags: Option<TrajectoryFlags>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct SimulationSummary {
    seed: u64,
    t_max: f64,
    delta_hat: Option<f64>,
    d_hat: Option<f64>,
    runs: Vec<RunSummary>,
}

/// Quasi-random starts in `[0.01, 2 max_i c_i/b_ii]^n`, as for the empirical check.
fn default_starts(loaded: &Loaded, seed: u64) -> Vec<Vec<f64>> {
    let hi = 2.0 * loaded.spec.axial_scale();
    halton_points(loaded.config.samples, loaded.spec.dim(), seed)
        .into_iter()
        .map(|p| p.into_iter().map(|u| 0.01 + (hi - 0.01) * u).collect())
        .collect()
}

pub fn cmd_simulate(loaded: &Loaded, global: &Global) -> Result<String, CliError> {
    let dir = out_dir(global, loaded)
        .ok_or_else(|| CliError::Input("simulate needs an output directory (--out DIR)".into()))?;
    ensure_dir(&dir)?;
    let opts = loaded.integrator()?;
    let starts = if loaded.config.initial_conditions.is_empty() {
        default_starts(loaded, global.seed)
    } else {
        loaded.config.initial_conditions.clone()
    };
    let width = starts.len().to_string().len().max(3);
    let window = 0.5 * opts.t_max;

    let runs: Vec<RunSummary> = starts
        .par_iter()
        .enumerate()
        .map(|(k, x0)| {
            let mut run = RunSummary {
                index: k + 1,
                file: None,
                x0: x0.clone(),
                last: None,
                min_late: None,
                max_late: None,
                flags: None,
                error: None,
            };
            match integrate(&loaded.spec, x0, &opts) {
                Ok(traj) => {
                    let name = format!("trajectory_{:0width$}.csv", k + 1);
                    let path = dir.join(&name);
                    let written = File::create(&path).and_then(|f| {
                        let mut w = BufWriter::new(f);
                        traj.write_csv(&mut w)?;
                        w.flush()
                    });
                    if let Err(e) = written {
                        return Err(CliError::Write { path, source: e });
                    }
                    let late = traj
                        .times
                        .iter()
                        .zip(&traj.states)
                        .filter(|(t, _)| **t >= window)
                        .flat_map(|(_, x)| x.iter().copied());
                    let (lo, hi) = late.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                    run.file = Some(name);
                    run.last = Some(traj.last().to_vec());
                    run.min_late = Some(lo);
                    run.max_late = Some(hi);
                    run.flags = Some(traj.flags);
                }
                Err(e) => {
                    log::warn!("run {} failed: {e}", k + 1);
                    run.error = Some(e.to_string());
                }
            }
            Ok(run)
        })
        .collect::<Result<_, CliError>>()?;

    let delta_hat = runs.iter().filter_map(|r| r.min_late).reduce(f64::min);
    let d_hat = runs.iter().filter_map(|r| r.max_late).reduce(f64::max);
    let summary = SimulationSummary { seed: global.seed, t_max: opts.t_max, delta_hat, d_hat, runs };
    let text = to_json(&summary);
    write_file(&dir.join("summary.json"), text.as_bytes())?;
    Ok(text)
}

pub fn cmd_sweep(loaded: &Loaded, global: &Global) -> Result<String, CliError> {
    let axes = loaded.sweep_axes()?;
    let sweep = loaded.config.sweep.as_ref().expect("checked by sweep_axes");
    let settings = SweepSettings {
        analyze: analyze_options(loaded, global.seed),
        empirical_samples: sweep.empirical_samples,
        integrator: loaded.integrator()?,
        seed: global.seed,
    };
    let cells = run_sweep(&loaded.config.spec, &axes, &settings);
    let errors = cells.iter().filter(|c| c.error.is_some()).count();
    if errors > 0 {
        log::warn!("{errors} of {} cells failed", cells.len());
    }
    let (text, name) = match global.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut buf = Vec::new();
            write_csv(&axes, &cells, &mut buf).map_err(|e| CliError::Numerical(e.to_string()))?;
            (String::from_utf8(buf).expect("CSV output is UTF-8"), "sweep.csv")
        }
        Format::Json => (to_json(&cells), "sweep.json"),
    };
    if let Some(dir) = out_dir(global, loaded) {
        ensure_dir(&dir)?;
        write_file(&dir.join(name), text.as_bytes())?;
    }
    Ok(text)
}

#[derive(Serialize)]
struct ModelEntry {
    key: String,
    formula: &'static str,
}

pub fn cmd_models(format: Option<Format>) -> String {
    let entries: Vec<ModelEntry> = BUILTIN_FAMILIES
        .iter()
        .map(|f| ModelEntry { key: f.key().to_string(), formula: f.formula() })
        .collect();
    match format {
        Some(Format::Json) => to_json(&entries),
        Some(Format::Csv) => {
            let mut s = String::from("family,formula\n");
            for e in &entries {
                s.push_str(&format!("{},\"{}\"\n", e.key, e.formula));
            }
            s
        }
        None => {
            let mut s = String::new();
            for e in &entries {
                s.push_str(&format!("{}: {}\n", e.key, e.formula));
            }
            s.push_str("each law satisfies f(r,r) = 0 and df/dy < 0\n");
            s
        }
    }
}

/// Write command output to stdout, ignoring a closed pipe.
pub fn emit(text: &str) {
    let mut out = io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}
