//! Parameter grids over entries of `B` and `c`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use permanence::simulate::empirical_permanence;
use permanence::{analyze_with, AnalyzeOptions, IntegratorOptions, SpecFile};
use rayon::prelude::*;
use serde::Serialize;

/// An entry of the system, stored 0-based and written 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamPath {
    B(usize, usize),
    C(usize),
}

impl ParamPath {
    pub fn fits(&self, n: usize) -> bool {
        match *self {
            ParamPath::B(i, j) => i < n && j < n,
            ParamPath::C(i) => i < n,
        }
    }

    fn set(&self, spec: &mut SpecFile, value: f64) {
        match *self {
            ParamPath::B(i, j) => spec.b[i][j] = value,
            ParamPath::C(i) => spec.c[i] = value,
        }
    }
}

impl FromStr for ParamPath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("bad parameter path '{s}' (expected b[i][j] or c[i], 1-based)");
        let s = s.trim();
        let (head, rest) = s.split_at(s.find('[').ok_or_else(bad)?);
        let indices: Vec<usize> = rest
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(bad)?
            .split("][")
            .map(|t| t.trim().parse::<usize>().ok().filter(|i| *i >= 1).map(|i| i - 1))
            .collect::<Option<_>>()
            .ok_or_else(bad)?;
        match (head, indices.as_slice()) {
            ("b", [i, j]) => Ok(ParamPath::B(*i, *j)),
            ("c", [i]) => Ok(ParamPath::C(*i)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ParamPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ParamPath::B(i, j) => write!(f, "b[{}][{}]", i + 1, j + 1),
            ParamPath::C(i) => write!(f, "c[{}]", i + 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepAxis {
    pub name: String,
    pub paths: Vec<ParamPath>,
    pub values: Vec<f64>,
}

impl SweepAxis {
    /// `steps` evenly spaced values from `min` to `max` inclusive.
    pub fn linspace(name: &str, paths: Vec<ParamPath>, min: f64, max: f64, steps: usize) -> SweepAxis {
        let values = if steps == 1 {
            vec![min]
        } else {
            (0..steps)
                .map(|k| {
                    if k + 1 == steps {
                        max
                    } else {
                        min + (max - min) * k as f64 / (steps - 1) as f64
                    }
                })
                .collect()
        };
        SweepAxis { name: name.to_string(), paths, values }
    }
}

/// Grid points in row-major order: the first axis varies slowest.
pub fn grid(axes: &[SweepAxis]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect()
    })
}

/// `base` with every path of every axis set to the cell's values.
pub fn cell_spec(base: &SpecFile, axes: &[SweepAxis], values: &[f64]) -> SpecFile {
    let mut spec = base.clone();
    for (axis, v) in axes.iter().zip(values) {
        for path in &axis.paths {
            path.set(&mut spec, *v);
        }
    }
    spec
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    pub values: Vec<f64>,
    /// Verdict outcome, or `Error` when the cell could not be analyzed.
    pub outcome: String,
    pub margin: Option<f64>,
    pub rho: Option<f64>,
    pub delta_hat: Option<f64>,
    pub error: Option<String>,
}

pub struct SweepSettings {
    pub analyze: AnalyzeOptions,
    pub empirical_samples: usize,
    pub integrator: IntegratorOptions,
    pub seed: u64,
}

pub fn run_cell(base: &SpecFile, axes: &[SweepAxis], values: &[f64], settings: &SweepSettings) -> SweepCell {
    let mut cell = SweepCell {
        values: values.to_vec(),
        outcome: "Error".into(),
        margin: None,
        rho: None,
        delta_hat: None,
        error: None,
    };
    let spec = match cell_spec(base, axes, values).into_spec() {
        Ok(s) => s,
        Err(e) => {
            cell.error = Some(e.to_string());
            return cell;
        }
    };
    match analyze_with(&spec, &settings.analyze) {
        Ok(v) => {
            cell.outcome = format!("{:?}", v.outcome);
            cell.margin = v.margin;
            cell.rho = v.rho;
        }
        Err(e) => {
            cell.error = Some(e.to_string());
            return cell;
        }
    }
    if settings.empirical_samples > 0 {
        let report = empirical_permanence(&spec, settings.empirical_samples, &settings.integrator, settings.seed);
        cell.delta_hat = report.delta_hat;
    }
    cell
}

/// Every grid cell, in grid order; cells are evaluated in parallel.
pub fn run_sweep(base: &SpecFile, axes: &[SweepAxis], settings: &SweepSettings) -> Vec<SweepCell> {
    grid(axes)
        .par_iter()
        .map(|values| {
            let cell = run_cell(base, axes, values, settings);
            log::debug!("cell {values:?}: {}", cell.outcome);
            cell
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(axes: &[SweepAxis], cells: &[SweepCell], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = axes.iter().map(|a| a.name.clone()).collect();
    header.extend(["outcome", "margin", "rho", "delta_hat", "error"].map(String::from));
    w.write_record(&header)?;
    for cell in cells {
        let mut row: Vec<String> = cell.values.iter().map(f64::to_string).collect();
        row.push(cell.outcome.clone());
        row.push(opt(cell.margin));
        row.push(opt(cell.rho));
        row.push(opt(cell.delta_hat));
        row.push(cell.error.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
