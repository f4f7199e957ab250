//! Trajectories of `x_i' = x_i f_i(x)`.
//!
//! Positive components are integrated as `u_i = ln x_i` with `u_i' = f_i(x)`,
//! so faces stay invariant and densities stay positive without clipping.
//! Components that start at zero are pinned there.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ModelError, SimulationError};
use crate::model::{per_capita_component, SystemSpec};

/// Where states are reported.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputGrid {
    /// Every accepted step.
    Steps,
    /// Multiples of the stride (and `t_max`); steps land exactly on them.
    Stride(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegratorOptions {
    pub t_max: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// `ln x_i` below this marks a species as near extinction.
    pub min_log_density: f64,
    pub initial_step: Option<f64>,
    pub output: OutputGrid,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            t_max: 100.0,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_steps: 2_000_000,
            min_log_density: -30.0,
            initial_step: None,
            output: OutputGrid::Steps,
        }
    }
}

impl IntegratorOptions {
    pub fn with_t_max(t_max: f64) -> Self {
        IntegratorOptions { t_max, ..Default::default() }
    }

    fn check(&self) -> Result<(), SimulationError> {
        let bad = |msg: &str| Err(SimulationError::Options(msg.to_string()));
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad("t_max must be positive and finite");
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if let OutputGrid::Stride(s) = self.output {
            if !(s > 0.0 && s.is_finite()) {
                return bad("output stride must be positive and finite");
            }
        }
        if matches!(self.initial_step, Some(h) if !(h > 0.0)) {
            return bad("initial step must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrajectoryFlags {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Smallest positive component seen at any accepted step.
    pub min_component: f64,
    /// Its logarithm, which stays meaningful after `exp` underflows.
    pub min_log_component: f64,
    /// Species (0-based) whose log density fell below the threshold.
    pub near_extinction: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub flags: TrajectoryFlags,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the initial state")
    }

    /// CSV with header `t,x1,...,xn`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=n).map(|i| format!("x{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (t, x) in self.times.iter().zip(&self.states) {
            write!(out, "{t:e}")?;
            for v in x {
                write!(out, ",{v:e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Write points as CSV with header `x1,...,xn`.
pub fn write_points_csv<W: Write>(points: &[Vec<f64>], mut out: W) -> io::Result<()> {
    let n = points.first().map_or(0, Vec::len);
    let header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for p in points {
        let row: Vec<String> = p.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

// Dormand-Prince 5(4).
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct StepStats {
    accepted: usize,
    rejected: usize,
}

/// Adaptive DOPRI5 on an autonomous system. `observe` sees `(t, y, accepted)`;
/// `accepted` is false only for the initial state.
fn dopri5<F, O>(mut y: Vec<f64>, opts: &IntegratorOptions, mut rhs: F, mut observe: O) -> Result<StepStats, SimulationError>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<(), ModelError>,
    O: FnMut(f64, &[f64], bool),
{
    let m = y.len();
    let t_end = opts.t_max;
    let mut k = vec![vec![0.0; m]; 7];
    let mut stage = vec![0.0; m];
    let mut y_new = vec![0.0; m];
    rhs(&y, &mut k[0])?;
    observe(0.0, &y, false);
    let mut stats = StepStats { accepted: 0, rejected: 0 };
    if m == 0 {
        observe(t_end, &y, true);
        return Ok(stats);
    }

    let scale = |a: f64, b: f64| opts.abs_tol + opts.rel_tol * a.abs().max(b.abs());
    let mut h = opts.initial_step.unwrap_or_else(|| {
        let d0 = rms(y.iter().map(|v| v / scale(*v, *v)));
        let d1 = rms(k[0].iter().zip(&y).map(|(f, v)| f / scale(*v, *v)));
        if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }
    });
    h = h.min(t_end);

    let stride = match opts.output {
        OutputGrid::Stride(s) => Some(s),
        OutputGrid::Steps => None,
    };
    let mut next_index = 1usize;
    let next_output = |idx: usize| stride.map_or(t_end, |s| (idx as f64 * s).min(t_end));
    let mut t = 0.0;
    let mut last_rejected = false;

    while t < t_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(SimulationError::MaxStepsExceeded { t, max_steps: opts.max_steps });
        }
        let target = next_output(next_index);
        let mut h_try = h;
        let landing = t + h_try * (1.0 + 1e-10) >= target;
        if landing {
            h_try = target - t;
        }

        let mut ok = true;
        for s in 1..7 {
            for i in 0..m {
                let mut acc = 0.0;
                for (j, a) in A[s][..s].iter().enumerate() {
                    acc += a * k[j][i];
                }
                stage[i] = y[i] + h_try * acc;
            }
            if rhs(&stage, &mut k[s]).is_err() || k[s].iter().any(|v| !v.is_finite()) {
                ok = false;
                break;
            }
        }
        let err = if ok {
            // The seventh stage is evaluated at the fifth-order solution.
            y_new.copy_from_slice(&stage);
            rms((0..m).map(|i| {
                let e: f64 = (0..7).map(|j| E[j] * k[j][i]).sum::<f64>() * h_try;
                e / scale(y[i], y_new[i])
            }))
        } else {
            f64::INFINITY
        };

        if err <= 1.0 {
            t = if landing { target } else { t + h_try };
            y.copy_from_slice(&y_new);
            k.swap(0, 6);
            stats.accepted += 1;
            match stride {
                None => observe(t, &y, true),
                Some(_) if landing => {
                    observe(t, &y, true);
                    next_index += 1;
                }
                Some(_) => {}
            }
            if landing && stride.is_none() {
                next_index += 1;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            let factor = if last_rejected { factor.min(1.0) } else { factor };
            let proposal = h_try * factor;
            h = if landing { proposal.max(h.min(proposal * 5.0)) } else { proposal };
            last_rejected = false;
        } else {
            stats.rejected += 1;
            let factor = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.2, 1.0) } else { 0.25 };
            h = h_try * factor;
            last_rejected = true;
        }
        if h < 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(SimulationError::StepSizeUnderflow { t });
        }
    }
    Ok(stats)
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
    if count == 0 { 0.0 } else { (sum / count as f64).sqrt() }
}

/// Log-coordinate integration shared by the public entry points.
/// `observe` receives `(t, x, integral)`; `integral` is 0 without weights.
fn integrate_observed<O>(
    spec: &SystemSpec,
    x0: &[f64],
    nu: Option<&[f64]>,
    opts: &IntegratorOptions,
    mut observe: O,
) -> Result<TrajectoryFlags, SimulationError>
where
    O: FnMut(f64, &[f64], f64),
{
    opts.check()?;
    let n = spec.dim();
    if x0.len() != n {
        return Err(ModelError::StateLength { expected: n, got: x0.len() }.into());
    }
    if let Some(i) = x0.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(ModelError::NegativeState { species: i + 1, value: x0[i] }.into());
    }
    if let Some(nu) = nu {
        if nu.len() != n {
            return Err(SimulationError::WeightLength { expected: n, got: nu.len() });
        }
    }
    let active: Vec<usize> = (0..n).filter(|&i| x0[i] > 0.0).collect();
    let na = active.len();
    let mut y0: Vec<f64> = active.iter().map(|&i| x0[i].ln()).collect();
    if nu.is_some() {
        y0.push(0.0);
    }

    let expand = |y: &[f64], x: &mut [f64]| {
        for (slot, &i) in active.iter().enumerate() {
            x[i] = y[slot].exp();
        }
    };
    let mut x_rhs = vec![0.0; n];
    let rhs = |y: &[f64], dy: &mut [f64]| -> Result<(), ModelError> {
        expand(y, &mut x_rhs);
        for (slot, &i) in active.iter().enumerate() {
            dy[slot] = per_capita_component(spec, &x_rhs, i)?;
        }
        if let Some(nu) = nu {
            let mut g = 0.0;
            for i in 0..n {
                if nu[i] != 0.0 {
                    g += nu[i] * per_capita_component(spec, &x_rhs, i)?;
                }
            }
            dy[na] = g;
        }
        Ok(())
    };

    let mut flags = TrajectoryFlags {
        min_log_component: f64::INFINITY,
        ..Default::default()
    };
    let mut x_out = vec![0.0; n];
    let stats = dopri5(y0, opts, rhs, |t, y, _| {
        for (slot, &i) in active.iter().enumerate() {
            let u = y[slot];
            flags.min_log_component = flags.min_log_component.min(u);
            if u < opts.min_log_density && !flags.near_extinction.contains(&i) {
                flags.near_extinction.push(i);
            }
        }
        expand(y, &mut x_out);
        observe(t, &x_out, if nu.is_some() { y[na] } else { 0.0 });
    })?;
    flags.accepted_steps = stats.accepted;
    flags.rejected_steps = stats.rejected;
    flags.near_extinction.sort_unstable();
    flags.min_component = flags.min_log_component.exp();
    if na == 0 {
        flags.min_component = f64::INFINITY;
    }
    Ok(flags)
}

/// Integrate from `x0 >= 0` up to `opts.t_max`.
pub fn integrate(spec: &SystemSpec, x0: &[f64], opts: &IntegratorOptions) -> Result<Trajectory, SimulationError> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let flags = integrate_observed(spec, x0, None, opts, |t, x, _| {
        times.push(t);
        states.push(x.to_vec());
    })?;
    Ok(Trajectory { times, states, flags })
}

/// The sub-system on the face spanned by `support` (0-based, in the given order).
///
/// Panics if `support` is empty or names a species outside the system.
pub fn restrict_to_face(spec: &SystemSpec, support: &[usize]) -> SystemSpec {
    assert!(!support.is_empty(), "face support must be nonempty");
    let b = spec.b().select_rows(support).select_columns(support);
    let c = spec.c().select_rows(support);
    SystemSpec::new(b, c, spec.family().clone()).expect("a principal submatrix of a valid system is valid")
}

/// `t -> int_0^t sum_i nu_i f_i(x(s)) ds` sampled at the trajectory's output times.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiapunovIntegral {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub running_sup: Vec<f64>,
    pub running_inf: Vec<f64>,
    pub trajectory: Trajectory,
}

impl LiapunovIntegral {
    pub fn sup(&self) -> f64 {
        *self.running_sup.last().expect("nonempty")
    }

    pub fn inf(&self) -> f64 {
        *self.running_inf.last().expect("nonempty")
    }

    /// Linearly interpolated value at `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|s| *s < t);
        if idx == 0 {
            return self.values[0];
        }
        if idx == self.times.len() {
            return *self.values.last().expect("nonempty");
        }
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let w = (t - t0) / (t1 - t0);
        self.values[idx - 1] * (1.0 - w) + self.values[idx] * w
    }

    /// Average growth of the integral over `[t0, t1]`.
    pub fn slope(&self, t0: f64, t1: f64) -> f64 {
        (self.value_at(t1) - self.value_at(t0)) / (t1 - t0)
    }
}

pub fn average_liapunov_integral(
    spec: &SystemSpec,
    nu: &[f64],
    x0: &[f64],
    opts: &IntegratorOptions,
) -> Result<LiapunovIntegral, SimulationError> {
    if nu.len() == spec.dim() && nu.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(SimulationError::Options("weights must be positive and finite".into()));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut values = Vec::new();
    let flags = integrate_observed(spec, x0, Some(nu), opts, |t, x, v| {
        times.push(t);
        states.push(x.to_vec());
        values.push(v);
    })?;
    let running_sup = values
        .iter()
        .scan(f64::NEG_INFINITY, |m, v| {
            *m = f64::max(*m, *v);
            Some(*m)
        })
        .collect();
    let running_inf = values
        .iter()
        .scan(f64::INFINITY, |m, v| {
            *m = f64::min(*m, *v);
            Some(*m)
        })
        .collect();
    Ok(LiapunovIntegral {
        times: times.clone(),
        values,
        running_sup,
        running_inf,
        trajectory: Trajectory { times, states, flags },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleFailure {
    pub sample: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalReport {
    /// Minimum of `min_i x_i` over retained times of all successful samples.
    pub delta_hat: Option<f64>,
    /// Maximum of `max_i x_i` over the same window.
    pub d_hat: Option<f64>,
    pub starts: Vec<Vec<f64>>,
    pub minima: Vec<Option<f64>>,
    pub maxima: Vec<Option<f64>>,
    pub failures: Vec<SampleFailure>,
}

/// Shifted Halton points in `[0,1)^dim`; the shift comes from `seed`.
pub fn halton_points(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let bases = first_primes(dim);
    (1..=count)
        .map(|idx| {
            bases
                .iter()
                .zip(&shift)
                .map(|(&b, s)| (radical_inverse(idx as u64, b) + s).fract())
                .collect()
        })
        .collect()
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut cand = 2u64;
    while primes.len() < count {
        if primes.iter().take_while(|p| *p * *p <= cand).all(|p| !cand.is_multiple_of(*p)) {
            primes.push(cand);
        }
        cand += 1;
    }
    primes
}

/// Integrate from `n_samples` quasi-random interior starts in
/// `[0.01, 2 max_i c_i/b_ii]^n` and record the extremes of each trajectory
/// after discarding the first half of the horizon.
pub fn empirical_permanence(spec: &SystemSpec, n_samples: usize, opts: &IntegratorOptions, seed: u64) -> EmpiricalReport {
    let n = spec.dim();
    let (lo, hi) = (0.01, 2.0 * spec.axial_scale());
    let starts: Vec<Vec<f64>> = halton_points(n_samples, n, seed)
        .into_iter()
        .map(|p| p.into_iter().map(|u| lo + (hi - lo) * u).collect())
        .collect();
    let opts = IntegratorOptions { output: OutputGrid::Steps, ..opts.clone() };
    let window = 0.5 * opts.t_max;

    let results: Vec<Result<(f64, f64), SimulationError>> = starts
        .par_iter()
        .map(|x0| {
            let (mut lo_seen, mut hi_seen) = (f64::INFINITY, 0.0f64);
            integrate_observed(spec, x0, None, &opts, |t, x, _| {
                if t >= window {
                    for v in x {
                        lo_seen = lo_seen.min(*v);
                        hi_seen = hi_seen.max(*v);
                    }
                }
            })?;
            Ok((lo_seen, hi_seen))
        })
        .collect();

    let mut report = EmpiricalReport {
        delta_hat: None,
        d_hat: None,
        starts,
        minima: Vec::with_capacity(n_samples),
        maxima: Vec::with_capacity(n_samples),
        failures: Vec::new(),
    };
    for (sample, r) in results.into_iter().enumerate() {
        match r {
            Ok((lo, hi)) => {
                report.minima.push(Some(lo));
                report.maxima.push(Some(hi));
                report.delta_hat = Some(report.delta_hat.map_or(lo, |d| d.min(lo)));
                report.d_hat = Some(report.d_hat.map_or(hi, |d| d.max(hi)));
            }
            Err(e) => {
                report.minima.push(None);
                report.maxima.push(None);
                report.failures.push(SampleFailure { sample, message: e.to_string() });
            }
        }
    }
    report
}

/// Ray endpoints for carrying-simplex sampling.
pub const RAY_INNER: f64 = 1e-3;
/// Settled points further apart than this flag their ray.
pub const RAY_SETTLE_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RaySample {
    pub direction: Vec<f64>,
    pub outer: Vec<f64>,
    pub inner: Vec<f64>,
    pub gap: f64,
    pub settled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimplexCloud {
    pub rays: Vec<RaySample>,
    pub failures: Vec<SampleFailure>,
}

impl SimplexCloud {
    /// Outer and inner settled points of every ray.
    pub fn points(&self) -> Vec<Vec<f64>> {
        self.rays
            .iter()
            .flat_map(|r| [r.outer.clone(), r.inner.clone()])
            .collect()
    }

    pub fn unsettled(&self) -> usize {
        self.rays.iter().filter(|r| !r.settled).count()
    }
}

/// Directions on the unit simplex from a Halton sequence, mapped by
/// normalized exponential spacings.
pub fn simplex_directions(n_rays: usize, dim: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        return vec![vec![1.0]; n_rays];
    }
    let bases = first_primes(dim);
    (1..=n_rays)
        .map(|idx| {
            let e: Vec<f64> = bases
                .iter()
                .map(|&b| -(1.0 - radical_inverse(idx as u64, b)).ln())
                .collect();
            let total: f64 = e.iter().sum();
            e.iter().map(|v| v / total).collect()
        })
        .collect()
}

/// Approximate the carrying simplex by integrating inward from `R d` and
/// outward from `eps d` along each direction `d` for `t_settle`.
pub fn sample_carrying_simplex(spec: &SystemSpec, n_rays: usize, t_settle: f64) -> SimplexCloud {
    let r_outer = 2.0 * spec.axial_scale() + 1.0;
    let opts = IntegratorOptions { t_max: t_settle, ..IntegratorOptions::default() };
    let settle = |x0: Vec<f64>| -> Result<Vec<f64>, SimulationError> {
        let mut last = Vec::new();
        integrate_observed(spec, &x0, None, &opts, |_, x, _| last = x.to_vec())?;
        Ok(last)
    };
    let results: Vec<Result<RaySample, SimulationError>> = simplex_directions(n_rays, spec.dim())
        .into_par_iter()
        .map(|d| {
            let outer = settle(d.iter().map(|v| v * r_outer).collect())?;
            let inner = settle(d.iter().map(|v| v * RAY_INNER).collect())?;
            let gap = outer.iter().zip(&inner).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            Ok(RaySample { direction: d, outer, inner, gap, settled: gap <= RAY_SETTLE_TOL })
        })
        .collect();
    let mut cloud = SimplexCloud { rays: Vec::new(), failures: Vec::new() };
    for (sample, r) in results.into_iter().enumerate() {
        match r {
            Ok(ray) => cloud.rays.push(ray),
            Err(e) => cloud.failures.push(SampleFailure { sample, message: e.to_string() }),
        }
    }
    cloud
}

/// Does `p` strictly dominate `q` beyond `tol`?
///
/// `p - q > tol` on every species present in either point and `>= -tol`
/// elsewhere. Points on a common face compare only on that face.
pub fn strictly_dominates(p: &[f64], q: &[f64], tol: f64) -> bool {
    let mut any_support = false;
    for (a, b) in p.iter().zip(q) {
        let d = a - b;
        if *a > 0.0 || *b > 0.0 {
            any_support = true;
            if d <= tol {
                return false;
            }
        } else if d < -tol {
            return false;
        }
    }
    any_support
}

/// Ordered pairs `(p, q)` with `p` strictly dominating `q`.
pub fn unorderedness_violations(points: &[Vec<f64>], tol: f64) -> usize {
    let mut count = 0;
    for (i, p) in points.iter().enumerate() {
        for (j, q) in points.iter().enumerate() {
            if i != j && strictly_dominates(p, q, tol) {
                count += 1;
            }
        }
    }
    count
}
