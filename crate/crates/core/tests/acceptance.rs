//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use permanence::certificates::{build_constraints, find_certificate, rho, Direction};
use permanence::equilibria::all_equilibria;
use permanence::fixtures::{logistic, may_leonard, symmetric_half};
use permanence::model::{jacobian, per_capita, vector_field, BUILTIN_FAMILIES};
use permanence::nullcline::{cycle_pattern, satisfies_class_29_inequalities, sign_configuration, CycleOrientation};
use permanence::simulate::{
    average_liapunov_integral, empirical_permanence, integrate, sample_carrying_simplex,
    unorderedness_violations,
};
use permanence::{analyze, GrowthFamily, IntegratorOptions, Outcome, SystemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Closed forms of the built-in laws, kept apart from the library's versions.
fn oracle_f(family: &GrowthFamily, r: f64, y: f64) -> f64 {
    match family {
        GrowthFamily::LotkaVolterra => r - y,
        GrowthFamily::Gompertz => (r / y).ln(),
        GrowthFamily::LeslieGower => (1.0 + r) / (1.0 + y) - 1.0,
        GrowthFamily::Ricker => (r - y).exp() - 1.0,
        GrowthFamily::Custom(_) => unreachable!(),
    }
}

/// `rho` straight from the external eigenvalues at the axial equilibria.
fn oracle_rho(spec: &SystemSpec) -> f64 {
    let (b, c) = (spec.b(), spec.c());
    let theta = |i: usize, j: usize| oracle_f(spec.family(), c[j], b[(j, i)] * c[i] / b[(i, i)]);
    theta(0, 1) * theta(1, 2) * theta(2, 0) + theta(1, 0) * theta(0, 2) * theta(2, 1)
}

fn random_family(rng: &mut ChaCha8Rng) -> GrowthFamily {
    BUILTIN_FAMILIES[rng.random_range(0..4)].clone()
}

fn spec3(b: [[f64; 3]; 3], c: [f64; 3], family: GrowthFamily) -> SystemSpec {
    let rows: Vec<Vec<f64>> = b.iter().map(|r| r.to_vec()).collect();
    SystemSpec::from_rows(&rows, &c, family).unwrap()
}

/// Off-diagonal `b_ji` placed on a chosen side of the threshold `b_ii c_j / c_i`,
/// which fixes the sign of `gamma_ij`.
fn cycle_spec(rng: &mut ChaCha8Rng) -> SystemSpec {
    let c: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.5..2.0));
    let diag: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.5..2.0));
    let forward = rng.random_bool(0.5);
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        b[i][i] = diag[i];
        for j in 0..3 {
            if i == j {
                continue;
            }
            // gamma_ij > 0 for the forward cycle when j == i + 1 (mod 3).
            let positive = ((j == (i + 1) % 3) == forward) as u8 == 1;
            let threshold = diag[i] * c[j] / c[i];
            let factor = if positive { rng.random_range(0.1..0.95) } else { rng.random_range(1.05..3.0) };
            b[j][i] = threshold * factor;
        }
    }
    spec3(b, c, random_family(rng))
}

fn random_spec(rng: &mut ChaCha8Rng, family: GrowthFamily) -> SystemSpec {
    random_spec_with(rng, family, 2.0)
}

fn random_spec_with(rng: &mut ChaCha8Rng, family: GrowthFamily, max_off: f64) -> SystemSpec {
    let b: [[f64; 3]; 3] = std::array::from_fn(|i| {
        std::array::from_fn(|j| if i == j { rng.random_range(0.5..1.5) } else { rng.random_range(0.1..max_off) })
    });
    let c: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.5..1.5));
    spec3(b, c, family)
}

struct Check {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Check { failures: Vec::new(), notes: Vec::new() }
    }

    fn require(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok && self.failures.len() < 5 {
            self.failures.push(msg());
        }
    }

    fn note(&mut self, msg: String) {
        self.notes.push(msg);
    }

    fn budget(&mut self, elapsed: Duration, limit: Duration) {
        self.require(elapsed <= limit, || format!("took {elapsed:?}, limit {limit:?}"));
    }
}

fn criterion_1() -> Check {
    let mut check = Check::new();
    let start = Instant::now();
    let mut decided = 0;
    for i in 0..10 {
        for j in 0..10 {
            let alpha = 0.05 + 0.1 * i as f64;
            let beta = 1.05 + 0.1 * j as f64;
            let spec = may_leonard(alpha, beta, GrowthFamily::LotkaVolterra);
            let closed = (1.0 - alpha).powi(3) + (1.0 - beta).powi(3);
            let r = rho(&spec).unwrap();
            check.require((r - closed).abs() <= 1e-12, || format!("rho({alpha}, {beta}) = {r}, closed form {closed}"));
            let outcome = analyze(&spec).unwrap().outcome;
            if closed > 1e-8 {
                decided += 1;
                check.require(outcome == Outcome::Permanent, || format!("({alpha}, {beta}): {outcome:?}"));
            } else if closed < -1e-8 {
                decided += 1;
                check.require(outcome == Outcome::Impermanent, || format!("({alpha}, {beta}): {outcome:?}"));
            }
        }
    }
    check.note(format!("{decided} of 100 cells decided"));
    check.require(decided >= 90, || format!("only {decided} cells away from rho = 0"));
    check.budget(start.elapsed(), Duration::from_secs(1));
    check
}

fn criterion_2() -> Check {
    let mut check = Check::new();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tested = 0;
    while tested < 200 {
        let spec = cycle_spec(&mut rng);
        let pattern = cycle_pattern(&spec).unwrap();
        check.require(pattern.orientation != CycleOrientation::None, || "constructed spec has no cycle".into());
        let r = oracle_rho(&spec);
        if r.abs() <= 1e-6 {
            continue;
        }
        tested += 1;
        let lib_rho = rho(&spec).unwrap();
        check.require((lib_rho - r).abs() <= 1e-9 * (1.0 + r.abs()), || format!("rho {lib_rho} vs oracle {r}"));
        let cs = build_constraints(&spec).unwrap();
        let feasible = find_certificate(&cs, Direction::Permanence).unwrap().certificate().is_some();
        check.require(feasible == (r > 0.0), || {
            format!("{}: rho = {r:e}, permanence certificate {feasible}", spec.family().key())
        });
    }
    check.budget(start.elapsed(), Duration::from_secs(5));
    check
}

fn criterion_3() -> Check {
    let mut check = Check::new();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut accepted = 0;
    let mut draws = 0u64;
    while accepted < 50 && draws < 5_000_000 {
        draws += 1;
        let family = random_family(&mut rng);
        let spec = random_spec(&mut rng, family);
        if !satisfies_class_29_inequalities(&spec) {
            continue;
        }
        accepted += 1;
        let cs = build_constraints(&spec).unwrap();
        let found = find_certificate(&cs, Direction::Permanence).unwrap().certificate().is_some();
        check.require(found, || format!("no certificate for {:?} ({})", spec.b(), spec.family().key()));
    }
    check.note(format!("{accepted} specs accepted from {draws} draws"));
    check.require(accepted == 50, || format!("only {accepted} class-29 specs in {draws} draws"));
    check.budget(start.elapsed(), Duration::from_secs(5));
    check
}

fn criterion_4() -> Check {
    let mut check = Check::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut plain, mut cycles) = (0, 0);
    let mut tally = std::collections::BTreeMap::new();
    while plain < 100 {
        // Alternate weak and strong competition so both verdicts occur.
        let max_off = if plain % 2 == 0 { 1.0 } else { 2.0 };
        let base = random_spec_with(&mut rng, GrowthFamily::LotkaVolterra, max_off);
        if !sign_configuration(&base).unwrap().nullcline_stable {
            continue;
        }
        let specs: Vec<SystemSpec> = BUILTIN_FAMILIES.iter().map(|f| base.with_family(f.clone()).unwrap()).collect();
        let patterns: Vec<CycleOrientation> = specs.iter().map(|s| cycle_pattern(s).unwrap().orientation).collect();
        check.require(patterns.iter().all(|p| *p == patterns[0]), || format!("cycle class differs: {patterns:?}"));
        if patterns[0] != CycleOrientation::None {
            cycles += 1;
            continue;
        }
        plain += 1;
        let outcomes: Vec<Outcome> = specs.iter().map(|s| analyze(s).unwrap().outcome).collect();
        *tally.entry(format!("{:?}", outcomes[0])).or_insert(0) += 1;
        check.require(outcomes.iter().all(|o| *o == outcomes[0]), || {
            format!("outcomes differ for B = {:?}, c = {:?}: {outcomes:?}", base.b(), base.c())
        });
        check.require(outcomes[0] != Outcome::Degenerate, || "stable spec judged degenerate".into());
    }
    check.require(tally.get("Permanent").copied().unwrap_or(0) >= 10, || "too few permanent specs".into());
    check.note(format!("{plain} specs without a cycle, {cycles} cycle specs skipped; outcomes {tally:?}"));
    check
}

fn criterion_5() -> Check {
    let mut check = Check::new();
    let start = Instant::now();
    let opts = IntegratorOptions::with_t_max(5000.0);
    let permanent = empirical_permanence(&may_leonard(0.8, 1.1, GrowthFamily::LotkaVolterra), 20, &opts, 42);
    check.require(permanent.failures.is_empty(), || format!("{:?}", permanent.failures));
    let delta = permanent.delta_hat.unwrap_or(0.0);
    check.require(delta >= 1e-3, || format!("permanent delta_hat = {delta:e}"));
    let impermanent = empirical_permanence(&may_leonard(0.8, 1.3, GrowthFamily::LotkaVolterra), 20, &opts, 42);
    check.require(impermanent.failures.is_empty(), || format!("{:?}", impermanent.failures));
    let lowest = impermanent.minima.iter().flatten().fold(f64::INFINITY, |a, b| a.min(*b));
    check.note(format!("delta_hat = {delta:.3e} at (0.8, 1.1); lowest minimum {lowest:.3e} at (0.8, 1.3)"));
    check.require(lowest < 1e-6, || format!("impermanent minimum = {lowest:e}"));
    check.budget(start.elapsed(), Duration::from_secs(60));
    check
}

fn criterion_6() -> Check {
    let mut check = Check::new();
    let spec = symmetric_half(GrowthFamily::LotkaVolterra);
    let integral =
        average_liapunov_integral(&spec, &[1.0, 1.0, 1.0], &[0.1, 0.1, 0.0], &IntegratorOptions::with_t_max(200.0))
            .unwrap();
    // g at the planar equilibrium (2/3, 2/3, 0): 0 + 0 + (1 - 0.5 * 4/3).
    let target = 1.0 - 0.5 * (2.0 / 3.0 + 2.0 / 3.0);
    let slope = integral.slope(100.0, 200.0);
    check.note(format!("slope {slope:.6} vs {target:.6}"));
    check.require((slope - target).abs() <= 0.05 * target, || format!("slope {slope}, expected {target}"));
    check
}

fn criterion_7() -> Check {
    let mut check = Check::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let family = random_family(&mut rng);
        let spec = random_spec(&mut rng, family);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..2.0)).collect();
        let jac = jacobian(&spec, &x).unwrap();
        for j in 0..3 {
            let h = 1e-6 * x[j].max(1.0);
            let (mut up, mut down) = (x.clone(), x.clone());
            up[j] += h;
            down[j] -= h;
            let (fu, fd) = (vector_field(&spec, &up).unwrap(), vector_field(&spec, &down).unwrap());
            for i in 0..3 {
                let fd_ij = (fu[i] - fd[i]) / (2.0 * h);
                let err = (jac[(i, j)] - fd_ij).abs() / jac[(i, j)].abs().max(1e-3);
                check.require(err <= 1e-5, || format!("J[{i}][{j}] = {} vs {fd_ij} ({})", jac[(i, j)], spec.family().key()));
            }
        }
        if let Ok(eqs) = all_equilibria(&spec) {
            for eq in eqs {
                let f = per_capita(&spec, &eq.x).unwrap();
                let residual = eq.support.iter().map(|&i| f[i].abs()).fold(0.0, f64::max);
                check.require(residual <= 1e-10, || format!("residual {residual:e} on {:?}", eq.support));
            }
        }
    }

    let traj = integrate(&logistic(1.0, 1.0, GrowthFamily::LotkaVolterra), &[0.5], &IntegratorOptions::with_t_max(10.0))
        .unwrap();
    let exact = 1.0 / (1.0 + (-10.0f64).exp());
    check.require((traj.last()[0] - exact).abs() <= 1e-4, || format!("logistic x(10) = {}", traj.last()[0]));

    for spec in [symmetric_half(GrowthFamily::LotkaVolterra), may_leonard(0.8, 1.1, GrowthFamily::Ricker)] {
        let cloud = sample_carrying_simplex(&spec, 60, 25.0);
        check.require(cloud.failures.is_empty(), || format!("{:?}", cloud.failures));
        let violations = unorderedness_violations(&cloud.points(), 1e-6);
        check.require(violations == 0, || format!("{violations} ordered pairs in the cloud"));
    }
    check
}

fn criterion_8() -> Check {
    let mut check = Check::new();
    let levels = [0.25, 0.5, 0.8, 1.0, 1.25, 1.6, 2.5];
    let mut instances = Vec::new();
    for c2 in [0.7, 1.0, 1.4] {
        for &u in &levels {
            for &v in &levels {
                // gamma_12 = b11 c2 - b21 c1 and gamma_21 = b22 c1 - b12 c2 with b11 = b22 = c1 = 1.
                let (b21, b12) = (u * c2, v / c2);
                let spec = SystemSpec::from_rows(&[vec![1.0, b12], vec![b21, 1.0]], &[1.0, c2], GrowthFamily::LotkaVolterra)
                    .unwrap();
                let (g12, g21) = (c2 - b21, 1.0 - b12 * c2);
                let outcome = analyze(&spec).unwrap().outcome;
                let expected = if g12.abs() < 1e-12 || g21.abs() < 1e-12 {
                    Outcome::Degenerate
                } else if g12 > 0.0 && g21 > 0.0 {
                    Outcome::Permanent
                } else {
                    Outcome::Impermanent
                };
                check.require(outcome == expected, || format!("gamma = ({g12}, {g21}): {outcome:?}"));
                if expected != Outcome::Degenerate {
                    instances.push((spec, expected));
                }
            }
        }
    }
    let step = instances.len() / 20;
    for (spec, expected) in instances.iter().step_by(step).take(20) {
        let report = empirical_permanence(spec, 6, &IntegratorOptions::with_t_max(2000.0), 42);
        let delta = report.delta_hat.unwrap_or(f64::NAN);
        let ok = match expected {
            Outcome::Permanent => delta >= 1e-3,
            _ => delta < 1e-6,
        };
        check.require(ok, || format!("{expected:?} spec {:?} simulated delta_hat = {delta:e}", spec.b()));
    }
    check
}

type Criterion = (&'static str, fn() -> Check);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("May-Leonard rho closed form and verdicts", criterion_1),
        ("certificate feasibility matches sign of rho on cycles", criterion_2),
        ("class 29 specs carry permanence certificates", criterion_3),
        ("verdicts independent of the growth family", criterion_4),
        ("simulation agrees with May-Leonard verdicts", criterion_5),
        ("average Liapunov slope on the x3 = 0 face", criterion_6),
        ("numerical hygiene", criterion_7),
        ("two-species invasion rule", criterion_8),
    ];
    let mut failed = 0;
    for (idx, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let check = run();
        let status = if check.failures.is_empty() { "PASS" } else { "FAIL" };
        println!("criterion {}: {status}  {name} ({:.2?})", idx + 1, start.elapsed());
        for n in &check.notes {
            println!("    {n}");
        }
        for f in &check.failures {
            println!("    {f}");
        }
        failed += usize::from(!check.failures.is_empty());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
