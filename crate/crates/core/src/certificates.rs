//! Average-Liapunov certificates and the permanence verdict.
//!
//! For weights `nu >> 0`, `V(x) = prod x_i^nu_i` vanishes exactly on the
//! boundary and `V'/V = g(x) = sum nu_i f_i(x)`. In three dimensions the
//! limit sets on the boundary of the carrying simplex are equilibria, so
//! permanence follows once `g > 0` at every boundary equilibrium, and
//! impermanence once `g < 0` at all of them. Each equilibrium contributes the
//! row `(f_1, ..., f_n)`, and finding `nu` is a small linear program.

use serde::Serialize;

use crate::equilibria::{
    axial_equilibria, boundary_equilibria, characteristic_matrix, support_label, Equilibrium,
    EquilibriumError,
};
use crate::error::AnalysisError;
use crate::lp::{LinearProgram, LpError, LpOutcome};
use crate::model::SystemSpec;
use crate::nullcline::{
    class_29_labeling, cycle_pattern, gamma, gamma_tol, other_pair, beta, sign_configuration,
    CycleOrientation, Sign,
};
use crate::simulate::{empirical_permanence, IntegratorOptions};

/// Upper bound on each weight; weights are normalized to `nu_i >= 1`.
pub const WEIGHT_BOUND: f64 = 1e6;
/// A margin must exceed this multiple of the largest row entry.
pub const MARGIN_TOL: f64 = 1e-8;
/// `|rho|` at or below this multiple of `max |theta|^3` is treated as zero.
pub const RHO_TOL: f64 = 1e-10;

/// One row `(f_1(x), ..., f_n(x))` per boundary equilibrium `x`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintSystem {
    pub rows: Vec<Vec<f64>>,
    /// Support of the equilibrium behind each row (0-based).
    #[serde(skip)]
    pub labels: Vec<Vec<usize>>,
}

impl ConstraintSystem {
    pub fn from_equilibria(n: usize, equilibria: &[Equilibrium]) -> ConstraintSystem {
        ConstraintSystem {
            rows: equilibria.iter().map(|e| e.growth_row(n)).collect(),
            labels: equilibria.iter().map(|e| e.support.clone()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Largest absolute entry, floored at the smallest positive normal.
    pub fn scale(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .map(|v| v.abs())
            .fold(f64::MIN_POSITIVE, f64::max)
    }

    /// `min_r direction * (row_r . nu)`.
    pub fn margin(&self, nu: &[f64], direction: Direction) -> f64 {
        self.rows
            .iter()
            .map(|row| direction.sign() * row.iter().zip(nu).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Rows for every boundary equilibrium of `spec`.
///
/// Meaningful as a certificate basis for `n <= 3`; higher dimensions can have
/// boundary limit sets that are not equilibria.
pub fn build_constraints(spec: &SystemSpec) -> Result<ConstraintSystem, EquilibriumError> {
    let eqs = boundary_equilibria(spec)?;
    Ok(ConstraintSystem::from_equilibria(spec.dim(), &eqs))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    Permanence,
    Impermanence,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Permanence => 1.0,
            Direction::Impermanence => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub nu: Vec<f64>,
    pub margin: f64,
    pub direction: Direction,
}

impl Certificate {
    /// Re-evaluate every row against `nu`, independent of the LP.
    pub fn verify(&self, cs: &ConstraintSystem) -> bool {
        self.nu.iter().all(|v| *v > 0.0)
            && cs.margin(&self.nu, self.direction) >= self.margin * (1.0 - 1e-9) - 1e-300
            && self.margin > 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasibleNote {
    /// The best margin is positive but below the acceptance threshold.
    MarginBelowThreshold,
    /// A certificate exists but needs weight ratios beyond [`WEIGHT_BOUND`].
    WeightBoundActive,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CertificateSearch {
    Found(Certificate),
    Infeasible { best_margin: f64, note: Option<InfeasibleNote> },
}

impl CertificateSearch {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            CertificateSearch::Found(c) => Some(c),
            CertificateSearch::Infeasible { .. } => None,
        }
    }
}

/// Maximize the worst-case margin `t` over `1 <= nu_i <= WEIGHT_BOUND`.
///
/// Positive homogeneity of the constraints makes the lower bound `nu >= 1`
/// a normalization rather than a restriction. The returned weights are
/// rescaled so that `min nu_i = 1`, and the margin is measured at that scale.
pub fn find_certificate(cs: &ConstraintSystem, direction: Direction) -> Result<CertificateSearch, LpError> {
    let n = cs.dim();
    assert!(!cs.rows.is_empty(), "certificate search needs at least one row");
    let s = direction.sign();
    // Variables: w_0..w_{n-1} (nu = 1 + w), t+ and t-.
    let mut objective = vec![0.0; n + 2];
    objective[n] = 1.0;
    objective[n + 1] = -1.0;
    let mut lp = LinearProgram::maximize(objective);
    for row in &cs.rows {
        let mut coeffs: Vec<f64> = row.iter().map(|v| -s * v).collect();
        coeffs.push(1.0);
        coeffs.push(-1.0);
        lp = lp.less_eq(coeffs, s * row.iter().sum::<f64>());
    }
    for i in 0..n {
        let mut coeffs = vec![0.0; n + 2];
        coeffs[i] = 1.0;
        lp = lp.less_eq(coeffs, WEIGHT_BOUND - 1.0);
    }
    let raw: Vec<f64> = match lp.solve()? {
        LpOutcome::Optimal { x, .. } => x[..n].iter().map(|w| (1.0 + w).clamp(1.0, WEIGHT_BOUND)).collect(),
        // The box keeps the program feasible (nu = 1) and bounded.
        other => unreachable!("box-constrained certificate program returned {other:?}"),
    };
    // The optimum sits against the upper bound wherever it can; report the
    // same direction with its smallest weight equal to 1.
    let lowest = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let nu: Vec<f64> = raw.iter().map(|v| v / lowest).collect();
    let margin = cs.margin(&nu, direction);
    let threshold = MARGIN_TOL * cs.scale();
    if margin > threshold {
        return Ok(CertificateSearch::Found(Certificate { nu, margin, direction }));
    }
    let note = if homogeneous_margin(cs, direction)? > 1e-12 * cs.scale() {
        Some(InfeasibleNote::WeightBoundActive)
    } else if margin > 0.0 {
        Some(InfeasibleNote::MarginBelowThreshold)
    } else {
        None
    };
    Ok(CertificateSearch::Infeasible { best_margin: margin, note })
}

/// `max t` subject to `direction * (row . nu) >= t`, `nu_i >= t`, `nu_i <= 1`.
/// Positive exactly when the open cone of certificates is nonempty.
fn homogeneous_margin(cs: &ConstraintSystem, direction: Direction) -> Result<f64, LpError> {
    let n = cs.dim();
    let s = direction.sign();
    let mut objective = vec![0.0; n + 1];
    objective[n] = 1.0;
    let mut lp = LinearProgram::maximize(objective);
    for row in &cs.rows {
        let mut coeffs: Vec<f64> = row.iter().map(|v| -s * v).collect();
        coeffs.push(1.0);
        lp = lp.less_eq(coeffs, 0.0);
    }
    for i in 0..n {
        let mut lower = vec![0.0; n + 1];
        lower[i] = -1.0;
        lower[n] = 1.0;
        lp = lp.less_eq(lower, 0.0);
        let mut upper = vec![0.0; n + 1];
        upper[i] = 1.0;
        lp = lp.less_eq(upper, 1.0);
    }
    match lp.solve()? {
        LpOutcome::Optimal { value, .. } => Ok(value),
        _ => Ok(0.0),
    }
}

fn require_three(spec: &SystemSpec) -> Result<(), AnalysisError> {
    if spec.dim() == 3 {
        Ok(())
    } else {
        Err(AnalysisError::Dimension { required: 3, got: spec.dim() })
    }
}

/// `rho = theta_12 theta_23 theta_31 + theta_21 theta_13 theta_32`.
pub fn rho(spec: &SystemSpec) -> Result<f64, AnalysisError> {
    require_three(spec)?;
    let t = characteristic_matrix(spec)?;
    Ok(t.get(0, 1) * t.get(1, 2) * t.get(2, 0) + t.get(1, 0) * t.get(0, 2) * t.get(2, 1))
}

fn rho_threshold(spec: &SystemSpec) -> Result<f64, AnalysisError> {
    let t = characteristic_matrix(spec)?;
    Ok(RHO_TOL * t.theta.amax().powi(3).max(f64::MIN_POSITIVE))
}

/// An equilibrium on the boundary of the carrying simplex that attracts within it:
/// an axial `q_i` with both invasion rates negative, or a planar `v_k` that
/// attracts along its edge (`beta_ij > 0`) and resists invasion (`f_k(v_k) < 0`).
pub fn boundary_attractor(spec: &SystemSpec) -> Result<Option<Equilibrium>, AnalysisError> {
    require_three(spec)?;
    let tol = 1e-12 * (1.0 + spec.c().amax());
    let b_tol = 1e-10 * (1.0 + spec.b_norm_inf().powi(2));
    for eq in boundary_equilibria(spec)? {
        let all_negative = eq.external_eigs.values().all(|v| *v < -tol);
        let attracting = match eq.support.len() {
            1 => all_negative,
            2 => {
                let (i, j) = (eq.support[0], eq.support[1]);
                let k = 3 - i - j;
                debug_assert_eq!(other_pair(k), (i, j));
                beta(spec, i, j) > b_tol && all_negative
            }
            _ => false,
        };
        if attracting {
            return Ok(Some(eq));
        }
    }
    Ok(None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Permanent,
    Impermanent,
    Degenerate,
    Inconclusive,
}

/// One step of the decision chain.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    SingleSpecies { equilibrium: Equilibrium },
    BoundaryEquilibria { supports: Vec<String> },
    Degeneracy { reason: String },
    TwoSpeciesRule { gamma_12: f64, gamma_21: f64 },
    Certificate { certificate: Certificate },
    CertificateInfeasible {
        direction: Direction,
        best_margin: f64,
        note: Option<InfeasibleNote>,
    },
    BoundaryAttractor { equilibrium: Equilibrium },
    HeteroclinicCycle { orientation: CycleOrientation },
    Rho { value: f64 },
    Class29 { labeling: [usize; 3] },
    Simulation {
        samples: usize,
        t_max: f64,
        delta_hat: Option<f64>,
        d_hat: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub nu: Option<Vec<f64>>,
    pub margin: Option<f64>,
    pub rho: Option<f64>,
    pub evidence: Vec<Finding>,
    pub notes: Vec<String>,
}

impl Verdict {
    fn new() -> Verdict {
        Verdict {
            outcome: Outcome::Inconclusive,
            nu: None,
            margin: None,
            rho: None,
            evidence: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn conclude(mut self, outcome: Outcome) -> Verdict {
        self.outcome = outcome;
        self
    }

    fn adopt(&mut self, cert: &Certificate) {
        self.nu = Some(cert.nu.clone());
        self.margin = Some(cert.margin);
        self.evidence.push(Finding::Certificate { certificate: cert.clone() });
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        self.evidence.iter().find_map(|f| match f {
            Finding::Certificate { certificate } => Some(certificate),
            _ => None,
        })
    }
}

/// Controls the simulation diagnostics attached to verdicts for `n >= 4`.
#[derive(Clone, Debug)]
pub struct AnalyzeOptions {
    pub high_dim_samples: usize,
    pub high_dim_t_max: f64,
    pub seed: u64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions { high_dim_samples: 8, high_dim_t_max: 500.0, seed: 42 }
    }
}

pub fn analyze(spec: &SystemSpec) -> Result<Verdict, AnalysisError> {
    analyze_with(spec, &AnalyzeOptions::default())
}

/// Decide permanence of `spec`.
///
/// Degeneracies come first; then `n = 1` is permanent, `n = 2` follows the
/// invasion-rate rule, and `n = 3` tries a permanence certificate, an
/// impermanence certificate, a boundary attractor and finally the sign of
/// `rho` on heteroclinic cycles. Larger systems only get simulation
/// diagnostics and an `Inconclusive` outcome.
pub fn analyze_with(spec: &SystemSpec, options: &AnalyzeOptions) -> Result<Verdict, AnalysisError> {
    let mut verdict = Verdict::new();
    let eqs = match boundary_equilibria(spec) {
        Ok(eqs) => eqs,
        Err(EquilibriumError::Degenerate(d)) => {
            verdict.evidence.push(Finding::Degeneracy { reason: d.to_string() });
            return Ok(verdict.conclude(Outcome::Degenerate));
        }
        Err(EquilibriumError::Model(e)) => return Err(e.into()),
    };
    if spec.dim() > 1 {
        verdict.evidence.push(Finding::BoundaryEquilibria {
            supports: eqs.iter().map(Equilibrium::support_label).collect(),
        });
    }

    match spec.dim() {
        1 => {
            let q = axial_equilibria(spec)?.remove(0);
            verdict.evidence.push(Finding::SingleSpecies { equilibrium: q });
            Ok(verdict.conclude(Outcome::Permanent))
        }
        2 => analyze_two(spec, &eqs, verdict),
        3 => analyze_three(spec, &eqs, verdict),
        _ => analyze_high(spec, options, verdict),
    }
}

fn analyze_two(spec: &SystemSpec, eqs: &[Equilibrium], mut verdict: Verdict) -> Result<Verdict, AnalysisError> {
    let tol = gamma_tol(spec);
    let (g12, g21) = (gamma(spec, 0, 1), gamma(spec, 1, 0));
    verdict.evidence.push(Finding::TwoSpeciesRule { gamma_12: g12, gamma_21: g21 });
    let s12 = Sign::of(g12, tol);
    let s21 = Sign::of(g21, tol);
    if s12 == Sign::Zero || s21 == Sign::Zero {
        verdict.evidence.push(Finding::Degeneracy {
            reason: "zero invasion rate at an axial equilibrium".into(),
        });
        return Ok(verdict.conclude(Outcome::Degenerate));
    }
    let cs = ConstraintSystem::from_equilibria(2, eqs);
    if s12 == Sign::Positive && s21 == Sign::Positive {
        match find_certificate(&cs, Direction::Permanence)? {
            CertificateSearch::Found(cert) => verdict.adopt(&cert),
            CertificateSearch::Infeasible { .. } => verdict
                .notes
                .push("no certificate within the weight bound despite positive invasion rates".into()),
        }
        return Ok(verdict.conclude(Outcome::Permanent));
    }
    // gamma_ij < 0 means species j cannot invade q_i, which then attracts.
    let attractor = if s12 == Sign::Negative { 0 } else { 1 };
    if let Some(eq) = eqs.iter().find(|e| e.support == [attractor]) {
        verdict.evidence.push(Finding::BoundaryAttractor { equilibrium: eq.clone() });
    }
    if let CertificateSearch::Found(cert) = find_certificate(&cs, Direction::Impermanence)? {
        verdict.adopt(&cert);
    }
    Ok(verdict.conclude(Outcome::Impermanent))
}

fn analyze_three(spec: &SystemSpec, eqs: &[Equilibrium], mut verdict: Verdict) -> Result<Verdict, AnalysisError> {
    let config = sign_configuration(spec)?;
    if !config.nullcline_stable {
        let mut reasons: Vec<String> = config
            .gamma_signs
            .iter()
            .filter(|(_, s)| **s == Sign::Zero)
            .map(|((i, j), _)| format!("gamma_{}{} = 0", i + 1, j + 1))
            .collect();
        for (k, s) in &config.planar_signs {
            if *s == Some(Sign::Zero) {
                reasons.push(format!("planar quantity for v_{} = 0", k + 1));
            }
        }
        for k in &config.degenerate_planes {
            reasons.push(format!("planar solve on face x_{} = 0 is degenerate", k + 1));
        }
        verdict.evidence.push(Finding::Degeneracy {
            reason: format!("not nullcline stable: {}", reasons.join(", ")),
        });
        return Ok(verdict.conclude(Outcome::Degenerate));
    }

    let cycle = cycle_pattern(spec)?;
    if let Some(note) = &cycle.note {
        verdict.notes.push(note.clone());
    }
    let rho_value = if cycle.is_cycle() {
        let value = rho(spec)?;
        verdict.evidence.push(Finding::HeteroclinicCycle { orientation: cycle.orientation });
        verdict.evidence.push(Finding::Rho { value });
        verdict.rho = Some(value);
        Some(value)
    } else {
        None
    };
    if let Some(labeling) = class_29_labeling(spec)? {
        verdict.evidence.push(Finding::Class29 { labeling: labeling.map(|i| i + 1) });
    }

    let cs = ConstraintSystem::from_equilibria(3, eqs);
    let mut bound_limited = false;
    for direction in [Direction::Permanence, Direction::Impermanence] {
        match find_certificate(&cs, direction)? {
            CertificateSearch::Found(cert) => {
                debug_assert!(cert.verify(&cs));
                verdict.adopt(&cert);
                let outcome = match direction {
                    Direction::Permanence => Outcome::Permanent,
                    Direction::Impermanence => Outcome::Impermanent,
                };
                if let Some(r) = rho_value {
                    let agrees = (r > 0.0) == (direction == Direction::Permanence);
                    if !agrees && r.abs() > rho_threshold(spec)? {
                        verdict.notes.push(format!("rho = {r:e} disagrees with the certificate"));
                    }
                }
                return Ok(verdict.conclude(outcome));
            }
            CertificateSearch::Infeasible { best_margin, note } => {
                bound_limited |= note == Some(InfeasibleNote::WeightBoundActive);
                if note == Some(InfeasibleNote::MarginBelowThreshold) {
                    verdict.notes.push(format!(
                        "{direction:?} margin {best_margin:e} is positive but below threshold; treated as infeasible"
                    ));
                }
                verdict.evidence.push(Finding::CertificateInfeasible { direction, best_margin, note });
            }
        }
    }

    if let Some(eq) = boundary_attractor(spec)? {
        verdict.evidence.push(Finding::BoundaryAttractor { equilibrium: eq });
        return Ok(verdict.conclude(Outcome::Impermanent));
    }
    if bound_limited {
        verdict
            .notes
            .push(format!("a certificate needs weight ratios beyond {WEIGHT_BOUND:e}"));
    }
    if let Some(r) = rho_value {
        if r.abs() <= rho_threshold(spec)? {
            verdict.notes.push("rho is zero within tolerance".into());
            return Ok(verdict.conclude(Outcome::Inconclusive));
        }
        let outcome = if r > 0.0 { Outcome::Permanent } else { Outcome::Impermanent };
        return Ok(verdict.conclude(outcome));
    }
    Ok(verdict.conclude(Outcome::Inconclusive))
}

fn analyze_high(spec: &SystemSpec, options: &AnalyzeOptions, mut verdict: Verdict) -> Result<Verdict, AnalysisError> {
    verdict.notes.push(format!(
        "n = {}: boundary limit sets need not be equilibria; no analytic verdict",
        spec.dim()
    ));
    if options.high_dim_samples > 0 {
        let opts = IntegratorOptions { t_max: options.high_dim_t_max, ..IntegratorOptions::default() };
        let report = empirical_permanence(spec, options.high_dim_samples, &opts, options.seed);
        verdict.evidence.push(Finding::Simulation {
            samples: options.high_dim_samples,
            t_max: options.high_dim_t_max,
            delta_hat: report.delta_hat,
            d_hat: report.d_hat,
        });
    }
    Ok(verdict.conclude(Outcome::Inconclusive))
}

/// Human-readable support label, e.g. `{1,2}`.
pub fn label(support: &[usize]) -> String {
    support_label(support)
}
