//! Equilibria of systems with linear nullclines.
//!
//! Off the coordinate planes the nullcline of species `i` is the hyperplane
//! `(Bx)_i = c_i`, so on a given support `K` there is at most one equilibrium:
//! the solution of `B_KK x_K = c_K`, provided it is strictly positive.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Complex, DMatrix, DVector};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::ModelError;
use crate::model::{growth_rate, jacobian, per_capita, SystemSpec};

/// Relative width of the band around zero in which a solved component is
/// neither clearly positive nor clearly negative.
pub const POSITIVITY_TOL: f64 = 1e-9;
/// Sub-blocks with a larger 2-norm condition number are treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Residual bound `max |f_i|` over the support, relative to `1 + ||c||_inf`.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Equilibrium {
    /// Sorted 0-based indices of the positive components.
    pub support: Vec<usize>,
    pub x: Vec<f64>,
    /// `f_j(x)` for every `j` outside the support (the invasion rates).
    pub external_eigs: BTreeMap<usize, f64>,
    /// Eigenvalues of the Jacobian block on the support. Diagnostic only.
    pub internal_spectrum: Vec<Complex<f64>>,
}

impl Equilibrium {
    pub fn is_axial(&self) -> bool {
        self.support.len() == 1
    }

    /// Row `(f_1(x), ..., f_n(x))`; zero on the support.
    pub fn growth_row(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|j| self.external_eigs.get(&j).copied().unwrap_or(0.0))
            .collect()
    }

    /// Support written with 1-based species labels, e.g. `{1,3}`.
    pub fn support_label(&self) -> String {
        support_label(&self.support)
    }
}

pub(crate) fn support_label(support: &[usize]) -> String {
    let inner: Vec<String> = support.iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", inner.join(","))
}

/// JSON export uses 1-based species labels: `{"support", "x", "external_eigs"}`.
impl Serialize for Equilibrium {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Equilibrium", 3)?;
        let support: Vec<usize> = self.support.iter().map(|i| i + 1).collect();
        s.serialize_field("support", &support)?;
        s.serialize_field("x", &self.x)?;
        let eigs: BTreeMap<String, f64> = self
            .external_eigs
            .iter()
            .map(|(j, v)| ((j + 1).to_string(), *v))
            .collect();
        s.serialize_field("external_eigs", &eigs)?;
        s.end()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DegeneracyReason {
    /// `B_KK` is singular or too ill-conditioned to trust sign decisions.
    Singular { condition: f64 },
    /// A solved component lies in the band around zero.
    NearZero { species: usize, value: f64 },
    /// The solved point does not satisfy the nullcline equations.
    Residual { residual: f64 },
}

/// A support whose equilibrium cannot be decided numerically.
#[derive(Clone, Debug, PartialEq)]
pub struct DegenerateSolve {
    pub support: Vec<usize>,
    pub reason: DegeneracyReason,
}

impl fmt::Display for DegenerateSolve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = support_label(&self.support);
        match &self.reason {
            DegeneracyReason::Singular { condition } => {
                write!(f, "support {label}: sub-block singular (condition {condition:.3e})")
            }
            DegeneracyReason::NearZero { species, value } => write!(
                f,
                "support {label}: component {} = {value:.3e} is within the zero band",
                species + 1
            ),
            DegeneracyReason::Residual { residual } => {
                write!(f, "support {label}: nullcline residual {residual:.3e}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SupportSolve {
    Found(Equilibrium),
    /// The linear solve has a clearly negative component.
    Absent,
    Degenerate(DegenerateSolve),
}

#[derive(Debug, thiserror::Error)]
pub enum EquilibriumError {
    #[error("degenerate equilibrium solve: {0}")]
    Degenerate(DegenerateSolve),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The `n` axial equilibria `q_i = (c_i / b_ii) e_i`.
pub fn axial_equilibria(spec: &SystemSpec) -> Result<Vec<Equilibrium>, ModelError> {
    (0..spec.dim())
        .map(|i| {
            let mut x = vec![0.0; spec.dim()];
            x[i] = spec.c()[i] / spec.b()[(i, i)];
            decorate(spec, vec![i], x)
        })
        .collect()
}

/// Solve `B_KK x_K = c_K` on `support` and classify the result.
pub fn equilibrium_on_support(
    spec: &SystemSpec,
    support: &[usize],
) -> Result<SupportSolve, ModelError> {
    let n = spec.dim();
    let mut support = support.to_vec();
    support.sort_unstable();
    support.dedup();
    assert!(
        !support.is_empty() && support.iter().all(|&i| i < n),
        "support must be a nonempty subset of 0..n"
    );
    let k = support.len();
    let block = DMatrix::from_fn(k, k, |a, b| spec.b()[(support[a], support[b])]);
    let rhs = DVector::from_fn(k, |a, _| spec.c()[support[a]]);

    let condition = condition_number(&block);
    if !(condition <= CONDITION_LIMIT) {
        // Parallel, distinct nullcline planes have no common point at all.
        if !is_consistent(&block, &rhs) {
            return Ok(SupportSolve::Absent);
        }
        return Ok(SupportSolve::Degenerate(DegenerateSolve {
            support,
            reason: DegeneracyReason::Singular { condition },
        }));
    }
    let Some(solution) = block.lu().solve(&rhs) else {
        return Ok(SupportSolve::Degenerate(DegenerateSolve {
            support,
            reason: DegeneracyReason::Singular { condition: f64::INFINITY },
        }));
    };

    let scale = support
        .iter()
        .map(|&i| spec.c()[i] / spec.b()[(i, i)])
        .fold(0.0, f64::max);
    let band = POSITIVITY_TOL * scale;
    if solution.iter().any(|&v| v <= -band) {
        return Ok(SupportSolve::Absent);
    }
    if let Some(a) = solution.iter().position(|&v| v.abs() < band) {
        return Ok(SupportSolve::Degenerate(DegenerateSolve {
            support: support.clone(),
            reason: DegeneracyReason::NearZero { species: support[a], value: solution[a] },
        }));
    }

    let mut x = vec![0.0; n];
    for (a, &i) in support.iter().enumerate() {
        x[i] = solution[a];
    }
    let f = per_capita(spec, &x)?;
    let residual = support.iter().map(|&i| f[i].abs()).fold(0.0, f64::max);
    if residual > RESIDUAL_TOL * (1.0 + spec.c().amax()) {
        return Ok(SupportSolve::Degenerate(DegenerateSolve {
            support,
            reason: DegeneracyReason::Residual { residual },
        }));
    }
    Ok(SupportSolve::Found(decorate(spec, support, x)?))
}

fn condition_number(block: &DMatrix<f64>) -> f64 {
    let sv = block.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Does the (numerically) singular system `block x = rhs` have a solution?
fn is_consistent(block: &DMatrix<f64>, rhs: &DVector<f64>) -> bool {
    let svd = block.clone().svd(true, true);
    let cutoff = svd.singular_values.max() / CONDITION_LIMIT;
    let Ok(x) = svd.solve(rhs, cutoff) else {
        return true;
    };
    let residual = (block * &x - rhs).amax();
    residual <= 1e-9 * (rhs.amax() + block.amax() * x.amax())
}

fn decorate(spec: &SystemSpec, support: Vec<usize>, x: Vec<f64>) -> Result<Equilibrium, ModelError> {
    let n = spec.dim();
    let f = per_capita(spec, &x)?;
    let external_eigs = (0..n)
        .filter(|j| !support.contains(j))
        .map(|j| (j, f[j]))
        .collect();
    let jac = jacobian(spec, &x)?;
    let k = support.len();
    let block = DMatrix::from_fn(k, k, |a, b| jac[(support[a], support[b])]);
    let mut internal_spectrum: Vec<Complex<f64>> = block.complex_eigenvalues().iter().copied().collect();
    internal_spectrum.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(Equilibrium { support, x, external_eigs, internal_spectrum })
}

/// Every equilibrium whose support is a nonempty proper subset of the species,
/// sorted by support size then lexicographically.
pub fn boundary_equilibria(spec: &SystemSpec) -> Result<Vec<Equilibrium>, EquilibriumError> {
    collect_equilibria(spec, false)
}

/// Boundary equilibria plus the interior one, when it exists.
pub fn all_equilibria(spec: &SystemSpec) -> Result<Vec<Equilibrium>, EquilibriumError> {
    collect_equilibria(spec, true)
}

/// The equilibrium with full support, if it exists.
pub fn interior_equilibrium(spec: &SystemSpec) -> Result<SupportSolve, ModelError> {
    let full: Vec<usize> = (0..spec.dim()).collect();
    equilibrium_on_support(spec, &full)
}

fn collect_equilibria(spec: &SystemSpec, include_full: bool) -> Result<Vec<Equilibrium>, EquilibriumError> {
    let n = spec.dim();
    assert!(n < usize::BITS as usize, "dimension too large for support enumeration");
    let full_mask = (1usize << n) - 1;
    let mut supports: Vec<Vec<usize>> = (1..=full_mask)
        .filter(|&m| include_full || m != full_mask)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect();
    supports.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));

    let mut out = Vec::new();
    for support in supports {
        match equilibrium_on_support(spec, &support)? {
            SupportSolve::Found(eq) => out.push(eq),
            SupportSolve::Absent => {}
            SupportSolve::Degenerate(d) => return Err(EquilibriumError::Degenerate(d)),
        }
    }
    Ok(out)
}

/// Matrix of invasion rates at the axial equilibria: `theta[(i, j)] = f_j(q_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CharacteristicMatrix {
    pub theta: DMatrix<f64>,
}

impl CharacteristicMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.theta[(i, j)]
    }
}

/// `theta_ij = f_j(c_j, b_ji c_i / b_ii)` for `i != j`, zero diagonal.
///
/// Defined for any dimension; the cycle analysis uses it with `n = 3`.
pub fn characteristic_matrix(spec: &SystemSpec) -> Result<CharacteristicMatrix, ModelError> {
    let n = spec.dim();
    let (b, c) = (spec.b(), spec.c());
    let mut theta = DMatrix::zeros(n, n);
    for i in 0..n {
        let qi = c[i] / b[(i, i)];
        for j in (0..n).filter(|&j| j != i) {
            theta[(i, j)] = growth_rate(spec.family(), c[j], b[(j, i)] * qi)?;
        }
    }
    Ok(CharacteristicMatrix { theta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GrowthFamily, BUILTIN_FAMILIES};
    use crate::fixtures::{may_leonard, symmetric_half};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn axial_examples() {
        let spec = SystemSpec::from_rows(
            &[vec![2.0, 1.0, 1.0], vec![1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0]],
            &[4.0, 1.0, 1.0],
            GrowthFamily::LotkaVolterra,
        )
        .unwrap();
        let axial = axial_equilibria(&spec).unwrap();
        assert_eq!(axial.len(), 3);
        assert_eq!(axial[0].x, vec![2.0, 0.0, 0.0]);
        assert_eq!(axial[1].x, vec![0.0, 1.0, 0.0]);

        let sym = symmetric_half(GrowthFamily::LotkaVolterra);
        let q1 = &axial_equilibria(&sym).unwrap()[0];
        assert_relative_eq!(q1.external_eigs[&1], 0.5, epsilon = 1e-15);
        assert_relative_eq!(q1.external_eigs[&2], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn support_solve_examples() {
        let sym = symmetric_half(GrowthFamily::LotkaVolterra);
        match equilibrium_on_support(&sym, &[0, 1]).unwrap() {
            SupportSolve::Found(eq) => {
                assert_relative_eq!(eq.x[0], 2.0 / 3.0, epsilon = 1e-14);
                assert_relative_eq!(eq.x[1], 2.0 / 3.0, epsilon = 1e-14);
                assert_eq!(eq.x[2], 0.0);
                assert_relative_eq!(eq.external_eigs[&2], 1.0 / 3.0, epsilon = 1e-14);
            }
            other => panic!("expected planar equilibrium, got {other:?}"),
        }
        let ml = may_leonard(0.8, 1.1, GrowthFamily::LotkaVolterra);
        assert_eq!(equilibrium_on_support(&ml, &[0, 1]).unwrap(), SupportSolve::Absent);

        match interior_equilibrium(&sym).unwrap() {
            SupportSolve::Found(eq) => {
                for v in &eq.x {
                    assert_relative_eq!(*v, 0.5, epsilon = 1e-14);
                }
                assert!(eq.internal_spectrum.iter().all(|z| z.re < 0.0));
            }
            other => panic!("expected interior equilibrium, got {other:?}"),
        }
    }

    #[test]
    fn singular_block_is_degenerate() {
        let spec = SystemSpec::from_rows(
            &[vec![1.0, 1.0], vec![1.0, 1.0]],
            &[1.0, 1.0],
            GrowthFamily::LotkaVolterra,
        )
        .unwrap();
        match equilibrium_on_support(&spec, &[0, 1]).unwrap() {
            SupportSolve::Degenerate(DegenerateSolve {
                reason: DegeneracyReason::Singular { .. },
                ..
            }) => {}
            other => panic!("expected singular, got {other:?}"),
        }
        // Boundary enumeration with n = 2 never touches the full block.
        assert_eq!(boundary_equilibria(&spec).unwrap().len(), 2);
        assert!(matches!(all_equilibria(&spec), Err(EquilibriumError::Degenerate(_))));
    }

    #[test]
    fn parallel_nullclines_have_no_equilibrium() {
        // det = 1 - 0.8 * 1.25 = 0, but c is not in the range of B.
        let spec = SystemSpec::from_rows(
            &[vec![1.0, 0.8], vec![1.25, 1.0]],
            &[1.0, 1.0],
            GrowthFamily::LotkaVolterra,
        )
        .unwrap();
        assert!(matches!(equilibrium_on_support(&spec, &[0, 1]).unwrap(), SupportSolve::Absent));
        let ml = crate::fixtures::may_leonard(0.8, 1.25, GrowthFamily::LotkaVolterra);
        assert_eq!(boundary_equilibria(&ml).unwrap().len(), 3);
    }

    #[test]
    fn near_zero_component_is_degenerate() {
        // gamma_12 = b11 c2 - b21 c1 = 0 places the planar solution on the axis.
        let spec = SystemSpec::from_rows(
            &[vec![1.0, 0.5], vec![1.0, 2.0]],
            &[1.0, 1.0],
            GrowthFamily::LotkaVolterra,
        )
        .unwrap();
        assert!(matches!(
            equilibrium_on_support(&spec, &[0, 1]).unwrap(),
            SupportSolve::Degenerate(DegenerateSolve { reason: DegeneracyReason::NearZero { .. }, .. })
        ));
    }

    #[test]
    fn boundary_counts() {
        let two = SystemSpec::from_rows(
            &[vec![1.0, 0.5], vec![0.5, 1.0]],
            &[1.0, 1.0],
            GrowthFamily::LotkaVolterra,
        )
        .unwrap();
        let eqs = boundary_equilibria(&two).unwrap();
        assert_eq!(eqs.len(), 2);
        assert!(eqs.iter().all(Equilibrium::is_axial));

        let sym = boundary_equilibria(&symmetric_half(GrowthFamily::LotkaVolterra)).unwrap();
        assert_eq!(sym.len(), 6);
        let supports: Vec<_> = sym.iter().map(|e| e.support.clone()).collect();
        assert_eq!(supports, vec![vec![0], vec![1], vec![2], vec![0, 1], vec![0, 2], vec![1, 2]]);

        let ml = boundary_equilibria(&may_leonard(0.8, 1.1, GrowthFamily::LotkaVolterra)).unwrap();
        assert_eq!(ml.len(), 3);
    }

    #[test]
    fn characteristic_matrix_may_leonard() {
        let theta = characteristic_matrix(&may_leonard(0.8, 1.1, GrowthFamily::LotkaVolterra)).unwrap();
        let expected = [[0.0, -0.1, 0.2], [0.2, 0.0, -0.1], [-0.1, 0.2, 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(theta.get(i, j), expected[i][j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn equilibrium_json_is_one_based() {
        let sym = symmetric_half(GrowthFamily::LotkaVolterra);
        let q1 = &axial_equilibria(&sym).unwrap()[0];
        let text = serde_json::to_string(q1).unwrap();
        assert_eq!(text, r#"{"support":[1],"x":[1.0,0.0,0.0],"external_eigs":{"2":0.5,"3":0.5}}"#);
    }

    fn positive_spec3() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (
            prop::collection::vec(prop::collection::vec(0.1f64..2.5, 3), 3),
            prop::collection::vec(0.2f64..2.0, 3),
        )
    }

    proptest! {
        #[test]
        fn residuals_and_family_independent_signs((rows, c) in positive_spec3()) {
            let mut signs: Option<Vec<Vec<i8>>> = None;
            for family in BUILTIN_FAMILIES.iter() {
                let spec = SystemSpec::from_rows(&rows, &c, family.clone()).unwrap();
                let Ok(eqs) = boundary_equilibria(&spec) else { return Ok(()) };
                for eq in &eqs {
                    let f = per_capita(&spec, &eq.x).unwrap();
                    for &i in &eq.support {
                        prop_assert!(f[i].abs() <= RESIDUAL_TOL * (1.0 + spec.c().amax()));
                        prop_assert!(eq.x[i] > 0.0);
                    }
                }
                let tol = 1e-12;
                let these: Vec<Vec<i8>> = eqs
                    .iter()
                    .map(|e| e.external_eigs.values().map(|v| if *v > tol { 1 } else if *v < -tol { -1 } else { 0 }).collect())
                    .collect();
                match &signs {
                    None => signs = Some(these),
                    Some(prev) => prop_assert_eq!(prev, &these),
                }
            }
        }

        #[test]
        fn theta_sign_matches_gamma((rows, c) in positive_spec3()) {
            for family in BUILTIN_FAMILIES.iter() {
                let spec = SystemSpec::from_rows(&rows, &c, family.clone()).unwrap();
                let theta = characteristic_matrix(&spec).unwrap();
                for i in 0..3 {
                    prop_assert_eq!(theta.get(i, i), 0.0);
                    for j in (0..3).filter(|&j| j != i) {
                        let gamma = rows[i][i] * c[j] - rows[j][i] * c[i];
                        if gamma.abs() > 1e-9 {
                            prop_assert_eq!(theta.get(i, j) > 0.0, gamma > 0.0);
                        }
                    }
                }
            }
        }
    }
}
