//! Nullcline invariants of three-species systems.
//!
//! With `gamma_ij = b_ii c_j - b_ji c_i` and `beta_ij = b_ii b_jj - b_ij b_ji`,
//! the sign of `gamma_ij` is the sign of the invasion rate `f_j(q_i)`, and the
//! planar equilibrium `v_k` on the face `x_k = 0` (when it exists) has
//! `sign f_k(v_k) = sign(beta_ij) * sign(c_k beta_ij - b_ki gamma_ji - b_kj gamma_ij)`.
//! None of this depends on the growth family.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

use crate::equilibria::{equilibrium_on_support, SupportSolve};
use crate::error::AnalysisError;
use crate::model::SystemSpec;

/// Relative tolerance for treating a classification quantity as zero.
pub const SIGN_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn of(value: f64, tol: f64) -> Sign {
        if value > tol {
            Sign::Positive
        } else if value < -tol {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Negative => "-",
            Sign::Zero => "0",
            Sign::Positive => "+",
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Negative => Sign::Positive,
            Sign::Zero => Sign::Zero,
            Sign::Positive => Sign::Negative,
        }
    }
}

impl Serialize for Sign {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.symbol())
    }
}

/// `b_ii c_j - b_ji c_i` (0-based indices).
pub fn gamma(spec: &SystemSpec, i: usize, j: usize) -> f64 {
    assert_ne!(i, j, "gamma needs distinct indices");
    let (b, c) = (spec.b(), spec.c());
    b[(i, i)] * c[j] - b[(j, i)] * c[i]
}

/// `b_ii b_jj - b_ij b_ji` (0-based indices).
pub fn beta(spec: &SystemSpec, i: usize, j: usize) -> f64 {
    assert_ne!(i, j, "beta needs distinct indices");
    let b = spec.b();
    b[(i, i)] * b[(j, j)] - b[(i, j)] * b[(j, i)]
}

/// `c_k beta_ij - b_ki gamma_ji - b_kj gamma_ij` for `{i, j, k}` distinct.
pub fn planar_quantity(spec: &SystemSpec, k: usize) -> f64 {
    let (i, j) = other_pair(k);
    let b = spec.b();
    spec.c()[k] * beta(spec, i, j) - b[(k, i)] * gamma(spec, j, i) - b[(k, j)] * gamma(spec, i, j)
}

/// The two indices other than `k` in `{0, 1, 2}`, ascending.
pub(crate) fn other_pair(k: usize) -> (usize, usize) {
    match k {
        0 => (1, 2),
        1 => (0, 2),
        2 => (0, 1),
        _ => panic!("index {k} out of range for three species"),
    }
}

pub(crate) fn gamma_tol(spec: &SystemSpec) -> f64 {
    SIGN_TOL * spec.sign_scale()
}

fn beta_tol(spec: &SystemSpec) -> f64 {
    SIGN_TOL * (1.0 + spec.b_norm_inf().powi(2))
}

fn planar_tol(spec: &SystemSpec) -> f64 {
    SIGN_TOL * (1.0 + spec.b_norm_inf().powi(2) * spec.c().amax())
}

fn require_three(spec: &SystemSpec) -> Result<(), AnalysisError> {
    if spec.dim() == 3 {
        Ok(())
    } else {
        Err(AnalysisError::Dimension { required: 3, got: spec.dim() })
    }
}

/// Signs of every classification quantity of a three-species system.
///
/// Maps are keyed by 0-based indices; the JSON form uses 1-based labels such
/// as `"12"` and `"+"/"0"/"-"` strings.
#[derive(Clone, Debug, PartialEq)]
pub struct SignConfiguration {
    pub gamma: BTreeMap<(usize, usize), f64>,
    pub gamma_signs: BTreeMap<(usize, usize), Sign>,
    pub beta_signs: BTreeMap<(usize, usize), Sign>,
    /// `k -> c_k beta_ij - b_ki gamma_ji - b_kj gamma_ij`, present iff `v_k` exists.
    pub planar_quantities: BTreeMap<usize, Option<f64>>,
    pub planar_signs: BTreeMap<usize, Option<Sign>>,
    /// Faces `x_k = 0` whose planar solve was numerically degenerate.
    pub degenerate_planes: Vec<usize>,
    pub nullcline_stable: bool,
}

impl SignConfiguration {
    pub fn gamma_sign(&self, i: usize, j: usize) -> Sign {
        self.gamma_signs[&(i, j)]
    }

    pub fn planar_exists(&self, k: usize) -> bool {
        self.planar_quantities.get(&k).is_some_and(Option::is_some)
    }
}

impl Serialize for SignConfiguration {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let pair = |(i, j): &(usize, usize)| format!("{}{}", i + 1, j + 1);
        let gamma_signs: BTreeMap<String, Sign> =
            self.gamma_signs.iter().map(|(k, v)| (pair(k), *v)).collect();
        let beta_signs: BTreeMap<String, Sign> =
            self.beta_signs.iter().map(|(k, v)| (pair(k), *v)).collect();
        let planar: BTreeMap<String, Option<f64>> = self
            .planar_quantities
            .iter()
            .map(|(k, v)| ((k + 1).to_string(), *v))
            .collect();
        let planar_signs: BTreeMap<String, Option<Sign>> = self
            .planar_signs
            .iter()
            .map(|(k, v)| ((k + 1).to_string(), *v))
            .collect();
        let degenerate: Vec<usize> = self.degenerate_planes.iter().map(|k| k + 1).collect();
        let mut st = s.serialize_struct("SignConfiguration", 6)?;
        st.serialize_field("gamma_signs", &gamma_signs)?;
        st.serialize_field("beta_signs", &beta_signs)?;
        st.serialize_field("planar_quantities", &planar)?;
        st.serialize_field("planar_signs", &planar_signs)?;
        st.serialize_field("degenerate_planes", &degenerate)?;
        st.serialize_field("nullcline_stable", &self.nullcline_stable)?;
        st.end()
    }
}

/// Nullcline configuration of a three-species system.
///
/// A degenerate planar solve does not abort: the face is listed in
/// `degenerate_planes` and the configuration is marked unstable.
pub fn sign_configuration(spec: &SystemSpec) -> Result<SignConfiguration, AnalysisError> {
    require_three(spec)?;
    let g_tol = gamma_tol(spec);
    let b_tol = beta_tol(spec);
    let p_tol = planar_tol(spec);

    let mut gamma_values = BTreeMap::new();
    let mut gamma_signs = BTreeMap::new();
    for i in 0..3 {
        for j in (0..3).filter(|&j| j != i) {
            let g = gamma(spec, i, j);
            gamma_values.insert((i, j), g);
            gamma_signs.insert((i, j), Sign::of(g, g_tol));
        }
    }
    let mut beta_signs = BTreeMap::new();
    for i in 0..3 {
        for j in (i + 1)..3 {
            beta_signs.insert((i, j), Sign::of(beta(spec, i, j), b_tol));
        }
    }

    let mut planar_quantities = BTreeMap::new();
    let mut planar_signs = BTreeMap::new();
    let mut degenerate_planes = Vec::new();
    for k in 0..3 {
        let (i, j) = other_pair(k);
        let (q, s) = match equilibrium_on_support(spec, &[i, j])? {
            SupportSolve::Found(_) => {
                let q = planar_quantity(spec, k);
                (Some(q), Some(Sign::of(q, p_tol)))
            }
            SupportSolve::Absent => (None, None),
            SupportSolve::Degenerate(_) => {
                degenerate_planes.push(k);
                (None, None)
            }
        };
        planar_quantities.insert(k, q);
        planar_signs.insert(k, s);
    }

    let nullcline_stable = degenerate_planes.is_empty()
        && gamma_signs.values().all(|s| *s != Sign::Zero)
        && planar_signs.values().flatten().all(|s| *s != Sign::Zero);

    Ok(SignConfiguration {
        gamma: gamma_values,
        gamma_signs,
        beta_signs,
        planar_quantities,
        planar_signs,
        degenerate_planes,
        nullcline_stable,
    })
}

/// The seven class-29 inequalities for the labeling as given.
pub fn satisfies_class_29_inequalities(spec: &SystemSpec) -> bool {
    if spec.dim() != 3 {
        return false;
    }
    let tol = gamma_tol(spec);
    let g = |i, j| gamma(spec, i, j);
    let pos = |v: f64| v > tol;
    let neg = |v: f64| v < -tol;
    let b = spec.b();
    let planar = b[(2, 0)] * g(1, 0) + b[(2, 1)] * g(0, 1) - spec.c()[2] * beta(spec, 0, 1);
    pos(g(0, 1))
        && pos(g(0, 2))
        && pos(g(1, 0))
        && neg(g(1, 2))
        && neg(g(2, 0))
        && pos(g(2, 1))
        && planar < -planar_tol(spec)
}

/// All six relabelings of three species; `perm[a]` is the original index of new species `a`.
pub const PERMUTATIONS_3: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

#[cfg(test)]
pub(crate) fn is_odd_permutation(perm: &[usize; 3]) -> bool {
    let mut inversions = 0;
    for a in 0..3 {
        for b in (a + 1)..3 {
            if perm[a] > perm[b] {
                inversions += 1;
            }
        }
    }
    inversions % 2 == 1
}

/// The first relabeling under which `spec` satisfies the class-29 inequalities.
///
/// Membership is closed under permutation of the species. Requires a
/// nullcline-stable system.
pub fn class_29_labeling(spec: &SystemSpec) -> Result<Option<[usize; 3]>, AnalysisError> {
    let config = sign_configuration(spec)?;
    if !config.nullcline_stable {
        return Err(AnalysisError::NullclineUnstable);
    }
    for perm in PERMUTATIONS_3 {
        if satisfies_class_29_inequalities(&spec.permuted(&perm)?) {
            return Ok(Some(perm));
        }
    }
    Ok(None)
}

pub fn is_class_29(spec: &SystemSpec) -> Result<bool, AnalysisError> {
    Ok(class_29_labeling(spec)?.is_some())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CycleOrientation {
    /// q1 -> q2 -> q3 -> q1
    Forward,
    /// q1 -> q3 -> q2 -> q1
    Backward,
    None,
}

impl CycleOrientation {
    pub fn reversed(self) -> CycleOrientation {
        match self {
            CycleOrientation::Forward => CycleOrientation::Backward,
            CycleOrientation::Backward => CycleOrientation::Forward,
            CycleOrientation::None => CycleOrientation::None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CyclePattern {
    pub orientation: CycleOrientation,
    /// All six invasion rates have strict signs.
    pub strict: bool,
    pub note: Option<String>,
}

impl CyclePattern {
    pub fn is_cycle(&self) -> bool {
        self.orientation != CycleOrientation::None
    }
}

/// Detect a May-Leonard heteroclinic cycle on the boundary of the carrying simplex.
///
/// Forward means `f_2(q1), f_3(q2), f_1(q3) > 0` and `f_1(q2), f_3(q1), f_2(q3) < 0`
/// with no planar equilibria; Backward is the mirror image. The signs are
/// read off `gamma_ij`, which shares the sign of `f_j(q_i)` for every family.
pub fn cycle_pattern(spec: &SystemSpec) -> Result<CyclePattern, AnalysisError> {
    let config = sign_configuration(spec)?;
    let s = |i, j| config.gamma_sign(i, j);
    let forward = [s(0, 1), s(1, 2), s(2, 0)];
    let backward = [s(1, 0), s(2, 1), s(0, 2)];
    let strict = forward.iter().chain(&backward).all(|x| *x != Sign::Zero);
    let only_axial = (0..3).all(|k| !config.planar_exists(k)) && config.degenerate_planes.is_empty();

    let matches = |up: Sign, down: Sign| {
        forward.iter().all(|x| *x == up) && backward.iter().all(|x| *x == down)
    };
    let weak = |up: Sign, down: Sign| {
        forward.iter().all(|x| *x == up || *x == Sign::Zero)
            && backward.iter().all(|x| *x == down || *x == Sign::Zero)
    };

    let orientation = if strict && only_axial && matches(Sign::Positive, Sign::Negative) {
        CycleOrientation::Forward
    } else if strict && only_axial && matches(Sign::Negative, Sign::Positive) {
        CycleOrientation::Backward
    } else {
        CycleOrientation::None
    };
    let note = if !strict
        && (weak(Sign::Positive, Sign::Negative) || weak(Sign::Negative, Sign::Positive))
    {
        Some("non-strict heteroclinic sign pattern (zero invasion rate); degenerate".to_string())
    } else {
        None
    };
    Ok(CyclePattern { orientation, strict, note })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::boundary_equilibria;
    use crate::fixtures::{may_leonard, symmetric_half};
    use crate::model::{per_capita, GrowthFamily, BUILTIN_FAMILIES};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// gamma_12..gamma_32 = (0.5, 0.7, 0.5, -0.1, -0.2, 0.4);
    /// b31 gamma21 + b32 gamma12 - c3 beta12 = 0.15 + 0.55 - 0.75 = -0.05.
    pub(crate) fn class_29_example() -> SystemSpec {
        SystemSpec::from_rows(
            &[vec![1.0, 0.5, 1.2], vec![0.5, 1.0, 0.6], vec![0.3, 1.1, 1.0]],
            &[1.0, 1.0, 1.0],
            GrowthFamily::LotkaVolterra,
        )
        .unwrap()
    }

    #[test]
    fn gamma_beta_examples() {
        let sym = symmetric_half(GrowthFamily::LotkaVolterra);
        assert_relative_eq!(gamma(&sym, 0, 1), 0.5);
        assert_relative_eq!(beta(&sym, 0, 1), 0.75);
        let ml = may_leonard(0.8, 1.1, GrowthFamily::LotkaVolterra);
        assert_relative_eq!(gamma(&ml, 0, 1), -0.1, epsilon = 1e-15);
        assert_relative_eq!(beta(&ml, 0, 1), 0.12, epsilon = 1e-15);

        let tie = SystemSpec::from_rows(
            &[vec![1.0, 2.0], vec![1.0, 2.0]],
            &[1.0, 1.0],
            GrowthFamily::LotkaVolterra,
        )
        .unwrap();
        assert_eq!(gamma(&tie, 0, 1), 0.0);
        assert_eq!(beta(&tie, 0, 1), 0.0);
    }

    #[test]
    fn sign_configuration_symmetric() {
        let config = sign_configuration(&symmetric_half(GrowthFamily::LotkaVolterra)).unwrap();
        assert!(config.gamma_signs.values().all(|s| *s == Sign::Positive));
        for k in 0..3 {
            assert_relative_eq!(config.planar_quantities[&k].unwrap(), 0.25, epsilon = 1e-14);
        }
        assert!(config.nullcline_stable);
        let json = serde_json::to_value(&config).unwrap();
        assert_eq!(json["gamma_signs"]["12"], "+");
        assert_eq!(json["planar_quantities"]["3"], 0.25);
    }

    #[test]
    fn sign_configuration_may_leonard() {
        let config = sign_configuration(&may_leonard(0.8, 1.1, GrowthFamily::LotkaVolterra)).unwrap();
        assert_eq!(config.gamma_sign(0, 1), Sign::Negative);
        assert_eq!(config.gamma_sign(0, 2), Sign::Positive);
        assert_eq!(config.gamma_sign(1, 2), Sign::Negative);
        assert_eq!(config.gamma_sign(1, 0), Sign::Positive);
        assert_eq!(config.gamma_sign(2, 0), Sign::Negative);
        assert_eq!(config.gamma_sign(2, 1), Sign::Positive);
        assert!((0..3).all(|k| !config.planar_exists(k)));
        assert!(config.nullcline_stable);
    }

    #[test]
    fn zero_gamma_is_unstable() {
        // b_11 c_2 = b_21 c_1 gives gamma_12 = 0.
        let spec = SystemSpec::from_rows(
            &[vec![1.0, 0.5, 0.5], vec![1.0, 1.0, 0.5], vec![0.5, 0.5, 1.0]],
            &[1.0, 1.0, 1.0],
            GrowthFamily::LotkaVolterra,
        )
        .unwrap();
        let config = sign_configuration(&spec).unwrap();
        assert_eq!(config.gamma_sign(0, 1), Sign::Zero);
        assert!(!config.nullcline_stable);
        assert!(matches!(is_class_29(&spec), Err(AnalysisError::NullclineUnstable)));
    }

    #[test]
    fn class_29_examples() {
        let spec = class_29_example();
        assert!(satisfies_class_29_inequalities(&spec));
        assert!(is_class_29(&spec).unwrap());
        assert!(!is_class_29(&symmetric_half(GrowthFamily::LotkaVolterra)).unwrap());
        assert_eq!(cycle_pattern(&spec).unwrap().orientation, CycleOrientation::None);
        assert_eq!(boundary_equilibria(&spec).unwrap().len(), 4);
    }

    #[test]
    fn cycle_pattern_examples() {
        let ml = cycle_pattern(&may_leonard(0.8, 1.1, GrowthFamily::LotkaVolterra)).unwrap();
        assert_eq!(ml.orientation, CycleOrientation::Backward);
        assert!(ml.strict);
        // Swapping the roles of the two off-diagonal parameters reverses the cycle.
        let fwd = cycle_pattern(&may_leonard(1.1, 0.8, GrowthFamily::LotkaVolterra)).unwrap();
        assert_eq!(fwd.orientation, CycleOrientation::Forward);

        let sym = cycle_pattern(&symmetric_half(GrowthFamily::LotkaVolterra)).unwrap();
        assert_eq!(sym.orientation, CycleOrientation::None);

        for a in [0.3, 0.8, 1.0, 1.4] {
            let p = cycle_pattern(&may_leonard(a, a, GrowthFamily::LotkaVolterra)).unwrap();
            assert_eq!(p.orientation, CycleOrientation::None, "alpha = beta = {a}");
        }
        // alpha = 1: f_2(q1) = 1 - beta < 0 but f_3(q1) = 0.
        let tie = cycle_pattern(&may_leonard(1.0, 1.3, GrowthFamily::LotkaVolterra)).unwrap();
        assert_eq!(tie.orientation, CycleOrientation::None);
        assert!(!tie.strict);
        assert!(tie.note.is_some());
    }

    #[test]
    fn rejects_wrong_dimension() {
        let two = SystemSpec::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]], &[1.0, 1.0], GrowthFamily::Ricker)
            .unwrap();
        assert!(matches!(
            sign_configuration(&two),
            Err(AnalysisError::Dimension { required: 3, got: 2 })
        ));
    }

    fn spec3() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (
            prop::collection::vec(prop::collection::vec(0.1f64..2.5, 3), 3),
            prop::collection::vec(0.2f64..2.0, 3),
        )
    }

    proptest! {
        #[test]
        fn planar_eigenvalue_identity((rows, c) in spec3()) {
            for family in BUILTIN_FAMILIES.iter() {
                let spec = SystemSpec::from_rows(&rows, &c, family.clone()).unwrap();
                for k in 0..3 {
                    let (i, j) = other_pair(k);
                    if let Ok(SupportSolve::Found(v)) = equilibrium_on_support(&spec, &[i, j]) {
                        let fk = per_capita(&spec, &v.x).unwrap()[k];
                        let q = planar_quantity(&spec, k);
                        let b = beta(&spec, i, j);
                        if q.abs() > 1e-9 {
                            prop_assert_eq!(fk > 0.0, (b > 0.0) == (q > 0.0));
                        }
                        if matches!(family, GrowthFamily::LotkaVolterra) {
                            prop_assert!((fk - q / b).abs() < 1e-9 * (1.0 + fk.abs()));
                        }
                    }
                }
            }
        }

        #[test]
        fn relabeling_is_consistent((rows, c) in spec3()) {
            let spec = SystemSpec::from_rows(&rows, &c, GrowthFamily::LotkaVolterra).unwrap();
            let base = cycle_pattern(&spec).unwrap();
            let member = is_class_29(&spec).ok();
            if base.is_cycle() {
                prop_assert_eq!(boundary_equilibria(&spec).unwrap().len(), 3);
            }
            if member == Some(true) {
                prop_assert!(!base.is_cycle());
            }
            for perm in PERMUTATIONS_3 {
                let p = spec.permuted(&perm).unwrap();
                let expected = if is_odd_permutation(&perm) { base.orientation.reversed() } else { base.orientation };
                prop_assert_eq!(cycle_pattern(&p).unwrap().orientation, expected);
                prop_assert_eq!(is_class_29(&p).ok(), member);
            }
        }
    }
}
