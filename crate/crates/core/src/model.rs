//! Competitive Kolmogorov systems with linearly determined nullclines.
//!
//! A system is `x_i' = x_i f(c_i, (Bx)_i)` on the nonnegative cone, where the
//! per-capita law `f(r, y)` is one of the built-in growth families or a
//! user-supplied closure. Every law must satisfy
//!
//! * `f(r, r) = 0`,
//! * `df/dy < 0`,
//! * `y f(r, y) -> 0` as `y -> 0+`,
//!
//! for all positive `r`, `y`. The built-in laws all have
//! `sign f(r, y) = sign(r - y)`, which is what makes the downstream sign
//! classification independent of the family.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Violation};

type LawFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A user-supplied growth law. Library-only; it cannot be serialized.
#[derive(Clone)]
pub struct CustomLaw {
    name: String,
    f: LawFn,
    df_dy: Option<LawFn>,
}

impl CustomLaw {
    pub fn new<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        CustomLaw {
            name: name.into(),
            f: Arc::new(f),
            df_dy: None,
        }
    }

    /// Attach an analytic `df/dy`. Without it, derivatives use central differences.
    pub fn with_derivative<D>(mut self, df_dy: D) -> Self
    where
        D: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.df_dy = Some(Arc::new(df_dy));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn eval(&self, r: f64, y: f64) -> f64 {
        (self.f)(r, y)
    }

    fn derivative(&self, r: f64, y: f64) -> f64 {
        match &self.df_dy {
            Some(d) => d(r, y),
            None => {
                let h = 1e-6 * y.abs().max(1e-3);
                let lo = (y - h).max(0.5 * y);
                let hi = y + h;
                ((self.f)(r, hi) - (self.f)(r, lo)) / (hi - lo)
            }
        }
    }
}

impl fmt::Debug for CustomLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomLaw")
            .field("name", &self.name)
            .field("analytic_derivative", &self.df_dy.is_some())
            .finish()
    }
}

/// Per-capita growth law `f(r, y)`.
#[derive(Clone, Debug)]
pub enum GrowthFamily {
    /// `r - y`
    LotkaVolterra,
    /// `ln(r / y)`
    Gompertz,
    /// `(1 + r) / (1 + y) - 1`
    LeslieGower,
    /// `exp(r - y) - 1`
    Ricker,
    Custom(CustomLaw),
}

/// Built-in families, in listing order.
pub const BUILTIN_FAMILIES: [GrowthFamily; 4] = [
    GrowthFamily::LotkaVolterra,
    GrowthFamily::Gompertz,
    GrowthFamily::LeslieGower,
    GrowthFamily::Ricker,
];

impl GrowthFamily {
    /// Name used in JSON configs and the CLI.
    pub fn key(&self) -> &str {
        match self {
            GrowthFamily::LotkaVolterra => "lotka_volterra",
            GrowthFamily::Gompertz => "gompertz",
            GrowthFamily::LeslieGower => "leslie_gower",
            GrowthFamily::Ricker => "ricker",
            GrowthFamily::Custom(law) => law.name(),
        }
    }

    /// Human-readable formula of the per-capita law.
    pub fn formula(&self) -> &'static str {
        match self {
            GrowthFamily::LotkaVolterra => "f(r,y) = r − y",
            GrowthFamily::Gompertz => "f(r,y) = ln(r/y)",
            GrowthFamily::LeslieGower => "f(r,y) = (1+r)/(1+y) − 1",
            GrowthFamily::Ricker => "f(r,y) = exp(r−y) − 1",
            GrowthFamily::Custom(_) => "user-supplied",
        }
    }

    pub fn from_key(key: &str) -> Option<GrowthFamily> {
        let normalized: String = key
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match normalized.as_str() {
            "lotkavolterra" | "lv" => Some(GrowthFamily::LotkaVolterra),
            "gompertz" => Some(GrowthFamily::Gompertz),
            "lesliegower" | "lg" => Some(GrowthFamily::LeslieGower),
            "ricker" => Some(GrowthFamily::Ricker),
            _ => None,
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self, GrowthFamily::Custom(_))
    }

    fn eval_unchecked(&self, r: f64, y: f64) -> f64 {
        match self {
            GrowthFamily::LotkaVolterra => r - y,
            GrowthFamily::Gompertz => (r / y).ln(),
            GrowthFamily::LeslieGower => (r - y) / (1.0 + y),
            GrowthFamily::Ricker => (r - y).exp_m1(),
            GrowthFamily::Custom(law) => law.eval(r, y),
        }
    }

    fn derivative_unchecked(&self, r: f64, y: f64) -> f64 {
        match self {
            GrowthFamily::LotkaVolterra => -1.0,
            GrowthFamily::Gompertz => -1.0 / y,
            GrowthFamily::LeslieGower => -(1.0 + r) / ((1.0 + y) * (1.0 + y)),
            GrowthFamily::Ricker => -(r - y).exp(),
            GrowthFamily::Custom(law) => law.derivative(r, y),
        }
    }
}

/// Evaluate `f(r, y)` for `family`.
///
/// `y = 0` is accepted for laws that extend continuously to it (all built-ins
/// except Gompertz); Gompertz reports a domain error there.
pub fn growth_rate(family: &GrowthFamily, r: f64, y: f64) -> Result<f64, ModelError> {
    check_arguments(r, y)?;
    if y == 0.0 && matches!(family, GrowthFamily::Gompertz) {
        return Err(ModelError::Domain { species: None, y });
    }
    let value = family.eval_unchecked(r, y);
    if !value.is_finite() {
        return Err(ModelError::NonFiniteLaw { r, y, value });
    }
    Ok(value)
}

/// `df/dy` at `(r, y)`.
pub fn growth_rate_dy(family: &GrowthFamily, r: f64, y: f64) -> Result<f64, ModelError> {
    check_arguments(r, y)?;
    if y == 0.0 && matches!(family, GrowthFamily::Gompertz) {
        return Err(ModelError::Domain { species: None, y });
    }
    let value = family.derivative_unchecked(r, y);
    if !value.is_finite() {
        return Err(ModelError::NonFiniteLaw { r, y, value });
    }
    Ok(value)
}

fn check_arguments(r: f64, y: f64) -> Result<(), ModelError> {
    if !r.is_finite() || !y.is_finite() {
        return Err(ModelError::NonFiniteInput);
    }
    if r <= 0.0 || y < 0.0 {
        return Err(ModelError::Domain { species: None, y });
    }
    Ok(())
}

/// A validated competitive system `x_i' = x_i f(c_i, (Bx)_i)`.
///
/// Construction goes through [`SystemSpec::new`], which runs [`validate`], so
/// every value of this type has strictly positive `B` and `c`.
#[derive(Clone, Debug)]
pub struct SystemSpec {
    b: DMatrix<f64>,
    c: DVector<f64>,
    family: GrowthFamily,
}

impl SystemSpec {
    pub fn new(
        b: DMatrix<f64>,
        c: DVector<f64>,
        family: GrowthFamily,
    ) -> Result<SystemSpec, ModelError> {
        validate(SystemSpec { b, c, family })
    }

    /// Convenience constructor from nested rows.
    pub fn from_rows(
        rows: &[Vec<f64>],
        c: &[f64],
        family: GrowthFamily,
    ) -> Result<SystemSpec, ModelError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(ModelError::Invalid(vec![Violation::Shape(format!(
                "b must be square; got {} rows with lengths {:?}",
                n,
                rows.iter().map(Vec::len).collect::<Vec<_>>()
            ))]));
        }
        let b = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        SystemSpec::new(b, DVector::from_column_slice(c), family)
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn family(&self) -> &GrowthFamily {
        &self.family
    }

    /// Same `B`, `c` with a different growth law.
    pub fn with_family(&self, family: GrowthFamily) -> Result<SystemSpec, ModelError> {
        SystemSpec::new(self.b.clone(), self.c.clone(), family)
    }

    /// `max_i c_i / b_ii`, the scale of the axial equilibria.
    pub fn axial_scale(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.c[i] / self.b[(i, i)])
            .fold(0.0, f64::max)
    }

    /// `1 + ||B||_inf ||c||_inf`, the reference magnitude for sign decisions.
    pub fn sign_scale(&self) -> f64 {
        1.0 + self.b_norm_inf() * self.c.amax()
    }

    pub fn b_norm_inf(&self) -> f64 {
        self.b
            .row_iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Relabel species: species `a` of the result is species `perm[a]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<SystemSpec, ModelError> {
        let n = self.dim();
        assert_eq!(perm.len(), n, "permutation length must equal dimension");
        let b = DMatrix::from_fn(n, n, |a, b| self.b[(perm[a], perm[b])]);
        let c = DVector::from_fn(n, |a, _| self.c[perm[a]]);
        SystemSpec::new(b, c, self.family.clone())
    }

    fn check_state(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.dim() {
            return Err(ModelError::StateLength {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(ModelError::NegativeState { species: i + 1, value: x[i] });
        }
        Ok(())
    }

    /// `(Bx)_i`.
    pub fn load(&self, x: &[f64], i: usize) -> f64 {
        self.b.row(i).iter().zip(x).map(|(b, x)| b * x).sum()
    }
}

/// Check positivity and finiteness of `B` and `c`, and sample the growth-law
/// axioms for custom families. All violations are returned together.
pub fn validate(spec: SystemSpec) -> Result<SystemSpec, ModelError> {
    let mut violations = Vec::new();
    let n = spec.c.len();
    if n == 0 {
        violations.push(Violation::Shape("dimension must be at least 1".into()));
    }
    if spec.b.nrows() != n || spec.b.ncols() != n {
        violations.push(Violation::Shape(format!(
            "b must be {n}x{n}; got {}x{}",
            spec.b.nrows(),
            spec.b.ncols()
        )));
    } else {
        for i in 0..n {
            for j in 0..n {
                let v = spec.b[(i, j)];
                if !v.is_finite() {
                    violations.push(Violation::NonFinite(format!("b[{}][{}]", i + 1, j + 1)));
                } else if v <= 0.0 {
                    violations.push(Violation::NotPositive(format!("b[{}][{}]", i + 1, j + 1)));
                }
            }
        }
    }
    for (i, &v) in spec.c.iter().enumerate() {
        if !v.is_finite() {
            violations.push(Violation::NonFinite(format!("c[{}]", i + 1)));
        } else if v <= 0.0 {
            violations.push(Violation::NotPositive(format!("c[{}]", i + 1)));
        }
    }
    if let GrowthFamily::Custom(law) = &spec.family {
        violations.extend(check_law_axioms(law));
    }
    if violations.is_empty() {
        Ok(spec)
    } else {
        Err(ModelError::Invalid(violations))
    }
}

/// Sample the three growth-law axioms on a log grid over `[1e-3, 1e3]`.
fn check_law_axioms(law: &CustomLaw) -> Vec<Violation> {
    let grid: Vec<f64> = (0..=12).map(|k| 10f64.powf(-3.0 + 0.5 * k as f64)).collect();
    let mut out = Vec::new();
    let name = law.name();

    let mut bad_fixed = None;
    let mut bad_slope = None;
    let mut bad_limit = None;
    let mut bad_finite = None;
    for &r in &grid {
        let at_r = law.eval(r, r);
        if !at_r.is_finite() {
            bad_finite.get_or_insert((r, r));
        } else if at_r.abs() > 1e-12 * (1.0 + r.abs()) && bad_fixed.is_none() {
            bad_fixed = Some((r, at_r));
        }
        let tiny = 1e-9;
        let near_zero = tiny * law.eval(r, tiny);
        if !(near_zero.abs() < 1e-6) && bad_limit.is_none() {
            bad_limit = Some((r, near_zero));
        }
        for &y in &grid {
            let v = law.eval(r, y);
            if !v.is_finite() {
                bad_finite.get_or_insert((r, y));
                continue;
            }
            let d = law.derivative(r, y);
            // Far from the diagonal a saturating law may underflow to a zero slope.
            let near_diagonal = (y / r).ln().abs() <= 1.0;
            let bad = d.is_nan() || d > 0.0 || (d == 0.0 && near_diagonal);
            if bad && bad_slope.is_none() {
                bad_slope = Some((r, y, d));
            }
        }
    }
    if let Some((r, y)) = bad_finite {
        out.push(Violation::Axiom(format!(
            "custom law '{name}' is not finite at (r, y) = ({r:e}, {y:e})"
        )));
    }
    if let Some((r, v)) = bad_fixed {
        out.push(Violation::Axiom(format!(
            "custom law '{name}' violates f(r,r) = 0: f({r:e},{r:e}) = {v:e}"
        )));
    }
    if let Some((r, y, d)) = bad_slope {
        out.push(Violation::Axiom(format!(
            "custom law '{name}' violates df/dy < 0 at (r, y) = ({r:e}, {y:e}): {d:e}"
        )));
    }
    if let Some((r, v)) = bad_limit {
        out.push(Violation::Axiom(format!(
            "custom law '{name}' violates y f(r,y) -> 0: at r = {r:e}, y = 1e-9 got {v:e}"
        )));
    }
    out
}

/// Per-capita growth rates `f_i(c_i, (Bx)_i)`.
pub fn per_capita(spec: &SystemSpec, x: &[f64]) -> Result<Vec<f64>, ModelError> {
    spec.check_state(x)?;
    (0..spec.dim()).map(|i| per_capita_component(spec, x, i)).collect()
}

pub(crate) fn per_capita_component(spec: &SystemSpec, x: &[f64], i: usize) -> Result<f64, ModelError> {
    let y = spec.load(x, i);
    growth_rate(&spec.family, spec.c[i], y).map_err(|e| e.at_species(i))
}

/// The Kolmogorov vector field `x_i f_i(x)`; components with `x_i = 0` are exactly zero.
pub fn vector_field(spec: &SystemSpec, x: &[f64]) -> Result<Vec<f64>, ModelError> {
    spec.check_state(x)?;
    (0..spec.dim())
        .map(|i| {
            if x[i] == 0.0 {
                Ok(0.0)
            } else {
                Ok(x[i] * per_capita_component(spec, x, i)?)
            }
        })
        .collect()
}

/// Jacobian of the vector field: `J_ij = delta_ij f_i + x_i f_y(c_i, (Bx)_i) b_ij`.
pub fn jacobian(spec: &SystemSpec, x: &[f64]) -> Result<DMatrix<f64>, ModelError> {
    spec.check_state(x)?;
    let n = spec.dim();
    let mut j = DMatrix::zeros(n, n);
    for i in 0..n {
        let f = per_capita_component(spec, x, i)?;
        j[(i, i)] = f;
        if x[i] == 0.0 {
            continue;
        }
        let y = spec.load(x, i);
        let slope = growth_rate_dy(&spec.family, spec.c[i], y).map_err(|e| e.at_species(i))?;
        for k in 0..n {
            j[(i, k)] += x[i] * slope * spec.b[(i, k)];
        }
    }
    Ok(j)
}

/// JSON form of a [`SystemSpec`]: `{"n", "family", "b", "c"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecFile {
    pub n: usize,
    pub family: String,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<f64>,
}

impl SpecFile {
    pub fn into_spec(self) -> Result<SystemSpec, ModelError> {
        let family = GrowthFamily::from_key(&self.family)
            .ok_or_else(|| ModelError::Invalid(vec![Violation::UnknownFamily(self.family.clone())]))?;
        let mut violations = Vec::new();
        if self.c.len() != self.n {
            violations.push(Violation::Shape(format!(
                "c has length {} but n = {}",
                self.c.len(),
                self.n
            )));
        }
        if self.b.len() != self.n || self.b.iter().any(|r| r.len() != self.n) {
            violations.push(Violation::Shape(format!("b must be {0}x{0}", self.n)));
        }
        if !violations.is_empty() {
            return Err(ModelError::Invalid(violations));
        }
        SystemSpec::from_rows(&self.b, &self.c, family)
    }
}

impl TryFrom<&SystemSpec> for SpecFile {
    type Error = ModelError;

    fn try_from(spec: &SystemSpec) -> Result<Self, Self::Error> {
        if !spec.family.is_builtin() {
            return Err(ModelError::NotSerializable);
        }
        let n = spec.dim();
        Ok(SpecFile {
            n,
            family: spec.family.key().to_string(),
            b: (0..n).map(|i| (0..n).map(|j| spec.b[(i, j)]).collect()).collect(),
            c: spec.c.iter().copied().collect(),
        })
    }
}

impl Serialize for SystemSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        SpecFile::try_from(self)
            .map_err(serde::ser::Error::custom)?
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SystemSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        SpecFile::deserialize(deserializer)?
            .into_spec()
            .map_err(serde::de::Error::custom)
    }
}
