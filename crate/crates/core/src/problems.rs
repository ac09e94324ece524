//! PDE problem declarations, the four benchmark problems, and point sampling.
//!
//! A problem is a box domain plus a list of [`Condition`]s. Exactly one
//! condition has the [`Role::Residual`] role and lives on the interior; the
//! others are supervised (initial or boundary) conditions on box facets.
//! Each condition holds one or more [`Equation`]s, and each equation is a
//! linear recipe `Σ coeff(x)·D[u_field](x) = rhs(x)` over spatial
//! derivatives of the output fields. Time, when present, is the last axis.

use std::f64::consts::PI;
use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Derivative;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `(field, derivative, x) ↦ value`, or `None` when that derivative is not
/// available in closed form.
pub type ExactFn = Arc<dyn Fn(usize, Derivative, &[f64]) -> Option<f64> + Send + Sync>;

#[derive(Clone)]
pub enum Coefficient {
    Const(f64),
    Function(ScalarFn),
}

impl Coefficient {
    #[inline]
    pub fn at(&self, x: &[f64]) -> f64 {
        match self {
            Coefficient::Const(c) => *c,
            Coefficient::Function(f) => f(x),
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Const(c) => write!(f, "Const({c})"),
            Coefficient::Function(_) => f.write_str("Function(..)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct OperatorTerm {
    pub field: usize,
    pub derivative: Derivative,
    pub coeff: Coefficient,
}

impl OperatorTerm {
    pub fn new(field: usize, derivative: Derivative, coeff: f64) -> Self {
        OperatorTerm { field, derivative, coeff: Coefficient::Const(coeff) }
    }
}

#[derive(Clone)]
pub struct Equation {
    pub terms: Vec<OperatorTerm>,
    pub rhs: ScalarFn,
}

impl Equation {
    pub fn new(terms: Vec<OperatorTerm>, rhs: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Equation { terms, rhs: Arc::new(rhs) }
    }

    /// `u_field = 0`.
    pub fn zero_value(field: usize) -> Self {
        Equation::new(vec![OperatorTerm::new(field, Derivative::Value, 1.0)], |_| 0.0)
    }

    /// Fields this equation touches, ascending and deduplicated.
    pub fn fields(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.terms.iter().map(|t| t.field).collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

impl fmt::Debug for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Equation").field("terms", &self.terms).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Residual,
    Initial,
    Boundary,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Residual => "residual",
            Role::Initial => "initial",
            Role::Boundary => "boundary",
        }
    }
}

/// One face of the box: `x_axis = lower` or `x_axis = upper`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Facet {
    pub axis: usize,
    pub upper: bool,
}

impl Facet {
    pub fn lower(axis: usize) -> Self {
        Facet { axis, upper: false }
    }

    pub fn upper(axis: usize) -> Self {
        Facet { axis, upper: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Interior,
    Facets(Vec<Facet>),
}

#[derive(Debug, Clone)]
pub struct Condition {
    pub name: String,
    pub role: Role,
    pub region: Region,
    pub equations: Vec<Equation>,
}

#[derive(Clone)]
pub struct PdeProblem {
    pub name: String,
    pub axis_names: Vec<String>,
    pub field_names: Vec<String>,
    pub domain: Vec<(f64, f64)>,
    pub conditions: Vec<Condition>,
    exact: Option<ExactFn>,
}

impl fmt::Debug for PdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PdeProblem")
            .field("name", &self.name)
            .field("axis_names", &self.axis_names)
            .field("field_names", &self.field_names)
            .field("domain", &self.domain)
            .field("conditions", &self.conditions)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

impl PdeProblem {
    pub fn new(
        name: impl Into<String>,
        axis_names: Vec<String>,
        field_names: Vec<String>,
        domain: Vec<(f64, f64)>,
        conditions: Vec<Condition>,
        exact: Option<ExactFn>,
    ) -> Result<Self> {
        let p = PdeProblem { name: name.into(), axis_names, field_names, domain, conditions, exact };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let d = self.domain.len();
        if d == 0 || self.axis_names.len() != d {
            return Err(Error::invalid("domain and axis names must be non-empty and agree"));
        }
        if self.field_names.is_empty() {
            return Err(Error::invalid("a problem needs at least one field"));
        }
        for (n, &(a, b)) in self.domain.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::invalid(format!("degenerate domain on axis {n}: [{a}, {b}]")));
            }
        }
        let residuals = self.conditions.iter().filter(|c| c.role == Role::Residual).count();
        if residuals != 1 {
            return Err(Error::invalid(format!("expected one residual condition, found {residuals}")));
        }
        for c in &self.conditions {
            if c.equations.is_empty() {
                return Err(Error::invalid(format!("condition `{}` has no equations", c.name)));
            }
            match (&c.region, c.role) {
                (Region::Interior, Role::Residual) => {}
                (Region::Facets(fs), Role::Initial | Role::Boundary) if !fs.is_empty() => {
                    if let Some(f) = fs.iter().find(|f| f.axis >= d) {
                        return Err(Error::OutOfRange { index: f.axis, len: d });
                    }
                }
                _ => return Err(Error::invalid(format!("condition `{}` has an inconsistent region", c.name))),
            }
            for t in c.equations.iter().flat_map(|e| &e.terms) {
                if t.field >= self.field_names.len() {
                    return Err(Error::OutOfRange { index: t.field, len: self.field_names.len() });
                }
                t.derivative.validate(d)?;
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.domain.len()
    }

    pub fn n_fields(&self) -> usize {
        self.field_names.len()
    }

    pub fn residual_index(&self) -> usize {
        self.conditions.iter().position(|c| c.role == Role::Residual).expect("validated")
    }

    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn exact_value(&self, field: usize, x: &[f64]) -> Option<f64> {
        self.exact_derivative(field, Derivative::Value, x)
    }

    pub fn exact_derivative(&self, field: usize, d: Derivative, x: &[f64]) -> Option<f64> {
        self.exact.as_ref().and_then(|f| f(field, d, x))
    }

    /// `Σ coeff·D[u_exact] - rhs` for one equation, when every needed
    /// derivative of the exact solution is known.
    pub fn exact_equation_residual(&self, eq: &Equation, x: &[f64]) -> Option<(f64, f64)> {
        let mut lhs = 0.0;
        for t in &eq.terms {
            lhs += t.coeff.at(x) * self.exact_derivative(t.field, t.derivative, x)?;
        }
        Some((lhs, (eq.rhs)(x)))
    }
}

/// Heat conduction `u_t - u_xx = h` on `(x, t) ∈ (-1, 1)×(0, 1)` with
/// exact solution `(1 - x²)·exp(1/((2t-1)² + ε))`.
pub fn make_heat_conduction(eps: f64) -> Result<PdeProblem> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("heat problem needs eps > 0, got {eps}")));
    }
    let exact: ExactFn = Arc::new(move |field, d, x| {
        if field != 0 {
            return None;
        }
        let (xs, t) = (x[0], x[1]);
        let s = 2.0 * t - 1.0;
        let den = s * s + eps;
        let e = (1.0 / den).exp();
        let spatial = 1.0 - xs * xs;
        let dq = -4.0 * s / (den * den);
        let ddq = -8.0 / (den * den) + 32.0 * s * s / (den * den * den);
        Some(match d {
            Derivative::Value => spatial * e,
            Derivative::D1(0) => -2.0 * xs * e,
            Derivative::D1(1) => spatial * e * dq,
            Derivative::D2(0) => -2.0 * e,
            Derivative::D2(1) => spatial * e * (dq * dq + ddq),
            Derivative::Mixed(0, 1) | Derivative::Mixed(1, 0) => -2.0 * xs * e * dq,
            _ => return None,
        })
    });
    let source = move |x: &[f64]| heat_source(eps, x[0], x[1]);
    let ex = exact.clone();
    let ic = move |x: &[f64]| ex(0, Derivative::Value, x).unwrap_or(0.0);
    PdeProblem::new(
        format!("heat-{eps}"),
        vec!["x".into(), "t".into()],
        vec!["u".into()],
        vec![(-1.0, 1.0), (0.0, 1.0)],
        vec![
            Condition {
                name: "pde".into(),
                role: Role::Residual,
                region: Region::Interior,
                equations: vec![Equation::new(
                    vec![OperatorTerm::new(0, Derivative::D1(1), 1.0), OperatorTerm::new(0, Derivative::D2(0), -1.0)],
                    source,
                )],
            },
            Condition {
                name: "ic".into(),
                role: Role::Initial,
                region: Region::Facets(vec![Facet::lower(1)]),
                equations: vec![Equation::new(vec![OperatorTerm::new(0, Derivative::Value, 1.0)], ic)],
            },
            Condition {
                name: "bc".into(),
                role: Role::Boundary,
                region: Region::Facets(vec![Facet::lower(0), Facet::upper(0)]),
                equations: vec![Equation::zero_value(0)],
            },
        ],
        Some(exact),
    )
}

/// `h(x, t) = 2[1 + 2(2t-1)(x²-1)/((2t-1)²+ε)²]·exp(1/((2t-1)²+ε))`.
pub fn heat_source(eps: f64, x: f64, t: f64) -> f64 {
    let s = 2.0 * t - 1.0;
    let den = s * s + eps;
    2.0 * (1.0 + 2.0 * s * (x * x - 1.0) / (den * den)) * (1.0 / den).exp()
}

/// Poisson `u_xx + u_yy = f` on `(0, 1)²` with exact solution
/// `1 + (y² + 1000)·exp(-(x - 0.5)²/(2ε²))` and Dirichlet data on all edges.
pub fn make_poisson_localized(eps: f64) -> Result<PdeProblem> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("Poisson problem needs eps > 0, got {eps}")));
    }
    let exact: ExactFn = Arc::new(move |field, d, x| {
        if field != 0 {
            return None;
        }
        let (xs, y) = (x[0], x[1]);
        let dx = xs - 0.5;
        let e2 = eps * eps;
        let g = (-dx * dx / (2.0 * e2)).exp();
        let amp = y * y + 1000.0;
        Some(match d {
            Derivative::Value => 1.0 + amp * g,
            Derivative::D1(0) => -amp * dx / e2 * g,
            Derivative::D1(1) => 2.0 * y * g,
            Derivative::D2(0) => amp * (dx * dx / (e2 * e2) - 1.0 / e2) * g,
            Derivative::D2(1) => 2.0 * g,
            Derivative::Mixed(0, 1) | Derivative::Mixed(1, 0) => -2.0 * y * dx / e2 * g,
            _ => return None,
        })
    });
    let ex = exact.clone();
    let source = move |x: &[f64]| {
        ex(0, Derivative::D2(0), x).unwrap_or(0.0) + ex(0, Derivative::D2(1), x).unwrap_or(0.0)
    };
    let ex = exact.clone();
    let dirichlet = move |x: &[f64]| ex(0, Derivative::Value, x).unwrap_or(0.0);
    PdeProblem::new(
        format!("poisson-{eps}"),
        vec!["x".into(), "y".into()],
        vec!["u".into()],
        vec![(0.0, 1.0), (0.0, 1.0)],
        vec![
            Condition {
                name: "pde".into(),
                role: Role::Residual,
                region: Region::Interior,
                equations: vec![Equation::new(
                    vec![OperatorTerm::new(0, Derivative::D2(0), 1.0), OperatorTerm::new(0, Derivative::D2(1), 1.0)],
                    source,
                )],
            },
            Condition {
                name: "bc".into(),
                role: Role::Boundary,
                region: Region::Facets(vec![Facet::lower(0), Facet::upper(0), Facet::lower(1), Facet::upper(1)]),
                equations: vec![Equation::new(vec![OperatorTerm::new(0, Derivative::Value, 1.0)], dirichlet)],
            },
        ],
        Some(exact),
    )
}

/// Spatial boundary treatment for the flow problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowBoundary {
    /// Dirichlet data from the exact solution on the inflow edge `x = -1`.
    #[default]
    Inflow,
    /// Initial condition only.
    None,
}

/// Advection `u_t + u_x = A·sin(2πt/T_s)` on `(x, t) ∈ (-1, 1)×(0, 1)` with
/// exact solution `sin(π(x - t)) + (A·T_s/2π)(1 - cos(2πt/T_s))`.
pub fn make_flow(amplitude: f64, period: f64, boundary: FlowBoundary) -> Result<PdeProblem> {
    if !(amplitude > 0.0 && period > 0.0 && amplitude.is_finite() && period.is_finite()) {
        return Err(Error::invalid(format!("flow problem needs A, T_s > 0, got {amplitude}, {period}")));
    }
    let offset = amplitude * period / (2.0 * PI);
    let omega = 2.0 * PI / period;
    let exact: ExactFn = Arc::new(move |field, d, x| {
        if field != 0 {
            return None;
        }
        let (xs, t) = (x[0], x[1]);
        let ph = PI * (xs - t);
        Some(match d {
            Derivative::Value => ph.sin() + offset * (1.0 - (omega * t).cos()),
            Derivative::D1(0) => PI * ph.cos(),
            Derivative::D1(1) => -PI * ph.cos() + amplitude * (omega * t).sin(),
            Derivative::D2(0) => -PI * PI * ph.sin(),
            Derivative::D2(1) => -PI * PI * ph.sin() + amplitude * omega * (omega * t).cos(),
            Derivative::Mixed(0, 1) | Derivative::Mixed(1, 0) => PI * PI * ph.sin(),
            _ => return None,
        })
    });
    let mut conditions = vec![
        Condition {
            name: "pde".into(),
            role: Role::Residual,
            region: Region::Interior,
            equations: vec![Equation::new(
                vec![OperatorTerm::new(0, Derivative::D1(1), 1.0), OperatorTerm::new(0, Derivative::D1(0), 1.0)],
                move |x: &[f64]| amplitude * (omega * x[1]).sin(),
            )],
        },
        Condition {
            name: "ic".into(),
            role: Role::Initial,
            region: Region::Facets(vec![Facet::lower(1)]),
            equations: vec![Equation::new(
                vec![OperatorTerm::new(0, Derivative::Value, 1.0)],
                |x: &[f64]| (PI * x[0]).sin(),
            )],
        },
    ];
    if boundary == FlowBoundary::Inflow {
        let ex = exact.clone();
        conditions.push(Condition {
            name: "bc".into(),
            role: Role::Boundary,
            region: Region::Facets(vec![Facet::lower(0)]),
            equations: vec![Equation::new(
                vec![OperatorTerm::new(0, Derivative::Value, 1.0)],
                move |x: &[f64]| ex(0, Derivative::Value, x).unwrap_or(0.0),
            )],
        });
    }
    PdeProblem::new(
        "flow",
        vec!["x".into(), "t".into()],
        vec!["u".into()],
        vec![(-1.0, 1.0), (0.0, 1.0)],
        conditions,
        Some(exact),
    )
}

/// Gaussian point source of the TEz cavity problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSource {
    pub tau: f64,
    pub omega: f64,
    pub sigma: f64,
    pub center: [f64; 2],
}

impl Default for PulseSource {
    fn default() -> Self {
        PulseSource { tau: 0.25, omega: 0.25, sigma: 0.01, center: [0.5, 0.5] }
    }
}

impl PulseSource {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !(ok(self.tau) && ok(self.omega) && ok(self.sigma)) {
            return Err(Error::invalid("pulse source needs tau, omega, sigma > 0"));
        }
        if !self.center.iter().all(|&c| c > 0.0 && c < 1.0) {
            return Err(Error::invalid("pulse centre must lie inside the unit square"));
        }
        Ok(())
    }

    /// `S(x, y, t) = exp(-r²/(2σ²))/(2πσ²) · exp(-((t - τ)/ω)²)`.
    #[inline]
    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        self.spatial(x, y) * self.temporal(t)
    }

    #[inline]
    pub fn spatial(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let s2 = self.sigma * self.sigma;
        (-(dx * dx + dy * dy) / (2.0 * s2)).exp() / (2.0 * PI * s2)
    }

    #[inline]
    pub fn temporal(&self, t: f64) -> f64 {
        let a = (t - self.tau) / self.omega;
        (-a * a).exp()
    }
}

/// Final time of the cavity benchmark.
pub const MAXWELL_FINAL_TIME: f64 = 0.5;

/// TEz Maxwell system on `(x, y, t) ∈ (0, 1)²×(0, 0.5]` with unit material
/// constants. Fields are `E_x`, `E_y`, `H_z`:
///
/// ```text
/// ∂E_x/∂t - ∂H_z/∂y = 0
/// ∂E_y/∂t + ∂H_z/∂x = 0
/// ∂H_z/∂t + ∂E_y/∂x - ∂E_x/∂y = -S
/// ```
///
/// with PEC walls (`E_y = 0` on `x ∈ {0, 1}`, `E_x = 0` on `y ∈ {0, 1}`) and
/// null initial fields.
pub fn make_maxwell_tez(source: PulseSource) -> Result<PdeProblem> {
    source.validate()?;
    let (ex, ey, hz) = (0, 1, 2);
    let (x, y, t) = (0, 1, 2);
    use Derivative::D1;
    PdeProblem::new(
        "maxwell",
        vec!["x".into(), "y".into(), "t".into()],
        vec!["Ex".into(), "Ey".into(), "Hz".into()],
        vec![(0.0, 1.0), (0.0, 1.0), (0.0, MAXWELL_FINAL_TIME)],
        vec![
            Condition {
                name: "pde".into(),
                role: Role::Residual,
                region: Region::Interior,
                equations: vec![
                    Equation::new(vec![OperatorTerm::new(ex, D1(t), 1.0), OperatorTerm::new(hz, D1(y), -1.0)], |_| 0.0),
                    Equation::new(vec![OperatorTerm::new(ey, D1(t), 1.0), OperatorTerm::new(hz, D1(x), 1.0)], |_| 0.0),
                    Equation::new(
                        vec![
                            OperatorTerm::new(hz, D1(t), 1.0),
                            OperatorTerm::new(ey, D1(x), 1.0),
                            OperatorTerm::new(ex, D1(y), -1.0),
                        ],
                        move |p: &[f64]| -source.eval(p[0], p[1], p[2]),
                    ),
                ],
            },
            Condition {
                name: "ic".into(),
                role: Role::Initial,
                region: Region::Facets(vec![Facet::lower(t)]),
                equations: vec![Equation::zero_value(ex), Equation::zero_value(ey), Equation::zero_value(hz)],
            },
            Condition {
                name: "pec_x".into(),
                role: Role::Boundary,
                region: Region::Facets(vec![Facet::lower(x), Facet::upper(x)]),
                equations: vec![Equation::zero_value(ey)],
            },
            Condition {
                name: "pec_y".into(),
                role: Role::Boundary,
                region: Region::Facets(vec![Facet::lower(y), Facet::upper(y)]),
                equations: vec![Equation::zero_value(ex)],
            },
        ],
        None,
    )
}

/// Row-major `n×d` point cloud.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::invalid(format!("{} coordinates do not form {dim}-D points", data.len())));
        }
        Ok(Points { dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("row length mismatch"));
        }
        Points::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 { 0 } else { self.data.len() / self.dim }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Points `start..end` as a new cloud.
    pub fn slice(&self, start: usize, end: usize) -> Points {
        Points { dim: self.dim, data: self.data[start * self.dim..end * self.dim].to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionPoints {
    pub name: String,
    pub points: Points,
    /// Index into the condition's facet list (0 for interior points).
    pub facet: Vec<u16>,
}

/// Uniform lattice with endpoints, row-major with axis 0 slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct TestGrid {
    pub shape: Vec<usize>,
    pub points: Points,
}

impl TestGrid {
    pub fn new(domain: &[(f64, f64)], shape: &[usize]) -> Result<Self> {
        if shape.len() != domain.len() || shape.iter().any(|&s| s < 2) {
            return Err(Error::invalid("test grid needs at least 2 nodes on every axis"));
        }
        let d = domain.len();
        let total: usize = shape.iter().product();
        let mut data = Vec::with_capacity(total * d);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            for n in 0..d {
                let (a, b) = domain[n];
                let frac = idx[n] as f64 / (shape[n] - 1) as f64;
                data.push(if idx[n] == shape[n] - 1 { b } else { a + (b - a) * frac });
            }
            for n in (0..d).rev() {
                idx[n] += 1;
                if idx[n] < shape[n] {
                    break;
                }
                idx[n] = 0;
            }
        }
        Ok(TestGrid { shape: shape.to_vec(), points: Points::new(d, data)? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub seed: u64,
    /// One entry per problem condition, in the problem's order.
    pub conditions: Vec<ConditionPoints>,
    pub test: TestGrid,
}

impl PointSet {
    pub fn residual(&self, problem: &PdeProblem) -> &Points {
        &self.conditions[problem.residual_index()].points
    }

    /// Total supervised point count.
    pub fn n_supervised(&self, problem: &PdeProblem) -> usize {
        let r = problem.residual_index();
        self.conditions.iter().enumerate().filter(|(i, _)| *i != r).map(|(_, c)| c.points.len()).sum()
    }

    /// CSV with columns `set,facet,<axis names>`; the test grid uses set `test`.
    pub fn to_csv(&self, problem: &PdeProblem) -> String {
        let mut out = String::from("set,facet");
        for a in &problem.axis_names {
            out.push(',');
            out.push_str(a);
        }
        out.push('\n');
        let mut row = |set: &str, facet: u16, p: &[f64]| {
            let _ = write!(out, "{set},{facet}");
            for v in p {
                let _ = write!(out, ",{v:e}");
            }
            out.push('\n');
        };
        for c in &self.conditions {
            for (i, p) in c.points.iter().enumerate() {
                row(&c.name, c.facet[i], p);
            }
        }
        for p in self.test.points.iter() {
            row("test", 0, p);
        }
        out
    }
}

/// Draws an open-interval uniform sample.
fn open_uniform(rng: &mut ChaCha8Rng, a: f64, b: f64) -> f64 {
    loop {
        let v = rng.random_range(a..b);
        if v > a {
            return v;
        }
    }
}

/// Samples every condition of `problem`. `counts[c]` is the number of points
/// for condition `c`; facet conditions split their count evenly over their
/// facets (remainder to the first facets). Deterministic in `seed`.
pub fn sample_points(problem: &PdeProblem, counts: &[usize], test_shape: &[usize], seed: u64) -> Result<PointSet> {
    if counts.len() != problem.conditions.len() {
        return Err(Error::invalid(format!(
            "{} point counts given for {} conditions",
            counts.len(),
            problem.conditions.len()
        )));
    }
    if counts.contains(&0) {
        return Err(Error::invalid("every condition needs at least one point"));
    }
    let d = problem.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conditions = Vec::with_capacity(counts.len());
    for (cond, &count) in problem.conditions.iter().zip(counts) {
        let mut data = Vec::with_capacity(count * d);
        let mut facet = Vec::with_capacity(count);
        match &cond.region {
            Region::Interior => {
                for _ in 0..count {
                    for &(a, b) in &problem.domain {
                        data.push(open_uniform(&mut rng, a, b));
                    }
                    facet.push(0);
                }
            }
            Region::Facets(facets) => {
                let nf = facets.len();
                for (fi, f) in facets.iter().enumerate() {
                    let share = count / nf + usize::from(fi < count % nf);
                    for _ in 0..share {
                        for (n, &(a, b)) in problem.domain.iter().enumerate() {
                            data.push(if n == f.axis {
                                if f.upper { b } else { a }
                            } else {
                                open_uniform(&mut rng, a, b)
                            });
                        }
                        facet.push(fi as u16);
                    }
                }
            }
        }
        conditions.push(ConditionPoints { name: cond.name.clone(), points: Points::new(d, data)?, facet });
    }
    Ok(PointSet { seed, conditions, test: TestGrid::new(&problem.domain, test_shape)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn heat_examples() {
        let p = make_heat_conduction(0.1).unwrap();
        assert_eq!(p.exact_value(0, &[1.0, 0.3]).unwrap(), 0.0);
        assert_eq!(p.exact_value(0, &[-1.0, 0.7]).unwrap(), 0.0);
        assert!((p.exact_value(0, &[0.0, 0.5]).unwrap() - 22026.4658).abs() < 1e-3);
        assert!((heat_source(0.1, 0.0, 0.5) - 44052.9316).abs() < 1e-3);
        assert!(make_heat_conduction(0.0).is_err());
        assert!(make_heat_conduction(-1.0).is_err());
    }

    #[test]
    fn poisson_examples() {
        let p = make_poisson_localized(0.05).unwrap();
        let f = &p.conditions[0].equations[0].rhs;
        assert!((f(&[0.5, 0.0]) + 399_998.0).abs() < 1e-6);
        assert_eq!(p.exact_value(0, &[0.5, 0.0]).unwrap(), 1001.0);
        let q = make_poisson_localized(0.02).unwrap();
        assert_eq!(q.exact_value(0, &[0.0, 0.5]).unwrap(), 1.0);
        assert!(make_poisson_localized(0.0).is_err());
    }

    #[test]
    fn flow_examples() {
        let p = make_flow(100.0, 0.05, FlowBoundary::Inflow).unwrap();
        for x in [-0.9, -0.2, 0.4, 0.95] {
            assert!((p.exact_value(0, &[x, 0.0]).unwrap() - (PI * x).sin()).abs() < 1e-15);
        }
        let v = p.exact_value(0, &[0.0, 0.025]).unwrap();
        assert!((v - (5.0 / PI - (0.025 * PI).sin())).abs() < 1e-14);
        assert!((v - 1.513_09).abs() < 1e-5);
        assert_eq!(p.conditions.len(), 3);
        assert_eq!(make_flow(100.0, 0.05, FlowBoundary::None).unwrap().conditions.len(), 2);
        assert!(make_flow(0.0, 0.05, FlowBoundary::Inflow).is_err());
        assert!(make_flow(1.0, -0.05, FlowBoundary::Inflow).is_err());
    }

    #[test]
    fn maxwell_examples() {
        let s = PulseSource::default();
        assert!((s.eval(0.5, 0.5, 0.25) - 1591.549).abs() < 1e-3);
        let far = s.eval(0.5 + 0.05, 0.5, 0.25) / s.eval(0.5, 0.5, 0.25);
        assert!(rel(far, (-12.5f64).exp()) < 1e-12);
        assert!((s.eval(0.55, 0.5, 0.25) - 5.93e-3).abs() < 1e-5);
        let p = make_maxwell_tez(s).unwrap();
        assert_eq!(p.n_fields(), 3);
        let ic = p.condition("ic").unwrap();
        assert!(ic.equations.iter().all(|e| (e.rhs)(&[0.3, 0.6, 0.0]) == 0.0));
        assert!(make_maxwell_tez(PulseSource { center: [1.2, 0.5], ..s }).is_err());
        assert!(make_maxwell_tez(PulseSource { sigma: 0.0, ..s }).is_err());
    }

    #[test]
    fn maxwell_source_is_radially_symmetric() {
        let s = PulseSource::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let (dx, dy, t) = (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(0.0..0.5));
            let a = s.eval(0.5 + dx, 0.5 + dy, t);
            for (u, v) in [(-dx, dy), (dx, -dy), (-dx, -dy), (dy, dx)] {
                assert!(rel(s.eval(0.5 + u, 0.5 + v, t), a) < 1e-12 || a == 0.0);
            }
        }
    }

    fn exact_residual_check(p: &PdeProblem) {
        let pts = sample_points(p, &vec![1000; p.conditions.len()], &[3, 3], 17).unwrap();
        let r = p.residual_index();
        for x in pts.conditions[r].points.iter() {
            let (lhs, rhs) = p.exact_equation_residual(&p.conditions[r].equations[0], x).unwrap();
            assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1.0), "{} at {x:?}: {lhs} vs {rhs}", p.name);
        }
        for (ci, cond) in p.conditions.iter().enumerate() {
            if ci == r {
                continue;
            }
            for x in pts.conditions[ci].points.iter() {
                let (lhs, rhs) = p.exact_equation_residual(&cond.equations[0], x).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0), "{} {}: {lhs} vs {rhs}", p.name, cond.name);
            }
        }
    }

    #[test]
    fn exact_solutions_satisfy_their_recipes() {
        for eps in [0.1, 0.12] {
            exact_residual_check(&make_heat_conduction(eps).unwrap());
        }
        for eps in [0.02, 0.05] {
            exact_residual_check(&make_poisson_localized(eps).unwrap());
        }
        exact_residual_check(&make_flow(100.0, 0.05, FlowBoundary::Inflow).unwrap());
    }

    #[test]
    fn exact_derivatives_match_finite_differences() {
        let problems = [
            make_heat_conduction(0.12).unwrap(),
            make_poisson_localized(0.05).unwrap(),
            make_flow(100.0, 0.05, FlowBoundary::Inflow).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for p in &problems {
            for _ in 0..200 {
                let x: Vec<f64> = p.domain.iter().map(|&(a, b)| rng.random_range(a + 0.05..b - 0.05)).collect();
                for n in 0..2 {
                    let h = 1e-6;
                    let at = |s: f64, d: Derivative| {
                        let mut q = x.clone();
                        q[n] = s;
                        p.exact_derivative(0, d, &q).unwrap()
                    };
                    let fd1 = (at(x[n] + h, Derivative::Value) - at(x[n] - h, Derivative::Value)) / (2.0 * h);
                    let fd2 = (at(x[n] + h, Derivative::D1(n)) - at(x[n] - h, Derivative::D1(n))) / (2.0 * h);
                    let d1 = p.exact_derivative(0, Derivative::D1(n), &x).unwrap();
                    let d2 = p.exact_derivative(0, Derivative::D2(n), &x).unwrap();
                    let scale = p.exact_value(0, &x).unwrap().abs().max(1.0);
                    assert!((fd1 - d1).abs() <= 1e-5 * d1.abs().max(scale), "{} d1 axis {n}", p.name);
                    assert!((fd2 - d2).abs() <= 1e-4 * d2.abs().max(scale), "{} d2 axis {n}", p.name);
                }
            }
        }
    }

    #[test]
    fn sampling_contract() {
        let p = make_heat_conduction(0.12).unwrap();
        let a = sample_points(&p, &[20000, 1000, 2000], &[11, 11], 5).unwrap();
        let b = sample_points(&p, &[20000, 1000, 2000], &[11, 11], 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.conditions[0].points.len(), 20000);
        assert_eq!(a.conditions[1].points.len(), 1000);
        assert_eq!(a.conditions[2].points.len(), 2000);
        assert_eq!(a.n_supervised(&p), 3000);
        for x in a.conditions[0].points.iter() {
            assert!(x[0] > -1.0 && x[0] < 1.0 && x[1] > 0.0 && x[1] < 1.0);
        }
        assert!(a.conditions[1].points.iter().all(|x| x[1] == 0.0));
        let lower = a.conditions[2].points.iter().filter(|x| x[0] == -1.0).count();
        assert_eq!(lower, 1000);
        assert_eq!(a.test.points.len(), 121);
        assert_eq!(a.test.points.get(0), &[-1.0, 0.0]);
        assert_eq!(a.test.points.get(120), &[1.0, 1.0]);
        assert_eq!(a.test.points.get(1), &[-1.0, 0.1]);
        assert!(sample_points(&p, &[10, 10], &[3, 3], 0).is_err());
        let c = sample_points(&p, &[20000, 1000, 2000], &[11, 11], 6).unwrap();
        assert_ne!(a.conditions[0].points, c.conditions[0].points);
    }

    #[test]
    fn csv_dump_has_one_row_per_point() {
        let p = make_flow(100.0, 0.05, FlowBoundary::Inflow).unwrap();
        let pts = sample_points(&p, &[10, 4, 3], &[2, 2], 1).unwrap();
        let csv = pts.to_csv(&p);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "set,facet,x,t");
        assert_eq!(lines.len(), 1 + 10 + 4 + 3 + 4);
        assert!(lines[11].starts_with("ic,0,"));
    }
}
