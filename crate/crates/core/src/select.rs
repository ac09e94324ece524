//! Stage-1 family selection and the hand-off to the adaptive model.
//!
//! For every fixed-basis field and every condition role (residual, initial,
//! boundary) the response vector of family `i` collects `D[cᵢΨᵢ]` over all
//! points and equations of that role that involve the field. Families are
//! scored against the right-hand side by normalized inner products; when the
//! right-hand side vanishes, by their normalized mean response magnitude
//! (lower meaning more relevant). The active set is the union of every
//! role's threshold pass set with the top-κ% of families by `|cᵢ|`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{FamilyIndex, FamilySet};
use crate::model::{Derivative, FieldModels, ModelKind, ModelState, PointScratch};
use crate::problems::{PdeProblem, PointSet, Role};
use crate::reduce::{map_chunks, tree_reduce, POINT_CHUNK};
use crate::wavelet::dyadic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Greater,
    Less,
}

/// A score cut such as `> 0.5` or `< 0.98`; serialized in that form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Threshold {
    pub direction: Direction,
    pub value: f64,
}

impl Threshold {
    pub fn greater(value: f64) -> Self {
        Threshold { direction: Direction::Greater, value }
    }

    pub fn less(value: f64) -> Self {
        Threshold { direction: Direction::Less, value }
    }

    #[inline]
    pub fn passes(&self, score: f64) -> bool {
        match self.direction {
            Direction::Greater => score > self.value,
            Direction::Less => score < self.value,
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.direction {
            Direction::Greater => '>',
            Direction::Less => '<',
        };
        write!(f, "{op} {}", self.value)
    }
}

impl TryFrom<String> for Threshold {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        let t = s.trim();
        let (direction, rest) = if let Some(r) = t.strip_prefix('>') {
            (Direction::Greater, r)
        } else if let Some(r) = t.strip_prefix('<') {
            (Direction::Less, r)
        } else {
            return Err(Error::Config(format!("threshold `{s}` must start with `>` or `<`")));
        };
        let value: f64 = rest.trim().parse().map_err(|e| Error::Config(format!("threshold `{s}`: {e}")))?;
        if !value.is_finite() {
            return Err(Error::Config(format!("threshold `{s}` is not finite")));
        }
        Ok(Threshold { direction, value })
    }
}

impl From<Threshold> for String {
    fn from(t: Threshold) -> String {
        t.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    #[serde(default)]
    pub pde: Option<Threshold>,
    #[serde(default)]
    pub initial: Option<Threshold>,
    #[serde(default)]
    pub boundary: Option<Threshold>,
    /// κ, percent of `N_fam` kept by coefficient magnitude.
    pub top_percent: f64,
    #[serde(default = "default_zero_rhs_tolerance")]
    pub zero_rhs_tolerance: f64,
    /// Multiply transferred coefficients by `2^{Σjₙ/2}`.
    #[serde(default = "default_true")]
    pub rescale_coefficients: bool,
}

fn default_zero_rhs_tolerance() -> f64 {
    1e-12
}

fn default_true() -> bool {
    true
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.top_percent > 0.0 && self.top_percent <= 100.0) {
            return Err(Error::Config(format!("top percent must be in (0, 100], got {}", self.top_percent)));
        }
        if !(self.zero_rhs_tolerance >= 0.0 && self.zero_rhs_tolerance.is_finite()) {
            return Err(Error::Config("zero-rhs tolerance must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn threshold(&self, role: Role) -> Option<Threshold> {
        match role {
            Role::Residual => self.pde,
            Role::Initial => self.initial,
            Role::Boundary => self.boundary,
        }
    }
}

/// Per-family sufficient statistics of response vectors against one
/// right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseStats {
    /// `⟨Vᵢ, rhs⟩`
    pub inner: Vec<f64>,
    /// mean of `|Vᵢ|` entries
    pub mean_abs: Vec<f64>,
    /// max of `|Vᵢ|` entries
    pub max_abs: Vec<f64>,
    /// `‖rhs‖_∞`
    pub rhs_max_abs: f64,
}

impl ResponseStats {
    pub fn from_vectors(responses: &[Vec<f64>], rhs: &[f64]) -> Result<Self> {
        if responses.iter().any(|r| r.len() != rhs.len()) {
            return Err(Error::invalid("response and rhs lengths differ"));
        }
        let n = rhs.len().max(1) as f64;
        Ok(ResponseStats {
            inner: responses.iter().map(|r| r.iter().zip(rhs).map(|(a, b)| a * b).sum()).collect(),
            mean_abs: responses.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>() / n).collect(),
            max_abs: responses.iter().map(|r| r.iter().fold(0.0, |m: f64, v| m.max(v.abs()))).collect(),
            rhs_max_abs: rhs.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scores {
    pub values: Vec<f64>,
    /// True when the zero-rhs fallback was used (lower is more relevant).
    pub fallback: bool,
}

/// Normalized inner-product scores, or the zero-rhs fallback.
pub fn scores_from_stats(stats: &ResponseStats, zero_rhs_tolerance: f64) -> Result<Scores> {
    let max_inner = stats.inner.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if stats.rhs_max_abs > zero_rhs_tolerance && max_inner > 0.0 {
        return Ok(Scores { values: stats.inner.iter().map(|v| v / max_inner).collect(), fallback: false });
    }
    let max_entry = stats.max_abs.iter().fold(0.0, |m: f64, v| m.max(*v));
    if max_entry == 0.0 {
        return Err(Error::EmptySelection("every family response vector is zero".into()));
    }
    Ok(Scores { values: stats.mean_abs.iter().map(|v| v / max_entry).collect(), fallback: true })
}

/// Scores of dense response vectors against `rhs`.
pub fn similarity_scores(responses: &[Vec<f64>], rhs: &[f64], zero_rhs_tolerance: f64) -> Result<Scores> {
    scores_from_stats(&ResponseStats::from_vectors(responses, rhs)?, zero_rhs_tolerance)
}

/// Dense response vectors of one fixed-basis field for one role: one row
/// per family, columns over (condition, equation, point) in problem order,
/// restricted to equations involving the field. Returns `None` when no
/// equation of that role involves the field.
pub fn response_vectors(
    problem: &PdeProblem,
    models: &FieldModels,
    points: &PointSet,
    field: usize,
    role: Role,
) -> Result<Option<(Vec<Vec<f64>>, Vec<f64>)>> {
    let model = fixed_field(models, field)?;
    let n = model.n_terms();
    let mut rows = vec![Vec::new(); n];
    let mut rhs = Vec::new();
    let mut any = false;
    let mut scratch = PointScratch::default();
    let mut buf = vec![0.0; model.n_params()];
    for (cond, cp) in problem.conditions.iter().zip(&points.conditions) {
        if cond.role != role {
            continue;
        }
        for eq in cond.equations.iter().filter(|e| e.terms.iter().any(|t| t.field == field)) {
            any = true;
            for x in cp.points.iter() {
                let terms: Vec<(Derivative, f64)> =
                    eq.terms.iter().filter(|t| t.field == field).map(|t| (t.derivative, t.coeff.at(x))).collect();
                family_responses(model, x, &terms, &mut scratch, &mut buf);
                for (row, v) in rows.iter_mut().zip(&buf) {
                    row.push(*v);
                }
                rhs.push((eq.rhs)(x));
            }
        }
    }
    Ok(any.then_some((rows, rhs)))
}

/// `buf[i] = D[cᵢΨᵢ](x)` for the given recipe terms.
fn family_responses(model: &ModelState, x: &[f64], terms: &[(Derivative, f64)], scratch: &mut PointScratch, buf: &mut [f64]) {
    buf.iter_mut().for_each(|v| *v = 0.0);
    model.prepare_point(x, scratch);
    model.grad_prepared(x, terms, scratch, 1.0, buf);
    for (v, c) in buf.iter_mut().zip(model.coeffs()) {
        *v *= c;
    }
}

/// Streaming form of [`response_vectors`] followed by
/// [`ResponseStats::from_vectors`], without materializing the rows.
pub fn response_stats(
    problem: &PdeProblem,
    models: &FieldModels,
    points: &PointSet,
    field: usize,
    role: Role,
) -> Result<Option<ResponseStats>> {
    let model = fixed_field(models, field)?;
    let n = model.n_terms();
    let mut total: Option<(Vec<f64>, Vec<f64>, Vec<f64>, f64, usize)> = None;
    for (cond, cp) in problem.conditions.iter().zip(&points.conditions) {
        if cond.role != role {
            continue;
        }
        for eq in cond.equations.iter().filter(|e| e.terms.iter().any(|t| t.field == field)) {
            let pts = &cp.points;
            let parts = map_chunks(pts.len(), POINT_CHUNK, |s, e| {
                let mut inner = vec![0.0; n];
                let mut sum_abs = vec![0.0; n];
                let mut max_abs = vec![0.0f64; n];
                let mut rhs_max = 0.0f64;
                let mut scratch = PointScratch::default();
                let mut buf = vec![0.0; model.n_params()];
                let mut terms = Vec::new();
                for p in s..e {
                    let x = pts.get(p);
                    terms.clear();
                    terms.extend(eq.terms.iter().filter(|t| t.field == field).map(|t| (t.derivative, t.coeff.at(x))));
                    family_responses(model, x, &terms, &mut scratch, &mut buf);
                    let g = (eq.rhs)(x);
                    rhs_max = rhs_max.max(g.abs());
                    for i in 0..n {
                        let v = buf[i];
                        inner[i] += v * g;
                        sum_abs[i] += v.abs();
                        max_abs[i] = max_abs[i].max(v.abs());
                    }
                }
                (inner, sum_abs, max_abs, rhs_max, e - s)
            });
            let merged = tree_reduce(parts, merge_stats);
            total = match (total, merged) {
                (Some(a), Some(b)) => Some(merge_stats(a, b)),
                (a, b) => a.or(b),
            };
        }
    }
    Ok(total.map(|(inner, sum_abs, max_abs, rhs_max_abs, count)| ResponseStats {
        inner,
        mean_abs: sum_abs.iter().map(|s| s / count.max(1) as f64).collect(),
        max_abs,
        rhs_max_abs,
    }))
}

type RawStats = (Vec<f64>, Vec<f64>, Vec<f64>, f64, usize);

fn merge_stats(mut a: RawStats, b: RawStats) -> RawStats {
    for i in 0..a.0.len() {
        a.0[i] += b.0[i];
        a.1[i] += b.1[i];
        a.2[i] = a.2[i].max(b.2[i]);
    }
    (a.0, a.1, a.2, a.3.max(b.3), a.4 + b.4)
}

fn fixed_field(models: &FieldModels, field: usize) -> Result<&ModelState> {
    let model = models.fields().get(field).ok_or(Error::OutOfRange { index: field, len: models.len() })?;
    match model.kind() {
        ModelKind::FixedBasis(_) => Ok(model),
        ModelKind::Adaptive { .. } => Err(Error::invalid("selection needs a fixed-basis model")),
    }
}

/// Scores of one role for one field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoleScores {
    pub role: Role,
    pub scores: Scores,
}

/// Union of each role's threshold pass set and the top-κ% of families by
/// `|cᵢ|` (ties broken by lower index). Sorted ascending.
pub fn select_active(groups: &[RoleScores], coeffs: &[f64], cfg: &SelectionConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let n = coeffs.len();
    let mut chosen = vec![false; n];
    for g in groups {
        if g.scores.values.len() != n {
            return Err(Error::invalid("score vector length does not match the coefficients"));
        }
        if let Some(th) = cfg.threshold(g.role) {
            for (c, &s) in chosen.iter_mut().zip(&g.scores.values) {
                *c |= th.passes(s);
            }
        }
    }
    for i in top_fraction(coeffs, cfg.top_percent) {
        chosen[i] = true;
    }
    let out: Vec<usize> = (0..n).filter(|&i| chosen[i]).collect();
    if out.is_empty() {
        return Err(Error::EmptySelection("no family passed; relax the thresholds or raise top_percent".into()));
    }
    Ok(out)
}

/// Indices of the `ceil(percent·n/100)` largest `|cᵢ|`.
pub fn top_fraction(coeffs: &[f64], percent: f64) -> Vec<usize> {
    let n = coeffs.len();
    let k = ((percent / 100.0 * n as f64).ceil() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| coeffs[b].abs().total_cmp(&coeffs[a].abs()).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Transferred initialization of one field's adaptive model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldActiveSet {
    pub field: usize,
    pub indices: Vec<usize>,
    pub levels: Vec<FamilyIndex>,
    /// Row-major `N_A × d`, `w = 2^j`.
    pub scales: Vec<f64>,
    /// Row-major `N_A × d`, `b = -k`.
    pub shifts: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSet {
    pub fields: Vec<FieldActiveSet>,
    pub rescaled: bool,
}

impl ActiveSet {
    pub fn total_units(&self) -> usize {
        self.fields.iter().map(|f| f.indices.len()).sum()
    }

    pub fn to_models(&self, dim: usize) -> Result<FieldModels> {
        FieldModels::new(
            self.fields
                .iter()
                .map(|f| ModelState::adaptive(dim, f.scales.clone(), f.shifts.clone(), f.coeffs.clone(), f.bias))
                .collect::<Result<Vec<_>>>()?,
        )
    }
}

/// `w = 2^j`, `b = -k`, `c ← c·2^{Σj/2}` when `rescale` is set.
pub fn transfer(field: usize, family: &FamilySet, coeffs: &[f64], bias: f64, indices: &[usize], rescale: bool) -> Result<FieldActiveSet> {
    if indices.is_empty() {
        return Err(Error::EmptySelection(format!("field {field} has no active families")));
    }
    let mut levels = Vec::with_capacity(indices.len());
    let mut scales = Vec::new();
    let mut shifts = Vec::new();
    let mut out_c = Vec::with_capacity(indices.len());
    for &i in indices {
        let idx = family.index(i)?;
        scales.extend(idx.j.iter().map(|&j| dyadic(j)));
        shifts.extend(idx.k.iter().map(|&k| -(k as f64)));
        let factor = if rescale { 2f64.powf(family.level_sum(i) as f64 / 2.0) } else { 1.0 };
        out_c.push(coeffs[i] * factor);
        levels.push(idx);
    }
    Ok(FieldActiveSet { field, indices: indices.to_vec(), levels, scales, shifts, coeffs: out_c, bias })
}

/// Per-field, per-role scoring summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSelectionReport {
    pub field: usize,
    pub n_families: usize,
    pub roles: Vec<RoleScores>,
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionReport {
    pub active: ActiveSet,
    pub fields: Vec<FieldSelectionReport>,
}

/// Scores every fixed-basis field on every role, selects, and transfers.
pub fn run_selection(problem: &PdeProblem, models: &FieldModels, points: &PointSet, cfg: &SelectionConfig) -> Result<SelectionReport> {
    cfg.validate()?;
    let mut active = Vec::new();
    let mut reports = Vec::new();
    for f in 0..models.len() {
        let model = fixed_field(models, f)?;
        let family = model.family().expect("fixed-basis model");
        let mut roles = Vec::new();
        for role in [Role::Residual, Role::Initial, Role::Boundary] {
            if let Some(stats) = response_stats(problem, models, points, f, role)? {
                roles.push(RoleScores { role, scores: scores_from_stats(&stats, cfg.zero_rhs_tolerance)? });
            }
        }
        let indices = select_active(&roles, model.coeffs(), cfg)?;
        active.push(transfer(f, family, model.coeffs(), model.bias(), &indices, cfg.rescale_coefficients)?);
        reports.push(FieldSelectionReport { field: f, n_families: family.len(), roles, selected: indices.len() });
    }
    Ok(SelectionReport { active: ActiveSet { fields: active, rescaled: cfg.rescale_coefficients }, fields: reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::AxisSpec;
    use crate::problems::{make_heat_conduction, make_maxwell_tez, make_poisson_localized, sample_points, PulseSource};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn cfg(top: f64) -> SelectionConfig {
        SelectionConfig {
            pde: None,
            initial: None,
            boundary: None,
            top_percent: top,
            zero_rhs_tolerance: 1e-12,
            rescale_coefficients: true,
        }
    }

    #[test]
    fn similarity_examples() {
        // responses chosen so the inner products with rhs = (1, 0) are 5 and -2
        let s = similarity_scores(&[vec![5.0, 1.0], vec![-2.0, 7.0]], &[1.0, 0.0], 1e-12).unwrap();
        assert_eq!(s.values, vec![1.0, -0.4]);
        assert!(!s.fallback);
        let one = similarity_scores(&[vec![-3.0, 2.0]], &[1.0, 0.5], 1e-12).unwrap();
        assert_eq!(one.values, vec![-1.0]);
        // max entries (2, 8), mean magnitudes (1, 2)
        let fb = similarity_scores(&[vec![2.0, 0.0, 1.0, 1.0], vec![0.0, -8.0, 0.0, 0.0]], &[0.0; 4], 1e-12).unwrap();
        assert!(fb.fallback);
        assert_eq!(fb.values, vec![0.125, 0.25]);
        assert!(matches!(similarity_scores(&[vec![0.0; 3]], &[0.0; 3], 1e-12), Err(Error::EmptySelection(_))));
    }

    #[test]
    fn threshold_parsing() {
        let t = Threshold::try_from("< 0.980".to_string()).unwrap();
        assert_eq!(t, Threshold::less(0.98));
        assert!(t.passes(0.5) && !t.passes(0.98));
        let g = Threshold::try_from(">0.5".to_string()).unwrap();
        assert!(g.passes(0.6) && !g.passes(0.5));
        assert!(Threshold::try_from("= 1".to_string()).is_err());
        assert_eq!(String::from(g), "> 0.5");
    }

    #[test]
    fn selection_examples() {
        let c = [0.3, -2.0, 0.1, 2.0, 0.0];
        assert_eq!(select_active(&[], &c, &cfg(100.0)).unwrap(), vec![0, 1, 2, 3, 4]);
        // ties broken by the lower index: |c1| == |c3|
        assert_eq!(top_fraction(&c, 20.0), vec![1]);
        assert_eq!(select_active(&[], &c, &cfg(40.0)).unwrap(), vec![1, 3]);
        let scores = RoleScores { role: Role::Boundary, scores: Scores { values: vec![0.0; 5], fallback: false } };
        let mut k = cfg(30.0);
        k.boundary = Some(Threshold::greater(0.5));
        assert_eq!(select_active(&[scores], &c, &k).unwrap().len(), 2);
        assert!(cfg(0.0).validate().is_err());
    }

    #[test]
    fn transfer_example() {
        let fam = FamilySet::build(vec![AxisSpec::new(-1.0, 1.0, [3], 0.0).unwrap()]).unwrap();
        let i = fam.position(&FamilyIndex { j: vec![3], k: vec![-2] }).unwrap();
        let t = transfer(0, &fam, &vec![1.0; fam.len()], 0.5, &[i], true).unwrap();
        assert_eq!(t.scales, vec![8.0]);
        assert_eq!(t.shifts, vec![2.0]);
        assert!((t.coeffs[0] - 2f64.powf(1.5)).abs() < 1e-15);
        assert_eq!(transfer(0, &fam, &vec![1.0; fam.len()], 0.5, &[i], false).unwrap().coeffs, vec![1.0]);
    }

    fn heat_setup(seed: u64) -> (PdeProblem, PointSet, FieldModels) {
        let p = make_heat_conduction(0.12).unwrap();
        let pts = sample_points(&p, &[300, 60, 60], &[2, 2], seed).unwrap();
        let fam = Arc::new(
            FamilySet::build(vec![
                AxisSpec::new(-1.0, 1.0, 0..=2, 0.3).unwrap(),
                AxisSpec::new(0.0, 1.0, 0..=2, 0.3).unwrap(),
            ])
            .unwrap(),
        );
        let m = FieldModels::single(ModelState::xavier_fixed(fam, seed));
        (p, pts, m)
    }

    #[test]
    fn streaming_stats_match_dense_vectors() {
        let (p, pts, m) = heat_setup(3);
        for role in [Role::Residual, Role::Initial, Role::Boundary] {
            let (rows, rhs) = response_vectors(&p, &m, &pts, 0, role).unwrap().unwrap();
            let dense = ResponseStats::from_vectors(&rows, &rhs).unwrap();
            let stream = response_stats(&p, &m, &pts, 0, role).unwrap().unwrap();
            for i in 0..rows.len() {
                assert!((dense.inner[i] - stream.inner[i]).abs() <= 1e-9 * dense.inner[i].abs().max(1.0));
                assert!((dense.mean_abs[i] - stream.mean_abs[i]).abs() <= 1e-12 * dense.mean_abs[i].max(1e-300));
                assert_eq!(dense.max_abs[i], stream.max_abs[i]);
            }
        }
    }

    #[test]
    fn responses_are_linear_in_coefficients() {
        let (p, pts, m) = heat_setup(5);
        let (rows, _) = response_vectors(&p, &m, &pts, 0, Role::Residual).unwrap().unwrap();
        let mut doubled = m.clone();
        let mut c = doubled.fields()[0].params().to_vec();
        c[4] *= 2.0;
        c[7] = 0.0;
        doubled.fields_mut()[0].set_params(&c).unwrap();
        let (rows2, _) = response_vectors(&p, &doubled, &pts, 0, Role::Residual).unwrap().unwrap();
        for (a, b) in rows[4].iter().zip(&rows2[4]) {
            assert_eq!(2.0 * a, *b);
        }
        assert!(rows2[7].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn poisson_single_family_response_matches_finite_differences() {
        let p = make_poisson_localized(0.05).unwrap();
        let pts = sample_points(&p, &[50, 10], &[2, 2], 1).unwrap();
        let fam = Arc::new(FamilySet::build(vec![AxisSpec::new(0.0, 1.0, [1], 0.0).unwrap(); 2]).unwrap());
        let c = 1.7;
        let m = FieldModels::single(ModelState::fixed(fam.clone(), vec![c; fam.len()], 0.0).unwrap());
        let (rows, _) = response_vectors(&p, &m, &pts, 0, Role::Residual).unwrap().unwrap();
        let h = 1e-4;
        for i in 0..fam.len() {
            for (v, x) in rows[i].iter().zip(pts.conditions[0].points.iter()) {
                let f = |a: f64, b: f64| fam.eval_basis(i, &[a, b]).unwrap();
                let lap = (f(x[0] + h, x[1]) + f(x[0] - h, x[1]) + f(x[0], x[1] + h) + f(x[0], x[1] - h) - 4.0 * f(x[0], x[1])) / (h * h);
                assert!((v - c * lap).abs() <= 1e-5 * (c * lap).abs().max(1.0));
            }
        }
    }

    #[test]
    fn maxwell_roles_cover_expected_fields() {
        let p = make_maxwell_tez(PulseSource::default()).unwrap();
        let pts = sample_points(&p, &[50, 10, 10, 10], &[2, 2, 2], 1).unwrap();
        let fam = Arc::new(FamilySet::build(p.domain.iter().map(|&(a, b)| AxisSpec::new(a, b, [0], 0.1).unwrap()).collect()).unwrap());
        let m = FieldModels::new((0..3).map(|f| ModelState::xavier_fixed(fam.clone(), f)).collect()).unwrap();
        assert!(response_stats(&p, &m, &pts, 2, Role::Boundary).unwrap().is_none());
        let ex = response_stats(&p, &m, &pts, 0, Role::Boundary).unwrap().unwrap();
        assert_eq!(ex.rhs_max_abs, 0.0);
        let mut c = cfg(1.0);
        c.pde = Some(Threshold::less(0.91));
        c.initial = Some(Threshold::less(0.95));
        c.boundary = Some(Threshold::less(0.95));
        let r = run_selection(&p, &m, &pts, &c).unwrap();
        assert_eq!(r.active.fields.len(), 3);
        assert_eq!(r.fields[2].roles.len(), 2);
    }

    #[test]
    fn transfer_reproduces_restricted_model() {
        let (p, pts, m) = heat_setup(11);
        let mut c = cfg(30.0);
        c.initial = Some(Threshold::greater(0.5));
        let report = run_selection(&p, &m, &pts, &c).unwrap();
        let fixed = &m.fields()[0];
        let fam = fixed.family().unwrap();
        let set = &report.active.fields[0];
        let adaptive = report.active.to_models(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0)];
            let restricted: f64 = set.indices.iter().map(|&i| fixed.coeffs()[i] * fam.eval_basis(i, &x).unwrap()).sum::<f64>() + fixed.bias();
            let got = adaptive.fields()[0].forward(&x);
            assert!((got - restricted).abs() <= 1e-10 * restricted.abs().max(1e-3), "{got} vs {restricted}");
        }
    }

    fn random_stats(rng: &mut ChaCha8Rng, n_fam: usize, len: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let rows = (0..n_fam).map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let rhs = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
        (rows, rhs)
    }

    #[test]
    fn scores_are_bounded_and_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let (rows, rhs) = random_stats(&mut rng, 7, 9);
            let s = similarity_scores(&rows, &rhs, 1e-12).unwrap();
            assert!(s.values.iter().all(|v| (-1.0..=1.0).contains(v)));
            assert_eq!(s.values.iter().fold(0.0f64, |m, v| m.max(v.abs())), 1.0);
        }
    }

    proptest! {
        #[test]
        fn scores_are_scale_invariant(seed in 0u64..10_000, alpha in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (rows, rhs) = random_stats(&mut rng, 5, 6);
            let base = similarity_scores(&rows, &rhs, 1e-12).unwrap();
            let scaled_rhs: Vec<f64> = rhs.iter().map(|v| v * alpha).collect();
            let a = similarity_scores(&rows, &scaled_rhs, 1e-12).unwrap();
            let scaled_rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * alpha).collect()).collect();
            let b = similarity_scores(&scaled_rows, &rhs, 1e-12).unwrap();
            for i in 0..5 {
                prop_assert!((a.values[i] - base.values[i]).abs() < 1e-12);
                prop_assert!((b.values[i] - base.values[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn active_set_grows_with_kappa(seed in 0u64..10_000, k1 in 1.0f64..100.0, k2 in 1.0f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
            let scores = RoleScores { role: Role::Residual, scores: Scores { values: (0..40).map(|_| rng.random_range(-1.0..1.0)).collect(), fallback: false } };
            let (lo, hi) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
            let mut a = cfg(lo);
            a.pde = Some(Threshold::greater(0.7));
            let mut b = a.clone();
            b.top_percent = hi;
            let small = select_active(std::slice::from_ref(&scores), &c, &a).unwrap();
            let large = select_active(&[scores], &c, &b).unwrap();
            prop_assert!(small.iter().all(|i| large.contains(i)));
        }
    }
}
