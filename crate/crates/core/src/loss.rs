//! Residual and supervised losses with exact parameter gradients.
//!
//! Each condition contributes one raw term: the mean over its equations of
//! the mean squared equation residual over its points. The total is either
//! `Σ ω·L` (weighted mode) or `L_res^{1/p} + Σ L_sup^{1/q}` (exponent mode,
//! which ignores `ω`).
//!
//! Gradients are accumulated point by point into parameter-length buffers.
//! Points are processed in fixed chunks whose partial results are combined
//! by a fixed pairwise tree, so totals are deterministic for any worker
//! count. Fixed-basis fields use a batched path: the per-axis factor tables
//! at every point are computed once, and both evaluation and the
//! vector-Jacobian product become dense matrix products over chunks of
//! points.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::FamilySet;
use crate::model::{Derivative, FieldModels, ModelKind, PointScratch, UnitJet};
use crate::problems::{Coefficient, PdeProblem, PointSet, Points, Role};
use crate::reduce::{add_into, map_chunks, tree_reduce, POINT_CHUNK};

const TABLE_CHUNK: usize = 512;

/// `ω_r` for the residual term and `ω_s` for every supervised term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub residual: f64,
    pub supervised: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { residual: 1.0, supervised: 1.0 }
    }
}

impl LossWeights {
    pub fn for_role(&self, role: Role) -> f64 {
        match role {
            Role::Residual => self.residual,
            Role::Initial | Role::Boundary => self.supervised,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossMode {
    Weighted,
    /// `L_res^{1/p} + Σ L_sup^{1/q}`.
    Exponent { p: f64, q: f64 },
}

impl LossMode {
    pub fn validate(&self) -> Result<()> {
        if let LossMode::Exponent { p, q } = *self {
            if !(p > 0.0 && q > 0.0 && p.is_finite() && q.is_finite()) {
                return Err(Error::invalid(format!("exponents must be positive, got p={p}, q={q}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub names: Vec<String>,
    pub roles: Vec<Role>,
    /// Raw mean-squared terms, one per condition.
    pub terms: Vec<f64>,
    pub weights: Vec<f64>,
    /// Per-term exponents in exponent mode.
    pub exponents: Option<Vec<f64>>,
    pub total: f64,
}

impl LossBreakdown {
    pub fn residual(&self) -> f64 {
        self.roles.iter().zip(&self.terms).filter(|(r, _)| **r == Role::Residual).map(|(_, t)| t).sum()
    }

    pub fn supervised(&self) -> f64 {
        self.roles.iter().zip(&self.terms).filter(|(r, _)| **r != Role::Residual).map(|(_, t)| t).sum()
    }
}

/// Each term divided by the smallest nonzero term; all-zero input maps to
/// zeros.
pub fn loss_ratio_diagnostic(terms: &[f64]) -> Result<Vec<f64>> {
    if terms.len() < 2 {
        return Err(Error::invalid("loss ratio needs at least two terms"));
    }
    let min = terms.iter().copied().filter(|&t| t > 0.0).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Ok(vec![0.0; terms.len()]);
    }
    Ok(terms.iter().map(|t| t / min).collect())
}

/// Combines raw terms into the scalar objective and returns, per term, the
/// factor its gradient is multiplied by.
pub fn combine_terms(terms: &[f64], roles: &[Role], weights: LossWeights, mode: LossMode) -> Result<(f64, Vec<f64>, Option<Vec<f64>>)> {
    match mode {
        LossMode::Weighted => {
            let factors: Vec<f64> = roles.iter().map(|&r| weights.for_role(r)).collect();
            let total = terms.iter().zip(&factors).map(|(t, w)| t * w).sum();
            Ok((total, factors, None))
        }
        LossMode::Exponent { p, q } => {
            mode.validate()?;
            let exps: Vec<f64> = roles.iter().map(|&r| if r == Role::Residual { p } else { q }).collect();
            let mut total = 0.0;
            let mut factors = Vec::with_capacity(terms.len());
            for (i, (&t, &e)) in terms.iter().zip(&exps).enumerate() {
                if t == 0.0 && e > 1.0 {
                    return Err(Error::DegenerateLoss { term: format!("#{i}"), exponent: e });
                }
                total += t.powf(1.0 / e);
                factors.push(if e == 1.0 { 1.0 } else { t.powf(1.0 / e - 1.0) / e });
            }
            Ok((total, factors, Some(exps)))
        }
    }
}

/// Factor tables of one fixed-basis field on one condition's points:
/// `tables[n][o]` is the row-major `N_pts × N_axis(n)` matrix of order-`o`
/// axis factors, present when some recipe needs that order.
struct FieldTables {
    family: Arc<FamilySet>,
    sizes: Vec<usize>,
    tables: Vec<[Option<Vec<f64>>; 3]>,
}

impl FieldTables {
    fn build(family: &Arc<FamilySet>, points: &Points, derivatives: &[Derivative]) -> Self {
        let d = family.dim();
        let sizes: Vec<usize> = (0..d).map(|n| family.axis_terms(n).len()).collect();
        let wavelet = family.wavelet();
        let mut tables: Vec<[Option<Vec<f64>>; 3]> = (0..d).map(|_| [None, None, None]).collect();
        for n in 0..d {
            let mut needed = [false; 3];
            for der in derivatives {
                needed[der.order_on(n)] = true;
            }
            let terms = family.axis_terms(n);
            let mut bufs: [Vec<f64>; 3] = Default::default();
            for (o, b) in bufs.iter_mut().enumerate() {
                if needed[o] {
                    b.reserve(points.len() * sizes[n]);
                }
            }
            for x in points.iter() {
                for t in terms {
                    let f = t.factors(wavelet, x[n]);
                    for o in 0..3 {
                        if needed[o] {
                            bufs[o].push(f[o]);
                        }
                    }
                }
            }
            for (o, b) in bufs.into_iter().enumerate() {
                if needed[o] {
                    tables[n][o] = Some(b);
                }
            }
        }
        FieldTables { family: family.clone(), sizes, tables }
    }

    fn rows(&self, axis: usize, order: usize, start: usize, end: usize) -> &[f64] {
        let w = self.sizes[axis];
        &self.tables[axis][order].as_ref().expect("order requested at build time")[start * w..end * w]
    }

    /// Kronecker products of the rows of axes `1..d` (`m × R`), or `None`
    /// when `d ≤ 2` and a table slice can be used directly.
    fn tail_rows(&self, deriv: Derivative, start: usize, end: usize) -> Option<Vec<f64>> {
        let d = self.sizes.len();
        if d <= 2 {
            return None;
        }
        let m = end - start;
        let r: usize = self.sizes[1..].iter().product();
        let mut out = vec![0.0; m * r];
        for p in 0..m {
            let row = &mut out[p * r..(p + 1) * r];
            row[0] = 1.0;
            let mut len = 1;
            for n in 1..d {
                let w = self.sizes[n];
                let f = &self.rows(n, deriv.order_on(n), start + p, start + p + 1)[..w];
                for a in (0..len).rev() {
                    let v = row[a];
                    for (b, &fb) in f.iter().enumerate() {
                        row[a * w + b] = v * fb;
                    }
                }
                len *= w;
            }
        }
        Some(out)
    }

    /// `D[Σ cᵢΨᵢ]` at points `start..end` (bias excluded).
    fn values(&self, deriv: Derivative, coeffs: &[f64], start: usize, end: usize) -> Vec<f64> {
        let m = end - start;
        let n0 = self.sizes[0];
        let r: usize = self.sizes[1..].iter().product();
        let a0 = self.rows(0, deriv.order_on(0), start, end);
        let mut u = vec![0.0; m * r];
        // SAFETY: slices are sized m×n0, n0×r and m×r with the row-major strides passed.
        unsafe {
            matrixmultiply::dgemm(
                m, n0, r, 1.0,
                a0.as_ptr(), n0 as isize, 1,
                coeffs.as_ptr(), r as isize, 1,
                0.0, u.as_mut_ptr(), r as isize, 1,
            );
        }
        if self.sizes.len() == 1 {
            return u;
        }
        let tail_owned = self.tail_rows(deriv, start, end);
        let tail: &[f64] = match &tail_owned {
            Some(t) => t,
            None => self.rows(1, deriv.order_on(1), start, end),
        };
        (0..m).map(|p| u[p * r..(p + 1) * r].iter().zip(&tail[p * r..(p + 1) * r]).map(|(a, b)| a * b).sum()).collect()
    }

    /// `grad[i] += Σ_p w_p D[Ψᵢ](x_p)` over points `start..end`.
    fn vjp(&self, deriv: Derivative, weights: &[f64], start: usize, end: usize, grad: &mut [f64]) {
        let m = end - start;
        let n0 = self.sizes[0];
        let r: usize = self.sizes[1..].iter().product();
        let a0 = self.rows(0, deriv.order_on(0), start, end);
        let mut wmat = match self.sizes.len() {
            1 => weights.to_vec(),
            _ => {
                let tail_owned = self.tail_rows(deriv, start, end);
                let tail: &[f64] = match &tail_owned {
                    Some(t) => t,
                    None => self.rows(1, deriv.order_on(1), start, end),
                };
                let mut w = tail.to_vec();
                for (p, &wp) in weights.iter().enumerate() {
                    for v in &mut w[p * r..(p + 1) * r] {
                        *v *= wp;
                    }
                }
                w
            }
        };
        // SAFETY: a0ᵀ is n0×m (column stride n0), wmat is m×r, grad is n0×r.
        unsafe {
            matrixmultiply::dgemm(
                n0, m, r, 1.0,
                a0.as_ptr(), 1, n0 as isize,
                wmat.as_mut_ptr(), r as isize, 1,
                1.0, grad.as_mut_ptr(), r as isize, 1,
            );
        }
    }
}

struct FieldTerms {
    field: usize,
    terms: Vec<(Derivative, Coefficient)>,
}

struct EquationPlan {
    fields: Vec<FieldTerms>,
    rhs: Vec<f64>,
}

struct ConditionPlan {
    equations: Vec<EquationPlan>,
    fields_used: Vec<usize>,
    /// Per field; present for fixed-basis fields.
    tables: Vec<Option<FieldTables>>,
    /// Distinct (field, derivative) pairs used by the recipes.
    pairs: Vec<(usize, Derivative)>,
}

/// Reusable evaluator of one problem's losses on one point set.
pub struct LossAssembler<'a> {
    problem: &'a PdeProblem,
    points: &'a PointSet,
    plans: Vec<ConditionPlan>,
}

/// Raw loss term of one condition with its gradient over the flat parameter
/// vector of all fields.
#[derive(Debug, Clone)]
pub struct TermGradient {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl<'a> LossAssembler<'a> {
    /// Precomputes right-hand sides and, for fixed-basis fields, the factor
    /// tables at every training point.
    pub fn new(problem: &'a PdeProblem, points: &'a PointSet, models: &FieldModels) -> Result<Self> {
        check_models(problem, models)?;
        if points.conditions.len() != problem.conditions.len() {
            return Err(Error::invalid("point set does not match the problem's conditions"));
        }
        let mut plans = Vec::with_capacity(problem.conditions.len());
        for (cond, cp) in problem.conditions.iter().zip(&points.conditions) {
            if cp.points.dim() != problem.dim() {
                return Err(Error::invalid("point dimension does not match the problem"));
            }
            let mut equations = Vec::new();
            let mut pairs: Vec<(usize, Derivative)> = Vec::new();
            for eq in &cond.equations {
                let rhs = cp.points.iter().map(|x| (eq.rhs)(x)).collect();
                let fields = eq
                    .fields()
                    .into_iter()
                    .map(|f| FieldTerms {
                        field: f,
                        terms: eq.terms.iter().filter(|t| t.field == f).map(|t| (t.derivative, t.coeff.clone())).collect(),
                    })
                    .collect();
                for t in &eq.terms {
                    if !pairs.contains(&(t.field, t.derivative)) {
                        pairs.push((t.field, t.derivative));
                    }
                }
                equations.push(EquationPlan { fields, rhs });
            }
            let mut fields_used: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            fields_used.sort_unstable();
            fields_used.dedup();
            let tables = (0..problem.n_fields())
                .map(|f| match models.fields()[f].kind() {
                    ModelKind::FixedBasis(fam) if fields_used.contains(&f) => {
                        let ders: Vec<Derivative> = pairs.iter().filter(|p| p.0 == f).map(|p| p.1).collect();
                        Some(FieldTables::build(fam, &cp.points, &ders))
                    }
                    _ => None,
                })
                .collect();
            plans.push(ConditionPlan { equations, fields_used, tables, pairs });
        }
        Ok(LossAssembler { problem, points, plans })
    }

    pub fn problem(&self) -> &PdeProblem {
        self.problem
    }

    fn use_tables(&self, c: usize, models: &FieldModels) -> bool {
        let plan = &self.plans[c];
        plan.fields_used.iter().all(|&f| match (&plan.tables[f], models.fields()[f].kind()) {
            (Some(t), ModelKind::FixedBasis(fam)) => Arc::ptr_eq(&t.family, fam),
            _ => false,
        })
    }

    /// Equation residuals of condition `c`, equation-major.
    pub fn residuals(&self, models: &FieldModels, c: usize) -> Vec<f64> {
        let plan = &self.plans[c];
        let pts = &self.points.conditions[c].points;
        let n = pts.len();
        let mut out = vec![0.0; n * plan.equations.len()];
        let chunks = map_chunks(n, POINT_CHUNK, |s, e| {
            let mut w = PointWork::new(models.len());
            let mut r = Vec::with_capacity((e - s) * plan.equations.len());
            for p in s..e {
                let x = pts.get(p);
                w.prepare(models, plan, x);
                for eq in &plan.equations {
                    r.push(w.equation_value(models, eq, x) - eq.rhs[p]);
                }
            }
            r
        });
        for ((s, e), r) in crate::reduce::chunk_ranges(n, POINT_CHUNK).into_iter().zip(chunks) {
            let ne = plan.equations.len();
            for (k, v) in r.into_iter().enumerate() {
                let (p, eq) = (s + k / ne, k % ne);
                debug_assert!(p < e);
                out[eq * n + p] = v;
            }
        }
        out
    }

    /// Raw term of condition `c` and, if requested, its gradient.
    pub fn condition_term(&self, models: &FieldModels, c: usize, with_grad: bool) -> TermGradient {
        if self.use_tables(c, models) {
            self.condition_term_tables(models, c, with_grad)
        } else {
            self.condition_term_pointwise(models, c, with_grad)
        }
    }

    fn condition_term_pointwise(&self, models: &FieldModels, c: usize, with_grad: bool) -> TermGradient {
        let plan = &self.plans[c];
        let pts = &self.points.conditions[c].points;
        let n = pts.len();
        let ne = plan.equations.len();
        let scale = 1.0 / (ne * n) as f64;
        let offsets = models.offsets();
        let n_params = models.n_params();
        let parts = map_chunks(n, POINT_CHUNK, |s, e| {
            let mut w = PointWork::new(models.len());
            let mut grad = if with_grad { vec![0.0; n_params] } else { Vec::new() };
            let mut sse = 0.0;
            for p in s..e {
                let x = pts.get(p);
                w.prepare(models, plan, x);
                for eq in &plan.equations {
                    let r = w.equation_value(models, eq, x) - eq.rhs[p];
                    sse += r * r;
                    if with_grad && r != 0.0 {
                        w.equation_grad(models, eq, x, 2.0 * r * scale, &offsets, &mut grad);
                    }
                }
            }
            (sse, grad)
        });
        let (sse, grad) = tree_reduce(parts, |a, b| (a.0 + b.0, if with_grad { add_into(a.1, b.1) } else { a.1 }))
            .unwrap_or((0.0, vec![0.0; if with_grad { n_params } else { 0 }]));
        TermGradient { value: sse * scale, grad }
    }

    fn condition_term_tables(&self, models: &FieldModels, c: usize, with_grad: bool) -> TermGradient {
        let plan = &self.plans[c];
        let pts = &self.points.conditions[c].points;
        let n = pts.len();
        let ne = plan.equations.len();
        let scale = 1.0 / (ne * n) as f64;
        let offsets = models.offsets();
        let n_params = models.n_params();
        let parts = map_chunks(n, TABLE_CHUNK, |s, e| {
            let m = e - s;
            let values: Vec<Vec<f64>> = plan
                .pairs
                .iter()
                .map(|&(f, der)| {
                    let model = &models.fields()[f];
                    let t = plan.tables[f].as_ref().expect("checked by use_tables");
                    let mut v = t.values(der, model.coeffs(), s, e);
                    if der == Derivative::Value {
                        let b = model.bias();
                        v.iter_mut().for_each(|x| *x += b);
                    }
                    v
                })
                .collect();
            let mut pair_weights = vec![vec![0.0; m]; plan.pairs.len()];
            let mut sse = 0.0;
            for eq in &plan.equations {
                for p in 0..m {
                    let x = pts.get(s + p);
                    let mut val = 0.0;
                    for ft in &eq.fields {
                        for (der, coeff) in &ft.terms {
                            let k = plan.pairs.iter().position(|q| *q == (ft.field, *der)).expect("pair recorded");
                            val += coeff.at(x) * values[k][p];
                        }
                    }
                    let r = val - eq.rhs[s + p];
                    sse += r * r;
                    if with_grad {
                        let wr = 2.0 * r * scale;
                        for ft in &eq.fields {
                            for (der, coeff) in &ft.terms {
                                let k = plan.pairs.iter().position(|q| *q == (ft.field, *der)).expect("pair recorded");
                                pair_weights[k][p] += wr * coeff.at(x);
                            }
                        }
                    }
                }
            }
            let mut grad = Vec::new();
            if with_grad {
                grad = vec![0.0; n_params];
                for (k, &(f, der)) in plan.pairs.iter().enumerate() {
                    let model = &models.fields()[f];
                    let t = plan.tables[f].as_ref().expect("checked by use_tables");
                    let off = offsets[f];
                    let nc = model.n_terms();
                    t.vjp(der, &pair_weights[k], s, e, &mut grad[off..off + nc]);
                    if der == Derivative::Value {
                        grad[off + model.bias_index()] += pair_weights[k].iter().sum::<f64>();
                    }
                }
            }
            (sse, grad)
        });
        let (sse, grad) = tree_reduce(parts, |a, b| (a.0 + b.0, if with_grad { add_into(a.1, b.1) } else { a.1 }))
            .unwrap_or((0.0, vec![0.0; if with_grad { n_params } else { 0 }]));
        TermGradient { value: sse * scale, grad }
    }

    /// Parameter Jacobian of the residuals of condition `c`: row-major,
    /// one row per residual entry in the order of [`Self::residuals`].
    pub fn condition_jacobian(&self, models: &FieldModels, c: usize) -> Vec<f64> {
        let plan = &self.plans[c];
        let pts = &self.points.conditions[c].points;
        let n = pts.len();
        let ne = plan.equations.len();
        let offsets = models.offsets();
        let np = models.n_params();
        let parts = map_chunks(n, POINT_CHUNK, |s, e| {
            let mut w = PointWork::new(models.len());
            let mut rows = vec![0.0; ne * (e - s) * np];
            for p in s..e {
                let x = pts.get(p);
                w.prepare(models, plan, x);
                for (k, eq) in plan.equations.iter().enumerate() {
                    w.equation_value(models, eq, x);
                    let r = (k * (e - s) + p - s) * np;
                    w.equation_grad(models, eq, x, 1.0, &offsets, &mut rows[r..r + np]);
                }
            }
            (s, e, rows)
        });
        let mut out = vec![0.0; ne * n * np];
        for (s, e, rows) in parts {
            for k in 0..ne {
                let src = &rows[k * (e - s) * np..(k + 1) * (e - s) * np];
                out[(k * n + s) * np..(k * n + e) * np].copy_from_slice(src);
            }
        }
        out
    }

    /// Every raw term and the combined objective, with its gradient when requested.
    pub fn evaluate(
        &self,
        models: &FieldModels,
        weights: LossWeights,
        mode: LossMode,
        with_grad: bool,
    ) -> Result<(LossBreakdown, Option<Vec<f64>>)> {
        let parts: Vec<TermGradient> =
            (0..self.plans.len()).map(|c| self.condition_term(models, c, with_grad)).collect();
        let terms: Vec<f64> = parts.iter().map(|t| t.value).collect();
        let roles: Vec<Role> = self.problem.conditions.iter().map(|c| c.role).collect();
        let (total, factors, exponents) = combine_terms(&terms, &roles, weights, mode)?;
        let grad = with_grad.then(|| {
            let mut g = vec![0.0; models.n_params()];
            for (t, f) in parts.iter().zip(&factors) {
                for (gi, ti) in g.iter_mut().zip(&t.grad) {
                    *gi += f * ti;
                }
            }
            g
        });
        let breakdown = LossBreakdown {
            names: self.problem.conditions.iter().map(|c| c.name.clone()).collect(),
            roles,
            terms,
            weights: self.problem.conditions.iter().map(|c| weights.for_role(c.role)).collect(),
            exponents,
            total,
        };
        Ok((breakdown, grad))
    }
}

/// Per-chunk scratch for point-wise assembly.
struct PointWork {
    scratch: Vec<PointScratch>,
    terms: Vec<(Derivative, f64)>,
    /// One per field term of the equation being assembled.
    jets: Vec<UnitJet>,
}

impl PointWork {
    fn new(n_fields: usize) -> Self {
        PointWork { scratch: vec![PointScratch::default(); n_fields], terms: Vec::new(), jets: Vec::new() }
    }

    fn prepare(&mut self, models: &FieldModels, plan: &ConditionPlan, x: &[f64]) {
        for &f in &plan.fields_used {
            let m = &models.fields()[f];
            if !m.is_adaptive() {
                m.prepare_point(x, &mut self.scratch[f]);
            }
        }
    }

    fn load_terms(&mut self, ft: &FieldTerms, x: &[f64]) {
        self.terms.clear();
        self.terms.extend(ft.terms.iter().map(|(d, c)| (*d, c.at(x))));
    }

    fn equation_value(&mut self, models: &FieldModels, eq: &EquationPlan, x: &[f64]) -> f64 {
        if self.jets.len() < eq.fields.len() {
            self.jets.resize(eq.fields.len(), UnitJet::default());
        }
        let mut v = 0.0;
        for (k, ft) in eq.fields.iter().enumerate() {
            self.load_terms(ft, x);
            let model = &models.fields()[ft.field];
            if model.is_adaptive() {
                model.unit_jet(x, &self.terms, &mut self.jets[k]);
                v += model.jet_value(&self.jets[k]);
            } else {
                v += model.eval_prepared(&self.terms, &mut self.scratch[ft.field]);
            }
        }
        v
    }

    /// Must follow [`Self::equation_value`] for the same equation and point.
    fn equation_grad(
        &mut self,
        models: &FieldModels,
        eq: &EquationPlan,
        x: &[f64],
        weight: f64,
        offsets: &[usize],
        grad: &mut [f64],
    ) {
        for (k, ft) in eq.fields.iter().enumerate() {
            let model = &models.fields()[ft.field];
            let off = offsets[ft.field];
            let g = &mut grad[off..off + model.n_params()];
            if model.is_adaptive() {
                model.jet_grad(&self.jets[k], weight, g);
            } else {
                self.load_terms(ft, x);
                let terms = std::mem::take(&mut self.terms);
                model.grad_prepared(x, &terms, &mut self.scratch[ft.field], weight, g);
                self.terms = terms;
            }
        }
    }
}

fn check_models(problem: &PdeProblem, models: &FieldModels) -> Result<()> {
    if models.len() != problem.n_fields() {
        return Err(Error::invalid(format!(
            "problem has {} fields but {} models were given",
            problem.n_fields(),
            models.len()
        )));
    }
    if models.dim() != problem.dim() {
        return Err(Error::invalid(format!(
            "model dimension {} does not match problem dimension {}",
            models.dim(),
            problem.dim()
        )));
    }
    Ok(())
}

/// `𝓟[û](xᵢ) − f(xᵢ)` at every residual point (equation-major for systems).
pub fn residual_vector(problem: &PdeProblem, models: &FieldModels, points: &PointSet) -> Result<Vec<f64>> {
    let asm = LossAssembler::new(problem, points, models)?;
    Ok(asm.residuals(models, problem.residual_index()))
}

/// One-shot loss and gradient; training loops should keep a
/// [`LossAssembler`] instead.
pub fn loss_and_gradient(
    problem: &PdeProblem,
    models: &FieldModels,
    points: &PointSet,
    weights: LossWeights,
    mode: LossMode,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let asm = LossAssembler::new(problem, points, models)?;
    let (b, g) = asm.evaluate(models, weights, mode, true)?;
    Ok((b, g.expect("gradient requested")))
}
