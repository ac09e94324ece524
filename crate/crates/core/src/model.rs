//! Trainable wavelet models and their analytic derivatives.
//!
//! Two kinds share one parameter-vector representation:
//!
//! * **Fixed basis** — `û(x) = Σᵢ cᵢ Ψᵢ(x) + 𝓑` over a [`FamilySet`]; the
//!   parameter vector is `[c₀ … c_{N-1}, 𝓑]`.
//! * **Adaptive** — `û(x) = Σᵢ cᵢ Πₙ ψ(w_{i,n} xₙ + b_{i,n}) + 𝓑`; the
//!   parameter vector is `[w (row-major, N×d), b (row-major, N×d), c, 𝓑]`.
//!
//! Every spatial derivative up to second order, and the gradient of each of
//! them with respect to every parameter, is computed in closed form.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::FamilySet;
use crate::wavelet::MotherWavelet;

/// Adaptive units whose dilated argument exceeds this on any axis contribute
/// below `1e-30` relative to their peak and are skipped during assembly.
pub const SUPPORT_RADIUS: f64 = 13.0;

const CHECKPOINT_VERSION: u32 = 1;

/// A spatial derivative of the model output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Derivative {
    Value,
    /// `∂/∂xₙ`
    D1(usize),
    /// `∂²/∂xₙ²`
    D2(usize),
    /// `∂²/∂xₘ∂xₙ`, `m ≠ n`
    Mixed(usize, usize),
}

impl Derivative {
    /// Differentiation order applied along `axis`.
    #[inline]
    pub fn order_on(self, axis: usize) -> usize {
        match self {
            Derivative::Value => 0,
            Derivative::D1(n) => usize::from(n == axis),
            Derivative::D2(n) => 2 * usize::from(n == axis),
            Derivative::Mixed(m, n) => usize::from(m == axis) + usize::from(n == axis),
        }
    }

    fn max_axis(self) -> Option<usize> {
        match self {
            Derivative::Value => None,
            Derivative::D1(n) | Derivative::D2(n) => Some(n),
            Derivative::Mixed(m, n) => Some(m.max(n)),
        }
    }

    pub fn validate(self, dim: usize) -> Result<()> {
        if let Derivative::Mixed(m, n) = self {
            if m == n {
                return Err(Error::invalid("mixed derivative needs distinct axes"));
            }
        }
        match self.max_axis() {
            Some(n) if n >= dim => Err(Error::OutOfRange { index: n, len: dim }),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    FixedBasis(Arc<FamilySet>),
    Adaptive { units: usize },
}

/// Value, gradient, Hessian diagonal and mixed partials of one basis
/// function or adaptive unit (coefficient excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct TermDerivatives {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub hess_diag: Vec<f64>,
    /// Row-major `d×d`; the diagonal repeats `hess_diag`.
    pub mixed: Vec<f64>,
}

/// Parameters of one trainable scalar field.
#[derive(Debug, Clone)]
pub struct ModelState {
    kind: ModelKind,
    dim: usize,
    wavelet: MotherWavelet,
    params: Vec<f64>,
}

/// Reusable per-point buffers for [`ModelState::prepare_point`] and the
/// evaluations that follow it.
#[derive(Debug, Default, Clone)]
pub struct PointScratch {
    psi: Vec<[f64; 4]>,
    active: Vec<usize>,
    tables: Vec<Vec<[f64; 3]>>,
    factors: Vec<Vec<f64>>,
}

const MAX_JET_DIM: usize = 3;

/// Per-unit output of [`ModelState::unit_jet`].
#[derive(Debug, Default, Clone)]
pub struct UnitJet {
    pub value: Vec<f64>,
    /// Row-major `units × d`.
    pub d_scale: Vec<f64>,
    pub d_shift: Vec<f64>,
    pub bias_weight: f64,
}

fn jet_kernel<const D: usize>(
    wavelet: MotherWavelet,
    scales: &[f64],
    shifts: &[f64],
    x: &[f64],
    terms: &[(Derivative, f64)],
    jet: &mut UnitJet,
) {
    let x: [f64; D] = x[..D].try_into().expect("point dimension");
    let orders: Vec<([usize; D], f64)> = terms
        .iter()
        .filter(|(_, k)| *k != 0.0)
        .map(|&(der, k)| (std::array::from_fn(|n| der.order_on(n)), k))
        .collect();
    let units = jet.value.len();
    let mut g = [[0.0; 3]; D];
    let mut gw = [[0.0; 3]; D];
    let mut gb = [[0.0; 3]; D];
    for i in 0..units {
        let w: [f64; D] = scales[i * D..i * D + D].try_into().expect("scale row");
        let b: [f64; D] = shifts[i * D..i * D + D].try_into().expect("shift row");
        let a: [f64; D] = std::array::from_fn(|n| w[n] * x[n] + b[n]);
        if a.iter().any(|a| a.abs() > SUPPORT_RADIUS) {
            continue;
        }
        for n in 0..D {
            let psi = wavelet.derivatives(a[n]);
            let (wn, xn) = (w[n], x[n]);
            g[n] = [psi[0], wn * psi[1], wn * wn * psi[2]];
            gb[n] = [psi[1], wn * psi[2], wn * wn * psi[3]];
            gw[n] = [xn * psi[1], psi[1] + wn * xn * psi[2], 2.0 * wn * psi[2] + wn * wn * xn * psi[3]];
        }
        let mut v = 0.0;
        let mut dw = [0.0; D];
        let mut db = [0.0; D];
        for (o, k) in &orders {
            let f: [f64; D] = std::array::from_fn(|n| g[n][o[n]]);
            v += k * f.iter().product::<f64>();
            for n in 0..D {
                let mut rest = *k;
                for m in 0..D {
                    if m != n {
                        rest *= f[m];
                    }
                }
                dw[n] += rest * gw[n][o[n]];
                db[n] += rest * gb[n][o[n]];
            }
        }
        jet.value[i] = v;
        jet.d_scale[i * D..i * D + D].copy_from_slice(&dw);
        jet.d_shift[i * D..i * D + D].copy_from_slice(&db);
    }
}

#[inline]
fn g_factor(w: f64, psi: &[f64; 4], o: usize) -> f64 {
    match o {
        0 => psi[0],
        1 => w * psi[1],
        _ => w * w * psi[2],
    }
}

#[inline]
fn g_dw(w: f64, x: f64, psi: &[f64; 4], o: usize) -> f64 {
    match o {
        0 => x * psi[1],
        1 => psi[1] + w * x * psi[2],
        _ => 2.0 * w * psi[2] + w * w * x * psi[3],
    }
}

#[inline]
fn g_db(w: f64, psi: &[f64; 4], o: usize) -> f64 {
    match o {
        0 => psi[1],
        1 => w * psi[2],
        _ => w * w * psi[3],
    }
}

impl ModelState {
    pub fn fixed(family: Arc<FamilySet>, coeffs: Vec<f64>, bias: f64) -> Result<Self> {
        if coeffs.len() != family.len() {
            return Err(Error::invalid(format!(
                "fixed-basis model needs {} coefficients, got {}",
                family.len(),
                coeffs.len()
            )));
        }
        let dim = family.dim();
        let wavelet = family.wavelet();
        let mut params = coeffs;
        params.push(bias);
        let state = ModelState { kind: ModelKind::FixedBasis(family), dim, wavelet, params };
        state.check_finite()?;
        Ok(state)
    }

    pub fn adaptive(dim: usize, scales: Vec<f64>, shifts: Vec<f64>, coeffs: Vec<f64>, bias: f64) -> Result<Self> {
        let units = coeffs.len();
        if dim == 0 {
            return Err(Error::invalid("adaptive model needs dim >= 1"));
        }
        if scales.len() != units * dim || shifts.len() != units * dim {
            return Err(Error::invalid(format!(
                "adaptive model with {units} units in {dim}-D needs {} scales and shifts, got {} and {}",
                units * dim,
                scales.len(),
                shifts.len()
            )));
        }
        let mut params = scales;
        params.extend(shifts);
        params.extend(coeffs);
        params.push(bias);
        let state = ModelState {
            kind: ModelKind::Adaptive { units },
            dim,
            wavelet: MotherWavelet::default(),
            params,
        };
        state.check_finite()?;
        Ok(state)
    }

    /// Fixed-basis model with Xavier-uniform coefficients (fan-in `N_fam`,
    /// fan-out 1) and zero bias.
    pub fn xavier_fixed(family: Arc<FamilySet>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = xavier_bound(family.len(), 1);
        let coeffs = (0..family.len()).map(|_| rng.random_range(-bound..=bound)).collect();
        ModelState::fixed(family, coeffs, 0.0).expect("shape is consistent by construction")
    }

    /// Adaptive model with Xavier-uniform parameters.
    ///
    /// Each scale `w_{i,n}` feeds one input into one unit factor, so it is
    /// drawn with fan-in = fan-out = 1; shifts start at zero; coefficients
    /// use fan-in `N_A`, fan-out 1. In the two-stage pipeline the scales and
    /// shifts come from family selection instead.
    pub fn xavier_adaptive(dim: usize, units: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wb = xavier_bound(1, 1);
        let scales = (0..units * dim).map(|_| rng.random_range(-wb..=wb)).collect();
        let cb = xavier_bound(units.max(1), 1);
        let coeffs = (0..units).map(|_| rng.random_range(-cb..=cb)).collect();
        ModelState::adaptive(dim, scales, vec![0.0; units * dim], coeffs, 0.0)
    }

    fn check_finite(&self) -> Result<()> {
        if let Some(p) = self.params.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("parameter {p} is not finite")));
        }
        Ok(())
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self.kind, ModelKind::Adaptive { .. })
    }

    pub fn family(&self) -> Option<&Arc<FamilySet>> {
        match &self.kind {
            ModelKind::FixedBasis(f) => Some(f),
            ModelKind::Adaptive { .. } => None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `N_fam` for fixed-basis models, `N_A` for adaptive ones.
    pub fn n_terms(&self) -> usize {
        match &self.kind {
            ModelKind::FixedBasis(f) => f.len(),
            ModelKind::Adaptive { units } => *units,
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "parameter vector has length {}, model expects {}",
                params.len(),
                self.params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Offset of the shift block (adaptive only; equals the coefficient
    /// offset for fixed-basis models, where the block is empty).
    pub fn shift_offset(&self) -> usize {
        match self.kind {
            ModelKind::FixedBasis(_) => 0,
            ModelKind::Adaptive { units } => units * self.dim,
        }
    }

    pub fn coeff_offset(&self) -> usize {
        match self.kind {
            ModelKind::FixedBasis(_) => 0,
            ModelKind::Adaptive { units } => 2 * units * self.dim,
        }
    }

    pub fn bias_index(&self) -> usize {
        self.params.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        let off = self.coeff_offset();
        &self.params[off..off + self.n_terms()]
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        let off = self.coeff_offset();
        let n = self.n_terms();
        &mut self.params[off..off + n]
    }

    pub fn bias(&self) -> f64 {
        self.params[self.bias_index()]
    }

    pub fn set_bias(&mut self, bias: f64) {
        let b = self.bias_index();
        self.params[b] = bias;
    }

    /// Scales of all units, row-major `N_A×d` (empty for fixed basis).
    pub fn scales(&self) -> &[f64] {
        &self.params[..self.shift_offset()]
    }

    pub fn shifts(&self) -> &[f64] {
        &self.params[self.shift_offset()..self.coeff_offset()]
    }

    fn check_point(&self, x: &[f64]) {
        assert_eq!(x.len(), self.dim, "point dimension {} does not match model dimension {}", x.len(), self.dim);
    }

    /// `û(x)`.
    pub fn forward(&self, x: &[f64]) -> f64 {
        self.derivative(x, Derivative::Value)
    }

    /// A spatial derivative of `û` at `x`.
    pub fn derivative(&self, x: &[f64], d: Derivative) -> f64 {
        self.check_point(x);
        let mut scratch = PointScratch::default();
        self.functional_at(x, &[(d, 1.0)], &mut scratch)
    }

    /// Value and spatial derivatives of term `i` alone (no coefficient).
    pub fn unit_derivatives(&self, i: usize, x: &[f64]) -> Result<TermDerivatives> {
        if i >= self.n_terms() {
            return Err(Error::OutOfRange { index: i, len: self.n_terms() });
        }
        if x.len() != self.dim {
            return Err(Error::invalid("point dimension mismatch"));
        }
        let d = self.dim;
        let orders = |deriv: Derivative| -> f64 { self.term_value_unchecked(i, x, deriv) };
        let value = orders(Derivative::Value);
        let grad_x = (0..d).map(|n| orders(Derivative::D1(n))).collect();
        let hess_diag: Vec<f64> = (0..d).map(|n| orders(Derivative::D2(n))).collect();
        let mut mixed = vec![0.0; d * d];
        for m in 0..d {
            for n in 0..d {
                mixed[m * d + n] = if m == n { hess_diag[m] } else { orders(Derivative::Mixed(m, n)) };
            }
        }
        Ok(TermDerivatives { value, grad_x, hess_diag, mixed })
    }

    /// `D[Ψᵢ](x)` or `D[𝓦ᵢ](x)` without the coefficient.
    pub fn term_value(&self, i: usize, x: &[f64], deriv: Derivative) -> Result<f64> {
        if i >= self.n_terms() {
            return Err(Error::OutOfRange { index: i, len: self.n_terms() });
        }
        deriv.validate(self.dim)?;
        self.check_point(x);
        Ok(self.term_value_unchecked(i, x, deriv))
    }

    fn term_value_unchecked(&self, i: usize, x: &[f64], deriv: Derivative) -> f64 {
        match &self.kind {
            ModelKind::FixedBasis(fam) => fam
                .axis_positions(i)
                .enumerate()
                .map(|(n, p)| fam.axis_terms(n)[p].factor(self.wavelet, x[n], deriv.order_on(n)))
                .product(),
            ModelKind::Adaptive { .. } => {
                let d = self.dim;
                let scales = self.scales();
                let shifts = self.shifts();
                (0..d)
                    .map(|n| {
                        let w = scales[i * d + n];
                        let psi = self.wavelet.derivatives(w * x[n] + shifts[i * d + n]);
                        g_factor(w, &psi, deriv.order_on(n))
                    })
                    .product()
            }
        }
    }

    /// Gradient of `D[û](x)` with respect to every parameter.
    pub fn param_gradient(&self, x: &[f64], target: Derivative) -> Result<Vec<f64>> {
        target.validate(self.dim)?;
        if x.len() != self.dim {
            return Err(Error::invalid("point dimension mismatch"));
        }
        let mut grad = vec![0.0; self.n_params()];
        let mut scratch = PointScratch::default();
        let terms = [(target, 1.0)];
        self.prepare_point(x, &mut scratch);
        self.grad_prepared(x, &terms, &mut scratch, 1.0, &mut grad);
        Ok(grad)
    }

    /// Evaluates the linear functional `Σₜ κₜ Dₜ[û](x)`.
    pub fn functional_at(&self, x: &[f64], terms: &[(Derivative, f64)], scratch: &mut PointScratch) -> f64 {
        self.prepare_point(x, scratch);
        self.eval_prepared(terms, scratch)
    }

    /// Caches the wavelet evaluations at `x` that every functional of this
    /// model at `x` shares.
    pub fn prepare_point(&self, x: &[f64], scratch: &mut PointScratch) {
        match &self.kind {
            ModelKind::Adaptive { units } => {
                let d = self.dim;
                let units = *units;
                scratch.psi.resize(units * d, [0.0; 4]);
                scratch.active.clear();
                let scales = &self.params[..units * d];
                let shifts = &self.params[units * d..2 * units * d];
                'units: for i in 0..units {
                    let base = i * d;
                    for n in 0..d {
                        let a = scales[base + n] * x[n] + shifts[base + n];
                        if a.abs() > SUPPORT_RADIUS {
                            continue 'units;
                        }
                    }
                    for n in 0..d {
                        let a = scales[base + n] * x[n] + shifts[base + n];
                        scratch.psi[base + n] = self.wavelet.derivatives(a);
                    }
                    scratch.active.push(i);
                }
            }
            ModelKind::FixedBasis(fam) => {
                let d = self.dim;
                scratch.tables.resize(d, Vec::new());
                for n in 0..d {
                    let table = &mut scratch.tables[n];
                    table.clear();
                    table.extend(fam.axis_terms(n).iter().map(|t| t.factors(self.wavelet, x[n])));
                }
            }
        }
    }

    fn fill_fixed_factors(&self, deriv: Derivative, scratch: &mut PointScratch) {
        let d = self.dim;
        scratch.factors.resize(d, Vec::new());
        for n in 0..d {
            let o = deriv.order_on(n);
            let out = &mut scratch.factors[n];
            out.clear();
            out.extend(scratch.tables[n].iter().map(|f| f[o]));
        }
    }

    /// Like [`Self::functional_at`] but reuses a [`Self::prepare_point`] cache.
    pub fn eval_prepared(&self, terms: &[(Derivative, f64)], scratch: &mut PointScratch) -> f64 {
        let bias_weight: f64 = terms.iter().filter(|(d, _)| *d == Derivative::Value).map(|(_, k)| k).sum();
        let mut value = bias_weight * self.bias();
        match &self.kind {
            ModelKind::Adaptive { units } => {
                let d = self.dim;
                let units = *units;
                let scales = &self.params[..units * d];
                let coeffs = &self.params[2 * units * d..2 * units * d + units];
                for &i in &scratch.active {
                    let base = i * d;
                    let mut s = 0.0;
                    for &(deriv, kappa) in terms {
                        let mut prod = kappa;
                        for n in 0..d {
                            prod *= g_factor(scales[base + n], &scratch.psi[base + n], deriv.order_on(n));
                        }
                        s += prod;
                    }
                    value += coeffs[i] * s;
                }
            }
            ModelKind::FixedBasis(fam) => {
                let coeffs = &self.params[..fam.len()];
                for &(deriv, kappa) in terms {
                    if kappa == 0.0 {
                        continue;
                    }
                    self.fill_fixed_factors(deriv, scratch);
                    let per_axis: Vec<&[f64]> = scratch.factors.iter().map(Vec::as_slice).collect();
                    value += kappa * tensor_dot(coeffs, &per_axis);
                }
            }
        }
        value
    }

    /// Adds `weight · ∇_θ Σₜ κₜ Dₜ[û](x)` into `grad`, reusing a
    /// [`Self::prepare_point`] cache for the same `x`.
    pub fn grad_prepared(
        &self,
        x: &[f64],
        terms: &[(Derivative, f64)],
        scratch: &mut PointScratch,
        weight: f64,
        grad: &mut [f64],
    ) {
        let bias_weight: f64 = terms.iter().filter(|(d, _)| *d == Derivative::Value).map(|(_, k)| k).sum();
        let bi = self.bias_index();
        grad[bi] += weight * bias_weight;
        match &self.kind {
            ModelKind::Adaptive { units } => {
                let d = self.dim;
                let units = *units;
                let (w_off, b_off, c_off) = (0, units * d, 2 * units * d);
                let scales = &self.params[..units * d];
                let coeffs = &self.params[c_off..c_off + units];
                for &i in &scratch.active {
                    let base = i * d;
                    let mut s = 0.0;
                    for &(deriv, kappa) in terms {
                        let mut prod = kappa;
                        for n in 0..d {
                            prod *= g_factor(scales[base + n], &scratch.psi[base + n], deriv.order_on(n));
                        }
                        s += prod;
                    }
                    grad[c_off + i] += weight * s;
                    let wc = weight * coeffs[i];
                    if wc == 0.0 {
                        continue;
                    }
                    for n in 0..d {
                        let w = scales[base + n];
                        let psi = &scratch.psi[base + n];
                        let mut dw = 0.0;
                        let mut db = 0.0;
                        for &(deriv, kappa) in terms {
                            let mut rest = kappa;
                            for m in 0..d {
                                if m != n {
                                    rest *= g_factor(scales[base + m], &scratch.psi[base + m], deriv.order_on(m));
                                }
                            }
                            let o = deriv.order_on(n);
                            dw += rest * g_dw(w, x[n], psi, o);
                            db += rest * g_db(w, psi, o);
                        }
                        grad[w_off + base + n] += wc * dw;
                        grad[b_off + base + n] += wc * db;
                    }
                }
            }
            ModelKind::FixedBasis(fam) => {
                let n = fam.len();
                for &(deriv, kappa) in terms {
                    let scale = weight * kappa;
                    if scale == 0.0 {
                        continue;
                    }
                    self.fill_fixed_factors(deriv, scratch);
                    let per_axis: Vec<&[f64]> = scratch.factors.iter().map(Vec::as_slice).collect();
                    tensor_accumulate(&per_axis, scale, &mut grad[..n]);
                }
            }
        }
    }

    /// Adaptive models only: per unit, the functional `Σₜ κₜ Dₜ[Wᵢ](x)`
    /// without its coefficient, and the partials of that functional with
    /// respect to the unit's scales and shifts. Units outside the support
    /// radius get zeros.
    pub fn unit_jet(&self, x: &[f64], terms: &[(Derivative, f64)], jet: &mut UnitJet) {
        let ModelKind::Adaptive { units } = self.kind else {
            panic!("unit_jet needs an adaptive model");
        };
        let d = self.dim;
        assert!(d <= MAX_JET_DIM, "unit_jet supports up to {MAX_JET_DIM} axes");
        jet.value.clear();
        jet.value.resize(units, 0.0);
        jet.d_scale.clear();
        jet.d_scale.resize(units * d, 0.0);
        jet.d_shift.clear();
        jet.d_shift.resize(units * d, 0.0);
        let scales = &self.params[..units * d];
        let shifts = &self.params[units * d..2 * units * d];
        match d {
            1 => jet_kernel::<1>(self.wavelet, scales, shifts, x, terms, jet),
            2 => jet_kernel::<2>(self.wavelet, scales, shifts, x, terms, jet),
            _ => jet_kernel::<3>(self.wavelet, scales, shifts, x, terms, jet),
        }
        jet.bias_weight = terms.iter().filter(|(der, _)| *der == Derivative::Value).map(|(_, k)| k).sum();
    }

    /// Functional value from a [`Self::unit_jet`] result.
    pub fn jet_value(&self, jet: &UnitJet) -> f64 {
        let c = self.coeffs();
        jet.bias_weight * self.bias() + jet.value.iter().zip(c).map(|(v, c)| v * c).sum::<f64>()
    }

    /// Adds `weight ·` the parameter gradient encoded by a [`Self::unit_jet`] result.
    pub fn jet_grad(&self, jet: &UnitJet, weight: f64, grad: &mut [f64]) {
        let ModelKind::Adaptive { units } = self.kind else {
            panic!("jet_grad needs an adaptive model");
        };
        let d = self.dim;
        let c_off = 2 * units * d;
        let coeffs = &self.params[c_off..c_off + units];
        let (gw, rest) = grad.split_at_mut(units * d);
        let (gb, rest) = rest.split_at_mut(units * d);
        for i in 0..units {
            let wc = weight * coeffs[i];
            for n in 0..d {
                gw[i * d + n] += wc * jet.d_scale[i * d + n];
                gb[i * d + n] += wc * jet.d_shift[i * d + n];
            }
        }
        for (gc, v) in rest[..units].iter_mut().zip(&jet.value) {
            *gc += weight * v;
        }
        rest[units] += weight * jet.bias_weight;
    }

    /// Writes the checkpoint text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model_version = {CHECKPOINT_VERSION}");
        match &self.kind {
            ModelKind::FixedBasis(fam) => {
                let _ = writeln!(out, "kind = fixed_basis");
                let _ = writeln!(out, "dim = {}", self.dim);
                let _ = writeln!(out, "terms = {}", fam.len());
                let _ = writeln!(out, "layout = coeffs[{}] bias", fam.len());
                for line in fam.manifest().lines() {
                    let _ = writeln!(out, "family: {line}");
                }
            }
            ModelKind::Adaptive { units } => {
                let _ = writeln!(out, "kind = adaptive");
                let _ = writeln!(out, "dim = {}", self.dim);
                let _ = writeln!(out, "terms = {units}");
                let n = units * self.dim;
                let _ = writeln!(out, "layout = scales[{n}] shifts[{n}] coeffs[{units}] bias");
            }
        }
        let _ = writeln!(out, "params = {}", self.params.len());
        let _ = writeln!(out, "---");
        for p in &self.params {
            let _ = writeln!(out, "{p:e}");
        }
        out
    }

    /// Parses [`Self::to_text`] output. Parameters round-trip bit-exactly.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut kind = None;
        let mut dim = None;
        let mut terms = None;
        let mut n_params = None;
        let mut version = None;
        let mut family_lines = String::new();
        for line in lines.by_ref() {
            let line = line.trim();
            if line == "---" {
                break;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("family: ") {
                family_lines.push_str(rest);
                family_lines.push('\n');
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Parse(format!("bad header line `{line}`")))?;
            let parse_usize = |v: &str| v.parse::<usize>().map_err(|e| Error::Parse(format!("`{v}`: {e}")));
            match key {
                "model_version" => version = Some(parse_usize(value)?),
                "kind" => kind = Some(value.to_string()),
                "dim" => dim = Some(parse_usize(value)?),
                "terms" => terms = Some(parse_usize(value)?),
                "params" => n_params = Some(parse_usize(value)?),
                "layout" => {}
                other => return Err(Error::Parse(format!("unknown header key `{other}`"))),
            }
        }
        if version != Some(CHECKPOINT_VERSION as usize) {
            return Err(Error::Parse(format!("unsupported model checkpoint version {version:?}")));
        }
        let params = lines
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.parse::<f64>().map_err(|e| Error::Parse(format!("`{l}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if Some(params.len()) != n_params {
            return Err(Error::Parse(format!("expected {n_params:?} parameters, found {}", params.len())));
        }
        let dim = dim.ok_or_else(|| Error::Parse("missing dim".into()))?;
        let terms = terms.ok_or_else(|| Error::Parse("missing terms".into()))?;
        match kind.as_deref() {
            Some("fixed_basis") => {
                let fam = Arc::new(FamilySet::from_manifest(&family_lines)?);
                if fam.len() != terms || fam.dim() != dim {
                    return Err(Error::Parse("family manifest disagrees with header".into()));
                }
                let bias = *params.last().ok_or_else(|| Error::Parse("no parameters".into()))?;
                ModelState::fixed(fam, params[..params.len() - 1].to_vec(), bias)
            }
            Some("adaptive") => {
                let n = terms * dim;
                if params.len() != 2 * n + terms + 1 {
                    return Err(Error::Parse("adaptive parameter count disagrees with header".into()));
                }
                ModelState::adaptive(
                    dim,
                    params[..n].to_vec(),
                    params[n..2 * n].to_vec(),
                    params[2 * n..2 * n + terms].to_vec(),
                    params[2 * n + terms],
                )
            }
            other => Err(Error::Parse(format!("unknown model kind {other:?}"))),
        }
    }
}

/// `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `out[i] += scale · Πₙ factors[n][posₙ(i)]` over the row-major tensor
/// product of the per-axis factor vectors.
fn tensor_accumulate(factors: &[&[f64]], scale: f64, out: &mut [f64]) {
    match factors {
        [] => {}
        [last] => {
            for (o, f) in out.iter_mut().zip(last.iter()) {
                *o += scale * f;
            }
        }
        [first, rest @ ..] => {
            let stride: usize = rest.iter().map(|f| f.len()).product();
            for (a, &fa) in first.iter().enumerate() {
                let s = scale * fa;
                if s == 0.0 {
                    continue;
                }
                tensor_accumulate(rest, s, &mut out[a * stride..(a + 1) * stride]);
            }
        }
    }
}

/// `Σᵢ coeffs[i]·Πₙ factors[n][posₙ(i)]` over the row-major tensor product.
fn tensor_dot(coeffs: &[f64], factors: &[&[f64]]) -> f64 {
    match factors {
        [] => 0.0,
        [last] => coeffs.iter().zip(last.iter()).map(|(c, f)| c * f).sum(),
        [first, rest @ ..] => {
            let stride: usize = rest.iter().map(|f| f.len()).product();
            let mut acc = 0.0;
            for (a, &fa) in first.iter().enumerate() {
                if fa != 0.0 {
                    acc += fa * tensor_dot(&coeffs[a * stride..(a + 1) * stride], rest);
                }
            }
            acc
        }
    }
}

/// One trainable model per output field, sharing one flat parameter vector
/// (field 0's parameters first).
#[derive(Debug, Clone)]
pub struct FieldModels {
    fields: Vec<ModelState>,
}

impl FieldModels {
    pub fn new(fields: Vec<ModelState>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::invalid("at least one field is required"));
        }
        let dim = fields[0].dim();
        if fields.iter().any(|f| f.dim() != dim) {
            return Err(Error::invalid("all fields must share the input dimension"));
        }
        Ok(FieldModels { fields })
    }

    pub fn single(model: ModelState) -> Self {
        FieldModels { fields: vec![model] }
    }

    pub fn fields(&self) -> &[ModelState] {
        &self.fields
    }

    pub fn fields_mut(&mut self) -> &mut [ModelState] {
        &mut self.fields
    }

    pub fn into_fields(self) -> Vec<ModelState> {
        self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.fields[0].dim()
    }

    pub fn n_params(&self) -> usize {
        self.fields.iter().map(ModelState::n_params).sum()
    }

    /// Start offset of each field inside the flat parameter vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.fields
            .iter()
            .map(|f| {
                let o = off;
                off += f.n_params();
                o
            })
            .collect()
    }

    pub fn params(&self) -> Vec<f64> {
        self.fields.iter().flat_map(|f| f.params().iter().copied()).collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::invalid(format!(
                "parameter vector has length {}, expected {}",
                params.len(),
                self.n_params()
            )));
        }
        let mut off = 0;
        for f in &mut self.fields {
            let n = f.n_params();
            f.set_params(&params[off..off + n])?;
            off += n;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("fields = {}\n", self.fields.len());
        for (i, f) in self.fields.iter().enumerate() {
            let _ = writeln!(out, "=== field {i}");
            out.push_str(&f.to_text());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut sections: Vec<String> = Vec::new();
        let mut declared = None;
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("fields = ") {
                declared = Some(rest.trim().parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?);
            } else if line.starts_with("=== field ") {
                sections.push(String::new());
            } else if let Some(cur) = sections.last_mut() {
                cur.push_str(line);
                cur.push('\n');
            }
        }
        if declared != Some(sections.len()) {
            return Err(Error::Parse(format!("declared {declared:?} fields, found {}", sections.len())));
        }
        FieldModels::new(sections.iter().map(|s| ModelState::from_text(s)).collect::<Result<Vec<_>>>()?)
    }
}
