use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
    pub grad_tolerance: f64,
    pub rel_tolerance: f64,
    pub patience: usize,
    pub max_iterations: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 20,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 50,
            grad_tolerance: 1e-9,
            rel_tolerance: 1e-12,
            patience: 10,
            max_iterations: 2000,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 || self.max_line_search == 0 || self.patience == 0 {
            return Err(Error::Config("L-BFGS memory, line-search cap and patience must be positive".into()));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config(format!("strong Wolfe constants need 0 < c1 < c2 < 1, got {} and {}", self.c1, self.c2)));
        }
        if !(self.grad_tolerance >= 0.0 && self.rel_tolerance >= 0.0) {
            return Err(Error::Config("tolerances must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientNorm,
    RelativeChange,
    MaxIterations,
    LineSearchFailed,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::GradientNorm => "gradient-norm",
            Termination::RelativeChange => "relative-change",
            Termination::MaxIterations => "max-iterations",
            Termination::LineSearchFailed => "line-search-failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub grad_norm: f64,
    pub termination: Termination,
    pub steepest_restarts: usize,
}

/// State of one accepted iteration, passed to the observer.
#[derive(Debug, Clone, Copy)]
pub struct IterationInfo {
    pub iteration: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub step: f64,
}

/// Curvature pairs with the two-loop recursion.
#[derive(Debug, Clone)]
pub struct LbfgsState {
    pub config: LbfgsConfig,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl LbfgsState {
    pub fn new(config: LbfgsConfig) -> Self {
        LbfgsState { config, pairs: VecDeque::with_capacity(config.memory) }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores `(s, y)` when `sᵀy > 1e-12‖s‖‖y‖`; returns whether it was kept.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        if !(sy > 1e-12 * norm(&s) * norm(&y)) {
            return false;
        }
        if self.pairs.len() == self.config.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
        true
    }

    /// `-H g` from the stored pairs, with `H0 = (sᵀy / yᵀy) I` from the newest pair.
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            axpy(-a, y, &mut q);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            axpy(a - b, s, &mut q);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

struct Trial {
    alpha: f64,
    f: f64,
    dphi: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

struct LineSearch<'a, F> {
    f: &'a mut F,
    x0: &'a [f64],
    d: &'a [f64],
    f0: f64,
    dphi0: f64,
    c1: f64,
    c2: f64,
    budget: usize,
    evaluations: usize,
}

impl<F> LineSearch<'_, F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn eval(&mut self, alpha: f64) -> Result<Trial> {
        self.evaluations += 1;
        let x: Vec<f64> = self.x0.iter().zip(self.d).map(|(a, b)| a + alpha * b).collect();
        let (f, g) = (self.f)(&x)?;
        let dphi = if f.is_finite() && g.iter().all(|v| v.is_finite()) { dot(&g, self.d) } else { f64::NAN };
        let f = if dphi.is_finite() { f } else { f64::INFINITY };
        Ok(Trial { alpha, f, dphi, x, g })
    }

    fn armijo_fails(&self, t: &Trial) -> bool {
        !t.f.is_finite() || t.f > self.f0 + self.c1 * t.alpha * self.dphi0
    }

    fn curvature_holds(&self, t: &Trial) -> bool {
        t.dphi.abs() <= -self.c2 * self.dphi0
    }

    /// Bracketing phase; returns a trial satisfying the strong Wolfe conditions.
    fn search(&mut self, alpha_init: f64) -> Result<Option<Trial>> {
        let mut prev = Trial { alpha: 0.0, f: self.f0, dphi: self.dphi0, x: Vec::new(), g: Vec::new() };
        let mut alpha = alpha_init;
        let mut first = true;
        while self.evaluations < self.budget {
            let t = self.eval(alpha)?;
            if self.armijo_fails(&t) || (!first && t.f >= prev.f) {
                return self.zoom(prev, t);
            }
            if self.curvature_holds(&t) {
                return Ok(Some(t));
            }
            if t.dphi >= 0.0 {
                return self.zoom(t, prev);
            }
            first = false;
            alpha = 2.0 * t.alpha;
            prev = t;
        }
        Ok(None)
    }

    fn zoom(&mut self, mut lo: Trial, mut hi: Trial) -> Result<Option<Trial>> {
        while self.evaluations < self.budget {
            let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
            let width = b - a;
            if width <= f64::EPSILON * b.max(1e-300) {
                return Ok(None);
            }
            let mut alpha = cubic_min(&lo, &hi).unwrap_or(0.5 * (a + b));
            if !(alpha > a + 0.1 * width && alpha < b - 0.1 * width) {
                alpha = 0.5 * (a + b);
            }
            let t = self.eval(alpha)?;
            if self.armijo_fails(&t) || t.f >= lo.f {
                hi = t;
            } else {
                if self.curvature_holds(&t) {
                    return Ok(Some(t));
                }
                if t.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = t;
            }
        }
        Ok(None)
    }
}

/// Minimiser of the cubic interpolating values and slopes at both ends.
fn cubic_min(p: &Trial, q: &Trial) -> Option<f64> {
    if !(p.f.is_finite() && q.f.is_finite() && p.dphi.is_finite() && q.dphi.is_finite()) {
        return None;
    }
    let d1 = p.dphi + q.dphi - 3.0 * (p.f - q.f) / (p.alpha - q.alpha);
    let disc = d1 * d1 - p.dphi * q.dphi;
    if disc < 0.0 {
        return None;
    }
    let d2 = (q.alpha - p.alpha).signum() * disc.sqrt();
    let denom = q.dphi - p.dphi + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let a = q.alpha - (q.alpha - p.alpha) * (q.dphi + d2 - d1) / denom;
    a.is_finite().then_some(a)
}

/// Minimises `f` from `x0`. `f` returns the loss and its gradient; an `Err`
/// aborts the run, a non-finite loss inside the line search only rejects the
/// trial step.
pub fn lbfgs_minimize<F>(
    config: LbfgsConfig,
    mut f: F,
    x0: &[f64],
    mut observer: impl FnMut(&IterationInfo),
) -> Result<(Vec<f64>, LbfgsReport)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    config.validate()?;
    let mut state = LbfgsState::new(config);
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { iteration: 0 });
    }
    let initial_loss = fx;
    let mut evaluations = 1;
    let mut history = vec![fx];
    let mut restarts = 0;
    let mut iterations = 0;
    let termination = loop {
        let gn = norm(&g);
        if gn < config.grad_tolerance {
            break Termination::GradientNorm;
        }
        if history.len() > config.patience {
            let old = history[history.len() - 1 - config.patience];
            if (old - fx).abs() <= config.rel_tolerance * fx.abs().max(f64::MIN_POSITIVE) {
                break Termination::RelativeChange;
            }
        }
        if iterations >= config.max_iterations {
            break Termination::MaxIterations;
        }
        let mut d = if state.is_empty() { Vec::new() } else { state.direction(&g) };
        let mut steepest = state.is_empty() || !(dot(&d, &g) < 0.0);
        if steepest {
            d = g.iter().map(|v| -v / gn).collect();
        }
        let accepted = loop {
            let mut ls = LineSearch {
                f: &mut f,
                x0: &x,
                d: &d,
                f0: fx,
                dphi0: dot(&g, &d),
                c1: config.c1,
                c2: config.c2,
                budget: config.max_line_search,
                evaluations: 0,
            };
            let result = ls.search(1.0)?;
            evaluations += ls.evaluations;
            match result {
                Some(t) => break Some(t),
                None if !steepest => {
                    restarts += 1;
                    steepest = true;
                    state.clear();
                    d = g.iter().map(|v| -v / gn).collect();
                }
                None => break None,
            }
        };
        let Some(t) = accepted else {
            break Termination::LineSearchFailed;
        };
        let s: Vec<f64> = t.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = t.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        state.push(s, y);
        let step = t.alpha * norm(&d);
        x = t.x;
        g = t.g;
        fx = t.f;
        iterations += 1;
        history.push(fx);
        observer(&IterationInfo { iteration: iterations, loss: fx, grad_norm: norm(&g), step });
    };
    let report = LbfgsReport {
        iterations,
        evaluations,
        initial_loss,
        final_loss: fx,
        grad_norm: norm(&g),
        termination,
        steepest_restarts: restarts,
    };
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((0.5 * dot(x, x), x.to_vec()))
    }

    pub(crate) fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn quadratic_in_two_iterations() {
        let (x, rep) = lbfgs_minimize(LbfgsConfig::default(), quadratic, &[3.0, 4.0], |_| {}).unwrap();
        assert!(norm(&x) < 1e-10, "{x:?}");
        assert!(rep.iterations <= 2, "{rep:?}");
    }

    #[test]
    fn rosenbrock_converges() {
        let mut losses = Vec::new();
        let (x, rep) = lbfgs_minimize(LbfgsConfig::default(), rosenbrock, &[-1.2, 1.0], |i| losses.push(i.loss)).unwrap();
        assert!(rep.final_loss < 1e-8, "{rep:?}");
        assert!(rep.iterations <= 200, "{rep:?}");
        assert!((x[0] - 1.0).abs() < 1e-3 && (x[1] - 1.0).abs() < 1e-3);
        assert!(losses.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_gradient_start_returns_immediately() {
        let (x, rep) = lbfgs_minimize(LbfgsConfig::default(), quadratic, &[0.0, 0.0], |_| {}).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.termination, Termination::GradientNorm);
        assert_eq!(x, vec![0.0, 0.0]);
    }

    #[test]
    fn non_finite_trials_are_rejected_not_fatal() {
        // Loss is infinite outside |x| < 2, forcing the line search to back off.
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            if x[0].abs() >= 2.0 {
                Ok((f64::NAN, vec![f64::NAN]))
            } else {
                Ok(((x[0] - 1.5).powi(2), vec![2.0 * (x[0] - 1.5)]))
            }
        };
        let (x, rep) = lbfgs_minimize(LbfgsConfig::default(), f, &[-1.0], |_| {}).unwrap();
        assert!((x[0] - 1.5).abs() < 1e-6, "{x:?} {rep:?}");
    }

    #[test]
    fn curvature_filter_drops_bad_pairs() {
        let mut st = LbfgsState::new(LbfgsConfig { memory: 2, ..Default::default() });
        assert!(!st.push(vec![1.0, 0.0], vec![-1.0, 0.0]));
        assert!(!st.push(vec![1.0, 0.0], vec![0.0, 1.0]));
        assert!(st.push(vec![1.0, 0.0], vec![2.0, 0.0]));
        assert!(st.push(vec![0.0, 1.0], vec![0.0, 3.0]));
        assert!(st.push(vec![1.0, 1.0], vec![1.0, 1.0]));
        assert_eq!(st.len(), 2);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let cfg = LbfgsConfig { max_iterations: 3, ..Default::default() };
        let (_, rep) = lbfgs_minimize(cfg, rosenbrock, &[-1.2, 1.0], |_| {}).unwrap();
        assert_eq!(rep.iterations, 3);
        assert_eq!(rep.termination, Termination::MaxIterations);
    }
}
