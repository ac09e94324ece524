//! Oracle suite: analytic code paths against independent references
//! (finite differences, closed forms, brute force, known optima).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::family::{AxisSpec, FamilySet};
use crate::fdtd::{convergence_study, mirror_defect, FdtdConfig, YeeGrid};
use crate::loss::{combine_terms, LossAssembler, LossMode, LossWeights};
use crate::model::{Derivative, FieldModels, ModelState};
use crate::ntk::{assemble_kernel, constancy_check, decompose_kernel, gp_limit_check, jacobi_eigen, GpCheckConfig, KernelTarget, DEFAULT_MEMORY_BUDGET};
use crate::optimize::{lbfgs_minimize, AdamConfig, AdamState, LbfgsConfig};
use crate::problems::{
    make_flow, make_heat_conduction, make_maxwell_tez, make_poisson_localized, sample_points, FlowBoundary, PdeProblem, Points,
    PulseSource, Role,
};
use crate::select::{select_active, similarity_scores, RoleScores, Scores, SelectionConfig};
use crate::wavelet::eval_psi;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub limit: f64,
}

impl CheckOutcome {
    fn below(name: &str, cases: usize, worst: f64, limit: f64) -> Self {
        CheckOutcome { name: name.into(), passed: worst < limit, cases, worst, limit }
    }

    fn flag(name: &str, cases: usize, failures: usize) -> Self {
        CheckOutcome { name: name.into(), passed: failures == 0, cases, worst: failures as f64, limit: 1.0 }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<44} cases {:>5}  worst {:.3e}  limit {:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.worst,
            self.limit
        )
    }
}

/// Richardson-extrapolated central difference, error `O(h⁴)`.
pub fn richardson(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
    let d2 = (f(x + h / 2.0) - f(x - h / 2.0)) / h;
    (4.0 * d2 - d1) / 3.0
}

/// `|a − b| / max(|a|, floor)`.
fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(floor).max(f64::MIN_POSITIVE)
}

fn worst_vec(exact: &[f64], fd: &[f64], floor_frac: f64) -> f64 {
    let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    exact.iter().zip(fd).map(|(e, f)| rel(*e, *f, floor_frac * scale)).fold(0.0, f64::max)
}

const DERIV_TOL: f64 = 1e-5;

/// ψ⁽ⁿ⁾ for n = 1, 2, 3 against differences of ψ⁽ⁿ⁻¹⁾.
pub fn wavelet_derivatives(cases: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let x = rng.random_range(-6.0..6.0);
        for n in 1..=3u8 {
            let exact = eval_psi(x, n).expect("order within range");
            let fd = richardson(|s| eval_psi(s, n - 1).expect("order within range"), x, 1e-3);
            worst = worst.max(rel(exact, fd, 1e-6));
        }
    }
    CheckOutcome::below("wavelet derivatives vs FD", cases, worst, DERIV_TOL)
}

/// Axis partials and mixed partials of tensor-product basis functions.
pub fn basis_partials(cases: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fam = FamilySet::build(vec![
        AxisSpec::new(-1.0, 1.0, -1..=3, 0.3).expect("valid axis"),
        AxisSpec::new(0.0, 1.0, -1..=3, 0.3).expect("valid axis"),
    ])
    .expect("valid family");
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let i = rng.random_range(0..fam.len());
        let idx = fam.index(i).expect("index in range");
        let x = [rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0)];
        let axis = rng.random_range(0..2usize);
        let j = idx.j[axis] as f64;
        let amp = 2f64.powf((idx.j[0] + idx.j[1]) as f64 / 2.0);
        for order in 1..=2u8 {
            let exact = fam.eval_basis_partial(i, &x, axis, order).expect("valid partial");
            let f = |s: f64| {
                let mut y = x;
                y[axis] = s;
                if order == 1 { fam.eval_basis(i, &y) } else { fam.eval_basis_partial(i, &y, axis, 1) }.expect("valid partial")
            };
            let fd = richardson(f, x[axis], 1e-3 * 2f64.powf(-j.max(0.0)));
            worst = worst.max(rel(exact, fd, 1e-6 * amp * 2f64.powf(j * order as f64)));
        }
        let mixed = fam.eval_basis_mixed(i, &x, 0, 1).expect("valid mixed");
        let fd = richardson(|s| fam.eval_basis_partial(i, &[x[0], s], 0, 1).expect("valid partial"), x[1], 1e-3 * 2f64.powf(-(idx.j[1] as f64).max(0.0)));
        worst = worst.max(rel(mixed, fd, 1e-6 * amp * 2f64.powf((idx.j[0] + idx.j[1]) as f64)));
    }
    CheckOutcome::below("basis partials vs FD", cases, worst, DERIV_TOL)
}

fn random_adaptive(rng: &mut ChaCha8Rng, d: usize, units: usize) -> ModelState {
    let scales = (0..units * d).map(|_| rng.random_range(0.5..4.0)).collect();
    let shifts = (0..units * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let coeffs = (0..units).map(|_| rng.random_range(-1.0..1.0)).collect();
    ModelState::adaptive(d, scales, shifts, coeffs, rng.random_range(-0.5..0.5)).expect("valid adaptive model")
}

fn small_fixed(rng: &mut ChaCha8Rng, domain: &[(f64, f64)]) -> ModelState {
    let fam = Arc::new(
        FamilySet::build(domain.iter().map(|&(a, b)| AxisSpec::new(a, b, 0..=1, 0.1).expect("valid axis")).collect())
            .expect("valid family"),
    );
    ModelState::xavier_fixed(fam, rng.random())
}

/// Parameter gradients of value, first and second derivative targets.
pub fn parameter_gradients(cases: usize, seed: u64, adaptive: bool) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let d = 1 + case % 3;
        let domain = vec![(-1.0, 1.0); d];
        let m = if adaptive { random_adaptive(&mut rng, d, 3) } else { small_fixed(&mut rng, &domain) };
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let axis = rng.random_range(0..d);
        let target = [Derivative::Value, Derivative::D1(axis), Derivative::D2(axis)][case % 3];
        let exact = m.param_gradient(&x, target).expect("valid target");
        let base = m.params().to_vec();
        let mut probe = m.clone();
        let fd: Vec<f64> = (0..base.len())
            .map(|p| {
                let mut at = |v: f64| {
                    let mut q = base.clone();
                    q[p] = v;
                    probe.set_params(&q).expect("same length");
                    probe.derivative(&x, target)
                };
                let h = 1e-3 * base[p].abs().max(1.0);
                let d1 = (at(base[p] + h) - at(base[p] - h)) / (2.0 * h);
                let d2 = (at(base[p] + h / 2.0) - at(base[p] - h / 2.0)) / h;
                (4.0 * d2 - d1) / 3.0
            })
            .collect();
        worst = worst.max(worst_vec(&exact, &fd, 1e-6));
    }
    let name = if adaptive { "adaptive parameter gradients vs FD" } else { "fixed-basis parameter gradients vs FD" };
    CheckOutcome::below(name, cases, worst, DERIV_TOL)
}

fn benchmark_problems() -> Vec<PdeProblem> {
    vec![
        make_heat_conduction(0.12).expect("valid problem"),
        make_poisson_localized(0.05).expect("valid problem"),
        make_flow(100.0, 0.05, FlowBoundary::Inflow).expect("valid problem"),
        make_maxwell_tez(PulseSource { sigma: 0.1, ..PulseSource::default() }).expect("valid problem"),
    ]
}

/// Copy of `problem` with every right-hand side set to zero, so its
/// residuals are the bare operator values.
fn homogeneous(problem: &PdeProblem) -> PdeProblem {
    let mut conditions = problem.conditions.clone();
    for c in &mut conditions {
        for eq in &mut c.equations {
            eq.rhs = Arc::new(|_: &[f64]| 0.0);
        }
    }
    PdeProblem::new(
        problem.name.clone(),
        problem.axis_names.clone(),
        problem.field_names.clone(),
        problem.domain.clone(),
        conditions,
        None,
    )
    .expect("same structure as a valid problem")
}

/// Loss gradient from finite differences of the operator values: each
/// Jacobian column `∂(𝓟û)/∂θᵢ` is differenced with the right-hand side
/// removed (no cancellation against large sources), then chained through
/// the mean-square terms and the weighted or exponent combination.
fn loss_fd(asm: &LossAssembler, points: &crate::problems::PointSet, models: &FieldModels, weights: LossWeights, mode: LossMode) -> Vec<f64> {
    let problem = asm.problem();
    let bare_problem = homogeneous(problem);
    let bare = LossAssembler::new(&bare_problem, points, models).expect("valid assembler");
    let nc = problem.conditions.len();
    let res: Vec<Vec<f64>> = (0..nc).map(|c| asm.residuals(models, c)).collect();
    let terms: Vec<f64> = (0..nc).map(|c| asm.condition_term(models, c, false).value).collect();
    let outer: Vec<f64> = (0..nc)
        .map(|c| {
            let ss: f64 = res[c].iter().map(|v| v * v).sum();
            let norm = if ss > 0.0 { terms[c] / ss } else { 1.0 / res[c].len() as f64 };
            let role = problem.conditions[c].role;
            let factor = match mode {
                LossMode::Weighted => weights.for_role(role),
                LossMode::Exponent { p, q } => {
                    let a = 1.0 / if role == Role::Residual { p } else { q };
                    a * terms[c].powf(a - 1.0)
                }
            };
            2.0 * norm * factor
        })
        .collect();
    let base = models.params();
    let mut probe = models.clone();
    let mut values_at = |i: usize, v: f64| -> Vec<Vec<f64>> {
        let mut q = base.clone();
        q[i] = v;
        probe.set_params(&q).expect("same length");
        (0..nc).map(|c| bare.residuals(&probe, c)).collect()
    };
    (0..base.len())
        .map(|i| {
            let h = 1e-3 * base[i].abs().max(1.0);
            let (up, down) = (values_at(i, base[i] + h), values_at(i, base[i] - h));
            let (up2, down2) = (values_at(i, base[i] + h / 2.0), values_at(i, base[i] - h / 2.0));
            (0..nc)
                .map(|c| {
                    let col = (0..res[c].len()).map(|p| {
                        let d1 = (up[c][p] - down[c][p]) / (2.0 * h);
                        let d2 = (up2[c][p] - down2[c][p]) / h;
                        (4.0 * d2 - d1) / 3.0
                    });
                    outer[c] * res[c].iter().zip(col).map(|(r, j)| r * j).sum::<f64>()
                })
                .sum()
        })
        .collect()
}

/// Loss gradients over every parameter, one model kind and loss mode per case.
pub fn loss_gradients(cases: usize, seed: u64, mode: LossMode) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problems = benchmark_problems();
    let weights = LossWeights { residual: 0.01, supervised: 10.0 };
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let p = &problems[case % problems.len()];
        let counts = vec![6; p.conditions.len()];
        let pts = sample_points(p, &counts, &vec![2; p.dim()], rng.random()).expect("valid counts");
        let models = FieldModels::new(
            (0..p.n_fields())
                .map(|_| if case % 2 == 0 { small_fixed(&mut rng, &p.domain) } else { random_adaptive(&mut rng, p.dim(), 2) })
                .collect(),
        )
        .expect("matching dims");
        let asm = LossAssembler::new(p, &pts, &models).expect("valid assembler");
        let (_, g) = asm.evaluate(&models, weights, mode, true).expect("non-degenerate loss");
        let g = g.expect("gradient requested");
        let fd = loss_fd(&asm, &pts, &models, weights, mode);
        worst = worst.max(worst_vec(&g, &fd, 1e-6));
    }
    let name = match mode {
        LossMode::Weighted => "loss gradients vs FD (weighted)",
        LossMode::Exponent { .. } => "loss gradients vs FD (exponent)",
    };
    CheckOutcome::below(name, cases, worst, DERIV_TOL)
}

/// Every derivative oracle with `cases` randomized cases each.
pub fn derivative_oracles(cases: usize, seed: u64) -> Vec<CheckOutcome> {
    vec![
        wavelet_derivatives(cases, seed),
        basis_partials(cases, seed + 1),
        parameter_gradients(cases, seed + 2, false),
        parameter_gradients(cases, seed + 3, true),
        loss_gradients(cases, seed + 4, LossMode::Weighted),
        loss_gradients(cases, seed + 5, LossMode::Exponent { p: 3.0, q: 2.0 }),
    ]
}

/// Closed-form solutions substituted into every assembled condition.
pub fn exact_solution_residuals(points: usize, seed: u64) -> Vec<CheckOutcome> {
    let problems = [
        make_heat_conduction(0.1),
        make_heat_conduction(0.12),
        make_poisson_localized(0.02),
        make_poisson_localized(0.05),
        make_flow(100.0, 0.05, FlowBoundary::Inflow),
    ];
    problems
        .into_iter()
        .map(|p| {
            let p = p.expect("valid problem");
            let pts = sample_points(&p, &vec![points; p.conditions.len()], &vec![2; p.dim()], seed).expect("valid counts");
            let mut worst: f64 = 0.0;
            let mut cases = 0;
            for (cond, cp) in p.conditions.iter().zip(&pts.conditions) {
                for eq in &cond.equations {
                    for x in cp.points.iter() {
                        let (lhs, rhs) = p.exact_equation_residual(eq, x).expect("exact derivatives available");
                        let scale: f64 = eq
                            .terms
                            .iter()
                            .map(|t| (t.coeff.at(x) * p.exact_derivative(t.field, t.derivative, x).unwrap_or(0.0)).abs())
                            .sum::<f64>()
                            + rhs.abs();
                        worst = worst.max((lhs - rhs).abs() / scale.max(1e-300));
                        cases += 1;
                    }
                }
            }
            CheckOutcome::below(&format!("exact solution residual ({})", p.name), cases, worst, 1e-8)
        })
        .collect()
}

fn selection_cfg(top: f64) -> SelectionConfig {
    SelectionConfig {
        pde: Some(crate::select::Threshold::less(0.2)),
        initial: None,
        boundary: None,
        top_percent: top,
        zero_rhs_tolerance: 1e-12,
        rescale_coefficients: true,
    }
}

/// Score bounds, normalization, scale invariance and κ-monotonicity.
pub fn selection_properties(trials: usize, seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut bound_fail, mut inv_worst, mut mono_fail) = (0, 0.0f64, 0);
    for _ in 0..trials {
        let n_fam = rng.random_range(2..12);
        let len = rng.random_range(1..20);
        let rows: Vec<Vec<f64>> = (0..n_fam).map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let rhs: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
        let base = similarity_scores(&rows, &rhs, 1e-12).expect("non-zero responses");
        let max = base.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if base.values.iter().any(|v| !(-1.0..=1.0).contains(v)) || max != 1.0 {
            bound_fail += 1;
        }
        let alpha = 10f64.powf(rng.random_range(-3.0..3.0));
        let srhs: Vec<f64> = rhs.iter().map(|v| v * alpha).collect();
        let srows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * alpha).collect()).collect();
        let a = similarity_scores(&rows, &srhs, 1e-12).expect("non-zero responses");
        let b = similarity_scores(&srows, &rhs, 1e-12).expect("non-zero responses");
        for i in 0..n_fam {
            inv_worst = inv_worst.max((a.values[i] - base.values[i]).abs()).max((b.values[i] - base.values[i]).abs());
        }
        let coeffs: Vec<f64> = (0..n_fam).map(|_| rng.random_range(-1.0..1.0)).collect();
        let groups = [RoleScores { role: Role::Residual, scores: Scores { values: base.values.clone(), fallback: false } }];
        let k1 = rng.random_range(1.0..100.0);
        let k2 = rng.random_range(k1..=100.0);
        let lo = select_active(&groups, &coeffs, &selection_cfg(k1)).expect("non-empty");
        let hi = select_active(&groups, &coeffs, &selection_cfg(k2)).expect("non-empty");
        if !lo.iter().all(|i| hi.contains(i)) {
            mono_fail += 1;
        }
    }
    vec![
        CheckOutcome::flag("scores in [-1, 1] with max |score| = 1", trials, bound_fail),
        CheckOutcome::below("scores invariant under rhs/coefficient scaling", trials, inv_worst, 1e-12),
        CheckOutcome::flag("active set monotone in kappa", trials, mono_fail),
    ]
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, domain: &[(f64, f64)]) -> Points {
    let data = (0..n).flat_map(|_| domain.iter().map(|&(a, b)| rng.random_range(a..b)).collect::<Vec<_>>()).collect();
    Points::new(domain.len(), data).expect("consistent dims")
}

/// Kernel symmetry and PSD, additivity of the parameter-group split,
/// constancy for the fixed basis and the eigensolver residual.
pub fn ntk_identities(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = make_heat_conduction(0.5)?;
    let pts = sample_points(&p, &[30, 10, 10], &[2, 2], seed)?;
    let adaptive = FieldModels::single(random_adaptive(&mut rng, 2, 8));
    let k = assemble_kernel(&p, &adaptive, &pts, KernelTarget::OperatorBlocks, DEFAULT_MEMORY_BUDGET)?;
    let eig = jacobi_eigen(&k.data, k.n)?;
    let kmax = k.max_abs();
    let min_eig = eig.values.first().copied().unwrap_or(0.0);
    let sym_psd = k.symmetry_error().max((-min_eig / kmax).max(0.0));

    let probe = random_points(&mut rng, 40, &p.domain);
    let dec = decompose_kernel(&adaptive.fields()[0], &probe)?;

    let fam = Arc::new(FamilySet::build(vec![AxisSpec::new(-1.0, 1.0, 0..=2, 0.2)?, AxisSpec::new(0.0, 1.0, 0..=2, 0.2)?])?);
    let mut fixed = FieldModels::single(ModelState::xavier_fixed(fam, seed));
    let asm = LossAssembler::new(&p, &pts, &fixed)?;
    let mut adam = AdamState::new(AdamConfig { learning_rate: 1e-2, ..AdamConfig::default() }, fixed.n_params());
    let mut checkpoints = vec![fixed.fields()[0].clone()];
    for step in 0..30 {
        let (_, g) = asm.evaluate(&fixed, LossWeights::default(), LossMode::Weighted, true)?;
        let mut params = fixed.params();
        adam.step(&mut params, &g.expect("gradient requested"))?;
        fixed.set_params(&params)?;
        if step % 10 == 9 {
            checkpoints.push(fixed.fields()[0].clone());
        }
    }
    let drift = constancy_check(&checkpoints, &probe)?;

    Ok(vec![
        CheckOutcome::below("kernel symmetric and PSD", 1, sym_psd, 1e-12),
        CheckOutcome::below("kernel additivity (c + scale/shift + bias)", 1, dec.additivity_error(), 1e-12),
        CheckOutcome::below("fixed-basis kernel drift over training", checkpoints.len(), drift, 1e-12),
        CheckOutcome::below("eigensolver residual / max|K|", 1, eig.residual(&k.data) / kmax, 1e-10),
    ])
}

/// Configuration of the Monte Carlo GP check used by the suite.
pub fn gp_check_config() -> GpCheckConfig {
    GpCheckConfig {
        dim: 2,
        sigma_c: 1.0,
        sigma_theta: 1.0,
        widths: vec![1, 64, 1024],
        probes: vec![-0.8, 0.2, -0.3, -0.5, 0.0, 0.0, 0.4, 0.7, 0.9, -0.9],
        trials: 2000,
        kernel_samples: 200_000,
        scaled: true,
        seed: 2024,
    }
}

/// Zero means, shrinking covariance discrepancy and Gaussian moments.
pub fn gp_limit(cfg: &GpCheckConfig) -> Result<Vec<CheckOutcome>> {
    let r = gp_limit_check(cfg)?;
    let mean_z = r
        .widths
        .iter()
        .flat_map(|w| w.mean.iter().zip(&w.std_error).map(|(m, s)| (m / s).abs()))
        .fold(0.0, f64::max);
    let at = |n: usize| r.widths.iter().find(|w| w.width == n);
    let (mid, wide) = (at(64), at(1024));
    let disc = match (mid, wide) {
        (Some(m), Some(w)) => w.covariance_discrepancy / m.covariance_discrepancy,
        _ => f64::INFINITY,
    };
    let (skew, kurt) = wide.map_or((f64::INFINITY, f64::INFINITY), |w| {
        (w.skewness.iter().fold(0.0f64, |m, v| m.max(v.abs())), w.excess_kurtosis.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    });
    let n = cfg.trials;
    Ok(vec![
        CheckOutcome::below("GP means within 4 standard errors", n, mean_z, 4.0),
        CheckOutcome::below("GP discrepancy ratio N=1024 vs N=64", n, disc, 1.0),
        CheckOutcome::below("GP |skewness| at N=1024", n, skew, 0.15),
        CheckOutcome::below("GP |excess kurtosis| at N=1024", n, kurt, 0.3),
    ])
}

/// Exponent-compressed objective: contribution, identity and compression.
pub fn exponent_transform(samples: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let roles = [Role::Residual, Role::Boundary];
    let w = LossWeights::default();
    let (total, _, _) = combine_terms(&[1e9, 0.0], &roles, w, LossMode::Exponent { p: 3.0, q: 1.0 })?;
    let contribution = (total - 1e3).abs() / 1e3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut ident, mut compress_fail) = (0.0f64, 0);
    for _ in 0..samples {
        let b = 10f64.powf(rng.random_range(0.0..6.0));
        let a = b * 10f64.powf(rng.random_range(0.0..6.0));
        let q = rng.random_range(1.0..4.0);
        let p = q + rng.random_range(0.0..4.0);
        let (e, _, _) = combine_terms(&[a, b], &roles, w, LossMode::Exponent { p: 1.0, q: 1.0 })?;
        let (l, _, _) = combine_terms(&[a, b], &roles, w, LossMode::Weighted)?;
        ident = ident.max((e - l).abs() / l);
        if a.powf(1.0 / p) / b.powf(1.0 / q) > a / b * (1.0 + 1e-12) {
            compress_fail += 1;
        }
    }
    Ok(vec![
        CheckOutcome::below("(1e9)^(1/3) contributes 1e3", 1, contribution, 1e-12),
        CheckOutcome::below("p = q = 1 equals the weighted sum", samples, ident, 1e-15),
        CheckOutcome::flag("a^(1/p)/b^(1/q) <= a/b", samples, compress_fail),
    ])
}

/// Zero-source invariance, PEC exactness, self-convergence and mirror symmetry.
pub fn fdtd_properties() -> Result<Vec<CheckOutcome>> {
    let zero = |_: f64, _: f64, _: f64| 0.0;
    let mut g = YeeGrid::new(32, 32, 0.02)?;
    for _ in 0..200 {
        g.step(&zero)?;
    }
    let nonzero = g.ex.iter().chain(&g.ey).chain(&g.hz).filter(|&&v| v != 0.0).count();

    let src = PulseSource { sigma: 0.05, center: [0.35, 0.6], ..PulseSource::default() };
    let f = |x: f64, y: f64, t: f64| src.eval(x, y, t);
    let mut g = YeeGrid::new(40, 40, 0.01)?;
    let mut pec = 0usize;
    for _ in 0..50 {
        g.step(&f)?;
        for i in 0..g.nx {
            pec += usize::from(g.ex[i * (g.ny + 1)] != 0.0) + usize::from(g.ex[i * (g.ny + 1) + g.ny] != 0.0);
        }
        for j in 0..g.ny {
            pec += usize::from(g.ey[j] != 0.0) + usize::from(g.ey[g.nx * g.ny + j] != 0.0);
        }
    }

    let smooth = PulseSource { sigma: 0.08, ..PulseSource::default() };
    let q: Vec<f64> = (1..10).flat_map(|i| (1..10).flat_map(move |j| [i as f64 / 10.0, j as f64 / 10.0, 0.25])).collect();
    let coarse = FdtdConfig { dx: 0.05, dy: 0.05, dt: 0.02, final_time: 0.25 };
    let conv = convergence_study(&coarse, &smooth, &Points::new(3, q)?)?;
    let order_gap = if (1.7..=2.2).contains(&conv.order) { 0.0 } else { 1.0 + (conv.order - 1.95).abs() };

    let central = PulseSource { sigma: 0.05, ..PulseSource::default() };
    let cf = |x: f64, y: f64, t: f64| central.eval(x, y, t);
    let mut g = YeeGrid::new(50, 50, 0.01)?;
    for _ in 0..50 {
        g.step(&cf)?;
    }
    Ok(vec![
        CheckOutcome::flag("FDTD zero source stays exactly zero", 200, nonzero),
        CheckOutcome::flag("FDTD PEC tangential E exactly zero", 50, pec),
        CheckOutcome {
            name: format!("FDTD self-convergence order {:.3} in [1.7, 2.2]", conv.order),
            passed: order_gap == 0.0,
            cases: 3,
            worst: conv.order,
            limit: 2.2,
        },
        CheckOutcome::below("FDTD central-source mirror symmetry", 50, mirror_defect(&g), 1e-12),
    ])
}

/// L-BFGS on a quadratic and Rosenbrock; Adam fixed point and determinism.
pub fn optimizer_oracles() -> Result<Vec<CheckOutcome>> {
    let quad = |x: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((0.5 * (x[0] * x[0] + x[1] * x[1]), x.to_vec())) };
    let (xq, rq) = lbfgs_minimize(LbfgsConfig::default(), quad, &[3.0, 4.0], |_| {})?;
    let qnorm = xq.iter().map(|v| v * v).sum::<f64>().sqrt();

    let rosen = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        Ok((
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2),
            vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)],
        ))
    };
    let (_, rr) = lbfgs_minimize(LbfgsConfig::default(), rosen, &[-1.2, 1.0], |_| {})?;

    let mut adam = AdamState::new(AdamConfig::default(), 3);
    let mut p = vec![0.5, -1.0, 2.0];
    for _ in 0..100 {
        adam.step(&mut p, &[0.0; 3])?;
    }
    let moved = (p[0] - 0.5).abs() + (p[1] + 1.0).abs() + (p[2] - 2.0).abs();
    let run = || -> Result<Vec<f64>> {
        let mut a = AdamState::new(AdamConfig { learning_rate: 0.05, ..AdamConfig::default() }, 2);
        let mut x = vec![1.0, 3.0];
        for _ in 0..500 {
            let g = [2.0 * x[0], 6.0 * (x[1] - 1.0)];
            a.step(&mut x, &g)?;
        }
        Ok(x)
    };
    let (r1, r2) = (run()?, run()?);
    let differs = r1.iter().zip(&r2).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
    Ok(vec![
        CheckOutcome {
            name: format!("L-BFGS quadratic ({} iterations)", rq.iterations),
            passed: qnorm < 1e-10 && rq.iterations <= 2,
            cases: 1,
            worst: qnorm,
            limit: 1e-10,
        },
        CheckOutcome {
            name: format!("L-BFGS Rosenbrock ({} iterations)", rr.iterations),
            passed: rr.final_loss < 1e-8 && rr.iterations <= 200,
            cases: 1,
            worst: rr.final_loss,
            limit: 1e-8,
        },
        CheckOutcome::flag("Adam zero-gradient fixed point", 100, usize::from(moved != 0.0)),
        CheckOutcome::flag("Adam bitwise determinism", 500, differs),
    ])
}

pub const CHECK_GROUPS: [&str; 8] = ["derivatives", "exact", "selection", "ntk", "gp", "exponent", "fdtd", "optimizer"];

/// One group of the oracle suite; `cases` sets the randomized case count
/// of the derivative group.
pub fn run_group(group: &str, cases: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    match group {
        "derivatives" => Ok(derivative_oracles(cases, seed)),
        "exact" => Ok(exact_solution_residuals(1000, seed)),
        "selection" => Ok(selection_properties(200, seed)),
        "ntk" => ntk_identities(seed),
        "gp" => gp_limit(&gp_check_config()),
        "exponent" => exponent_transform(1000, seed),
        "fdtd" => fdtd_properties(),
        "optimizer" => optimizer_oracles(),
        _ => Err(crate::error::Error::Config(format!("unknown check group `{group}` (known: {})", CHECK_GROUPS.join(", ")))),
    }
}

/// Every group of the oracle suite.
pub fn oracle_suite(cases: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for g in CHECK_GROUPS {
        out.extend(run_group(g, cases, seed)?);
    }
    Ok(out)
}
