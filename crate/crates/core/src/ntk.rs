//! Empirical neural-tangent-kernel diagnostics.
//!
//! Kernels are Gram matrices of analytic parameter-Jacobian rows, either of
//! the model output or of the operator and condition residuals. The
//! eigensolver is a cyclic Jacobi method.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossAssembler;
use crate::model::{Derivative, FieldModels, ModelKind, ModelState};
use crate::problems::{PdeProblem, PointSet, Points, Role};
use crate::reduce::{map_chunks, POINT_CHUNK};
use crate::wavelet::MotherWavelet;

/// Default cap on the dense Jacobian held in memory.
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum KernelTarget {
    /// `⟨∇θ û_f(x), ∇θ û_f(x')⟩` over every point of the set.
    OutputOnly { field: usize },
    /// `J Jᵀ` with `J` stacking residual rows of every condition.
    OperatorBlocks,
}

/// Rows `start..start + len` of a kernel belong to one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBlock {
    pub name: String,
    pub role: Role,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_hash: u64,
    pub points_hash: u64,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub n: usize,
    /// Row-major `n × n`.
    pub data: Vec<f64>,
    pub blocks: Vec<KernelBlock>,
    pub provenance: Provenance,
}

impl KernelMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |K - Kᵀ| / max |K|`.
    pub fn symmetry_error(&self) -> f64 {
        let mut e: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..i {
                e = e.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        e / self.max_abs().max(f64::MIN_POSITIVE)
    }

    /// Tag of the block pair: `pp` for residual/residual, `pb` when one side
    /// is supervised, `bb` for supervised/supervised.
    pub fn block_kind(a: &KernelBlock, b: &KernelBlock) -> &'static str {
        match (a.role == Role::Residual, b.role == Role::Residual) {
            (true, true) => "pp",
            (false, false) => "bb",
            _ => "pb",
        }
    }

    /// Dense copy of the sub-matrix between two blocks.
    pub fn block(&self, a: &KernelBlock, b: &KernelBlock) -> Vec<f64> {
        let mut out = Vec::with_capacity(a.len * b.len);
        for i in a.start..a.start + a.len {
            out.extend_from_slice(&self.data[i * self.n + b.start..i * self.n + b.start + b.len]);
        }
        out
    }
}

/// FNV-1a over raw bit patterns.
pub fn hash_values(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn points_hash(points: &PointSet) -> u64 {
    let all: Vec<f64> = points.conditions.iter().flat_map(|c| c.points.as_slice().iter().copied()).collect();
    hash_values(&all)
}

/// `J Jᵀ` for row-major `J` of shape `rows × cols`, symmetrized exactly.
pub fn gram(j: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut k = vec![0.0; rows * rows];
    if rows == 0 {
        return k;
    }
    unsafe {
        matrixmultiply::dgemm(
            rows,
            cols,
            rows,
            1.0,
            j.as_ptr(),
            cols as isize,
            1,
            j.as_ptr(),
            1,
            cols as isize,
            0.0,
            k.as_mut_ptr(),
            rows as isize,
            1,
        );
    }
    for i in 0..rows {
        for l in 0..i {
            let v = 0.5 * (k[i * rows + l] + k[l * rows + i]);
            k[i * rows + l] = v;
            k[l * rows + i] = v;
        }
    }
    k
}

fn check_budget(rows: usize, cols: usize, budget: usize) -> Result<()> {
    let needed = rows.saturating_mul(cols).saturating_mul(std::mem::size_of::<f64>());
    let gram = rows.saturating_mul(rows).saturating_mul(std::mem::size_of::<f64>());
    if needed.saturating_add(gram) > budget {
        return Err(Error::MemoryBudget { needed: needed.saturating_add(gram), budget });
    }
    Ok(())
}

/// Row-major `∇θ û(x)` for every point, via the analytic parameter gradient.
pub fn output_jacobian(model: &ModelState, points: &Points) -> Result<Vec<f64>> {
    let np = model.n_params();
    let parts = map_chunks(points.len(), POINT_CHUNK, |s, e| -> Result<Vec<f64>> {
        let mut rows = Vec::with_capacity((e - s) * np);
        for p in s..e {
            rows.extend(model.param_gradient(points.get(p), Derivative::Value)?);
        }
        Ok(rows)
    });
    let mut out = Vec::with_capacity(points.len() * np);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Empirical kernel of `models` on `points`.
pub fn assemble_kernel(
    problem: &PdeProblem,
    models: &FieldModels,
    points: &PointSet,
    target: KernelTarget,
    memory_budget: usize,
) -> Result<KernelMatrix> {
    let np = models.n_params();
    let mut blocks = Vec::new();
    let jac = match target {
        KernelTarget::OutputOnly { field } => {
            if field >= models.len() {
                return Err(Error::OutOfRange { index: field, len: models.len() });
            }
            let rows: usize = points.conditions.iter().map(|c| c.points.len()).sum();
            check_budget(rows, np, memory_budget)?;
            let off = models.offsets()[field];
            let model = &models.fields()[field];
            let mut jac = vec![0.0; rows * np];
            let mut r = 0;
            for (cond, cp) in problem.conditions.iter().zip(&points.conditions) {
                let local = output_jacobian(model, &cp.points)?;
                let m = model.n_params();
                for p in 0..cp.points.len() {
                    jac[(r + p) * np + off..(r + p) * np + off + m].copy_from_slice(&local[p * m..(p + 1) * m]);
                }
                blocks.push(KernelBlock { name: cond.name.clone(), role: cond.role, start: r, len: cp.points.len() });
                r += cp.points.len();
            }
            jac
        }
        KernelTarget::OperatorBlocks => {
            let rows: usize = problem
                .conditions
                .iter()
                .zip(&points.conditions)
                .map(|(c, p)| c.equations.len() * p.points.len())
                .sum();
            check_budget(rows, np, memory_budget)?;
            let asm = LossAssembler::new(problem, points, models)?;
            let mut jac = Vec::with_capacity(rows * np);
            for (c, cond) in problem.conditions.iter().enumerate() {
                let part = asm.condition_jacobian(models, c);
                let len = part.len() / np.max(1);
                blocks.push(KernelBlock { name: cond.name.clone(), role: cond.role, start: jac.len() / np.max(1), len });
                jac.extend(part);
            }
            jac
        }
    };
    let n = jac.len() / np.max(1);
    Ok(KernelMatrix {
        n,
        data: gram(&jac, n, np),
        blocks,
        provenance: Provenance { model_hash: hash_values(&models.params()), points_hash: points_hash(points), step: 0 },
    })
}

/// Output kernel of an adaptive model split by parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDecomposition {
    pub n: usize,
    /// From coefficient-gradient columns.
    pub coefficient: Vec<f64>,
    /// From scale- and shift-gradient columns.
    pub scale_shift: Vec<f64>,
    /// Rank-one all-ones block from the bias.
    pub bias: Vec<f64>,
    pub full: Vec<f64>,
}

impl KernelDecomposition {
    /// `max |K_c + K_θ + K_bias - K| / max |K|`.
    pub fn additivity_error(&self) -> f64 {
        let scale = self.full.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        (0..self.full.len())
            .map(|i| (self.coefficient[i] + self.scale_shift[i] + self.bias[i] - self.full[i]).abs())
            .fold(0.0, f64::max)
            / scale
    }
}

fn columns(jac: &[f64], rows: usize, cols: usize, range: std::ops::Range<usize>) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * range.len());
    for r in 0..rows {
        out.extend_from_slice(&jac[r * cols + range.start..r * cols + range.end]);
    }
    out
}

pub fn decompose_kernel(model: &ModelState, points: &Points) -> Result<KernelDecomposition> {
    if !model.is_adaptive() {
        return Err(Error::invalid("kernel decomposition needs an adaptive model"));
    }
    let n = points.len();
    let np = model.n_params();
    let jac = output_jacobian(model, points)?;
    let (c0, b0) = (model.coeff_offset(), model.bias_index());
    let jt = columns(&jac, n, np, 0..c0);
    let jc = columns(&jac, n, np, c0..b0);
    let jb = columns(&jac, n, np, b0..np);
    Ok(KernelDecomposition {
        n,
        coefficient: gram(&jc, n, b0 - c0),
        scale_shift: gram(&jt, n, c0),
        bias: gram(&jb, n, 1),
        full: gram(&jac, n, np),
    })
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending; column `j` of
/// the row-major `vectors` belongs to `values[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub n: usize,
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub sweeps: usize,
}

impl SymmetricEigen {
    /// `max |A Q - Q Λ|`.
    pub fn residual(&self, a: &[f64]) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let aq: f64 = (0..n).map(|k| a[i * n + k] * self.vectors[k * n + j]).sum();
                worst = worst.max((aq - self.vectors[i * n + j] * self.values[j]).abs());
            }
        }
        worst
    }

    /// `max |QᵀQ - I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d: f64 = (0..n).map(|k| self.vectors[k * n + i] * self.vectors[k * n + j]).sum();
                worst = worst.max((d - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        worst
    }
}

pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
pub fn jacobi_eigen(a: &[f64], n: usize) -> Result<SymmetricEigen> {
    if a.len() != n * n {
        return Err(Error::invalid(format!("matrix has {} entries, expected {}", a.len(), n * n)));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let off = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    loop {
        let o = off(&m);
        if o <= 1e-15 * total || o == 0.0 {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::EigenNoConvergence { sweeps, off_norm: o });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (m[p * n + p], m[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vectors[k * n + new] = v[k * n + old];
        }
    }
    Ok(SymmetricEigen { n, values, vectors, sweeps })
}

/// Linearized error evolution `Q e^{-Λt} Qᵀ e₀` at every time in `times`.
pub fn spectral_decay(kernel: &KernelMatrix, initial: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = kernel.n;
    if initial.len() != n {
        return Err(Error::invalid(format!("initial error has length {}, kernel is {n}×{n}", initial.len())));
    }
    let eig = jacobi_eigen(&kernel.data, n)?;
    let proj: Vec<f64> = (0..n).map(|j| (0..n).map(|k| eig.vectors[k * n + j] * initial[k]).sum()).collect();
    Ok(times
        .iter()
        .map(|&t| {
            let damped: Vec<f64> = proj.iter().zip(&eig.values).map(|(p, l)| p * (-l * t).exp()).collect();
            (0..n).map(|i| (0..n).map(|j| eig.vectors[i * n + j] * damped[j]).sum()).collect()
        })
        .collect())
}

/// Largest entry-wise change of the output kernel across checkpoints,
/// relative to the first kernel's largest entry.
pub fn constancy_check(checkpoints: &[ModelState], points: &Points) -> Result<f64> {
    if checkpoints.len() < 2 {
        return Err(Error::invalid("constancy check needs at least two checkpoints"));
    }
    let n = points.len();
    let kernel = |m: &ModelState| -> Result<Vec<f64>> { Ok(gram(&output_jacobian(m, points)?, n, m.n_params())) };
    let first = kernel(&checkpoints[0])?;
    let scale = first.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut drift: f64 = 0.0;
    for m in &checkpoints[1..] {
        let k = kernel(m)?;
        drift = drift.max(k.iter().zip(&first).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    Ok(drift / scale)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpCheckConfig {
    pub dim: usize,
    pub sigma_c: f64,
    pub sigma_theta: f64,
    pub widths: Vec<usize>,
    /// Row-major `n_probes × dim`.
    pub probes: Vec<f64>,
    pub trials: usize,
    /// Unit draws for the independent kernel estimate.
    pub kernel_samples: usize,
    /// Divide the unit sum by `√N_A`.
    pub scaled: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpWidthStats {
    pub width: usize,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Row-major `n_probes²`.
    pub covariance: Vec<f64>,
    pub skewness: Vec<f64>,
    pub excess_kurtosis: Vec<f64>,
    /// `max |covariance - expected kernel|`.
    pub covariance_discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpReport {
    /// `σ_c² E_θ[𝓦(x)𝓦(x')]`, scaled by `N_A` per width when unscaled.
    pub kernel: Vec<f64>,
    pub widths: Vec<GpWidthStats>,
}

fn unit_value(wavelet: MotherWavelet, x: &[f64], w: &[f64], b: &[f64]) -> f64 {
    x.iter().zip(w).zip(b).map(|((x, w), b)| wavelet.derivatives(w * x + b)[0]).product()
}

/// Monte Carlo study of the wide-unit limit of `Σ cᵢ 𝓦ᵢ(x)` with
/// `c ~ N(0, σ_c²)` and scales/shifts `~ N(0, σ_θ²)`, bias zero.
pub fn gp_limit_check(cfg: &GpCheckConfig) -> Result<GpReport> {
    let d = cfg.dim;
    if d == 0 || cfg.probes.is_empty() || cfg.probes.len() % d != 0 {
        return Err(Error::invalid("probes must be a non-empty row-major array of dim-sized points"));
    }
    if cfg.trials < 2 || cfg.kernel_samples == 0 || cfg.widths.contains(&0) {
        return Err(Error::invalid("trials ≥ 2, kernel samples ≥ 1 and positive widths are required"));
    }
    let wavelet = MotherWavelet::default();
    let np = cfg.probes.len() / d;
    let probes: Vec<&[f64]> = cfg.probes.chunks(d).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let mut kernel = vec![0.0; np * np];
    let (mut w, mut b, mut vals) = (vec![0.0; d], vec![0.0; d], vec![0.0; np]);
    for _ in 0..cfg.kernel_samples {
        w.iter_mut().for_each(|v| *v = cfg.sigma_theta * rng.sample::<f64, _>(StandardNormal));
        b.iter_mut().for_each(|v| *v = cfg.sigma_theta * rng.sample::<f64, _>(StandardNormal));
        for (p, x) in probes.iter().enumerate() {
            vals[p] = unit_value(wavelet, x, &w, &b);
        }
        for i in 0..np {
            for j in 0..np {
                kernel[i * np + j] += vals[i] * vals[j];
            }
        }
    }
    let s2 = cfg.sigma_c * cfg.sigma_c / cfg.kernel_samples as f64;
    kernel.iter_mut().for_each(|v| *v *= s2);

    let mut widths = Vec::with_capacity(cfg.widths.len());
    for (wi, &units) in cfg.widths.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(wi as u64 + 1);
        let norm = if cfg.scaled { 1.0 / (units as f64).sqrt() } else { 1.0 };
        let mut samples = vec![0.0; cfg.trials * np];
        for t in 0..cfg.trials {
            let row = &mut samples[t * np..(t + 1) * np];
            for _ in 0..units {
                let c: f64 = cfg.sigma_c * rng.sample::<f64, _>(StandardNormal);
                w.iter_mut().for_each(|v| *v = cfg.sigma_theta * rng.sample::<f64, _>(StandardNormal));
                b.iter_mut().for_each(|v| *v = cfg.sigma_theta * rng.sample::<f64, _>(StandardNormal));
                for (p, x) in probes.iter().enumerate() {
                    row[p] += c * unit_value(wavelet, x, &w, &b);
                }
            }
            row.iter_mut().for_each(|v| *v *= norm);
        }
        let nt = cfg.trials as f64;
        let mean: Vec<f64> = (0..np).map(|p| (0..cfg.trials).map(|t| samples[t * np + p]).sum::<f64>() / nt).collect();
        let mut cov = vec![0.0; np * np];
        let mut m3 = vec![0.0; np];
        let mut m4 = vec![0.0; np];
        for t in 0..cfg.trials {
            let row = &samples[t * np..(t + 1) * np];
            for i in 0..np {
                let di = row[i] - mean[i];
                m3[i] += di.powi(3);
                m4[i] += di.powi(4);
                for j in 0..np {
                    cov[i * np + j] += di * (row[j] - mean[j]);
                }
            }
        }
        cov.iter_mut().for_each(|v| *v /= nt - 1.0);
        let var: Vec<f64> = (0..np).map(|i| cov[i * np + i]).collect();
        let std_error = var.iter().map(|v| (v / nt).sqrt()).collect();
        let pop_var: Vec<f64> = var.iter().map(|v| v * (nt - 1.0) / nt).collect();
        let skewness = (0..np).map(|i| m3[i] / nt / pop_var[i].powf(1.5)).collect();
        let excess_kurtosis = (0..np).map(|i| m4[i] / nt / (pop_var[i] * pop_var[i]) - 3.0).collect();
        let expected = if cfg.scaled { 1.0 } else { units as f64 };
        let covariance_discrepancy =
            cov.iter().zip(&kernel).map(|(c, k)| (c - expected * k).abs()).fold(0.0, f64::max);
        widths.push(GpWidthStats { width: units, mean, std_error, covariance: cov, skewness, excess_kurtosis, covariance_discrepancy });
    }
    Ok(GpReport { kernel, widths })
}

/// Row-major kernel of a fixed-basis model in closed form:
/// `Σᵢ Ψᵢ(x)Ψᵢ(x') + 1`.
pub fn fixed_basis_kernel(model: &ModelState, points: &Points) -> Result<Vec<f64>> {
    let ModelKind::FixedBasis(fam) = model.kind() else {
        return Err(Error::invalid("closed-form kernel needs a fixed-basis model"));
    };
    let n = points.len();
    let psi: Vec<Vec<f64>> =
        points.iter().map(|x| (0..fam.len()).map(|i| fam.eval_basis(i, x)).collect::<Result<Vec<_>>>()).collect::<Result<_>>()?;
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = psi[i].iter().zip(&psi[j]).map(|(a, b)| a * b).sum::<f64>() + 1.0;
        }
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{AxisSpec, FamilySet};
    use crate::optimize::{AdamConfig, AdamState};
    use crate::problems::{make_heat_conduction, sample_points};
    use rand::Rng;
    use std::sync::Arc;

    fn random_points(n: usize, d: usize, seed: u64) -> Points {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Points::new(d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_adaptive(units: usize, d: usize, seed: u64) -> ModelState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scales = (0..units * d).map(|_| rng.random_range(0.5..3.0)).collect();
        let shifts = (0..units * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let coeffs = (0..units).map(|_| rng.random_range(-1.0..1.0)).collect();
        ModelState::adaptive(d, scales, shifts, coeffs, 0.3).unwrap()
    }

    fn small_family() -> Arc<FamilySet> {
        Arc::new(
            FamilySet::build(vec![
                AxisSpec::new(-1.0, 1.0, 0..=2, 0.1).unwrap(),
                AxisSpec::new(-1.0, 1.0, 0..=1, 0.1).unwrap(),
            ])
            .unwrap(),
        )
    }

    #[test]
    fn fixed_basis_kernel_matches_closed_form() {
        let pts = random_points(12, 2, 1);
        let m = ModelState::xavier_fixed(small_family(), 3);
        let k = gram(&output_jacobian(&m, &pts).unwrap(), 12, m.n_params());
        let closed = fixed_basis_kernel(&m, &pts).unwrap();
        let scale = closed.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in k.iter().zip(&closed) {
            assert!((a - b).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn gram_matches_pairwise_dot_products() {
        let pts = random_points(9, 2, 2);
        let m = random_adaptive(7, 2, 5);
        let np = m.n_params();
        let rows: Vec<Vec<f64>> = pts.iter().map(|x| m.param_gradient(x, Derivative::Value).unwrap()).collect();
        let k = gram(&output_jacobian(&m, &pts).unwrap(), 9, np);
        for i in 0..9 {
            for j in 0..9 {
                let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                assert!((k[i * 9 + j] - dot).abs() <= 1e-14 * dot.abs().max(1.0));
            }
        }
    }

    #[test]
    fn decomposition_is_additive() {
        let pts = random_points(15, 2, 3);
        let m = random_adaptive(10, 2, 7);
        let dec = decompose_kernel(&m, &pts).unwrap();
        assert!(dec.additivity_error() < 1e-12);
        assert!(dec.bias.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_coefficients_remove_scale_shift_block() {
        let pts = random_points(6, 2, 4);
        let mut m = random_adaptive(1, 2, 9);
        m.coeffs_mut()[0] = 0.0;
        let dec = decompose_kernel(&m, &pts).unwrap();
        assert!(dec.scale_shift.iter().all(|&v| v == 0.0));
        assert!(decompose_kernel(&ModelState::xavier_fixed(small_family(), 1), &pts).is_err());
    }

    #[test]
    fn operator_kernel_matches_finite_difference_jacobian() {
        let p = make_heat_conduction(0.5).unwrap();
        let pts = sample_points(&p, &[6, 3, 4], &[2, 2], 1).unwrap();
        let mut models = FieldModels::single(random_adaptive(4, 2, 11));
        let k = assemble_kernel(&p, &models, &pts, KernelTarget::OperatorBlocks, DEFAULT_MEMORY_BUDGET).unwrap();
        assert_eq!(k.n, 13);
        assert_eq!(k.blocks.len(), 3);
        assert_eq!(KernelMatrix::block_kind(&k.blocks[0], &k.blocks[2]), "pb");
        let theta = models.params();
        let np = theta.len();
        let resid = |m: &FieldModels| -> Vec<f64> {
            let asm = LossAssembler::new(&p, &pts, m).unwrap();
            (0..p.conditions.len()).flat_map(|c| asm.residuals(m, c)).collect()
        };
        let mut jac = vec![0.0; 13 * np];
        for q in 0..np {
            let h = 1e-5 * theta[q].abs().max(1.0);
            let mut tp = theta.clone();
            tp[q] += h;
            models.set_params(&tp).unwrap();
            let rp = resid(&models);
            tp[q] -= 2.0 * h;
            models.set_params(&tp).unwrap();
            let rm = resid(&models);
            for r in 0..13 {
                jac[r * np + q] = (rp[r] - rm[r]) / (2.0 * h);
            }
        }
        let fd = gram(&jac, 13, np);
        let scale = k.max_abs();
        for (a, b) in k.data.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6 * scale, "{a} vs {b}");
        }
        assert!(k.symmetry_error() < 1e-12);
    }

    #[test]
    fn memory_guard_rejects_large_jacobians() {
        let p = make_heat_conduction(0.5).unwrap();
        let pts = sample_points(&p, &[50, 10, 10], &[2, 2], 1).unwrap();
        let models = FieldModels::single(random_adaptive(4, 2, 1));
        let err = assemble_kernel(&p, &models, &pts, KernelTarget::OperatorBlocks, 1000).unwrap_err();
        assert!(matches!(err, Error::MemoryBudget { .. }));
    }

    #[test]
    fn eigensolver_residual_and_orthogonality() {
        let pts = random_points(40, 2, 6);
        let m = random_adaptive(12, 2, 8);
        let k = gram(&output_jacobian(&m, &pts).unwrap(), 40, m.n_params());
        let eig = jacobi_eigen(&k, 40).unwrap();
        let scale = k.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(eig.residual(&k) < 1e-10 * scale);
        assert!(eig.orthogonality_error() < 1e-10);
        assert!(eig.values[0] >= -1e-10 * eig.values[39]);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    fn diag_kernel(d: &[f64]) -> KernelMatrix {
        let n = d.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in d.iter().enumerate() {
            data[i * n + i] = *v;
        }
        KernelMatrix { n, data, blocks: Vec::new(), provenance: Provenance { model_hash: 0, points_hash: 0, step: 0 } }
    }

    #[test]
    fn decay_examples() {
        let one = spectral_decay(&diag_kernel(&[2.0]), &[3.0], &[0.0, 0.5]).unwrap();
        assert!((one[1][0] - 3.0 * (-1.0f64).exp()).abs() < 1e-15);
        let id = spectral_decay(&diag_kernel(&[1.0, 1.0, 1.0]), &[1.0, -2.0, 4.0], &[1.5]).unwrap();
        let f = (-1.5f64).exp();
        for (a, b) in id[0].iter().zip([1.0, -2.0, 4.0]) {
            assert!((a - b * f).abs() < 1e-14);
        }
        // first time each component falls below 1e-6 of its start
        let times: Vec<f64> = (0..20000).map(|i| i as f64 * 1e-3).collect();
        let tr = spectral_decay(&diag_kernel(&[1.0, 100.0]), &[1.0, 1.0], &times).unwrap();
        let first = |c: usize| times[tr.iter().position(|e| e[c].abs() < 1e-6).unwrap()];
        let ratio = first(0) / first(1);
        assert!((ratio - 100.0).abs() < 1.0, "{ratio}");
    }

    #[test]
    fn fixed_basis_kernel_is_constant_under_training() {
        let pts = random_points(10, 2, 9);
        let m0 = ModelState::xavier_fixed(small_family(), 1);
        let mut m = m0.clone();
        let mut adam = AdamState::new(AdamConfig::default(), m.n_params());
        let mut params = m.params().to_vec();
        let mut checkpoints = vec![m0.clone()];
        for step in 0..100 {
            let g: Vec<f64> = params.iter().enumerate().map(|(i, p)| p - (i as f64 * 0.1).sin()).collect();
            adam.step(&mut params, &g).unwrap();
            if step % 25 == 24 {
                m.set_params(&params).unwrap();
                checkpoints.push(m.clone());
            }
        }
        assert!(constancy_check(&checkpoints, &pts).unwrap() < 1e-12);
        let a0 = random_adaptive(6, 2, 2);
        let mut a1 = a0.clone();
        a1.params_mut()[0] += 0.3;
        assert!(constancy_check(&[a0, a1], &pts).unwrap() > 1e-6);
    }

    #[test]
    fn gp_check_small_width_is_not_gaussian() {
        let cfg = GpCheckConfig {
            dim: 1,
            sigma_c: 1.0,
            sigma_theta: 1.0,
            widths: vec![1, 256],
            probes: vec![-0.5, 0.1, 0.8],
            trials: 1000,
            kernel_samples: 20000,
            scaled: true,
            seed: 3,
        };
        let r = gp_limit_check(&cfg).unwrap();
        for w in &r.widths {
            for (m, se) in w.mean.iter().zip(&w.std_error) {
                assert!(m.abs() < 4.0 * se);
            }
        }
        assert!(r.widths[0].excess_kurtosis.iter().any(|k| *k > 1.0));
        let again = gp_limit_check(&cfg).unwrap();
        assert_eq!(r, again);
    }
}
