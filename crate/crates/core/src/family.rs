//! Fixed multiresolution wavelet families.
//!
//! Each axis contributes a 1-D list of `(j, k)` pairs: every level in its
//! resolution set, each with the integer translate range
//! `floor((a-γ)2^j) ..= ceil((b+γ)2^j)`. The d-dimensional family is the
//! Cartesian product of the per-axis lists and is enumerated in
//! lexicographic order with axis 0 most significant. Within an axis, terms
//! are ordered by level (ascending) and then by translate (ascending).
//! That ordering is tagged [`ORDERING_TAG`] in manifests.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavelet::{dyadic, MotherWavelet};

pub const ORDERING_TAG: &str = "lexicographic-axis-major-v1";
const MANIFEST_VERSION: u32 = 1;

/// One coordinate direction of the family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub lower: f64,
    pub upper: f64,
    /// Resolution levels `J`; stored sorted and de-duplicated.
    pub levels: Vec<i32>,
    /// Translation margin `γ`.
    pub margin: f64,
}

impl AxisSpec {
    pub fn new(lower: f64, upper: f64, levels: impl IntoIterator<Item = i32>, margin: f64) -> Result<Self> {
        let mut levels: Vec<i32> = levels.into_iter().collect();
        levels.sort_unstable();
        levels.dedup();
        let spec = AxisSpec { lower, upper, levels, margin };
        spec.validate()?;
        Ok(spec)
    }

    /// Levels `lo..=hi`.
    pub fn with_level_range(lower: f64, upper: f64, lo: i32, hi: i32, margin: f64) -> Result<Self> {
        Self::new(lower, upper, lo..=hi, margin)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite()) || self.lower >= self.upper {
            return Err(Error::invalid(format!(
                "axis bounds must satisfy a < b, got [{}, {}]",
                self.lower, self.upper
            )));
        }
        if self.levels.is_empty() {
            return Err(Error::invalid("axis resolution set J is empty"));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::invalid(format!("translation margin must be >= 0, got {}", self.margin)));
        }
        if self.levels.iter().any(|j| j.abs() > 30) {
            return Err(Error::invalid("resolution levels must lie in -30..=30"));
        }
        Ok(())
    }
}

/// Inclusive integer translate range for level `j` on `[a, b]` with margin `γ`.
pub fn translation_range(a: f64, b: f64, gamma: f64, j: i32) -> Result<(i64, i64)> {
    if !(a < b) {
        return Err(Error::invalid(format!("translation range needs a < b, got [{a}, {b}]")));
    }
    if !(gamma >= 0.0) {
        return Err(Error::invalid(format!("translation margin must be >= 0, got {gamma}")));
    }
    let s = dyadic(j);
    Ok((((a - gamma) * s).floor() as i64, ((b + gamma) * s).ceil() as i64))
}

/// A 1-D `(level, translate)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AxisTerm {
    pub j: i32,
    pub k: i64,
}

impl AxisTerm {
    /// `dᵒ/dxᵒ [2^{j/2} ψ(2^j x - k)]` from a precomputed derivative array.
    #[inline]
    pub fn factor(&self, wavelet: MotherWavelet, x: f64, order: usize) -> f64 {
        let s = dyadic(self.j);
        let d = wavelet.derivatives(s * x - self.k as f64);
        s.powi(order as i32) * s.sqrt() * d[order]
    }

    /// `[f, f', f'']` for this term at `x`.
    #[inline]
    pub fn factors(&self, wavelet: MotherWavelet, x: f64) -> [f64; 3] {
        let s = dyadic(self.j);
        let norm = s.sqrt();
        let d = wavelet.derivatives(s * x - self.k as f64);
        [norm * d[0], norm * s * d[1], norm * s * s * d[2]]
    }
}

/// A d-dimensional multi-index `(j, k)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FamilyIndex {
    pub j: Vec<i32>,
    pub k: Vec<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LevelBlock {
    j: i32,
    k_min: i64,
    k_max: i64,
    offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct AxisFamily {
    terms: Vec<AxisTerm>,
    blocks: Vec<LevelBlock>,
}

/// The enumerated family with its flat bijection.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySet {
    wavelet: MotherWavelet,
    axes: Vec<AxisSpec>,
    axis_families: Vec<AxisFamily>,
    strides: Vec<usize>,
    len: usize,
}

impl FamilySet {
    pub fn build(axes: Vec<AxisSpec>) -> Result<Self> {
        Self::build_with(axes, MotherWavelet::default())
    }

    pub fn build_with(axes: Vec<AxisSpec>, wavelet: MotherWavelet) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::invalid("a family needs at least one axis"));
        }
        let mut axis_families = Vec::with_capacity(axes.len());
        for axis in &axes {
            axis.validate()?;
            let mut terms = Vec::new();
            let mut blocks = Vec::new();
            for &j in &axis.levels {
                let (k_min, k_max) = translation_range(axis.lower, axis.upper, axis.margin, j)?;
                blocks.push(LevelBlock { j, k_min, k_max, offset: terms.len() });
                terms.extend((k_min..=k_max).map(|k| AxisTerm { j, k }));
            }
            axis_families.push(AxisFamily { terms, blocks });
        }
        let mut strides = vec![1usize; axes.len()];
        for n in (0..axes.len().saturating_sub(1)).rev() {
            strides[n] = strides[n + 1] * axis_families[n + 1].terms.len();
        }
        let len = strides[0] * axis_families[0].terms.len();
        Ok(FamilySet { wavelet, axes, axis_families, strides, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn wavelet(&self) -> MotherWavelet {
        self.wavelet
    }

    pub fn axes(&self) -> &[AxisSpec] {
        &self.axes
    }

    /// The 1-D terms of axis `n`, in flat order.
    pub fn axis_terms(&self, n: usize) -> &[AxisTerm] {
        &self.axis_families[n].terms
    }

    /// Per-axis positions of flat index `i` into [`Self::axis_terms`].
    #[inline]
    pub fn axis_positions(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.strides
            .iter()
            .zip(&self.axis_families)
            .map(move |(&stride, fam)| (i / stride) % fam.terms.len())
    }

    fn check(&self, i: usize) -> Result<()> {
        if i >= self.len {
            return Err(Error::OutOfRange { index: i, len: self.len });
        }
        Ok(())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!("point has {} coordinates, family has {}", x.len(), self.dim())));
        }
        Ok(())
    }

    /// Inverse bijection: flat position to multi-index.
    pub fn index(&self, i: usize) -> Result<FamilyIndex> {
        self.check(i)?;
        let (j, k) = self
            .axis_positions(i)
            .enumerate()
            .map(|(n, p)| {
                let t = self.axis_families[n].terms[p];
                (t.j, t.k)
            })
            .unzip();
        Ok(FamilyIndex { j, k })
    }

    /// Forward bijection: multi-index to flat position, `None` if not a member.
    pub fn position(&self, idx: &FamilyIndex) -> Option<usize> {
        if idx.j.len() != self.dim() || idx.k.len() != self.dim() {
            return None;
        }
        let mut flat = 0;
        for (n, fam) in self.axis_families.iter().enumerate() {
            let block = fam.blocks.iter().find(|b| b.j == idx.j[n])?;
            if idx.k[n] < block.k_min || idx.k[n] > block.k_max {
                return None;
            }
            flat += (block.offset + (idx.k[n] - block.k_min) as usize) * self.strides[n];
        }
        Some(flat)
    }

    /// Sum of the level exponents, `Σₙ jₙ`, of flat index `i`.
    pub fn level_sum(&self, i: usize) -> i32 {
        self.axis_positions(i)
            .enumerate()
            .map(|(n, p)| self.axis_families[n].terms[p].j)
            .sum()
    }

    /// Tensor-product value with per-axis derivative orders.
    fn eval_orders(&self, i: usize, x: &[f64], orders: &[usize]) -> f64 {
        self.axis_positions(i)
            .enumerate()
            .map(|(n, p)| self.axis_families[n].terms[p].factor(self.wavelet, x[n], orders[n]))
            .product()
    }

    /// `Ψ_i(x) = Πₙ 2^{jₙ/2} ψ(2^{jₙ} xₙ - kₙ)`.
    pub fn eval_basis(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check(i)?;
        self.check_point(x)?;
        Ok(self.eval_orders(i, x, &vec![0; self.dim()]))
    }

    /// `∂ᵒ/∂xₘᵒ Ψ_i(x)` for `order ∈ {1, 2}`.
    pub fn eval_basis_partial(&self, i: usize, x: &[f64], axis: usize, order: u8) -> Result<f64> {
        self.check(i)?;
        self.check_point(x)?;
        if !(1..=2).contains(&order) {
            return Err(Error::UnsupportedOrder(order, "1 or 2"));
        }
        if axis >= self.dim() {
            return Err(Error::OutOfRange { index: axis, len: self.dim() });
        }
        let mut orders = vec![0; self.dim()];
        orders[axis] = order as usize;
        Ok(self.eval_orders(i, x, &orders))
    }

    /// Mixed partial `∂²/∂xₘ∂xₙ Ψ_i(x)` with `m ≠ n`.
    pub fn eval_basis_mixed(&self, i: usize, x: &[f64], m: usize, n: usize) -> Result<f64> {
        self.check(i)?;
        self.check_point(x)?;
        if m == n {
            return Err(Error::invalid("mixed partial needs two distinct axes; use eval_basis_partial"));
        }
        if m.max(n) >= self.dim() {
            return Err(Error::OutOfRange { index: m.max(n), len: self.dim() });
        }
        let mut orders = vec![0; self.dim()];
        orders[m] = 1;
        orders[n] = 1;
        Ok(self.eval_orders(i, x, &orders))
    }

    /// Text manifest: version, ordering tag, wavelet, axes and count.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "family_manifest_version = {MANIFEST_VERSION}");
        let _ = writeln!(out, "ordering = {ORDERING_TAG}");
        let _ = writeln!(out, "wavelet = {}", wavelet_tag(self.wavelet));
        let _ = writeln!(out, "dim = {}", self.dim());
        let _ = writeln!(out, "count = {}", self.len);
        for (n, a) in self.axes.iter().enumerate() {
            let levels: Vec<String> = a.levels.iter().map(i32::to_string).collect();
            let _ = writeln!(
                out,
                "axis {n} lower={} upper={} margin={} levels={}",
                a.lower,
                a.upper,
                a.margin,
                levels.join(",")
            );
        }
        out
    }

    /// Rebuilds a family from [`Self::manifest`] text, checking the count.
    pub fn from_manifest(text: &str) -> Result<Self> {
        let mut version = None;
        let mut ordering = None;
        let mut count = None;
        let mut axes = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            if let Some(rest) = line.strip_prefix("axis ") {
                let mut fields = rest.split_whitespace();
                fields.next();
                let mut lower = None;
                let mut upper = None;
                let mut margin = None;
                let mut levels = None;
                for f in fields {
                    let (key, value) = f
                        .split_once('=')
                        .ok_or_else(|| Error::Parse(format!("bad axis field `{f}`")))?;
                    match key {
                        "lower" => lower = Some(parse_f64(value)?),
                        "upper" => upper = Some(parse_f64(value)?),
                        "margin" => margin = Some(parse_f64(value)?),
                        "levels" => {
                            levels = Some(
                                value
                                    .split(',')
                                    .map(|s| s.parse::<i32>().map_err(|e| Error::Parse(e.to_string())))
                                    .collect::<Result<Vec<_>>>()?,
                            )
                        }
                        other => return Err(Error::Parse(format!("unknown axis field `{other}`"))),
                    }
                }
                let missing = || Error::Parse(format!("incomplete axis line `{line}`"));
                axes.push(AxisSpec::new(
                    lower.ok_or_else(missing)?,
                    upper.ok_or_else(missing)?,
                    levels.ok_or_else(missing)?,
                    margin.ok_or_else(missing)?,
                )?);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Parse(format!("bad manifest line `{line}`")))?;
            match key {
                "family_manifest_version" => version = Some(value.parse::<u32>().map_err(|e| Error::Parse(e.to_string()))?),
                "ordering" => ordering = Some(value.to_string()),
                "wavelet" => {
                    if value != wavelet_tag(MotherWavelet::GaussianFirstDerivative) {
                        return Err(Error::Parse(format!("unknown wavelet `{value}`")));
                    }
                }
                "dim" => {}
                "count" => count = Some(value.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?),
                other => return Err(Error::Parse(format!("unknown manifest key `{other}`"))),
            }
        }
        if version != Some(MANIFEST_VERSION) {
            return Err(Error::Parse(format!("unsupported family manifest version {version:?}")));
        }
        if ordering.as_deref() != Some(ORDERING_TAG) {
            return Err(Error::Parse(format!("unsupported ordering {ordering:?}")));
        }
        let family = FamilySet::build(axes)?;
        if count != Some(family.len()) {
            return Err(Error::Parse(format!("manifest count {count:?} disagrees with rebuilt family ({})", family.len())));
        }
        Ok(family)
    }
}

fn wavelet_tag(w: MotherWavelet) -> &'static str {
    match w {
        MotherWavelet::GaussianFirstDerivative => "gaussian_first_derivative",
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}")))
}

/// Per-axis level ranges and margin, resolved against a problem domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    /// Inclusive `[j_min, j_max]` for every axis.
    pub levels: Vec<[i32; 2]>,
    pub margin: f64,
}

impl FamilyConfig {
    pub fn build(&self, domain: &[(f64, f64)]) -> Result<FamilySet> {
        if self.levels.len() != domain.len() {
            return Err(Error::Config(format!(
                "family has {} level ranges for a {}-dimensional domain",
                self.levels.len(),
                domain.len()
            )));
        }
        let axes = domain
            .iter()
            .zip(&self.levels)
            .map(|(&(a, b), &[lo, hi])| AxisSpec::with_level_range(a, b, lo, hi, self.margin))
            .collect::<Result<Vec<_>>>()?;
        FamilySet::build(axes)
    }

    /// Family size without building it.
    pub fn size(&self, domain: &[(f64, f64)]) -> Result<usize> {
        let mut n = 1usize;
        for (&(a, b), &[lo, hi]) in domain.iter().zip(&self.levels) {
            let mut axis = 0usize;
            for j in lo..=hi {
                let (k0, k1) = translation_range(a, b, self.margin, j)?;
                axis += (k1 - k0 + 1) as usize;
            }
            n = n.saturating_mul(axis);
        }
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::eval_psi;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_axis(levels: &[i32]) -> AxisSpec {
        AxisSpec::new(0.0, 1.0, levels.iter().copied(), 0.0).unwrap()
    }

    #[test]
    fn translation_range_examples() {
        assert_eq!(translation_range(0.0, 1.0, 0.0, 0).unwrap(), (0, 1));
        assert_eq!(translation_range(-1.0, 1.0, 0.3, 2).unwrap(), (-6, 6));
        assert_eq!(translation_range(-1.0, 1.0, 0.3, -1).unwrap(), (-1, 1));
        assert!(translation_range(1.0, 1.0, 0.0, 0).is_err());
        assert!(translation_range(2.0, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn build_family_counts() {
        assert_eq!(FamilySet::build(vec![unit_axis(&[0])]).unwrap().len(), 2);
        assert_eq!(FamilySet::build(vec![unit_axis(&[0]), unit_axis(&[0])]).unwrap().len(), 4);
        let sym = AxisSpec::new(-1.0, 1.0, [-1, 0, 1], 0.0).unwrap();
        assert_eq!(FamilySet::build(vec![sym]).unwrap().len(), 11);
    }

    #[test]
    fn rejects_bad_axes() {
        assert!(AxisSpec::new(0.0, 1.0, [], 0.0).is_err());
        assert!(AxisSpec::new(1.0, 0.0, [0], 0.0).is_err());
        assert!(AxisSpec::new(0.0, 1.0, [0], -0.1).is_err());
        let bad = AxisSpec { lower: 0.0, upper: 1.0, levels: vec![], margin: 0.0 };
        assert!(FamilySet::build(vec![bad]).is_err());
    }

    #[test]
    fn flat_order_is_axis_major() {
        let fam = FamilySet::build(vec![unit_axis(&[0, 1]), unit_axis(&[0])]).unwrap();
        // axis 0: (0,0),(0,1),(1,0),(1,1),(1,2); axis 1: (0,0),(0,1)
        assert_eq!(fam.len(), 10);
        assert_eq!(fam.index(0).unwrap(), FamilyIndex { j: vec![0, 0], k: vec![0, 0] });
        assert_eq!(fam.index(1).unwrap(), FamilyIndex { j: vec![0, 0], k: vec![0, 1] });
        assert_eq!(fam.index(2).unwrap(), FamilyIndex { j: vec![0, 0], k: vec![1, 0] });
        assert_eq!(fam.index(9).unwrap(), FamilyIndex { j: vec![1, 0], k: vec![2, 1] });
        assert!(fam.index(10).is_err());
        assert_eq!(fam.position(&FamilyIndex { j: vec![1, 0], k: vec![3, 0] }), None);
        assert_eq!(fam.position(&FamilyIndex { j: vec![2, 0], k: vec![0, 0] }), None);
    }

    #[test]
    fn basis_examples() {
        let one = FamilySet::build(vec![unit_axis(&[0])]).unwrap();
        assert_eq!(one.eval_basis(0, &[0.0]).unwrap(), 0.0);

        let two = FamilySet::build(vec![
            AxisSpec::new(0.0, 1.0, [0], 0.0).unwrap(),
            AxisSpec::new(0.0, 1.0, [0], 0.0).unwrap(),
        ])
        .unwrap();
        let v = two.eval_basis(0, &[1.0, 1.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367_879_4).abs() < 1e-7);

        let lvl = FamilySet::build(vec![unit_axis(&[1])]).unwrap();
        let i = lvl.position(&FamilyIndex { j: vec![1], k: vec![0] }).unwrap();
        assert!((lvl.eval_basis(i, &[0.5]).unwrap() + 0.857_763_9).abs() < 1e-7);
        assert!(lvl.eval_basis(99, &[0.5]).is_err());
    }

    #[test]
    fn partial_examples() {
        let two = FamilySet::build(vec![unit_axis(&[0]), unit_axis(&[0])]).unwrap();
        let (x, y) = (0.3, -0.4);
        let got = two.eval_basis_partial(0, &[x, y], 0, 1).unwrap();
        assert_eq!(got, eval_psi(x, 1).unwrap() * eval_psi(y, 0).unwrap());

        let fam = FamilySet::build(vec![AxisSpec::new(0.0, 1.0, [2], 0.0).unwrap()]).unwrap();
        let i = fam.position(&FamilyIndex { j: vec![2], k: vec![1] }).unwrap();
        assert_eq!(fam.eval_basis_partial(i, &[0.25], 0, 1).unwrap(), -8.0);
        assert!(fam.eval_basis_partial(i, &[0.25], 0, 3).is_err());
        assert!(fam.eval_basis_partial(i, &[0.25], 1, 1).is_err());
    }

    #[test]
    fn partials_match_finite_differences() {
        let fam = FamilySet::build(vec![
            AxisSpec::new(-1.0, 1.0, -2..=2, 0.3).unwrap(),
            AxisSpec::new(0.0, 1.0, -1..=3, 0.3).unwrap(),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 500 {
            let i = rng.random_range(0..fam.len());
            let idx = fam.index(i).unwrap();
            let m = rng.random_range(0..2);
            let order = rng.random_range(1..=2u8);
            // sample inside the support of the chosen term so the check is informative
            let x: Vec<f64> = (0..2)
                .map(|n| (idx.k[n] as f64 + rng.random_range(-2.5..2.5)) / 2f64.powi(idx.j[n]))
                .collect();
            let h = 1e-5 * 2f64.powi(-idx.j[m]);
            let f = |s: f64, o: u8| {
                let mut p = x.clone();
                p[m] = s;
                if o == 0 {
                    fam.eval_basis(i, &p).unwrap()
                } else {
                    fam.eval_basis_partial(i, &p, m, o).unwrap()
                }
            };
            let fd = (f(x[m] + h, order - 1) - f(x[m] - h, order - 1)) / (2.0 * h);
            let exact = fam.eval_basis_partial(i, &x, m, order).unwrap();
            let scale = 2f64.powi(idx.j[m] * order as i32) * 2f64.powf((idx.j[0] + idx.j[1]) as f64 / 2.0);
            assert!(
                (fd - exact).abs() <= 1e-5 * exact.abs().max(1e-3 * scale),
                "i={i} m={m} order={order}: fd {fd} vs {exact}"
            );
            checked += 1;
        }
    }

    #[test]
    fn mixed_partial_is_product_of_first_derivatives() {
        let fam = FamilySet::build(vec![unit_axis(&[0, 1]), unit_axis(&[0, 1])]).unwrap();
        let x = [0.37, 0.61];
        for i in 0..fam.len() {
            let idx = fam.index(i).unwrap();
            let expect = eval_scaled_1(idx.j[0], idx.k[0], x[0], 1) * eval_scaled_1(idx.j[1], idx.k[1], x[1], 1);
            let got = fam.eval_basis_mixed(i, &x, 0, 1).unwrap();
            assert!((got - expect).abs() <= 1e-14 * expect.abs().max(1.0));
        }
        assert!(fam.eval_basis_mixed(0, &x, 1, 1).is_err());
    }

    fn eval_scaled_1(j: i32, k: i64, x: f64, order: u8) -> f64 {
        crate::wavelet::eval_scaled(j, k, x, order).unwrap()
    }

    #[test]
    fn manifest_round_trip() {
        let fam = FamilySet::build(vec![
            AxisSpec::new(-1.0, 1.0, -6..=5, 0.3).unwrap(),
            AxisSpec::new(0.0, 1.0, -6..=6, 0.3).unwrap(),
        ])
        .unwrap();
        let text = fam.manifest();
        assert!(text.contains(ORDERING_TAG));
        let back = FamilySet::from_manifest(&text).unwrap();
        assert_eq!(back, fam);
        let tampered = text.replace(&format!("count = {}", fam.len()), "count = 3");
        assert!(FamilySet::from_manifest(&tampered).is_err());
    }

    fn axis_strategy() -> impl Strategy<Value = AxisSpec> {
        (-3.0f64..3.0, 0.05f64..4.0, -6i32..=6, 0usize..4, 0.0f64..0.5).prop_map(|(a, w, lo, span, g)| {
            AxisSpec::new(a, a + w, lo..=(lo + span as i32), g).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn count_is_product_of_sums(axes in prop::collection::vec(axis_strategy(), 1..4)) {
            let expect: usize = axes
                .iter()
                .map(|a| a.levels.iter().map(|&j| {
                    let (lo, hi) = translation_range(a.lower, a.upper, a.margin, j).unwrap();
                    (hi - lo + 1) as usize
                }).sum::<usize>())
                .product();
            let fam = FamilySet::build(axes.clone()).unwrap();
            prop_assert_eq!(fam.len(), expect);
            // centers of the extreme translates bracket the padded interval
            for a in &axes {
                for &j in &a.levels {
                    let (lo, hi) = translation_range(a.lower, a.upper, a.margin, j).unwrap();
                    let s = 2f64.powi(j);
                    prop_assert!(lo as f64 / s <= a.lower - a.margin + 1e-12);
                    prop_assert!(hi as f64 / s >= a.upper + a.margin - 1e-12);
                }
            }
        }

        #[test]
        fn bijection_round_trips(axes in prop::collection::vec(axis_strategy(), 1..3), pick in 0usize..10_000) {
            let fam = FamilySet::build(axes).unwrap();
            let i = pick % fam.len();
            let idx = fam.index(i).unwrap();
            prop_assert_eq!(fam.position(&idx), Some(i));
            prop_assert_eq!(fam.index(fam.position(&idx).unwrap()).unwrap(), idx);
        }
    }
}
