//! Yee-grid FDTD reference solver for the TEz cavity.
//!
//! On the unit square with cell counts `nx × ny`:
//! `E_x` lives at `((i+½)Δx, jΔy)`, `E_y` at `(iΔx, (j+½)Δy)` and `H_z` at
//! cell centres. `E` is stored at integer time levels, `H_z` half a step
//! later. A step updates `E` from the curl of `H_z`, zeroes tangential `E`
//! on the walls, then updates `H_z` from the curl of `E` and subtracts the
//! source.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{Points, PulseSource, MAXWELL_FINAL_TIME};

/// Largest stable time step for unit wave speed.
pub fn cfl_limit(dx: f64, dy: f64) -> f64 {
    1.0 / (1.0 / (dx * dx) + 1.0 / (dy * dy)).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct YeeGrid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
    /// `nx × (ny+1)`, row `i`.
    pub ex: Vec<f64>,
    /// `(nx+1) × ny`, row `i`.
    pub ey: Vec<f64>,
    /// `nx × ny`, row `i`.
    pub hz: Vec<f64>,
    /// Completed steps; `E` is at `step·Δt`, `H_z` at `(step+½)Δt`.
    pub step: usize,
}

impl YeeGrid {
    /// Zero fields on `nx × ny` cells; rejects steps above the CFL limit.
    pub fn new(nx: usize, ny: usize, dt: f64) -> Result<Self> {
        let g = Self::new_unchecked(nx, ny, dt)?;
        let limit = cfl_limit(g.dx, g.dy);
        if dt > limit {
            return Err(Error::invalid(format!("time step {dt} exceeds the CFL limit {limit}")));
        }
        Ok(g)
    }

    /// Like [`Self::new`] without the stability check.
    pub fn new_unchecked(nx: usize, ny: usize, dt: f64) -> Result<Self> {
        if nx < 2 || ny < 2 || !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("grid needs at least 2×2 cells and a positive time step"));
        }
        Ok(YeeGrid {
            nx,
            ny,
            dx: 1.0 / nx as f64,
            dy: 1.0 / ny as f64,
            dt,
            ex: vec![0.0; nx * (ny + 1)],
            ey: vec![0.0; (nx + 1) * ny],
            hz: vec![0.0; nx * ny],
            step: 0,
        })
    }

    pub fn time_e(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn time_h(&self) -> f64 {
        (self.step as f64 + 0.5) * self.dt
    }

    /// `Σ (E_x² + E_y² + H_z²) ΔxΔy`.
    pub fn energy(&self) -> f64 {
        let s: f64 = self.ex.iter().chain(&self.ey).chain(&self.hz).map(|v| v * v).sum();
        s * self.dx * self.dy
    }

    /// Advances one leapfrog step. `source(x, y, t)` is evaluated at cell
    /// centres at the midpoint of the `H_z` update.
    pub fn step<S>(&mut self, source: &S) -> Result<()>
    where
        S: Fn(f64, f64, f64) -> f64 + Sync,
    {
        let (nx, ny, dx, dy, dt) = (self.nx, self.ny, self.dx, self.dy, self.dt);
        let hz = &self.hz;
        self.ex.par_chunks_mut(ny + 1).enumerate().for_each(|(i, row)| {
            for j in 1..ny {
                row[j] += dt * (hz[i * ny + j] - hz[i * ny + j - 1]) / dy;
            }
            row[0] = 0.0;
            row[ny] = 0.0;
        });
        self.ey.par_chunks_mut(ny).enumerate().for_each(|(i, row)| {
            if i == 0 || i == nx {
                row.iter_mut().for_each(|v| *v = 0.0);
                return;
            }
            for j in 0..ny {
                row[j] -= dt * (hz[i * ny + j] - hz[(i - 1) * ny + j]) / dx;
            }
        });
        let (ex, ey) = (&self.ex, &self.ey);
        let t = (self.step as f64 + 1.0) * dt;
        self.hz.par_chunks_mut(ny).enumerate().for_each(|(i, row)| {
            let x = (i as f64 + 0.5) * dx;
            for j in 0..ny {
                let y = (j as f64 + 0.5) * dy;
                let curl = (ex[i * (ny + 1) + j + 1] - ex[i * (ny + 1) + j]) / dy - (ey[(i + 1) * ny + j] - ey[i * ny + j]) / dx;
                row[j] += dt * curl - dt * source(x, y, t);
            }
        });
        self.step += 1;
        if self.hz.iter().chain(&self.ex).chain(&self.ey).any(|v| !v.is_finite()) {
            return Err(Error::Instability { step: self.step });
        }
        Ok(())
    }

    /// Bilinear interpolation of one staggered field, extrapolating linearly
    /// across the half cell next to the walls.
    fn sample(data: &[f64], rows: usize, cols: usize, fx: f64, fy: f64) -> f64 {
        let i0 = (fx.floor() as isize).clamp(0, rows as isize - 2) as usize;
        let j0 = (fy.floor() as isize).clamp(0, cols as isize - 2) as usize;
        let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
        let v = |i: usize, j: usize| data[i * cols + j];
        (1.0 - tx) * ((1.0 - ty) * v(i0, j0) + ty * v(i0, j0 + 1)) + tx * ((1.0 - ty) * v(i0 + 1, j0) + ty * v(i0 + 1, j0 + 1))
    }

    pub fn sample_ex(&self, x: f64, y: f64) -> f64 {
        Self::sample(&self.ex, self.nx, self.ny + 1, x / self.dx - 0.5, y / self.dy)
    }

    pub fn sample_ey(&self, x: f64, y: f64) -> f64 {
        Self::sample(&self.ey, self.nx + 1, self.ny, x / self.dx, y / self.dy - 0.5)
    }

    pub fn sample_hz(&self, x: f64, y: f64) -> f64 {
        Self::sample(&self.hz, self.nx, self.ny, x / self.dx - 0.5, y / self.dy - 0.5)
    }

    /// One field as CSV rows `x,y,value` at its own staggered positions.
    pub fn snapshot_csv(&self, field: FieldId) -> String {
        let mut out = String::from("x,y,value\n");
        let (rows, cols, ox, oy, data) = match field {
            FieldId::Ex => (self.nx, self.ny + 1, 0.5, 0.0, &self.ex),
            FieldId::Ey => (self.nx + 1, self.ny, 0.0, 0.5, &self.ey),
            FieldId::Hz => (self.nx, self.ny, 0.5, 0.5, &self.hz),
        };
        for i in 0..rows {
            for j in 0..cols {
                out.push_str(&format!("{},{},{:e}\n", (i as f64 + ox) * self.dx, (j as f64 + oy) * self.dy, data[i * cols + j]));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldId {
    Ex,
    Ey,
    Hz,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdtdConfig {
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
    #[serde(default = "default_final_time")]
    pub final_time: f64,
}

fn default_final_time() -> f64 {
    MAXWELL_FINAL_TIME
}

impl Default for FdtdConfig {
    /// Four cells per source width.
    fn default() -> Self {
        FdtdConfig { dx: 2.5e-3, dy: 2.5e-3, dt: 1.25e-3, final_time: MAXWELL_FINAL_TIME }
    }
}

impl FdtdConfig {
    /// Resolution stated for the benchmark: two cells per source width.
    pub fn paper() -> Self {
        FdtdConfig { dx: 5e-3, dy: 5e-3, dt: 1.5e-3, final_time: MAXWELL_FINAL_TIME }
    }

    pub fn cells(&self) -> Result<(usize, usize)> {
        let count = |h: f64| -> Result<usize> {
            let n = (1.0 / h).round();
            if !(h > 0.0) || (n * h - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("spacing {h} does not divide the unit interval")));
            }
            Ok(n as usize)
        };
        Ok((count(self.dx)?, count(self.dy)?))
    }

    pub fn steps(&self) -> usize {
        (self.final_time / self.dt - 1e-9).ceil() as usize
    }
}

/// Reference values at query points `(x, y, t)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldSamples {
    pub ex: Vec<f64>,
    pub ey: Vec<f64>,
    pub hz: Vec<f64>,
}

impl FieldSamples {
    pub fn field(&self, id: FieldId) -> &[f64] {
        match id {
            FieldId::Ex => &self.ex,
            FieldId::Ey => &self.ey,
            FieldId::Hz => &self.hz,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceReport {
    pub nx: usize,
    pub ny: usize,
    pub steps: usize,
    pub cfl_number: f64,
    pub final_energy: f64,
}

/// Runs the cavity to `final_time` and samples every query: bilinear in
/// space from the staggered positions and linear in time between the two
/// stored levels that bracket the query time.
pub fn solve_reference(cfg: &FdtdConfig, source: &PulseSource, queries: &Points) -> Result<(FieldSamples, ReferenceReport)> {
    source.validate()?;
    if queries.dim() != 3 {
        return Err(Error::invalid("queries must be (x, y, t) points"));
    }
    let (nx, ny) = cfg.cells()?;
    let mut grid = YeeGrid::new(nx, ny, cfg.dt)?;
    let steps = cfg.steps();
    let n = queries.len();
    if let Some(t) = queries.iter().map(|q| q[2]).find(|&t| !(0.0..=steps as f64 * cfg.dt).contains(&t)) {
        return Err(Error::invalid(format!("query time {t} outside the simulated interval")));
    }
    let mut out = FieldSamples { ex: vec![0.0; n], ey: vec![0.0; n], hz: vec![0.0; n] };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| queries.get(a)[2].total_cmp(&queries.get(b)[2]));

    let src = |x: f64, y: f64, t: f64| source.eval(x, y, t);
    // H_z at half step from the zero initial state, by the midpoint rule.
    let dt = cfg.dt;
    grid.hz.par_chunks_mut(ny).enumerate().for_each(|(i, row)| {
        let x = (i as f64 + 0.5) * grid.dx;
        for (j, v) in row.iter_mut().enumerate() {
            *v = -0.5 * dt * source.eval(x, (j as f64 + 0.5) * grid.dy, 0.25 * dt);
        }
    });
    let mut prev = grid.clone();
    let mut prev_hz_zero = true;
    let (mut qe, mut qh) = (0usize, 0usize);
    let mut by_h = order.clone();
    by_h.sort_by(|&a, &b| queries.get(a)[2].total_cmp(&queries.get(b)[2]));
    for s in 0..=steps {
        if s > 0 {
            prev = grid.clone();
            prev_hz_zero = false;
            grid.step(&src)?;
        }
        // E brackets [(s-1)Δt, sΔt]; at s = 0 only t = 0 is covered.
        let te1 = grid.time_e();
        while qe < n && queries.get(order[qe])[2] <= te1 + 1e-12 * dt {
            let q = order[qe];
            let p = queries.get(q);
            let (x, y, t) = (p[0], p[1], p[2]);
            if s == 0 {
                out.ex[q] = grid.sample_ex(x, y);
                out.ey[q] = grid.sample_ey(x, y);
            } else {
                let w = ((t - prev.time_e()) / dt).clamp(0.0, 1.0);
                out.ex[q] = (1.0 - w) * prev.sample_ex(x, y) + w * grid.sample_ex(x, y);
                out.ey[q] = (1.0 - w) * prev.sample_ey(x, y) + w * grid.sample_ey(x, y);
            }
            qe += 1;
        }
        // H_z brackets [(s-½)Δt, (s+½)Δt], with the known zero state at t = 0.
        let th1 = grid.time_h();
        while qh < n && queries.get(by_h[qh])[2] <= th1 + 1e-12 * dt {
            let q = by_h[qh];
            let p = queries.get(q);
            let (x, y, t) = (p[0], p[1], p[2]);
            let (t0, h0) = if s == 0 && prev_hz_zero { (0.0, 0.0) } else { (prev.time_h(), prev.sample_hz(x, y)) };
            let w = ((t - t0) / (th1 - t0)).clamp(0.0, 1.0);
            out.hz[q] = (1.0 - w) * h0 + w * grid.sample_hz(x, y);
            qh += 1;
        }
    }
    let report = ReferenceReport {
        nx,
        ny,
        steps,
        cfl_number: cfg.dt / cfl_limit(grid.dx, grid.dy),
        final_energy: grid.energy(),
    };
    Ok((out, report))
}

/// Runs a source-free grid and fails once the energy exceeds `factor`
/// times its starting value.
pub fn watch_energy(grid: &mut YeeGrid, steps: usize, factor: f64) -> Result<Vec<f64>> {
    let e0 = grid.energy();
    let zero = |_: f64, _: f64, _: f64| 0.0;
    let mut energies = vec![e0];
    for _ in 0..steps {
        grid.step(&zero)?;
        let e = grid.energy();
        energies.push(e);
        if e > factor * e0 {
            return Err(Error::Instability { step: grid.step });
        }
    }
    Ok(energies)
}

/// Self-convergence study: the same run at spacings `h`, `h/2`, `h/4`
/// (time step proportional), compared at common query points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub spacings: Vec<f64>,
    /// Discrete L2 differences between consecutive levels.
    pub differences: Vec<f64>,
    pub order: f64,
}

pub fn convergence_study(coarse: &FdtdConfig, source: &PulseSource, queries: &Points) -> Result<ConvergenceReport> {
    let mut levels = Vec::new();
    let mut spacings = Vec::new();
    for r in 0..3 {
        let f = (1u32 << r) as f64;
        let cfg = FdtdConfig { dx: coarse.dx / f, dy: coarse.dy / f, dt: coarse.dt / f, final_time: coarse.final_time };
        spacings.push(cfg.dx);
        levels.push(solve_reference(&cfg, source, queries)?.0);
    }
    let diff = |a: &FieldSamples, b: &FieldSamples| -> f64 {
        let s: f64 = [FieldId::Ex, FieldId::Ey, FieldId::Hz]
            .iter()
            .flat_map(|&id| a.field(id).iter().zip(b.field(id)).map(|(u, v)| (u - v) * (u - v)))
            .sum();
        (s / queries.len() as f64).sqrt()
    };
    let differences = vec![diff(&levels[0], &levels[1]), diff(&levels[1], &levels[2])];
    let order = (differences[0] / differences[1]).log2();
    Ok(ConvergenceReport { spacings, differences, order })
}

/// Largest mirror-symmetry defect of the staggered arrays under
/// `x ↔ 1-x` and `y ↔ 1-y`, relative to the largest field value.
pub fn mirror_defect(grid: &YeeGrid) -> f64 {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..nx {
        for j in 0..=ny {
            let v = grid.ex[i * (ny + 1) + j];
            scale = scale.max(v.abs());
            worst = worst.max((v - grid.ex[(nx - 1 - i) * (ny + 1) + j]).abs());
            worst = worst.max((v + grid.ex[i * (ny + 1) + ny - j]).abs());
        }
    }
    for i in 0..=nx {
        for j in 0..ny {
            let v = grid.ey[i * ny + j];
            scale = scale.max(v.abs());
            worst = worst.max((v + grid.ey[(nx - i) * ny + j]).abs());
            worst = worst.max((v - grid.ey[i * ny + ny - 1 - j]).abs());
        }
    }
    for i in 0..nx {
        for j in 0..ny {
            let v = grid.hz[i * ny + j];
            scale = scale.max(v.abs());
            worst = worst.max((v - grid.hz[(nx - 1 - i) * ny + j]).abs());
            worst = worst.max((v - grid.hz[i * ny + ny - 1 - j]).abs());
        }
    }
    worst / scale.max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulse() -> PulseSource {
        PulseSource::default()
    }

    #[test]
    fn zero_source_keeps_zero_fields() {
        let mut g = YeeGrid::new(20, 20, 0.02).unwrap();
        let zero = |_: f64, _: f64, _: f64| 0.0;
        for _ in 0..100 {
            g.step(&zero).unwrap();
        }
        assert!(g.ex.iter().chain(&g.ey).chain(&g.hz).all(|&v| v == 0.0));
    }

    #[test]
    fn first_step_only_moves_hz() {
        let mut g = YeeGrid::new(16, 16, 0.02).unwrap();
        let src = |x: f64, y: f64, t: f64| pulse().eval(x, y, t) + 1.0;
        g.step(&src).unwrap();
        assert!(g.ex.iter().chain(&g.ey).all(|&v| v == 0.0));
        for i in 0..16 {
            for j in 0..16 {
                let (x, y) = ((i as f64 + 0.5) / 16.0, (j as f64 + 0.5) / 16.0);
                assert_eq!(g.hz[i * 16 + j], -0.02 * src(x, y, 0.02));
            }
        }
    }

    #[test]
    fn pec_walls_stay_zero() {
        let mut g = YeeGrid::new(40, 40, 0.01).unwrap();
        let p = PulseSource { sigma: 0.05, center: [0.3, 0.6], ..pulse() };
        let src = |x: f64, y: f64, t: f64| p.eval(x, y, t);
        for _ in 0..60 {
            g.step(&src).unwrap();
            for i in 0..40 {
                assert_eq!(g.ex[i * 41], 0.0);
                assert_eq!(g.ex[i * 41 + 40], 0.0);
            }
            for j in 0..40 {
                assert_eq!(g.ey[j], 0.0);
                assert_eq!(g.ey[40 * 40 + j], 0.0);
            }
        }
    }

    #[test]
    fn cfl_violation_grows_energy() {
        assert!(YeeGrid::new(20, 20, 0.04).is_err());
        let mut g = YeeGrid::new_unchecked(20, 20, 1.2 * cfl_limit(0.05, 0.05)).unwrap();
        g.hz[10 * 20 + 10] = 1.0;
        let err = watch_energy(&mut g, 200, 1e6).unwrap_err();
        assert!(matches!(err, Error::Instability { step } if step <= 200));
        let mut stable = YeeGrid::new(20, 20, 0.9 * cfl_limit(0.05, 0.05)).unwrap();
        stable.hz[10 * 20 + 10] = 1.0;
        let e = watch_energy(&mut stable, 200, 1e6).unwrap();
        assert!(e.iter().all(|&v| v < 10.0 * e[0]));
    }

    #[test]
    fn paper_grid_step_count() {
        assert_eq!(FdtdConfig::paper().steps(), 334);
        assert_eq!(FdtdConfig::paper().cells().unwrap(), (200, 200));
    }

    #[test]
    fn early_fields_are_small() {
        let cfg = FdtdConfig { final_time: 0.01, ..FdtdConfig::paper() };
        let q = Points::new(3, vec![0.5, 0.5, 1.5e-3, 0.52, 0.5, 1.5e-3]).unwrap();
        let (s, _) = solve_reference(&cfg, &pulse(), &q).unwrap();
        let bound = 2.0 * 1.5e-3 * pulse().spatial(0.5, 0.5);
        assert!(s.hz.iter().all(|v| v.abs() <= bound));
        assert!(s.ex.iter().chain(&s.ey).all(|v| v.abs() <= bound));
    }

    #[test]
    fn central_source_is_mirror_symmetric() {
        let mut g = YeeGrid::new(50, 50, 0.01).unwrap();
        let p = PulseSource { sigma: 0.05, ..pulse() };
        let src = |x: f64, y: f64, t: f64| p.eval(x, y, t);
        for _ in 0..40 {
            g.step(&src).unwrap();
        }
        assert!(mirror_defect(&g) < 1e-12, "{}", mirror_defect(&g));
    }

    #[test]
    fn second_order_self_convergence() {
        let p = PulseSource { sigma: 0.08, ..pulse() };
        let mut q = Vec::new();
        for i in 1..10 {
            for j in 1..10 {
                q.extend([i as f64 / 10.0, j as f64 / 10.0, 0.25]);
            }
        }
        let q = Points::new(3, q).unwrap();
        let coarse = FdtdConfig { dx: 1.0 / 20.0, dy: 1.0 / 20.0, dt: 0.02, final_time: 0.25 };
        let r = convergence_study(&coarse, &p, &q).unwrap();
        assert!(r.order > 1.7 && r.order < 2.2, "{r:?}");
    }
}
