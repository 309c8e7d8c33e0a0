//! Eulerian view of a discrete transport: time slices of density and
//! momentum on a fixed grid.
//!
//! Atoms move along straight lines x + t (T(x) - x); at each time slice
//! their mass and momentum are splatted bilinearly onto the grid. The
//! kinetic action sum_nodes |j|^2 / rho (with 0 / 0 read as 0) then equals
//! the Lagrangian cost exactly for a single atom or a uniform shift, and
//! approaches it at second order for smooth displacement fields, because
//! mass and momentum share splat weights and Cauchy-Schwarz is an equality
//! when collocated atoms share a velocity. Crossings of a circle yield the
//! boundary flux data driving the Neumann problems.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::density::{fmt17, DensityPair, GridDensity, GridGeometry};
use crate::elliptic::BoundaryData;
use crate::error::{Error, Result};
use crate::linalg::{norm, sub, Point};
use crate::transport::TransportSolution;

const MODULE: &str = "eulerian";

/// Density and momentum slices of a displacement interpolation on a shared
/// grid. `densities[k]` and `fluxes[k]` hold nodal values at `times[k]`,
/// indexed iy * nx + ix; both are densities per unit area.
#[derive(Debug, Clone)]
pub struct Interpolant {
    pub geometry: GridGeometry,
    pub alpha: f64,
    pub times: Vec<f64>,
    pub densities: Vec<Vec<f64>>,
    pub fluxes: Vec<Vec<[f64; 2]>>,
    pub atom_mass: f64,
}

impl Interpolant {
    pub fn n_slices(&self) -> usize {
        self.times.len()
    }

    /// View one slice as a grid density (for evaluation and diagnostics).
    pub fn slice_density(&self, k: usize) -> Result<GridDensity> {
        GridDensity::new(
            self.geometry.origin,
            self.geometry.h,
            self.geometry.nx,
            self.geometry.ny,
            self.densities[k].clone(),
            self.alpha,
        )
    }

    /// Kinetic action: trapezoid in time of h^2 sum_nodes |j|^2 / rho,
    /// with vanishing-density nodes contributing zero.
    pub fn kinetic_action(&self) -> f64 {
        let h2 = self.geometry.h * self.geometry.h;
        let slice_action = |k: usize| -> f64 {
            let mut acc = 0.0;
            for (rho, j) in self.densities[k].iter().zip(self.fluxes[k].iter()) {
                if *rho > 0.0 {
                    acc += (j[0] * j[0] + j[1] * j[1]) / rho;
                }
            }
            acc * h2
        };
        let mut total = 0.0;
        for k in 1..self.n_slices() {
            let dt = self.times[k] - self.times[k - 1];
            total += 0.5 * (slice_action(k - 1) + slice_action(k)) * dt;
        }
        total
    }
}

fn splat_slice(
    sol: &TransportSolution,
    geometry: GridGeometry,
    t: f64,
) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
    let n_nodes = geometry.nx * geometry.ny;
    let mut rho = vec![0.0f64; n_nodes];
    let mut j = vec![[0.0f64; 2]; n_nodes];
    let inv_h2 = 1.0 / (geometry.h * geometry.h);
    for i in 0..sol.len() {
        let p = sol.interpolate_position(i, t);
        if !geometry.hull_contains(p) {
            return Err(Error::domain(
                MODULE,
                "displacement_interpolate",
                format!(
                    "atom {i} leaves the grid at time {t}: position ({}, {})",
                    p[0], p[1]
                ),
            ));
        }
        let (ix, iy, fx, fy) = geometry
            .cell_of(p)
            .expect("hull containment checked above");
        let d = sol.displacement(i);
        let m = sol.atom_mass * inv_h2;
        let w = [
            (1.0 - fx) * (1.0 - fy),
            fx * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * fy,
        ];
        let idx = [
            iy * geometry.nx + ix,
            iy * geometry.nx + ix + 1,
            (iy + 1) * geometry.nx + ix,
            (iy + 1) * geometry.nx + ix + 1,
        ];
        for (&node, &wk) in idx.iter().zip(w.iter()) {
            rho[node] += wk * m;
            j[node][0] += wk * m * d[0];
            j[node][1] += wk * m * d[1];
        }
    }
    Ok((rho, j))
}

/// Splat the interpolation onto `geometry` at `n_times` uniform slices
/// (including both endpoints). Fails if any atom path leaves the grid hull,
/// naming the first offending time.
pub fn displacement_interpolate(
    sol: &TransportSolution,
    geometry: GridGeometry,
    alpha: f64,
    n_times: usize,
) -> Result<Interpolant> {
    if n_times < 2 {
        return Err(Error::domain(
            MODULE,
            "displacement_interpolate",
            format!("need at least two time slices, got {n_times}"),
        ));
    }
    let times: Vec<f64> = (0..n_times)
        .map(|k| k as f64 / (n_times - 1) as f64)
        .collect();
    let slices: Vec<Result<(Vec<f64>, Vec<[f64; 2]>)>> = times
        .par_iter()
        .map(|&t| splat_slice(sol, geometry, t))
        .collect();
    let mut densities = Vec::with_capacity(n_times);
    let mut fluxes = Vec::with_capacity(n_times);
    for s in slices {
        let (rho, j) = s?;
        densities.push(rho);
        fluxes.push(j);
    }
    Ok(Interpolant {
        geometry,
        alpha,
        times,
        densities,
        fluxes,
        atom_mass: sol.atom_mass,
    })
}

/// Time-resolved boundary flux of the interpolation through a circle.
#[derive(Debug, Clone)]
pub struct FluxSamples {
    pub center: Point,
    pub radius: f64,
    /// Time-averaged flux density coefficients.
    pub mean: BoundaryData,
    /// Piecewise-constant-in-time coefficients on uniform bins.
    pub bins: Vec<BoundaryData>,
    pub crossings: usize,
}

/// Record every crossing of the circle by an atom path and accumulate the
/// Fourier coefficients of the flux density (mass per unit arclength and
/// unit time, outward positive).
pub fn boundary_flux(
    sol: &TransportSolution,
    center: Point,
    radius: f64,
    n_modes: usize,
    n_bins: usize,
) -> Result<FluxSamples> {
    if !(radius > 0.0) || n_bins == 0 {
        return Err(Error::domain(
            MODULE,
            "boundary_flux",
            format!("need positive radius and at least one bin, got {radius}, {n_bins}"),
        ));
    }
    let mut mean = BoundaryData::zero(n_modes);
    let mut bins = vec![BoundaryData::zero(n_modes); n_bins];
    let mut crossings = 0usize;
    let pi_r = std::f64::consts::PI * radius;
    for i in 0..sol.len() {
        let x = sub(sol.source[i], center);
        let d = sol.displacement(i);
        let a = d[0] * d[0] + d[1] * d[1];
        if a == 0.0 {
            continue;
        }
        let b = 2.0 * (x[0] * d[0] + x[1] * d[1]);
        let c0 = x[0] * x[0] + x[1] * x[1] - radius * radius;
        let disc = b * b - 4.0 * a * c0;
        if disc <= 0.0 {
            continue;
        }
        let sq = disc.sqrt();
        let q = -0.5 * (b + b.signum() * sq);
        let mut roots = [q / a, if q != 0.0 { c0 / q } else { f64::NAN }];
        if b == 0.0 {
            roots = [sq / (2.0 * a), -sq / (2.0 * a)];
        }
        for &t in roots.iter() {
            if !(0.0..=1.0).contains(&t) {
                continue;
            }
            let p = [x[0] + t * d[0], x[1] + t * d[1]];
            let v_r = (d[0] * p[0] + d[1] * p[1]) / radius;
            if v_r.abs() < 1e-13 * (a.sqrt() + 1e-300) {
                continue;
            }
            let signed = if v_r > 0.0 {
                sol.atom_mass
            } else {
                -sol.atom_mass
            };
            let theta = p[1].atan2(p[0]);
            crossings += 1;
            let bin = ((t * n_bins as f64) as usize).min(n_bins - 1);
            mean.constant += signed / (2.0 * pi_r);
            bins[bin].constant += signed * n_bins as f64 / (2.0 * pi_r);
            for n in 1..=n_modes {
                let nt = n as f64 * theta;
                let (s, c) = nt.sin_cos();
                mean.cos[n - 1] += signed * c / pi_r;
                mean.sin[n - 1] += signed * s / pi_r;
                bins[bin].cos[n - 1] += signed * c * n_bins as f64 / pi_r;
                bins[bin].sin[n - 1] += signed * s * n_bins as f64 / pi_r;
            }
        }
    }
    Ok(FluxSamples {
        center,
        radius,
        mean,
        bins,
        crossings,
    })
}

/// Worst and mean mismatch of the change-of-variables identity
/// rho_t(T_t(x)) det(grad T_t(x)) = rho_0(x), with the map sampled at probe
/// nodes through the nearest atom and differentiated centrally.
#[derive(Debug, Clone, Copy)]
pub struct JacobianReport {
    pub max_residual: f64,
    pub mean_residual: f64,
    pub min_det: f64,
    pub probes: usize,
}

pub fn jacobian_residual(
    sol: &TransportSolution,
    pair: &DensityPair,
    interp: &Interpolant,
    slice: usize,
    center: Point,
    probe_radius: f64,
    probe_nodes: usize,
) -> Result<JacobianReport> {
    if slice >= interp.n_slices() {
        return Err(Error::domain(
            MODULE,
            "jacobian_residual",
            format!("slice {slice} out of {}", interp.n_slices()),
        ));
    }
    if probe_nodes < 3 || !(probe_radius > 0.0) {
        return Err(Error::domain(
            MODULE,
            "jacobian_residual",
            "need at least a 3x3 probe grid and positive radius",
        ));
    }
    let t = interp.times[slice];
    let rho_t = interp.slice_density(slice)?;
    let step = 2.0 * probe_radius / (probe_nodes - 1) as f64;
    // Displacement sampled through the nearest atom; piecewise constant, so
    // the centred difference uses a stride wide enough to cross atoms.
    let displacement_at = |p: Point| -> Point {
        let mut best = f64::INFINITY;
        let mut arg = 0usize;
        for i in 0..sol.len() {
            let dx = sol.source[i][0] - p[0];
            let dy = sol.source[i][1] - p[1];
            let d2 = dx * dx + dy * dy;
            if d2 < best {
                best = d2;
                arg = i;
            }
        }
        sol.displacement(arg)
    };
    let map_at = |p: Point| -> Point {
        let d = displacement_at(p);
        [p[0] + t * d[0], p[1] + t * d[1]]
    };
    let mut max_residual = 0.0f64;
    let mut sum_residual = 0.0f64;
    let mut min_det = f64::INFINITY;
    let mut probes = 0usize;
    for gy in 0..probe_nodes {
        for gx in 0..probe_nodes {
            let p = [
                center[0] - probe_radius + gx as f64 * step,
                center[1] - probe_radius + gy as f64 * step,
            ];
            if norm(sub(p, center)) > probe_radius {
                continue;
            }
            let xp = map_at([p[0] + step, p[1]]);
            let xm = map_at([p[0] - step, p[1]]);
            let yp = map_at([p[0], p[1] + step]);
            let ym = map_at([p[0], p[1] - step]);
            let j00 = (xp[0] - xm[0]) / (2.0 * step);
            let j01 = (yp[0] - ym[0]) / (2.0 * step);
            let j10 = (xp[1] - xm[1]) / (2.0 * step);
            let j11 = (yp[1] - ym[1]) / (2.0 * step);
            let det = j00 * j11 - j01 * j10;
            let image = map_at(p);
            if !rho_t.geometry().hull_contains(image) {
                continue;
            }
            let lhs = rho_t.eval(image) * det;
            let rhs = pair.rho0.eval(p);
            let res = (lhs - rhs).abs();
            max_residual = max_residual.max(res);
            sum_residual += res;
            min_det = min_det.min(det);
            probes += 1;
        }
    }
    if probes == 0 {
        return Err(Error::domain(
            MODULE,
            "jacobian_residual",
            "no probe points inside the ball",
        ));
    }
    Ok(JacobianReport {
        max_residual,
        mean_residual: sum_residual / probes as f64,
        min_det,
        probes,
    })
}

/// Coarse-grained density maximum over a window, per slice; along
/// displacement interpolants of densities bounded by the endpoints' bounds,
/// this must stay below the endpoint maximum (no concentration in between).
///
/// Nodal splat values ripple by a factor of up to 9/4 when the atom lattice
/// sits at off-node offsets, while every 2x2 node block always holds whole
/// atom masses. The sup is therefore taken over sliding 2x2 block averages,
/// the footprint of one equal-mass cell, which reproduces a rigid lattice
/// translation exactly.
#[derive(Debug, Clone)]
pub struct ConvexityReport {
    pub sup_by_slice: Vec<f64>,
    pub sup_overall: f64,
    pub bound: f64,
}

fn block_average(values: &[f64], nx: usize, ix: usize, iy: usize) -> f64 {
    0.25 * (values[iy * nx + ix]
        + values[iy * nx + ix + 1]
        + values[(iy + 1) * nx + ix]
        + values[(iy + 1) * nx + ix + 1])
}

pub fn displacement_convexity_check(
    interp: &Interpolant,
    center: Point,
    window_radius: f64,
    bound: f64,
) -> Result<ConvexityReport> {
    let g = &interp.geometry;
    let mut sup_by_slice = Vec::with_capacity(interp.n_slices());
    let mut overall = 0.0f64;
    for k in 0..interp.n_slices() {
        let mut sup = 0.0f64;
        for iy in 0..g.ny - 1 {
            for ix in 0..g.nx - 1 {
                // Center of the 2x2 block.
                let p = [
                    g.origin[0] + (ix as f64 + 0.5) * g.h,
                    g.origin[1] + (iy as f64 + 0.5) * g.h,
                ];
                if norm(sub(p, center)) <= window_radius {
                    sup = sup.max(block_average(&interp.densities[k], g.nx, ix, iy));
                }
            }
        }
        overall = overall.max(sup);
        sup_by_slice.push(sup);
    }
    if sup_by_slice.iter().all(|&s| s == 0.0) {
        return Err(Error::domain(
            MODULE,
            "displacement_convexity_check",
            "window contains no mass at any slice",
        ));
    }
    Ok(ConvexityReport {
        sup_by_slice,
        sup_overall: overall,
        bound,
    })
}

/// Max over interior nodes and interior slices of the discrete continuity
/// defect d rho / dt + div j, with both fields coarse-grained over sliding
/// 2x2 node blocks before differencing: nodal splat values ripple at
/// off-node lattice offsets, while the block averages evolve smoothly.
/// Blocks within `margin` cells of the grid edge are skipped.
pub fn continuity_residual(interp: &Interpolant, margin: usize) -> Result<f64> {
    let g = &interp.geometry;
    let k_slices = interp.n_slices();
    if k_slices < 3 {
        return Err(Error::domain(
            MODULE,
            "continuity_residual",
            "need at least three slices for a centred time difference",
        ));
    }
    if g.nx <= 2 * margin + 3 || g.ny <= 2 * margin + 3 {
        return Err(Error::domain(
            MODULE,
            "continuity_residual",
            "margin leaves no interior nodes",
        ));
    }
    let block_flux = |k: usize, ix: usize, iy: usize, axis: usize| -> f64 {
        0.25 * (interp.fluxes[k][iy * g.nx + ix][axis]
            + interp.fluxes[k][iy * g.nx + ix + 1][axis]
            + interp.fluxes[k][(iy + 1) * g.nx + ix][axis]
            + interp.fluxes[k][(iy + 1) * g.nx + ix + 1][axis])
    };
    let mut worst = 0.0f64;
    for k in 1..k_slices - 1 {
        let dt = interp.times[k + 1] - interp.times[k - 1];
        for iy in margin + 1..g.ny - margin - 2 {
            for ix in margin + 1..g.nx - margin - 2 {
                let drho = (block_average(&interp.densities[k + 1], g.nx, ix, iy)
                    - block_average(&interp.densities[k - 1], g.nx, ix, iy))
                    / dt;
                let divj = (block_flux(k, ix + 1, iy, 0) - block_flux(k, ix - 1, iy, 0))
                    / (2.0 * g.h)
                    + (block_flux(k, ix, iy + 1, 1) - block_flux(k, ix, iy - 1, 1)) / (2.0 * g.h);
                worst = worst.max((drho + divj).abs());
            }
        }
    }
    Ok(worst)
}

/// One node per line, time-major: `t,i,j,rho,j1,j2` with i the x index and
/// j the y index, 17 significant digits.
pub fn write_slices_csv(interp: &Interpolant, path: &Path) -> Result<()> {
    let g = &interp.geometry;
    let mut out = String::from("t,i,j,rho,j1,j2\n");
    for k in 0..interp.n_slices() {
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                let idx = iy * g.nx + ix;
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    fmt17(interp.times[k]),
                    ix,
                    iy,
                    fmt17(interp.densities[k][idx]),
                    fmt17(interp.fluxes[k][idx][0]),
                    fmt17(interp.fluxes[k][idx][1]),
                )
                .expect("string write");
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
