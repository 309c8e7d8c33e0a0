//! Neumann problems on disks, solved by Fourier separation.
//!
//! The Laplace solver is spectral and exact per mode: flux data
//! f(theta) = c + sum_n (A_n cos n theta + B_n sin n theta) on the circle of
//! radius R produces phi = kappa |x|^2 + sum_n (R/n)(r/R)^n (A_n cos n theta
//! + B_n sin n theta), where the quadratic with kappa = c / (2R) absorbs any
//! net flux imbalance as a constant source. Cartesian derivatives come from
//! the complex representation phi = Re F(z), F(z) = sum_n c_n z^n.
//!
//! The Poisson solver handles Delta phi = -g with the same Neumann data by a
//! second-order radial finite-difference scheme per angular mode: mode zero
//! integrates (rho u')' = -rho g_0 directly, higher modes solve a
//! tridiagonal system with a ghost node enforcing u'(R) = f_n. Both solvers
//! return a `HarmonicField` that evaluates values, gradients, Hessians, and
//! Laplacians anywhere in the disk, along with exact Dirichlet energies for
//! the spectral representation.

use crate::error::{Error, Result};
use crate::linalg::{norm, Mat2, Point};

const MODULE: &str = "elliptic";

/// Fourier data on a circle: constant plus cos/sin coefficients for modes
/// 1..=n_modes. Used both for Neumann flux data and for measured boundary
/// fluxes.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    pub constant: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl BoundaryData {
    pub fn zero(n_modes: usize) -> Self {
        BoundaryData {
            constant: 0.0,
            cos: vec![0.0; n_modes],
            sin: vec![0.0; n_modes],
        }
    }

    pub fn n_modes(&self) -> usize {
        self.cos.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cos.len() != self.sin.len() {
            return Err(Error::domain(
                MODULE,
                "boundary_data",
                format!("cos/sin lengths differ: {} vs {}", self.cos.len(), self.sin.len()),
            ));
        }
        if !self.constant.is_finite()
            || self.cos.iter().chain(self.sin.iter()).any(|v| !v.is_finite())
        {
            return Err(Error::domain(MODULE, "boundary_data", "coefficients must be finite"));
        }
        Ok(())
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let mut v = self.constant;
        for (k, (&a, &b)) in self.cos.iter().zip(self.sin.iter()).enumerate() {
            let n = (k + 1) as f64;
            v += a * (n * theta).cos() + b * (n * theta).sin();
        }
        v
    }

    /// Mean over the circle of |f - mean(f)|^2, which equals
    /// (1/2) sum_n (A_n^2 + B_n^2).
    pub fn fluctuation_mean_square(&self) -> f64 {
        0.5 * self
            .cos
            .iter()
            .zip(self.sin.iter())
            .map(|(&a, &b)| a * a + b * b)
            .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy)]
struct C(f64, f64);

impl C {
    fn mul(self, o: C) -> C {
        C(self.0 * o.0 - self.1 * o.1, self.0 * o.1 + self.1 * o.0)
    }
    fn scale(self, s: f64) -> C {
        C(self.0 * s, self.1 * s)
    }
    fn add(self, o: C) -> C {
        C(self.0 + o.0, self.1 + o.1)
    }
}

/// Numerical radial representation: per-mode arrays on a uniform grid
/// rho_k = k * delta, k = 0..=m, with delta * m = radius.
#[derive(Debug, Clone)]
struct RadialModes {
    delta: f64,
    /// u[mode][k]; cos family includes mode 0 at index 0, the sin family
    /// keeps an empty placeholder there.
    cos_u: Vec<Vec<f64>>,
    cos_du: Vec<Vec<f64>>,
    sin_u: Vec<Vec<f64>>,
    sin_du: Vec<Vec<f64>>,
}

impl RadialModes {
    fn nodes(&self) -> usize {
        self.cos_u[0].len()
    }

    fn interp(arr: &[f64], delta: f64, rho: f64) -> f64 {
        let m = arr.len() - 1;
        let s = (rho / delta).clamp(0.0, m as f64);
        let k = (s.floor() as usize).min(m - 1);
        let w = s - k as f64;
        arr[k] * (1.0 - w) + arr[k + 1] * w
    }
}

/// Solution of a Neumann problem on a disk, in spectral or radial form.
#[derive(Debug, Clone)]
pub struct HarmonicField {
    pub radius: f64,
    pub boundary: BoundaryData,
    /// Coefficient of the |x|^2 term absorbing the net flux imbalance; its
    /// Laplacian 4 kappa is the constant source added for compatibility.
    pub radial_quadratic: f64,
    /// True when the field is the closed-form harmonic solution; false when
    /// it carries the finite-difference radial representation.
    spectral: bool,
    particular: Option<RadialModes>,
}

impl HarmonicField {
    /// The constant source term added to make the Neumann data compatible.
    pub fn compatibility_source(&self) -> f64 {
        4.0 * self.radial_quadratic
    }

    fn series_coeff(&self, n: usize) -> C {
        // c_n = (R^{1-n} / n) (A_n - i B_n)
        let a = self.boundary.cos[n - 1];
        let b = self.boundary.sin[n - 1];
        let s = self.radius.powi(1 - n as i32) / n as f64;
        C(a * s, -b * s)
    }

    pub fn value(&self, p: Point) -> f64 {
        let r2 = p[0] * p[0] + p[1] * p[1];
        // The radial representation folds the compatibility quadratic into
        // its mode-zero arrays, so only the spectral form adds it here.
        let mut v = if self.spectral {
            self.radial_quadratic * r2
        } else {
            0.0
        };
        if self.spectral {
            let z = C(p[0], p[1]);
            let mut zn = C(1.0, 0.0);
            for n in 1..=self.boundary.n_modes() {
                zn = zn.mul(z);
                let c = self.series_coeff(n);
                v += c.mul(zn).0;
            }
        } else if let Some(rm) = &self.particular {
            let rho = r2.sqrt();
            let theta = p[1].atan2(p[0]);
            v += RadialModes::interp(&rm.cos_u[0], rm.delta, rho);
            for n in 1..rm.cos_u.len() {
                let u_c = RadialModes::interp(&rm.cos_u[n], rm.delta, rho);
                let u_s = RadialModes::interp(&rm.sin_u[n], rm.delta, rho);
                let nt = n as f64 * theta;
                v += u_c * nt.cos() + u_s * nt.sin();
            }
        }
        v
    }

    pub fn gradient(&self, p: Point) -> Point {
        let rho = norm(p);
        let mut g = if self.spectral {
            [
                2.0 * self.radial_quadratic * p[0],
                2.0 * self.radial_quadratic * p[1],
            ]
        } else {
            [0.0, 0.0]
        };
        if self.spectral {
            // F'(z) = sum n c_n z^{n-1}; grad = (Re F', -Im F').
            let z = C(p[0], p[1]);
            let mut zpow = C(1.0, 0.0);
            let mut fp = C(0.0, 0.0);
            for n in 1..=self.boundary.n_modes() {
                let c = self.series_coeff(n).scale(n as f64);
                fp = fp.add(c.mul(zpow));
                zpow = zpow.mul(z);
            }
            g[0] += fp.0;
            g[1] -= fp.1;
        } else if let Some(rm) = &self.particular {
            if rho < 1e-14 * self.radius.max(1e-300) {
                if rm.cos_u.len() > 1 {
                    g[0] += rm.cos_du[1][0];
                    g[1] += rm.sin_du[1][0];
                }
                return g;
            }
            let theta = p[1].atan2(p[0]);
            let er = [p[0] / rho, p[1] / rho];
            let et = [-er[1], er[0]];
            let du0 = RadialModes::interp(&rm.cos_du[0], rm.delta, rho);
            g[0] += du0 * er[0];
            g[1] += du0 * er[1];
            for n in 1..rm.cos_u.len() {
                let nf = n as f64;
                let nt = nf * theta;
                let (s, c) = nt.sin_cos();
                let u_c = RadialModes::interp(&rm.cos_u[n], rm.delta, rho);
                let u_s = RadialModes::interp(&rm.sin_u[n], rm.delta, rho);
                let du_c = RadialModes::interp(&rm.cos_du[n], rm.delta, rho);
                let du_s = RadialModes::interp(&rm.sin_du[n], rm.delta, rho);
                let dr = du_c * c + du_s * s;
                let dt = nf * (-u_c * s + u_s * c) / rho;
                g[0] += dr * er[0] + dt * et[0];
                g[1] += dr * er[1] + dt * et[1];
            }
        }
        g
    }

    /// Hessian; exact for the spectral representation, which is the form
    /// used for tilting. The radial representation differentiates the
    /// stored gradient by central differences.
    pub fn hessian(&self, p: Point) -> Mat2 {
        let mut h = Mat2::diag(2.0 * self.radial_quadratic, 2.0 * self.radial_quadratic);
        if self.spectral {
            let z = C(p[0], p[1]);
            let mut zpow = C(1.0, 0.0);
            let mut fpp = C(0.0, 0.0);
            for n in 1..=self.boundary.n_modes() {
                if n >= 2 {
                    let c = self.series_coeff(n).scale((n * (n - 1)) as f64);
                    fpp = fpp.add(c.mul(zpow));
                    zpow = zpow.mul(z);
                }
            }
            h = h.add(&Mat2::new(fpp.0, -fpp.1, -fpp.1, -fpp.0));
        } else {
            let step = self
                .particular
                .as_ref()
                .map(|rm| rm.delta)
                .unwrap_or(self.radius * 1e-3);
            let gxp = self.gradient([p[0] + step, p[1]]);
            let gxm = self.gradient([p[0] - step, p[1]]);
            let gyp = self.gradient([p[0], p[1] + step]);
            let gym = self.gradient([p[0], p[1] - step]);
            let base = Mat2::new(
                (gxp[0] - gxm[0]) / (2.0 * step),
                (gyp[0] - gym[0]) / (2.0 * step),
                (gxp[1] - gxm[1]) / (2.0 * step),
                (gyp[1] - gym[1]) / (2.0 * step),
            );
            // kappa is folded into the radial arrays for Poisson solves.
            h = base.symmetrize();
        }
        h
    }

    /// Third derivatives at the origin as [phi_xxx, phi_xxy, phi_xyy,
    /// phi_yyy]; spectral representation only.
    pub fn third_at_origin(&self) -> Result<[f64; 4]> {
        if !self.spectral {
            return Err(Error::domain(
                MODULE,
                "third_at_origin",
                "third derivatives are only exposed for the spectral representation",
            ));
        }
        if self.boundary.n_modes() < 3 {
            return Ok([0.0; 4]);
        }
        let c = self.series_coeff(3).scale(6.0);
        // F''' (0) = 6 c_3; phi_xxx = Re, phi_xxy = -Im, phi_xyy = -Re,
        // phi_yyy = Im.
        Ok([c.0, -c.1, -c.0, c.1])
    }

    /// Laplacian. Zero plus the compatibility constant for the spectral
    /// form; assembled from the radial arrays otherwise.
    pub fn laplacian(&self, p: Point) -> f64 {
        if self.spectral {
            return 4.0 * self.radial_quadratic;
        }
        let Some(rm) = &self.particular else {
            return 4.0 * self.radial_quadratic;
        };
        let rho = norm(p).max(rm.delta);
        let theta = p[1].atan2(p[0]);
        let d = rm.delta;
        let ddu = |u: &[f64], r: f64| -> f64 {
            let up = RadialModes::interp(u, d, r + d);
            let u0 = RadialModes::interp(u, d, r);
            let um = RadialModes::interp(u, d, (r - d).max(0.0));
            (up - 2.0 * u0 + um) / (d * d)
        };
        let mut lap = ddu(&rm.cos_u[0], rho)
            + RadialModes::interp(&rm.cos_du[0], d, rho) / rho;
        for n in 1..rm.cos_u.len() {
            let nf = n as f64;
            let nt = nf * theta;
            let (s, c) = nt.sin_cos();
            let term = |u: &[f64], du: &[f64]| -> f64 {
                ddu(u, rho) + RadialModes::interp(du, d, rho) / rho
                    - nf * nf * RadialModes::interp(u, d, rho) / (rho * rho)
            };
            lap += term(&rm.cos_u[n], &rm.cos_du[n]) * c + term(&rm.sin_u[n], &rm.sin_du[n]) * s;
        }
        lap
    }

    /// Dirichlet energy over the full disk. Closed form per mode for the
    /// spectral representation: pi R^2 (A_n^2 + B_n^2) / n, plus
    /// 2 pi kappa^2 R^4 for the quadratic part.
    pub fn energy_ball(&self) -> f64 {
        self.energy_annulus(1.0)
    }

    /// Dirichlet energy over the annulus B_R minus B_{R(1-r)}; r = 1 gives
    /// the full disk.
    pub fn energy_annulus(&self, r: f64) -> f64 {
        let rr = r.clamp(0.0, 1.0);
        let inner = self.radius * (1.0 - rr);
        let mut e = 0.0;
        if self.spectral {
            let k = self.radial_quadratic;
            e += 2.0 * std::f64::consts::PI
                * k
                * k
                * (self.radius.powi(4) - inner.powi(4));
            for n in 1..=self.boundary.n_modes() {
                let a = self.boundary.cos[n - 1];
                let b = self.boundary.sin[n - 1];
                let full = std::f64::consts::PI * self.radius * self.radius * (a * a + b * b)
                    / n as f64;
                e += full * (1.0 - (1.0 - rr).powi(2 * n as i32));
            }
        } else if let Some(rm) = &self.particular {
            let d = rm.delta;
            let m = rm.nodes() - 1;
            let integrand = |n: usize, k: usize| -> f64 {
                let rho = k as f64 * d;
                if n == 0 {
                    let du = rm.cos_du[0][k];
                    2.0 * std::f64::consts::PI * du * du * rho
                } else {
                    let nf = n as f64;
                    let mut v = 0.0;
                    for (u, du) in [(&rm.cos_u[n], &rm.cos_du[n]), (&rm.sin_u[n], &rm.sin_du[n])] {
                        let ang = if rho > 0.0 { nf * u[k] / rho } else { 0.0 };
                        v += du[k] * du[k] + ang * ang;
                    }
                    std::f64::consts::PI * v * rho
                }
            };
            let k_start = ((inner / d).ceil() as usize).min(m);
            for n in 0..rm.cos_u.len() {
                let mut acc = 0.0;
                for k in (k_start + 1)..=m {
                    acc += 0.5 * (integrand(n, k - 1) + integrand(n, k)) * d;
                }
                // Fractional interval from the inner radius up to the first
                // full node.
                if k_start >= 1 {
                    let frac = (k_start as f64) * d - inner;
                    if frac > 0.0 {
                        let w = frac / d;
                        let f_inner =
                            integrand(n, k_start) * (1.0 - w) + integrand(n, k_start - 1) * w;
                        acc += 0.5 * (f_inner + integrand(n, k_start)) * frac;
                    }
                }
                e += acc;
            }
        }
        e
    }
}

/// Closed-form harmonic solution of the Neumann problem on B_radius with
/// flux data `flux`. A nonzero mean flux is absorbed by a quadratic with
/// constant source, as the compatibility correction.
pub fn solve_neumann_laplace(flux: &BoundaryData, radius: f64) -> Result<HarmonicField> {
    flux.validate()?;
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::domain(
            MODULE,
            "solve_neumann_laplace",
            format!("radius must be positive and finite, got {radius}"),
        ));
    }
    Ok(HarmonicField {
        radius,
        boundary: flux.clone(),
        radial_quadratic: flux.constant / (2.0 * radius),
        spectral: true,
        particular: None,
    })
}

fn thomas_solve(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(Error::numeric(MODULE, "thomas_solve", "zero pivot"));
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom == 0.0 {
            return Err(Error::numeric(MODULE, "thomas_solve", "zero pivot"));
        }
        if i < n - 1 {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    Ok(x)
}

fn central_derivative(u: &[f64], delta: f64) -> Vec<f64> {
    let m = u.len() - 1;
    let mut du = vec![0.0; m + 1];
    for k in 1..m {
        du[k] = (u[k + 1] - u[k - 1]) / (2.0 * delta);
    }
    du[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * delta);
    du[m] = (3.0 * u[m] - 4.0 * u[m - 1] + u[m - 2]) / (2.0 * delta);
    du
}

/// Finite-difference solution of Delta phi = -g on B_radius with Neumann
/// data `flux`, decomposed into `flux.n_modes()` angular modes on
/// `n_radial` uniform radial intervals. Any compatibility mismatch between
/// the net flux and the source integral is absorbed by a quadratic term
/// folded into mode zero and reported via `compatibility_source`.
pub fn solve_neumann_poisson<G>(
    g: G,
    flux: &BoundaryData,
    radius: f64,
    n_radial: usize,
) -> Result<HarmonicField>
where
    G: Fn(Point) -> f64,
{
    flux.validate()?;
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::domain(
            MODULE,
            "solve_neumann_poisson",
            format!("radius must be positive and finite, got {radius}"),
        ));
    }
    if n_radial < 8 {
        return Err(Error::domain(
            MODULE,
            "solve_neumann_poisson",
            format!("need at least 8 radial intervals, got {n_radial}"),
        ));
    }
    let n_modes = flux.n_modes();
    let m = n_radial;
    let delta = radius / m as f64;
    let n_theta = (4 * n_modes).max(64);

    // Angular decomposition of g at every radial node.
    let mut g_cos = vec![vec![0.0f64; m + 1]; n_modes + 1];
    let mut g_sin = vec![vec![0.0f64; m + 1]; n_modes + 1];
    let thetas: Vec<f64> = (0..n_theta)
        .map(|j| 2.0 * std::f64::consts::PI * j as f64 / n_theta as f64)
        .collect();
    let trig: Vec<(Vec<f64>, Vec<f64>)> = (0..=n_modes)
        .map(|n| {
            let c: Vec<f64> = thetas.iter().map(|&t| (n as f64 * t).cos()).collect();
            let s: Vec<f64> = thetas.iter().map(|&t| (n as f64 * t).sin()).collect();
            (c, s)
        })
        .collect();
    for k in 0..=m {
        let rho = k as f64 * delta;
        let samples: Vec<f64> = thetas
            .iter()
            .map(|&t| g([rho * t.cos(), rho * t.sin()]))
            .collect();
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(
                MODULE,
                "solve_neumann_poisson",
                format!("source not finite on circle of radius {rho}"),
            ));
        }
        for n in 0..=n_modes {
            let (tc, ts) = &trig[n];
            let mut ac = 0.0;
            let mut as_ = 0.0;
            for j in 0..n_theta {
                ac += samples[j] * tc[j];
                as_ += samples[j] * ts[j];
            }
            let scale = if n == 0 {
                1.0 / n_theta as f64
            } else {
                2.0 / n_theta as f64
            };
            g_cos[n][k] = ac * scale;
            g_sin[n][k] = as_ * scale;
        }
    }

    let mut cos_u: Vec<Vec<f64>> = Vec::with_capacity(n_modes + 1);
    let mut cos_du: Vec<Vec<f64>> = Vec::with_capacity(n_modes + 1);
    let mut sin_u: Vec<Vec<f64>> = Vec::with_capacity(n_modes + 1);
    let mut sin_du: Vec<Vec<f64>> = Vec::with_capacity(n_modes + 1);

    // Mode zero: u'(rho) = -(1/rho) int_0^rho s g_0(s) ds by cumulative
    // trapezoid, then u by cumulative trapezoid of u'.
    let mut du0 = vec![0.0f64; m + 1];
    let mut moment = 0.0;
    for k in 1..=m {
        let s0 = (k - 1) as f64 * delta;
        let s1 = k as f64 * delta;
        moment += 0.5 * (s0 * g_cos[0][k - 1] + s1 * g_cos[0][k]) * delta;
        du0[k] = -moment / s1;
    }
    let kappa = (flux.constant - du0[m]) / (2.0 * radius);
    let mut u0 = vec![0.0f64; m + 1];
    for k in 1..=m {
        let rho0 = (k - 1) as f64 * delta;
        let rho1 = k as f64 * delta;
        u0[k] = u0[k - 1]
            + 0.5 * ((du0[k - 1] + 2.0 * kappa * rho0) + (du0[k] + 2.0 * kappa * rho1)) * delta;
        du0[k - 1] += 2.0 * kappa * rho0;
    }
    du0[m] += 2.0 * kappa * radius;
    cos_u.push(u0);
    cos_du.push(du0);
    sin_u.push(Vec::new());
    sin_du.push(Vec::new());

    // Modes n >= 1: tridiagonal in u_1..u_m with u_0 = 0 and a ghost node
    // enforcing u'(R) = f_n.
    for n in 1..=n_modes {
        let nf = n as f64;
        for (family, src, bc) in [
            (0usize, &g_cos[n], flux.cos[n - 1]),
            (1usize, &g_sin[n], flux.sin[n - 1]),
        ] {
            let mut lower = vec![0.0f64; m];
            let mut diag = vec![0.0f64; m];
            let mut upper = vec![0.0f64; m];
            let mut rhs = vec![0.0f64; m];
            for row in 0..m {
                let k = row + 1;
                let rho = k as f64 * delta;
                let a = 1.0 / (delta * delta) - 1.0 / (2.0 * delta * rho);
                let b = -2.0 / (delta * delta) - nf * nf / (rho * rho);
                let c = 1.0 / (delta * delta) + 1.0 / (2.0 * delta * rho);
                rhs[row] = -src[k];
                if row == m - 1 {
                    // Ghost elimination: u_{m+1} = u_{m-1} + 2 delta f_n.
                    lower[row] = a + c;
                    diag[row] = b;
                    rhs[row] -= c * 2.0 * delta * bc;
                } else {
                    lower[row] = a;
                    diag[row] = b;
                    upper[row] = c;
                }
            }
            let sol = thomas_solve(&lower, &diag, &upper, &rhs)?;
            let mut u = vec![0.0f64; m + 1];
            u[1..=m].copy_from_slice(&sol);
            let du = central_derivative(&u, delta);
            if family == 0 {
                cos_u.push(u);
                cos_du.push(du);
            } else {
                sin_u.push(u);
                sin_du.push(du);
            }
        }
    }

    Ok(HarmonicField {
        radius,
        boundary: flux.clone(),
        radial_quadratic: kappa,
        spectral: false,
        particular: Some(RadialModes {
            delta,
            cos_u,
            cos_du,
            sin_u,
            sin_du,
        }),
    })
}

/// One inequality or identity check: `value` should not exceed `bound`.
#[derive(Debug, Clone)]
pub struct EstimateRow {
    pub quantity: String,
    pub value: f64,
    pub bound: f64,
}

impl EstimateRow {
    pub fn ratio(&self) -> f64 {
        if self.bound != 0.0 {
            self.value / self.bound
        } else if self.value == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn pass(&self) -> bool {
        self.value <= self.bound * (1.0 + 1e-9) + 1e-300
    }
}

/// Interior estimates for the spectral harmonic solution: gradient and
/// Hessian at the center against the boundary flux fluctuation, annulus
/// energy fractions, and the interior gradient sup against the coefficient
/// sum. All constants are exact for the disk.
pub fn harmonic_estimate_suite(field: &HarmonicField) -> Result<Vec<EstimateRow>> {
    if !field.spectral {
        return Err(Error::domain(
            MODULE,
            "harmonic_estimate_suite",
            "estimate suite requires the spectral representation",
        ));
    }
    let r = field.radius;
    let fluct = field.boundary.fluctuation_mean_square();
    let g0 = field.gradient([0.0, 0.0]);
    let grad2 = g0[0] * g0[0] + g0[1] * g0[1];
    let hess = field.hessian([0.0, 0.0]);
    let mut rows = vec![
        EstimateRow {
            quantity: "gradient_origin_sq".into(),
            value: grad2,
            bound: 2.0 * fluct,
        },
        EstimateRow {
            quantity: "hessian_origin_frobenius_sq".into(),
            value: {
                let d = hess.add(&Mat2::diag(
                    -2.0 * field.radial_quadratic,
                    -2.0 * field.radial_quadratic,
                ));
                d.m[0][0] * d.m[0][0] + d.m[0][1] * d.m[0][1] + d.m[1][0] * d.m[1][0]
                    + d.m[1][1] * d.m[1][1]
            },
            bound: 4.0 / (r * r) * fluct,
        },
    ];
    // Annulus energy against the boundary fluctuation: mode-wise,
    // (1 - (1-r)^{2n}) <= 2 n r gives energy(A_r) <= 2 r pi R^2 sum (A^2+B^2)
    // = 4 pi R^2 r fluct, plus the quadratic part which lives mostly near
    // the boundary.
    for rr in [0.125, 0.25] {
        let kappa = field.radial_quadratic;
        let quad_part = 2.0 * std::f64::consts::PI
            * kappa
            * kappa
            * (r.powi(4) - (r * (1.0 - rr)).powi(4));
        rows.push(EstimateRow {
            quantity: format!("annulus_energy_fraction_r_{rr}"),
            value: field.energy_annulus(rr),
            bound: 4.0 * std::f64::consts::PI * r * r * rr * fluct + quad_part * (1.0 + 1e-12),
        });
    }
    // Interior gradient sup on |x| = R/2 against the coefficient sum; the
    // modulus of the derivative series is subharmonic, so sampling the
    // circle suffices.
    let mut coeff_sum = (field.radial_quadratic * r).abs();
    for n in 1..=field.boundary.n_modes() {
        let a = field.boundary.cos[n - 1];
        let b = field.boundary.sin[n - 1];
        coeff_sum += (a * a + b * b).sqrt() * 0.5f64.powi(n as i32 - 1);
    }
    let mut sup = 0.0f64;
    let samples = (8 * field.boundary.n_modes()).max(128);
    for j in 0..samples {
        let t = 2.0 * std::f64::consts::PI * j as f64 / samples as f64;
        let p = [0.5 * r * t.cos(), 0.5 * r * t.sin()];
        let g = field.gradient(p);
        sup = sup.max((g[0] * g[0] + g[1] * g[1]).sqrt());
    }
    rows.push(EstimateRow {
        quantity: "gradient_sup_half_ball".into(),
        value: sup * sup,
        bound: coeff_sum * coeff_sum,
    });
    Ok(rows)
}

/// Boundary equipartition of a harmonic field: the tangential and normal
/// derivative energies on the circle agree mode by mode in the plane.
/// Returns (tangential, normal), computed by trapezoid quadrature on
/// max(8 n_modes, 256) points.
pub fn pohozaev_check(field: &HarmonicField) -> Result<(f64, f64)> {
    if !field.spectral {
        return Err(Error::domain(
            MODULE,
            "pohozaev_check",
            "boundary equipartition requires the spectral representation",
        ));
    }
    let r = field.radius;
    let n_theta = (8 * field.boundary.n_modes()).max(256);
    let mut tangential = 0.0;
    let mut normal = 0.0;
    for j in 0..n_theta {
        let t = 2.0 * std::f64::consts::PI * j as f64 / n_theta as f64;
        let p = [r * t.cos(), r * t.sin()];
        let g = field.gradient(p);
        let er = [t.cos(), t.sin()];
        let et = [-er[1], er[0]];
        let gn = g[0] * er[0] + g[1] * er[1] - 2.0 * field.radial_quadratic * r;
        let gt = g[0] * et[0] + g[1] * et[1];
        tangential += gt * gt;
        normal += gn * gn;
    }
    let w = 2.0 * std::f64::consts::PI * r / n_theta as f64;
    Ok((tangential * w, normal * w))
}
