//! Excess decay by tilting and the pointwise regularity classification.
//!
//! The excess of a transport solution on a ball measures its distance to
//! the identity map. One improvement step measures the boundary flux on a
//! quiet shell, solves a Neumann problem for the potential whose gradient
//! best explains the transport, and changes frames by the affine map read
//! off the potential at the origin: an offset from the gradient, a shear
//! from the trace-free Hessian, and a dilation from the density value at
//! the image point. The change of frames preserves optimality of the
//! matching exactly, so the improved excess can be measured on the same
//! atoms. Iterating the step with a re-sampled, re-quantized pair on a
//! shrinking window exhibits the geometric decay that a Campanato scheme
//! converts into pointwise regularity, and running the single-scale
//! criterion over a grid of probe points classifies them.

use crate::density::{holder_seminorm, DensityPair, GridDensity};
use crate::elliptic::{solve_neumann_poisson, HarmonicField};
use crate::error::{Error, Result};
use crate::eulerian::boundary_flux;
use crate::linalg::{add, affine_fit, norm, scale, sub, sym_exp, Mat2, Point};
use crate::transport::{solve_ot, TransportSolution};

const MODULE: &str = "regularity";

/// Window half-extent per unit of working radius when re-gridding between
/// iteration steps: large enough to hold the 2R criterion ball with room
/// for the flux shells.
const WINDOW_FACTOR: f64 = 2.5;

/// Parameters of the improvement and iteration pipeline.
#[derive(Debug, Clone)]
pub struct RegularityConfig {
    /// Radius contraction per step, in (0, 1/2].
    pub theta: f64,
    /// Improved decay exponent, strictly between the data exponent and 1.
    pub alpha_prime: f64,
    /// Atoms per transport solve.
    pub n_atoms: usize,
    /// Candidate shells when choosing a quiet flux radius.
    pub n_shells: usize,
    /// Angular modes kept in the measured flux.
    pub n_modes: usize,
    /// Time bins for the measured flux.
    pub n_bins: usize,
    /// Radial intervals in the Neumann solve.
    pub n_radial: usize,
    /// Nodes per axis when re-gridding between iteration steps.
    pub regrid_nodes: usize,
    /// Smallness threshold for the pointwise criterion.
    pub epsilon: f64,
    /// Constant in front of the data term of the one-step bound.
    pub c_theta: f64,
    /// Constant bounding the normalized excess along the iteration.
    pub c_iterate: f64,
}

impl RegularityConfig {
    pub fn default_for(alpha: f64) -> Self {
        RegularityConfig {
            theta: 0.25,
            alpha_prime: 0.5 * (1.0 + alpha),
            n_atoms: 1024,
            n_shells: 8,
            n_modes: 12,
            n_bins: 8,
            n_radial: 192,
            regrid_nodes: 64,
            epsilon: 0.02,
            c_theta: 100.0,
            c_iterate: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 0.5) {
            return Err(Error::domain(
                MODULE,
                "config",
                format!("theta must lie in (0, 1/2], got {}", self.theta),
            ));
        }
        if !(self.alpha_prime > 0.0 && self.alpha_prime < 1.0) {
            return Err(Error::domain(
                MODULE,
                "config",
                format!("alpha_prime must lie in (0, 1), got {}", self.alpha_prime),
            ));
        }
        if self.n_atoms == 0 || self.n_shells == 0 || self.n_bins == 0 {
            return Err(Error::domain(
                MODULE,
                "config",
                "atom, shell, and bin counts must be positive",
            ));
        }
        if self.regrid_nodes < 8 {
            return Err(Error::domain(
                MODULE,
                "config",
                format!("need at least 8 regrid nodes, got {}", self.regrid_nodes),
            ));
        }
        if !(self.epsilon > 0.0) || !(self.c_theta > 0.0) || !(self.c_iterate > 0.0) {
            return Err(Error::domain(
                MODULE,
                "config",
                "epsilon and the scheme constants must be positive",
            ));
        }
        Ok(())
    }

    fn check_exponents(&self, alpha: f64) -> Result<()> {
        if !(alpha < self.alpha_prime) {
            return Err(Error::domain(
                MODULE,
                "config",
                format!(
                    "improved exponent {} must exceed the data exponent {alpha}",
                    self.alpha_prime
                ),
            ));
        }
        Ok(())
    }
}

/// Displacement energy of the atoms inside a ball.
#[derive(Debug, Clone, Copy)]
pub struct BallExcess {
    pub radius: f64,
    /// Sum of mass * |displacement|^2 over atoms in the ball.
    pub energy: f64,
    /// Total atom mass in the ball.
    pub mass: f64,
    pub atoms: usize,
}

impl BallExcess {
    /// Mean-form excess: energy per unit mass, relative to the ball radius.
    pub fn mean(&self) -> f64 {
        if self.mass > 0.0 {
            self.energy / (self.mass * self.radius * self.radius)
        } else {
            0.0
        }
    }

    /// Integral-form excess: radius^{-4} times the energy, the shape used
    /// by the smallness criterion.
    pub fn integral(&self) -> f64 {
        self.energy / self.radius.powi(4)
    }
}

fn ball_excess_of(points: &[Point], displacements: &[Point], atom_mass: f64, center: Point, radius: f64) -> BallExcess {
    let r2 = radius * radius;
    let mut energy = 0.0;
    let mut mass = 0.0;
    let mut atoms = 0;
    for (p, d) in points.iter().zip(displacements.iter()) {
        let rel = sub(*p, center);
        if rel[0] * rel[0] + rel[1] * rel[1] <= r2 {
            energy += atom_mass * (d[0] * d[0] + d[1] * d[1]);
            mass += atom_mass;
            atoms += 1;
        }
    }
    BallExcess {
        radius,
        energy,
        mass,
        atoms,
    }
}

/// Excess of the forward map over source atoms in the ball.
pub fn forward_ball_excess(sol: &TransportSolution, center: Point, radius: f64) -> BallExcess {
    let disp: Vec<Point> = (0..sol.len()).map(|i| sol.displacement(i)).collect();
    ball_excess_of(&sol.source, &disp, sol.atom_mass, center, radius)
}

/// Excess of the inverse map over target atoms in the ball.
pub fn inverse_ball_excess(sol: &TransportSolution, center: Point, radius: f64) -> BallExcess {
    let disp: Vec<Point> = (0..sol.len())
        .map(|j| sub(sol.inverse_map(j), sol.target[j]))
        .collect();
    ball_excess_of(&sol.target, &disp, sol.atom_mass, center, radius)
}

/// Squared Holder data of the pair on the ball: [rho0]^2 + [rho1]^2.
pub fn holder_gamma_sq(pair: &DensityPair, center: Point, radius: f64) -> Result<f64> {
    let s0 = holder_seminorm(&pair.rho0, radius, center)?;
    let s1 = holder_seminorm(&pair.rho1, radius, center)?;
    Ok(s0 * s0 + s1 * s1)
}

/// Smallness criterion at (center, radius): integral excess of both map
/// directions on the doubled ball plus the scaled Holder data.
pub fn epsilon_criterion(
    sol: &TransportSolution,
    pair: &DensityPair,
    center: Point,
    radius: f64,
) -> Result<f64> {
    let fwd = forward_ball_excess(sol, center, 2.0 * radius).integral();
    let inv = inverse_ball_excess(sol, center, 2.0 * radius).integral();
    let gamma = holder_gamma_sq(pair, center, 2.0 * radius)?;
    Ok(fwd + inv + radius.powf(2.0 * pair.alpha()) * gamma)
}

/// Shell scores used to choose a flux radius crossed by little transport
/// energy.
#[derive(Debug, Clone)]
pub struct ShellReport {
    pub radii: Vec<f64>,
    pub scores: Vec<f64>,
    pub chosen: f64,
    pub min_score: f64,
    pub mean_score: f64,
}

/// Score each candidate shell by the displacement energy of atoms whose
/// straight path crosses it, and choose the quietest shell. The minimum is
/// at most the mean, which is the averaging bound this selection realizes.
pub fn select_good_radius(
    sol: &TransportSolution,
    center: Point,
    lo: f64,
    hi: f64,
    n_shells: usize,
) -> Result<ShellReport> {
    if !(0.0 < lo && lo < hi) || n_shells == 0 {
        return Err(Error::domain(
            MODULE,
            "select_good_radius",
            format!("need 0 < lo < hi and at least one shell, got {lo}, {hi}, {n_shells}"),
        ));
    }
    let radii: Vec<f64> = (0..n_shells)
        .map(|k| lo + (hi - lo) * (k as f64 + 0.5) / n_shells as f64)
        .collect();
    let mut scores = vec![0.0f64; n_shells];
    for i in 0..sol.len() {
        let a = norm(sub(sol.source[i], center));
        let b = norm(sub(sol.map(i), center));
        let d = sol.displacement(i);
        let e = sol.atom_mass * (d[0] * d[0] + d[1] * d[1]);
        let (near, far) = if a < b { (a, b) } else { (b, a) };
        for (k, &s) in radii.iter().enumerate() {
            if near <= s && s <= far {
                scores[k] += e;
            }
        }
    }
    let mut best = 0usize;
    for k in 1..n_shells {
        if scores[k] < scores[best] {
            best = k;
        }
    }
    let min_score = scores[best];
    let mean_score = scores.iter().sum::<f64>() / n_shells as f64;
    Ok(ShellReport {
        chosen: radii[best],
        radii,
        scores,
        min_score,
        mean_score,
    })
}

/// Affine frame read off the potential: offset, shear, and dilation.
#[derive(Debug, Clone, Copy)]
pub struct AffineFrame {
    /// Gradient of the potential at the center.
    pub b: Point,
    /// Symmetric shear exp(-A/2) built from the trace-free Hessian A.
    pub matrix: Mat2,
    /// Dilation matching the density value at the image point.
    pub lambda: f64,
}

impl AffineFrame {
    pub fn identity() -> Self {
        AffineFrame {
            b: [0.0, 0.0],
            matrix: Mat2::IDENTITY,
            lambda: 1.0,
        }
    }

    /// Squared Frobenius distance of the shear from the identity.
    pub fn frame_distance_sq(&self) -> f64 {
        let d = self.matrix.frobenius_distance(&Mat2::IDENTITY);
        d * d
    }
}

/// Harmonic approximation of a transport solution at one scale.
#[derive(Debug, Clone)]
pub struct HarmonicStep {
    pub field: HarmonicField,
    pub flux_radius: f64,
    pub shells: ShellReport,
    pub frame: AffineFrame,
    /// Mean-form excess at the working radius.
    pub excess: f64,
    /// Mean-form distance between displacements and the potential gradient
    /// on the ball of radius R/8.
    pub residual: f64,
    /// Raw squared Holder data on the doubled ball.
    pub gamma_sq: f64,
    /// Smallness criterion value at the working radius.
    pub criterion: f64,
}

/// Measure the flux on a quiet shell, solve the Neumann problem with the
/// density difference as source, and read the affine frame off the
/// potential at the center.
pub fn harmonic_approximation(
    sol: &TransportSolution,
    pair: &DensityPair,
    center: Point,
    radius: f64,
    cfg: &RegularityConfig,
) -> Result<HarmonicStep> {
    cfg.validate()?;
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::domain(
            MODULE,
            "harmonic_approximation",
            format!("radius must be positive and finite, got {radius}"),
        ));
    }
    let shells = select_good_radius(sol, center, 0.85 * radius, radius, cfg.n_shells)?;
    let flux = boundary_flux(sol, center, shells.chosen, cfg.n_modes, cfg.n_bins)?;
    let delta_rho = |rel: Point| {
        let p = add(rel, center);
        pair.rho1.eval(p) - pair.rho0.eval(p)
    };
    let field = solve_neumann_poisson(delta_rho, &flux.mean, shells.chosen, cfg.n_radial)?;

    let b = field.gradient([0.0, 0.0]);
    let hess = field.hessian([0.0, 0.0]);
    let half_trace = 0.5 * hess.trace();
    let a_tf = hess
        .add(&Mat2::diag(-half_trace, -half_trace))
        .symmetrize();
    let matrix = sym_exp(&a_tf.scale(-0.5))?;
    let v0 = pair.rho0.eval(center);
    let v1 = pair.rho1.eval(add(center, b));
    if v0 <= 0.0 || v1 <= 0.0 {
        return Err(Error::hypothesis(
            MODULE,
            "harmonic_approximation",
            format!("density values at the frame points must be positive, got {v0} and {v1}"),
            None,
        ));
    }
    let lambda = (v1 / v0).sqrt();
    let frame = AffineFrame { b, matrix, lambda };

    let excess = forward_ball_excess(sol, center, radius).mean();
    let inner = radius / 8.0;
    let mut res_energy = 0.0;
    let mut res_mass = 0.0;
    for i in 0..sol.len() {
        let rel = sub(sol.source[i], center);
        if norm(rel) <= inner {
            let g = field.gradient(rel);
            let d = sol.displacement(i);
            let e = [d[0] - g[0], d[1] - g[1]];
            res_energy += sol.atom_mass * (e[0] * e[0] + e[1] * e[1]);
            res_mass += sol.atom_mass;
        }
    }
    let residual = if res_mass > 0.0 {
        res_energy / (res_mass * inner * inner)
    } else {
        0.0
    };
    let gamma_sq = holder_gamma_sq(pair, center, 2.0 * radius)?;
    let criterion = epsilon_criterion(sol, pair, center, radius)?;
    Ok(HarmonicStep {
        field,
        flux_radius: shells.chosen,
        shells,
        frame,
        excess,
        residual,
        gamma_sq,
        criterion,
    })
}

/// Apply the frame to a solution recentered at `center`: sources map through
/// the inverse shear, targets are offset by b and map through lambda times
/// the shear. The pairing (B^{-1} u) . (lambda B v) = lambda u . v keeps the
/// matching cyclically monotone, hence optimal.
pub fn tilt_solution(
    sol: &TransportSolution,
    center: Point,
    frame: &AffineFrame,
) -> Result<TransportSolution> {
    let b_inv = frame.matrix.inverse()?;
    Ok(sol
        .recenter(center)
        .transform(&b_inv, &frame.matrix.scale(frame.lambda), frame.b))
}

/// Outcome of one improvement step at a single scale.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub radius: f64,
    pub excess_before: f64,
    pub excess_after: f64,
    /// Scaled Holder data term R^{2 alpha} ([rho0]^2 + [rho1]^2).
    pub gamma_term: f64,
    /// theta^{2 alpha'} * excess_before + c_theta * gamma_term.
    pub decay_bound: f64,
    pub frame: AffineFrame,
    pub criterion: f64,
    pub frame_dist_sq: f64,
    pub offset_sq_over_r2: f64,
    pub lambda_dev_sq: f64,
    pub harmonic: HarmonicStep,
    pub tilted: TransportSolution,
}

/// One improvement step: harmonic approximation, frame change, and excess
/// measurement at the contracted radius theta * R on the tilted atoms.
pub fn one_step_improvement(
    sol: &TransportSolution,
    pair: &DensityPair,
    center: Point,
    radius: f64,
    cfg: &RegularityConfig,
) -> Result<StepReport> {
    cfg.check_exponents(pair.alpha())?;
    let harmonic = harmonic_approximation(sol, pair, center, radius, cfg)?;
    let tilted = tilt_solution(sol, center, &harmonic.frame)?;
    let excess_before = harmonic.excess;
    let excess_after = forward_ball_excess(&tilted, [0.0, 0.0], cfg.theta * radius).mean();
    let gamma_term = radius.powf(2.0 * pair.alpha()) * harmonic.gamma_sq;
    let decay_bound = cfg.theta.powf(2.0 * cfg.alpha_prime) * excess_before + cfg.c_theta * gamma_term;
    let frame = harmonic.frame;
    Ok(StepReport {
        radius,
        excess_before,
        excess_after,
        gamma_term,
        decay_bound,
        criterion: harmonic.criterion,
        frame_dist_sq: frame.frame_distance_sq(),
        offset_sq_over_r2: (frame.b[0] * frame.b[0] + frame.b[1] * frame.b[1]) / (radius * radius),
        lambda_dev_sq: (frame.lambda - 1.0) * (frame.lambda - 1.0),
        frame,
        harmonic,
        tilted,
    })
}

/// Resample the pair in the tilted frame onto a fresh window grid. Source
/// coordinates pull back through the shear around `x0`; target coordinates
/// pull back through the offset, the shear, and the dilation, with the
/// dilation adjusted once so the window masses agree.
fn resample_tilted(
    pair: &DensityPair,
    x0: Point,
    frame: &AffineFrame,
    window: f64,
    nodes: usize,
) -> Result<(DensityPair, f64)> {
    let h = 2.0 * window / nodes as f64;
    let origin = [-window + 0.5 * h, -window + 0.5 * h];
    let alpha = pair.alpha();
    let geometry_node = |ix: usize, iy: usize| -> Point {
        [origin[0] + ix as f64 * h, origin[1] + iy as f64 * h]
    };

    let mut v0 = vec![0.0f64; nodes * nodes];
    for iy in 0..nodes {
        for ix in 0..nodes {
            let p = geometry_node(ix, iy);
            v0[iy * nodes + ix] = pair.rho0.eval(add(x0, frame.matrix.apply(p)));
        }
    }
    let rho0 = GridDensity::new(origin, h, nodes, nodes, v0, alpha)?;

    let shift = add(x0, frame.b);
    let sample1 = |lam: f64| -> Vec<f64> {
        let mut v = vec![0.0f64; nodes * nodes];
        for iy in 0..nodes {
            for ix in 0..nodes {
                let p = geometry_node(ix, iy);
                let y = add(shift, scale(frame.matrix.apply(p), 1.0 / lam));
                v[iy * nodes + ix] = pair.rho1.eval(y) / (lam * lam);
            }
        }
        v
    };
    let m0 = rho0.mass();
    let mut lam = frame.lambda;
    let mut values1 = sample1(lam);
    for _ in 0..2 {
        let m1: f64 = values1.iter().sum::<f64>() * h * h;
        let ratio = m1 / m0;
        if (ratio - 1.0).abs() < 1e-12 {
            break;
        }
        lam *= ratio.sqrt();
        values1 = sample1(lam);
    }
    let rho1 = GridDensity::new(origin, h, nodes, nodes, values1, alpha)?;
    let rel = (rho0.mass() - rho1.mass()).abs() / rho0.mass();
    let pair = DensityPair::from_parts(rho0, rho1, (2.0 * rel).max(1e-9), "resample_tilted")?;
    Ok((pair, lam))
}

/// One row of the iteration decay table.
#[derive(Debug, Clone)]
pub struct DecayRow {
    pub k: usize,
    /// Nominal radius theta^k * r0 in the original coordinates.
    pub radius: f64,
    /// Mean-form excess measured at this step.
    pub excess: f64,
    /// Square root of the scaled Holder data term at this step.
    pub gamma: f64,
    pub criterion: f64,
    /// theta^{-2 k alpha} * excess / (excess_0 + gamma_term_0).
    pub ratio_to_theta2alpha: f64,
    pub frame_dist: f64,
    pub offset_norm: f64,
    pub lambda: f64,
    pub pass: bool,
}

/// Iterate the improvement step `steps` times starting from radius `r0`
/// around `center`, re-solving on a re-sampled window after each step. The
/// table reports, per step, the excess, the data term, the criterion, the
/// normalized decay ratio, and the frame read off the potential.
pub fn campanato_iterate(
    pair: &DensityPair,
    center: Point,
    r0: f64,
    steps: usize,
    cfg: &RegularityConfig,
) -> Result<Vec<DecayRow>> {
    cfg.validate()?;
    cfg.check_exponents(pair.alpha())?;
    if steps == 0 {
        return Err(Error::domain(MODULE, "campanato_iterate", "need at least one step"));
    }
    let alpha = pair.alpha();
    let mut rows = Vec::with_capacity(steps);
    let mut current = pair.clone();
    let mut current_center = center;
    let mut working_radius = r0;
    let mut normalizer = 0.0f64;
    for k in 0..steps {
        let sol = solve_ot(&current, cfg.n_atoms)?;
        let in_ball = forward_ball_excess(&sol, current_center, working_radius);
        if in_ball.atoms == 0 {
            return Err(Error::numeric(
                MODULE,
                "campanato_iterate",
                format!("no atoms inside the step-{k} ball of radius {working_radius}"),
            ));
        }
        let step = one_step_improvement(&sol, &current, current_center, working_radius, cfg)?;
        let nominal_radius = r0 * cfg.theta.powi(k as i32);
        if k == 0 {
            normalizer = step.excess_before + step.gamma_term;
            if normalizer <= 0.0 {
                normalizer = f64::MIN_POSITIVE;
            }
        }
        let ratio = cfg.theta.powf(-2.0 * alpha * k as f64) * step.excess_before / normalizer;
        let (next_pair, lambda_eff) = if k + 1 < steps {
            let window = WINDOW_FACTOR * cfg.theta * working_radius;
            let (p, lam) = resample_tilted(&current, current_center, &step.frame, window, cfg.regrid_nodes)?;
            (Some(p), lam)
        } else {
            (None, step.frame.lambda)
        };
        rows.push(DecayRow {
            k,
            radius: nominal_radius,
            excess: step.excess_before,
            gamma: step.gamma_term.sqrt(),
            criterion: step.criterion,
            ratio_to_theta2alpha: ratio,
            frame_dist: step.frame_dist_sq.sqrt(),
            offset_norm: norm(step.frame.b),
            lambda: lambda_eff,
            pass: ratio <= cfg.c_iterate,
        });
        if let Some(p) = next_pair {
            current = p;
            current_center = [0.0, 0.0];
            working_radius *= cfg.theta;
        }
    }
    Ok(rows)
}

/// Label attached to a probe point by the classification sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLabel {
    Regular,
    Flagged,
    Skipped,
}

impl PointLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointLabel::Regular => "regular",
            PointLabel::Flagged => "flagged",
            PointLabel::Skipped => "non-alexandrov (skipped)",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClassificationRow {
    pub point: Point,
    pub criterion: f64,
    pub label: PointLabel,
}

/// Regular grid of probe points for the classification sweep.
pub fn probe_grid(center: Point, half_extent: f64, per_axis: usize) -> Vec<Point> {
    let mut out = Vec::with_capacity(per_axis * per_axis);
    for iy in 0..per_axis {
        for ix in 0..per_axis {
            let fx = if per_axis > 1 {
                ix as f64 / (per_axis - 1) as f64 * 2.0 - 1.0
            } else {
                0.0
            };
            let fy = if per_axis > 1 {
                iy as f64 / (per_axis - 1) as f64 * 2.0 - 1.0
            } else {
                0.0
            };
            out.push([
                center[0] + fx * half_extent,
                center[1] + fy * half_extent,
            ]);
        }
    }
    out
}

const NEIGHBORHOOD: usize = 25;

/// Classify each probe point by fitting an affine map to the transport of
/// its nearest atoms, changing to the coordinates in which that map is the
/// identity, and evaluating the smallness criterion at `radius`. Probes
/// whose fitted symmetric part is not positive definite are skipped: no
/// monotone frame exists there.
pub fn classify_regular_points(
    sol: &TransportSolution,
    pair: &DensityPair,
    probes: &[Point],
    radius: f64,
    cfg: &RegularityConfig,
) -> Result<Vec<ClassificationRow>> {
    cfg.validate()?;
    if sol.len() < NEIGHBORHOOD {
        return Err(Error::domain(
            MODULE,
            "classify_regular_points",
            format!("need at least {NEIGHBORHOOD} atoms, got {}", sol.len()),
        ));
    }
    let mut rows = Vec::with_capacity(probes.len());
    let weights = vec![1.0f64; NEIGHBORHOOD];
    for &p in probes {
        let mut order: Vec<usize> = (0..sol.len()).collect();
        order.sort_by(|&i, &j| {
            let di = sub(sol.source[i], p);
            let dj = sub(sol.source[j], p);
            let a = di[0] * di[0] + di[1] * di[1];
            let b = dj[0] * dj[0] + dj[1] * dj[1];
            a.partial_cmp(&b).expect("finite atom distances").then(i.cmp(&j))
        });
        let近 = &order[..NEIGHBORHOOD];
        let pts: Vec<Point> = 近.iter().map(|&i| sol.source[i]).collect();
        let vals: Vec<Point> = 近.iter().map(|&i| sol.map(i)).collect();
        let (a_fit, c_fit) = affine_fit(&pts, &vals, &weights)?;
        let a_sym = a_fit.symmetrize();
        let [lo, _] = a_sym.sym_eigenvalues();
        if lo <= 1e-9 {
            rows.push(ClassificationRow {
                point: p,
                criterion: f64::INFINITY,
                label: PointLabel::Skipped,
            });
            continue;
        }
        let s_half = a_sym.sym_sqrt()?;
        let s_half_inv = s_half.inverse()?;
        let y0 = add(c_fit, a_fit.apply(p));
        let local = sol
            .recenter(p)
            .transform(&s_half, &s_half_inv, sub(y0, p));
        let fwd = forward_ball_excess(&local, [0.0, 0.0], 2.0 * radius).integral();
        let inv = inverse_ball_excess(&local, [0.0, 0.0], 2.0 * radius).integral();
        let gamma = holder_gamma_sq(pair, p, 2.0 * radius)?;
        let criterion = fwd + inv + radius.powf(2.0 * pair.alpha()) * gamma;
        let label = if criterion <= cfg.epsilon {
            PointLabel::Regular
        } else {
            PointLabel::Flagged
        };
        rows.push(ClassificationRow {
            point: p,
            criterion,
            label,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{generate_test_density, GridSpec, TestDensityKind};

    fn uniform_density(nodes: usize, pad: usize, center: Point) -> GridDensity {
        generate_test_density(
            TestDensityKind::Uniform { value: 1.0 },
            &GridSpec {
                center,
                half_extent: 1.0,
                nodes_per_axis: nodes,
                pad_cells: pad,
                alpha: 0.5,
            },
        )
        .unwrap()
    }

    fn shift_pair(nodes: usize, pad: usize, eps: f64) -> DensityPair {
        DensityPair::new(
            uniform_density(nodes, pad, [0.0, 0.0]),
            uniform_density(nodes, pad, [eps, 0.0]),
            1e-12,
        )
        .unwrap()
    }

    fn smooth_pair(nodes: usize, pad: usize, eps: f64) -> DensityPair {
        let rho0 = uniform_density(nodes, pad, [0.0, 0.0]);
        let rho1 = generate_test_density(
            TestDensityKind::SmoothPerturbation { amplitude: eps },
            &GridSpec {
                center: [0.0, 0.0],
                half_extent: 1.0,
                nodes_per_axis: nodes,
                pad_cells: pad,
                alpha: 0.5,
            },
        )
        .unwrap();
        DensityPair::new(rho0, rho1, 1e-6).unwrap()
    }

    fn test_config() -> RegularityConfig {
        let mut cfg = RegularityConfig::default_for(0.5);
        cfg.n_atoms = 576;
        cfg.n_modes = 8;
        cfg.n_radial = 96;
        cfg.regrid_nodes = 48;
        cfg
    }

    #[test]
    fn config_rejects_bad_parameters() {
        let mut cfg = RegularityConfig::default_for(0.5);
        cfg.theta = 0.6;
        assert!(cfg.validate().is_err());
        let mut cfg = RegularityConfig::default_for(0.5);
        cfg.alpha_prime = 1.0;
        assert!(cfg.validate().is_err());
        let cfg = RegularityConfig::default_for(0.5);
        assert!(cfg.check_exponents(0.9).is_err());
    }

    #[test]
    fn identity_pair_has_zero_excess() {
        let pair = DensityPair::new(
            uniform_density(16, 4, [0.0, 0.0]),
            uniform_density(16, 4, [0.0, 0.0]),
            1e-12,
        )
        .unwrap();
        let sol = solve_ot(&pair, 64).unwrap();
        let ex = forward_ball_excess(&sol, [0.0, 0.0], 0.75);
        assert_eq!(ex.mean(), 0.0);
        assert_eq!(ex.integral(), 0.0);
        let crit = epsilon_criterion(&sol, &pair, [0.0, 0.0], 0.375).unwrap();
        assert!(crit < 1e-15, "criterion {crit}");
    }

    #[test]
    fn shift_excess_matches_closed_form() {
        let eps = 0.125;
        let pair = shift_pair(32, 8, eps);
        let sol = solve_ot(&pair, 256).unwrap();
        let r = 0.75;
        let fwd = forward_ball_excess(&sol, [0.0, 0.0], r);
        assert!(
            (fwd.mean() - eps * eps / (r * r)).abs() < 1e-12,
            "forward mean excess {}",
            fwd.mean()
        );
        let inv = inverse_ball_excess(&sol, [0.0, 0.0], r);
        assert!(
            (inv.mean() - eps * eps / (r * r)).abs() < 1e-12,
            "inverse mean excess {}",
            inv.mean()
        );
    }

    #[test]
    fn shell_selection_reports_min_below_mean() {
        let pair = shift_pair(32, 8, 0.125);
        let sol = solve_ot(&pair, 256).unwrap();
        let shells = select_good_radius(&sol, [0.0, 0.0], 0.6, 0.75, 8).unwrap();
        assert!(shells.min_score <= shells.mean_score + 1e-15);
        assert!(shells.chosen >= 0.6 && shells.chosen <= 0.75);
    }

    #[test]
    fn harmonic_step_recovers_shift_frame() {
        let eps = 0.125;
        let pair = shift_pair(48, 12, eps);
        let sol = solve_ot(&pair, 576).unwrap();
        let cfg = test_config();
        let step = harmonic_approximation(&sol, &pair, [0.0, 0.0], 0.75, &cfg).unwrap();
        assert!(
            (step.frame.b[0] - eps).abs() < 0.15 * eps,
            "offset {:?}",
            step.frame.b
        );
        assert!(step.frame.b[1].abs() < 0.15 * eps);
        assert!(
            step.frame.matrix.frobenius_distance(&Mat2::IDENTITY) < 0.05,
            "shear {:?}",
            step.frame.matrix
        );
        assert!((step.frame.lambda - 1.0).abs() < 1e-9);
        assert!(
            step.residual < 0.2 * step.excess,
            "residual {} vs excess {}",
            step.residual,
            step.excess
        );
    }

    #[test]
    fn one_step_removes_a_pure_shift() {
        let pair = shift_pair(48, 12, 0.125);
        let sol = solve_ot(&pair, 576).unwrap();
        let cfg = test_config();
        let report = one_step_improvement(&sol, &pair, [0.0, 0.0], 0.75, &cfg).unwrap();
        assert!(
            report.excess_after < 0.1 * report.excess_before,
            "after {} vs before {}",
            report.excess_after,
            report.excess_before
        );
        assert!(
            report.excess_after <= report.decay_bound,
            "after {} vs bound {}",
            report.excess_after,
            report.decay_bound
        );
    }

    #[test]
    fn one_step_improves_smooth_perturbation() {
        let pair = smooth_pair(48, 12, 0.02);
        let sol = solve_ot(&pair, 576).unwrap();
        let cfg = test_config();
        let report = one_step_improvement(&sol, &pair, [0.0, 0.0], 0.4, &cfg).unwrap();
        assert!(
            report.excess_after < report.excess_before,
            "after {} vs before {}",
            report.excess_after,
            report.excess_before
        );
        assert!(
            report.excess_after <= report.decay_bound,
            "after {} vs bound {}",
            report.excess_after,
            report.decay_bound
        );
        let frame_measure = report.frame_dist_sq + report.offset_sq_over_r2;
        assert!(
            frame_measure <= 50.0 * report.criterion,
            "frame measure {frame_measure} vs criterion {}",
            report.criterion
        );
        assert!(
            report.lambda_dev_sq <= 50.0 * report.criterion,
            "lambda deviation {} vs criterion {}",
            report.lambda_dev_sq,
            report.criterion
        );
    }

    #[test]
    fn campanato_rows_decay_and_rerun_identically() {
        let pair = smooth_pair(48, 12, 0.02);
        let cfg = test_config();
        let rows = campanato_iterate(&pair, [0.0, 0.0], 0.4, 2, &cfg).unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            assert!(
                row.pass,
                "step {} ratio {} exceeds {}",
                row.k, row.ratio_to_theta2alpha, cfg.c_iterate
            );
        }
        assert!(rows[1].excess < rows[0].excess, "{} vs {}", rows[1].excess, rows[0].excess);
        let rows2 = campanato_iterate(&pair, [0.0, 0.0], 0.4, 2, &cfg).unwrap();
        for (a, b) in rows.iter().zip(rows2.iter()) {
            assert_eq!(a.excess.to_bits(), b.excess.to_bits());
            assert_eq!(a.criterion.to_bits(), b.criterion.to_bits());
            assert_eq!(a.lambda.to_bits(), b.lambda.to_bits());
        }
    }

    fn crease_pair(nodes: usize, pad: usize, eps: f64) -> DensityPair {
        let rho0 = uniform_density(nodes, pad, [0.0, 0.0]);
        let h = rho0.h();
        let half_y = 1.0 + pad as f64 * h;
        let lo_x = -(1.0 - eps) - pad as f64 * h;
        let hi_x = (1.0 + eps) + pad as f64 * h;
        let nx = ((hi_x - lo_x) / h).round() as usize;
        let ny = rho0.ny();
        let origin = [lo_x + 0.5 * h, -half_y + 0.5 * h];
        let mut values = vec![0.0f64; nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                let x = origin[0] + ix as f64 * h;
                let inside_y = (origin[1] + iy as f64 * h).abs() <= 1.0 - 0.5 * h;
                if !inside_y {
                    continue;
                }
                if x > 0.0 && x <= 1.0 + eps - 0.5 * h {
                    values[iy * nx + ix] = 1.0 / (1.0 + eps);
                } else if x < 0.0 && x >= -(1.0 - eps) + 0.5 * h {
                    values[iy * nx + ix] = 1.0 / (1.0 - eps);
                }
            }
        }
        let rho1 = GridDensity::new(origin, h, nx, ny, values, 0.5).unwrap();
        DensityPair::new(rho0, rho1, 0.02).unwrap()
    }

    #[test]
    fn classification_flags_the_crease_and_clears_the_identity() {
        let cfg = test_config();

        let identity = DensityPair::new(
            uniform_density(32, 8, [0.0, 0.0]),
            uniform_density(32, 8, [0.0, 0.0]),
            1e-12,
        )
        .unwrap();
        let sol = solve_ot(&identity, 1024).unwrap();
        let probes = probe_grid([0.0, 0.0], 0.5, 5);
        let rows = classify_regular_points(&sol, &identity, &probes, 0.2, &cfg).unwrap();
        assert!(rows.iter().all(|r| r.label == PointLabel::Regular));

        let crease = crease_pair(32, 8, 0.5);
        let sol = solve_ot(&crease, 1024).unwrap();
        let probes = probe_grid([0.0, 0.0], 0.6, 7);
        let rows = classify_regular_points(&sol, &crease, &probes, 0.2, &cfg).unwrap();
        let flagged: Vec<&ClassificationRow> =
            rows.iter().filter(|r| r.label == PointLabel::Flagged).collect();
        assert!(!flagged.is_empty(), "no probe flagged near the crease");
        assert!(
            flagged.len() < rows.len(),
            "every probe flagged; classification has no contrast"
        );
        for row in &flagged {
            assert!(
                row.point[0].abs() <= 0.5,
                "flagged probe {:?} far from the crease",
                row.point
            );
        }
        for row in rows.iter().filter(|r| r.point[0].abs() < 1e-12) {
            assert!(
                row.label == PointLabel::Flagged,
                "crease-line probe {:?} not flagged (criterion {})",
                row.point,
                row.criterion
            );
        }
    }
}
