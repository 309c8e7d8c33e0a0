//! Densities sampled on uniform rectangular grids.
//!
//! A density is a nonnegative function known at the nodes of a uniform grid
//! with spacing `h`; off-node evaluation is bilinear, clamped to the node
//! hull. Mass is the plain Riemann sum h^2 * sum(values), so generators place
//! nodes at cell centers to make box masses exact. Holder seminorms are
//! estimated by an exhaustive scan over node pairs inside a ball, which is a
//! certified lower bound of the continuum seminorm and exact for the bump
//! profiles used in tests.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{sub, Point};

const MODULE: &str = "density";

/// Maximum number of in-ball nodes scanned pairwise before switching to a
/// deterministic stride subsample.
pub const SEMINORM_SCAN_CAP: usize = 4096;

/// Node layout of a uniform grid: `origin` is the position of node (0, 0)
/// and node (ix, iy) sits at origin + h * (ix, iy).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub origin: Point,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridGeometry {
    pub fn node(&self, ix: usize, iy: usize) -> Point {
        [
            self.origin[0] + self.h * ix as f64,
            self.origin[1] + self.h * iy as f64,
        ]
    }

    pub fn max_corner(&self) -> Point {
        self.node(self.nx - 1, self.ny - 1)
    }

    pub fn hull_contains(&self, p: Point) -> bool {
        let hi = self.max_corner();
        p[0] >= self.origin[0] && p[0] <= hi[0] && p[1] >= self.origin[1] && p[1] <= hi[1]
    }

    /// Lower cell index and fractional offsets for a point inside the hull.
    /// The top edges fold into the last cell with fraction 1.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize, f64, f64)> {
        if !self.hull_contains(p) {
            return None;
        }
        let gx = (p[0] - self.origin[0]) / self.h;
        let gy = (p[1] - self.origin[1]) / self.h;
        let mut ix = gx.floor() as usize;
        let mut iy = gy.floor() as usize;
        if ix >= self.nx - 1 {
            ix = self.nx - 2;
        }
        if iy >= self.ny - 1 {
            iy = self.ny - 2;
        }
        Some((ix, iy, gx - ix as f64, gy - iy as f64))
    }

    /// Index ranges of nodes whose positions can lie within `radius` of
    /// `center`; the caller still checks exact distances.
    pub fn ball_index_ranges(
        &self,
        center: Point,
        radius: f64,
    ) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let lo_ix = ((center[0] - radius - self.origin[0]) / self.h).floor().max(0.0) as usize;
        let lo_iy = ((center[1] - radius - self.origin[1]) / self.h).floor().max(0.0) as usize;
        let hi_ix = (((center[0] + radius - self.origin[0]) / self.h).ceil() as isize + 1)
            .clamp(0, self.nx as isize) as usize;
        let hi_iy = (((center[1] + radius - self.origin[1]) / self.h).ceil() as isize + 1)
            .clamp(0, self.ny as isize) as usize;
        (lo_ix.min(self.nx)..hi_ix, lo_iy.min(self.ny)..hi_iy)
    }
}

/// Nonnegative density sampled on a uniform grid, with the Holder exponent
/// its seminorms are measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    geometry: GridGeometry,
    values: Vec<f64>,
    alpha: f64,
}

impl GridDensity {
    pub fn new(origin: Point, h: f64, nx: usize, ny: usize, values: Vec<f64>, alpha: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::domain(
                MODULE,
                "new",
                format!("grid must be at least 2x2, got {nx}x{ny}"),
            ));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::domain(MODULE, "new", format!("spacing must be positive, got {h}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(
                MODULE,
                "new",
                format!("holder exponent must lie in (0, 1), got {alpha}"),
            ));
        }
        if values.len() != nx * ny {
            return Err(Error::domain(
                MODULE,
                "new",
                format!("expected {} values for {nx}x{ny} grid, got {}", nx * ny, values.len()),
            ));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::domain(
                    MODULE,
                    "new",
                    format!("value at flat index {i} is {v}; densities must be finite and nonnegative"),
                ));
            }
        }
        let density = GridDensity {
            geometry: GridGeometry { origin, h, nx, ny },
            values,
            alpha,
        };
        if density.mass() <= 0.0 {
            return Err(Error::domain(MODULE, "new", "density has zero total mass"));
        }
        Ok(density)
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    pub fn nx(&self) -> usize {
        self.geometry.nx
    }

    pub fn ny(&self) -> usize {
        self.geometry.ny
    }

    pub fn h(&self) -> f64 {
        self.geometry.h
    }

    pub fn origin(&self) -> Point {
        self.geometry.origin
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.geometry.nx + ix]
    }

    pub fn node_position(&self, ix: usize, iy: usize) -> Point {
        self.geometry.node(ix, iy)
    }

    /// Riemann mass h^2 * sum(values).
    pub fn mass(&self) -> f64 {
        self.geometry.h * self.geometry.h * self.values.iter().sum::<f64>()
    }

    /// Smallest strictly positive node value, if any node is positive.
    pub fn min_positive(&self) -> Option<f64> {
        self.values
            .iter()
            .copied()
            .filter(|v| *v > 0.0)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.min(v))))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Bilinear interpolation, clamped to the node hull so that evaluation a
    /// hair outside the hull returns the edge value instead of extrapolating.
    pub fn eval(&self, p: Point) -> f64 {
        let hi = self.geometry.max_corner();
        let clamped = [
            p[0].clamp(self.geometry.origin[0], hi[0]),
            p[1].clamp(self.geometry.origin[1], hi[1]),
        ];
        let (ix, iy, fx, fy) = self
            .geometry
            .cell_of(clamped)
            .expect("clamped point is inside the hull");
        let v00 = self.value_at(ix, iy);
        let v10 = self.value_at(ix + 1, iy);
        let v01 = self.value_at(ix, iy + 1);
        let v11 = self.value_at(ix + 1, iy + 1);
        v00 * (1.0 - fx) * (1.0 - fy) + v10 * fx * (1.0 - fy) + v01 * (1.0 - fx) * fy + v11 * fx * fy
    }

    /// Node indices whose positions lie within `radius` of `center`.
    pub fn nodes_in_ball(&self, center: Point, radius: f64) -> Vec<(usize, usize)> {
        let (rx, ry) = self.geometry.ball_index_ranges(center, radius);
        let r2 = radius * radius;
        let mut out = Vec::new();
        for iy in ry {
            for ix in rx.clone() {
                let d = sub(self.geometry.node(ix, iy), center);
                if d[0] * d[0] + d[1] * d[1] <= r2 {
                    out.push((ix, iy));
                }
            }
        }
        out
    }
}

/// Source and target density sharing a Holder exponent, with masses equal up
/// to `mass_tol` (relative).
#[derive(Debug, Clone)]
pub struct DensityPair {
    pub rho0: GridDensity,
    pub rho1: GridDensity,
    pub mass_tol: f64,
}

impl DensityPair {
    pub fn new(rho0: GridDensity, rho1: GridDensity, mass_tol: f64) -> Result<Self> {
        let rel_spacing = (rho0.h() - rho1.h()).abs() / rho0.h().max(rho1.h());
        if rel_spacing > 1e-9 {
            return Err(Error::domain(
                MODULE,
                "pair",
                format!("grids must share spacing: {} vs {}", rho0.h(), rho1.h()),
            ));
        }
        Self::from_parts(rho0, rho1, mass_tol, "pair")
    }

    /// Constructor for pairs produced by coordinate changes (normalization,
    /// tilting), where the target grid spacing legitimately differs from the
    /// source spacing by the dilation factor.
    pub(crate) fn from_parts(
        rho0: GridDensity,
        rho1: GridDensity,
        mass_tol: f64,
        op: &'static str,
    ) -> Result<Self> {
        if (rho0.alpha() - rho1.alpha()).abs() > 1e-15 {
            return Err(Error::domain(
                MODULE,
                op,
                format!("holder exponents must match: {} vs {}", rho0.alpha(), rho1.alpha()),
            ));
        }
        let (m0, m1) = (rho0.mass(), rho1.mass());
        let rel = (m0 - m1).abs() / m0.max(m1);
        if rel > mass_tol {
            return Err(Error::domain(
                MODULE,
                op,
                format!("masses differ by relative {rel:.3e} > mass_tol {mass_tol:.3e} ({m0} vs {m1})"),
            ));
        }
        Ok(DensityPair { rho0, rho1, mass_tol })
    }

    pub fn alpha(&self) -> f64 {
        self.rho0.alpha()
    }
}

/// Largest |rho(x) - rho(y)| / |x - y|^alpha over node pairs in the closed
/// ball of the given radius. Above [`SEMINORM_SCAN_CAP`] in-ball nodes, a
/// deterministic stride subsample keeps the scan quadratic in the cap; the
/// result is then still a lower bound but may dip slightly when the ball
/// grows, so monotonicity in the radius is only exact below the cap.
pub fn holder_seminorm(rho: &GridDensity, radius: f64, center: Point) -> Result<f64> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::domain(
            MODULE,
            "holder_seminorm",
            format!("radius must be positive, got {radius}"),
        ));
    }
    let mut nodes = rho.nodes_in_ball(center, radius);
    if nodes.len() < 2 {
        return Err(Error::domain(
            MODULE,
            "holder_seminorm",
            format!(
                "ball of radius {radius} around ({}, {}) contains {} grid nodes; need at least 2",
                center[0],
                center[1],
                nodes.len()
            ),
        ));
    }
    if nodes.len() > SEMINORM_SCAN_CAP {
        let stride = nodes.len().div_ceil(SEMINORM_SCAN_CAP);
        nodes = nodes.into_iter().step_by(stride).collect();
    }
    let alpha = rho.alpha();
    let mut best = 0.0f64;
    for (i, &(ix, iy)) in nodes.iter().enumerate() {
        let pi = rho.node_position(ix, iy);
        let vi = rho.value_at(ix, iy);
        for &(jx, jy) in &nodes[i + 1..] {
            let pj = rho.node_position(jx, jy);
            let dv = (vi - rho.value_at(jx, jy)).abs();
            if dv <= best * 1e-18 {
                continue;
            }
            let d2 = {
                let d = sub(pi, pj);
                d[0] * d[0] + d[1] * d[1]
            };
            let q = dv / d2.powf(alpha * 0.5);
            if q > best {
                best = q;
            }
        }
    }
    Ok(best)
}

/// Bookkeeping of a normalization at a base point pair: both densities are
/// divided by their base values and the target frame is dilated so that mass
/// balance is preserved exactly.
#[derive(Debug, Clone, Copy)]
pub struct ScalingRecord {
    pub x0: Point,
    pub y0: Point,
    pub source_value: f64,
    pub target_value: f64,
    /// New-to-old target coordinate factor mu = (rho0(x0)/rho1(y0))^(1/d):
    /// a point yhat of the normalized target frame corresponds to
    /// y0 + mu * (yhat - y0) in the original frame.
    pub dilation: f64,
}

/// Rescale a pair so the source density is 1 at `x0` and the target density
/// is 1 at `y0`. Source values are divided by rho0(x0); the target is divided
/// by rho1(y0) and its coordinates are dilated about `y0` by the factor in
/// the returned record, which keeps the two total masses equal exactly.
/// Node values map one to one, so the record inverts without resampling.
pub fn normalize_at(pair: &DensityPair, x0: Point, y0: Point) -> Result<(DensityPair, ScalingRecord)> {
    let v0 = pair.rho0.eval(x0);
    let v1 = pair.rho1.eval(y0);
    if v0 <= 0.0 || v1 <= 0.0 {
        return Err(Error::domain(
            MODULE,
            "normalize_at",
            format!("base values must be positive: rho0(x0) = {v0}, rho1(y0) = {v1}"),
        ));
    }
    let mu = (v0 / v1).sqrt();
    let rho0 = GridDensity::new(
        pair.rho0.origin(),
        pair.rho0.h(),
        pair.rho0.nx(),
        pair.rho0.ny(),
        pair.rho0.values().iter().map(|v| v / v0).collect(),
        pair.rho0.alpha(),
    )?;
    let g1 = pair.rho1.geometry();
    let new_origin = [
        y0[0] + (g1.origin[0] - y0[0]) / mu,
        y0[1] + (g1.origin[1] - y0[1]) / mu,
    ];
    let rho1 = GridDensity::new(
        new_origin,
        g1.h / mu,
        g1.nx,
        g1.ny,
        pair.rho1.values().iter().map(|v| v / v1).collect(),
        pair.rho1.alpha(),
    )?;
    let record = ScalingRecord {
        x0,
        y0,
        source_value: v0,
        target_value: v1,
        dilation: mu,
    };
    Ok((
        DensityPair::from_parts(rho0, rho1, pair.mass_tol, "normalize_at")?,
        record,
    ))
}

/// Invert [`normalize_at`]: multiply values back and undo the target frame
/// dilation. Exact up to floating-point rounding because nodes map one to one.
pub fn denormalize(pair: &DensityPair, record: &ScalingRecord) -> Result<DensityPair> {
    let rho0 = GridDensity::new(
        pair.rho0.origin(),
        pair.rho0.h(),
        pair.rho0.nx(),
        pair.rho0.ny(),
        pair.rho0.values().iter().map(|v| v * record.source_value).collect(),
        pair.rho0.alpha(),
    )?;
    let g1 = pair.rho1.geometry();
    let mu = record.dilation;
    let old_origin = [
        record.y0[0] + (g1.origin[0] - record.y0[0]) * mu,
        record.y0[1] + (g1.origin[1] - record.y0[1]) * mu,
    ];
    let rho1 = GridDensity::new(
        old_origin,
        g1.h * mu,
        g1.nx,
        g1.ny,
        pair.rho1.values().iter().map(|v| v * record.target_value).collect(),
        pair.rho1.alpha(),
    )?;
    DensityPair::from_parts(rho0, rho1, pair.mass_tol, "denormalize")
}

/// Analytic density profiles used by tests and experiment instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestDensityKind {
    /// Constant `value` on the core box.
    Uniform { value: f64 },
    /// 1 + coefficient * |x - center|^alpha; its Holder seminorm in any ball
    /// around the center equals the coefficient exactly.
    HolderBump { coefficient: f64 },
    /// 1 + amplitude * sin(pi k u / L) * sin(pi k v / L) in box coordinates;
    /// full periods cancel in the Riemann sum, so the mass equals the box
    /// area exactly. Requires |amplitude| < 1.
    SmoothPerturbation { amplitude: f64, frequency: u32 },
}

/// Cell-centered grid covering the box [center - half_extent, center + half_extent]^2
/// with `nodes_per_axis`^2 interior nodes, surrounded by `pad_cells` rings of
/// zero-valued nodes so that interpolation targets stay inside the hull.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub center: Point,
    pub half_extent: f64,
    pub nodes_per_axis: usize,
    pub pad_cells: usize,
    pub alpha: f64,
}

pub fn generate_test_density(kind: TestDensityKind, spec: &GridSpec) -> Result<GridDensity> {
    if spec.nodes_per_axis < 2 {
        return Err(Error::domain(
            MODULE,
            "generate_test_density",
            format!("need at least 2 nodes per axis, got {}", spec.nodes_per_axis),
        ));
    }
    if !(spec.half_extent > 0.0) {
        return Err(Error::domain(
            MODULE,
            "generate_test_density",
            format!("half_extent must be positive, got {}", spec.half_extent),
        ));
    }
    if let TestDensityKind::SmoothPerturbation { amplitude, frequency } = kind {
        if amplitude.abs() >= 1.0 {
            return Err(Error::domain(
                MODULE,
                "generate_test_density",
                format!("smooth perturbation amplitude must satisfy |a| < 1, got {amplitude}"),
            ));
        }
        if frequency == 0 {
            return Err(Error::domain(
                MODULE,
                "generate_test_density",
                "smooth perturbation frequency must be at least 1",
            ));
        }
    }
    if let TestDensityKind::HolderBump { coefficient } = kind {
        if coefficient < 0.0 {
            return Err(Error::domain(
                MODULE,
                "generate_test_density",
                format!("bump coefficient must be nonnegative, got {coefficient}"),
            ));
        }
    }
    let h = 2.0 * spec.half_extent / spec.nodes_per_axis as f64;
    let n_total = spec.nodes_per_axis + 2 * spec.pad_cells;
    let origin = [
        spec.center[0] - spec.half_extent + 0.5 * h - spec.pad_cells as f64 * h,
        spec.center[1] - spec.half_extent + 0.5 * h - spec.pad_cells as f64 * h,
    ];
    let mut values = Vec::with_capacity(n_total * n_total);
    for iy in 0..n_total {
        for ix in 0..n_total {
            let in_core = ix >= spec.pad_cells
                && ix < spec.pad_cells + spec.nodes_per_axis
                && iy >= spec.pad_cells
                && iy < spec.pad_cells + spec.nodes_per_axis;
            if !in_core {
                values.push(0.0);
                continue;
            }
            let p = [origin[0] + ix as f64 * h, origin[1] + iy as f64 * h];
            let u = p[0] - spec.center[0];
            let v = p[1] - spec.center[1];
            let val = match kind {
                TestDensityKind::Uniform { value } => value,
                TestDensityKind::HolderBump { coefficient } => {
                    1.0 + coefficient * (u * u + v * v).powf(spec.alpha * 0.5)
                }
                TestDensityKind::SmoothPerturbation { amplitude, frequency } => {
                    let k = std::f64::consts::PI * frequency as f64 / spec.half_extent;
                    1.0 + amplitude * (k * u).sin() * (k * v).sin()
                }
            };
            values.push(val);
        }
    }
    GridDensity::new(origin, h, n_total, n_total, values, spec.alpha)
}

/// Serialize as one header line `nx ny h x0 y0 alpha` followed by the
/// row-major node values (y-rows outer), 17 significant digits.
pub fn write_density(rho: &GridDensity, path: &Path) -> Result<()> {
    let g = rho.geometry();
    let mut out = String::new();
    writeln!(
        out,
        "{} {} {} {} {} {}",
        g.nx,
        g.ny,
        fmt17(g.h),
        fmt17(g.origin[0]),
        fmt17(g.origin[1]),
        fmt17(rho.alpha())
    )
    .expect("string write");
    for iy in 0..g.ny {
        let row: Vec<String> = (0..g.nx).map(|ix| fmt17(rho.value_at(ix, iy))).collect();
        writeln!(out, "{}", row.join(" ")).expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_density(path: &Path) -> Result<GridDensity> {
    let text = std::fs::read_to_string(path)?;
    let mut tokens = text.split_whitespace();
    let mut next = |what: &str| -> Result<&str> {
        tokens
            .next()
            .ok_or_else(|| Error::Parse(format!("density file ended before {what}")))
    };
    let nx: usize = next("nx")?
        .parse()
        .map_err(|e| Error::Parse(format!("nx: {e}")))?;
    let ny: usize = next("ny")?
        .parse()
        .map_err(|e| Error::Parse(format!("ny: {e}")))?;
    let h: f64 = next("h")?
        .parse()
        .map_err(|e| Error::Parse(format!("h: {e}")))?;
    let x0: f64 = next("x0")?
        .parse()
        .map_err(|e| Error::Parse(format!("x0: {e}")))?;
    let y0: f64 = next("y0")?
        .parse()
        .map_err(|e| Error::Parse(format!("y0: {e}")))?;
    let alpha: f64 = next("alpha")?
        .parse()
        .map_err(|e| Error::Parse(format!("alpha: {e}")))?;
    let mut values = Vec::with_capacity(nx * ny);
    for i in 0..nx * ny {
        let v: f64 = next("node values")?
            .parse()
            .map_err(|e| Error::Parse(format!("value {i}: {e}")))?;
        values.push(v);
    }
    if tokens.next().is_some() {
        return Err(Error::Parse("trailing tokens after node values".into()));
    }
    GridDensity::new([x0, y0], h, nx, ny, values, alpha)
}

pub(crate) fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;

    fn unit_spec(n: usize) -> GridSpec {
        GridSpec {
            center: [0.0, 0.0],
            half_extent: 1.0,
            nodes_per_axis: n,
            pad_cells: 0,
            alpha: 0.5,
        }
    }

    #[test]
    fn uniform_density_mass_is_exact() {
        let rho = generate_test_density(TestDensityKind::Uniform { value: 1.0 }, &unit_spec(32)).unwrap();
        assert!((rho.mass() - 4.0).abs() < 1e-12, "mass = {}", rho.mass());
    }

    #[test]
    fn smooth_perturbation_mass_cancels_exactly() {
        let rho = generate_test_density(
            TestDensityKind::SmoothPerturbation { amplitude: 0.25, frequency: 2 },
            &unit_spec(48),
        )
        .unwrap();
        assert!((rho.mass() - 4.0).abs() < 1e-12, "mass = {}", rho.mass());
        assert!(rho.min_positive().unwrap() >= 0.75 - 1e-12);
    }

    #[test]
    fn rejects_negative_values() {
        let err = GridDensity::new([0.0, 0.0], 0.1, 2, 2, vec![1.0, -0.5, 1.0, 1.0], 0.5);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_nan_values() {
        let err = GridDensity::new([0.0, 0.0], 0.1, 2, 2, vec![1.0, f64::NAN, 1.0, 1.0], 0.5);
        assert!(err.is_err());
    }

    #[test]
    fn bilinear_eval_reproduces_plane() {
        // Bilinear interpolation is exact on affine functions.
        let n = 8;
        let h = 0.25;
        let f = |p: Point| 2.0 + 0.5 * p[0] - 0.25 * p[1];
        let mut values = Vec::new();
        for iy in 0..n {
            for ix in 0..n {
                values.push(f([ix as f64 * h, iy as f64 * h]));
            }
        }
        let rho = GridDensity::new([0.0, 0.0], h, n, n, values, 0.5).unwrap();
        for &p in &[[0.3, 0.9], [1.11, 0.02], [1.74, 1.74]] {
            assert!((rho.eval(p) - f(p)).abs() < 1e-13);
        }
    }

    #[test]
    fn seminorm_two_node_case() {
        // Two nodes at distance h with values 1 and 1 + delta give delta / h^alpha.
        let h = 0.125;
        let delta = 0.3;
        let rho = GridDensity::new(
            [0.0, 0.0],
            h,
            2,
            2,
            vec![1.0, 1.0 + delta, 1.0, 1.0 + delta],
            0.5,
        )
        .unwrap();
        let s = holder_seminorm(&rho, 1.0, [0.5 * h, 0.5 * h]).unwrap();
        let expect = delta / h.powf(0.5);
        assert!((s - expect).abs() < 1e-12, "s = {s}, expect = {expect}");
    }

    #[test]
    fn seminorm_of_holder_bump_equals_coefficient() {
        let c = 0.7;
        let mut spec = unit_spec(33);
        spec.alpha = 0.5;
        let rho = generate_test_density(TestDensityKind::HolderBump { coefficient: c }, &spec).unwrap();
        // Grid contains a node at the center because nodes_per_axis is odd.
        let s = holder_seminorm(&rho, 0.9, [0.0, 0.0]).unwrap();
        assert!(
            (s - c).abs() < 1e-10,
            "seminorm {s} should equal the bump coefficient {c}"
        );
    }

    #[test]
    fn seminorm_nondecreasing_in_radius() {
        let rho = generate_test_density(
            TestDensityKind::SmoothPerturbation { amplitude: 0.3, frequency: 3 },
            &unit_spec(40),
        )
        .unwrap();
        let mut last = 0.0;
        for radius in [0.2, 0.35, 0.5, 0.8] {
            let s = holder_seminorm(&rho, radius, [0.05, -0.1]).unwrap();
            assert!(s >= last - 1e-15, "seminorm dipped: {s} < {last} at radius {radius}");
            last = s;
        }
    }

    #[test]
    fn seminorm_needs_two_nodes() {
        let rho = generate_test_density(TestDensityKind::Uniform { value: 1.0 }, &unit_spec(16)).unwrap();
        assert!(holder_seminorm(&rho, 1e-6, [0.0, 0.0]).is_err());
    }

    #[test]
    fn normalize_at_dilation_factor_and_masses() {
        // rho0 = 1 and rho1 = 4 with a quarter of the support: the dilation
        // factor is (1/4)^(1/2) = 0.5 and masses stay equal exactly.
        let rho0 = generate_test_density(TestDensityKind::Uniform { value: 1.0 }, &unit_spec(32)).unwrap();
        let spec1 = GridSpec {
            half_extent: 0.5,
            ..unit_spec(32)
        };
        let rho1 = generate_test_density(TestDensityKind::Uniform { value: 4.0 }, &spec1).unwrap();
        let pair = DensityPair::from_parts(rho0, rho1, 1e-9, "test").unwrap();
        let (normalized, record) = normalize_at(&pair, [0.0, 0.0], [0.0, 0.0]).unwrap();
        assert!((record.dilation - 0.5).abs() < 1e-12);
        assert!((normalized.rho0.mass() - normalized.rho1.mass()).abs() < 1e-12 * normalized.rho0.mass());
        assert!((normalized.rho1.eval([0.0, 0.0]) - 1.0).abs() < 1e-12);
        // The dilated target support now matches the unit box.
        assert!((normalized.rho1.h() - 2.0 * pair.rho1.h()).abs() < 1e-12);
    }

    #[test]
    fn normalize_then_denormalize_is_identity() {
        let rho0 = generate_test_density(
            TestDensityKind::SmoothPerturbation { amplitude: 0.2, frequency: 1 },
            &unit_spec(24),
        )
        .unwrap();
        let rho1 = generate_test_density(TestDensityKind::Uniform { value: 1.0 }, &unit_spec(24)).unwrap();
        let pair = DensityPair::new(rho0.clone(), rho1.clone(), 1e-9).unwrap();
        let (normalized, record) = normalize_at(&pair, [0.3, -0.2], [0.1, 0.4]).unwrap();
        let back = denormalize(&normalized, &record).unwrap();
        for (a, b) in back.rho0.values().iter().zip(rho0.values()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        for (a, b) in back.rho1.values().iter().zip(rho1.values()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        assert!((back.rho1.h() - rho1.h()).abs() < 1e-15);
        assert!(norm(sub(back.rho1.origin(), rho1.origin())) < 1e-12);
    }

    #[test]
    fn density_file_round_trip() {
        let rho = generate_test_density(
            TestDensityKind::SmoothPerturbation { amplitude: 0.15, frequency: 2 },
            &unit_spec(12),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rho.txt");
        write_density(&rho, &path).unwrap();
        let back = read_density(&path).unwrap();
        assert_eq!(back.nx(), rho.nx());
        assert_eq!(back.ny(), rho.ny());
        for (a, b) in back.values().iter().zip(rho.values()) {
            assert_eq!(a, b, "17 significant digits must round-trip f64 exactly");
        }
    }

    #[test]
    fn density_file_rejects_negative_entry() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "2 2 0.5 0.0 0.0 0.5\n1.0 1.0\n1.0 -2.0\n").unwrap();
        assert!(read_density(&path).is_err());
    }

    #[test]
    fn pad_ring_is_zero_and_core_positive() {
        let spec = GridSpec {
            pad_cells: 3,
            ..unit_spec(16)
        };
        let rho = generate_test_density(TestDensityKind::Uniform { value: 2.0 }, &spec).unwrap();
        assert_eq!(rho.nx(), 22);
        assert_eq!(rho.value_at(0, 0), 0.0);
        assert_eq!(rho.value_at(3, 3), 2.0);
        assert!((rho.mass() - 8.0).abs() < 1e-12);
    }
}
