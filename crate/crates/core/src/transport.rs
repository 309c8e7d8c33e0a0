//! Discrete quadratic optimal transport between grid densities.
//!
//! Densities are quantized into equal-mass atoms by a deterministic
//! stratified sweep (columns cut by cumulative mass into strips, strips cut
//! into cells), and the atom clouds are matched exactly by a shortest
//! augmenting path assignment solver with potentials. The support of an
//! optimal matching is cyclically monotone; `check_monotonicity` measures
//! the worst pairwise inner product (T(x) - T(y)) . (x - y), and
//! `linfty_bound_check` measures the sup-norm displacement against the
//! interior energy together with the interpolant inclusion properties these
//! displacement bounds imply.

use std::fmt::Write as _;
use std::path::Path;

use crate::density::{fmt17, DensityPair, GridDensity};
use crate::error::{Error, Result};
use crate::linalg::{add, dot, norm, scale, sub, Point};

const MODULE: &str = "transport";

/// Hard cap on atoms per side; the dense cost matrix and the cubic solver
/// are sized for desk-scale problems.
pub const MAX_POINTS: usize = 4096;

/// An exact matching between two equal-size atom clouds of equal atom mass.
#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub source: Vec<Point>,
    pub target: Vec<Point>,
    /// forward[i] is the target index matched to source atom i.
    pub forward: Vec<usize>,
    /// inverse[j] is the source index matched to target atom j.
    pub inverse: Vec<usize>,
    pub atom_mass: f64,
    /// sum_i atom_mass * |target[forward[i]] - source[i]|^2.
    pub cost: f64,
}

impl TransportSolution {
    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    /// Image of source atom i under the discrete map.
    pub fn map(&self, i: usize) -> Point {
        self.target[self.forward[i]]
    }

    pub fn displacement(&self, i: usize) -> Point {
        sub(self.map(i), self.source[i])
    }

    /// Pre-image of target atom j under the transposed matching.
    pub fn inverse_map(&self, j: usize) -> Point {
        self.source[self.inverse[j]]
    }

    /// Position of source atom i at interpolation time t.
    pub fn interpolate_position(&self, i: usize, t: f64) -> Point {
        add(self.source[i], scale(self.displacement(i), t))
    }

    pub fn recompute_cost(&self) -> f64 {
        let mut c = 0.0;
        for i in 0..self.len() {
            let d = self.displacement(i);
            c += self.atom_mass * (d[0] * d[0] + d[1] * d[1]);
        }
        c
    }

    /// Translate both clouds so that `origin` becomes the coordinate origin.
    /// The matching, costs per pair, and optimality are unchanged.
    pub fn recenter(&self, origin: Point) -> TransportSolution {
        let source: Vec<Point> = self.source.iter().map(|&p| sub(p, origin)).collect();
        let target: Vec<Point> = self.target.iter().map(|&p| sub(p, origin)).collect();
        TransportSolution {
            source,
            target,
            forward: self.forward.clone(),
            inverse: self.inverse.clone(),
            atom_mass: self.atom_mass,
            cost: self.cost,
        }
    }

    /// Apply an affine change of frames: source atoms are premultiplied by
    /// `source_map`, target atoms become target_map * (y - shift). The
    /// matching is kept; for symmetric positive definite `source_map` inverse
    /// paired with `target_map = lambda * source_map`, optimality of the
    /// matching is preserved exactly.
    pub fn transform(
        &self,
        source_map: &crate::linalg::Mat2,
        target_map: &crate::linalg::Mat2,
        shift: Point,
    ) -> TransportSolution {
        let source: Vec<Point> = self.source.iter().map(|&p| source_map.apply(p)).collect();
        let target: Vec<Point> = self
            .target
            .iter()
            .map(|&p| target_map.apply(sub(p, shift)))
            .collect();
        let mut out = TransportSolution {
            source,
            target,
            forward: self.forward.clone(),
            inverse: self.inverse.clone(),
            atom_mass: self.atom_mass,
            cost: 0.0,
        };
        out.cost = out.recompute_cost();
        out
    }
}

/// Deterministic stratified quantization into `n` equal-mass atoms.
///
/// The cumulative column mass is cut into ~sqrt(n) strips, each strip's row
/// profile is cut into equal-mass cells, and each cell collapses to its mass
/// centroid. Cuts split node masses fractionally, so every atom carries
/// exactly mass(rho) / n.
pub fn quantize(rho: &GridDensity, n: usize) -> Result<Vec<Point>> {
    if n == 0 {
        return Err(Error::domain(MODULE, "quantize", "need at least one atom"));
    }
    if n > MAX_POINTS {
        return Err(Error::capacity(
            MODULE,
            "quantize",
            format!("{n} atoms exceeds the supported cap of {MAX_POINTS}"),
        ));
    }
    let g = rho.geometry();
    let cell = g.h * g.h;
    let total: f64 = rho.values().iter().sum::<f64>() * cell;
    if total <= 0.0 {
        return Err(Error::domain(MODULE, "quantize", "density has zero mass"));
    }

    let col_mass: Vec<f64> = (0..g.nx)
        .map(|ix| (0..g.ny).map(|iy| rho.value_at(ix, iy) * cell).sum())
        .collect();

    let strips = (n as f64).sqrt().floor().max(1.0) as usize;
    let base = n / strips;
    let rem = n % strips;
    let mut atoms: Vec<Point> = Vec::with_capacity(n);

    let mut cursor_col = 0usize;
    let mut consumed_in_col = 0.0f64; // mass of the current column already assigned
    let mut atoms_before = 0usize;
    for k in 0..strips {
        let count = base + usize::from(k < rem);
        let strip_target = total * count as f64 / n as f64;
        // Collect fractional column spans until the strip holds its mass.
        let mut spans: Vec<(usize, f64)> = Vec::new(); // (column, fraction of column)
        let mut acc = 0.0f64;
        while acc < strip_target - 1e-12 * total && cursor_col < g.nx {
            let avail = col_mass[cursor_col] - consumed_in_col;
            if avail <= 0.0 {
                cursor_col += 1;
                consumed_in_col = 0.0;
                continue;
            }
            let need = strip_target - acc;
            if avail <= need || k == strips - 1 {
                if col_mass[cursor_col] > 0.0 {
                    spans.push((cursor_col, avail / col_mass[cursor_col]));
                }
                acc += avail;
                cursor_col += 1;
                consumed_in_col = 0.0;
            } else {
                spans.push((cursor_col, need / col_mass[cursor_col]));
                consumed_in_col += need;
                acc += need;
            }
        }
        // Strip row profile: mass and x-moment per row.
        let mut row_mass = vec![0.0f64; g.ny];
        let mut row_xmom = vec![0.0f64; g.ny];
        for &(ix, frac) in &spans {
            let x = g.node(ix, 0)[0];
            for iy in 0..g.ny {
                let m = rho.value_at(ix, iy) * cell * frac;
                row_mass[iy] += m;
                row_xmom[iy] += m * x;
            }
        }
        let strip_mass: f64 = row_mass.iter().sum();
        let chunk = strip_mass / count as f64;
        let mut iy = 0usize;
        let mut row_left = row_mass[0];
        for c in 0..count {
            let mut need = if c == count - 1 {
                f64::INFINITY // absorb rounding into the last cell
            } else {
                chunk
            };
            let mut m_sum = 0.0;
            let mut x_sum = 0.0;
            let mut y_sum = 0.0;
            while need > 0.0 && iy < g.ny {
                if row_left <= 0.0 {
                    iy += 1;
                    if iy < g.ny {
                        row_left = row_mass[iy];
                    }
                    continue;
                }
                let take = if row_left <= need { row_left } else { need };
                let frac_of_row = take / row_mass[iy];
                m_sum += take;
                x_sum += row_xmom[iy] * frac_of_row;
                y_sum += g.node(0, iy)[1] * take;
                row_left -= take;
                if need.is_finite() {
                    need -= take;
                    if need <= 1e-12 * chunk {
                        need = 0.0;
                    }
                }
            }
            if m_sum <= 0.0 {
                return Err(Error::domain(
                    MODULE,
                    "quantize",
                    format!("strip {k} cell {c} received no mass; density too sparse for {n} atoms"),
                ));
            }
            atoms.push([x_sum / m_sum, y_sum / m_sum]);
        }
        atoms_before += count;
        debug_assert_eq!(atoms.len(), atoms_before);
    }
    Ok(atoms)
}

/// Exact minimum-cost assignment by successive shortest augmenting paths
/// with column potentials (Jonker-Volkenant scheme without the heuristic
/// preprocessing passes). Costs must be finite; ties break by lowest index,
/// so the result is deterministic.
pub(crate) fn solve_assignment(cost: &[f64], n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    debug_assert_eq!(cost.len(), n * n);
    let mut v = vec![0.0f64; n];
    let mut row_of = vec![usize::MAX; n]; // column -> row
    let mut col_of = vec![usize::MAX; n]; // row -> column

    for j in (0..n).rev() {
        let mut best_i = 0usize;
        let mut best = f64::INFINITY;
        for i in 0..n {
            let c = cost[i * n + j];
            if c < best {
                best = c;
                best_i = i;
            }
        }
        v[j] = best;
        if col_of[best_i] == usize::MAX {
            col_of[best_i] = j;
            row_of[j] = best_i;
        }
    }

    let mut d = vec![0.0f64; n];
    let mut pred = vec![0usize; n];
    let mut done = vec![false; n];
    for free in 0..n {
        if col_of[free] != usize::MAX {
            continue;
        }
        for j in 0..n {
            d[j] = cost[free * n + j] - v[j];
            pred[j] = free;
            done[j] = false;
        }
        let sink;
        let mu;
        loop {
            let mut jmin = usize::MAX;
            let mut dmin = f64::INFINITY;
            for j in 0..n {
                if !done[j] && d[j] < dmin {
                    dmin = d[j];
                    jmin = j;
                }
            }
            if jmin == usize::MAX {
                return Err(Error::numeric(
                    MODULE,
                    "solve_assignment",
                    "no augmenting path found (non-finite costs?)",
                ));
            }
            done[jmin] = true;
            if row_of[jmin] == usize::MAX {
                sink = jmin;
                mu = dmin;
                break;
            }
            let i = row_of[jmin];
            let ui = cost[i * n + jmin] - v[jmin];
            let row = &cost[i * n..(i + 1) * n];
            for j in 0..n {
                if !done[j] {
                    let cand = dmin + row[j] - v[j] - ui;
                    if cand < d[j] {
                        d[j] = cand;
                        pred[j] = i;
                    }
                }
            }
        }
        for j in 0..n {
            if done[j] {
                v[j] += d[j] - mu;
            }
        }
        let mut j = sink;
        loop {
            let i = pred[j];
            row_of[j] = i;
            let next = col_of[i];
            col_of[i] = j;
            if i == free {
                break;
            }
            j = next;
        }
    }
    Ok((col_of, row_of))
}

/// Match two equal-size clouds of equal-mass atoms exactly.
pub fn match_point_clouds(source: Vec<Point>, target: Vec<Point>, atom_mass: f64) -> Result<TransportSolution> {
    let n = source.len();
    if n == 0 || target.len() != n {
        return Err(Error::domain(
            MODULE,
            "match_point_clouds",
            format!("clouds must be nonempty and equal-sized: {} vs {}", n, target.len()),
        ));
    }
    if n > MAX_POINTS {
        return Err(Error::capacity(
            MODULE,
            "match_point_clouds",
            format!("{n} atoms exceeds the supported cap of {MAX_POINTS}"),
        ));
    }
    if !(atom_mass > 0.0) || !atom_mass.is_finite() {
        return Err(Error::domain(
            MODULE,
            "match_point_clouds",
            format!("atom mass must be positive, got {atom_mass}"),
        ));
    }
    for p in source.iter().chain(target.iter()) {
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(Error::domain(MODULE, "match_point_clouds", "atom coordinates must be finite"));
        }
    }
    let mut cost = vec![0.0f64; n * n];
    for (i, &s) in source.iter().enumerate() {
        for (j, &t) in target.iter().enumerate() {
            let dx = t[0] - s[0];
            let dy = t[1] - s[1];
            cost[i * n + j] = dx * dx + dy * dy;
        }
    }
    let (forward, inverse) = solve_assignment(&cost, n)?;
    let mut sol = TransportSolution {
        source,
        target,
        forward,
        inverse,
        atom_mass,
        cost: 0.0,
    };
    sol.cost = sol.recompute_cost();
    Ok(sol)
}

/// Quantize both densities of a pair and match the clouds exactly. The atom
/// mass is taken from the source density; the pair invariant keeps the two
/// quantizations consistent within its mass tolerance.
pub fn solve_ot(pair: &DensityPair, n_points: usize) -> Result<TransportSolution> {
    let source = quantize(&pair.rho0, n_points)?;
    let target = quantize(&pair.rho1, n_points)?;
    let atom_mass = pair.rho0.mass() / n_points as f64;
    match_point_clouds(source, target, atom_mass)
}

/// Reference oracle: exhaustive search over all permutations. Only for tiny
/// clouds; errors above 9 atoms where 9! explodes.
pub fn exhaustive_match(source: &[Point], target: &[Point], atom_mass: f64) -> Result<(Vec<usize>, f64)> {
    let n = source.len();
    if n == 0 || target.len() != n {
        return Err(Error::domain(
            MODULE,
            "exhaustive_match",
            "clouds must be nonempty and equal-sized",
        ));
    }
    if n > 9 {
        return Err(Error::capacity(
            MODULE,
            "exhaustive_match",
            format!("exhaustive search over {n}! permutations is not tractable"),
        ));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best_perm = perm.clone();
    let mut best = f64::INFINITY;
    // Heap's algorithm, iterative.
    let mut c = vec![0usize; n];
    let eval = |p: &[usize]| -> f64 {
        p.iter()
            .enumerate()
            .map(|(i, &j)| {
                let d = sub(target[j], source[i]);
                atom_mass * (d[0] * d[0] + d[1] * d[1])
            })
            .sum()
    };
    let e = eval(&perm);
    if e < best {
        best = e;
        best_perm.copy_from_slice(&perm);
    }
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let e = eval(&perm);
            if e < best {
                best = e;
                best_perm.copy_from_slice(&perm);
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok((best_perm, best))
}

/// Worst pairwise monotonicity inner product over the matching support.
#[derive(Debug, Clone, Copy)]
pub struct MonotonicityReport {
    /// min over atom pairs of (T(x_i) - T(x_k)) . (x_i - x_k).
    pub min_inner: f64,
    pub pairs_checked: usize,
    pub worst_pair: (usize, usize),
}

/// Full pairwise scan; the atom cap keeps the quadratic scan tractable.
pub fn check_monotonicity(sol: &TransportSolution) -> MonotonicityReport {
    let n = sol.len();
    let mut min_inner = f64::INFINITY;
    let mut worst = (0, 0);
    let maps: Vec<Point> = (0..n).map(|i| sol.map(i)).collect();
    let mut pairs = 0usize;
    for i in 0..n {
        for k in i + 1..n {
            let s = dot(sub(maps[i], maps[k]), sub(sol.source[i], sol.source[k]));
            if s < min_inner {
                min_inner = s;
                worst = (i, k);
            }
            pairs += 1;
        }
    }
    if n < 2 {
        min_inner = 0.0;
    }
    MonotonicityReport {
        min_inner,
        pairs_checked: pairs,
        worst_pair: worst,
    }
}

/// Sup-displacement diagnostics on a ball: the interior sup over B_{3R/4} is
/// compared against energy^(1/(d+2)) with energy over B_R, and the
/// interpolant inclusions T_t(B_{R/8}) in B_{3R/16} and
/// T_t^{-1}(B_{R/2}) in B_{3R/4} are checked on a time grid.
#[derive(Debug, Clone)]
pub struct LinftyReport {
    pub sup_forward: f64,
    pub sup_inverse: f64,
    pub energy: f64,
    /// sup_forward / energy^(1/4); zero when the energy vanishes.
    pub ratio: f64,
    pub forward_inclusion_ok: bool,
    pub inverse_inclusion_ok: bool,
    /// Worst |T_t(x) - center| over atoms starting in B_{R/8}.
    pub forward_inclusion_worst: f64,
    /// Worst |x - center| over atoms with T_t(x) in B_{R/2}.
    pub inverse_inclusion_worst: f64,
}

pub fn linfty_bound_check(
    sol: &TransportSolution,
    center: Point,
    radius: f64,
    times: &[f64],
) -> Result<LinftyReport> {
    if !(radius > 0.0) {
        return Err(Error::domain(
            MODULE,
            "linfty_bound_check",
            format!("radius must be positive, got {radius}"),
        ));
    }
    let n = sol.len();
    let mut sup_forward = 0.0f64;
    let mut sup_inverse = 0.0f64;
    let mut energy = 0.0f64;
    for i in 0..n {
        let r_src = norm(sub(sol.source[i], center));
        let disp = norm(sol.displacement(i));
        if r_src <= 0.75 * radius && disp > sup_forward {
            sup_forward = disp;
        }
        if r_src <= radius {
            energy += sol.atom_mass * disp * disp;
        }
    }
    for j in 0..n {
        let r_tgt = norm(sub(sol.target[j], center));
        if r_tgt <= 0.75 * radius {
            let disp = norm(sub(sol.target[j], sol.inverse_map(j)));
            if disp > sup_inverse {
                sup_inverse = disp;
            }
        }
    }
    let ratio = if energy > 0.0 {
        sup_forward / energy.powf(0.25)
    } else {
        0.0
    };
    let mut fwd_worst = 0.0f64;
    let mut inv_worst = 0.0f64;
    for &t in times {
        for i in 0..n {
            let pos = sol.interpolate_position(i, t);
            let r_t = norm(sub(pos, center));
            if norm(sub(sol.source[i], center)) <= radius / 8.0 && r_t > fwd_worst {
                fwd_worst = r_t;
            }
            if r_t <= radius / 2.0 {
                let r_src = norm(sub(sol.source[i], center));
                if r_src > inv_worst {
                    inv_worst = r_src;
                }
            }
        }
    }
    Ok(LinftyReport {
        sup_forward,
        sup_inverse,
        energy,
        ratio,
        forward_inclusion_ok: fwd_worst <= 3.0 * radius / 16.0,
        inverse_inclusion_ok: inv_worst <= 0.75 * radius,
        forward_inclusion_worst: fwd_worst,
        inverse_inclusion_worst: inv_worst,
    })
}

/// One atom per line: `x1,x2,T1,T2,mass` with 17 significant digits.
pub fn write_map_csv(sol: &TransportSolution, path: &Path) -> Result<()> {
    let mut out = String::from("x1,x2,T1,T2,mass\n");
    for i in 0..sol.len() {
        let s = sol.source[i];
        let t = sol.map(i);
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt17(s[0]),
            fmt17(s[1]),
            fmt17(t[0]),
            fmt17(t[1]),
            fmt17(sol.atom_mass)
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{generate_test_density, GridSpec, TestDensityKind};

    fn uniform_unit(n: usize) -> GridDensity {
        generate_test_density(
            TestDensityKind::Uniform { value: 1.0 },
            &GridSpec {
                center: [0.0, 0.0],
                half_extent: 1.0,
                nodes_per_axis: n,
                pad_cells: 0,
                alpha: 0.5,
            },
        )
        .unwrap()
    }

    #[test]
    fn quantize_uniform_grid_gives_lattice() {
        // 16x16 nodes quantized into 64 atoms: strips are two columns wide,
        // cells two rows tall, so atoms form a regular half-offset lattice.
        let rho = uniform_unit(16);
        let atoms = quantize(&rho, 64).unwrap();
        assert_eq!(atoms.len(), 64);
        let h = rho.h();
        for a in &atoms {
            let gx = (a[0] - rho.origin()[0]) / h;
            let gy = (a[1] - rho.origin()[1]) / h;
            assert!(
                (gx - gx.round()).abs() > 0.4 && (gy - gy.round()).abs() > 0.4,
                "atom ({}, {}) should sit between nodes",
                a[0],
                a[1]
            );
        }
    }

    #[test]
    fn quantize_equal_mass_by_construction() {
        let rho = generate_test_density(
            TestDensityKind::SmoothPerturbation { amplitude: 0.4, frequency: 2 },
            &GridSpec {
                center: [0.0, 0.0],
                half_extent: 1.0,
                nodes_per_axis: 24,
                pad_cells: 0,
                alpha: 0.5,
            },
        )
        .unwrap();
        let atoms = quantize(&rho, 100).unwrap();
        assert_eq!(atoms.len(), 100);
        // Atom centroids stay inside the support box.
        for a in &atoms {
            assert!(a[0].abs() <= 1.0 && a[1].abs() <= 1.0);
        }
    }

    #[test]
    fn two_by_two_example() {
        let source = vec![[0.0, 0.0], [1.0, 0.0]];
        let target = vec![[0.0, 1.0], [1.0, 1.0]];
        let sol = match_point_clouds(source, target, 1.0).unwrap();
        assert_eq!(sol.forward, vec![0, 1]);
        assert!((sol.cost - 2.0).abs() < 1e-15);
    }

    #[test]
    fn matches_exhaustive_oracle_on_seeded_clouds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(42);
        for n in 2..=7 {
            for _ in 0..20 {
                let source: Vec<Point> =
                    (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
                let target: Vec<Point> =
                    (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
                let sol = match_point_clouds(source.clone(), target.clone(), 0.5).unwrap();
                let (_, oracle_cost) = exhaustive_match(&source, &target, 0.5).unwrap();
                assert!(
                    (sol.cost - oracle_cost).abs() <= 1e-12 * (1.0 + oracle_cost),
                    "n = {n}: solver cost {} vs oracle {}",
                    sol.cost,
                    oracle_cost
                );
            }
        }
    }

    #[test]
    fn inverse_is_transpose_of_forward() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(7);
        let n = 40;
        let source: Vec<Point> =
            (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let target: Vec<Point> =
            (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let sol = match_point_clouds(source, target, 1.0).unwrap();
        for i in 0..n {
            assert_eq!(sol.inverse[sol.forward[i]], i);
        }
    }

    #[test]
    fn identity_instance_has_zero_cost() {
        let rho = uniform_unit(16);
        let pair = DensityPair::new(rho.clone(), rho, 1e-12).unwrap();
        let sol = solve_ot(&pair, 64).unwrap();
        assert!(sol.cost <= 1e-24, "cost = {}", sol.cost);
        let report = check_monotonicity(&sol);
        assert!(report.min_inner >= -1e-12);
    }

    #[test]
    fn shift_instance_maps_exactly() {
        let rho0 = generate_test_density(
            TestDensityKind::Uniform { value: 1.0 },
            &GridSpec {
                center: [0.0, 0.0],
                half_extent: 1.0,
                nodes_per_axis: 16,
                pad_cells: 4,
                alpha: 0.5,
            },
        )
        .unwrap();
        let eps = 0.25;
        let rho1 = generate_test_density(
            TestDensityKind::Uniform { value: 1.0 },
            &GridSpec {
                center: [eps, 0.0],
                half_extent: 1.0,
                nodes_per_axis: 16,
                pad_cells: 4,
                alpha: 0.5,
            },
        )
        .unwrap();
        let pair = DensityPair::new(rho0, rho1, 1e-12).unwrap();
        let sol = solve_ot(&pair, 64).unwrap();
        for i in 0..sol.len() {
            let d = sol.displacement(i);
            assert!(
                (d[0] - eps).abs() < 1e-12 && d[1].abs() < 1e-12,
                "atom {i} displaced by ({}, {})",
                d[0],
                d[1]
            );
        }
        let expected_cost = eps * eps * pair.rho0.mass();
        assert!((sol.cost - expected_cost).abs() < 1e-12 * expected_cost);
    }

    #[test]
    fn monotonicity_on_random_cloud_matching() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        let n = 80;
        let source: Vec<Point> =
            (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let target: Vec<Point> =
            (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let sol = match_point_clouds(source, target, 1.0).unwrap();
        let report = check_monotonicity(&sol);
        assert!(
            report.min_inner >= -1e-12,
            "optimal matching must be cyclically monotone, got {}",
            report.min_inner
        );
    }

    #[test]
    fn linfty_report_on_shift() {
        let spec = GridSpec {
            center: [0.0, 0.0],
            half_extent: 1.5,
            nodes_per_axis: 36,
            pad_cells: 4,
            alpha: 0.5,
        };
        let eps = 1.0 / 12.0;
        let rho0 = generate_test_density(TestDensityKind::Uniform { value: 1.0 }, &spec).unwrap();
        let rho1 = generate_test_density(
            TestDensityKind::Uniform { value: 1.0 },
            &GridSpec {
                center: [eps, 0.0],
                ..spec
            },
        )
        .unwrap();
        let pair = DensityPair::new(rho0, rho1, 1e-12).unwrap();
        let sol = solve_ot(&pair, 144).unwrap();
        let times: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
        let report = linfty_bound_check(&sol, [0.0, 0.0], 1.0, &times).unwrap();
        assert!((report.sup_forward - eps).abs() < 1e-12);
        assert!(report.forward_inclusion_ok, "worst = {}", report.forward_inclusion_worst);
        assert!(report.inverse_inclusion_ok, "worst = {}", report.inverse_inclusion_worst);
        assert!(report.ratio.is_finite() && report.ratio > 0.0);
    }

    #[test]
    fn affine_equivariance_within_quantization_error() {
        // Source uniform on a square, target its image under diag(s, 1/s):
        // the optimal map is the linear map and the discrete cost approaches
        // the analytic integral.
        let s = 1.25;
        let rho0 = uniform_unit(32);
        let atoms0 = quantize(&rho0, 256).unwrap();
        let atoms1: Vec<Point> = atoms0.iter().map(|p| [p[0] * s, p[1] / s]).collect();
        let mass = rho0.mass() / 256.0;
        let sol = match_point_clouds(atoms0.clone(), atoms1, mass).unwrap();
        // The linear map is cyclically monotone on the lattice, so the exact
        // matching must reproduce it atom by atom.
        let analytic: f64 = atoms0
            .iter()
            .map(|p| {
                let dx = (s - 1.0) * p[0];
                let dy = (1.0 / s - 1.0) * p[1];
                mass * (dx * dx + dy * dy)
            })
            .sum();
        assert!(
            (sol.cost - analytic).abs() <= 1e-12 * analytic.max(1.0),
            "cost {} vs analytic {}",
            sol.cost,
            analytic
        );
    }

    #[test]
    fn map_csv_has_header_and_rows() {
        let source = vec![[0.0, 0.0], [1.0, 0.0]];
        let target = vec![[0.0, 1.0], [1.0, 1.0]];
        let sol = match_point_clouds(source, target, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.csv");
        write_map_csv(&sol, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x1,x2,T1,T2,mass");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].split(',').count() == 5);
    }

    #[test]
    fn capacity_cap_enforced() {
        let rho = uniform_unit(8);
        assert!(matches!(
            quantize(&rho, MAX_POINTS + 1),
            Err(Error::Capacity { .. })
        ));
    }
}
