//! Small fixed-size linear algebra: 2-vectors as `[f64; 2]`, dense 2x2
//! matrices, the symmetric matrix exponential used by the tilting step, and
//! the least-squares fits shared by the diagnostics (affine map fits,
//! log-log slope fits).

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm2(a: Point) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: Point) -> f64 {
    norm2(a).sqrt()
}

/// Dense 2x2 matrix in row-major order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 {
        m: [[1.0, 0.0], [0.0, 1.0]],
    };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { m: [[a, b], [c, d]] }
    }

    pub fn diag(a: f64, d: f64) -> Self {
        Mat2::new(a, 0.0, 0.0, d)
    }

    #[inline]
    pub fn apply(&self, v: Point) -> Point {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    pub fn mul(&self, other: &Mat2) -> Mat2 {
        let a = &self.m;
        let b = &other.m;
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(
            self.m[0][0] * s,
            self.m[0][1] * s,
            self.m[1][0] * s,
            self.m[1][1] * s,
        )
    }

    pub fn add(&self, other: &Mat2) -> Mat2 {
        Mat2::new(
            self.m[0][0] + other.m[0][0],
            self.m[0][1] + other.m[0][1],
            self.m[1][0] + other.m[1][0],
            self.m[1][1] + other.m[1][1],
        )
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.m[0][0], self.m[1][0], self.m[0][1], self.m[1][1])
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn inverse(&self) -> Result<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return Err(Error::numeric(
                "linalg",
                "inverse",
                format!("singular 2x2 matrix, det = {d}"),
            ));
        }
        Ok(Mat2::new(
            self.m[1][1] / d,
            -self.m[0][1] / d,
            -self.m[1][0] / d,
            self.m[0][0] / d,
        ))
    }

    /// Frobenius norm of `self - other`.
    pub fn frobenius_distance(&self, other: &Mat2) -> f64 {
        let mut s = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let d = self.m[i][j] - other.m[i][j];
                s += d * d;
            }
        }
        s.sqrt()
    }

    /// Spectral norm, exact for 2x2 via the singular values.
    pub fn spectral_norm(&self) -> f64 {
        let g = self.transpose().mul(self);
        let tr = g.trace();
        let det = g.det().max(0.0);
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        (tr / 2.0 + disc).max(0.0).sqrt()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.m[0][1] - self.m[1][0]).abs() <= tol
    }

    pub fn symmetrize(&self) -> Mat2 {
        let off = 0.5 * (self.m[0][1] + self.m[1][0]);
        Mat2::new(self.m[0][0], off, off, self.m[1][1])
    }

    /// Eigenvalues of a symmetric matrix, ascending.
    pub fn sym_eigenvalues(&self) -> [f64; 2] {
        let mean = 0.5 * self.trace();
        let half_diff = 0.5 * (self.m[0][0] - self.m[1][1]);
        let rho = (half_diff * half_diff + self.m[0][1] * self.m[1][0]).max(0.0).sqrt();
        [mean - rho, mean + rho]
    }

    /// Principal square root of a symmetric positive definite matrix.
    pub fn sym_sqrt(&self) -> Result<Mat2> {
        let [lo, _] = self.sym_eigenvalues();
        if lo <= 0.0 {
            return Err(Error::domain(
                "linalg",
                "sym_sqrt",
                format!("matrix not positive definite, smallest eigenvalue {lo}"),
            ));
        }
        // Denman-Beavers closed form for 2x2: sqrt(A) = (A + sqrt(det) I) / sqrt(tr + 2 sqrt(det)).
        let sd = self.det().sqrt();
        let denom = (self.trace() + 2.0 * sd).sqrt();
        Ok(self.add(&Mat2::diag(sd, sd)).scale(1.0 / denom))
    }
}

/// Exponential of a symmetric 2x2 matrix in closed form.
///
/// Writing A = m I + D with m the eigenvalue mean and D trace-free with
/// eigenvalues +-rho, exp(A) = e^m (cosh(rho) I + sinh(rho)/rho * D).
/// The rho -> 0 limit replaces sinh(rho)/rho by 1.
pub fn sym_exp(a: &Mat2) -> Result<Mat2> {
    if !a.is_symmetric(1e-12 * (1.0 + a.spectral_norm())) {
        return Err(Error::domain(
            "linalg",
            "sym_exp",
            format!("matrix not symmetric: off-diagonal {} vs {}", a.m[0][1], a.m[1][0]),
        ));
    }
    let a = a.symmetrize();
    let mean = 0.5 * a.trace();
    let d00 = a.m[0][0] - mean;
    let d01 = a.m[0][1];
    let rho = (d00 * d00 + d01 * d01).sqrt();
    let (cosh, sinc) = if rho < 1e-150 {
        (1.0, 1.0)
    } else {
        (rho.cosh(), rho.sinh() / rho)
    };
    let em = mean.exp();
    Ok(Mat2::new(
        em * (cosh + sinc * d00),
        em * sinc * d01,
        em * sinc * d01,
        em * (cosh - sinc * d00),
    ))
}

/// Weighted least-squares affine fit y ~ M x + c over sample pairs.
///
/// Minimizes sum_i w_i |y_i - M x_i - c|^2. The two output components
/// decouple, so each row of (M, c) solves an independent 3x3 normal system.
pub fn affine_fit(points: &[Point], values: &[Point], weights: &[f64]) -> Result<(Mat2, Point)> {
    if points.len() != values.len() || points.len() != weights.len() {
        return Err(Error::domain(
            "linalg",
            "affine_fit",
            format!(
                "length mismatch: {} points, {} values, {} weights",
                points.len(),
                values.len(),
                weights.len()
            ),
        ));
    }
    if points.len() < 3 {
        return Err(Error::domain(
            "linalg",
            "affine_fit",
            format!("need at least 3 samples, got {}", points.len()),
        ));
    }
    // Normal matrix over the basis (x, y, 1).
    let mut g = [[0.0f64; 3]; 3];
    let mut rhs = [[0.0f64; 3]; 2];
    for ((p, v), &w) in points.iter().zip(values).zip(weights) {
        let basis = [p[0], p[1], 1.0];
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] += w * basis[i] * basis[j];
            }
            rhs[0][i] += w * basis[i] * v[0];
            rhs[1][i] += w * basis[i] * v[1];
        }
    }
    let row0 = solve3(&g, &rhs[0])?;
    let row1 = solve3(&g, &rhs[1])?;
    Ok((
        Mat2::new(row0[0], row0[1], row1[0], row1[1]),
        [row0[2], row1[2]],
    ))
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Result<[f64; 3]> {
    let mut m = *a;
    let mut x = *b;
    for col in 0..3 {
        let mut pivot = col;
        for row in col + 1..3 {
            if m[row][col].abs() > m[pivot][col].abs() {
                pivot = row;
            }
        }
        if m[pivot][col].abs() < 1e-300 {
            return Err(Error::numeric(
                "linalg",
                "affine_fit",
                "degenerate normal equations (collinear sample points)",
            ));
        }
        m.swap(col, pivot);
        x.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            x[row] -= f * x[col];
        }
    }
    let mut out = [0.0; 3];
    for col in (0..3).rev() {
        let mut s = x[col];
        for k in col + 1..3 {
            s -= m[col][k] * out[k];
        }
        out[col] = s / m[col][col];
    }
    Ok(out)
}

/// Least-squares slope of log(y) against log(x), with the coefficient of
/// determination of the fit. Inputs must be strictly positive.
#[derive(Debug, Clone, Copy)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn log_log_fit(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::domain(
            "linalg",
            "log_log_fit",
            format!("need >= 2 paired samples, got {} and {}", x.len(), y.len()),
        ));
    }
    for (&xi, &yi) in x.iter().zip(y) {
        if xi <= 0.0 || yi <= 0.0 || !xi.is_finite() || !yi.is_finite() {
            return Err(Error::domain(
                "linalg",
                "log_log_fit",
                format!("samples must be positive and finite, got ({xi}, {yi})"),
            ));
        }
    }
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (a, b) in lx.iter().zip(&ly) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::domain(
            "linalg",
            "log_log_fit",
            "all abscissae equal, slope undefined",
        ));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(LogLogFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_exp(a: &Mat2, terms: usize) -> Mat2 {
        let mut sum = Mat2::IDENTITY;
        let mut power = Mat2::IDENTITY;
        let mut factorial = 1.0;
        for k in 1..=terms {
            power = power.mul(a);
            factorial *= k as f64;
            sum = sum.add(&power.scale(1.0 / factorial));
        }
        sum
    }

    #[test]
    fn sym_exp_of_zero_is_identity() {
        let e = sym_exp(&Mat2::new(0.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(e.m, Mat2::IDENTITY.m);
    }

    #[test]
    fn sym_exp_of_tracefree_diagonal() {
        // A = diag(a, -a) gives exp(-A/2) = diag(e^{-a/2}, e^{a/2}).
        let a = 0.37;
        let e = sym_exp(&Mat2::diag(-a / 2.0, a / 2.0)).unwrap();
        assert!((e.m[0][0] - (-a / 2.0f64).exp()).abs() < 1e-15);
        assert!((e.m[1][1] - (a / 2.0f64).exp()).abs() < 1e-15);
        assert_eq!(e.m[0][1], 0.0);
    }

    #[test]
    fn sym_exp_matches_power_series() {
        let cases = [
            Mat2::new(0.2, -0.05, -0.05, -0.2),
            Mat2::new(0.0, 0.3, 0.3, 0.0),
            Mat2::new(1.0, 0.25, 0.25, 0.5),
            Mat2::new(-0.8, 0.1, 0.1, 0.8),
        ];
        for a in cases {
            let closed = sym_exp(&a).unwrap();
            let series = series_exp(&a, 30);
            assert!(
                closed.frobenius_distance(&series) < 1e-12,
                "closed form {:?} vs series {:?}",
                closed.m,
                series.m
            );
        }
    }

    #[test]
    fn sym_exp_tracefree_has_unit_determinant() {
        let a = Mat2::new(0.31, 0.12, 0.12, -0.31);
        let e = sym_exp(&a.scale(-0.5)).unwrap();
        assert!((e.det() - 1.0).abs() < 1e-14, "det = {}", e.det());
    }

    #[test]
    fn sym_sqrt_squares_back() {
        let a = Mat2::new(2.0, 0.3, 0.3, 1.5);
        let s = a.sym_sqrt().unwrap();
        assert!(s.mul(&s).frobenius_distance(&a) < 1e-13);
    }

    #[test]
    fn affine_fit_recovers_exact_affine_map() {
        let m = Mat2::new(1.1, -0.2, 0.05, 0.9);
        let c = [0.3, -0.7];
        let mut points = Vec::new();
        let mut values = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                let p = [i as f64 * 0.1, j as f64 * 0.1];
                points.push(p);
                values.push(add(m.apply(p), c));
            }
        }
        let weights = vec![1.0; points.len()];
        let (mf, cf) = affine_fit(&points, &values, &weights).unwrap();
        assert!(mf.frobenius_distance(&m) < 1e-12);
        assert!(norm(sub(cf, c)) < 1e-12);
    }

    #[test]
    fn affine_fit_rejects_collinear_points() {
        let points = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]];
        let values = points.clone();
        let weights = vec![1.0; 4];
        assert!(affine_fit(&points, &values, &weights).is_err());
    }

    #[test]
    fn log_log_fit_recovers_power_law() {
        let x = [1.0f64, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|&v| 3.0 * v.powf(1.7)).collect();
        let fit = log_log_fit(&x, &y).unwrap();
        assert!((fit.slope - 1.7).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_of_rotation_like_matrix() {
        let m = Mat2::new(0.0, -2.0, 2.0, 0.0);
        assert!((m.spectral_norm() - 2.0).abs() < 1e-14);
    }
}
