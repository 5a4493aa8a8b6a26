//! Null curves in `SL_2(C)` and their Bryant projections to hyperbolic space.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::holo::C64;
use crate::null::{c, norm3, NullCurve, NullError, Vec3};

pub type Mat2 = [[C64; 2]; 2];

pub const TOL_Z3: f64 = 1e-6;
pub const UNIMODULAR_TOL: f64 = 1e-8;
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("third coordinate below {tol:e} at {} grid points (first index {})", .indices.len(), .indices[0])]
    ThirdCoordinateVanishes { tol: f64, indices: Vec<usize> },
    #[error("|det A - 1| = {0:e}")]
    NotUnimodular(f64),
    #[error("grid radius must lie in (0, 1]")]
    InvalidGrid,
    #[error(transparent)]
    Null(#[from] NullError),
}

pub fn det(a: &Mat2) -> C64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

pub fn frobenius(a: &Mat2) -> f64 {
    a.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `(1/z3) [[1, z1 + i z2], [z1 - i z2, z1^2 + z2^2 + z3^2]]`.
pub fn t_map(z: &Vec3) -> Mat2 {
    let i = c(0.0, 1.0);
    let w = C64::new(1.0, 0.0) / z[2];
    let q = z[0] * z[0] + z[1] * z[1] + z[2] * z[2];
    [[w, (z[0] + i * z[1]) * w], [(z[0] - i * z[1]) * w, q * w]]
}

/// Derivative of `t_map` along a curve with position `z` and velocity `dz`.
pub fn t_map_derivative(z: &Vec3, dz: &Vec3) -> Mat2 {
    let i = c(0.0, 1.0);
    let w2 = C64::new(1.0, 0.0) / (z[2] * z[2]);
    let a = z[0] + i * z[1];
    let b = z[0] - i * z[1];
    let q = z[0] * z[0] + z[1] * z[1] + z[2] * z[2];
    let (da, db) = (dz[0] + i * dz[1], dz[0] - i * dz[1]);
    let dq = (z[0] * dz[0] + z[1] * dz[1] + z[2] * dz[2]) * 2.0;
    let dw = dz[2];
    [
        [-dw * w2, (da * z[2] - a * dw) * w2],
        [(db * z[2] - b * dw) * w2, (dq * z[2] - q * dw) * w2],
    ]
}

/// Polar sample layout: the centre, then `n_r` rings of `n_theta` points
/// at radii `radius * i / n_r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarGrid {
    pub n_r: usize,
    pub n_theta: usize,
    pub radius: f64,
}

impl PolarGrid {
    pub fn new(n_r: usize, n_theta: usize, radius: f64) -> Result<Self, TransformError> {
        if !(radius > 0.0 && radius <= 1.0) || n_r == 0 || n_theta < 3 {
            return Err(TransformError::InvalidGrid);
        }
        Ok(PolarGrid { n_r, n_theta, radius })
    }

    pub fn len(&self) -> usize {
        1 + self.n_r * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<C64> {
        let mut pts = Vec::with_capacity(self.len());
        pts.push(c(0.0, 0.0));
        for i in 1..=self.n_r {
            let rho = self.radius * i as f64 / self.n_r as f64;
            for j in 0..self.n_theta {
                pts.push(C64::from_polar(rho, 2.0 * PI * j as f64 / self.n_theta as f64));
            }
        }
        pts
    }

    /// Triangles of the grid, counterclockwise in the parameter plane.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        let nt = self.n_theta;
        let idx = |i: usize, j: usize| 1 + (i - 1) * nt + j % nt;
        let mut tri = Vec::with_capacity(nt * (2 * self.n_r - 1));
        for j in 0..nt {
            tri.push([0, idx(1, j), idx(1, j + 1)]);
        }
        for i in 1..self.n_r {
            for j in 0..nt {
                let (a, b) = (idx(i, j), idx(i, j + 1));
                let (cc, d) = (idx(i + 1, j + 1), idx(i + 1, j));
                tri.push([a, d, cc]);
                tri.push([a, cc, b]);
            }
        }
        tri
    }
}

/// Grid samples of `T o F` and of its derivative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sl2Curve {
    pub grid: PolarGrid,
    pub g: Vec<Mat2>,
    pub dg: Vec<Mat2>,
}

impl Sl2Curve {
    pub fn max_det_residual(&self) -> f64 {
        self.g.iter().map(|a| (det(a) - 1.0).norm()).fold(0.0, f64::max)
    }

    /// `max |det G'| / |G'|^2`.
    pub fn max_directed_residual(&self) -> f64 {
        self.dg
            .iter()
            .map(|d| {
                let n = frobenius(d);
                if n == 0.0 {
                    0.0
                } else {
                    det(d).norm() / (n * n)
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn project(&self) -> Result<Vec<H3Point>, TransformError> {
        self.g.iter().map(bryant_project).collect()
    }
}

pub fn to_sl2(f: &NullCurve, grid: &PolarGrid) -> Result<Sl2Curve, TransformError> {
    to_sl2_with(f, grid, TOL_Z3)
}

pub fn to_sl2_with(f: &NullCurve, grid: &PolarGrid, tol_z3: f64) -> Result<Sl2Curve, TransformError> {
    let pts = grid.points();
    let mut z = Vec::with_capacity(pts.len());
    let mut dz = Vec::with_capacity(pts.len());
    for &p in &pts {
        z.push(f.eval(p)?);
        dz.push(f.eval_phi(p)?);
    }
    let bad: Vec<usize> = (0..pts.len()).filter(|&k| !(z[k][2].norm() > tol_z3)).collect();
    if !bad.is_empty() {
        return Err(TransformError::ThirdCoordinateVanishes { tol: tol_z3, indices: bad });
    }
    Ok(Sl2Curve {
        grid: *grid,
        g: z.iter().map(t_map).collect(),
        dg: z.iter().zip(&dz).map(|(a, b)| t_map_derivative(a, b)).collect(),
    })
}

/// Point of the hyperboloid model `x0^2 = 1 + x1^2 + x2^2 + x3^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct H3Point {
    pub x0: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl H3Point {
    pub fn hyperboloid_residual(&self) -> f64 {
        (self.x0 * self.x0 - 1.0 - self.x1 * self.x1 - self.x2 * self.x2 - self.x3 * self.x3).abs()
    }

    /// The Hermitian matrix `[[x0 + x3, x1 + i x2], [x1 - i x2, x0 - x3]]`.
    pub fn matrix(&self) -> Mat2 {
        [
            [c(self.x0 + self.x3, 0.0), c(self.x1, self.x2)],
            [c(self.x1, -self.x2), c(self.x0 - self.x3, 0.0)],
        ]
    }
}

/// `A conj(A)^T`, read off through the identification of [`H3Point::matrix`].
pub fn bryant_project(a: &Mat2) -> Result<H3Point, TransformError> {
    let d = (det(a) - 1.0).norm();
    if !(d < UNIMODULAR_TOL) {
        return Err(TransformError::NotUnimodular(d));
    }
    let mut h = [[c(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for s in 0..2 {
            h[r][s] = a[r][0] * a[s][0].conj() + a[r][1] * a[s][1].conj();
        }
    }
    Ok(H3Point {
        x0: 0.5 * (h[0][0].re + h[1][1].re),
        x1: h[0][1].re,
        x2: h[0][1].im,
        x3: 0.5 * (h[0][0].re - h[1][1].re),
    })
}

pub fn poincare_ball(x: &H3Point) -> [f64; 3] {
    let s = 1.0 + x.x0;
    [x.x1 / s, x.x2 / s, x.x3 / s]
}

/// `max(||Phi|^2 - 2|Re Phi|^2|, ||Phi|^2 - 2|Im Phi|^2|, 2|Re Phi . Im Phi|) / |Phi|^2`:
/// the first fundamental form of `Re F` is `(|Re Phi|^2, -Re Phi . Im Phi, |Im Phi|^2)`.
pub fn real_part_doubling_residual(phi: &Vec3) -> f64 {
    let n2 = norm3(phi).powi(2);
    let e: f64 = phi.iter().map(|z| z.re * z.re).sum();
    let g: f64 = phi.iter().map(|z| z.im * z.im).sum();
    let f: f64 = phi.iter().map(|z| z.re * z.im).sum();
    (n2 - 2.0 * e).abs().max((n2 - 2.0 * g).abs()).max(2.0 * f.abs()) / n2
}

/// Ratio at `z` of the Euclidean `C^4` metric of `T o F` to the Minkowski
/// metric of its Bryant projection, by central differences along the real
/// direction.
pub fn fd_doubling_ratio(f: &NullCurve, z: C64, h: f64) -> Result<f64, TransformError> {
    let gp = t_map(&f.eval(z + h)?);
    let gm = t_map(&f.eval(z - h)?);
    let (xp, xm) = (bryant_project(&gp)?, bryant_project(&gm)?);
    let mut e = 0.0;
    for r in 0..2 {
        for s in 0..2 {
            e += (gp[r][s] - gm[r][s]).norm_sqr();
        }
    }
    let d = [xp.x0 - xm.x0, xp.x1 - xm.x1, xp.x2 - xm.x2, xp.x3 - xm.x3];
    let l = -d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + d[3] * d[3];
    Ok(e / l)
}

/// As [`fd_doubling_ratio`] with the left-invariant metric `|G^-1 dG|^2`
/// in place of the Euclidean one.
pub fn fd_left_invariant_ratio(f: &NullCurve, z: C64, h: f64) -> Result<f64, TransformError> {
    let g0 = t_map(&f.eval(z)?);
    let gp = t_map(&f.eval(z + h)?);
    let gm = t_map(&f.eval(z - h)?);
    let (xp, xm) = (bryant_project(&gp)?, bryant_project(&gm)?);
    // G^-1 = [[d, -b], [-c, a]] when det G = 1
    let inv = [[g0[1][1], -g0[0][1]], [-g0[1][0], g0[0][0]]];
    let mut e = 0.0;
    for r in 0..2 {
        for s in 0..2 {
            let x = inv[r][0] * (gp[0][s] - gm[0][s]) + inv[r][1] * (gp[1][s] - gm[1][s]);
            e += x.norm_sqr();
        }
    }
    let d = [xp.x0 - xm.x0, xp.x1 - xm.x1, xp.x2 - xm.x2, xp.x3 - xm.x3];
    let l = -d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + d[3] * d[3];
    Ok(e / l)
}

/// The 25 interior points used for the finite-difference check.
pub fn fd_points(radius: f64) -> Vec<C64> {
    let mut pts = Vec::with_capacity(25);
    for i in 1..=5 {
        let rho = radius * (0.15 * i as f64);
        for j in 0..5 {
            pts.push(C64::from_polar(rho, 2.0 * PI * (j as f64 + 0.5 * i as f64) / 5.0));
        }
    }
    pts
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub points: usize,
    pub max_det_residual: f64,
    pub max_directed_residual: f64,
    pub max_hyperboloid_residual: f64,
    pub max_doubling_residual: f64,
    pub fd_ratio_min: f64,
    pub fd_ratio_max: f64,
    pub fd_left_invariant_min: f64,
    pub fd_left_invariant_max: f64,
}

/// Runs the `SL_2` and hyperbolic checks for `f` over `grid`.
pub fn metric_checks(f: &NullCurve, grid: &PolarGrid) -> Result<MetricReport, TransformError> {
    let sl2 = to_sl2(f, grid)?;
    let h3 = sl2.project()?;
    let mut doubling: f64 = 0.0;
    for p in grid.points() {
        doubling = doubling.max(real_part_doubling_residual(&f.eval_phi(p)?));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut li_lo, mut li_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for z in fd_points(grid.radius) {
        let r = fd_doubling_ratio(f, z, FD_STEP)?;
        lo = lo.min(r);
        hi = hi.max(r);
        let r = fd_left_invariant_ratio(f, z, FD_STEP)?;
        li_lo = li_lo.min(r);
        li_hi = li_hi.max(r);
    }
    Ok(MetricReport {
        points: grid.len(),
        max_det_residual: sl2.max_det_residual(),
        max_directed_residual: sl2.max_directed_residual(),
        max_hyperboloid_residual: h3.iter().map(H3Point::hyperboloid_residual).fold(0.0, f64::max),
        max_doubling_residual: doubling,
        fd_ratio_min: lo,
        fd_ratio_max: hi,
        fd_left_invariant_min: li_lo,
        fd_left_invariant_max: li_hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_map_hand_values() {
        let id = t_map(&[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(id, [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]]);
        let m = t_map(&[c(1.0, 0.0), c(0.0, 1.0), c(1.0, 0.0)]);
        let want = [[c(1.0, 0.0), c(0.0, 0.0)], [c(2.0, 0.0), c(1.0, 0.0)]];
        for r in 0..2 {
            for s in 0..2 {
                assert!((m[r][s] - want[r][s]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn diagonal_projection() {
        let e: f64 = 1.7;
        let x = bryant_project(&[[c(e, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0 / e, 0.0)]]).unwrap();
        assert!((x.x0 - 0.5 * (e * e + 1.0 / (e * e))).abs() < 1e-15);
        assert!((x.x3 - 0.5 * (e * e - 1.0 / (e * e))).abs() < 1e-15);
        assert_eq!((x.x1, x.x2), (0.0, 0.0));
        assert_eq!(poincare_ball(&bryant_project(&t_map(&[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])).unwrap()), [0.0; 3]);
    }

    #[test]
    fn not_unimodular() {
        let a = [[c(2.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        assert!(matches!(bryant_project(&a), Err(TransformError::NotUnimodular(_))));
    }

    #[test]
    fn grid_triangles_cover_rings() {
        let g = PolarGrid::new(4, 8, 1.0).unwrap();
        assert_eq!(g.len(), 33);
        let t = g.triangles();
        assert_eq!(t.len(), 8 + 2 * 8 * 3);
        // counterclockwise in the parameter plane
        let p = g.points();
        for tri in &t {
            let (a, b, cc) = (p[tri[0]], p[tri[1]], p[tri[2]]);
            assert!(((b - a).conj() * (cc - a)).im > 0.0);
        }
    }
}
