//! Null curves, the spinor parametrisation of the null quadric, and the
//! intrinsic quantities measured on them.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::holo::{self, circle_points, Domain, HoloError, LaurentPoly, C64, RESIDUE_TOL, TOL_ZERO};

pub type Vec3 = [C64; 3];

/// Boundary samples used for the immersion test.
pub const IMMERSION_BOUNDARY: usize = 4096;
/// Polar grid (rings, angles) used for the interior immersion test.
pub const IMMERSION_POLAR: (usize, usize) = (64, 256);
/// Largest accepted relative nullity residual.
pub const NULL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NullError {
    #[error("not null: residual {0:e}")]
    NotNull(f64),
    #[error("not an immersion: min |phi| / max |phi| = {0:e}")]
    NotImmersion(f64),
    #[error("component {component} has residue {residue}")]
    NonzeroResidue { component: usize, residue: C64 },
    #[error("components live on different domains")]
    DomainMismatch,
    #[error("u^2 = (phi1 - i phi2)/2 vanishes on the disc")]
    LiftBranchZero,
    #[error("spinor lift reproduces phi only to {0:e}")]
    LiftInexact(f64),
    #[error("operation requires the disc domain")]
    RequiresDisc,
    #[error(transparent)]
    Holo(#[from] HoloError),
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `(1, i, 0)/sqrt 2`.
pub fn v1() -> Vec3 {
    [c(FRAC_1_SQRT_2, 0.0), c(0.0, FRAC_1_SQRT_2), c(0.0, 0.0)]
}

/// `(1, -i, 0)/sqrt 2`.
pub fn v2() -> Vec3 {
    [c(FRAC_1_SQRT_2, 0.0), c(0.0, -FRAC_1_SQRT_2), c(0.0, 0.0)]
}

/// Hermitian product, linear in the first slot.
pub fn herm(a: &Vec3, b: &Vec3) -> C64 {
    a[0] * b[0].conj() + a[1] * b[1].conj() + a[2] * b[2].conj()
}

pub fn norm3(a: &Vec3) -> f64 {
    (a[0].norm_sqr() + a[1].norm_sqr() + a[2].norm_sqr()).sqrt()
}

/// The quadratic form `z1^2 + z2^2 + z3^2`.
pub fn quad(a: &Vec3) -> C64 {
    a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
}

pub fn add3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale3(s: C64, a: &Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

/// `(u^2 - v^2, i(u^2 + v^2), 2uv)`.
pub fn pi_map(u: C64, v: C64) -> Vec3 {
    let (u2, v2) = (u * u, v * v);
    [u2 - v2, c(0.0, 1.0) * (u2 + v2), 2.0 * u * v]
}

/// `max(|<z,V1>|, |<z,V2>|)`.
pub fn m_gauge(z: &Vec3) -> f64 {
    herm(z, &v1()).norm().max(herm(z, &v2()).norm())
}

/// A pair `(u, v)` of series with `phi = pi(u, v)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinorField {
    pub u: LaurentPoly,
    pub v: LaurentPoly,
}

impl SpinorField {
    pub fn new(u: LaurentPoly, v: LaurentPoly) -> Result<Self, NullError> {
        if u.domain() != v.domain() {
            return Err(NullError::DomainMismatch);
        }
        Ok(SpinorField { u, v })
    }

    pub fn domain(&self) -> Domain {
        self.u.domain()
    }

    pub fn pi_poly(&self) -> Result<[LaurentPoly; 3], NullError> {
        let u2 = self.u.mul(&self.u)?;
        let v2 = self.v.mul(&self.v)?;
        let uv = self.u.mul(&self.v)?;
        Ok([
            u2.sub(&v2)?,
            u2.add(&v2)?.scale(c(0.0, 1.0)),
            uv.scale(c(2.0, 0.0)),
        ])
    }

    /// Largest `sqrt(|u|^2 + |v|^2)` over `n` boundary samples.
    pub fn boundary_norm(&self, n: usize) -> f64 {
        let u = self.u.ring_values(1.0, n);
        let v = self.v.ring_values(1.0, n);
        u.iter()
            .zip(&v)
            .map(|(a, b)| (a.norm_sqr() + b.norm_sqr()).sqrt())
            .fold(0.0, f64::max)
    }
}

/// Relative nullity defect `|phi1^2 + phi2^2 + phi3^2| / max_j |phi_j|^2`
/// measured on coefficients.
pub fn null_residual_of(phi: &[LaurentPoly; 3]) -> Result<f64, NullError> {
    let top = phi.iter().map(|p| p.coeff_norm()).fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(0.0);
    }
    let q = phi[0].mul(&phi[0])?.add(&phi[1].mul(&phi[1])?)?.add(&phi[2].mul(&phi[2])?)?;
    Ok(q.coeff_norm() / (top * top))
}

/// Radii of the interior test rings for a domain.
fn polar_radii(domain: Domain, rings: usize) -> Vec<f64> {
    let r0 = domain.inner_radius();
    (0..rings).map(|i| r0 + (1.0 - r0) * i as f64 / rings as f64).collect()
}

/// `(min, max)` of `|phi|` over the immersion test grid.
pub fn phi_extrema(phi: &[LaurentPoly; 3]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut scan = |rho: f64, n: usize| {
        let vals: Vec<Vec<C64>> = phi.iter().map(|p| p.ring_values(rho, n)).collect();
        for j in 0..n {
            let m = (vals[0][j].norm_sqr() + vals[1][j].norm_sqr() + vals[2][j].norm_sqr()).sqrt();
            lo = lo.min(m);
            hi = hi.max(m);
        }
    };
    scan(1.0, IMMERSION_BOUNDARY);
    for rho in polar_radii(phi[0].domain(), IMMERSION_POLAR.0) {
        scan(rho, if rho == 0.0 { 1 } else { IMMERSION_POLAR.1 });
    }
    (lo, hi)
}

/// A holomorphic null immersion `F = base + integral of phi`.
///
/// On the disc `base = F(0)`; on an annulus `base = F(1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveData", into = "CurveData")]
pub struct NullCurve {
    base: Vec3,
    phi: [LaurentPoly; 3],
    pos: [LaurentPoly; 3],
    spinor: Option<SpinorField>,
}

/// Unvalidated serialized form of a [`NullCurve`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveData {
    pub base: [[f64; 2]; 3],
    pub phi: [LaurentPoly; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spinor: Option<SpinorField>,
}

impl CurveData {
    pub fn base(&self) -> Vec3 {
        [
            c(self.base[0][0], self.base[0][1]),
            c(self.base[1][0], self.base[1][1]),
            c(self.base[2][0], self.base[2][1]),
        ]
    }
}

impl TryFrom<CurveData> for NullCurve {
    type Error = NullError;
    fn try_from(d: CurveData) -> Result<Self, NullError> {
        let base = d.base();
        match d.spinor {
            Some(s) => {
                let curve = NullCurve::from_spinor(base, s)?;
                let drift = curve
                    .phi
                    .iter()
                    .zip(&d.phi)
                    .map(|(a, b)| a.sub(b).map(|x| x.coeff_norm()))
                    .collect::<Result<Vec<_>, _>>()?
                    .into_iter()
                    .fold(0.0, f64::max);
                let top = d.phi.iter().map(|p| p.coeff_norm()).fold(0.0, f64::max);
                if drift > NULL_TOL * top.max(1.0) {
                    return Err(NullError::LiftInexact(drift));
                }
                Ok(curve)
            }
            None => NullCurve::integrate(base, d.phi),
        }
    }
}

impl From<NullCurve> for CurveData {
    fn from(f: NullCurve) -> Self {
        CurveData {
            base: f.base.map(|z| [z.re, z.im]),
            phi: f.phi,
            spinor: f.spinor,
        }
    }
}

impl NullCurve {
    /// Integrates `phi` from the anchor point, validating nullity, the
    /// immersion condition and (on an annulus) vanishing residues.
    pub fn integrate(base: Vec3, phi: [LaurentPoly; 3]) -> Result<Self, NullError> {
        let domain = phi[0].domain();
        if phi.iter().any(|p| p.domain() != domain) {
            return Err(NullError::DomainMismatch);
        }
        for (component, p) in phi.iter().enumerate() {
            let residue = p.coeff(-1);
            if residue.norm() > RESIDUE_TOL {
                return Err(NullError::NonzeroResidue { component, residue });
            }
        }
        let (lo, hi) = phi_extrema(&phi);
        if hi == 0.0 || lo <= TOL_ZERO * hi {
            return Err(NullError::NotImmersion(if hi == 0.0 { 0.0 } else { lo / hi }));
        }
        let residual = null_residual_of(&phi)?;
        if residual >= NULL_TOL {
            return Err(NullError::NotNull(residual));
        }
        let pos = [
            phi[0].antiderivative(base[0])?,
            phi[1].antiderivative(base[1])?,
            phi[2].antiderivative(base[2])?,
        ];
        Ok(NullCurve { base, phi, pos, spinor: None })
    }

    /// The curve with derivative `pi(u, v)`; the spinor is kept for later
    /// deformations.
    pub fn from_spinor(base: Vec3, spinor: SpinorField) -> Result<Self, NullError> {
        let phi = spinor.pi_poly()?;
        let mut f = Self::integrate(base, phi)?;
        f.spinor = Some(spinor);
        Ok(f)
    }

    pub fn domain(&self) -> Domain {
        self.phi[0].domain()
    }

    pub fn base(&self) -> Vec3 {
        self.base
    }

    pub fn phi(&self) -> &[LaurentPoly; 3] {
        &self.phi
    }

    pub fn position_poly(&self) -> &[LaurentPoly; 3] {
        &self.pos
    }

    pub fn spinor(&self) -> Option<&SpinorField> {
        self.spinor.as_ref()
    }

    /// The stored spinor, or a fresh lift of `phi`.
    pub fn spinor_or_lift(&self) -> Result<SpinorField, NullError> {
        match &self.spinor {
            Some(s) => Ok(s.clone()),
            None => spinor_lift(&self.phi),
        }
    }

    pub fn max_span(&self) -> usize {
        self.pos.iter().map(|p| p.span()).max().unwrap_or(0)
    }

    pub fn eval(&self, z: C64) -> Result<Vec3, NullError> {
        Ok([self.pos[0].eval(z)?, self.pos[1].eval(z)?, self.pos[2].eval(z)?])
    }

    pub fn eval_phi(&self, z: C64) -> Result<Vec3, NullError> {
        Ok([self.phi[0].eval(z)?, self.phi[1].eval(z)?, self.phi[2].eval(z)?])
    }

    /// `F` on the circle of radius `rho` at `n` equally spaced angles.
    pub fn ring(&self, rho: f64, n: usize) -> Vec<Vec3> {
        zip3(
            self.pos[0].ring_values(rho, n),
            self.pos[1].ring_values(rho, n),
            self.pos[2].ring_values(rho, n),
        )
    }

    /// `F'` on the circle of radius `rho`.
    pub fn ring_phi(&self, rho: f64, n: usize) -> Vec<Vec3> {
        zip3(
            self.phi[0].ring_values(rho, n),
            self.phi[1].ring_values(rho, n),
            self.phi[2].ring_values(rho, n),
        )
    }

    /// Number of boundary samples that resolves this curve, at least `min`.
    pub fn boundary_grid(&self, min: usize) -> usize {
        holo::next_pow2(2 * self.max_span() + 2).max(min)
    }

    pub fn null_residual(&self) -> Result<f64, NullError> {
        null_residual_of(&self.phi)
    }

    pub fn metric_density(&self, z: C64) -> Result<f64, NullError> {
        Ok(norm3(&self.eval_phi(z)?))
    }

    /// Largest `|F|` on the boundary circle.
    pub fn sup_norm(&self) -> f64 {
        let n = self.boundary_grid(4096);
        self.ring(1.0, n).iter().map(norm3).fold(0.0, f64::max)
    }

    pub fn m_gauge(&self, z: C64) -> Result<f64, NullError> {
        Ok(m_gauge(&self.eval(z)?))
    }

    /// Shortest-path length from the origin to `|z| = rho` in the metric
    /// `|phi|^2 |dz|^2`, by Dijkstra on a polar mesh.
    pub fn intrinsic_radius(&self, rho: f64, mesh: PolarMesh) -> Result<f64, NullError> {
        if self.domain() != Domain::Disc {
            return Err(NullError::RequiresDisc);
        }
        intrinsic_radius_grid(rho, mesh, |r, n| {
            self.ring_phi(r, n).iter().map(norm3).collect()
        })
    }
}

fn zip3(a: Vec<C64>, b: Vec<C64>, c: Vec<C64>) -> Vec<Vec3> {
    a.into_iter()
        .zip(b)
        .zip(c)
        .map(|((x, y), z)| [x, y, z])
        .collect()
}

/// Rings and angles of a polar mesh; node `(i, j)` sits at radius
/// `rho * i / n_r` and angle `2 pi j / n_theta`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarMesh {
    pub n_r: usize,
    pub n_theta: usize,
}

impl Default for PolarMesh {
    fn default() -> Self {
        PolarMesh { n_r: 64, n_theta: 256 }
    }
}

#[derive(PartialEq)]
struct Node(f64, usize);

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra from the centre to the outer ring with an 8-neighbour stencil;
/// `density(r, n)` returns the conformal factor on ring `r`.
pub fn intrinsic_radius_grid(
    rho: f64,
    mesh: PolarMesh,
    density: impl Fn(f64, usize) -> Vec<f64>,
) -> Result<f64, NullError> {
    let (nr, nt) = (mesh.n_r, mesh.n_theta);
    if nr == 0 || nt < 3 {
        return Err(NullError::Holo(HoloError::Invalid("polar mesh too small".into())));
    }
    let idx = |i: usize, j: usize| 1 + (i - 1) * nt + j;
    let total = 1 + nr * nt;
    let mut pts = vec![c(0.0, 0.0); total];
    let mut sigma = vec![0.0; total];
    sigma[0] = density(0.0, 1)[0];
    for i in 1..=nr {
        let r = rho * i as f64 / nr as f64;
        let d = density(r, nt);
        for (j, z) in circle_points(r, nt).into_iter().enumerate() {
            pts[idx(i, j)] = z;
            sigma[idx(i, j)] = d[j];
        }
    }
    let weight = |a: usize, b: usize| (pts[a] - pts[b]).norm() * 0.5 * (sigma[a] + sigma[b]);
    let mut dist = vec![f64::INFINITY; total];
    let mut heap = BinaryHeap::new();
    dist[0] = 0.0;
    heap.push(Node(0.0, 0));
    let mut best = f64::INFINITY;
    while let Some(Node(d, a)) = heap.pop() {
        if d > dist[a] {
            continue;
        }
        if d >= best {
            break;
        }
        let mut relax = |b: usize, heap: &mut BinaryHeap<Node>| {
            let nd = d + weight(a, b);
            if nd < dist[b] {
                dist[b] = nd;
                heap.push(Node(nd, b));
            }
        };
        if a == 0 {
            for j in 0..nt {
                relax(idx(1, j), &mut heap);
            }
            continue;
        }
        let i = (a - 1) / nt + 1;
        let j = (a - 1) % nt;
        if i == nr {
            best = best.min(d);
        }
        let jp = (j + 1) % nt;
        let jm = (j + nt - 1) % nt;
        relax(idx(i, jp), &mut heap);
        relax(idx(i, jm), &mut heap);
        if i == 1 {
            relax(0, &mut heap);
        } else {
            for jj in [jm, j, jp] {
                relax(idx(i - 1, jj), &mut heap);
            }
        }
        if i < nr {
            for jj in [jm, j, jp] {
                relax(idx(i + 1, jj), &mut heap);
            }
        }
    }
    Ok(best)
}

/// Recovers `(u, v)` with `pi(u, v) = phi` on the disc, using the principal
/// square root of `(phi1 - i phi2)/2` at the origin.
pub fn spinor_lift(phi: &[LaurentPoly; 3]) -> Result<SpinorField, NullError> {
    if phi.iter().any(|p| p.domain() != Domain::Disc) {
        return Err(NullError::RequiresDisc);
    }
    let (lo, hi) = phi_extrema(phi);
    if hi == 0.0 || lo <= TOL_ZERO * hi {
        return Err(NullError::NotImmersion(if hi == 0.0 { 0.0 } else { lo / hi }));
    }
    let u2 = phi[0].sub(&phi[1].scale(c(0.0, 1.0)))?.scale(c(0.5, 0.0));
    let u = match holo::sqrt_holo(&u2) {
        Ok(u) => u,
        Err(HoloError::ZeroOnDomain) => return Err(NullError::LiftBranchZero),
        Err(e) => return Err(e.into()),
    };
    let uinv = match holo::inv_sqrt_holo(&u2) {
        Ok(u) => u,
        Err(HoloError::ZeroOnDomain) => return Err(NullError::LiftBranchZero),
        Err(e) => return Err(e.into()),
    };
    let v = phi[2].mul(&uinv)?.scale(c(0.5, 0.0)).trim_relative(1e-17);
    let s = SpinorField::new(u, v)?;
    let back = s.pi_poly()?;
    let top = phi.iter().map(|p| p.coeff_norm()).fold(0.0, f64::max);
    let mut err: f64 = 0.0;
    for (a, b) in back.iter().zip(phi) {
        err = err.max(a.sub(b)?.coeff_norm());
    }
    if err > NULL_TOL * top {
        return Err(NullError::LiftInexact(err / top));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(k: i64, cs: &[C64]) -> LaurentPoly {
        LaurentPoly::new(k, cs.to_vec(), Domain::Disc).unwrap()
    }

    fn linear_v1() -> NullCurve {
        let z = c(0.0, 0.0);
        let phi = v1().map(|x| disc(0, &[x]));
        NullCurve::integrate([z; 3], phi).unwrap()
    }

    #[test]
    fn pi_norm_identity() {
        let (u, v) = (c(0.3, -1.2), c(0.7, 0.4));
        let w = pi_map(u, v);
        assert!(quad(&w).norm() < 1e-15);
        let lhs = norm3(&w).powi(2);
        let rhs = 2.0 * (u.norm_sqr() + v.norm_sqr()).powi(2);
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn linear_curve_values() {
        let f = linear_v1();
        let w = f.eval(c(0.5, 0.0)).unwrap();
        assert!((w[0] - c(0.5 * FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((w[1] - c(0.0, 0.5 * FRAC_1_SQRT_2)).norm() < 1e-15);
        assert_eq!(f.null_residual().unwrap(), 0.0);
        let r = f.intrinsic_radius(1.0, PolarMesh::default()).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert!((f.m_gauge(c(1.0, 0.0)).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lift_of_constant_map() {
        let phi = [disc(0, &[c(0.0, 0.0)]), disc(0, &[c(0.0, 2.0)]), disc(0, &[c(2.0, 0.0)])];
        let s = spinor_lift(&phi).unwrap();
        assert!((s.u.coeff(0) - c(1.0, 0.0)).norm() < 1e-14);
        assert!((s.v.coeff(0) - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn lift_branch_zero() {
        let u = disc(1, &[c(1.0, 0.0)]);
        let v = disc(0, &[c(1.0, 0.0)]);
        let phi = SpinorField::new(u, v).unwrap().pi_poly().unwrap();
        assert_eq!(spinor_lift(&phi), Err(NullError::LiftBranchZero));
    }

    #[test]
    fn rejections() {
        let z = c(0.0, 0.0);
        let zero = [disc(0, &[]), disc(0, &[]), disc(0, &[])];
        assert!(matches!(
            NullCurve::integrate([c(5.0, 0.0), z, z], zero),
            Err(NullError::NotImmersion(_))
        ));
        let phi = [disc(0, &[c(1.0, 0.0)]), disc(0, &[]), disc(0, &[])];
        assert_eq!(null_residual_of(&phi).unwrap(), 1.0);
        assert!(matches!(NullCurve::integrate([z; 3], phi), Err(NullError::NotNull(_))));
        let ann = Domain::Annulus { inner: 0.5 };
        let s = SpinorField::new(
            LaurentPoly::new(-1, vec![c(1.0, 0.0)], ann).unwrap(),
            LaurentPoly::new(0, vec![c(1.0, 0.0)], ann).unwrap(),
        )
        .unwrap();
        let e = NullCurve::from_spinor([z; 3], s);
        assert!(matches!(e, Err(NullError::NonzeroResidue { component: 2, .. })));
    }

    #[test]
    fn curve_json_round_trip() {
        let u = disc(0, &[c(1.0, 0.0), c(0.2, 0.1)]);
        let v = disc(0, &[c(0.1, 0.0), c(0.0, 0.5)]);
        let f = NullCurve::from_spinor([c(1.0, 0.0), c(0.0, 0.0), c(0.0, -1.0)], SpinorField::new(u, v).unwrap()).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let g: NullCurve = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
        assert_eq!(serde_json::to_string(&g).unwrap(), s);
    }
}
