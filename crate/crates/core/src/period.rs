//! Killing periods on an annulus.
//!
//! A quadric map `f` is a null, nowhere-vanishing Laurent triple; its period
//! is `2 pi i` times the residue. Complete vector fields tangent to the null
//! quadric (the Euler field and the three complex rotations), multiplied by
//! holomorphic functions, move `f` within the quadric; a Newton iteration on
//! the flow times cancels the period.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fft;
use crate::holo::{self, Domain, HoloError, LaurentPoly, C64, TOL_ZERO};
use crate::null::{c, norm3, null_residual_of, phi_extrema, NullCurve, NullError, Vec3, NULL_TOL};

/// Extra coefficients kept on each side when refitting a sprayed map.
pub const GUARD: i64 = 16;
pub const MAX_NEWTON_ITERATIONS: usize = 20;
const MAX_HALVINGS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PeriodError {
    #[error("quadric map is not null (residual {0:e})")]
    NotNull(f64),
    #[error("quadric map vanishes on the annulus")]
    NotImmersion,
    #[error("quadric maps live on an annulus")]
    RequiresAnnulus,
    #[error("refit misses the sprayed map by {0:e}")]
    FitResidualTooLarge(f64),
    #[error("spray Jacobian is singular (smallest singular value {0:e})")]
    JacobianSingular(f64),
    #[error("Newton iteration stalled at |period| = {}", .0.rows.last().map_or(f64::NAN, |r| r.period_norm))]
    NewtonStalled(Box<NewtonDiagnostics>),
    #[error("solution |t| = {norm:e} leaves the ball of radius {radius:e}")]
    BallExceeded { norm: f64, radius: f64 },
    #[error("invalid spray configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Holo(#[from] HoloError),
    #[error(transparent)]
    Null(#[from] NullError),
}

/// Vector fields tangent to the null quadric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Field {
    /// Euler field `z`.
    V0,
    V12,
    V13,
    V23,
}

impl Field {
    pub const ALL: [Field; 4] = [Field::V0, Field::V12, Field::V13, Field::V23];

    fn pair(self) -> Option<(usize, usize)> {
        match self {
            Field::V0 => None,
            Field::V12 => Some((0, 1)),
            Field::V13 => Some((0, 2)),
            Field::V23 => Some((1, 2)),
        }
    }
}

/// Time-`tau` flow of a field applied to a point.
pub fn flow_vec(field: Field, tau: C64, z: &Vec3) -> Vec3 {
    match field.pair() {
        None => {
            let e = tau.exp();
            [z[0] * e, z[1] * e, z[2] * e]
        }
        Some((i, j)) => {
            let (co, si) = (tau.cos(), tau.sin());
            let mut w = *z;
            w[i] = co * z[i] - si * z[j];
            w[j] = si * z[i] + co * z[j];
            w
        }
    }
}

/// A null, nowhere-vanishing Laurent triple on an annulus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[LaurentPoly; 3]", into = "[LaurentPoly; 3]")]
pub struct QuadricMap {
    f: [LaurentPoly; 3],
}

impl TryFrom<[LaurentPoly; 3]> for QuadricMap {
    type Error = PeriodError;
    fn try_from(f: [LaurentPoly; 3]) -> Result<Self, PeriodError> {
        QuadricMap::new(f)
    }
}

impl From<QuadricMap> for [LaurentPoly; 3] {
    fn from(q: QuadricMap) -> Self {
        q.f
    }
}

impl QuadricMap {
    pub fn new(f: [LaurentPoly; 3]) -> Result<Self, PeriodError> {
        let d = f[0].domain();
        if !matches!(d, Domain::Annulus { .. }) || f.iter().any(|p| p.domain() != d) {
            return Err(PeriodError::RequiresAnnulus);
        }
        let (lo, hi) = phi_extrema(&f);
        if hi == 0.0 || lo <= TOL_ZERO * hi {
            return Err(PeriodError::NotImmersion);
        }
        let res = null_residual_of(&f)?;
        if res >= NULL_TOL {
            return Err(PeriodError::NotNull(res));
        }
        Ok(QuadricMap { f })
    }

    pub fn components(&self) -> &[LaurentPoly; 3] {
        &self.f
    }

    pub fn domain(&self) -> Domain {
        self.f[0].domain()
    }

    pub fn coeff_norm(&self) -> f64 {
        self.f.iter().map(|p| p.coeff_norm()).fold(0.0, f64::max)
    }

    /// `2 pi i` times the residue of each component.
    pub fn period(&self) -> Vec3 {
        let s = c(0.0, 2.0 * PI);
        [s * self.f[0].coeff(-1), s * self.f[1].coeff(-1), s * self.f[2].coeff(-1)]
    }

    /// Flow by a constant time; exact on coefficients.
    pub fn flow(&self, field: Field, tau: C64) -> QuadricMap {
        let f = &self.f;
        let out = match field.pair() {
            None => f.clone().map(|p| p.scale(tau.exp())),
            Some((i, j)) => {
                let (co, si) = (tau.cos(), tau.sin());
                let mut g = f.clone();
                g[i] = f[i].scale(co).sub(&f[j].scale(si)).expect("same domain");
                g[j] = f[i].scale(si).add(&f[j].scale(co)).expect("same domain");
                g
            }
        };
        QuadricMap { f: out }
    }

    /// Integrates to a null curve with `F(1) = base`.
    pub fn integrate(&self, base: Vec3) -> Result<NullCurve, PeriodError> {
        Ok(NullCurve::integrate(base, self.f.clone())?)
    }
}

/// One generator of a spray: the flow of `field` with time `t h(z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub field: Field,
    pub multiplier: LaurentPoly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SprayConfig {
    pub generators: Vec<Generator>,
    pub ball_radius: f64,
}

impl SprayConfig {
    /// The four fields times the multipliers `1, z, 1/z`.
    pub fn standard(domain: Domain, ball_radius: f64) -> Self {
        let mut generators = Vec::with_capacity(12);
        for k in [0i64, 1, -1] {
            for field in Field::ALL {
                generators.push(Generator {
                    field,
                    multiplier: LaurentPoly::monomial(k, c(1.0, 0.0), domain),
                });
            }
        }
        SprayConfig { generators, ball_radius }
    }

    fn validate(&self, domain: Domain) -> Result<(), PeriodError> {
        if self.generators.is_empty() {
            return Err(PeriodError::InvalidConfig("no generators".into()));
        }
        if !(self.ball_radius > 0.0) {
            return Err(PeriodError::InvalidConfig("ball_radius must be positive".into()));
        }
        if self.generators.iter().any(|g| g.multiplier.domain() != domain) {
            return Err(PeriodError::InvalidConfig("multiplier domain differs from the map".into()));
        }
        Ok(())
    }
}

fn values3(f: &[LaurentPoly; 3], rho: f64, n: usize) -> Vec<Vec3> {
    let a = f[0].ring_values(rho, n);
    let b = f[1].ring_values(rho, n);
    let d = f[2].ring_values(rho, n);
    (0..n).map(|j| [a[j], b[j], d[j]]).collect()
}

fn spray_points(f: &[LaurentPoly; 3], gens: &[Generator], t: &[C64], rho: f64, n: usize) -> Vec<Vec3> {
    let mut z = values3(f, rho, n);
    for (g, &tk) in gens.iter().zip(t) {
        if tk == c(0.0, 0.0) {
            continue;
        }
        let h = g.multiplier.ring_values(rho, n);
        for (zj, hj) in z.iter_mut().zip(&h) {
            *zj = flow_vec(g.field, tk * hj, zj);
        }
    }
    z
}

/// Composition of the generator flows (first generator applied first),
/// refit as a Laurent triple on the working range plus [`GUARD`].
pub fn spray_apply(f: &QuadricMap, config: &SprayConfig, t: &[C64]) -> Result<QuadricMap, PeriodError> {
    let domain = f.domain();
    config.validate(domain)?;
    if t.len() != config.generators.len() {
        return Err(PeriodError::InvalidConfig(format!(
            "{} times for {} generators",
            t.len(),
            config.generators.len()
        )));
    }
    let comps = &f.f;
    let lo = comps.iter().filter(|p| !p.is_zero()).map(|p| p.k_min()).min().unwrap_or(0) - GUARD;
    let hi = comps.iter().filter(|p| !p.is_zero()).map(|p| p.k_max()).max().unwrap_or(0) + GUARD;
    let len = (hi - lo + 1) as usize;
    let l = holo::next_pow2(4 * len).max(256);
    let rin = domain.inner_radius();
    // non-negative powers from the outer circle, negative ones from the inner
    // circle, so neither side amplifies rounding noise
    let outer = spray_points(comps, &config.generators, t, 1.0, l);
    let inner = spray_points(comps, &config.generators, t, rin, l);
    let s = 1.0 / l as f64;
    let mut out: Vec<LaurentPoly> = Vec::with_capacity(3);
    for i in 0..3 {
        let mut bo: Vec<C64> = outer.iter().map(|z| z[i]).collect();
        let mut bi: Vec<C64> = inner.iter().map(|z| z[i]).collect();
        fft::forward(&mut bo);
        fft::forward(&mut bi);
        let cs: Vec<C64> = (lo..=hi)
            .map(|k| {
                let idx = k.rem_euclid(l as i64) as usize;
                if k >= 0 {
                    bo[idx] * s
                } else {
                    bi[idx] * (s * rin.powi(-k as i32))
                }
            })
            .collect();
        out.push(trim_annulus(LaurentPoly::new(lo, cs, domain)?, rin));
    }
    let g = [out[0].clone(), out[1].clone(), out[2].clone()];
    let scale = f.coeff_norm().max(1.0);
    let mut err: f64 = 0.0;
    for rho in [domain.inner_radius(), 1.0] {
        let exact = spray_points(comps, &config.generators, t, rho, l);
        let fitted = values3(&g, rho, l);
        for (a, b) in exact.iter().zip(&fitted) {
            err = err.max(norm3(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]]));
        }
    }
    if err > 1e-9 * scale {
        return Err(PeriodError::FitResidualTooLarge(err / scale));
    }
    Ok(QuadricMap { f: g })
}

/// Drops end coefficients that are negligible everywhere on the annulus.
fn trim_annulus(p: LaurentPoly, rin: f64) -> LaurentPoly {
    let weight = |k: i64, c: C64| if k < 0 { c.norm() * rin.powi(k as i32) } else { c.norm() };
    let top = p
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, &c)| weight(p.k_min() + i as i64, c))
        .fold(0.0, f64::max);
    let keep: Vec<(i64, C64)> = p
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, &c)| (p.k_min() + i as i64, c))
        .filter(|&(k, c)| weight(k, c) > 1e-17 * top)
        .collect();
    LaurentPoly::from_terms(&keep, p.domain()).unwrap_or(p)
}

/// One row of the Newton log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonRow {
    pub iteration: usize,
    pub period_norm: f64,
    pub t_norm: f64,
    pub damping: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NewtonDiagnostics {
    pub rows: Vec<NewtonRow>,
    pub t: Vec<C64>,
    pub smallest_singular_value: f64,
}

impl NewtonDiagnostics {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,period_norm,t_norm,damping\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:e},{:e},{}", r.iteration, r.period_norm, r.t_norm, r.damping);
        }
        s
    }
}

fn residual(f: &QuadricMap, config: &SprayConfig, x: &[f64]) -> Result<[f64; 6], PeriodError> {
    let t: Vec<C64> = x.chunks(2).map(|p| c(p[0], p[1])).collect();
    let p = spray_apply(f, config, &t)?.period();
    Ok([p[0].re, p[0].im, p[1].re, p[1].im, p[2].re, p[2].im])
}

fn norm6(r: &[f64; 6]) -> f64 {
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn norm_x(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn jacobian(f: &QuadricMap, config: &SprayConfig, x: &[f64]) -> Result<DMatrix<f64>, PeriodError> {
    let h = 1e-5 * config.ball_radius;
    let mut j = DMatrix::zeros(6, x.len());
    let mut xp = x.to_vec();
    for col in 0..x.len() {
        xp[col] = x[col] + h;
        let rp = residual(f, config, &xp)?;
        xp[col] = x[col] - h;
        let rm = residual(f, config, &xp)?;
        xp[col] = x[col];
        for row in 0..6 {
            j[(row, col)] = (rp[row] - rm[row]) / (2.0 * h);
        }
    }
    Ok(j)
}

/// Period tolerance: relative to the map, and small enough that the
/// residues fall under the integration threshold.
pub fn period_tolerance(f: &QuadricMap) -> f64 {
    (1e-10 * f.coeff_norm()).min(3e-12)
}

/// Damped Gauss-Newton on the flow times with a central-difference Jacobian
/// and minimum-norm steps.
pub fn newton_periods(
    f: &QuadricMap,
    config: &SprayConfig,
) -> Result<(QuadricMap, Vec<C64>, NewtonDiagnostics), PeriodError> {
    config.validate(f.domain())?;
    let k = config.generators.len();
    let tol = period_tolerance(f);
    let mut x = vec![0.0; 2 * k];
    let mut diag = NewtonDiagnostics::default();
    let mut r = residual(f, config, &x)?;
    let j0 = jacobian(f, config, &x)?;
    let sv = j0.clone().svd(false, false).singular_values;
    let smallest = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    diag.smallest_singular_value = smallest;
    if !(smallest > 1e-8) {
        return Err(PeriodError::JacobianSingular(smallest));
    }
    diag.rows.push(NewtonRow { iteration: 0, period_norm: norm6(&r), t_norm: 0.0, damping: 0.0 });
    let mut jac = Some(j0);
    let mut iteration = 0;
    while norm6(&r) >= tol {
        if iteration == MAX_NEWTON_ITERATIONS {
            diag.t = x.chunks(2).map(|p| c(p[0], p[1])).collect();
            return Err(PeriodError::NewtonStalled(Box::new(diag)));
        }
        iteration += 1;
        let j = match jac.take() {
            Some(j) => j,
            None => jacobian(f, config, &x)?,
        };
        let svd = j.svd(true, true);
        let rhs = DVector::from_column_slice(&r);
        let step = svd
            .solve(&rhs, 1e-12 * svd.singular_values.max())
            .map_err(|e| PeriodError::InvalidConfig(e.to_string()))?;
        let base = norm6(&r);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a - alpha * d).collect();
            let rt = match residual(f, config, &trial) {
                Ok(rt) => rt,
                Err(PeriodError::FitResidualTooLarge(_)) => {
                    alpha *= 0.5;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if norm6(&rt) < base {
                accepted = Some((trial, rt));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((xn, rn)) => {
                x = xn;
                r = rn;
            }
            None => {
                diag.t = x.chunks(2).map(|p| c(p[0], p[1])).collect();
                return Err(PeriodError::NewtonStalled(Box::new(diag)));
            }
        }
        diag.rows.push(NewtonRow {
            iteration,
            period_norm: norm6(&r),
            t_norm: norm_x(&x),
            damping: alpha,
        });
    }
    let t: Vec<C64> = x.chunks(2).map(|p| c(p[0], p[1])).collect();
    diag.t = t.clone();
    let tn = norm_x(&x);
    if tn > config.ball_radius {
        return Err(PeriodError::BallExceeded { norm: tn, radius: config.ball_radius });
    }
    let g = if iteration == 0 { f.clone() } else { spray_apply(f, config, &t)? };
    Ok((g, t, diag))
}
