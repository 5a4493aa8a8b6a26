//! Riemann-Hilbert deformation of a null disc.
//!
//! Given a central curve `F`, a null direction `theta` and a size function
//! `mu >= 0` on the circle, the deformed curve `G` has boundary values close
//! to the circles `F(z) + mu(z) S^1 theta` and stays close to `F` away from
//! the boundary and away from the support of `mu`.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::holo::{self, fit_boundary, Domain, FitMode, HoloError, LaurentPoly, C64};
use crate::null::{
    c, herm, norm3, pi_map, quad, scale3, sub3, NullCurve, NullError, SpinorField, Vec3,
};

/// Required relative size of `|u q - v p|` on the boundary.
pub const GP_MARGIN: f64 = 1e-6;
/// Radius (relative to `|(p, q)|`) of the ball searched by the shift.
pub const GP_RADIUS: f64 = 1e-3;
pub const RADIAL_REFINEMENTS: usize = 12;
pub const GP_TRIALS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RhError {
    #[error("direction is not null (relative defect {0:e})")]
    NotNull(f64),
    #[error("invalid size function: {0}")]
    InvalidSizeFunction(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("no direction in general position after {0} trials")]
    GeneralPositionFailed(usize),
    #[error("deformed spinor vanishes on the disc")]
    SpinorZero,
    #[error("closed-form decomposition disagrees by {0:e}")]
    DecompositionMismatch(f64),
    #[error("|A_n| = {measured:e} exceeds the a priori bound {bound:e}")]
    EstimateViolated { measured: f64, bound: f64 },
    #[error("no admissible n up to n_max; best candidate n = {}", .0.n_used)]
    NSearchExhausted(Box<RHReport>),
    #[error(transparent)]
    Null(#[from] NullError),
    #[error(transparent)]
    Holo(#[from] HoloError),
}

fn default_fit_degree() -> usize {
    32
}
fn default_max_fit_degree() -> usize {
    256
}
fn default_n_max() -> usize {
    1 << 14
}
fn default_margin_theta() -> f64 {
    0.2
}
fn default_r_steps() -> usize {
    64
}

/// Input of [`rh_deform`]. `mu` holds samples at `2 pi j / mu.len()`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RHProblem {
    pub central: NullCurve,
    pub direction: Vec3,
    pub mu: Vec<f64>,
    /// Arc `[a, b]` (radians, counter-clockwise) outside of which `mu` vanishes.
    #[serde(default)]
    pub support: Option<[f64; 2]>,
    pub eps: f64,
    pub r: f64,
    #[serde(default = "default_fit_degree")]
    pub fit_degree: usize,
    #[serde(default = "default_max_fit_degree")]
    pub max_fit_degree: usize,
    #[serde(default = "default_fit_mode")]
    pub fit_mode: FitMode,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Lower bound for the n-search; the search starts at `max(m, n_start)`.
    #[serde(default)]
    pub n_start: usize,
    #[serde(default = "default_margin_theta")]
    pub margin_theta: f64,
    #[serde(default = "default_r_steps")]
    pub r_steps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_fit_mode() -> FitMode {
    FitMode::Fejer
}

impl RHProblem {
    pub fn new(central: NullCurve, direction: Vec3, mu: Vec<f64>, eps: f64, r: f64) -> Self {
        RHProblem {
            central,
            direction,
            mu,
            support: None,
            eps,
            r,
            fit_degree: default_fit_degree(),
            max_fit_degree: default_max_fit_degree(),
            fit_mode: FitMode::Fejer,
            n_max: default_n_max(),
            n_start: 0,
            margin_theta: default_margin_theta(),
            r_steps: default_r_steps(),
            seed: 0,
        }
    }
}

/// Measurements of one candidate deformation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RHReport {
    pub success: bool,
    pub n_used: usize,
    pub fit_degree: usize,
    pub m: usize,
    /// Smallest scanned radius from which the disc condition holds, if any.
    pub r_prime: Option<f64>,
    /// Boundary distance to the target circles.
    pub measured_i: f64,
    /// Worst distance to the target discs over `[r', 1]` (over the best
    /// suffix of the scan when no `r'` qualifies).
    pub measured_ii: f64,
    /// `sup |G - F| + sup |G' - F'|` on `|z| <= r'`.
    pub measured_iii: f64,
    /// Same quantity away from the widened support, when a support is given.
    pub measured_iv: Option<f64>,
    pub c0: f64,
    pub bound_a: f64,
    pub a_norm: f64,
    /// `sup |G - F - eta^2 z^{2n+1} theta|` on the boundary.
    pub tube_deviation: f64,
    pub eta_fit_error: f64,
    pub mu_fit_error: f64,
    pub theta_used: Vec3,
}

impl RHReport {
    fn trivial(r: f64, theta: Vec3) -> Self {
        RHReport {
            success: true,
            n_used: 0,
            fit_degree: 0,
            m: 0,
            r_prime: Some(r),
            measured_i: 0.0,
            measured_ii: 0.0,
            measured_iii: 0.0,
            measured_iv: None,
            c0: 0.0,
            bound_a: 0.0,
            a_norm: 0.0,
            tube_deviation: 0.0,
            eta_fit_error: 0.0,
            mu_fit_error: 0.0,
            theta_used: theta,
        }
    }

    /// Largest of the applicable measurements.
    pub fn worst(&self) -> f64 {
        let mut w = self.measured_i.max(self.measured_ii).max(self.measured_iii);
        if let Some(iv) = self.measured_iv {
            w = w.max(iv);
        }
        w
    }
}

/// Spinor `(p, q)` with `pi(p, q) = theta` for a null vector `theta`.
pub fn direction_lift(theta: &Vec3) -> Result<(C64, C64), RhError> {
    let n2 = norm3(theta).powi(2);
    if n2 == 0.0 {
        return Err(RhError::NotNull(f64::INFINITY));
    }
    let defect = quad(theta).norm() / n2;
    if defect > 1e-12 {
        return Err(RhError::NotNull(defect));
    }
    let i = c(0.0, 1.0);
    // adding +0 clears negative zeros so sqrt picks the upper branch
    let p2 = (theta[0] - i * theta[1]) * 0.5 + c(0.0, 0.0);
    if p2.norm() > 1e-8 * n2.sqrt() {
        let p = p2.sqrt();
        Ok((p, theta[2] / (p * 2.0)))
    } else {
        let q2 = (-theta[0] - i * theta[1]) * 0.5 + c(0.0, 0.0);
        Ok((c(0.0, 0.0), q2.sqrt()))
    }
}

/// `min |u q - v p| / |(p, q)|` over `n` boundary points.
pub fn gp_margin(spinor: &SpinorField, p: C64, q: C64, n: usize) -> f64 {
    let pq = (p.norm_sqr() + q.norm_sqr()).sqrt();
    let u = spinor.u.ring_values(1.0, n);
    let v = spinor.v.ring_values(1.0, n);
    u.iter()
        .zip(&v)
        .map(|(a, b)| (a * q - b * p).norm() / pq)
        .fold(f64::INFINITY, f64::min)
}

fn spinor_grid(spinor: &SpinorField) -> usize {
    holo::next_pow2(2 * spinor.u.span().max(spinor.v.span()) + 2).max(4096)
}

/// Moves `(p, q)` by at most `GP_RADIUS |(p, q)|` (sum of the two
/// displacements) until the margin exceeds `GP_MARGIN |(u, v)|`.
pub fn general_position_shift(
    spinor: &SpinorField,
    p: C64,
    q: C64,
    seed: u64,
) -> Result<(C64, C64), RhError> {
    let n = spinor_grid(spinor);
    let need = GP_MARGIN * spinor.boundary_norm(n);
    if gp_margin(spinor, p, q, n) > need {
        return Ok((p, q));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = GP_RADIUS * (p.norm_sqr() + q.norm_sqr()).sqrt() / 2f64.sqrt();
    for _ in 0..GP_TRIALS {
        let d = loop {
            let x: [f64; 4] = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            if x.iter().map(|t| t * t).sum::<f64>() <= 1.0 {
                break x;
            }
        };
        let (p2, q2) = (p + c(d[0], d[1]) * radius, q + c(d[2], d[3]) * radius);
        if gp_margin(spinor, p2, q2, n) > need {
            return Ok((p2, q2));
        }
    }
    Err(RhError::GeneralPositionFailed(GP_TRIALS))
}

/// Output of [`rh_core`]: the deformed curve and the two closed-form pieces
/// of `G_n - F`.
#[derive(Clone, Debug)]
pub struct RhCore {
    pub curve: NullCurve,
    /// Scalar series `B_n` with `G_n = F + B_n theta + A_n`.
    pub b: LaurentPoly,
    pub a: [LaurentPoly; 3],
    pub theta: Vec3,
    pub decomposition_error: f64,
}

/// Order `m` of the pole of `eta` plus one.
pub fn pole_order(eta: &LaurentPoly) -> i64 {
    1 - eta.k_min()
}

/// The deformation `u + sqrt(2n+1) eta z^n p`, `v + sqrt(2n+1) eta z^n q`,
/// integrated from `F(0)`, checked against its closed-form decomposition.
pub fn rh_core(
    central: &NullCurve,
    p: C64,
    q: C64,
    eta: &LaurentPoly,
    n: usize,
) -> Result<RhCore, RhError> {
    if central.domain() != Domain::Disc {
        return Err(RhError::Null(NullError::RequiresDisc));
    }
    let theta = pi_map(p, q);
    let zero = LaurentPoly::zero(Domain::Disc);
    if eta.is_zero() {
        return Ok(RhCore {
            curve: central.clone(),
            b: zero.clone(),
            a: [zero.clone(), zero.clone(), zero],
            theta,
            decomposition_error: 0.0,
        });
    }
    let m = pole_order(eta);
    if (n as i64) < m.max(0) {
        return Err(RhError::InvalidProblem(format!("n = {n} is below the pole order m = {m}")));
    }
    let spinor = central.spinor_or_lift()?;
    let w = LaurentPoly::new(eta.k_min() + n as i64, eta.coeffs().to_vec(), Domain::Disc)?;
    let s = ((2 * n + 1) as f64).sqrt();
    let un = spinor.u.add(&w.scale(p * s))?;
    let vn = spinor.v.add(&w.scale(q * s))?;
    let curve = match NullCurve::from_spinor(central.base(), SpinorField::new(un, vn)?) {
        Ok(g) => g,
        Err(NullError::NotImmersion(_)) => return Err(RhError::SpinorZero),
        Err(e) => return Err(e.into()),
    };

    let e2 = eta.mul(eta)?;
    let two_n1 = (2 * n + 1) as f64;
    let terms: Vec<(i64, C64)> = e2
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, &bk)| {
            let k = e2.k_min() + i as i64;
            (k + 2 * n as i64 + 1, bk * (two_n1 / (two_n1 + k as f64)))
        })
        .collect();
    let b = LaurentPoly::from_terms(&terms, Domain::Disc)?;

    let i = c(0.0, 1.0);
    let (u, v) = (&spinor.u, &spinor.v);
    let w2 = w.scale(c(2.0 * s, 0.0));
    let dirs = [
        u.scale(p).sub(&v.scale(q))?,
        u.scale(p).add(&v.scale(q))?.scale(i),
        u.scale(q).add(&v.scale(p))?,
    ];
    let mut a: Vec<LaurentPoly> = Vec::with_capacity(3);
    for d in &dirs {
        a.push(w2.mul(d)?.antiderivative(c(0.0, 0.0))?);
    }
    let a: [LaurentPoly; 3] = [a[0].clone(), a[1].clone(), a[2].clone()];

    let g = curve.position_poly();
    let f = central.position_poly();
    let mut err: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for j in 0..3 {
        let rebuilt = f[j].add(&b.scale(theta[j]))?.add(&a[j])?;
        err = err.max(g[j].sub(&rebuilt)?.coeff_norm());
        scale = scale.max(g[j].coeff_norm());
    }
    if err > 1e-9 * scale {
        return Err(RhError::DecompositionMismatch(err / scale));
    }
    Ok(RhCore { curve, b, a, theta, decomposition_error: err / scale })
}

/// Linear interpolation of periodic samples at angle `t`.
pub fn sample_at(samples: &[f64], t: f64) -> f64 {
    let m = samples.len();
    let x = t.rem_euclid(2.0 * PI) / (2.0 * PI) * m as f64;
    let i = (x.floor() as usize).min(m - 1);
    let f = x - i as f64;
    samples[i] * (1.0 - f) + samples[(i + 1) % m] * f
}

/// Whether angle `t` lies on the counter-clockwise arc from `a` to `b`.
pub fn in_arc(t: f64, a: f64, b: f64) -> bool {
    let len = b - a;
    if len >= 2.0 * PI {
        return true;
    }
    (t - a).rem_euclid(2.0 * PI) <= len.rem_euclid(2.0 * PI)
}

/// Distance from `w` to the circle `mu e^{it} theta`.
pub fn dist_circle(w: &Vec3, mu: f64, theta: &Vec3) -> f64 {
    let t2 = norm3(theta).powi(2);
    let d2 = norm3(w).powi(2) - 2.0 * mu * herm(w, theta).norm() + mu * mu * t2;
    d2.max(0.0).sqrt()
}

/// Distance from `w` to the flat disc `{ xi mu theta : |xi| <= 1 }`.
pub fn dist_disc(w: &Vec3, mu: f64, theta: &Vec3) -> f64 {
    let t2 = norm3(theta).powi(2);
    let a = herm(w, theta) / t2;
    let perp2 = (norm3(w).powi(2) - a.norm_sqr() * t2).max(0.0);
    let over = (a.norm() - mu).max(0.0);
    (perp2 + over * over * t2).sqrt()
}

fn ring3(p: &[LaurentPoly; 3], rho: f64, n: usize) -> Vec<Vec3> {
    let a = p[0].ring_values(rho, n);
    let b = p[1].ring_values(rho, n);
    let d = p[2].ring_values(rho, n);
    (0..n).map(|j| [a[j], b[j], d[j]]).collect()
}

fn sup3(vals: &[Vec3]) -> f64 {
    vals.iter().map(norm3).fold(0.0, f64::max)
}

struct Setup<'a> {
    problem: &'a RHProblem,
    mu: Vec<f64>,
    theta: Vec3,
    p: C64,
    q: C64,
    spinor: SpinorField,
    f_rings: HashMap<usize, Vec<Vec<Vec3>>>,
}

impl Setup<'_> {
    fn radii(&self) -> Vec<f64> {
        let (r, k) = (self.problem.r, self.problem.r_steps);
        let h = (1.0 - r) / k as f64;
        // r' sits within eps / |F'| of the boundary once F is steep
        let mut radii: Vec<f64> = (0..k).map(|i| r + h * i as f64).collect();
        radii.extend((0..RADIAL_REFINEMENTS).map(|j| 1.0 - h * 0.5f64.powi(j as i32)));
        radii.push(1.0);
        radii
    }

    fn f_rings(&mut self, n: usize) -> &Vec<Vec<Vec3>> {
        if !self.f_rings.contains_key(&n) {
            let f = &self.problem.central;
            let rings = self.radii().iter().map(|&rho| f.ring(rho, n)).collect();
            self.f_rings.insert(n, rings);
        }
        &self.f_rings[&n]
    }

    /// Measures one candidate.
    fn measure(&mut self, core: &RhCore, eta: &LaurentPoly, n: usize) -> Result<RHReport, RhError> {
        let pr = self.problem;
        let eps = pr.eps;
        let g = &core.curve;
        let f = &pr.central;
        let lb = g.boundary_grid(4096);
        let angles: Vec<f64> = (0..lb).map(|j| 2.0 * PI * j as f64 / lb as f64).collect();
        let mu: Vec<f64> = angles.iter().map(|&t| sample_at(&self.mu, t)).collect();
        let theta = core.theta;
        let radii = self.radii();
        let nr = radii.len();

        let mut dpos: Vec<LaurentPoly> = Vec::with_capacity(3);
        let mut dphi: Vec<LaurentPoly> = Vec::with_capacity(3);
        for j in 0..3 {
            dpos.push(g.position_poly()[j].sub(&f.position_poly()[j])?);
            dphi.push(g.phi()[j].sub(&f.phi()[j])?);
        }
        let dpos = [dpos[0].clone(), dpos[1].clone(), dpos[2].clone()];
        let dphi = [dphi[0].clone(), dphi[1].clone(), dphi[2].clone()];

        let outside: Option<Vec<bool>> = pr.support.map(|[a, b]| {
            let (wa, wb) = (a - pr.margin_theta, b + pr.margin_theta);
            angles.iter().map(|&t| !in_arc(t, wa, wb)).collect()
        });

        let f_rings = self.f_rings(lb).clone();
        let fb = &f_rings[nr - 1];
        let mut disc_dev = vec![0.0; nr];
        let mut out_dev = vec![0.0; nr];
        let mut measured_i = 0.0;
        for (k, &rho) in radii.iter().enumerate() {
            let d = ring3(&dpos, rho, lb);
            let fr = &f_rings[k];
            let mut worst: f64 = 0.0;
            for j in 0..lb {
                let gz = [d[j][0] + fr[j][0], d[j][1] + fr[j][1], d[j][2] + fr[j][2]];
                let w = sub3(&gz, &fb[j]);
                worst = worst.max(dist_disc(&w, mu[j], &theta));
                if k == nr - 1 {
                    measured_i = f64::max(measured_i, dist_circle(&w, mu[j], &theta));
                }
            }
            disc_dev[k] = worst;
            if let Some(out) = &outside {
                let dp = ring3(&dphi, rho, lb);
                out_dev[k] = (0..lb)
                    .filter(|&j| out[j])
                    .map(|j| norm3(&d[j]) + norm3(&dp[j]))
                    .fold(0.0, f64::max);
            }
        }
        // suffix maxima of the disc deviation
        let mut suffix = disc_dev.clone();
        for k in (0..nr - 1).rev() {
            suffix[k] = suffix[k].max(suffix[k + 1]);
        }
        let k_prime = (0..nr - 1).find(|&k| suffix[k] < eps);
        let (r_prime, measured_ii, k_eval) = match k_prime {
            Some(k) => (Some(radii[k]), suffix[k], k),
            None => (None, suffix[nr - 2], nr - 2),
        };
        let rp = radii[k_eval];
        let measured_iii = sup3(&ring3(&dpos, rp, lb)) + sup3(&ring3(&dphi, rp, lb));
        let measured_iv = outside.as_ref().map(|_| {
            out_dev[k_eval..].iter().cloned().fold(measured_iii, f64::max)
        });

        let a_norm = sup3(&ring3(&core.a, 1.0, lb));
        let ns = spinor_grid(&self.spinor);
        let (p, q) = (self.p, self.q);
        let u = self.spinor.u.ring_values(1.0, ns);
        let v = self.spinor.v.ring_values(1.0, ns);
        let c0 = (0..ns)
            .map(|j| norm3(&[p * u[j] - q * v[j], p * u[j] + q * v[j], q * u[j] + p * v[j]]))
            .fold(0.0, f64::max);
        let m = pole_order(eta);
        let s = ((2 * n + 1) as f64).sqrt();
        let bound_a = 2.0
            * c0
            * eta
                .coeffs()
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let k = eta.k_min() + i as i64;
                    s * a.norm() / (n as f64 + 1.0 + k as f64)
                })
                .sum::<f64>();
        if a_norm > 1.01 * bound_a {
            return Err(RhError::EstimateViolated { measured: a_norm, bound: bound_a });
        }

        let e2 = eta.mul(eta)?;
        let lead = LaurentPoly::new(e2.k_min() + 2 * n as i64 + 1, e2.coeffs().to_vec(), Domain::Disc)?;
        let lv = lead.ring_values(1.0, lb);
        let gb = g.ring(1.0, lb);
        let tube_deviation = (0..lb)
            .map(|j| norm3(&sub3(&sub3(&gb[j], &fb[j]), &scale3(lv[j], &theta))))
            .fold(0.0, f64::max);

        let ok_iv = measured_iv.is_none_or(|x| x < eps);
        Ok(RHReport {
            success: measured_i < eps && r_prime.is_some() && measured_iii < eps && ok_iv,
            n_used: n,
            fit_degree: 0,
            m: m.max(0) as usize,
            r_prime,
            measured_i,
            measured_ii,
            measured_iii,
            measured_iv,
            c0,
            bound_a,
            a_norm,
            tube_deviation,
            eta_fit_error: 0.0,
            mu_fit_error: 0.0,
            theta_used: theta,
        })
    }
}

fn validate(pr: &RHProblem) -> Result<(), RhError> {
    if pr.central.domain() != Domain::Disc {
        return Err(RhError::Null(NullError::RequiresDisc));
    }
    if !(pr.eps > 0.0) || !(pr.r > 0.0 && pr.r < 1.0) {
        return Err(RhError::InvalidProblem(format!("need eps > 0 and 0 < r < 1 (eps = {}, r = {})", pr.eps, pr.r)));
    }
    if pr.mu.is_empty() {
        return Err(RhError::InvalidSizeFunction("no samples".into()));
    }
    if pr.mu.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(RhError::InvalidSizeFunction("samples must be finite and non-negative".into()));
    }
    if pr.fit_degree == 0 || pr.n_max == 0 || pr.r_steps < 2 {
        return Err(RhError::InvalidProblem("fit_degree, n_max and r_steps must be positive".into()));
    }
    if let Some([a, b]) = pr.support {
        let m = pr.mu.len();
        for (j, &x) in pr.mu.iter().enumerate() {
            let t = 2.0 * PI * j as f64 / m as f64;
            if x > 1e-12 && !in_arc(t, a, b) {
                return Err(RhError::InvalidSizeFunction(format!(
                    "mu = {x:e} at angle {t:.4} outside the support arc"
                )));
            }
        }
    }
    Ok(())
}

/// Samples of `sqrt(mu)` on a power-of-two grid fine enough for degree `k`.
fn eta_samples(mu: &[f64], k: usize) -> Vec<C64> {
    let n = holo::next_pow2(mu.len().max(4 * k + 4));
    (0..n)
        .map(|j| c(sample_at(mu, 2.0 * PI * j as f64 / n as f64).sqrt(), 0.0))
        .collect()
}

/// Solves the problem by searching the fit degree `K` and the exponent `n`.
/// On success every applicable measurement is below `eps`.
pub fn rh_deform(problem: &RHProblem) -> Result<(NullCurve, RHReport), RhError> {
    validate(problem)?;
    let tn = norm3(&problem.direction);
    direction_lift(&problem.direction)?;
    let theta_hat = scale3(c(1.0 / tn, 0.0), &problem.direction);
    let mu: Vec<f64> = problem.mu.iter().map(|x| x * tn).collect();
    if mu.iter().all(|&x| x == 0.0) {
        return Ok((problem.central.clone(), RHReport::trivial(problem.r, theta_hat)));
    }
    let spinor = problem.central.spinor_or_lift()?;
    let (p0, q0) = direction_lift(&theta_hat)?;
    let (p, q) = general_position_shift(&spinor, p0, q0, problem.seed)?;
    let mut setup = Setup {
        problem,
        mu: mu.clone(),
        theta: pi_map(p, q),
        p,
        q,
        spinor,
        f_rings: HashMap::new(),
    };

    let annulus = Domain::Annulus { inner: problem.r };
    let mut best: Option<RHReport> = None;
    let mut k = problem.fit_degree;
    loop {
        let samples = eta_samples(&mu, k);
        let eta = fit_boundary(&samples, k, problem.fit_mode, annulus)?;
        let ev = eta.ring_values(1.0, samples.len());
        let nsm = samples.len();
        let eta_fit_error = (0..nsm).map(|j| (ev[j] - samples[j]).norm()).fold(0.0, f64::max);
        let mu_fit_error = (0..nsm)
            .map(|j| (ev[j] * ev[j] - samples[j].re * samples[j].re).norm())
            .fold(0.0, f64::max);
        let last_k = 2 * k > problem.max_fit_degree;
        if mu_fit_error <= problem.eps / 4.0 || last_k {
            let m = pole_order(&eta).max(1) as usize;
            let mut n = m.max(problem.n_start);
            let mut prev_iv = f64::INFINITY;
            while n <= problem.n_max {
                let core = match rh_core(&problem.central, p, q, &eta, n) {
                    Ok(core) => core,
                    Err(RhError::Holo(HoloError::TruncationOverflow { .. })) => break,
                    // zeros of the deformed spinor leave the disc as n grows
                    Err(RhError::SpinorZero) => {
                        n *= 2;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let mut report = setup.measure(&core, &eta, n)?;
                report.fit_degree = k;
                report.eta_fit_error = eta_fit_error;
                report.mu_fit_error = mu_fit_error;
                if report.success {
                    return Ok((core.curve, report));
                }
                let iv = report.measured_iv.unwrap_or(0.0);
                let leaking = iv >= problem.eps && iv > prev_iv && report.measured_iii < problem.eps;
                prev_iv = iv;
                if best.as_ref().is_none_or(|b| report.worst() < b.worst()) {
                    best = Some(report);
                }
                // leakage off the support grows like sqrt(n): only a finer fit helps
                if leaking {
                    break;
                }
                n *= 2;
            }
        }
        if last_k {
            break;
        }
        k *= 2;
    }
    Err(RhError::NSearchExhausted(Box::new(best.unwrap_or_else(|| {
        let mut r = RHReport::trivial(problem.r, setup.theta);
        r.success = false;
        r.r_prime = None;
        r
    }))))
}

/// Result of running one shared `(eta, n)` over a family of central curves.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyReport {
    pub n: Vec<usize>,
    /// `max_t sup |A_{t,n}|` for each `n`.
    pub max_a_norm: Vec<f64>,
    /// Whether `B_n` came out identical for every member.
    pub b_shared: bool,
    pub min_gp_margin: f64,
}

/// Deforms every member of a family with the same `(p, q, eta, n)`.
pub fn rh_family_probe(
    family: &[NullCurve],
    theta: &Vec3,
    eta: &LaurentPoly,
    ns: &[usize],
    seed: u64,
) -> Result<FamilyReport, RhError> {
    let first = family
        .first()
        .ok_or_else(|| RhError::InvalidProblem("empty family".into()))?;
    let (p0, q0) = direction_lift(theta)?;
    let (p, q) = general_position_shift(&first.spinor_or_lift()?, p0, q0, seed)?;
    let mut min_margin = f64::INFINITY;
    let mut spinors = Vec::with_capacity(family.len());
    for f in family {
        let s = f.spinor_or_lift()?;
        let n = spinor_grid(&s);
        let rel = gp_margin(&s, p, q, n) / s.boundary_norm(n);
        if rel <= GP_MARGIN {
            return Err(RhError::GeneralPositionFailed(0));
        }
        min_margin = min_margin.min(rel);
        spinors.push(s);
    }
    let mut max_a_norm = Vec::with_capacity(ns.len());
    let mut b_shared = true;
    for &n in ns {
        let mut worst: f64 = 0.0;
        let mut b_ref: Option<LaurentPoly> = None;
        for f in family {
            let core = rh_core(f, p, q, eta, n)?;
            let lb = core.curve.boundary_grid(4096);
            worst = worst.max(sup3(&ring3(&core.a, 1.0, lb)));
            match &b_ref {
                None => b_ref = Some(core.b),
                Some(b) => b_shared &= *b == core.b,
            }
        }
        max_a_norm.push(worst);
    }
    Ok(FamilyReport { n: ns.to_vec(), max_a_norm, b_shared, min_gp_margin: min_margin })
}
