//! Iterated Riemann-Hilbert drivers: complete bounded null discs and
//! proper null discs in the complement of a slab.
//!
//! Both drivers run a fixed, small number of steps with capped degrees, so
//! they show the mechanism rather than reach the limit object.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::holo::{FitMode, C64};
use crate::null::{c, herm, m_gauge, norm3, quad, v1, v2, NullCurve, NullError, PolarMesh, Vec3};
use crate::rh::{rh_deform, RHProblem, RhError};

pub const FIDELITY_NOTE: &str = "desk-scale run: finitely many steps with capped fit degree and \
exponent; trends are indicative of the limit construction, not a proof of it";

/// Rotation of the arc partition at successive steps, in arc widths.
const ARC_OFFSETS: [f64; 2] = [0.0, 0.5];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstructionError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("anchor value is zero")]
    DegenerateAnchor,
    #[error("step {step}: boundary point at angle {angle:.4} has gauge {gauge:.4} <= {bound:.4}")]
    ClassificationGap { step: usize, angle: f64, gauge: f64, bound: f64 },
    #[error("step {step}: intrinsic radius {after} did not exceed {before}")]
    StepRegressed { step: usize, before: f64, after: f64 },
    #[error("step {step}: {what}")]
    ContractViolated { step: usize, what: String },
    #[error("step {step}: gauge {min_gauge:.4} below target {target:.4}")]
    GaugeShortfall { step: usize, min_gauge: f64, target: f64 },
    #[error("step {step}, arc {arc}: {source}")]
    Rh { step: usize, arc: usize, source: RhError },
    #[error("input curve must be a null disc")]
    RequiresDisc,
    #[error(transparent)]
    Null(#[from] NullError),
}

/// A driver stop together with everything computed before it.
#[derive(Debug, Clone)]
pub struct DriverFailure {
    pub error: ConstructionError,
    pub trace: IterationTrace,
    pub last: NullCurve,
}

/// Radii `r_n` and `rho_n` with `r_n^2 = r_{n-1}^2 + c^2/n^2`,
/// `rho_n = rho_{n-1} + c/n` and `c = sqrt(6 (1 - r0^2)) / pi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CYSchedule {
    pub r0: f64,
    pub rho0: f64,
    pub c: f64,
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
}

pub fn cy_constant(r0: f64) -> f64 {
    (6.0 * (1.0 - r0 * r0)).sqrt() / PI
}

pub fn cy_schedule(r0: f64, rho0: f64, steps: usize) -> Result<CYSchedule, ConstructionError> {
    if !(0.0..1.0).contains(&r0) || !(rho0 > 0.0) {
        return Err(ConstructionError::InvalidSchedule(format!(
            "need 0 <= r0 < 1 and rho0 > 0 (r0 = {r0}, rho0 = {rho0})"
        )));
    }
    let cc = cy_constant(r0);
    let mut r = Vec::with_capacity(steps + 1);
    let mut rho = Vec::with_capacity(steps + 1);
    r.push(r0);
    rho.push(rho0);
    // compensated sums keep r_N^2 exact to rounding over millions of steps
    let (mut r2, mut r2_err) = (r0 * r0, 0.0);
    let (mut h, mut h_err) = (rho0, 0.0);
    for n in 1..=steps {
        let d = cc / n as f64;
        neumaier(&mut r2, &mut r2_err, d * d);
        neumaier(&mut h, &mut h_err, d);
        r.push((r2 + r2_err).sqrt());
        rho.push(h + h_err);
    }
    Ok(CYSchedule { r0, rho0, c: cc, r, rho })
}

fn neumaier(sum: &mut f64, err: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *err += (*sum - t) + x;
    } else {
        *err += (x - t) + *sum;
    }
    *sum = t;
}

impl CYSchedule {
    pub fn steps(&self) -> usize {
        self.r.len() - 1
    }

    /// Bump height of step `n >= 1`.
    pub fn delta(&self, n: usize) -> f64 {
        self.c / n as f64
    }
}

/// Gauge levels `s_n = s0 + n` and tolerances `eps_n` (index 0 is the
/// initial allowance).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZZSchedule {
    pub s0: f64,
    pub s: Vec<f64>,
    pub eps: Vec<f64>,
    pub eta_budget: f64,
}

impl ZZSchedule {
    /// Checks `eps_n < eps_{n-1}/2` and `sum_{n>=1} eps_n < eta_budget - third_sup0`.
    pub fn new(s0: f64, eps: Vec<f64>, eta_budget: f64, third_sup0: f64) -> Result<Self, ConstructionError> {
        if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) {
            return Err(ConstructionError::InvalidSchedule("tolerances must be positive".into()));
        }
        for n in 1..eps.len() {
            if !(eps[n] < eps[n - 1] / 2.0) {
                return Err(ConstructionError::InvalidSchedule(format!(
                    "eps[{n}] = {} is not below eps[{}]/2 = {}",
                    eps[n],
                    n - 1,
                    eps[n - 1] / 2.0
                )));
            }
        }
        let total: f64 = eps[1..].iter().sum();
        if !(total < eta_budget - third_sup0) {
            return Err(ConstructionError::InvalidSchedule(format!(
                "tolerance sum {total} exceeds budget {} - {third_sup0}",
                eta_budget
            )));
        }
        let s = (0..eps.len()).map(|n| s0 + n as f64).collect();
        Ok(ZZSchedule { s0, s, eps, eta_budget })
    }

    /// `eps_n = eps0 * ratio^n`, `ratio < 1/2`.
    pub fn geometric(
        s0: f64,
        eps0: f64,
        ratio: f64,
        steps: usize,
        eta_budget: f64,
        third_sup0: f64,
    ) -> Result<Self, ConstructionError> {
        let eps = (0..=steps).map(|n| eps0 * ratio.powi(n as i32)).collect();
        Self::new(s0, eps, eta_budget, third_sup0)
    }

    pub fn steps(&self) -> usize {
        self.eps.len() - 1
    }
}

/// Unit null vector Hermitian-orthogonal to `w`; the root of the quadratic
/// on the orthogonal plane is picked by `seed`.
pub fn orthogonal_null_direction(w: &Vec3, seed: u64) -> Result<Vec3, ConstructionError> {
    let wn = norm3(w);
    if !(wn > 0.0) {
        return Err(ConstructionError::DegenerateAnchor);
    }
    let what = [w[0] / wn, w[1] / wn, w[2] / wn];
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| w[a].norm().total_cmp(&w[b].norm()).then(a.cmp(&b)));
    let mut basis: Vec<Vec3> = Vec::with_capacity(2);
    for &i in &order[..2] {
        let mut e = [c(0.0, 0.0); 3];
        e[i] = c(1.0, 0.0);
        let pr = herm(&e, &what);
        for k in 0..3 {
            e[k] -= pr * what[k];
        }
        for b in &basis {
            let pb = herm(&e, b);
            for k in 0..3 {
                e[k] -= pb * b[k];
            }
        }
        let n = norm3(&e);
        basis.push([e[0] / n, e[1] / n, e[2] / n]);
    }
    let (e1, e2) = (basis[0], basis[1]);
    let a = quad(&e1);
    let b = e1[0] * e2[0] + e1[1] * e2[1] + e1[2] * e2[2];
    let cc = quad(&e2);
    let pick = ChaCha8Rng::seed_from_u64(seed).gen_bool(0.5);
    let (alpha, beta) = if a.norm() < 1e-14 {
        if pick || b.norm() < 1e-14 {
            (c(1.0, 0.0), c(0.0, 0.0))
        } else {
            (-cc / (b * 2.0), c(1.0, 0.0))
        }
    } else {
        let disc = (b * b - a * cc).sqrt();
        let root = if pick { (-b + disc) / a } else { (-b - disc) / a };
        (root, c(1.0, 0.0))
    };
    let v = [
        alpha * e1[0] + beta * e2[0],
        alpha * e1[1] + beta * e2[1],
        alpha * e1[2] + beta * e2[2],
    ];
    let n = norm3(&v);
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

/// Per-step measurements written to the trace files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub n_rh: usize,
    pub sup_norm: f64,
    pub min_boundary_norm: f64,
    pub intrinsic_radius: f64,
    pub mesh_nr: usize,
    pub mesh_nt: usize,
    pub min_m_gauge: f64,
    pub third_sup: f64,
    pub null_residual: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub driver: String,
    pub note: String,
    pub initial: StepRecord,
    pub steps: Vec<StepRecord>,
}

impl IterationTrace {
    pub const CSV_HEADER: &'static str =
        "step,n_rh,sup_norm,intrinsic_radius,mesh_nr,mesh_nt,min_m_gauge,third_sup,null_residual,wall_ms";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.steps {
            let _ = writeln!(
                s,
                "{},{},{:.12e},{:.12e},{},{},{:.12e},{:.12e},{:.6e},{}",
                r.step,
                r.n_rh,
                r.sup_norm,
                r.intrinsic_radius,
                r.mesh_nr,
                r.mesh_nt,
                r.min_m_gauge,
                r.third_sup,
                r.null_residual,
                r.wall_ms
            );
        }
        s
    }
}

fn record(
    f: &NullCurve,
    step: usize,
    n_rh: usize,
    mesh: PolarMesh,
    started: Option<Instant>,
) -> Result<StepRecord, NullError> {
    let n = f.boundary_grid(4096);
    let vals = f.ring(1.0, n);
    let sup_norm = vals.iter().map(norm3).fold(0.0, f64::max);
    let min_boundary_norm = vals.iter().map(norm3).fold(f64::INFINITY, f64::min);
    let min_m_gauge = vals.iter().map(m_gauge).fold(f64::INFINITY, f64::min);
    let third_sup = vals.iter().map(|z| z[2].norm()).fold(0.0, f64::max);
    Ok(StepRecord {
        step,
        n_rh,
        sup_norm,
        min_boundary_norm,
        intrinsic_radius: f.intrinsic_radius(1.0, mesh)?,
        mesh_nr: mesh.n_r,
        mesh_nt: mesh.n_theta,
        min_m_gauge,
        third_sup,
        null_residual: f.null_residual()?,
        wall_ms: started.map_or(0, |t| t.elapsed().as_millis() as u64),
    })
}

/// Shared knobs of the per-call deformation problems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RhSettings {
    pub r: f64,
    pub fit_degree: usize,
    pub max_fit_degree: usize,
    pub fit_mode: FitMode,
    pub n_max: usize,
    pub margin_theta: f64,
    pub mu_samples: usize,
}

impl Default for RhSettings {
    fn default() -> Self {
        RhSettings {
            r: 0.5,
            fit_degree: 32,
            max_fit_degree: 256,
            fit_mode: FitMode::LeastSquares,
            n_max: 1 << 14,
            margin_theta: 0.2,
            mu_samples: 2048,
        }
    }
}

impl RhSettings {
    fn problem(&self, f: &NullCurve, theta: Vec3, mu: Vec<f64>, eps: f64, seed: u64) -> RHProblem {
        let mut p = RHProblem::new(f.clone(), theta, mu, eps, self.r);
        p.fit_degree = self.fit_degree;
        p.max_fit_degree = self.max_fit_degree;
        p.fit_mode = self.fit_mode;
        p.n_max = self.n_max;
        p.margin_theta = self.margin_theta;
        p.seed = seed;
        p
    }
}

/// Samples of a bump of height `h` on the arc `[a, b]` whose square root is
/// a raised cosine, zero elsewhere.
pub fn arc_bump(a: f64, b: f64, h: f64, samples: usize) -> Vec<f64> {
    (0..samples)
        .map(|j| {
            let t = 2.0 * PI * j as f64 / samples as f64;
            let x = (t - a).rem_euclid(2.0 * PI);
            let len = b - a;
            if x < len {
                let s = 0.5 * (1.0 - (2.0 * PI * x / len).cos());
                h * s * s
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CYConfig {
    pub steps: usize,
    pub arcs: usize,
    /// Tolerance of each deformation; a step may move `|F|` by the sum over
    /// its arcs beyond `r_n`.
    pub eps: f64,
    pub gap_theta: f64,
    pub mesh: PolarMesh,
    pub seed: u64,
    pub record_timing: bool,
    pub rh: RhSettings,
}

impl Default for CYConfig {
    fn default() -> Self {
        CYConfig {
            steps: 4,
            arcs: 8,
            eps: 0.8,
            gap_theta: 0.15,
            mesh: PolarMesh { n_r: 128, n_theta: 512 },
            seed: 0,
            record_timing: true,
            rh: RhSettings::default(),
        }
    }
}

fn fail(error: ConstructionError, trace: &IterationTrace, last: &NullCurve) -> DriverFailure {
    DriverFailure { error, trace: trace.clone(), last: last.clone() }
}

/// Pushes each boundary arc outward, orthogonally to the current position,
/// by `c/n` at step `n`, so the intrinsic radius grows like the harmonic sum
/// while `|F|` grows only like its square root.
pub fn calabi_yau_disc(
    f0: &NullCurve,
    schedule: &CYSchedule,
    cfg: &CYConfig,
) -> Result<(NullCurve, IterationTrace), DriverFailure> {
    let t0 = cfg.record_timing.then(Instant::now);
    let initial = record(f0, 0, 0, cfg.mesh, None).map_err(|e| DriverFailure {
        error: e.into(),
        trace: IterationTrace {
            driver: "cy".into(),
            note: FIDELITY_NOTE.into(),
            initial: StepRecord::empty(),
            steps: vec![],
        },
        last: f0.clone(),
    })?;
    let mut trace = IterationTrace {
        driver: "cy".into(),
        note: FIDELITY_NOTE.into(),
        initial,
        steps: Vec::new(),
    };
    if f0.domain() != crate::holo::Domain::Disc {
        return Err(fail(ConstructionError::RequiresDisc, &trace, f0));
    }
    if cfg.steps > schedule.steps() || cfg.arcs == 0 {
        return Err(fail(
            ConstructionError::InvalidSchedule(format!(
                "{} steps requested, schedule has {}",
                cfg.steps,
                schedule.steps()
            )),
            &trace,
            f0,
        ));
    }
    let mut f = f0.clone();
    let mut radius = trace.initial.intrinsic_radius;
    let width = 2.0 * PI / cfg.arcs as f64;
    for n in 1..=cfg.steps {
        let delta = schedule.delta(n);
        let mut n_rh = 0;
        // each step puts its gaps over the previous step's arc centres
        let offset = width * ARC_OFFSETS[(n - 1) % ARC_OFFSETS.len()];
        for j in 0..cfg.arcs {
            let a = offset + j as f64 * width + cfg.gap_theta / 2.0;
            let b = offset + (j + 1) as f64 * width - cfg.gap_theta / 2.0;
            let anchor = C64::from_polar(1.0, 0.5 * (a + b));
            let w = f.eval(anchor).map_err(|e| fail(e.into(), &trace, &f))?;
            let seed = cfg.seed ^ ((n as u64) << 32 | j as u64);
            let theta = orthogonal_null_direction(&w, seed).map_err(|e| fail(e, &trace, &f))?;
            let mu = arc_bump(a, b, delta, cfg.rh.mu_samples);
            let mut pr = cfg.rh.problem(&f, theta, mu, cfg.eps, seed);
            pr.support = Some([a, b]);
            match rh_deform(&pr) {
                Ok((g, rep)) => {
                    n_rh = n_rh.max(rep.n_used);
                    f = g;
                }
                Err(e) => {
                    return Err(fail(ConstructionError::Rh { step: n, arc: j, source: e }, &trace, &f))
                }
            }
        }
        let rec = record(&f, n, n_rh, cfg.mesh, t0).map_err(|e| fail(e.into(), &trace, &f))?;
        let sup = rec.sup_norm;
        let after = rec.intrinsic_radius;
        trace.steps.push(rec);
        if !(after > radius) {
            return Err(fail(
                ConstructionError::StepRegressed { step: n, before: radius, after },
                &trace,
                &f,
            ));
        }
        let allowed = schedule.r[n] + cfg.arcs as f64 * cfg.eps;
        if !(sup < allowed) {
            return Err(fail(
                ConstructionError::ContractViolated {
                    step: n,
                    what: format!("sup |F| = {sup} not below r_n + slack = {allowed}"),
                },
                &trace,
                &f,
            ));
        }
        radius = after;
    }
    Ok((f, trace))
}

impl StepRecord {
    fn empty() -> Self {
        StepRecord {
            step: 0,
            n_rh: 0,
            sup_norm: 0.0,
            min_boundary_norm: 0.0,
            intrinsic_radius: 0.0,
            mesh_nr: 0,
            mesh_nt: 0,
            min_m_gauge: 0.0,
            third_sup: 0.0,
            null_residual: 0.0,
            wall_ms: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZZConfig {
    pub margin: f64,
    pub tol_gauge: f64,
    pub gap_theta: f64,
    pub mesh: PolarMesh,
    pub seed: u64,
    pub record_timing: bool,
    pub rh: RhSettings,
}

impl Default for ZZConfig {
    fn default() -> Self {
        ZZConfig {
            margin: 0.2,
            tol_gauge: 0.1,
            gap_theta: 0.15,
            mesh: PolarMesh { n_r: 64, n_theta: 256 },
            seed: 0,
            record_timing: true,
            rh: RhSettings { fit_mode: FitMode::Fejer, ..RhSettings::default() },
        }
    }
}

/// Maximal runs of equal labels on a cyclic grid, as `(start, len, label)`.
fn cyclic_runs(labels: &[u8]) -> Vec<(usize, usize, u8)> {
    let n = labels.len();
    let start = (0..n).find(|&j| labels[j] != labels[(j + n - 1) % n]);
    let Some(s0) = start else {
        return vec![(0, n, labels[0])];
    };
    let mut runs = Vec::new();
    let mut j = s0;
    let mut done = 0;
    while done < n {
        let lab = labels[j % n];
        let mut len = 0;
        while done < n && labels[(j + len) % n] == lab {
            len += 1;
            done += 1;
        }
        runs.push((j % n, len, lab));
        j += len;
    }
    runs
}

/// Raises `max(|<F,V1>|, |<F,V2>|)` on the boundary above `s_n` at every
/// step, pushing along `V2` where `|<F,V1>|` is already large and along `V1`
/// elsewhere, while the third coordinate moves by less than `eps_n`.
pub fn zigzag_proper(
    f0: &NullCurve,
    schedule: &ZZSchedule,
    cfg: &ZZConfig,
) -> Result<(NullCurve, IterationTrace), DriverFailure> {
    let t0 = cfg.record_timing.then(Instant::now);
    let mut trace = IterationTrace {
        driver: "zigzag".into(),
        note: FIDELITY_NOTE.into(),
        initial: StepRecord::empty(),
        steps: Vec::new(),
    };
    trace.initial = record(f0, 0, 0, cfg.mesh, None).map_err(|e| fail(e.into(), &trace, f0))?;
    if f0.domain() != crate::holo::Domain::Disc {
        return Err(fail(ConstructionError::RequiresDisc, &trace, f0));
    }
    let mut f = f0.clone();
    let (e1, e2) = (v1(), v2());
    for n in 1..=schedule.steps() {
        let (s_prev, s_n, eps_n) = (schedule.s[n - 1], schedule.s[n], schedule.eps[n]);
        let lb = f.boundary_grid(4096);
        let vals = f.ring(1.0, lb);
        let third_before = vals.iter().map(|z| z[2].norm()).fold(0.0, f64::max);
        let mut labels = Vec::with_capacity(lb);
        for (j, z) in vals.iter().enumerate() {
            let (g1, g2) = (herm(z, &e1).norm(), herm(z, &e2).norm());
            if g1 > s_prev {
                labels.push(1u8);
            } else if g2 > s_prev {
                labels.push(2u8);
            } else {
                let err = ConstructionError::ClassificationGap {
                    step: n,
                    angle: 2.0 * PI * j as f64 / lb as f64,
                    gauge: g1.max(g2),
                    bound: s_prev,
                };
                return Err(fail(err, &trace, &f));
            }
        }
        let runs = cyclic_runs(&labels);
        let mut n_rh = 0;
        let mut n_start = 0;
        let base = f.clone();
        loop {
            let mut g = base.clone();
            for (arc, &(start, len, lab)) in runs.iter().enumerate() {
                // class 1 moves along V2, class 2 along V1
                let dir = if lab == 1 { e2 } else { e1 };
                let run_vals = (0..len).map(|i| &vals[(start + i) % lb]);
                let h = s_n + cfg.margin + run_vals.map(|z| herm(z, &dir).norm()).fold(0.0, f64::max);
                let (mu, support) = if runs.len() == 1 {
                    (vec![h; cfg.rh.mu_samples], None)
                } else {
                    let a = 2.0 * PI * start as f64 / lb as f64 + cfg.gap_theta / 2.0;
                    let b = 2.0 * PI * (start + len) as f64 / lb as f64 - cfg.gap_theta / 2.0;
                    if b <= a {
                        continue;
                    }
                    (arc_bump(a, b, h, cfg.rh.mu_samples), Some([a, b]))
                };
                let seed = cfg.seed ^ ((n as u64) << 32 | arc as u64);
                let mut pr = cfg.rh.problem(&g, dir, mu, eps_n / 2.0, seed);
                pr.support = support;
                pr.n_start = n_start;
                match rh_deform(&pr) {
                    Ok((next, rep)) => {
                        n_rh = n_rh.max(rep.n_used);
                        g = next;
                    }
                    Err(e) => {
                        return Err(fail(ConstructionError::Rh { step: n, arc, source: e }, &trace, &f))
                    }
                }
            }
            let gb = g.ring(1.0, g.boundary_grid(4096));
            let min_gauge = gb.iter().map(m_gauge).fold(f64::INFINITY, f64::min);
            let target = s_n - cfg.tol_gauge;
            if min_gauge >= target {
                f = g;
                break;
            }
            if 2 * n_rh > cfg.rh.n_max || n_rh == 0 {
                let rec = record(&g, n, n_rh, cfg.mesh, t0).map_err(|e| fail(e.into(), &trace, &f))?;
                trace.steps.push(rec);
                let err = ConstructionError::GaugeShortfall { step: n, min_gauge, target };
                return Err(fail(err, &trace, &g));
            }
            n_start = 2 * n_rh;
        }
        let rec = record(&f, n, n_rh, cfg.mesh, t0).map_err(|e| fail(e.into(), &trace, &f))?;
        let growth = rec.third_sup - third_before;
        trace.steps.push(rec);
        if !(growth < eps_n) {
            return Err(fail(
                ConstructionError::ContractViolated {
                    step: n,
                    what: format!("third coordinate grew by {growth} >= eps_n = {eps_n}"),
                },
                &trace,
                &f,
            ));
        }
    }
    Ok((f, trace))
}
