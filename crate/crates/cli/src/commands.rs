//! Subcommand bodies. Each reads a JSON config, applies flag overrides and
//! writes its artifacts into an output directory.

use std::fmt::Debug;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use nullcurve::constructions::{
    calabi_yau_disc, cy_schedule, zigzag_proper, CYConfig, ConstructionError, DriverFailure, IterationTrace,
    ZZConfig, ZZSchedule,
};
use nullcurve::null::{null_residual_of, phi_extrema, CurveData, NullCurve, NULL_TOL};
use nullcurve::rh::{rh_deform, RHProblem, RhError};
use nullcurve::transforms::{
    real_part_doubling_residual, to_sl2, PolarGrid, Sl2Curve, TransformError,
};
use nullcurve::{Domain, LaurentPoly};

use crate::export::{curve_mesh, sl2_mesh, write_mesh, Format, Target};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DRIVER: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

/// A failed command: exit code plus the machine-readable error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    #[serde(skip)]
    pub code: i32,
    pub error: String,
    pub message: String,
}

impl CliError {
    pub fn input(error: &str, message: impl Into<String>) -> Self {
        CliError { code: EXIT_INPUT, error: error.into(), message: message.into() }
    }

    fn from_err<E: Debug + std::fmt::Display>(code: i32, e: &E) -> Self {
        CliError { code, error: variant_name(e), message: e.to_string() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

/// Innermost variant name, skipping transparent wrappers.
fn variant_name<E: Debug>(e: &E) -> String {
    let dbg = format!("{e:?}");
    let mut rest = dbg.as_str();
    loop {
        let end = rest.find(|ch: char| !ch.is_alphanumeric() && ch != '_').unwrap_or(rest.len());
        let name = &rest[..end];
        let wrapped = matches!(name, "Null" | "Holo" | "Rh" | "Transform");
        if wrapped && rest[end..].starts_with('(') {
            rest = &rest[end + 1..];
            continue;
        }
        return name.to_string();
    }
}

fn rh_code(e: &RhError) -> i32 {
    match e {
        RhError::NotNull(_)
        | RhError::InvalidSizeFunction(_)
        | RhError::InvalidProblem(_)
        | RhError::Null(_)
        | RhError::Holo(_) => EXIT_INPUT,
        _ => EXIT_DRIVER,
    }
}

fn construction_code(e: &ConstructionError) -> i32 {
    match e {
        ConstructionError::InvalidSchedule(_) | ConstructionError::RequiresDisc => EXIT_INPUT,
        ConstructionError::Rh { source, .. } => rh_code(source).max(EXIT_DRIVER),
        _ => EXIT_DRIVER,
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input("Io", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input("InvalidConfig", format!("{}: {e}", path.display())))
}

pub fn to_json<T: Serialize>(x: &T) -> String {
    let mut s = serde_json::to_string_pretty(x).expect("value serializes");
    s.push('\n');
    s
}

fn write(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::input("Io", format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    fs::write(&p, content).map_err(|e| CliError::input("Io", format!("{}: {e}", p.display())))
}

#[derive(Clone, Debug, Default)]
pub struct RhOverrides {
    pub eps: Option<f64>,
    pub seed: Option<u64>,
    pub n_max: Option<usize>,
}

/// Writes `curve.json` and `report.json`.
pub fn cmd_rh(config: &Path, out: &Path, ov: &RhOverrides) -> Result<(), CliError> {
    let mut pr: RHProblem = read_json(config)?;
    if let Some(x) = ov.eps {
        pr.eps = x;
    }
    if let Some(x) = ov.seed {
        pr.seed = x;
    }
    if let Some(x) = ov.n_max {
        pr.n_max = x;
    }
    match rh_deform(&pr) {
        Ok((g, report)) => {
            write(out, "curve.json", &to_json(&g))?;
            write(out, "report.json", &to_json(&report))
        }
        Err(RhError::NSearchExhausted(report)) => {
            write(out, "report.json", &to_json(&*report))?;
            Err(CliError::from_err(EXIT_DRIVER, &RhError::NSearchExhausted(report)))
        }
        Err(e) => Err(CliError::from_err(rh_code(&e), &e)),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CyRunConfig {
    pub curve: NullCurve,
    pub r0: f64,
    pub rho0: f64,
    #[serde(default)]
    pub driver: CYConfig,
}

#[derive(Clone, Debug, Default)]
pub struct DriverOverrides {
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub no_timing: bool,
}

fn write_trace(out: &Path, trace: &IterationTrace, last: &NullCurve) -> Result<(), CliError> {
    write(out, "final.json", &to_json(last))?;
    write(out, "trace.csv", &trace.to_csv())?;
    write(out, "trace.json", &to_json(trace))
}

fn driver_result(
    out: &Path,
    r: Result<(NullCurve, IterationTrace), DriverFailure>,
) -> Result<(), CliError> {
    match r {
        Ok((f, trace)) => write_trace(out, &trace, &f),
        Err(fail) => {
            write_trace(out, &fail.trace, &fail.last)?;
            Err(CliError::from_err(construction_code(&fail.error), &fail.error))
        }
    }
}

/// Writes `schedule.json`, `final.json`, `trace.csv` and `trace.json`.
pub fn cmd_cy(config: &Path, out: &Path, ov: &DriverOverrides) -> Result<(), CliError> {
    let mut cfg: CyRunConfig = read_json(config)?;
    if let Some(x) = ov.steps {
        cfg.driver.steps = x;
    }
    if let Some(x) = ov.seed {
        cfg.driver.seed = x;
    }
    if ov.no_timing {
        cfg.driver.record_timing = false;
    }
    let schedule = cy_schedule(cfg.r0, cfg.rho0, cfg.driver.steps.max(1))
        .map_err(|e| CliError::from_err(EXIT_INPUT, &e))?;
    write(out, "schedule.json", &to_json(&schedule))?;
    driver_result(out, calabi_yau_disc(&cfg.curve, &schedule, &cfg.driver))
}

fn default_ratio() -> f64 {
    0.49
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZzRunConfig {
    pub curve: NullCurve,
    pub s0: f64,
    /// `eps_n = eps0 * ratio^n`.
    pub eps0: f64,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    pub steps: usize,
    pub eta_budget: f64,
    #[serde(default)]
    pub driver: ZZConfig,
}

/// Writes `schedule.json`, `final.json`, `trace.csv` and `trace.json`.
pub fn cmd_zigzag(config: &Path, out: &Path, ov: &DriverOverrides) -> Result<(), CliError> {
    let mut cfg: ZzRunConfig = read_json(config)?;
    if let Some(x) = ov.steps {
        cfg.steps = x;
    }
    if let Some(x) = ov.seed {
        cfg.driver.seed = x;
    }
    if ov.no_timing {
        cfg.driver.record_timing = false;
    }
    let lb = cfg.curve.boundary_grid(4096);
    let third0 = cfg.curve.ring(1.0, lb).iter().map(|z| z[2].norm()).fold(0.0, f64::max);
    let schedule = ZZSchedule::geometric(cfg.s0, cfg.eps0, cfg.ratio, cfg.steps, cfg.eta_budget, third0)
        .map_err(|e| CliError::from_err(EXIT_INPUT, &e))?;
    write(out, "schedule.json", &to_json(&schedule))?;
    driver_result(out, zigzag_proper(&cfg.curve, &schedule, &cfg.driver))
}

fn default_target() -> Target {
    Target::Real
}
fn default_format() -> Format {
    Format::Obj
}
fn default_n_r() -> usize {
    32
}
fn default_n_theta() -> usize {
    128
}
fn default_radius() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(default = "default_target")]
    pub target: Target,
    #[serde(default = "default_format")]
    pub format: Format,
    #[serde(default = "default_n_r")]
    pub n_r: usize,
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Added to the third coordinate before the `SL_2` map.
    #[serde(default)]
    pub translate_z3: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

#[derive(Clone, Debug, Default)]
pub struct MeshOverrides {
    pub target: Option<Target>,
    pub format: Option<Format>,
    pub n_r: Option<usize>,
    pub n_theta: Option<usize>,
    pub radius: Option<f64>,
    pub translate_z3: Option<f64>,
}

/// Either kind of meshable input.
pub enum Surface {
    Curve(NullCurve),
    Sl2(Sl2Curve),
}

pub fn read_surface(path: &Path) -> Result<Surface, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input("Io", format!("{}: {e}", path.display())))?;
    if let Ok(g) = serde_json::from_str::<Sl2Curve>(&text) {
        return Ok(Surface::Sl2(g));
    }
    serde_json::from_str::<NullCurve>(&text)
        .map(Surface::Curve)
        .map_err(|e| CliError::input("InvalidInput", format!("{}: {e}", path.display())))
}

/// Writes `surface.obj` or `surface.ply`; returns its path.
pub fn cmd_mesh(input: &Path, config: Option<&Path>, out: &Path, ov: &MeshOverrides) -> Result<PathBuf, CliError> {
    let mut cfg = match config {
        Some(p) => read_json::<MeshConfig>(p)?,
        None => MeshConfig::default(),
    };
    cfg.target = ov.target.unwrap_or(cfg.target);
    cfg.format = ov.format.unwrap_or(cfg.format);
    cfg.n_r = ov.n_r.unwrap_or(cfg.n_r);
    cfg.n_theta = ov.n_theta.unwrap_or(cfg.n_theta);
    cfg.radius = ov.radius.unwrap_or(cfg.radius);
    cfg.translate_z3 = ov.translate_z3.unwrap_or(cfg.translate_z3);
    let tr = |e: TransformError| CliError::from_err(EXIT_INPUT, &e);
    let mesh = match read_surface(input)? {
        Surface::Curve(f) => {
            let grid = PolarGrid::new(cfg.n_r, cfg.n_theta, cfg.radius).map_err(tr)?;
            curve_mesh(&f, &grid, cfg.target, cfg.translate_z3).map_err(tr)?
        }
        Surface::Sl2(g) => {
            if cfg.target != Target::Bryant {
                return Err(CliError::input(
                    "UnsupportedTarget",
                    format!("{:?} needs a null curve in C^3; SL_2 grids only mesh as bryant", cfg.target),
                ));
            }
            sl2_mesh(&g).map_err(tr)?
        }
    };
    let name = match cfg.format {
        Format::Obj => "surface.obj",
        Format::Ply => "surface.ply",
    };
    write(out, name, &write_mesh(&mesh, cfg.format))?;
    Ok(out.join(name))
}

/// Writes `sl2.json`, the grid of `T o (F + (0, 0, translate_z3))`.
pub fn cmd_sl2(input: &Path, out: &Path, grid: PolarGrid, translate_z3: f64) -> Result<PathBuf, CliError> {
    let f: NullCurve = read_json(input)?;
    let tr = |e: TransformError| CliError::from_err(EXIT_INPUT, &e);
    let f = if translate_z3 != 0.0 {
        let mut base = f.base();
        base[2] += translate_z3;
        NullCurve::integrate(base, f.phi().clone()).map_err(|e| CliError::from_err(EXIT_INPUT, &e))?
    } else {
        f
    };
    let g = to_sl2(&f, &grid).map_err(tr)?;
    write(out, "sl2.json", &to_json(&g))?;
    Ok(out.join("sl2.json"))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, pass: value < threshold }
    }

    fn above(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, pass: value > threshold }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub kind: String,
    pub checks: Vec<Check>,
    pub pass: bool,
}

const CHECK_GRID: (usize, usize) = (64, 256);

fn check_curve(d: &CurveData) -> Result<Vec<Check>, CliError> {
    let phi = &d.phi;
    let holo = |e: nullcurve::null::NullError| CliError::from_err(EXIT_INPUT, &e);
    let domain = phi[0].domain();
    let mut checks = Vec::new();
    let same = phi.iter().all(|p| p.domain() == domain);
    checks.push(Check { name: "same_domain".into(), value: same as u8 as f64, threshold: 1.0, pass: same });
    if !same {
        return Ok(checks);
    }
    checks.push(Check::below("null_residual", null_residual_of(phi).map_err(holo)?, NULL_TOL));
    let (lo, hi) = phi_extrema(phi);
    let ratio = if hi == 0.0 { 0.0 } else { lo / hi };
    checks.push(Check::above("immersion_ratio", ratio, nullcurve::holo::TOL_ZERO));
    if domain != Domain::Disc {
        let res = phi.iter().map(|p: &LaurentPoly| p.coeff(-1).norm()).fold(0.0, f64::max);
        checks.push(Check::below("max_residue", res, nullcurve::holo::RESIDUE_TOL));
    }
    if ratio > 0.0 {
        let inner = match domain {
            Domain::Disc => 0.0,
            Domain::Annulus { inner } => inner,
        };
        let mut worst: f64 = 0.0;
        for i in 0..=CHECK_GRID.0 {
            let rho = inner + (1.0 - inner) * i as f64 / CHECK_GRID.0 as f64;
            if rho == 0.0 {
                continue;
            }
            let vals: Vec<Vec<nullcurve::C64>> = phi.iter().map(|p| p.ring_values(rho, CHECK_GRID.1)).collect();
            for j in 0..CHECK_GRID.1 {
                let z = [vals[0][j], vals[1][j], vals[2][j]];
                worst = worst.max(real_part_doubling_residual(&z));
            }
        }
        checks.push(Check::below("real_part_doubling", worst, 1e-10));
    }
    Ok(checks)
}

fn check_sl2(g: &Sl2Curve) -> Vec<Check> {
    vec![
        Check::below("det_residual", g.max_det_residual(), 1e-10),
        Check::below("directed_residual", g.max_directed_residual(), 1e-8),
    ]
}

/// Runs the invariant suite; `Err` with exit code 4 carries the report
/// when a check fails.
pub fn cmd_check(input: &Path) -> Result<CheckReport, (CheckReport, CliError)> {
    let fail = |e: CliError| {
        (CheckReport { kind: "unknown".into(), checks: vec![], pass: false }, e)
    };
    let text = fs::read_to_string(input)
        .map_err(|e| fail(CliError::input("Io", format!("{}: {e}", input.display()))))?;
    let report = if let Ok(g) = serde_json::from_str::<Sl2Curve>(&text) {
        let checks = check_sl2(&g);
        CheckReport { kind: "sl2".into(), pass: checks.iter().all(|c| c.pass), checks }
    } else {
        let d: CurveData = serde_json::from_str(&text)
            .map_err(|e| fail(CliError::input("InvalidInput", format!("{}: {e}", input.display()))))?;
        let checks = check_curve(&d).map_err(fail)?;
        CheckReport { kind: "null_curve".into(), pass: checks.iter().all(|c| c.pass), checks }
    };
    if report.pass {
        Ok(report)
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        let err = CliError { code: EXIT_CHECK, error: "CheckFailed".into(), message: failed.join(", ") };
        Err((report, err))
    }
}
