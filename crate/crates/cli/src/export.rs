//! ASCII mesh writers.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use nullcurve::null::NullCurve;
use nullcurve::transforms::{bryant_project, poincare_ball, t_map, PolarGrid, Sl2Curve, TransformError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// `Re F` in `R^3`.
    Real,
    /// `Im F` in `R^3`.
    Imag,
    /// Bryant projection in the Poincare ball.
    Bryant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Obj,
    Ply,
}

/// Vertices and counterclockwise triangles sharing one buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

/// `%.9g`.
pub fn fmt_g9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.8e}", x);
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-5..9).contains(&exp) {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        let digits = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", digits, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn curve_mesh(f: &NullCurve, grid: &PolarGrid, target: Target, translate_z3: f64) -> Result<Mesh, TransformError> {
    let pts = grid.points();
    let mut vertices = Vec::with_capacity(pts.len());
    for &p in &pts {
        let mut z = f.eval(p)?;
        match target {
            Target::Real => vertices.push([z[0].re, z[1].re, z[2].re]),
            Target::Imag => vertices.push([z[0].im, z[1].im, z[2].im]),
            Target::Bryant => {
                z[2] += translate_z3;
                if !(z[2].norm() > nullcurve::transforms::TOL_Z3) {
                    return Err(TransformError::ThirdCoordinateVanishes {
                        tol: nullcurve::transforms::TOL_Z3,
                        indices: vec![vertices.len()],
                    });
                }
                vertices.push(poincare_ball(&bryant_project(&t_map(&z))?));
            }
        }
    }
    Ok(Mesh { vertices, triangles: grid.triangles() })
}

pub fn sl2_mesh(g: &Sl2Curve) -> Result<Mesh, TransformError> {
    let vertices = g
        .g
        .iter()
        .map(|a| bryant_project(a).map(|x| poincare_ball(&x)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Mesh { vertices, triangles: g.grid.triangles() })
}

pub fn write_obj(m: &Mesh) -> String {
    let mut s = String::new();
    for v in &m.vertices {
        let _ = writeln!(s, "v {} {} {}", fmt_g9(v[0]), fmt_g9(v[1]), fmt_g9(v[2]));
    }
    for t in &m.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

pub fn write_ply(m: &Mesh) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        m.vertices.len(),
        m.triangles.len()
    );
    for v in &m.vertices {
        let _ = writeln!(s, "{} {} {}", fmt_g9(v[0]), fmt_g9(v[1]), fmt_g9(v[2]));
    }
    for t in &m.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

pub fn write_mesh(m: &Mesh, format: Format) -> String {
    match format {
        Format::Obj => write_obj(m),
        Format::Ply => write_ply(m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g9_matches_printf() {
        let cases = [
            (1.0, "1"),
            (-0.5, "-0.5"),
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333333"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (1.5e-7, "1.5e-07"),
            (0.0001, "0.0001"),
            (2.0f64.sqrt(), "1.41421356"),
            (-0.0, "0"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g9(x), want, "{x}");
        }
    }
}
