//! Truncated Laurent series on the closed unit disc or a closed annulus.
//!
//! Everything downstream (null curves, deformations, quadric maps) is built
//! from [`LaurentPoly`]. Evaluation on circles goes through FFTs, so a
//! polynomial of span `s` costs `O(s log s)` per ring.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fft;

pub type C64 = Complex64;

/// Hard cap on the number of stored coefficients of a single series.
pub const MAX_COEFFS: usize = 1 << 17;

/// Relative threshold below which a sampled modulus counts as a zero.
pub const TOL_ZERO: f64 = 1e-9;

/// Residues at or below this size are treated as exact zeros.
pub const RESIDUE_TOL: f64 = 1e-12;

/// Product sizes below this are convolved directly.
const DIRECT_MUL_LIMIT: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HoloError {
    #[error("point {0} lies outside the domain")]
    OutOfDomain(C64),
    #[error("grid of {got} points cannot resolve span {span} (need at least {needed})")]
    GridTooCoarse { span: usize, needed: usize, got: usize },
    #[error("non-zero residue {0}")]
    NonzeroResidue(C64),
    #[error("operands live on different domains")]
    DomainMismatch,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("function vanishes on the closed domain")]
    ZeroOnDomain,
    #[error("series needs {len} coefficients, cap is {cap}")]
    TruncationOverflow { len: usize, cap: usize },
    #[error("negative exponent {0} on the disc")]
    PoleOnDisc(i64),
    #[error("operation requires the disc domain")]
    RequiresDisc,
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Where a series lives: the closed unit disc, or `r <= |z| <= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr", into = "DomainRepr")]
pub enum Domain {
    Disc,
    Annulus { inner: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DomainRepr {
    Tag(String),
    Annulus { annulus: f64 },
}

impl TryFrom<DomainRepr> for Domain {
    type Error = String;
    fn try_from(r: DomainRepr) -> Result<Self, String> {
        match r {
            DomainRepr::Tag(s) if s == "disc" => Ok(Domain::Disc),
            DomainRepr::Tag(s) => Err(format!("unknown domain tag {s:?}")),
            DomainRepr::Annulus { annulus } => {
                let d = Domain::Annulus { inner: annulus };
                d.validate().map_err(|e| e.to_string())?;
                Ok(d)
            }
        }
    }
}

impl From<Domain> for DomainRepr {
    fn from(d: Domain) -> Self {
        match d {
            Domain::Disc => DomainRepr::Tag("disc".into()),
            Domain::Annulus { inner } => DomainRepr::Annulus { annulus: inner },
        }
    }
}

impl Domain {
    pub fn validate(&self) -> Result<(), HoloError> {
        match *self {
            Domain::Disc => Ok(()),
            Domain::Annulus { inner } if inner > 0.0 && inner < 1.0 => Ok(()),
            Domain::Annulus { inner } => Err(HoloError::Invalid(format!(
                "annulus inner radius {inner} not in (0,1)"
            ))),
        }
    }

    pub fn contains(&self, z: C64) -> bool {
        let r = z.norm();
        match *self {
            Domain::Disc => r <= 1.0 + 1e-12,
            Domain::Annulus { inner } => r <= 1.0 + 1e-12 && r >= inner - 1e-12,
        }
    }

    /// Smallest radius of the domain.
    pub fn inner_radius(&self) -> f64 {
        match *self {
            Domain::Disc => 0.0,
            Domain::Annulus { inner } => inner,
        }
    }
}

/// How boundary samples are turned into a trigonometric polynomial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Cesàro mean of the truncated Fourier series; non-negative data stays
    /// non-negative.
    Fejer,
    /// Plain truncation of the discrete Fourier series.
    LeastSquares,
}

/// `sum_{k=k_min}^{k_max} c_k z^k` on a [`Domain`].
///
/// The stored form is canonical: the first and last coefficients are
/// non-zero, and the zero series has no coefficients and `k_min == 0`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyRepr", into = "PolyRepr")]
pub struct LaurentPoly {
    k_min: i64,
    coeffs: Vec<C64>,
    domain: Domain,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyRepr {
    k_min: i64,
    re: Vec<f64>,
    im: Vec<f64>,
    domain: Domain,
}

impl TryFrom<PolyRepr> for LaurentPoly {
    type Error = String;
    fn try_from(r: PolyRepr) -> Result<Self, String> {
        if r.re.len() != r.im.len() {
            return Err(format!(
                "re has {} entries but im has {}",
                r.re.len(),
                r.im.len()
            ));
        }
        let coeffs = r.re.iter().zip(&r.im).map(|(&a, &b)| C64::new(a, b)).collect();
        LaurentPoly::new(r.k_min, coeffs, r.domain).map_err(|e| e.to_string())
    }
}

impl From<LaurentPoly> for PolyRepr {
    fn from(p: LaurentPoly) -> Self {
        PolyRepr {
            k_min: p.k_min,
            re: p.coeffs.iter().map(|c| c.re).collect(),
            im: p.coeffs.iter().map(|c| c.im).collect(),
            domain: p.domain,
        }
    }
}

impl fmt::Debug for LaurentPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LaurentPoly[{:?}; ", self.domain)?;
        for (i, c) in self.coeffs.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({})z^{}", c, self.k_min + i as i64)?;
        }
        write!(f, "]")
    }
}

pub(crate) fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Points `rho * e^{2 pi i j / n}`.
pub fn circle_points(rho: f64, n: usize) -> Vec<C64> {
    (0..n)
        .map(|j| C64::from_polar(rho, 2.0 * PI * j as f64 / n as f64))
        .collect()
}

impl LaurentPoly {
    pub fn new(k_min: i64, coeffs: Vec<C64>, domain: Domain) -> Result<Self, HoloError> {
        domain.validate()?;
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(HoloError::Invalid("non-finite coefficient".into()));
        }
        let mut p = LaurentPoly { k_min, coeffs, domain };
        p.canonicalize();
        if p.coeffs.len() > MAX_COEFFS {
            return Err(HoloError::TruncationOverflow { len: p.coeffs.len(), cap: MAX_COEFFS });
        }
        if domain == Domain::Disc && !p.coeffs.is_empty() && p.k_min < 0 {
            return Err(HoloError::PoleOnDisc(p.k_min));
        }
        Ok(p)
    }

    pub fn zero(domain: Domain) -> Self {
        LaurentPoly { k_min: 0, coeffs: Vec::new(), domain }
    }

    pub fn constant(c: C64, domain: Domain) -> Self {
        Self::monomial(0, c, domain)
    }

    /// `c z^k`. Panics on a negative exponent on the disc.
    pub fn monomial(k: i64, c: C64, domain: Domain) -> Self {
        assert!(domain != Domain::Disc || k >= 0 || c == C64::new(0.0, 0.0));
        let mut p = LaurentPoly { k_min: k, coeffs: vec![c], domain };
        p.canonicalize();
        p
    }

    /// Builds a series from `(exponent, coefficient)` pairs.
    pub fn from_terms(terms: &[(i64, C64)], domain: Domain) -> Result<Self, HoloError> {
        if terms.is_empty() {
            return Ok(Self::zero(domain));
        }
        let lo = terms.iter().map(|t| t.0).min().unwrap();
        let hi = terms.iter().map(|t| t.0).max().unwrap();
        let len = (hi - lo + 1) as usize;
        if len > MAX_COEFFS {
            return Err(HoloError::TruncationOverflow { len, cap: MAX_COEFFS });
        }
        let mut c = vec![C64::new(0.0, 0.0); len];
        for &(k, v) in terms {
            c[(k - lo) as usize] += v;
        }
        Self::new(lo, c, domain)
    }

    fn canonicalize(&mut self) {
        let zero = C64::new(0.0, 0.0);
        let end = self.coeffs.iter().rposition(|&c| c != zero).map_or(0, |i| i + 1);
        self.coeffs.truncate(end);
        let start = self.coeffs.iter().position(|&c| c != zero).unwrap_or(0);
        if start > 0 {
            self.coeffs.drain(..start);
            self.k_min += start as i64;
        }
        if self.coeffs.is_empty() {
            self.k_min = 0;
        }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn k_min(&self) -> i64 {
        self.k_min
    }

    pub fn k_max(&self) -> i64 {
        self.k_min + self.coeffs.len() as i64 - 1
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `k_max - k_min`, zero for the zero series.
    pub fn span(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn coeff(&self, k: i64) -> C64 {
        if self.coeffs.is_empty() || k < self.k_min || k > self.k_max() {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[(k - self.k_min) as usize]
        }
    }

    /// Largest coefficient modulus.
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Same coefficients on a different domain.
    pub fn with_domain(&self, domain: Domain) -> Result<Self, HoloError> {
        Self::new(self.k_min, self.coeffs.clone(), domain)
    }

    pub fn eval(&self, z: C64) -> Result<C64, HoloError> {
        if !self.domain.contains(z) {
            return Err(HoloError::OutOfDomain(z));
        }
        Ok(self.eval_unchecked(z))
    }

    /// Horner evaluation without the domain test.
    pub fn eval_unchecked(&self, z: C64) -> C64 {
        if self.coeffs.is_empty() {
            return C64::new(0.0, 0.0);
        }
        let mut acc = C64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        if self.k_min == 0 {
            acc
        } else {
            acc * z.powi(self.k_min as i32)
        }
    }

    /// Values at the `n`-th roots of unity, checked against aliasing.
    pub fn boundary_samples(&self, n: usize) -> Result<Vec<C64>, HoloError> {
        let needed = 2 * self.span() + 2;
        if n < needed {
            return Err(HoloError::GridTooCoarse { span: self.span(), needed, got: n });
        }
        Ok(self.ring_values(1.0, n))
    }

    /// Values at `rho e^{2 pi i j/n}` for `j = 0..n`, exact for any span.
    pub fn ring_values(&self, rho: f64, n: usize) -> Vec<C64> {
        let zero = C64::new(0.0, 0.0);
        if self.coeffs.is_empty() {
            return vec![zero; n];
        }
        let len = self.coeffs.len();
        if len * n <= 16384 {
            return circle_points(rho, n).into_iter().map(|z| self.eval_unchecked(z)).collect();
        }
        let mult = len.div_ceil(n);
        let l = n * mult;
        let mut buf = vec![zero; l];
        for (i, &c) in self.coeffs.iter().enumerate() {
            let k = self.k_min + i as i64;
            let scale = if rho == 1.0 { 1.0 } else { rho.powi(k as i32) };
            buf[k.rem_euclid(l as i64) as usize] += c * scale;
        }
        fft::inverse(&mut buf);
        (0..n).map(|j| buf[j * mult]).collect()
    }

    /// Maximum modulus over the circle of radius `rho`, sampled at `n` points.
    pub fn sup_on_circle(&self, rho: f64, n: usize) -> f64 {
        self.ring_values(rho, n).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn derivative(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| c * (self.k_min + i as i64) as f64)
            .collect();
        let mut p = LaurentPoly { k_min: self.k_min - 1, coeffs, domain: self.domain };
        p.canonicalize();
        p
    }

    /// Primitive whose value is `constant` at the anchor point: `z = 0` on
    /// the disc, `z = 1` on an annulus. Residues at most [`RESIDUE_TOL`] are
    /// dropped.
    pub fn antiderivative(&self, constant: C64) -> Result<Self, HoloError> {
        let res = self.coeff(-1);
        if res.norm() > RESIDUE_TOL {
            return Err(HoloError::NonzeroResidue(res));
        }
        let mut terms: Vec<(i64, C64)> = Vec::with_capacity(self.coeffs.len() + 1);
        for (i, &c) in self.coeffs.iter().enumerate() {
            let k = self.k_min + i as i64;
            if k != -1 {
                terms.push((k + 1, c / (k + 1) as f64));
            }
        }
        let anchor = match self.domain {
            Domain::Disc => constant,
            Domain::Annulus { .. } => constant - terms.iter().map(|t| t.1).sum::<C64>(),
        };
        terms.push((0, anchor));
        Self::from_terms(&terms, self.domain)
    }

    fn check_domain(&self, other: &Self) -> Result<(), HoloError> {
        if self.domain != other.domain {
            Err(HoloError::DomainMismatch)
        } else {
            Ok(())
        }
    }

    fn combine(&self, other: &Self, sign: f64) -> Result<Self, HoloError> {
        self.check_domain(other)?;
        if other.is_zero() {
            return Ok(self.clone());
        }
        if self.is_zero() {
            return Ok(other.scale(C64::new(sign, 0.0)));
        }
        let lo = self.k_min.min(other.k_min);
        let hi = self.k_max().max(other.k_max());
        let mut c = vec![C64::new(0.0, 0.0); (hi - lo + 1) as usize];
        for (i, &v) in self.coeffs.iter().enumerate() {
            c[(self.k_min - lo) as usize + i] += v;
        }
        for (i, &v) in other.coeffs.iter().enumerate() {
            c[(other.k_min - lo) as usize + i] += v * sign;
        }
        Self::new(lo, c, self.domain)
    }

    pub fn add(&self, other: &Self) -> Result<Self, HoloError> {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, HoloError> {
        self.combine(other, -1.0)
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut p = LaurentPoly {
            k_min: self.k_min,
            coeffs: self.coeffs.iter().map(|&c| c * s).collect(),
            domain: self.domain,
        };
        p.canonicalize();
        p
    }

    /// Multiplication by `z^k`.
    pub fn shift(&self, k: i64) -> Result<Self, HoloError> {
        Self::new(self.k_min + k, self.coeffs.clone(), self.domain)
    }

    pub fn mul(&self, other: &Self) -> Result<Self, HoloError> {
        self.check_domain(other)?;
        if self.is_zero() || other.is_zero() {
            return Ok(Self::zero(self.domain));
        }
        let (a, b) = (&self.coeffs, &other.coeffs);
        let len = a.len() + b.len() - 1;
        if len > MAX_COEFFS {
            return Err(HoloError::TruncationOverflow { len, cap: MAX_COEFFS });
        }
        let zero = C64::new(0.0, 0.0);
        let c = if a.len().min(b.len()) <= 8 || a.len() * b.len() <= DIRECT_MUL_LIMIT {
            let mut c = vec![zero; len];
            for (i, &x) in a.iter().enumerate() {
                for (j, &y) in b.iter().enumerate() {
                    c[i + j] += x * y;
                }
            }
            c
        } else {
            let n = next_pow2(len);
            let mut fa = vec![zero; n];
            let mut fb = vec![zero; n];
            fa[..a.len()].copy_from_slice(a);
            fb[..b.len()].copy_from_slice(b);
            fft::forward(&mut fa);
            fft::forward(&mut fb);
            for (x, y) in fa.iter_mut().zip(&fb) {
                *x *= y;
            }
            fft::inverse(&mut fa);
            let s = 1.0 / n as f64;
            fa.truncate(len);
            fa.iter_mut().for_each(|x| *x *= s);
            fa
        };
        Self::new(self.k_min + other.k_min, c, self.domain)
    }

    /// Drops coefficients below `rel * coeff_norm()` from both ends.
    pub fn trim_relative(&self, rel: f64) -> Self {
        let tol = rel * self.coeff_norm();
        let end = self.coeffs.iter().rposition(|c| c.norm() > tol).map_or(0, |i| i + 1);
        let start = self.coeffs[..end].iter().position(|c| c.norm() > tol).unwrap_or(0);
        let mut p = LaurentPoly {
            k_min: self.k_min + start as i64,
            coeffs: self.coeffs[start..end].to_vec(),
            domain: self.domain,
        };
        p.canonicalize();
        p
    }
}

/// Fits `sum_{|k|<=K} c_k z^k` to samples at the roots of unity.
pub fn fit_boundary(
    samples: &[C64],
    degree: usize,
    mode: FitMode,
    domain: Domain,
) -> Result<LaurentPoly, HoloError> {
    let l = samples.len();
    let needed = 4 * degree + 4;
    if l < needed {
        return Err(HoloError::TooFewSamples { needed, got: l });
    }
    let mut buf = samples.to_vec();
    fft::forward(&mut buf);
    let kk = degree as i64;
    let mut c: Vec<C64> = (-kk..=kk)
        .map(|k| {
            let w = match mode {
                FitMode::Fejer => 1.0 - k.unsigned_abs() as f64 / (degree as f64 + 1.0),
                FitMode::LeastSquares => 1.0,
            };
            buf[k.rem_euclid(l as i64) as usize] * (w / l as f64)
        })
        .collect();
    let top = c.iter().map(|x| x.norm()).fold(0.0, f64::max);
    for x in c.iter_mut() {
        if x.norm() <= 1e-14 * top {
            *x = C64::new(0.0, 0.0);
        }
    }
    LaurentPoly::new(-kk, c, domain)
}

/// Winding number of a closed sampled curve around the origin.
pub fn winding_number(values: &[C64]) -> i64 {
    let n = values.len();
    let mut total = 0.0;
    for j in 0..n {
        total += (values[(j + 1) % n] / values[j]).arg();
    }
    (total / (2.0 * PI)).round() as i64
}

/// Returns an error unless `p` is zero-free on the closed disc.
fn check_zero_free(p: &LaurentPoly) -> Result<(), HoloError> {
    if p.domain != Domain::Disc {
        return Err(HoloError::RequiresDisc);
    }
    if p.is_zero() {
        return Err(HoloError::ZeroOnDomain);
    }
    let n = next_pow2(8 * (p.span() + 1)).max(4096);
    let vals = p.ring_values(1.0, n);
    let top = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let low = vals.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    if low <= TOL_ZERO * top || winding_number(&vals) != 0 {
        return Err(HoloError::ZeroOnDomain);
    }
    Ok(())
}

/// `exp(alpha log p)` for a zero-free polynomial on the disc, principal
/// branch at the origin. Works on a boundary grid that doubles until the
/// Fourier tail is negligible.
fn holo_power(p: &LaurentPoly, alpha: f64) -> Result<LaurentPoly, HoloError> {
    check_zero_free(p)?;
    let zero = C64::new(0.0, 0.0);
    let dp = p.derivative();
    let log0 = p.coeff(0).ln();
    let mut l = next_pow2(4 * (p.span() + 1)).max(256);
    while l <= 2 * MAX_COEFFS {
        let pv = p.ring_values(1.0, l);
        let dv = dp.ring_values(1.0, l);
        let mut r: Vec<C64> = pv.iter().zip(&dv).map(|(a, b)| b / a).collect();
        fft::forward(&mut r);
        let inv_l = 1.0 / l as f64;
        let residue = r[l - 1] * inv_l;
        if residue.norm() > 1e-6 {
            return Err(HoloError::ZeroOnDomain);
        }
        let half = l / 2;
        let mut lg = vec![zero; l];
        lg[0] = log0;
        for k in 0..half - 1 {
            lg[k + 1] = r[k] * inv_l / (k + 1) as f64;
        }
        fft::inverse(&mut lg);
        let mut q: Vec<C64> = lg.iter().map(|&v| (v * alpha).exp()).collect();
        fft::forward(&mut q);
        q.iter_mut().for_each(|x| *x *= inv_l);
        let top = q[..half].iter().map(|x| x.norm()).fold(0.0, f64::max);
        let tail = q[l / 4..]
            .iter()
            .map(|x| x.norm())
            .fold(0.0, f64::max);
        if tail <= 1e-15 * top {
            q.truncate(l / 4);
            let out = LaurentPoly::new(0, q, Domain::Disc)?;
            return Ok(out.trim_tail(1e-17));
        }
        l *= 2;
    }
    Err(HoloError::TruncationOverflow { len: l / 2, cap: MAX_COEFFS })
}

impl LaurentPoly {
    /// Drops trailing high-order coefficients below `rel * coeff_norm()`.
    fn trim_tail(&self, rel: f64) -> Self {
        let tol = rel * self.coeff_norm();
        let end = self.coeffs.iter().rposition(|c| c.norm() > tol).map_or(0, |i| i + 1);
        let mut p = LaurentPoly {
            k_min: self.k_min,
            coeffs: self.coeffs[..end].to_vec(),
            domain: self.domain,
        };
        p.canonicalize();
        p
    }
}

/// Holomorphic square root with `q(0)` the principal root of `p(0)`.
pub fn sqrt_holo(p: &LaurentPoly) -> Result<LaurentPoly, HoloError> {
    let q = holo_power(p, 0.5)?;
    let err = q.mul(&q)?.sub(p)?.coeff_norm();
    if err > 1e-10 * p.coeff_norm() {
        return Err(HoloError::TruncationOverflow { len: q.coeffs.len(), cap: MAX_COEFFS });
    }
    Ok(q)
}

/// Reciprocal of [`sqrt_holo`].
pub fn inv_sqrt_holo(p: &LaurentPoly) -> Result<LaurentPoly, HoloError> {
    let q = holo_power(p, -0.5)?;
    let one = LaurentPoly::constant(C64::new(1.0, 0.0), Domain::Disc);
    let err = q.mul(&q)?.mul(p)?.sub(&one)?.coeff_norm();
    if err > 1e-10 {
        return Err(HoloError::TruncationOverflow { len: q.coeffs.len(), cap: MAX_COEFFS });
    }
    Ok(q)
}
