//! Möbius transformations acting on the Riemann sphere and, by Poincaré
//! extension, on upper half-space.
//!
//! Conventions:
//! - `H^3` is the upper half-space `{(x, y, h) : h > 0}` with boundary the
//!   Riemann sphere; `H^2` is the upper half-plane, embedded as `y = 0`.
//! - A circle is the zero set of the Hermitian form
//!   `A|z|^2 + 2 Re(conj(B) z) + D`, which covers lines (`A = 0`) uniformly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Mul;
use thiserror::Error;

use crate::tolerance;

pub type Complex = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix has vanishing determinant")]
    Degenerate,
    #[error("map is not loxodromic (classified as {0})")]
    NotLoxodromic(Classification),
    #[error("identity map has no isolated fixed points")]
    IdentityMap,
    #[error("boundary circles intersect (inversive product {0})")]
    CirclesIntersect(f64),
    #[error("geodesics have no common interior point")]
    Disjoint,
    #[error("circle is degenerate (point or empty)")]
    DegenerateCircle,
    #[error("invalid point: {0}")]
    InvalidPoint(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Identity,
    Elliptic,
    Parabolic,
    Loxodromic,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Classification::Identity => "identity",
            Classification::Elliptic => "elliptic",
            Classification::Parabolic => "parabolic",
            Classification::Loxodromic => "loxodromic",
        };
        f.write_str(s)
    }
}

/// A point of the Riemann sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpherePoint {
    Finite(Complex),
    Infinity,
}

impl SpherePoint {
    pub fn finite(re: f64, im: f64) -> Self {
        SpherePoint::Finite(Complex::new(re, im))
    }

    pub fn as_finite(&self) -> Option<Complex> {
        match *self {
            SpherePoint::Finite(z) => Some(z),
            SpherePoint::Infinity => None,
        }
    }

    pub fn is_infinity(&self) -> bool {
        matches!(self, SpherePoint::Infinity)
    }

    /// Chordal distance on the unit sphere (diameter 2).
    pub fn chordal(&self, other: &SpherePoint) -> f64 {
        match (*self, *other) {
            (SpherePoint::Infinity, SpherePoint::Infinity) => 0.0,
            (SpherePoint::Finite(z), SpherePoint::Infinity)
            | (SpherePoint::Infinity, SpherePoint::Finite(z)) => 2.0 / (1.0 + z.norm_sqr()).sqrt(),
            (SpherePoint::Finite(z), SpherePoint::Finite(w)) => {
                2.0 * (z - w).norm() / ((1.0 + z.norm_sqr()) * (1.0 + w.norm_sqr())).sqrt()
            }
        }
    }

    pub fn approx_eq(&self, other: &SpherePoint, tol: f64) -> bool {
        self.chordal(other) <= tol
    }
}

impl From<Complex> for SpherePoint {
    fn from(z: Complex) -> Self {
        if z.re.is_finite() && z.im.is_finite() {
            SpherePoint::Finite(z)
        } else {
            SpherePoint::Infinity
        }
    }
}

/// An element of `PSL(2, C)` stored as a unimodular matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoebiusMap {
    pub a: Complex,
    pub b: Complex,
    pub c: Complex,
    pub d: Complex,
}

impl MoebiusMap {
    /// Normalizes `(a b; c d)` to determinant one.
    pub fn new(a: Complex, b: Complex, c: Complex, d: Complex) -> Result<Self, GeometryError> {
        let det = a * d - b * c;
        let scale =
            (a.norm_sqr() + b.norm_sqr() + c.norm_sqr() + d.norm_sqr()).max(f64::MIN_POSITIVE);
        if !(det.norm() > 1e-300 && det.norm() / scale > 1e-28) {
            return Err(GeometryError::Degenerate);
        }
        let s = det.sqrt();
        Ok(MoebiusMap {
            a: a / s,
            b: b / s,
            c: c / s,
            d: d / s,
        })
    }

    pub fn real(a: f64, b: f64, c: f64, d: f64) -> Result<Self, GeometryError> {
        Self::new(a.into(), b.into(), c.into(), d.into())
    }

    pub fn identity() -> Self {
        MoebiusMap {
            a: 1.0.into(),
            b: 0.0.into(),
            c: 0.0.into(),
            d: 1.0.into(),
        }
    }

    /// `z -> k z` for `k != 0`.
    pub fn scaling(k: Complex) -> Result<Self, GeometryError> {
        Self::new(k, 0.0.into(), 0.0.into(), 1.0.into())
    }

    pub fn translation(b: Complex) -> Self {
        MoebiusMap {
            a: 1.0.into(),
            b,
            c: 0.0.into(),
            d: 1.0.into(),
        }
    }

    /// The map sending `p -> 0` and `q -> infinity`.
    pub fn sending_to_zero_infinity(p: SpherePoint, q: SpherePoint) -> Result<Self, GeometryError> {
        let one = Complex::new(1.0, 0.0);
        let zero = Complex::new(0.0, 0.0);
        match (p, q) {
            (SpherePoint::Finite(p), SpherePoint::Finite(q)) => Self::new(one, -p, one, -q),
            (SpherePoint::Finite(p), SpherePoint::Infinity) => Self::new(one, -p, zero, one),
            (SpherePoint::Infinity, SpherePoint::Finite(q)) => Self::new(zero, one, one, -q),
            (SpherePoint::Infinity, SpherePoint::Infinity) => Err(GeometryError::Degenerate),
        }
    }

    /// Loxodromic map with the given repelling and attracting fixed points and
    /// complex multiplier `k` (`|k| > 1` translates toward `attracting`).
    pub fn with_fixed_points(
        repelling: SpherePoint,
        attracting: SpherePoint,
        k: Complex,
    ) -> Result<Self, GeometryError> {
        let s = Self::sending_to_zero_infinity(repelling, attracting)?;
        Ok(s.inverse() * Self::scaling(k)? * s)
    }

    pub fn determinant(&self) -> Complex {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> Complex {
        self.a + self.d
    }

    pub fn inverse(&self) -> Self {
        MoebiusMap {
            a: self.d,
            b: -self.b,
            c: -self.c,
            d: self.a,
        }
    }

    pub fn negate(&self) -> Self {
        MoebiusMap {
            a: -self.a,
            b: -self.b,
            c: -self.c,
            d: -self.d,
        }
    }

    pub fn entries(&self) -> [Complex; 4] {
        [self.a, self.b, self.c, self.d]
    }

    /// Largest entrywise distance to `other` modulo the sign quotient.
    pub fn distance_mod_sign(&self, other: &MoebiusMap) -> f64 {
        let diff = |s: f64| {
            self.entries()
                .iter()
                .zip(other.entries().iter())
                .map(|(x, y)| (x - y * s).norm())
                .fold(0.0, f64::max)
        };
        diff(1.0).min(diff(-1.0))
    }

    /// Re-imposes unit determinant after long products.
    pub fn renormalized(&self) -> Self {
        Self::new(self.a, self.b, self.c, self.d).unwrap_or(*self)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        // Up to sign, a real matrix has all entries on a common real line.
        self.entries().iter().all(|z| z.im.abs() <= tol)
            || self.entries().iter().all(|z| z.re.abs() <= tol)
    }

    pub fn classify(&self) -> Classification {
        if self.distance_mod_sign(&MoebiusMap::identity()) <= tolerance::algebraic() {
            return Classification::Identity;
        }
        let tr2 = self.trace() * self.trace();
        if (tr2 - 4.0).norm() <= tolerance::PARABOLIC {
            Classification::Parabolic
        } else if tr2.im.abs() <= tolerance::PARABOLIC && tr2.re >= 0.0 && tr2.re < 4.0 {
            Classification::Elliptic
        } else {
            Classification::Loxodromic
        }
    }

    /// Real translation distance along the axis: the real part of the complex
    /// length `2 arccosh(tr/2)`.
    pub fn translation_length(&self) -> Result<f64, GeometryError> {
        match self.classify() {
            Classification::Loxodromic => {
                let half = self.trace() / 2.0;
                Ok((2.0 * half.acosh()).re.abs())
            }
            other => Err(GeometryError::NotLoxodromic(other)),
        }
    }

    /// Modulus of the derivative at a fixed point (the multiplier).
    fn multiplier_at(&self, p: SpherePoint) -> f64 {
        match p {
            SpherePoint::Finite(z) => 1.0 / (self.c * z + self.d).norm_sqr(),
            // In the chart w = 1/z near infinity the multiplier is d/a when c = 0.
            SpherePoint::Infinity => (self.d / self.a).norm(),
        }
    }

    /// Fixed points ordered (repelling, attracting); a parabolic map returns
    /// its double fixed point twice.
    pub fn fixed_points(&self) -> Result<(SpherePoint, SpherePoint), GeometryError> {
        let class = self.classify();
        if class == Classification::Identity {
            return Err(GeometryError::IdentityMap);
        }
        let scale = self.entries().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let (p, q) = if self.c.norm() <= 1e-14 * scale {
            let amd = self.d - self.a;
            if amd.norm() <= 1e-14 * scale {
                (SpherePoint::Infinity, SpherePoint::Infinity)
            } else {
                (SpherePoint::Finite(self.b / amd), SpherePoint::Infinity)
            }
        } else {
            // c z^2 + (d - a) z - b = 0, solved without cancellation.
            let amd = self.a - self.d;
            let disc = ((self.a + self.d) * (self.a + self.d) - 4.0).sqrt();
            let sign = if (amd.conj() * disc).re >= 0.0 {
                1.0
            } else {
                -1.0
            };
            let big = amd + disc * sign;
            if class == Classification::Parabolic || big.norm() <= 1e-300 {
                let z = amd / (2.0 * self.c);
                (SpherePoint::Finite(z), SpherePoint::Finite(z))
            } else {
                let z1 = big / (2.0 * self.c);
                let z2 = -2.0 * self.b / big;
                (SpherePoint::Finite(z1), SpherePoint::Finite(z2))
            }
        };
        if class == Classification::Parabolic {
            return Ok((p, p));
        }
        if self.multiplier_at(p) >= self.multiplier_at(q) {
            Ok((p, q))
        } else {
            Ok((q, p))
        }
    }

    pub fn axis(&self) -> Result<GeodesicH3, GeometryError> {
        match self.classify() {
            Classification::Loxodromic => {
                let (r, a) = self.fixed_points()?;
                GeodesicH3::new(r, a)
            }
            other => Err(GeometryError::NotLoxodromic(other)),
        }
    }

    pub fn apply_complex(&self, z: Complex) -> SpherePoint {
        self.apply(SpherePoint::Finite(z))
    }

    /// Action on the Riemann sphere.
    pub fn apply(&self, p: SpherePoint) -> SpherePoint {
        match p {
            SpherePoint::Infinity => {
                if self.c.norm() == 0.0 {
                    SpherePoint::Infinity
                } else {
                    SpherePoint::Finite(self.a / self.c)
                }
            }
            SpherePoint::Finite(z) => {
                let den = self.c * z + self.d;
                if den.norm() == 0.0 {
                    SpherePoint::Infinity
                } else {
                    SpherePoint::Finite((self.a * z + self.b) / den)
                }
            }
        }
    }

    /// Complex derivative at a finite, non-polar point.
    pub fn derivative(&self, z: Complex) -> Complex {
        let den = self.c * z + self.d;
        1.0 / (den * den)
    }

    /// Congruence action `H -> (g^{-1})^* H g^{-1}` on Hermitian forms.
    pub fn apply_circle(&self, circle: &Circle) -> Circle {
        let inv = self.inverse();
        // Columns of g^{-1}: (d, -c) and (-b, a).
        let (m11, m12, m21, m22) = (inv.a, inv.b, inv.c, inv.d);
        let h11 = Complex::from(circle.a);
        let h12 = circle.b;
        let h21 = circle.b.conj();
        let h22 = Complex::from(circle.d);
        // H g^{-1}
        let t11 = h11 * m11 + h12 * m21;
        let t12 = h11 * m12 + h12 * m22;
        let t21 = h21 * m11 + h22 * m21;
        let t22 = h21 * m12 + h22 * m22;
        // (g^{-1})^* (H g^{-1})
        let n11 = m11.conj() * t11 + m21.conj() * t21;
        let n12 = m11.conj() * t12 + m21.conj() * t22;
        let n22 = m12.conj() * t12 + m22.conj() * t22;
        Circle {
            a: n11.re,
            b: n12,
            d: n22.re,
        }
    }

    /// Poincaré extension to upper half-space, computed by factoring the map
    /// into translations, a similarity and the inversion `z -> 1/z`.
    /// Poincaré extension; stable for nearly affine maps.
    pub fn apply_h3(&self, p: &H3Point) -> H3Point {
        let z = p.z();
        let den_z = self.c * z + self.d;
        let h2 = p.h * p.h;
        let den = den_z.norm_sqr() + self.c.norm_sqr() * h2;
        let w = ((self.a * z + self.b) * den_z.conj() + self.a * self.c.conj() * h2) / den;
        H3Point::from_complex(w, p.h / den)
    }

    pub fn apply_h2(&self, p: &H2Point) -> H3Point {
        self.apply_h3(&p.to_h3())
    }
}

impl Mul for MoebiusMap {
    type Output = MoebiusMap;

    fn mul(self, rhs: MoebiusMap) -> MoebiusMap {
        MoebiusMap {
            a: self.a * rhs.a + self.b * rhs.c,
            b: self.a * rhs.b + self.b * rhs.d,
            c: self.c * rhs.a + self.d * rhs.c,
            d: self.c * rhs.b + self.d * rhs.d,
        }
    }
}

impl Serialize for MoebiusMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let arr: Vec<[f64; 2]> = self.entries().iter().map(|z| [z.re, z.im]).collect();
        arr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MoebiusMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let arr: Vec<[f64; 2]> = Vec::deserialize(d)?;
        if arr.len() != 4 {
            return Err(serde::de::Error::invalid_length(
                arr.len(),
                &"four [re, im] entries",
            ));
        }
        let e: Vec<Complex> = arr.iter().map(|p| Complex::new(p[0], p[1])).collect();
        MoebiusMap::new(e[0], e[1], e[2], e[3]).map_err(serde::de::Error::custom)
    }
}

/// A round circle or line on the sphere, `A|z|^2 + 2 Re(conj(B) z) + D = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub a: f64,
    pub b: Complex,
    pub d: f64,
}

impl Circle {
    pub fn new(a: f64, b: Complex, d: f64) -> Result<Self, GeometryError> {
        let c = Circle { a, b, d };
        if c.discriminant() > 0.0 && c.discriminant().is_finite() {
            Ok(c)
        } else {
            Err(GeometryError::DegenerateCircle)
        }
    }

    pub fn from_center_radius(center: Complex, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) {
            return Err(GeometryError::DegenerateCircle);
        }
        Circle::new(1.0, -center, center.norm_sqr() - radius * radius)
    }

    /// The line through `p` with direction `dir`.
    pub fn line(p: Complex, dir: Complex) -> Result<Self, GeometryError> {
        if dir.norm() == 0.0 {
            return Err(GeometryError::DegenerateCircle);
        }
        let normal = dir * Complex::i();
        // 2 Re(conj(B) z) + D = 0 with B = normal / 2
        let b = normal / (2.0 * normal.norm());
        Circle::new(0.0, b, -2.0 * (b.conj() * p).re)
    }

    /// `|B|^2 - AD`; positive for real circles.
    pub fn discriminant(&self) -> f64 {
        self.b.norm_sqr() - self.a * self.d
    }

    pub fn is_line(&self) -> bool {
        self.a.abs() <= 1e-14 * self.b.norm()
    }

    /// Scaled to unit discriminant with a canonical sign.
    pub fn normalized(&self) -> Circle {
        let s = self.discriminant().sqrt();
        let mut c = Circle {
            a: self.a / s,
            b: self.b / s,
            d: self.d / s,
        };
        let lead = if c.a.abs() > 1e-14 {
            c.a
        } else if c.b.re.abs() > 1e-14 {
            c.b.re
        } else {
            c.b.im
        };
        if lead < 0.0 {
            c = Circle {
                a: -c.a,
                b: -c.b,
                d: -c.d,
            };
        }
        c
    }

    pub fn center_radius(&self) -> Option<(Complex, f64)> {
        if self.is_line() {
            None
        } else {
            Some((-self.b / self.a, self.discriminant().sqrt() / self.a.abs()))
        }
    }

    /// Value of the defining form at `z`, scaled to be a signed distance-like
    /// residual of order one.
    pub fn residual(&self, p: SpherePoint) -> f64 {
        let n = self.normalized();
        match p {
            SpherePoint::Infinity => n.a,
            SpherePoint::Finite(z) => {
                let v = n.a * z.norm_sqr() + 2.0 * (n.b.conj() * z).re + n.d;
                v / (1.0 + z.norm_sqr())
            }
        }
    }

    pub fn contains(&self, p: SpherePoint, tol: f64) -> bool {
        self.residual(p).abs() <= tol
    }

    /// `n` evenly spaced points (by angle for circles, by a bounded
    /// parametrization for lines).
    pub fn sample_points(&self, n: usize) -> Vec<SpherePoint> {
        match self.center_radius() {
            Some((c, r)) => (0..n)
                .map(|k| {
                    let th = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64);
                    SpherePoint::Finite(c + Complex::from_polar(r, th))
                })
                .collect(),
            None => {
                let bb = self.b.norm_sqr();
                let p0 = -self.b * self.d / (2.0 * bb);
                let dir = Complex::i() * self.b / self.b.norm();
                (0..n)
                    .map(|k| {
                        let th = std::f64::consts::PI * ((k as f64 + 0.5) / (n as f64) - 0.5);
                        SpherePoint::Finite(p0 + dir * th.tan())
                    })
                    .collect()
            }
        }
    }

    /// Inversive product; `|I| > 1` iff the circles are disjoint, in which case
    /// `arccosh |I|` is the distance between the planes they bound.
    pub fn inversive_product(&self, other: &Circle) -> f64 {
        let num = self.a * other.d + other.a * self.d - 2.0 * (self.b * other.b.conj()).re;
        num / (2.0 * (self.discriminant() * other.discriminant()).sqrt())
    }

    /// Coefficient distance after normalization, the adjacency test.
    /// [`coefficient_distance`](Self::coefficient_distance) divided by the
    /// larger normalized coefficient norm, floored at one.
    pub fn relative_coefficient_distance(&self, other: &Circle) -> f64 {
        let norm = |c: Circle| (c.a * c.a + c.b.norm_sqr() + c.d * c.d).sqrt();
        let scale = norm(self.normalized())
            .max(norm(other.normalized()))
            .max(1.0);
        self.coefficient_distance(other) / scale
    }

    pub fn coefficient_distance(&self, other: &Circle) -> f64 {
        let (p, q) = (self.normalized(), other.normalized());
        ((p.a - q.a).powi(2) + (p.b - q.b).norm_sqr() + (p.d - q.d).powi(2)).sqrt()
    }

    /// The two limit points of the coaxial pencil spanned by two disjoint
    /// circles: the endpoints of their common perpendicular geodesic.
    pub fn limit_points(
        &self,
        other: &Circle,
    ) -> Result<(SpherePoint, SpherePoint), GeometryError> {
        let (p, q) = (self.normalized(), other.normalized());
        let i = p.inversive_product(&q);
        if i.abs() <= 1.0 + tolerance::geometric() {
            return Err(GeometryError::CirclesIntersect(i));
        }
        // det(P + l Q) = 0  <=>  l^2 - 2 I l + 1 = 0 for unit-discriminant forms.
        let root = (i * i - 1.0).sqrt();
        let big = if i >= 0.0 { i + root } else { i - root };
        let ls = [big, 1.0 / big];
        let pts: Vec<SpherePoint> = ls
            .iter()
            .map(|&l| {
                let a = p.a + l * q.a;
                let b = p.b + q.b * l;
                let scale = b.norm().max(1.0);
                if a.abs() <= 1e-13 * scale {
                    SpherePoint::Infinity
                } else {
                    SpherePoint::Finite(-b / a)
                }
            })
            .collect();
        Ok((pts[0], pts[1]))
    }
}

/// A point in upper half-space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H3Point {
    pub x: f64,
    pub y: f64,
    pub h: f64,
}

impl H3Point {
    pub fn new(x: f64, y: f64, h: f64) -> Result<Self, GeometryError> {
        if h > 0.0 && x.is_finite() && y.is_finite() && h.is_finite() {
            Ok(H3Point { x, y, h })
        } else {
            Err(GeometryError::InvalidPoint(
                "height must be positive and finite",
            ))
        }
    }

    pub(crate) fn from_complex(z: Complex, h: f64) -> Self {
        H3Point {
            x: z.re,
            y: z.im,
            h,
        }
    }

    pub fn z(&self) -> Complex {
        Complex::new(self.x, self.y)
    }

    /// Coordinates on the hyperboloid `-X0^2 + X1^2 + X2^2 + X3^2 = -1`.
    pub fn to_hyperboloid(&self) -> [f64; 4] {
        let r2 = self.x * self.x + self.y * self.y + self.h * self.h;
        [
            (r2 + 1.0) / (2.0 * self.h),
            self.x / self.h,
            self.y / self.h,
            (r2 - 1.0) / (2.0 * self.h),
        ]
    }

    pub fn from_hyperboloid(v: [f64; 4]) -> Self {
        let h = 1.0 / (v[0] - v[3]);
        H3Point {
            x: v[1] * h,
            y: v[2] * h,
            h,
        }
    }
}

/// A point in the upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H2Point {
    pub x: f64,
    pub h: f64,
}

impl H2Point {
    pub fn new(x: f64, h: f64) -> Result<Self, GeometryError> {
        if h > 0.0 && x.is_finite() && h.is_finite() {
            Ok(H2Point { x, h })
        } else {
            Err(GeometryError::InvalidPoint(
                "height must be positive and finite",
            ))
        }
    }

    pub fn to_h3(&self) -> H3Point {
        H3Point {
            x: self.x,
            y: 0.0,
            h: self.h,
        }
    }
}

pub fn dist_h3(p: &H3Point, q: &H3Point) -> f64 {
    let dz2 = (p.x - q.x).powi(2) + (p.y - q.y).powi(2);
    let dh2 = (p.h - q.h).powi(2);
    2.0 * ((dz2 + dh2).sqrt() / (2.0 * (p.h * q.h).sqrt())).asinh()
}

pub fn dist_h2(p: &H2Point, q: &H2Point) -> f64 {
    dist_h3(&p.to_h3(), &q.to_h3())
}

fn minkowski(u: &[f64; 4], v: &[f64; 4]) -> f64 {
    -u[0] * v[0] + u[1] * v[1] + u[2] * v[2] + u[3] * v[3]
}

/// Point at fraction `s` along the geodesic segment from `p` to `q`.
pub fn geodesic_interpolate(p: &H3Point, q: &H3Point, s: f64) -> H3Point {
    let d = dist_h3(p, q);
    if d < 1e-15 {
        return *p;
    }
    let (u, v) = (p.to_hyperboloid(), q.to_hyperboloid());
    let (wa, wb) = (((1.0 - s) * d).sinh() / d.sinh(), (s * d).sinh() / d.sinh());
    let mut w = [0.0; 4];
    for k in 0..4 {
        w[k] = wa * u[k] + wb * v[k];
    }
    H3Point::from_hyperboloid(w)
}

/// Ideal endpoint reached from `p` by continuing the geodesic through `q`.
pub fn ray_endpoint(p: &H3Point, q: &H3Point) -> SpherePoint {
    let (u, v) = (p.to_hyperboloid(), q.to_hyperboloid());
    let c = -minkowski(&u, &v); // cosh d
    let sh = (c * c - 1.0).max(0.0).sqrt();
    let mut null = [0.0; 4];
    for k in 0..4 {
        // u + (v - c u)/sinh d is a future null vector.
        null[k] = u[k] + (v[k] - c * u[k]) / sh;
    }
    let den = null[0] - null[3];
    if den.abs() <= 1e-12 * null[0].abs() {
        SpherePoint::Infinity
    } else {
        SpherePoint::Finite(Complex::new(null[1] / den, null[2] / den))
    }
}

/// An oriented geodesic in `H^3`, given by its ideal endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicH3 {
    pub start: SpherePoint,
    pub end: SpherePoint,
}

impl GeodesicH3 {
    pub fn new(start: SpherePoint, end: SpherePoint) -> Result<Self, GeometryError> {
        if start.chordal(&end) <= tolerance::geometric() {
            return Err(GeometryError::Degenerate);
        }
        Ok(GeodesicH3 { start, end })
    }

    /// Geodesic of `H^2` with real (or infinite) endpoints.
    pub fn from_real_endpoints(a: Option<f64>, b: Option<f64>) -> Result<Self, GeometryError> {
        let f = |x: Option<f64>| x.map_or(SpherePoint::Infinity, |v| SpherePoint::finite(v, 0.0));
        GeodesicH3::new(f(a), f(b))
    }

    /// Map sending this geodesic to the vertical axis over 0, start -> 0.
    pub fn normalizer(&self) -> MoebiusMap {
        MoebiusMap::sending_to_zero_infinity(self.start, self.end)
            .expect("endpoints are distinct by construction")
    }

    pub fn through(p: &H3Point, q: &H3Point) -> Result<Self, GeometryError> {
        GeodesicH3::new(ray_endpoint(q, p), ray_endpoint(p, q))
    }
}

/// Angle in `[0, pi/2]` between two geodesics meeting at an interior point.
pub fn angle_between_geodesics(g1: &GeodesicH3, g2: &GeodesicH3) -> Result<f64, GeometryError> {
    let tol = tolerance::geometric();
    let n = g1.normalizer();
    let u = n.apply(g2.start);
    let v = n.apply(g2.end);
    let zero = SpherePoint::finite(0.0, 0.0);
    let on_axis = |p: &SpherePoint| {
        p.approx_eq(&zero, tol) || p.is_infinity() || p.approx_eq(&SpherePoint::Infinity, tol)
    };
    match (on_axis(&u), on_axis(&v)) {
        (true, true) => return Ok(0.0),
        (true, false) | (false, true) => return Err(GeometryError::Disjoint),
        _ => {}
    }
    let (u, v) = (u.as_finite().unwrap(), v.as_finite().unwrap());
    // The semicircle over [u, v] meets the vertical axis iff u/v is a negative real.
    let ratio = u / v;
    if ratio.re >= 0.0 || ratio.im.abs() > tol * ratio.norm().max(1.0) {
        return Err(GeometryError::Disjoint);
    }
    let (ru, rv) = (u.norm(), v.norm());
    let mid = (rv - ru) / 2.0;
    let radius = (ru + rv) / 2.0;
    Ok((mid.abs() / radius).clamp(0.0, 1.0).acos())
}

/// A totally geodesic plane in `H^3` bounded by a circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperbolicPlaneH3 {
    pub boundary: Circle,
}

impl HyperbolicPlaneH3 {
    pub fn new(boundary: Circle) -> Self {
        HyperbolicPlaneH3 { boundary }
    }

    /// Whether an interior point lies on the plane (hemisphere or vertical half-plane).
    pub fn contains(&self, p: &H3Point, tol: f64) -> bool {
        let n = self.boundary.normalized();
        let v = n.a * (p.z().norm_sqr() + p.h * p.h) + 2.0 * (n.b.conj() * p.z()).re + n.d;
        (v / (1.0 + p.z().norm_sqr() + p.h * p.h)).abs() <= tol
    }
}

/// Distance between the planes bounded by two disjoint circles, from the
/// inversive product.
pub fn plane_distance(
    p1: &HyperbolicPlaneH3,
    p2: &HyperbolicPlaneH3,
) -> Result<f64, GeometryError> {
    let i = p1.boundary.inversive_product(&p2.boundary);
    if i.abs() <= 1.0 + tolerance::geometric() {
        return Err(GeometryError::CirclesIntersect(i));
    }
    Ok(i.abs().acosh())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{E, PI, SQRT_2};

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    pub(crate) fn random_map(rng: &mut ChaCha8Rng) -> MoebiusMap {
        loop {
            let mut e = || c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            if let Ok(m) = MoebiusMap::new(e(), e(), e(), e()) {
                if m.classify() == Classification::Loxodromic {
                    return m;
                }
            }
        }
    }

    fn random_h3(rng: &mut ChaCha8Rng) -> H3Point {
        H3Point::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(0.2..3.0),
        )
        .unwrap()
    }

    #[test]
    fn classification_examples() {
        assert_eq!(MoebiusMap::identity().classify(), Classification::Identity);
        let lox = MoebiusMap::real(SQRT_2, 0.0, 0.0, 1.0 / SQRT_2).unwrap();
        assert_eq!(lox.classify(), Classification::Loxodromic);
        let par = MoebiusMap::real(1.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(par.classify(), Classification::Parabolic);
        let rot = MoebiusMap::real(
            (0.3f64).cos(),
            (0.3f64).sin(),
            -(0.3f64).sin(),
            (0.3f64).cos(),
        )
        .unwrap();
        assert_eq!(rot.classify(), Classification::Elliptic);
        assert_eq!(
            MoebiusMap::identity().negate().classify(),
            Classification::Identity
        );
    }

    #[test]
    fn translation_length_examples() {
        let g = MoebiusMap::real(SQRT_2, 0.0, 0.0, 1.0 / SQRT_2).unwrap();
        assert!((g.translation_length().unwrap() - 2f64.ln()).abs() < 1e-12);
        let g = MoebiusMap::real(E, 0.0, 0.0, 1.0 / E).unwrap();
        assert!((g.translation_length().unwrap() - 2.0).abs() < 1e-12);
        let p = MoebiusMap::real(1.0, 1.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            p.translation_length(),
            Err(GeometryError::NotLoxodromic(_))
        ));
    }

    #[test]
    fn translation_length_is_min_displacement_on_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let g = random_map(&mut rng);
            let axis = g.axis().unwrap();
            let n = axis.normalizer();
            let ninv = n.inverse();
            let ell = g.translation_length().unwrap();
            // Points on the axis: preimages of (0, 0, h).
            for h in [0.3, 1.0, 4.0] {
                let x = ninv.apply_h3(&H3Point::new(0.0, 0.0, h).unwrap());
                let moved = dist_h3(&x, &g.apply_h3(&x));
                assert!((moved - ell).abs() < 1e-6, "{moved} vs {ell}");
            }
            // Off-axis points move farther.
            let y = random_h3(&mut rng);
            assert!(dist_h3(&y, &g.apply_h3(&y)) >= ell - 1e-9);
        }
    }

    #[test]
    fn fixed_point_examples() {
        let g = MoebiusMap::real(SQRT_2, 0.0, 0.0, 1.0 / SQRT_2).unwrap();
        let (r, a) = g.fixed_points().unwrap();
        assert!(r.approx_eq(&SpherePoint::finite(0.0, 0.0), 1e-14));
        assert!(a.is_infinity());
        let axis = g.axis().unwrap();
        assert!(axis.start.approx_eq(&SpherePoint::finite(0.0, 0.0), 1e-14));

        let t = MoebiusMap::real(1.0, 1.0, 0.0, 1.0).unwrap();
        let (p, q) = t.fixed_points().unwrap();
        assert!(p.is_infinity() && q.is_infinity());
        assert!(t.axis().is_err());

        let h = MoebiusMap::real(2.0, 1.0, 1.0, 1.0).unwrap();
        let (p, q) = h.fixed_points().unwrap();
        for z in [p, q] {
            let gz = h.apply(z);
            assert!(gz.chordal(&z) < 1e-10);
        }
        // Quadratic-formula oracle: z^2 - z - 1 = 0.
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        let expect = [golden, 1.0 - golden];
        for z in [p, q] {
            let z = z.as_finite().unwrap();
            assert!(expect.iter().any(|e| (z - c(*e, 0.0)).norm() < 1e-12));
        }
        assert!(matches!(
            MoebiusMap::identity().fixed_points(),
            Err(GeometryError::IdentityMap)
        ));
    }

    #[test]
    fn fixed_points_ordered_repelling_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let g = random_map(&mut rng);
            if g.translation_length().unwrap() < 0.2 {
                continue;
            }
            let (r, a) = g.fixed_points().unwrap();
            // Iterating g moves a generic point toward the attracting one.
            let mut z = SpherePoint::finite(0.123, -0.456);
            for _ in 0..200 {
                z = g.apply(z);
            }
            assert!(z.chordal(&a) < 1e-6 || z.chordal(&r) > z.chordal(&a));
        }
    }

    #[test]
    fn distance_examples() {
        let p = H3Point::new(0.0, 0.0, 1.0).unwrap();
        let q = H3Point::new(0.0, 0.0, E).unwrap();
        assert!((dist_h3(&p, &q) - 1.0).abs() < 1e-15);
        assert_eq!(dist_h3(&p, &p), 0.0);
        let a = H2Point::new(0.0, 1.0).unwrap();
        let b = H2Point::new(1.0, 1.0).unwrap();
        // cosh d = 1 + 1/2
        assert!((dist_h2(&a, &b) - 1.5f64.acosh()).abs() < 1e-14);
    }

    #[test]
    fn distance_is_moebius_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let g = random_map(&mut rng);
            let (p, q) = (random_h3(&mut rng), random_h3(&mut rng));
            let d0 = dist_h3(&p, &q);
            let d1 = dist_h3(&g.apply_h3(&p), &g.apply_h3(&q));
            assert!((d0 - d1).abs() < 1e-9, "{d0} {d1}");
        }
    }

    /// Poincaré extension through the factorization into a translation,
    /// an inversion in the unit sphere, a similarity and a translation.
    fn factored_extension(g: &MoebiusMap, p: &H3Point) -> H3Point {
        if g.c.norm() == 0.0 {
            let k = g.a / g.d;
            return H3Point::from_complex(p.z() * k + g.b / g.d, p.h * k.norm());
        }
        let q = H3Point::from_complex(p.z() + g.d / g.c, p.h);
        let r2 = q.z().norm_sqr() + q.h * q.h;
        let inv = H3Point::from_complex(q.z().conj() / r2, q.h / r2);
        let k = -1.0 / (g.c * g.c);
        H3Point::from_complex(inv.z() * k + g.a / g.c, inv.h * k.norm())
    }

    #[test]
    fn poincare_extension_matches_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let g = random_map(&mut rng);
            let p = random_h3(&mut rng);
            let (u, v) = (g.apply_h3(&p), factored_extension(&g, &p));
            assert!(dist_h3(&u, &v) < 1e-9);
        }
    }

    #[test]
    fn apply_inverse_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let g = random_map(&mut rng);
            let p = random_h3(&mut rng);
            let back = g.inverse().apply_h3(&g.apply_h3(&p));
            assert!(dist_h3(&p, &back) < 1e-10);
            let z = SpherePoint::finite(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            assert!(g.apply(g.inverse().apply(z)).chordal(&z) < 1e-10);
            let circ = Circle::from_center_radius(c(0.2, 0.1), 0.7).unwrap();
            let back = g.inverse().apply_circle(&g.apply_circle(&circ));
            assert!(back.coefficient_distance(&circ) < 1e-10);
        }
    }

    #[test]
    fn circle_action_examples() {
        let unit = Circle::from_center_radius(c(0.0, 0.0), 1.0).unwrap();
        assert_eq!(MoebiusMap::identity().apply_circle(&unit), unit);
        let double = MoebiusMap::real(SQRT_2, 0.0, 0.0, 1.0 / SQRT_2).unwrap();
        let img = double.apply_circle(&unit);
        let (cen, r) = img.center_radius().unwrap();
        assert!(cen.norm() < 1e-15 && (r - 2.0).abs() < 1e-14);
    }

    /// Four points are concyclic iff their cross-ratio is real.
    fn cross_ratio_imag(z: [Complex; 4]) -> f64 {
        let cr = (z[0] - z[2]) * (z[1] - z[3]) / ((z[0] - z[3]) * (z[1] - z[2]));
        cr.im / cr.norm().max(1.0)
    }

    #[test]
    fn circle_images_remain_concyclic() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let g = random_map(&mut rng);
            let circ = Circle::from_center_radius(
                c(rng.gen_range(-1.0..1.0), 0.3),
                rng.gen_range(0.5..2.0),
            )
            .unwrap();
            let pts: Vec<Complex> = circ
                .sample_points(4)
                .iter()
                .map(|p| g.apply(*p).as_finite().unwrap())
                .collect();
            assert!(cross_ratio_imag([pts[0], pts[1], pts[2], pts[3]]).abs() < 1e-9);
            let img = g.apply_circle(&circ);
            for p in circ.sample_points(16) {
                assert!(img.contains(g.apply(p), 1e-9));
            }
        }
    }

    #[test]
    fn plane_distance_examples() {
        let unit = HyperbolicPlaneH3::new(Circle::from_center_radius(c(0.0, 0.0), 1.0).unwrap());
        let e1 = HyperbolicPlaneH3::new(Circle::from_center_radius(c(0.0, 0.0), E).unwrap());
        assert!((plane_distance(&unit, &e1).unwrap() - 1.0).abs() < 1e-12);
        let e2pi = HyperbolicPlaneH3::new(
            Circle::from_center_radius(c(0.0, 0.0), (2.0 * PI).exp()).unwrap(),
        );
        assert!((plane_distance(&unit, &e2pi).unwrap() - 2.0 * PI).abs() < 1e-12);
        let crossing =
            HyperbolicPlaneH3::new(Circle::from_center_radius(c(1.0, 0.0), 1.0).unwrap());
        assert!(matches!(
            plane_distance(&unit, &crossing),
            Err(GeometryError::CirclesIntersect(_))
        ));
    }

    /// Sampled minimisation oracle: the distance between the planes is the
    /// minimum of `dist_h3` over points of the two hemispheres. Uses a coarse
    /// grid followed by a shrinking local search.
    fn sampled_plane_distance(c1: (Complex, f64), c2: (Complex, f64)) -> f64 {
        let point = |(cen, r): (Complex, f64), th: f64, ph: f64| {
            H3Point::from_complex(cen + Complex::from_polar(r * ph.cos(), th), r * ph.sin())
        };
        let f = |x: [f64; 4]| dist_h3(&point(c1, x[0], x[1]), &point(c2, x[2], x[3]));
        let mut best = ([0.0; 4], f64::INFINITY);
        let n = 12;
        for i in 0..n {
            for j in 1..n {
                for k in 0..n {
                    for l in 1..n {
                        let x = [
                            2.0 * PI * i as f64 / n as f64,
                            PI / 2.0 * j as f64 / n as f64,
                            2.0 * PI * k as f64 / n as f64,
                            PI / 2.0 * l as f64 / n as f64,
                        ];
                        let v = f(x);
                        if v < best.1 {
                            best = (x, v);
                        }
                    }
                }
            }
        }
        let mut step = 0.3;
        while step > 1e-9 {
            let mut improved = false;
            for dim in 0..4 {
                for s in [-1.0, 1.0] {
                    let mut x = best.0;
                    x[dim] += s * step;
                    x[1] = x[1].clamp(1e-9, PI / 2.0);
                    x[3] = x[3].clamp(1e-9, PI / 2.0);
                    let v = f(x);
                    if v < best.1 {
                        best = (x, v);
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best.1
    }

    #[test]
    fn plane_distance_matches_sampled_minimisation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut checked = 0;
        while checked < 3 {
            let c1 = (
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                rng.gen_range(0.5..1.5),
            );
            let c2 = (
                c(rng.gen_range(2.0..4.0), rng.gen_range(-1.0..1.0)),
                rng.gen_range(0.3..1.0),
            );
            if (c1.0 - c2.0).norm() <= c1.1 + c2.1 + 0.2 {
                continue;
            }
            let p1 = HyperbolicPlaneH3::new(Circle::from_center_radius(c1.0, c1.1).unwrap());
            let p2 = HyperbolicPlaneH3::new(Circle::from_center_radius(c2.0, c2.1).unwrap());
            let exact = plane_distance(&p1, &p2).unwrap();
            let sampled = sampled_plane_distance(c1, c2);
            assert!((exact - sampled).abs() < 1e-4, "{exact} vs {sampled}");
            checked += 1;
        }
    }

    #[test]
    fn limit_points_are_inverse_in_both_circles() {
        let c1 = Circle::from_center_radius(c(0.0, 0.0), 1.0).unwrap();
        let c2 = Circle::from_center_radius(c(0.3, 0.1), 3.0).unwrap();
        let (p, q) = c1.limit_points(&c2).unwrap();
        let s = MoebiusMap::sending_to_zero_infinity(p, q).unwrap();
        for circ in [c1, c2] {
            let img = s.apply_circle(&circ);
            let (cen, _) = img.center_radius().unwrap();
            assert!(cen.norm() < 1e-12);
        }
    }

    #[test]
    fn angle_examples() {
        let vertical = GeodesicH3::from_real_endpoints(Some(0.0), None).unwrap();
        let semicircle = GeodesicH3::from_real_endpoints(Some(-1.0), Some(1.0)).unwrap();
        assert!(
            (angle_between_geodesics(&vertical, &semicircle).unwrap() - PI / 2.0).abs() < 1e-12
        );
        assert_eq!(angle_between_geodesics(&vertical, &vertical).unwrap(), 0.0);
        let touching = GeodesicH3::from_real_endpoints(Some(0.0), Some(1.0)).unwrap();
        assert_eq!(
            angle_between_geodesics(&vertical, &touching),
            Err(GeometryError::Disjoint)
        );
        let apart = GeodesicH3::from_real_endpoints(Some(1.0), Some(2.0)).unwrap();
        assert_eq!(
            angle_between_geodesics(&vertical, &apart),
            Err(GeometryError::Disjoint)
        );
        // (-1, 3): centre 1, radius 2, meets x = 0 at angle acos(1/2).
        let tilted = GeodesicH3::from_real_endpoints(Some(-1.0), Some(3.0)).unwrap();
        assert!((angle_between_geodesics(&vertical, &tilted).unwrap() - PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn geodesic_interpolation_is_arclength() {
        let p = H3Point::new(0.1, 0.2, 0.5).unwrap();
        let q = H3Point::new(1.0, -0.4, 2.0).unwrap();
        let m = geodesic_interpolate(&p, &q, 0.25);
        let d = dist_h3(&p, &q);
        assert!((dist_h3(&p, &m) - 0.25 * d).abs() < 1e-12);
        assert!((dist_h3(&m, &q) - 0.75 * d).abs() < 1e-12);
        let g = GeodesicH3::through(&p, &q).unwrap();
        let n = g.normalizer();
        for x in [p, q, m] {
            let y = n.apply_h3(&x);
            assert!(y.z().norm() < 1e-9 * y.h);
        }
    }

    #[test]
    fn serde_roundtrip_matrix() {
        let g = MoebiusMap::new(c(1.0, 2.0), c(0.5, 0.0), c(0.0, -1.0), c(3.0, 0.1)).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        let back: MoebiusMap = serde_json::from_str(&s).unwrap();
        assert!(back.distance_mod_sign(&g) < 1e-12);
    }

    #[test]
    fn conjugation_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let mut e = || c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let g = MoebiusMap::new(e(), e(), e(), e()).unwrap();
            let h = MoebiusMap::new(e(), e(), e(), e()).unwrap();
            let conj = (h * g * h.inverse()).renormalized();
            assert_eq!(g.classify(), conj.classify());
            if g.classify() == Classification::Loxodromic {
                let (l0, l1) = (
                    g.translation_length().unwrap(),
                    conj.translation_length().unwrap(),
                );
                assert!((l0 - l1).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn composition_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let (f, g, h) = (
                random_map(&mut rng),
                random_map(&mut rng),
                random_map(&mut rng),
            );
            let l = ((f * g) * h).renormalized();
            let r = (f * (g * h)).renormalized();
            assert!(l.distance_mod_sign(&r) < 1e-12 * 100.0);
            assert!((l.determinant() - 1.0).norm() < 1e-12);
            let z = SpherePoint::finite(0.3, 0.7);
            assert!(g.apply(z).chordal(&g.negate().apply(z)) < 1e-15);
        }
    }
}
