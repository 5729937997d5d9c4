//! Round cylinders on the Riemann sphere and rectangles supported on them.
//!
//! A cylinder bounded by disjoint circles is normalised to the annulus
//! `1 <= |z| <= e^c`; its log chart `zeta = log z` is the strip
//! `0 <= Re zeta <= c` on the universal cover, where every vertical leaf has
//! length `2 pi`. Rectangles are regions between two piecewise-linear graphs
//! `Im zeta = f(Re zeta)` in that chart.

mod concentric;
mod distortion;
mod xi;

pub use concentric::{
    chain_charts, chain_seam_residual, concentric_adjust, modified_metric, seam_residual,
    ChainChart, ConcentricAdjustment, EtaMap,
};
pub use distortion::{
    estimate_distortion, sup_displacement, DistortionEstimate, DomainSampler, PlanarMap,
    RectangleDomain, SamplerConfig, StripDomain,
};
pub use xi::XiMap;

use num_complex::Complex64 as Complex;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::moebius::{
    dist_h3, geodesic_interpolate, Circle, GeodesicH3, GeometryError, H2Point, H3Point, MoebiusMap,
    SpherePoint,
};

/// Relative coefficient distance below which two circles count as the same.
pub const ADJACENCY_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_NODES: usize = 64;
pub const MIN_NODES: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CylinderError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("cylinders do not share a boundary circle")]
    NotAdjacent,
    #[error("core length {0} is below tolerance")]
    DegenerateCore(f64),
    #[error("invalid rectangle: {0}")]
    InvalidRectangle(String),
    #[error("singular Jacobian at ({0}, {1})")]
    SingularJacobian(f64, f64),
    #[error("degenerate quadrilateral")]
    Degenerate,
}

/// The cylinder between two disjoint circles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundCylinder {
    /// Boundary sent to `|z| = 1`.
    pub inner: Circle,
    /// Boundary sent to `|z| = e^c`.
    pub outer: Circle,
    normalizer: MoebiusMap,
    core_length: f64,
}

impl RoundCylinder {
    /// Orders the boundaries so that `inner` is `c1`.
    pub fn new(c1: Circle, c2: Circle) -> Result<Self, CylinderError> {
        let (p, q) = c1.limit_points(&c2)?;
        let mut s = MoebiusMap::sending_to_zero_infinity(p, q)?;
        let radius = |s: &MoebiusMap, c: &Circle| s.apply_circle(c).center_radius().map(|(_, r)| r);
        let (mut r1, mut r2) = (
            radius(&s, &c1).ok_or(GeometryError::DegenerateCircle)?,
            radius(&s, &c2).ok_or(GeometryError::DegenerateCircle)?,
        );
        if r1 > r2 {
            s = MoebiusMap::sending_to_zero_infinity(q, p)?;
            (r1, r2) = (1.0 / r1, 1.0 / r2);
        }
        let s = (MoebiusMap::scaling((1.0 / r1).into())? * s).renormalized();
        let _ = r2;
        Ok(Self::with_normalizer(c1, c2, s))
    }

    fn with_normalizer(inner: Circle, outer: Circle, normalizer: MoebiusMap) -> Self {
        let (a, b) = Self::core_points(&normalizer, &inner, &outer);
        RoundCylinder {
            inner,
            outer,
            normalizer,
            core_length: dist_h3(&a, &b),
        }
    }

    fn core_points(s: &MoebiusMap, inner: &Circle, outer: &Circle) -> (H3Point, H3Point) {
        let r = |c: &Circle| s.apply_circle(c).center_radius().map_or(1.0, |(_, r)| r);
        let inv = s.inverse();
        let lift = |h: f64| inv.apply_h3(&H3Point { x: 0.0, y: 0.0, h });
        (lift(r(inner)), lift(r(outer)))
    }

    /// `e^{r0} <= |z| <= e^{r0 + c}`.
    pub fn standard(r0: f64, c: f64) -> Result<Self, CylinderError> {
        if !(c > 0.0) {
            return Err(CylinderError::DegenerateCore(c));
        }
        let inner = Circle::from_center_radius(0.0.into(), r0.exp())?;
        let outer = Circle::from_center_radius(0.0.into(), (r0 + c).exp())?;
        let s = MoebiusMap::scaling((-r0).exp().into())?;
        Ok(Self::with_normalizer(inner, outer, s))
    }

    /// Image under `g`, keeping the chart compatible: the chart of `g A` is
    /// the chart of `A` precomposed with `g^-1`.
    pub fn transform(&self, g: &MoebiusMap) -> Self {
        let n = (self.normalizer * g.inverse()).renormalized();
        RoundCylinder {
            inner: g.apply_circle(&self.inner),
            outer: g.apply_circle(&self.outer),
            normalizer: n,
            core_length: self.core_length,
        }
    }

    pub fn normalizer(&self) -> &MoebiusMap {
        &self.normalizer
    }

    pub fn core_length(&self) -> f64 {
        self.core_length
    }

    pub fn modulus(&self) -> f64 {
        self.core_length / (2.0 * PI)
    }

    /// Core endpoints on the planes over `inner` and `outer`.
    pub fn core_endpoints(&self) -> (H3Point, H3Point) {
        Self::core_points(&self.normalizer, &self.inner, &self.outer)
    }

    pub fn axis(&self) -> GeodesicH3 {
        let inv = self.normalizer.inverse();
        GeodesicH3 {
            start: inv.apply(SpherePoint::finite(0.0, 0.0)),
            end: inv.apply(SpherePoint::Infinity),
        }
    }

    pub fn chart(&self) -> LogChart {
        LogChart {
            normalizer: self.normalizer,
            width: self.core_length,
        }
    }

    /// The shared boundary with `other`, as `(self side is outer, other side is outer)`.
    pub fn shared_circle(&self, other: &RoundCylinder) -> Option<(bool, bool)> {
        for (mine, a) in [(false, &self.inner), (true, &self.outer)] {
            for (theirs, b) in [(false, &other.inner), (true, &other.outer)] {
                if a.relative_coefficient_distance(b) < ADJACENCY_TOLERANCE {
                    return Some((mine, theirs));
                }
            }
        }
        None
    }

    fn endpoint(&self, outer: bool) -> H3Point {
        let (a, b) = self.core_endpoints();
        if outer {
            b
        } else {
            a
        }
    }
}

/// Hyperbolic distance between the core endpoints of two adjacent cylinders
/// on their shared plane.
pub fn concentric_offset(a1: &RoundCylinder, a2: &RoundCylinder) -> Result<f64, CylinderError> {
    let (s1, s2) = a1.shared_circle(a2).ok_or(CylinderError::NotAdjacent)?;
    Ok(dist_h3(&a1.endpoint(s1), &a2.endpoint(s2)))
}

pub fn is_nearly_concentric(
    a1: &RoundCylinder,
    a2: &RoundCylinder,
    eps: f64,
) -> Result<bool, CylinderError> {
    Ok(concentric_offset(a1, a2)? < eps)
}

/// `zeta = log N(z)` on the universal cover of a cylinder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogChart {
    pub normalizer: MoebiusMap,
    pub width: f64,
}

impl LogChart {
    /// Principal-branch chart coordinate.
    pub fn to_chart(&self, p: SpherePoint) -> Option<Complex> {
        match self.normalizer.apply(p) {
            SpherePoint::Finite(z) if z.norm() > 0.0 => Some(z.ln()),
            _ => None,
        }
    }

    pub fn from_chart(&self, zeta: Complex) -> SpherePoint {
        self.normalizer
            .inverse()
            .apply(SpherePoint::Finite(zeta.exp()))
    }

    /// Flat-metric length of the vertical leaf over `u`, by summing chart
    /// displacements of a fine polygon traced on the sphere.
    pub fn leaf_length(&self, u: f64, n: usize) -> f64 {
        let pts: Vec<Complex> = (0..=n)
            .map(|k| {
                let zeta = Complex::new(u, 2.0 * PI * k as f64 / n as f64);
                let p = self.from_chart(zeta);
                // Pull back and unwrap the angle.
                let w = self
                    .normalizer
                    .apply(p)
                    .as_finite()
                    .expect("leaf avoids the poles");
                Complex::new(w.norm().ln(), w.arg())
            })
            .collect();
        let mut total = 0.0;
        for k in 0..n {
            let mut d = pts[k + 1] - pts[k];
            if d.im > PI {
                d.im -= 2.0 * PI;
            } else if d.im < -PI {
                d.im += 2.0 * PI;
            }
            total += d.norm();
        }
        total
    }
}

/// Piecewise-linear graph over `[0, width]` with uniform nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeGraph {
    pub width: f64,
    pub values: Vec<f64>,
}

impl EdgeGraph {
    pub fn constant(width: f64, value: f64, n: usize) -> Self {
        EdgeGraph {
            width,
            values: vec![value; n],
        }
    }

    pub fn nodes(&self) -> usize {
        self.values.len()
    }

    pub fn spacing(&self) -> f64 {
        self.width / (self.values.len() - 1) as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        self.spacing() * k as f64
    }

    fn segment(&self, u: f64) -> usize {
        let k = (u / self.spacing()).floor();
        (k.max(0.0) as usize).min(self.values.len() - 2)
    }

    /// Linear interpolation, extended linearly past the ends.
    pub fn eval(&self, u: f64) -> f64 {
        let k = self.segment(u);
        let h = self.spacing();
        let s = (u - k as f64 * h) / h;
        self.values[k] + s * (self.values[k + 1] - self.values[k])
    }

    pub fn slope(&self, u: f64) -> f64 {
        let k = self.segment(u);
        (self.values[k + 1] - self.values[k]) / self.spacing()
    }

    pub fn oscillation(&self) -> f64 {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        hi - lo
    }

    pub fn max_abs_slope(&self) -> f64 {
        let h = self.spacing();
        self.values
            .windows(2)
            .map(|w| ((w[1] - w[0]) / h).abs())
            .fold(0.0, f64::max)
    }

    pub fn shifted(&self, c: f64) -> Self {
        EdgeGraph {
            width: self.width,
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }
}

/// A rectangle supported on a round cylinder, in the cylinder's log chart.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportedRectangle {
    pub host: RoundCylinder,
    pub bottom: EdgeGraph,
    pub top: EdgeGraph,
}

impl SupportedRectangle {
    pub fn new(
        host: RoundCylinder,
        bottom: EdgeGraph,
        top: EdgeGraph,
    ) -> Result<Self, CylinderError> {
        let c = host.core_length();
        for (name, g) in [("bottom", &bottom), ("top", &top)] {
            if g.nodes() < MIN_NODES {
                return Err(CylinderError::InvalidRectangle(format!(
                    "{name} edge has {} nodes, need {MIN_NODES}",
                    g.nodes()
                )));
            }
            if (g.width - c).abs() > 1e-9 * c.max(1.0) {
                return Err(CylinderError::InvalidRectangle(format!(
                    "{name} edge spans {} but the core is {c}",
                    g.width
                )));
            }
            if g.values.iter().any(|v| !v.is_finite()) {
                return Err(CylinderError::InvalidRectangle(format!(
                    "{name} edge is not finite"
                )));
            }
        }
        if bottom.nodes() != top.nodes() {
            return Err(CylinderError::InvalidRectangle(
                "edges have different node counts".into(),
            ));
        }
        if let Some(k) = (0..top.nodes()).find(|&k| !(top.values[k] > bottom.values[k])) {
            return Err(CylinderError::InvalidRectangle(format!(
                "edges cross at node {k}"
            )));
        }
        Ok(SupportedRectangle { host, bottom, top })
    }

    /// Exactly circular rectangle `0 <= Im zeta <= height`.
    pub fn circular(host: RoundCylinder, height: f64, n: usize) -> Result<Self, CylinderError> {
        let c = host.core_length();
        Self::new(
            host,
            EdgeGraph::constant(c, 0.0, n),
            EdgeGraph::constant(c, height, n),
        )
    }

    pub fn width(&self) -> f64 {
        self.host.core_length()
    }

    pub fn leaf_length(&self, u: f64) -> f64 {
        self.top.eval(u) - self.bottom.eval(u)
    }

    pub fn min_leaf_length(&self) -> f64 {
        self.top
            .values
            .iter()
            .zip(&self.bottom.values)
            .map(|(t, b)| t - b)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_leaf_length(&self) -> f64 {
        self.top
            .values
            .iter()
            .zip(&self.bottom.values)
            .map(|(t, b)| t - b)
            .fold(0.0, f64::max)
    }

    pub fn nodes(&self) -> usize {
        self.bottom.nodes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearnessParams {
    pub eps: f64,
    /// Floor on the core length.
    pub k: f64,
    pub delta: f64,
    pub v: f64,
    pub v_prime: f64,
    pub d_bound: f64,
}

impl NearnessParams {
    pub fn new(eps: f64, k: f64) -> Self {
        NearnessParams {
            eps,
            k,
            delta: eps,
            v: 0.0,
            v_prime: 0.0,
            d_bound: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircularityReport {
    pub ok: bool,
    pub core_length: f64,
    pub oscillation_bottom: f64,
    pub oscillation_top: f64,
    pub max_slope: f64,
}

pub fn is_nearly_circular(r: &SupportedRectangle, p: &NearnessParams) -> CircularityReport {
    let core_length = r.width();
    let oscillation_bottom = r.bottom.oscillation();
    let oscillation_top = r.top.oscillation();
    let max_slope = r.bottom.max_abs_slope().max(r.top.max_abs_slope());
    let ok = core_length >= p.k
        && oscillation_bottom <= p.eps
        && oscillation_top <= p.eps
        && max_slope <= p.eps.tan();
    CircularityReport {
        ok,
        core_length,
        oscillation_bottom,
        oscillation_top,
        max_slope,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StraightnessReport {
    pub ok: bool,
    pub width: f64,
    pub height: f64,
    pub defect: f64,
}

/// Compares a geodesic quadrilateral `[bottom-left, bottom-right, top-right,
/// top-left]` with the Euclidean rectangle of the same width and height on a
/// `grid x grid` sample, by the additive distance defect.
pub fn is_nearly_straight_branch(
    quad: &[H2Point; 4],
    eps: f64,
    w: f64,
    grid: usize,
) -> Result<StraightnessReport, CylinderError> {
    let q: Vec<H3Point> = quad.iter().map(|p| p.to_h3()).collect();
    let left = |v: f64| geodesic_interpolate(&q[0], &q[3], v);
    let right = |v: f64| geodesic_interpolate(&q[1], &q[2], v);
    let (hl, hr) = (dist_h3(&q[0], &q[3]), dist_h3(&q[1], &q[2]));
    if hl < 1e-12 || hr < 1e-12 || dist_h3(&q[0], &q[1]) < 1e-12 {
        return Err(CylinderError::Degenerate);
    }
    let grid = grid.max(2);
    let params: Vec<f64> = (0..grid).map(|k| k as f64 / (grid - 1) as f64).collect();
    // Distance between the vertical edges, minimised over the sample.
    let fine: Vec<f64> = (0..=64).map(|k| k as f64 / 64.0).collect();
    let width = fine
        .iter()
        .flat_map(|&a| fine.iter().map(move |&b| (a, b)))
        .map(|(a, b)| dist_h3(&left(a), &right(b)))
        .fold(f64::INFINITY, f64::min);
    let height = hl.max(hr);
    let pts: Vec<(H3Point, (f64, f64))> = params
        .iter()
        .flat_map(|&v| params.iter().map(move |&s| (s, v)))
        .map(|(s, v)| {
            (
                geodesic_interpolate(&left(v), &right(v), s),
                (s * width, v * height),
            )
        })
        .collect();
    let mut defect: f64 = 0.0;
    for (i, (p, e)) in pts.iter().enumerate() {
        for (q, f) in &pts[i + 1..] {
            let de = ((e.0 - f.0).powi(2) + (e.1 - f.1).powi(2)).sqrt();
            defect = defect.max((dist_h3(p, q) - de).abs());
        }
    }
    Ok(StraightnessReport {
        ok: width >= w && defect <= 1.0 + eps,
        width,
        height,
        defect,
    })
}
