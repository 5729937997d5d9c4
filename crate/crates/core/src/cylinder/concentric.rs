//! Making adjacent cylinders concentric: a Möbius translation `gamma` of
//! the shared plane followed by a correction `eta` that interpolates back to
//! the identity on the shared circle.

use num_complex::Complex64 as Complex;
use std::f64::consts::PI;

use super::distortion::{jacobian, PlanarMap};
use super::{CylinderError, LogChart, RoundCylinder, SupportedRectangle};
use crate::moebius::{dist_h3, GeodesicH3, MoebiusMap, SpherePoint};

/// Offsets below this are treated as exactly concentric.
const CONCENTRIC_EPS: f64 = 1e-13;

/// The correction on an adjusted cylinder, in its log chart.
///
/// Planes `P_tau` over `|z| = e^tau` are parametrised by `t`, with `t = w/2`
/// on the shared circle and `t = -w/2` on the far one. For `t > 0` the plane
/// is translated along the dilate of the offset geodesic by `d 2t/w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaMap {
    chart: MoebiusMap,
    width: f64,
    shared_inner: bool,
    /// Direction of the offset geodesic in the chart.
    phi: f64,
    d: f64,
}

impl EtaMap {
    pub fn identity(chart: MoebiusMap, width: f64) -> Self {
        EtaMap {
            chart,
            width,
            shared_inner: true,
            phi: 0.0,
            d: 0.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.d == 0.0
    }

    pub fn offset(&self) -> f64 {
        self.d
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Re-coordinate of the plane where `t = 0`.
    pub fn kink(&self) -> f64 {
        self.width / 2.0
    }

    pub fn t_of(&self, tau: f64) -> f64 {
        if self.shared_inner {
            self.width / 2.0 - tau
        } else {
            tau - self.width / 2.0
        }
    }

    pub fn shift(&self, tau: f64) -> f64 {
        let t = self.t_of(tau);
        if t > 0.0 {
            self.d * 2.0 * t / self.width
        } else {
            0.0
        }
    }

    /// Translation by `s` of the plane over `|z| = e^tau` along its diameter
    /// in direction `phi`.
    pub fn plane_translation(&self, tau: f64, s: f64) -> MoebiusMap {
        let e = Complex::from_polar(tau.exp(), self.phi);
        let m = MoebiusMap::new(1.0.into(), e, 1.0.into(), -e).expect("distinct endpoints");
        let k = MoebiusMap::scaling(s.exp().into()).expect("nonzero");
        (m.inverse() * k * m).renormalized()
    }

    pub fn apply_chart(&self, zeta: Complex) -> Complex {
        let s = self.shift(zeta.re);
        if s == 0.0 {
            return zeta;
        }
        let z = zeta.exp();
        let tz = self
            .plane_translation(zeta.re, s)
            .apply_complex(z)
            .as_finite()
            .expect("finite image");
        zeta + (tz / z).ln()
    }

    /// Inverse of [`apply_chart`](Self::apply_chart); leaves are preserved, so
    /// the shift is read off the same `Re`.
    pub fn inverse_chart(&self, w: Complex) -> Complex {
        let s = self.shift(w.re);
        if s == 0.0 {
            return w;
        }
        let z = w.exp();
        let tz = self
            .plane_translation(w.re, -s)
            .apply_complex(z)
            .as_finite()
            .expect("finite image");
        w + (tz / z).ln()
    }

    pub fn apply(&self, p: SpherePoint) -> SpherePoint {
        if self.is_identity() {
            return p;
        }
        let SpherePoint::Finite(z) = self.chart.apply(p) else {
            return p;
        };
        if z.norm() == 0.0 {
            return p;
        }
        let s = self.shift(z.norm().ln());
        if s == 0.0 {
            return p;
        }
        let tz = self.plane_translation(z.norm().ln(), s).apply_complex(z);
        self.chart.inverse().apply(tz)
    }
}

impl PlanarMap for EtaMap {
    fn eval(&self, p: Complex) -> Complex {
        self.apply_chart(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentricAdjustment {
    pub gamma: MoebiusMap,
    pub eta: EtaMap,
    /// `gamma` applied to the second cylinder.
    pub adjusted: RoundCylinder,
    /// Distance between the core endpoints on the shared plane.
    pub offset: f64,
    /// Shared circle, as a boundary of the first cylinder.
    pub shared_outer_of_first: bool,
}

impl ConcentricAdjustment {
    /// Largest chordal distance `|eta(gamma(x)) - x|` over samples `x` on the
    /// shared circle.
    pub fn seam_residual(&self, first: &RoundCylinder, samples: usize) -> f64 {
        let circle = if self.shared_outer_of_first {
            first.outer
        } else {
            first.inner
        };
        circle
            .sample_points(samples)
            .into_iter()
            .map(|x| self.eta.apply(self.gamma.apply(x)).chordal(&x))
            .fold(0.0, f64::max)
    }
}

/// Works in the normalised frame of `a1`, where the core endpoints have
/// moderate heights.
pub fn concentric_adjust(
    a1: &RoundCylinder,
    a2: &RoundCylinder,
) -> Result<ConcentricAdjustment, CylinderError> {
    let (side1, side2) = a1.shared_circle(a2).ok_or(CylinderError::NotAdjacent)?;
    let w = a2.core_length();
    if !(w > 1e-9) {
        return Err(CylinderError::DegenerateCore(w));
    }
    let n1 = *a1.normalizer();
    let (b1, b2) = (a1.transform(&n1), a2.transform(&n1));
    let p1 = b1.endpoint(side1);
    let p2 = b2.endpoint(side2);
    let d = dist_h3(&p1, &p2);
    if d < CONCENTRIC_EPS {
        return Ok(ConcentricAdjustment {
            gamma: MoebiusMap::identity(),
            eta: EtaMap::identity(*a2.normalizer(), w),
            adjusted: *a2,
            offset: 0.0,
            shared_outer_of_first: side1,
        });
    }
    let axis = GeodesicH3::through(&p2, &p1)?;
    let n = axis.normalizer();
    let k = MoebiusMap::scaling(d.exp().into())?;
    let local = (n.inverse() * k * n).renormalized();
    let gamma = (n1.inverse() * local * n1).renormalized();
    let adjusted = a2.transform(&gamma);
    let q = b2.transform(&local).normalizer().apply_h3(&p2);
    let eta = EtaMap {
        chart: *adjusted.normalizer(),
        width: w,
        shared_inner: !side2,
        phi: q.y.atan2(q.x),
        d,
    };
    Ok(ConcentricAdjustment {
        gamma,
        eta,
        adjusted,
        offset: d,
        shared_outer_of_first: side1,
    })
}

/// Chart of one rectangle of a chain, composed into the first rectangle's
/// log chart after the chain has been made concentric.
///
/// Concentric hosts share their core axis, so the map from an adjusted
/// host's normalised plane to its predecessor's is the similarity `z -> k0 z`
/// and the chart is `zeta -> eta(zeta) + origin`. The computed map is
/// projected onto that similarity; `defect` is the log-distance it moved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainChart {
    pub chart: LogChart,
    pub eta: EtaMap,
    /// Relative Möbius adjustment making this host concentric with its predecessor.
    pub gamma: MoebiusMap,
    /// Common log coordinate of this chart's origin.
    pub origin: Complex,
    pub defect: f64,
}

impl ChainChart {
    fn new(
        chart: LogChart,
        eta: EtaMap,
        gamma: MoebiusMap,
        to_prev: &MoebiusMap,
        offset: Complex,
    ) -> Self {
        let one = Complex::new(1.0, 0.0);
        let k0 = to_prev.apply_complex(one).as_finite().expect("finite at 1");
        let far = Complex::new(chart.width, 0.0).exp();
        let defect = match to_prev.apply_complex(far) {
            SpherePoint::Finite(m) => (m / (k0 * far)).ln().norm(),
            SpherePoint::Infinity => f64::INFINITY,
        };
        ChainChart {
            chart,
            eta,
            gamma,
            origin: offset + k0.ln(),
            defect,
        }
    }

    pub fn apply(&self, zeta: Complex) -> Complex {
        self.eta.apply_chart(zeta) + self.origin
    }

    pub fn invert(&self, w: Complex) -> Complex {
        self.eta.inverse_chart(w - self.origin)
    }

    /// Jacobian columns of [`apply`](Self::apply).
    pub fn jacobian(&self, zeta: Complex, h: f64) -> (Complex, Complex) {
        if self.eta.is_identity() {
            return (Complex::new(1.0, 0.0), Complex::i());
        }
        jacobian(&self.eta, zeta, h)
    }

    /// Pulled-back flat metric `J^T J` at `zeta`.
    pub fn metric(&self, zeta: Complex, h: f64) -> [[f64; 2]; 2] {
        let (a, b) = self.jacobian(zeta, h);
        let g12 = (a * b.conj()).re;
        [[a.norm_sqr(), g12], [g12, b.norm_sqr()]]
    }
}

impl PlanarMap for ChainChart {
    fn eval(&self, p: Complex) -> Complex {
        self.apply(p)
    }
}

/// Makes every host of the chain concentric with the first. In the frame of
/// host `k - 1` the adjusted hosts already agree, so host `k` only needs the
/// pairwise adjustment against the unadjusted host `k - 1`.
pub fn modified_metric(chain: &[SupportedRectangle]) -> Result<Vec<ChainChart>, CylinderError> {
    let hosts: Vec<RoundCylinder> = chain.iter().map(|r| r.host).collect();
    chain_charts(&hosts)
}

/// [`modified_metric`] on bare hosts.
pub fn chain_charts(hosts: &[RoundCylinder]) -> Result<Vec<ChainChart>, CylinderError> {
    let Some(first) = hosts.first() else {
        return Ok(Vec::new());
    };
    let id = MoebiusMap::identity();
    let mut out = vec![ChainChart::new(
        first.chart(),
        EtaMap::identity(*first.normalizer(), first.core_length()),
        id,
        &id,
        Complex::new(0.0, 0.0),
    )];
    for k in 1..hosts.len() {
        let (prev, cur) = (&hosts[k - 1], &hosts[k]);
        let adj = concentric_adjust(prev, cur)?;
        let to_prev = (*prev.normalizer() * adj.adjusted.normalizer().inverse()).renormalized();
        let offset = out[k - 1].origin;
        out.push(ChainChart::new(
            cur.chart(),
            adj.eta,
            adj.gamma,
            &to_prev,
            offset,
        ));
    }
    Ok(out)
}

/// Mismatch across the seam between rectangles `k - 1` and `k`: positions
/// and tangential speeds of the two composed charts along the shared circle,
/// in the common log chart. Positions are compared modulo `2 pi i`.
pub fn seam_residual(
    chain: &[SupportedRectangle],
    charts: &[ChainChart],
    k: usize,
    samples: usize,
) -> Result<f64, CylinderError> {
    let hosts: Vec<RoundCylinder> = chain.iter().map(|r| r.host).collect();
    chain_seam_residual(&hosts, charts, k, samples)
}

/// [`seam_residual`] on bare hosts.
pub fn chain_seam_residual(
    hosts: &[RoundCylinder],
    charts: &[ChainChart],
    k: usize,
    samples: usize,
) -> Result<f64, CylinderError> {
    let (h0, h1) = (&hosts[k - 1], &hosts[k]);
    let (outer0, _) = h0.shared_circle(h1).ok_or(CylinderError::NotAdjacent)?;
    let u0 = if outer0 { h0.core_length() } else { 0.0 };
    let transfer = (*h1.normalizer() * h0.normalizer().inverse()).renormalized();
    let left = |th: f64| charts[k - 1].apply(Complex::new(u0, th));
    let right = |th: f64| {
        let z = transfer
            .apply_complex(Complex::new(u0, th).exp())
            .as_finite()
            .expect("seam avoids the poles");
        charts[k].apply(z.ln())
    };
    let wrap = |d: Complex| Complex::new(d.re, (d.im + PI).rem_euclid(2.0 * PI) - PI);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for j in 0..samples {
        let th = 2.0 * PI * (j as f64 + 0.5) / samples as f64;
        worst = worst.max(wrap(left(th) - right(th)).norm());
        let dl = wrap(left(th + h) - left(th - h)) / (2.0 * h);
        let dr = wrap(right(th + h) - right(th - h)) / (2.0 * h);
        worst = worst.max((dl.norm() - dr.norm()).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cylinder::{
        estimate_distortion, sup_displacement, RectangleDomain, SamplerConfig, StripDomain,
        DEFAULT_NODES,
    };
    use crate::moebius::Circle;

    /// `[e^{-w1}, 1]` and `[1, e^{w2}]`, the second moved by a translation of
    /// the unit-disk plane by `delta` in direction `theta`.
    fn offset_pair(w1: f64, w2: f64, delta: f64, theta: f64) -> (RoundCylinder, RoundCylinder) {
        let a1 = RoundCylinder::standard(-w1, w1).unwrap();
        let std2 = RoundCylinder::standard(0.0, w2).unwrap();
        let e = Complex::from_polar(1.0, theta);
        let m = MoebiusMap::new(1.0.into(), e, 1.0.into(), -e).unwrap();
        let beta = m.inverse() * MoebiusMap::scaling(delta.exp().into()).unwrap() * m;
        (a1, std2.transform(&beta))
    }

    #[test]
    fn concentric_input_is_left_alone() {
        let (a1, a2) = offset_pair(1.0, 2.0, 0.0, 0.0);
        let adj = concentric_adjust(&a1, &a2).unwrap();
        assert_eq!(adj.gamma, MoebiusMap::identity());
        assert!(adj.eta.is_identity());
    }

    #[test]
    fn adjustment_produces_concentric_cylinders() {
        for (delta, theta) in [(0.01, 0.3), (0.1, 2.0), (0.5, -1.0)] {
            let (a1, a2) = offset_pair(1.0, 2.0 * PI, delta, theta);
            let adj = concentric_adjust(&a1, &a2).unwrap();
            assert!((adj.offset - delta).abs() < 1e-12);
            assert!((adj.gamma.translation_length().unwrap() - delta).abs() < 1e-9);
            assert!(crate::cylinder::concentric_offset(&a1, &adj.adjusted).unwrap() < 1e-9);
            assert!(adj.seam_residual(&a1, 64) < 1e-8);
        }
    }

    #[test]
    fn eta_is_identity_on_far_half() {
        let (a1, a2) = offset_pair(1.0, 2.0 * PI, 0.05, 0.7);
        let adj = concentric_adjust(&a1, &a2).unwrap();
        for k in 0..50 {
            let zeta = Complex::new(PI + 0.1 + 0.05 * k as f64, 0.37 * k as f64);
            assert_eq!(adj.eta.apply_chart(zeta), zeta);
        }
    }

    #[test]
    fn eta_preserves_leaves() {
        let (a1, a2) = offset_pair(1.0, 2.0 * PI, 0.1, 0.7);
        let adj = concentric_adjust(&a1, &a2).unwrap();
        for k in 0..50 {
            let zeta = Complex::new(0.06 * k as f64, 0.37 * k as f64);
            assert!((adj.eta.apply_chart(zeta).re - zeta.re).abs() < 1e-12);
        }
    }

    #[test]
    fn eta_bounds_at_small_offset() {
        let (a1, a2) = offset_pair(1.0, 2.0 * PI, 0.01, 0.4);
        let adj = concentric_adjust(&a1, &a2).unwrap();
        let dom = StripDomain::new((0.0, 2.0 * PI), (0.0, 2.0 * PI)).with_kink(adj.eta.kink());
        let cfg = SamplerConfig::default();
        assert!(sup_displacement(&adj.eta, &dom, &cfg) < 0.02);
        assert!(estimate_distortion(&adj.eta, &dom, &cfg).unwrap().a_est <= 1.05);
    }

    #[test]
    fn gamma_is_a_chart_isometry() {
        let (a1, a2) = offset_pair(1.0, 2.0, 0.2, 1.1);
        let adj = concentric_adjust(&a1, &a2).unwrap();
        // Original chart of a2, carried by gamma into the chart of a1.
        let to_prev = (*a1.normalizer() * adj.gamma * a2.normalizer().inverse()).renormalized();
        let carried = |zeta: Complex| to_prev.apply_complex(zeta.exp()).as_finite().unwrap().ln();
        let dom = StripDomain::new((0.0, 2.0), (0.5, 2.5));
        let e = estimate_distortion(&carried, &dom, &SamplerConfig::default()).unwrap();
        assert!((e.a_est - 1.0).abs() < 1e-9 && (e.k_qc_est - 1.0).abs() < 1e-9);
        let cc = ChainChart::new(
            a2.chart(),
            EtaMap::identity(*a2.normalizer(), 2.0),
            adj.gamma,
            &to_prev,
            Complex::new(0.0, 0.0),
        );
        assert!(cc.defect < 1e-9, "{}", cc.defect);
    }

    #[test]
    fn not_adjacent() {
        let a = RoundCylinder::standard(0.0, 1.0).unwrap();
        let b = RoundCylinder::standard(2.0, 1.0).unwrap();
        assert_eq!(concentric_adjust(&a, &b), Err(CylinderError::NotAdjacent));
    }

    fn chain(offsets: &[f64]) -> Vec<SupportedRectangle> {
        let mut hosts = vec![RoundCylinder::standard(-2.0 * PI, 2.0 * PI).unwrap()];
        for (i, &d) in offsets.iter().enumerate() {
            let prev = hosts.last().unwrap();
            // Next host: a concentric copy beyond `prev`, moved in prev's
            // outer plane by `d`.
            let inv = prev.normalizer().inverse();
            let outer_r = prev.core_length().exp();
            let e = Complex::from_polar(outer_r, 0.5 + i as f64);
            let m = MoebiusMap::new(1.0.into(), e, 1.0.into(), -e).unwrap();
            let beta = m.inverse() * MoebiusMap::scaling(d.exp().into()).unwrap() * m;
            let next_std = RoundCylinder::new(
                Circle::from_center_radius(0.0.into(), outer_r).unwrap(),
                Circle::from_center_radius(0.0.into(), outer_r * (2.0 * PI).exp()).unwrap(),
            )
            .unwrap();
            hosts.push(next_std.transform(&beta).transform(&inv));
        }
        hosts
            .into_iter()
            .map(|h| SupportedRectangle::circular(h, 5.0, DEFAULT_NODES).unwrap())
            .collect()
    }

    #[test]
    fn concentric_chain_metric_unchanged() {
        let ch = chain(&[0.0, 0.0]);
        let charts = modified_metric(&ch).unwrap();
        for (r, c) in ch.iter().zip(&charts) {
            for k in 0..10 {
                let zeta = Complex::new(r.width() * k as f64 / 10.0, 0.5 * k as f64);
                let g = c.metric(zeta, 1e-5);
                assert!(
                    (g[0][0] - 1.0).abs() < 1e-12
                        && g[0][1].abs() < 1e-12
                        && (g[1][1] - 1.0).abs() < 1e-12
                );
            }
        }
    }

    #[test]
    fn offset_chain_metric() {
        let ch = chain(&[0.01, 0.01, 0.01]);
        let charts = modified_metric(&ch).unwrap();
        let cfg = SamplerConfig {
            samples: 1024,
            pairs: 256,
            ..Default::default()
        };
        for (r, c) in ch.iter().zip(&charts) {
            let dom = RectangleDomain::new(r);
            let e = estimate_distortion(c, &dom, &cfg).unwrap();
            assert!(e.a_est <= 1.05, "{}", e.a_est);
            assert!(c.defect < 1e-6, "{}", c.defect);
        }
        for k in 1..ch.len() {
            assert!(seam_residual(&ch, &charts, k, 64).unwrap() < 1e-8);
        }
    }

    #[test]
    fn eta_inverse_roundtrip() {
        let (a1, a2) = offset_pair(1.0, 2.0 * PI, 0.1, 0.7);
        let adj = concentric_adjust(&a1, &a2).unwrap();
        for k in 0..50 {
            let zeta = Complex::new(0.12 * k as f64, 0.37 * k as f64 - 3.0);
            let back = adj.eta.inverse_chart(adj.eta.apply_chart(zeta));
            assert!((back - zeta).norm() < 1e-12);
        }
    }
}
