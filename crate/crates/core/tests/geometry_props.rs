use num_complex::Complex64 as Complex;
use proptest::prelude::*;
use std::f64::consts::{PI, TAU};

use graftlab::cylinder::{
    concentric_adjust, RoundCylinder, SupportedRectangle, XiMap, DEFAULT_NODES,
};
use graftlab::experiments::{cylinder_row, offset_pair};
use graftlab::moebius::{dist_h3, Circle, H3Point, MoebiusMap};

fn complex() -> impl Strategy<Value = Complex> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| Complex::new(a, b))
}

fn sl2() -> impl Strategy<Value = MoebiusMap> {
    (complex(), complex(), complex(), complex())
        .prop_filter("well conditioned", |(a, b, c, d)| {
            (a * d - b * c).norm() > 0.2
        })
        .prop_map(|(a, b, c, d)| MoebiusMap::new(a, b, c, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn nested_circles_core_length_is_plane_distance(
        c in complex(), r in 0.2..2.0f64, off in 0.0..0.8f64, frac in 0.05..0.9f64, dir in 0.0..TAU,
    ) {
        let c2 = c + Complex::from_polar(r * off, dir);
        let r2 = r * (1.0 - off) * frac;
        let row = cylinder_row(0, Circle::from_center_radius(c, r).unwrap(), Circle::from_center_radius(c2, r2).unwrap()).unwrap();
        prop_assert!(row.difference < 1e-9);
        prop_assert!((row.modulus - row.core_length / TAU).abs() < 1e-12);
    }

    #[test]
    fn moebius_maps_preserve_cylinder_core(g in sl2(), r0 in -1.0..1.0f64, w in 0.5..4.0f64) {
        let a = RoundCylinder::standard(r0, w).unwrap();
        prop_assert!((a.transform(&g).core_length() - w).abs() < 1e-8);
    }

    #[test]
    fn translation_length_is_conjugation_invariant(g in sl2(), h in sl2()) {
        if let Ok(l) = g.translation_length() {
            prop_assume!(l > 1e-3);
            let lc = (h * g * h.inverse()).translation_length().unwrap();
            prop_assert!((l - lc).abs() < 1e-8 * l.max(1.0));
        }
    }

    #[test]
    fn moebius_maps_are_h3_isometries(g in sl2(), x in complex(), y in complex(), h1 in 0.1..3.0f64, h2 in 0.1..3.0f64) {
        let p = H3Point::new(x.re, x.im, h1).unwrap();
        let q = H3Point::new(y.re, y.im, h2).unwrap();
        let d = dist_h3(&p, &q);
        prop_assert!((dist_h3(&g.apply_h3(&p), &g.apply_h3(&q)) - d).abs() < 1e-7 * d.max(1.0));
    }

    #[test]
    fn concentric_adjustment_recovers_offset(delta in 0.001..0.4f64, theta in 0.0..TAU) {
        let (a1, a2) = offset_pair(PI, delta, theta).unwrap();
        let adj = concentric_adjust(&a1, &a2).unwrap();
        prop_assert!((adj.offset - delta).abs() < 1e-10);
        prop_assert!(adj.seam_residual(&a1, 32) < 1e-8);
        for k in 0..16 {
            let zeta = Complex::new(TAU * k as f64 / 16.0, 0.3 * k as f64);
            let w = adj.eta.apply_chart(zeta);
            prop_assert!((w.re - zeta.re).abs() < 1e-12);
            prop_assert!((adj.eta.inverse_chart(w) - zeta).norm() < 1e-9);
        }
    }

    #[test]
    fn xi_is_leafwise_affine(h in 2.0..20.0f64, h2 in 2.0..20.0f64, u in 0.01..0.99f64) {
        let host = RoundCylinder::standard(0.0, TAU).unwrap();
        let host2 = RoundCylinder::standard(0.0, TAU + 0.1).unwrap();
        let xi = XiMap::new(
            SupportedRectangle::circular(host, h, DEFAULT_NODES).unwrap(),
            SupportedRectangle::circular(host2, h2, DEFAULT_NODES).unwrap(),
        );
        let x = u * TAU;
        let (p0, p1) = (xi.apply(Complex::new(x, 0.0)), xi.apply(Complex::new(x, h)));
        prop_assert!(p0.im.abs() < 1e-12 && (p1.im - h2).abs() < 1e-9);
        let mid = xi.apply(Complex::new(x, h / 2.0));
        prop_assert!((mid - (p0 + p1) / 2.0).norm() < 1e-9);
    }
}
