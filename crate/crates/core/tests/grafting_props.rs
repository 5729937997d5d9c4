use proptest::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::PI;

use graftlab::grafting::{
    graft, thurston_metric_summary, two_pi_graft, HyperbolicSurface, LoopRef, WeightedLoop,
};
use graftlab::traintrack::{End, IntegerWeights, TrainTrack, WeightVector};

fn two_loops() -> TrainTrack {
    use End::{Head, Tail};
    TrainTrack::new(
        &["p", "q"],
        &[
            ("s", vec![("p", Head)], vec![("p", Tail)]),
            ("u", vec![("q", Head)], vec![("q", Tail)]),
        ],
    )
    .unwrap()
}

fn area(lc: f64, ld: f64, wc: f64, wd: f64) -> f64 {
    let lengths: BTreeMap<String, f64> = [("c".to_string(), lc), ("d".to_string(), ld)]
        .into_iter()
        .collect();
    let surface = HyperbolicSurface::length_table(2, lengths).unwrap();
    let loops = vec![
        WeightedLoop {
            id: "c".into(),
            holonomy: LoopRef::Id("c".into()),
            weight: wc,
            path: vec![0],
        },
        WeightedLoop {
            id: "d".into(),
            holonomy: LoopRef::Id("d".into()),
            weight: wd,
            path: vec![1],
        },
    ];
    let c = graft(
        surface,
        two_loops(),
        WeightVector(vec![wc, wd]),
        Some(loops),
    )
    .unwrap();
    thurston_metric_summary(&c).unwrap().total_area
}

proptest! {
    #[test]
    fn area_is_hyperbolic_area_plus_cylinders(lc in 0.1..5.0f64, ld in 0.1..5.0f64, wc in 0.0..10.0f64, wd in 0.0..10.0f64) {
        let expect = 4.0 * PI + lc * wc + ld * wd;
        prop_assert!((area(lc, ld, wc, wd) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn two_pi_grafting_adds_cylinders_of_height_two_pi(n in 0i64..5, k in 0i64..5) {
        let lengths: BTreeMap<String, f64> = [("c".to_string(), 2.0), ("d".to_string(), 3.0)].into_iter().collect();
        let surface = HyperbolicSurface::length_table(2, lengths).unwrap();
        let loops = vec![
            WeightedLoop { id: "c".into(), holonomy: LoopRef::Id("c".into()), weight: 1.0, path: vec![0] },
            WeightedLoop { id: "d".into(), holonomy: LoopRef::Id("d".into()), weight: 1.0, path: vec![1] },
        ];
        let c = graft(surface, two_loops(), WeightVector(vec![1.0, 1.0]), Some(loops)).unwrap();
        let before = thurston_metric_summary(&c).unwrap().total_area;
        let g = two_pi_graft(&c, &IntegerWeights(vec![n, k])).unwrap();
        prop_assert!(g.holonomy_preserved);
        let after = thurston_metric_summary(&g).unwrap().total_area;
        prop_assert!((after - before - 2.0 * PI * (2.0 * n as f64 + 3.0 * k as f64)).abs() < 1e-9);
    }
}
