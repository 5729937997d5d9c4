//! Named presets: the genus-two Bolza surface, a nine-branch genus-two track
//! and weight vectors on it.

use num_complex::Complex64;
use std::collections::BTreeMap;
use std::f64::consts::{E, FRAC_PI_4, PI, SQRT_2};

use crate::grafting::{GraftingError, HyperbolicSurface};
use crate::moebius::MoebiusMap;
use crate::traintrack::{End, TrainTrack, TrainTrackError, WeightVector};

pub const PRESET_NAMES: [&str; 4] = [
    "bolza",
    "genus2-track-A",
    "genus2-track-A/L",
    "genus2-track-A/M",
];

/// Side-pairings of the regular octagon in the disk model: `g_k` translates
/// along the diameter at angle `k pi / 4` by `2 arccosh(1 + sqrt 2)`.
pub fn bolza_octagon_pairings() -> [MoebiusMap; 4] {
    let alpha = 1.0 + SQRT_2;
    let beta = SQRT_2 * alpha.sqrt();
    let c = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let cayley = MoebiusMap::new(c, -i, c, i).expect("Cayley map is invertible");
    std::array::from_fn(|k| {
        let rot = Complex64::from_polar(1.0, k as f64 * FRAC_PI_4);
        let disk = MoebiusMap::new(alpha.into(), rot * beta, rot.conj() * beta, alpha.into())
            .expect("pairing is unimodular");
        // Conjugate to the upper half-plane; the entries come out real.
        let m = cayley.inverse() * disk * cayley;
        real_part(&m.renormalized())
    })
}

fn real_part(m: &MoebiusMap) -> MoebiusMap {
    // Real up to the sign quotient; rotate a purely imaginary lift back.
    let flip = m.a.im.abs() > m.a.re.abs() || m.d.im.abs() > m.d.re.abs();
    let f = |z: Complex64| if flip { z.im } else { z.re };
    MoebiusMap::real(f(m.a), f(m.b), f(m.c), f(m.d)).expect("real lift is unimodular")
}

/// Bolza generators `a_1, b_1, a_2, b_2` in the upper half-plane, with
/// `[a_1, b_1][a_2, b_2] = ±I`.
pub fn bolza_generators() -> Vec<MoebiusMap> {
    let [g0, g1, g2, g3] = bolza_octagon_pairings();
    let a1 = g0;
    let b1 = g3 * g2.inverse() * g1;
    let a2 = g3 * g1.inverse();
    let b2 = g1 * g2.inverse();
    vec![a1, b1, a2, b2]
        .into_iter()
        .map(|m| m.renormalized())
        .collect()
}

pub fn bolza() -> Result<HyperbolicSurface, GraftingError> {
    HyperbolicSurface::fuchsian(2, bolza_generators())
}

/// `2 arccosh(1 + sqrt 2)`, the systole of the Bolza surface.
pub fn bolza_systole() -> f64 {
    2.0 * (1.0 + SQRT_2).acosh()
}

/// Nine branches, six trivalent switches. `z1, z2, z3` are large at both
/// ends; `a..f` are small at both ends.
pub fn genus2_track_a() -> TrainTrack {
    use End::{Head, Tail};
    TrainTrack::new(
        &["z1", "z2", "z3", "a", "b", "c", "d", "e", "f"],
        &[
            ("s1", vec![("z1", Tail)], vec![("a", Tail), ("b", Tail)]),
            ("s2", vec![("z1", Head)], vec![("c", Tail), ("d", Tail)]),
            ("s3", vec![("z2", Tail)], vec![("a", Head), ("e", Tail)]),
            ("s4", vec![("z2", Head)], vec![("c", Head), ("f", Tail)]),
            ("s5", vec![("z3", Tail)], vec![("b", Head), ("f", Head)]),
            ("s6", vec![("z3", Head)], vec![("d", Head), ("e", Head)]),
        ],
    )
    .expect("preset track is valid")
}

/// Weights built from `sqrt 2, sqrt 3, pi/2, e/2` on the free branches.
pub fn genus2_track_a_weights() -> WeightVector {
    let (a, b, c, e) = (SQRT_2, 3f64.sqrt(), PI / 2.0, E / 2.0);
    let d = a + b - c;
    let f = a + e - c;
    WeightVector(vec![a + b, a + e, b + f, a, b, c, d, e, f])
}

/// A second lamination on the same track, used as the target direction.
pub fn genus2_track_a_target() -> WeightVector {
    let (a, b, c, e) = (1.1, 0.9, 1.3, 0.8);
    let d = a + b - c;
    let f = a + e - c;
    WeightVector(vec![a + b, a + e, b + f, a, b, c, d, e, f])
}

pub fn weights_map(track: &TrainTrack, w: &WeightVector) -> BTreeMap<String, f64> {
    track.weights_to_map(w)
}

#[derive(Debug)]
pub struct PresetCheck {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

/// Runs every preset through its validator.
pub fn validate_presets() -> Vec<PresetCheck> {
    let mut out = Vec::new();
    let bolza = bolza();
    out.push(PresetCheck {
        name: "bolza",
        ok: bolza.is_ok(),
        detail: match &bolza {
            Ok(_) => format!(
                "relation residual {:e}",
                crate::grafting::relation_residual(&bolza_generators())
            ),
            Err(e) => e.to_string(),
        },
    });
    let track = genus2_track_a();
    let cone = track.cone_basis();
    out.push(PresetCheck {
        name: "genus2-track-A",
        ok: cone.as_ref().is_ok_and(|g| !g.is_empty()),
        detail: match &cone {
            Ok(g) => format!(
                "{} branches, {} cone generators",
                track.num_branches(),
                g.len()
            ),
            Err(e) => e.to_string(),
        },
    });
    for (name, w) in [
        ("genus2-track-A/L", genus2_track_a_weights()),
        ("genus2-track-A/M", genus2_track_a_target()),
    ] {
        let r: Result<_, TrainTrackError> = track.validate_weights(&w);
        let ok = r.as_ref().is_ok_and(|r| r.is_ok());
        out.push(PresetCheck {
            name,
            ok,
            detail: r.map_or_else(|e| e.to_string(), |r| r.to_string()),
        });
    }
    out
}
