//! Thurston-coordinate bookkeeping: a hyperbolic surface together with a
//! measured lamination on a train track, realised (when integral enough) by
//! weighted closed geodesics.
//!
//! Holonomy words use one letter per generator, `a` for the first, `b` for
//! the second and so on; an upper-case letter is the inverse.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use thiserror::Error;

use crate::moebius::{Classification, MoebiusMap};
use crate::tolerance;
use crate::traintrack::{IntegerWeights, TrainTrack, TrainTrackError, WeightVector};

/// Residual allowed in the surface relation.
pub const RELATION_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraftingError {
    #[error("holonomy of `{0}` is not loxodromic ({1})")]
    NotLoxodromic(String, Classification),
    #[error("unknown loop `{0}`")]
    UnknownLoop(String),
    #[error("invalid word `{0}`")]
    InvalidWord(String),
    #[error("genus must be at least 2, got {0}")]
    InvalidGenus(u32),
    #[error("invalid surface: {0}")]
    InvalidSurface(String),
    #[error("surface relation fails with residual {0:e}")]
    Relation(f64),
    #[error(transparent)]
    Track(#[from] TrainTrackError),
    #[error("realization does not match the lamination: {0}")]
    Inconsistent(String),
    #[error("lamination has no loop realization")]
    NoRealization,
    #[error("expected a positive value, got {0}")]
    NonPositive(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuchsianData {
    pub generators: Vec<MoebiusMap>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Holonomy {
    Fuchsian(FuchsianData),
    LengthTable(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicSurface {
    genus: u32,
    holonomy: Holonomy,
}

#[derive(Serialize, Deserialize)]
struct RawSurface {
    genus: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fuchsian: Option<FuchsianData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lengths: Option<BTreeMap<String, f64>>,
}

impl HyperbolicSurface {
    /// Surface from `2g` generators `a_1, b_1, ..., a_g, b_g` with
    /// `[a_1, b_1] ... [a_g, b_g] = ±I`.
    pub fn fuchsian(genus: u32, generators: Vec<MoebiusMap>) -> Result<Self, GraftingError> {
        check_genus(genus)?;
        if generators.len() != 2 * genus as usize {
            return Err(GraftingError::InvalidSurface(format!(
                "genus {genus} needs {} generators, got {}",
                2 * genus,
                generators.len()
            )));
        }
        for (i, g) in generators.iter().enumerate() {
            if !g.is_real(1e-9) {
                return Err(GraftingError::InvalidSurface(format!(
                    "generator {i} is not real"
                )));
            }
            let class = g.classify();
            if class != Classification::Loxodromic {
                return Err(GraftingError::NotLoxodromic(
                    letter(i, false).to_string(),
                    class,
                ));
            }
        }
        let residual = relation_residual(&generators);
        if !(residual < RELATION_TOLERANCE) {
            return Err(GraftingError::Relation(residual));
        }
        Ok(HyperbolicSurface {
            genus,
            holonomy: Holonomy::Fuchsian(FuchsianData { generators }),
        })
    }

    pub fn length_table(genus: u32, lengths: BTreeMap<String, f64>) -> Result<Self, GraftingError> {
        check_genus(genus)?;
        if let Some((id, &l)) = lengths.iter().find(|(_, &l)| !(l > 0.0 && l.is_finite())) {
            return Err(GraftingError::InvalidSurface(format!(
                "length of `{id}` is {l}"
            )));
        }
        Ok(HyperbolicSurface {
            genus,
            holonomy: Holonomy::LengthTable(lengths),
        })
    }

    pub fn from_json(s: &str) -> Result<Self, GraftingError> {
        let raw: RawSurface =
            serde_json::from_str(s).map_err(|e| GraftingError::InvalidSurface(e.to_string()))?;
        match (raw.fuchsian, raw.lengths) {
            (Some(f), None) => Self::fuchsian(raw.genus, f.generators),
            (None, Some(l)) => Self::length_table(raw.genus, l),
            _ => Err(GraftingError::InvalidSurface(
                "exactly one of `fuchsian` and `lengths` is required".into(),
            )),
        }
    }

    pub fn to_json(&self) -> String {
        let raw = match &self.holonomy {
            Holonomy::Fuchsian(f) => RawSurface {
                genus: self.genus,
                fuchsian: Some(f.clone()),
                lengths: None,
            },
            Holonomy::LengthTable(l) => RawSurface {
                genus: self.genus,
                fuchsian: None,
                lengths: Some(l.clone()),
            },
        };
        serde_json::to_string_pretty(&raw).expect("surface serializes")
    }

    pub fn genus(&self) -> u32 {
        self.genus
    }

    pub fn holonomy(&self) -> &Holonomy {
        &self.holonomy
    }

    /// `4 pi (g - 1)`.
    pub fn area(&self) -> f64 {
        4.0 * PI * (self.genus as f64 - 1.0)
    }

    /// Holonomy of a word in the generators.
    pub fn word_holonomy(&self, word: &str) -> Result<MoebiusMap, GraftingError> {
        let Holonomy::Fuchsian(f) = &self.holonomy else {
            return Err(GraftingError::UnknownLoop(word.to_string()));
        };
        let letters = parse_word(word, f.generators.len())?;
        let mut m = MoebiusMap::identity();
        for (i, inv) in letters {
            let g = f.generators[i];
            m = m * if inv { g.inverse() } else { g };
        }
        Ok(m.renormalized())
    }

    pub fn geodesic_length(&self, lp: &LoopRef) -> Result<f64, GraftingError> {
        match (lp, &self.holonomy) {
            (LoopRef::Word(w), Holonomy::Fuchsian(_)) => {
                let m = self.word_holonomy(w)?;
                m.translation_length()
                    .map_err(|_| GraftingError::NotLoxodromic(w.clone(), m.classify()))
            }
            (LoopRef::Id(id), Holonomy::LengthTable(t)) => t
                .get(id)
                .copied()
                .ok_or_else(|| GraftingError::UnknownLoop(id.clone())),
            (LoopRef::Word(w), _) | (LoopRef::Id(w), _) => {
                Err(GraftingError::UnknownLoop(w.clone()))
            }
        }
    }
}

fn check_genus(genus: u32) -> Result<(), GraftingError> {
    if genus < 2 {
        Err(GraftingError::InvalidGenus(genus))
    } else {
        Ok(())
    }
}

fn letter(i: usize, inverse: bool) -> char {
    let c = (b'a' + i as u8) as char;
    if inverse {
        c.to_ascii_uppercase()
    } else {
        c
    }
}

fn parse_word(word: &str, n: usize) -> Result<Vec<(usize, bool)>, GraftingError> {
    if word.is_empty() {
        return Err(GraftingError::InvalidWord(word.to_string()));
    }
    word.chars()
        .map(|c| {
            let inv = c.is_ascii_uppercase();
            let i = (c.to_ascii_lowercase() as usize).wrapping_sub('a' as usize);
            if c.is_ascii_alphabetic() && i < n {
                Ok((i, inv))
            } else {
                Err(GraftingError::InvalidWord(word.to_string()))
            }
        })
        .collect()
}

/// Distance of `prod [a_i, b_i]` from `±I`.
pub fn relation_residual(generators: &[MoebiusMap]) -> f64 {
    let mut m = MoebiusMap::identity();
    for pair in generators.chunks(2) {
        let (a, b) = (pair[0], pair[1]);
        m = m * a * b * a.inverse() * b.inverse();
    }
    m.distance_mod_sign(&MoebiusMap::identity())
}

/// How a loop's geodesic length is found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopRef {
    Word(String),
    Id(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedLoop {
    pub id: String,
    pub holonomy: LoopRef,
    /// Transverse measure in radians.
    pub weight: f64,
    /// Branch indices traversed, with repetition.
    pub path: Vec<usize>,
}

impl WeightedLoop {
    fn counts(&self, n: usize) -> Vec<i64> {
        let mut c = vec![0; n];
        for &b in &self.path {
            c[b] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThurstonCoords {
    pub surface: HyperbolicSurface,
    pub track: TrainTrack,
    pub lamination: WeightVector,
    pub realization: Option<Vec<WeightedLoop>>,
    /// Set once a 2 pi-grafting has been applied; the holonomy is known to be
    /// unchanged but this is not checked numerically.
    pub holonomy_preserved: bool,
}

pub fn graft(
    surface: HyperbolicSurface,
    track: TrainTrack,
    lamination: WeightVector,
    realization: Option<Vec<WeightedLoop>>,
) -> Result<ThurstonCoords, GraftingError> {
    let report = track.validate_weights(&lamination)?;
    if !report.is_ok() {
        return Err(TrainTrackError::InvalidWeights(report.to_string()).into());
    }
    if let Some(loops) = &realization {
        check_realization(&surface, &track, &lamination, loops)?;
    }
    Ok(ThurstonCoords {
        surface,
        track,
        lamination,
        realization,
        holonomy_preserved: false,
    })
}

fn check_realization(
    surface: &HyperbolicSurface,
    track: &TrainTrack,
    lamination: &WeightVector,
    loops: &[WeightedLoop],
) -> Result<(), GraftingError> {
    let n = track.num_branches();
    let mut sum = vec![0.0; n];
    for l in loops {
        if l.path.iter().any(|&b| b >= n) {
            return Err(GraftingError::Inconsistent(format!(
                "loop `{}` leaves the track",
                l.id
            )));
        }
        if !(l.weight >= 0.0 && l.weight.is_finite()) {
            return Err(GraftingError::Inconsistent(format!(
                "loop `{}` has weight {}",
                l.id, l.weight
            )));
        }
        let len = surface.geodesic_length(&l.holonomy)?;
        if !(len > 0.0) {
            return Err(GraftingError::NonPositive(len));
        }
        for (s, c) in sum.iter_mut().zip(l.counts(n)) {
            *s += l.weight * c as f64;
        }
    }
    let tol = tolerance::geometric();
    for (b, (s, w)) in sum.iter().zip(&lamination.0).enumerate() {
        if (s - w).abs() > tol * w.abs().max(1.0) {
            return Err(GraftingError::Inconsistent(format!(
                "branch `{}` carries {s} but has weight {w}",
                track.branch_ids()[b]
            )));
        }
    }
    Ok(())
}

/// Adds `2 pi N` to the lamination. The realization survives if `N` splits
/// as a nonnegative integer combination of the realised loops, found
/// greedily in loop order; otherwise it is dropped.
pub fn two_pi_graft(
    c: &ThurstonCoords,
    n: &IntegerWeights,
) -> Result<ThurstonCoords, GraftingError> {
    let nb = c.track.num_branches();
    if n.0.len() != nb {
        return Err(TrainTrackError::IndexMismatch {
            expected: nb,
            got: n.0.len(),
        }
        .into());
    }
    if !c.track.validate_integer(n)? {
        return Err(
            TrainTrackError::InvalidWeights("N violates the switch conditions".into()).into(),
        );
    }
    let lamination = WeightVector(
        c.lamination
            .0
            .iter()
            .zip(&n.0)
            .map(|(&l, &k)| l + 2.0 * PI * k as f64)
            .collect(),
    );
    let realization = c.realization.as_ref().and_then(|loops| {
        let mut rest = n.0.clone();
        let mut out = loops.clone();
        for l in out.iter_mut() {
            let counts = l.counts(nb);
            let k = counts
                .iter()
                .zip(&rest)
                .filter(|(&ci, _)| ci > 0)
                .map(|(&ci, &ri)| ri / ci)
                .min()
                .unwrap_or(0)
                .max(0);
            for (r, ci) in rest.iter_mut().zip(&counts) {
                *r -= k * ci;
            }
            l.weight += 2.0 * PI * k as f64;
        }
        rest.iter().all(|&r| r == 0).then_some(out)
    });
    Ok(ThurstonCoords {
        surface: c.surface.clone(),
        track: c.track.clone(),
        lamination,
        realization,
        holonomy_preserved: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraftingCylinderData {
    pub loop_id: String,
    /// Geodesic length of the loop.
    pub circumference: f64,
    /// Weight of the loop, in radians.
    pub height: f64,
    pub modulus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThurstonMetricSummary {
    pub hyperbolic_area: f64,
    pub cylinders: Vec<GraftingCylinderData>,
    pub total_area: f64,
}

pub fn thurston_metric_summary(c: &ThurstonCoords) -> Result<ThurstonMetricSummary, GraftingError> {
    let loops: &[WeightedLoop] = match &c.realization {
        Some(l) => l,
        None if c.lamination.0.iter().all(|&w| w == 0.0) => &[],
        None => return Err(GraftingError::NoRealization),
    };
    let mut cylinders = Vec::new();
    for l in loops.iter().filter(|l| l.weight > 0.0) {
        let a = c.surface.geodesic_length(&l.holonomy)?;
        cylinders.push(GraftingCylinderData {
            loop_id: l.id.clone(),
            circumference: a,
            height: l.weight,
            modulus: l.weight / a,
        });
    }
    let hyperbolic_area = c.surface.area();
    let total_area = hyperbolic_area
        + cylinders
            .iter()
            .map(|c| c.circumference * c.height)
            .sum::<f64>();
    Ok(ThurstonMetricSummary {
        hyperbolic_area,
        cylinders,
        total_area,
    })
}

/// Modulus of the strip `R x [0, theta]` modulo translation by `a`.
pub fn crescent_quotient_modulus(theta: f64, a: f64) -> Result<f64, GraftingError> {
    if !(theta > 0.0) {
        return Err(GraftingError::NonPositive(theta));
    }
    if !(a > 0.0) {
        return Err(GraftingError::NonPositive(a));
    }
    Ok(theta / a)
}

pub fn is_admissible_holonomy(g: &MoebiusMap) -> bool {
    g.classify() == Classification::Loxodromic
}
