//! Parameter sweeps and reports behind the command-line benches.

use num_complex::Complex64 as Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::Profile;
use crate::cylinder::{
    concentric_adjust, estimate_distortion, sup_displacement, CylinderError, DistortionEstimate,
    EdgeGraph, RectangleDomain, RoundCylinder, SamplerConfig, StripDomain, SupportedRectangle,
    XiMap, DEFAULT_NODES,
};
use crate::moebius::{plane_distance, Circle, GeometryError, HyperbolicPlaneH3, MoebiusMap};
use crate::traintrack::{TrainTrack, TrainTrackError, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiRow {
    pub delta: f64,
    pub v: f64,
    pub a_est: f64,
    pub b_est: f64,
    pub k_qc_est: f64,
}

fn profile_edge(p: &Profile, delta: f64, width: f64, base: f64, nodes: usize) -> EdgeGraph {
    let h = width / (nodes - 1) as f64;
    EdgeGraph {
        width,
        values: (0..nodes)
            .map(|k| base + p.eval(delta, k as f64 * h, width))
            .collect(),
    }
}

/// Pair of rectangles of width `width` and height `1/delta` whose edges
/// deviate from horizontal by seeded profiles of size `delta`.
pub fn xi_pair(delta: f64, width: f64, seed: u64) -> Result<XiMap, CylinderError> {
    if !(delta > 0.0) {
        return Err(CylinderError::InvalidRectangle(format!(
            "delta {delta} must be positive"
        )));
    }
    let host = RoundCylinder::standard(0.0, width)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rect = || -> Result<SupportedRectangle, CylinderError> {
        let (b, t) = (Profile::draw(&mut rng), Profile::draw(&mut rng));
        let c = host.core_length();
        SupportedRectangle::new(
            host,
            profile_edge(&b, delta, c, 0.0, DEFAULT_NODES),
            profile_edge(&t, delta, c, 1.0 / delta, DEFAULT_NODES),
        )
    };
    let source = rect()?;
    let target = rect()?;
    Ok(XiMap::new(source, target))
}

fn xi_estimate(xi: &XiMap, cfg: &SamplerConfig) -> Result<DistortionEstimate, CylinderError> {
    estimate_distortion(
        xi,
        &RectangleDomain::new(&xi.source).with_kinks(
            (0..xi.target.nodes()).map(|k| xi.target.bottom.node(k) / xi.horizontal(1.0)),
        ),
        cfg,
    )
}

/// The same profiles are used at every `delta`, so the rows differ only by scale.
pub fn xi_sweep(
    deltas: &[f64],
    width: f64,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<Vec<XiRow>, CylinderError> {
    deltas
        .par_iter()
        .map(|&delta| {
            let xi = xi_pair(delta, width, seed)?;
            let e = xi_estimate(&xi, cfg)?;
            Ok(XiRow {
                delta,
                v: 1.0 / delta,
                a_est: e.a_est,
                b_est: e.b_est,
                k_qc_est: e.k_qc_est,
            })
        })
        .collect()
}

/// Estimate for the map of a rectangle onto itself.
pub fn xi_identity(
    delta: f64,
    width: f64,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<DistortionEstimate, CylinderError> {
    let xi = xi_pair(delta, width, seed)?;
    xi_estimate(&XiMap::new(xi.source.clone(), xi.source), cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaRow {
    pub delta: f64,
    pub sup_displacement: f64,
    pub a_est: f64,
    pub b_est: f64,
    pub k_qc_est: f64,
    pub seam_residual: f64,
}

/// `[e^{-w}, 1]` and `[1, e^w]`, the second moved by a translation of the
/// unit-disk plane by `delta` in direction `theta`.
pub fn offset_pair(
    w: f64,
    delta: f64,
    theta: f64,
) -> Result<(RoundCylinder, RoundCylinder), CylinderError> {
    let a1 = RoundCylinder::standard(-w, w)?;
    let e = Complex::from_polar(1.0, theta);
    let m = MoebiusMap::new(1.0.into(), e, 1.0.into(), -e)?;
    let beta = m.inverse() * MoebiusMap::scaling(delta.exp().into())? * m;
    Ok((a1, RoundCylinder::standard(0.0, w)?.transform(&beta)))
}

pub fn eta_sweep(
    deltas: &[f64],
    w: f64,
    seed: u64,
    cfg: &SamplerConfig,
    seam_samples: usize,
) -> Result<Vec<EtaRow>, CylinderError> {
    let theta = ChaCha8Rng::seed_from_u64(seed).gen_range(0.0..std::f64::consts::TAU);
    deltas
        .par_iter()
        .map(|&delta| {
            let (a1, a2) = offset_pair(w, delta, theta)?;
            let adj = concentric_adjust(&a1, &a2)?;
            let width = adj.eta.width();
            let dom = StripDomain::new((0.0, width), (0.0, std::f64::consts::TAU))
                .with_kink(adj.eta.kink());
            let e = estimate_distortion(&adj.eta, &dom, cfg)?;
            Ok(EtaRow {
                delta,
                sup_displacement: sup_displacement(&adj.eta, &dom, cfg),
                a_est: e.a_est,
                b_est: e.b_est,
                k_qc_est: e.k_qc_est,
                seam_residual: adj.seam_residual(&a1, seam_samples),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxRow {
    pub t: f64,
    pub branch_id: String,
    pub w: f64,
    pub m: i64,
    pub error: f64,
    pub d_achieved: f64,
}

/// One row per `(t, branch)`, in grid order then branch order.
pub fn approx_table(
    track: &TrainTrack,
    w: &WeightVector,
    t_grid: &[f64],
) -> Result<Vec<ApproxRow>, TrainTrackError> {
    let results: Vec<_> = t_grid
        .par_iter()
        .map(|&t| track.approximate_ray(w, t))
        .collect::<Result<_, _>>()?;
    Ok(results
        .into_iter()
        .flat_map(|r| {
            let rows: Vec<ApproxRow> = track
                .branch_ids()
                .iter()
                .enumerate()
                .map(|(i, id)| ApproxRow {
                    t: r.t,
                    branch_id: id.clone(),
                    w: w.0[i],
                    m: r.weights.0[i],
                    error: r.errors[i],
                    d_achieved: r.d_achieved,
                })
                .collect();
            rows
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleRow {
    pub index: usize,
    pub core_length: f64,
    pub modulus: f64,
    pub plane_distance: f64,
    pub difference: f64,
}

pub fn cylinder_row(index: usize, c1: Circle, c2: Circle) -> Result<CircleRow, CylinderError> {
    let cyl = RoundCylinder::new(c1, c2)?;
    let d = plane_distance(&HyperbolicPlaneH3::new(c1), &HyperbolicPlaneH3::new(c2))?;
    let core_length = cyl.core_length();
    Ok(CircleRow {
        index,
        core_length,
        modulus: cyl.modulus(),
        plane_distance: d,
        difference: (core_length - d).abs(),
    })
}

pub fn cylinder_report(pairs: &[(Circle, Circle)]) -> Result<Vec<CircleRow>, CylinderError> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| cylinder_row(i, a, b))
        .collect()
}

/// Seeded disjoint pairs, alternately nested and side by side.
pub fn random_disjoint_pairs(
    count: usize,
    seed: u64,
) -> Result<Vec<(Circle, Circle)>, GeometryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let c1 = Complex::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let r1: f64 = rng.gen_range(0.2..2.0);
            let dir = Complex::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU));
            let (c2, r2) = if k % 2 == 0 {
                let off = r1 * rng.gen_range(0.0..0.8);
                let room = r1 - off;
                (c1 + dir * off, room * rng.gen_range(0.05..0.9))
            } else {
                let gap = rng.gen_range(0.05..2.0);
                let r2 = rng.gen_range(0.2..2.0);
                (c1 + dir * (r1 + r2 + gap), r2)
            };
            Ok((
                Circle::from_center_radius(c1, r1)?,
                Circle::from_center_radius(c2, r2)?,
            ))
        })
        .collect()
}
