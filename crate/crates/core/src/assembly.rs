//! Desk-scale assembly of the piecewise map from a `2 pi`-grafted structure
//! to a large-weight grafting, with sampled dilatation and the resulting
//! Teichmüller-distance bound.
//!
//! Every branch is modelled on each side as a chain of rectangles on
//! nearly concentric round cylinders. The chain is read in its common log
//! chart, where one leaf-affine map carries the source branch onto the target
//! branch. Unit collars along the horizontal edges bend that map to the
//! arclength-proportional boundary map of the complement, which is an exact
//! isometry and contributes no distortion.

use num_complex::Complex64 as Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::cylinder::{
    chain_charts, chain_seam_residual, estimate_distortion, is_nearly_circular, ChainChart,
    CylinderError, DistortionEstimate, EdgeGraph, NearnessParams, PlanarMap, RectangleDomain,
    RoundCylinder, SamplerConfig, SupportedRectangle, XiMap, DEFAULT_NODES,
};
use crate::moebius::MoebiusMap;
use crate::traintrack::{IntegerWeights, TrainTrack, TrainTrackError, WeightVector};

pub const COLLAR_HEIGHT: f64 = 1.0;
pub const DEFAULT_WIDTH: f64 = 2.0 * PI;
pub const DEFAULT_PIECES: usize = 2;
const SEAM_SAMPLES: usize = 64;
const ARCLENGTH_CHORDS: usize = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error(transparent)]
    Track(#[from] TrainTrackError),
    #[error(transparent)]
    Cylinder(#[from] CylinderError),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("branch {branch}: leaf length {length} is not positive")]
    NonPositiveLeafLength { branch: String, length: f64 },
    #[error("branch {branch}: leaf length {length} is below twice the collar height")]
    CollarTooTall { branch: String, length: f64 },
    #[error("branch {0}: synthesized rectangle is not nearly circular")]
    NotNearlyCircular(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("pairs do not match the track: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisParams {
    pub delta: f64,
    /// Core length of every rectangle of a branch, per branch.
    pub widths: Vec<f64>,
    /// Rectangles per branch chain.
    pub pieces: usize,
    pub nodes: usize,
    pub seed: u64,
}

impl SynthesisParams {
    pub fn new(delta: f64, widths: Vec<f64>, seed: u64) -> Self {
        SynthesisParams {
            delta,
            widths,
            pieces: DEFAULT_PIECES,
            nodes: DEFAULT_NODES,
            seed,
        }
    }

    pub fn validate(&self, branches: usize) -> Result<(), AssemblyError> {
        let bad = |m: String| Err(AssemblyError::InvalidParameters(m));
        if !(self.delta >= 0.0 && self.delta <= 0.5) {
            return bad(format!("delta {} outside [0, 0.5]", self.delta));
        }
        if self.widths.len() != branches {
            return bad(format!(
                "{} widths for {branches} branches",
                self.widths.len()
            ));
        }
        if let Some(w) = self.widths.iter().find(|&&w| !(w > self.delta)) {
            return bad(format!("width {w} does not exceed delta"));
        }
        if self.pieces == 0 {
            return bad("a branch needs at least one piece".into());
        }
        if self.nodes < crate::cylinder::MIN_NODES {
            return bad(format!("{} nodes per piece", self.nodes));
        }
        Ok(())
    }

    /// Nearness parameters every synthesized rectangle satisfies.
    pub fn nearness(&self) -> NearnessParams {
        let w = self.widths.iter().copied().fold(f64::INFINITY, f64::min);
        // Core lengths are recomputed from the hosts, so allow for rounding.
        NearnessParams::new(
            2.0 * self.delta,
            w - self.delta - crate::tolerance::geometric() * w,
        )
    }
}

/// Unit-scale random data of one side of one branch; scaled by `delta` at use.
#[derive(Debug, Clone, PartialEq)]
struct Shape {
    widths: Vec<f64>,
    /// Offset magnitude in `[0, 1)` and direction, per adjacency.
    offsets: Vec<(f64, f64)>,
    bottom: Profile,
    top: Profile,
}

/// `shift + amp sin(2 pi u / C + phase)`, with `|shift|, amp <= 1/4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Profile {
    amp: f64,
    phase: f64,
    shift: f64,
}

impl Profile {
    pub(crate) fn draw(rng: &mut ChaCha8Rng) -> Self {
        Profile {
            amp: rng.gen_range(0.0..0.25),
            phase: rng.gen_range(0.0..2.0 * PI),
            shift: rng.gen_range(-0.25..0.25),
        }
    }

    pub(crate) fn eval(&self, delta: f64, u: f64, total: f64) -> f64 {
        delta * (self.shift + self.amp * (2.0 * PI * u / total + self.phase).sin())
    }
}

impl Shape {
    fn draw(seed: u64, stream: u64, pieces: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let widths = (0..pieces).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let offsets = (1..pieces)
            .map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.0..2.0 * PI)))
            .collect();
        Shape {
            widths,
            offsets,
            bottom: Profile::draw(&mut rng),
            top: Profile::draw(&mut rng),
        }
    }
}

/// Translation by `s` of the plane over `|z| = e^tau` along its diameter in
/// direction `phi`.
fn plane_translation(tau: f64, s: f64, phi: f64) -> Result<MoebiusMap, CylinderError> {
    if s == 0.0 {
        return Ok(MoebiusMap::identity());
    }
    let e = Complex::from_polar(tau.exp(), phi);
    let m = MoebiusMap::new(1.0.into(), e, 1.0.into(), -e)?;
    Ok((m.inverse() * MoebiusMap::scaling(s.exp().into())? * m).renormalized())
}

/// One side of one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchModel {
    pub hosts: Vec<RoundCylinder>,
    pub charts: Vec<ChainChart>,
    /// The chain's rectangles in their own log charts.
    pub pieces: Vec<SupportedRectangle>,
    /// The whole branch in the common chart, on the concentric cylinder of
    /// the combined width.
    pub common: SupportedRectangle,
    /// Leaf length the model was built for.
    pub weight: f64,
}

impl BranchModel {
    fn synthesize(
        weight: f64,
        width: f64,
        delta: f64,
        shape: &Shape,
        nodes: usize,
    ) -> Result<Self, CylinderError> {
        let widths: Vec<f64> = shape.widths.iter().map(|x| width + delta * x).collect();
        let mut hosts = vec![RoundCylinder::standard(0.0, widths[0])?];
        for j in 1..widths.len() {
            let prev = hosts[j - 1];
            let (mag, phi) = shape.offsets[j - 1];
            // A concentric successor in the frame of `prev`, pushed off by
            // at most delta / 4 inside the shared plane.
            let beta = plane_translation(widths[j - 1], 0.25 * delta * mag, phi)?;
            let next = RoundCylinder::standard(widths[j - 1], widths[j])?
                .transform(&beta)
                .transform(&prev.normalizer().inverse());
            hosts.push(next);
        }
        let charts = chain_charts(&hosts)?;
        let last = charts.len() - 1;
        let total = charts[last].origin.re + hosts[last].core_length();
        let host = RoundCylinder::standard(0.0, total)?;
        let c = host.core_length();
        let n = (nodes - 1) * hosts.len() + 1;
        let graph = |p: &Profile, base: f64| EdgeGraph {
            width: c,
            values: (0..n)
                .map(|k| base + p.eval(delta, c * k as f64 / (n - 1) as f64, c))
                .collect(),
        };
        let common =
            SupportedRectangle::new(host, graph(&shape.bottom, 0.0), graph(&shape.top, weight))?;
        let mut pieces = Vec::with_capacity(hosts.len());
        for (h, chart) in hosts.iter().zip(&charts) {
            let w = h.core_length();
            let pull = |edge: &EdgeGraph| EdgeGraph {
                width: w,
                values: (0..nodes)
                    .map(|k| {
                        let u = w * k as f64 / (nodes - 1) as f64 + chart.origin.re;
                        chart.invert(Complex::new(u, edge.eval(u))).im
                    })
                    .collect(),
            };
            pieces.push(SupportedRectangle::new(
                *h,
                pull(&common.bottom),
                pull(&common.top),
            )?);
        }
        Ok(BranchModel {
            hosts,
            charts,
            pieces,
            common,
            weight,
        })
    }

    pub fn total_width(&self) -> f64 {
        self.common.width()
    }

    /// Index of the piece whose common `Re` range contains `x`.
    fn piece_at(&self, x: f64) -> usize {
        self.charts
            .iter()
            .rposition(|c| c.origin.re <= x)
            .unwrap_or(0)
    }

    /// Largest seam residual between consecutive pieces.
    pub fn seam_max(&self) -> Result<f64, CylinderError> {
        let mut worst: f64 = 0.0;
        for k in 1..self.hosts.len() {
            worst = worst.max(chain_seam_residual(
                &self.hosts,
                &self.charts,
                k,
                SEAM_SAMPLES,
            )?);
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchModelPair {
    pub branch: String,
    pub source: BranchModel,
    pub target: BranchModel,
    pub params: NearnessParams,
}

/// Leaf lengths of the two structures on every branch: `L + 2 pi N` and `t M`.
pub fn branch_weights(
    l: &WeightVector,
    n: &IntegerWeights,
    m: &WeightVector,
    t: f64,
) -> (Vec<f64>, Vec<f64>) {
    let source =
        l.0.iter()
            .zip(&n.0)
            .map(|(&li, &ni)| li + 2.0 * PI * ni as f64)
            .collect();
    let target = m.0.iter().map(|&mi| t * mi).collect();
    (source, target)
}

fn check_weights(track: &TrainTrack, w: &WeightVector, name: &str) -> Result<(), AssemblyError> {
    let report = track.validate_weights(w)?;
    if !report.is_ok() {
        return Err(AssemblyError::InvalidWeights(format!(
            "{name} violates the switch conditions"
        )));
    }
    Ok(())
}

/// Source and target models of every branch. Shapes depend only on the seed
/// and the branch index, so they are shared across `t`.
pub fn synthesize_branch_pairs(
    track: &TrainTrack,
    l: &WeightVector,
    m: &WeightVector,
    t: f64,
    n: &IntegerWeights,
    params: &SynthesisParams,
) -> Result<Vec<BranchModelPair>, AssemblyError> {
    params.validate(track.num_branches())?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(AssemblyError::InvalidParameters(format!("t = {t}")));
    }
    check_weights(track, l, "L")?;
    check_weights(track, m, "M")?;
    if !track.validate_integer(n)? {
        return Err(AssemblyError::InvalidWeights(
            "N violates the switch conditions".into(),
        ));
    }
    let (src_w, tgt_w) = branch_weights(l, n, m, t);
    let nearness = params.nearness();
    let delta = params.delta;
    track
        .branch_ids()
        .par_iter()
        .enumerate()
        .map(|(i, id)| {
            for &w in [src_w[i], tgt_w[i]].iter() {
                if !(w - delta > 0.0) {
                    return Err(AssemblyError::NonPositiveLeafLength {
                        branch: id.clone(),
                        length: w - delta,
                    });
                }
            }
            let width = params.widths[i];
            let src_shape = Shape::draw(params.seed, 2 * i as u64, params.pieces);
            let tgt_shape = Shape::draw(params.seed, 2 * i as u64 + 1, params.pieces);
            let source = BranchModel::synthesize(src_w[i], width, delta, &src_shape, params.nodes)?;
            let target = BranchModel::synthesize(tgt_w[i], width, delta, &tgt_shape, params.nodes)?;
            for r in source.pieces.iter().chain(&target.pieces) {
                if !is_nearly_circular(r, &nearness).ok {
                    return Err(AssemblyError::NotNearlyCircular(id.clone()));
                }
            }
            Ok(BranchModelPair {
                branch: id.clone(),
                source,
                target,
                params: nearness,
            })
        })
        .collect()
}

/// Cumulative arclength of a piecewise-linear edge, extended linearly past
/// the ends.
#[derive(Debug, Clone, PartialEq)]
struct Arclength {
    graph: EdgeGraph,
    cum: Vec<f64>,
}

impl Arclength {
    fn new(graph: &EdgeGraph) -> Self {
        let h = graph.spacing();
        let mut cum = vec![0.0];
        for w in graph.values.windows(2) {
            cum.push(cum.last().unwrap() + h.hypot(w[1] - w[0]));
        }
        Arclength {
            graph: graph.clone(),
            cum,
        }
    }

    fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn segment_rate(&self, k: usize) -> f64 {
        (self.cum[k + 1] - self.cum[k]) / self.graph.spacing()
    }

    fn at(&self, u: f64) -> f64 {
        let h = self.graph.spacing();
        let k = ((u / h).floor().max(0.0) as usize).min(self.cum.len() - 2);
        self.cum[k] + (u - k as f64 * h) * self.segment_rate(k)
    }

    fn inverse(&self, s: f64) -> f64 {
        let k = self
            .cum
            .partition_point(|&c| c <= s)
            .clamp(1, self.cum.len() - 1)
            - 1;
        k as f64 * self.graph.spacing() + (s - self.cum[k]) / self.segment_rate(k)
    }
}

/// Correction on the unit collar of one horizontal edge, in target common
/// coordinates: the identity on the inner collar edge, and on the horizontal
/// edge the horizontal shift taking the leaf-affine boundary map to the
/// arclength-proportional one.
#[derive(Debug, Clone, PartialEq)]
struct Collar {
    source: Arclength,
    target: Arclength,
    /// Target width over source width.
    ratio: f64,
}

impl Collar {
    fn shift(&self, u2: f64) -> f64 {
        let frac = self.source.at(u2 / self.ratio) / self.source.total();
        self.target.inverse(frac * self.target.total()) - u2
    }
}

/// Leaf-affine map of one branch followed by the collar corrections.
#[derive(Debug, Clone)]
pub struct BranchMap {
    pub xi: XiMap,
    bottom: Collar,
    top: Collar,
}

impl BranchMap {
    fn new(source: &SupportedRectangle, target: &SupportedRectangle) -> Self {
        let ratio = target.width() / source.width();
        let collar = |s: &EdgeGraph, t: &EdgeGraph| Collar {
            source: Arclength::new(s),
            target: Arclength::new(t),
            ratio,
        };
        BranchMap {
            xi: XiMap::new(source.clone(), target.clone()),
            bottom: collar(&source.bottom, &target.bottom),
            top: collar(&source.top, &target.top),
        }
    }

    pub fn collar(&self, w: Complex) -> Complex {
        let t = &self.xi.target;
        let below = w.im - t.bottom.eval(w.re);
        if below < COLLAR_HEIGHT {
            let u = w.re + (1.0 - below / COLLAR_HEIGHT) * self.bottom.shift(w.re);
            return Complex::new(u, t.bottom.eval(u) + below);
        }
        let above = t.top.eval(w.re) - w.im;
        if above < COLLAR_HEIGHT {
            let u = w.re + (1.0 - above / COLLAR_HEIGHT) * self.top.shift(w.re);
            return Complex::new(u, t.top.eval(u) - above);
        }
        w
    }

    /// Source common chart to target common chart.
    pub fn apply(&self, w: Complex) -> Complex {
        self.collar(self.xi.apply(w))
    }
}

impl PlanarMap for BranchMap {
    fn eval(&self, p: Complex) -> Complex {
        self.apply(p)
    }
}

/// Numerical arclength along an edge from `0`, by chords of a uniform
/// polygon; independent of the node structure.
fn chord_arclength(edge: &EdgeGraph) -> impl Fn(f64) -> f64 + '_ {
    let h = edge.width / ARCLENGTH_CHORDS as f64;
    let mut cum = vec![0.0];
    for k in 0..ARCLENGTH_CHORDS {
        let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
        cum.push(cum[k] + h.hypot(edge.eval(b) - edge.eval(a)));
    }
    move |u: f64| {
        let k = ((u / h).floor().max(0.0) as usize).min(ARCLENGTH_CHORDS - 1);
        let a = k as f64 * h;
        cum[k] + (u - a).hypot(edge.eval(u) - edge.eval(a))
    }
}

/// Mismatch on the horizontal edges between the collared map and the
/// arclength-proportional boundary map.
fn collar_residual(map: &BranchMap, samples: usize) -> f64 {
    let (s, t) = (&map.xi.source, &map.xi.target);
    let mut worst: f64 = 0.0;
    for (se, te) in [(&s.bottom, &t.bottom), (&s.top, &t.top)] {
        let (ls, lt) = (chord_arclength(se), chord_arclength(te));
        let (total_s, total_t) = (ls(se.width), lt(te.width));
        for j in 0..samples {
            let u = se.width * (j as f64 + 0.5) / samples as f64;
            let q = map.apply(Complex::new(u, se.eval(u)));
            worst = worst.max((te.eval(q.re) - q.im).abs());
            worst = worst.max((lt(q.re) - ls(u) / total_s * total_t).abs());
        }
    }
    worst
}

#[derive(Debug, Clone)]
pub struct AssembledBranch {
    pub pair: BranchModelPair,
    pub map: BranchMap,
    /// Largest mismatch over the vertical seams of both chains and the collar boundaries.
    pub seam_max: f64,
}

/// Piece `j` of the source in its own chart, to the target in the own chart
/// of the piece that receives it.
struct PieceMap<'a> {
    branch: &'a AssembledBranch,
    j: usize,
}

impl PlanarMap for PieceMap<'_> {
    fn eval(&self, p: Complex) -> Complex {
        let (src, tgt) = (&self.branch.pair.source, &self.branch.pair.target);
        let x = self.branch.map.xi.apply(src.charts[self.j].apply(p));
        let k = tgt.piece_at(x.re);
        tgt.charts[k].invert(self.branch.map.collar(x))
    }
}

impl AssembledBranch {
    /// Source `Re` values, in piece `j`'s chart, across which the composed
    /// map is not smooth or changes target piece.
    fn kinks(&self, j: usize) -> Vec<f64> {
        let (src, tgt) = (&self.pair.source, &self.pair.target);
        let ratio = self.map.xi.target.width() / self.map.xi.source.width();
        let o = src.charts[j].origin.re;
        let mut out = Vec::new();
        if !src.charts[j].eta.is_identity() {
            out.push(src.charts[j].eta.kink());
        }
        let sc = &src.common.bottom;
        out.extend((0..sc.nodes()).map(|k| sc.node(k) - o));
        let tc = &tgt.common.bottom;
        out.extend((0..tc.nodes()).map(|k| tc.node(k) / ratio - o));
        for c in &tgt.charts {
            out.push(c.origin.re / ratio - o);
            if !c.eta.is_identity() {
                out.push((c.origin.re + c.eta.kink()) / ratio - o);
            }
        }
        out
    }

    /// Sampled distortion: `A`, `K` and the determinant range from the pieces
    /// in their own conformal charts, `B` from the common charts.
    pub fn estimate(&self, cfg: &SamplerConfig) -> Result<DistortionEstimate, AssemblyError> {
        let pieces_cfg = SamplerConfig { pairs: 0, ..*cfg };
        let mut total: Option<DistortionEstimate> = None;
        for (j, r) in self.pair.source.pieces.iter().enumerate() {
            let dom = RectangleDomain::new(r).with_kinks(self.kinks(j));
            let piece_cfg = SamplerConfig {
                seed: cfg.seed ^ ((j as u64) << 32),
                ..pieces_cfg
            };
            let e = estimate_distortion(&PieceMap { branch: self, j }, &dom, &piece_cfg)?;
            total = Some(match total {
                None => e,
                Some(t) => t.combine(&e),
            });
        }
        let mut est = total.expect("at least one piece");
        let pairs_cfg = SamplerConfig { samples: 0, ..*cfg };
        let b = estimate_distortion(
            &self.map,
            &RectangleDomain::new(&self.pair.source.common),
            &pairs_cfg,
        )?;
        est.b_est = b.b_est;
        est.samples += b.samples;
        est.seam_max = self.seam_max;
        Ok(est)
    }
}

#[derive(Debug, Clone)]
pub struct AssembledMap {
    pub branches: Vec<AssembledBranch>,
}

impl AssembledMap {
    pub fn seam_max(&self) -> f64 {
        self.branches.iter().map(|b| b.seam_max).fold(0.0, f64::max)
    }

    /// Per-branch estimates, in branch order.
    pub fn estimate(&self, cfg: &SamplerConfig) -> Result<Vec<DistortionEstimate>, AssemblyError> {
        self.branches.iter().map(|b| b.estimate(cfg)).collect()
    }
}

/// Builds the piecewise map; one pair per branch, in track order.
pub fn assemble(
    track: &TrainTrack,
    pairs: Vec<BranchModelPair>,
) -> Result<AssembledMap, AssemblyError> {
    let ids = track.branch_ids();
    if pairs.len() != ids.len() {
        return Err(AssemblyError::Inconsistent(format!(
            "{} pairs for {} branches",
            pairs.len(),
            ids.len()
        )));
    }
    if let Some((p, id)) = pairs.iter().zip(ids).find(|(p, id)| &p.branch != *id) {
        return Err(AssemblyError::Inconsistent(format!(
            "pair {} where branch {id} was expected",
            p.branch
        )));
    }
    let mut branches = Vec::with_capacity(pairs.len());
    for pair in pairs {
        for side in [&pair.source, &pair.target] {
            let length = side.common.min_leaf_length();
            if !(length >= 2.0 * COLLAR_HEIGHT) {
                return Err(AssemblyError::CollarTooTall {
                    branch: pair.branch.clone(),
                    length,
                });
            }
        }
        let map = BranchMap::new(&pair.source.common, &pair.target.common);
        let seam_max = pair
            .source
            .seam_max()?
            .max(pair.target.seam_max()?)
            .max(collar_residual(&map, SEAM_SAMPLES));
        branches.push(AssembledBranch {
            pair,
            map,
            seam_max,
        });
    }
    Ok(AssembledMap { branches })
}

/// Everything a `t` sweep needs, with ids resolved.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub track: TrainTrack,
    pub l: WeightVector,
    pub m: WeightVector,
    pub synthesis: SynthesisParams,
    pub t_grid: Vec<f64>,
    pub sampler: SamplerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchEstimate {
    pub branch: String,
    pub estimate: DistortionEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub t: f64,
    pub delta: f64,
    pub n: Vec<i64>,
    pub d_achieved: f64,
    pub branches: Vec<BranchEstimate>,
    pub a_est: f64,
    pub b_est: f64,
    pub k_qc_est: f64,
    pub teich_bound: f64,
    pub seam_max: f64,
    /// Jacobian determinant of constant sign on every piece.
    pub fold_free: bool,
}

/// Reports up to the first failing `t`, and that failure.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub reports: Vec<ExperimentReport>,
    pub failure: Option<(f64, AssemblyError)>,
}

/// Teichmüller-distance bound of a `K`-quasiconformal map.
pub fn teich_bound(k_qc: f64) -> f64 {
    0.5 * k_qc.ln()
}

/// One `t` of the sweep, with `N` given.
pub fn run_with_multiloop(
    setup: &ExperimentSetup,
    t: f64,
    n: &IntegerWeights,
    d_achieved: f64,
) -> Result<ExperimentReport, AssemblyError> {
    let pairs = synthesize_branch_pairs(&setup.track, &setup.l, &setup.m, t, n, &setup.synthesis)?;
    let map = assemble(&setup.track, pairs)?;
    let estimates = map.estimate(&setup.sampler)?;
    let global = estimates
        .iter()
        .skip(1)
        .fold(estimates[0], |a, e| a.combine(e));
    let k = global.k_qc_est;
    let bound = teich_bound(k);
    if !bound.is_finite() {
        return Err(AssemblyError::InvalidParameters(format!(
            "teich_bound is {bound} at t = {t}"
        )));
    }
    Ok(ExperimentReport {
        t,
        delta: setup.synthesis.delta,
        n: n.0.clone(),
        d_achieved,
        branches: map
            .branches
            .iter()
            .zip(&estimates)
            .map(|(b, e)| BranchEstimate {
                branch: b.pair.branch.clone(),
                estimate: *e,
            })
            .collect(),
        a_est: global.a_est,
        b_est: global.b_est,
        k_qc_est: k,
        teich_bound: bound,
        seam_max: map.seam_max(),
        fold_free: estimates.iter().all(|e| e.orientation_consistent()),
    })
}

/// One `t` of the sweep.
pub fn run_single(setup: &ExperimentSetup, t: f64) -> Result<ExperimentReport, AssemblyError> {
    let approx = setup.track.approximate_ray(&setup.m, t)?;
    run_with_multiloop(setup, t, &approx.weights, approx.d_achieved)
}

/// Runs the grid in parallel; each `t` is seeded independently.
pub fn run_experiment(setup: &ExperimentSetup) -> ExperimentOutcome {
    let results: Vec<Result<ExperimentReport, AssemblyError>> = setup
        .t_grid
        .par_iter()
        .map(|&t| run_single(setup, t))
        .collect();
    let mut reports = Vec::new();
    for (r, &t) in results.into_iter().zip(&setup.t_grid) {
        match r {
            Ok(rep) => reports.push(rep),
            Err(e) => {
                return ExperimentOutcome {
                    reports,
                    failure: Some((t, e)),
                }
            }
        }
    }
    ExperimentOutcome {
        reports,
        failure: None,
    }
}
