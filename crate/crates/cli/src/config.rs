//! JSON configuration for every subcommand.
//!
//! Tracks and weight vectors are given either inline or by preset name.
//! Unknown fields are rejected so that typos surface as errors.

use serde::de::DeserializeOwned;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::f64::consts::PI;

use graftlab::assembly::{ExperimentSetup, SynthesisParams, DEFAULT_PIECES, DEFAULT_WIDTH};
use graftlab::cylinder::{SamplerConfig, DEFAULT_NODES};
use graftlab::grafting::{HyperbolicSurface, LoopRef, WeightedLoop};
use graftlab::moebius::Circle;
use graftlab::presets;
use graftlab::traintrack::{IntegerWeights, TrainTrack, WeightVector};

use crate::CliError;

pub const MIN_SAMPLES: usize = 256;
pub const DEFAULT_SAMPLES: usize = 4096;

/// Parses `s`, reporting the field path and position of the first error.
pub fn parse<T: DeserializeOwned>(s: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(s);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Config {
            path,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })
}

fn invalid(path: &str, message: impl Into<String>) -> CliError {
    CliError::Validation {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TrackSpec {
    Preset(String),
    Inline(serde_json::Value),
}

impl TrackSpec {
    pub fn resolve(&self, path: &str) -> Result<TrainTrack, CliError> {
        match self {
            TrackSpec::Preset(name) if name == "genus2-track-A" => Ok(presets::genus2_track_a()),
            TrackSpec::Preset(name) => Err(invalid(path, format!("unknown track preset `{name}`"))),
            TrackSpec::Inline(v) => {
                TrainTrack::from_json(&v.to_string()).map_err(|e| invalid(path, e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Preset(String),
    Map(BTreeMap<String, f64>),
}

impl WeightSpec {
    pub fn resolve(&self, track: &TrainTrack, path: &str) -> Result<WeightVector, CliError> {
        let w = match self {
            WeightSpec::Preset(name) => match name.as_str() {
                "genus2-track-A/L" => presets::genus2_track_a_weights(),
                "genus2-track-A/M" => presets::genus2_track_a_target(),
                _ => return Err(invalid(path, format!("unknown weight preset `{name}`"))),
            },
            WeightSpec::Map(m) => track
                .weights_from_map(m)
                .map_err(|e| invalid(path, e.to_string()))?,
        };
        if w.len() != track.num_branches() {
            return Err(invalid(
                path,
                format!("{} weights for {} branches", w.len(), track.num_branches()),
            ));
        }
        Ok(w)
    }
}

fn check_samples(samples: usize, path: &str) -> Result<(), CliError> {
    if samples < MIN_SAMPLES {
        return Err(invalid(
            path,
            format!("{samples} samples; at least {MIN_SAMPLES} required"),
        ));
    }
    Ok(())
}

fn check_t_grid(grid: &[f64], path: &str) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(invalid(path, "empty grid"));
    }
    if let Some(t) = grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(invalid(path, format!("t = {t} is not positive")));
    }
    Ok(())
}

fn check_delta(delta: f64, path: &str) -> Result<(), CliError> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(invalid(path, format!("delta = {delta} outside (0, 0.5]")));
    }
    Ok(())
}

/// Command-line overrides shared by all subcommands.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxConfig {
    pub track: TrackSpec,
    pub weights: WeightSpec,
    pub t_grid: Vec<f64>,
}

impl ApproxConfig {
    pub fn resolve(&self) -> Result<(TrainTrack, WeightVector, Vec<f64>), CliError> {
        let track = self.track.resolve("track")?;
        let w = self.weights.resolve(&track, "weights")?;
        check_t_grid(&self.t_grid, "t_grid")?;
        Ok((track, w, self.t_grid.clone()))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SurfaceSpec {
    Preset(String),
    Inline(serde_json::Value),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopSpec {
    pub id: String,
    /// Generator word; when absent the id is looked up in the length table.
    #[serde(default)]
    pub word: Option<String>,
    pub weight: f64,
    /// Branch ids traversed, with repetition.
    pub path: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraftConfig {
    pub surface: SurfaceSpec,
    pub track: TrackSpec,
    pub lamination: WeightSpec,
    #[serde(default)]
    pub loops: Option<Vec<LoopSpec>>,
    /// Integer multiloop added as a `2 pi`-grafting.
    #[serde(default)]
    pub two_pi: Option<BTreeMap<String, i64>>,
}

pub struct GraftInputs {
    pub surface: HyperbolicSurface,
    pub track: TrainTrack,
    pub lamination: WeightVector,
    pub loops: Option<Vec<WeightedLoop>>,
    pub two_pi: Option<IntegerWeights>,
}

impl GraftConfig {
    pub fn resolve(&self) -> Result<GraftInputs, CliError> {
        let surface = match &self.surface {
            SurfaceSpec::Preset(name) if name == "bolza" => {
                presets::bolza().map_err(|e| invalid("surface", e.to_string()))?
            }
            SurfaceSpec::Preset(name) => {
                return Err(invalid(
                    "surface",
                    format!("unknown surface preset `{name}`"),
                ))
            }
            SurfaceSpec::Inline(v) => HyperbolicSurface::from_json(&v.to_string())
                .map_err(|e| invalid("surface", e.to_string()))?,
        };
        let track = self.track.resolve("track")?;
        let lamination = self.lamination.resolve(&track, "lamination")?;
        let loops = match &self.loops {
            None => None,
            Some(specs) => Some(
                specs
                    .iter()
                    .enumerate()
                    .map(|(k, s)| {
                        let path = s
                            .path
                            .iter()
                            .map(|b| {
                                track.branch_index(b).ok_or_else(|| {
                                    invalid(
                                        &format!("loops[{k}].path"),
                                        format!("unknown branch `{b}`"),
                                    )
                                })
                            })
                            .collect::<Result<Vec<_>, _>>()?;
                        let holonomy = match &s.word {
                            Some(w) => LoopRef::Word(w.clone()),
                            None => LoopRef::Id(s.id.clone()),
                        };
                        Ok(WeightedLoop {
                            id: s.id.clone(),
                            holonomy,
                            weight: s.weight,
                            path,
                        })
                    })
                    .collect::<Result<Vec<_>, CliError>>()?,
            ),
        };
        let two_pi = match &self.two_pi {
            None => None,
            Some(m) => {
                let mut n = vec![0i64; track.num_branches()];
                for (id, &k) in m {
                    let i = track
                        .branch_index(id)
                        .ok_or_else(|| invalid("two_pi", format!("unknown branch `{id}`")))?;
                    n[i] = k;
                }
                Some(IntegerWeights(n))
            }
        };
        Ok(GraftInputs {
            surface,
            track,
            lamination,
            loops,
            two_pi,
        })
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomPairs {
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderConfig {
    /// Circles as Hermitian triples `{"a", "b": [re, im], "d"}`.
    #[serde(default)]
    pub pairs: Vec<[Circle; 2]>,
    #[serde(default)]
    pub random: Option<RandomPairs>,
}

impl CylinderConfig {
    pub fn resolve(&self, ov: Overrides) -> Result<Vec<(Circle, Circle)>, CliError> {
        let mut out = Vec::new();
        for (k, [c1, c2]) in self.pairs.iter().enumerate() {
            let check = |c: &Circle, j: usize| {
                Circle::new(c.a, c.b, c.d)
                    .map_err(|e| invalid(&format!("pairs[{k}][{j}]"), e.to_string()))
            };
            out.push((check(c1, 0)?, check(c2, 1)?));
        }
        if let Some(r) = self.random {
            let seed = ov.seed.unwrap_or(r.seed);
            out.extend(
                graftlab::experiments::random_disjoint_pairs(r.count, seed)
                    .map_err(|e| invalid("random", e.to_string()))?,
            );
        }
        if out.is_empty() {
            return Err(invalid("pairs", "no circle pairs given"));
        }
        Ok(out)
    }
}

fn default_xi_deltas() -> Vec<f64> {
    vec![0.1, 0.03, 0.01, 0.003]
}

fn default_eta_deltas() -> Vec<f64> {
    vec![0.1, 0.03, 0.01]
}

fn default_width() -> f64 {
    2.0 * PI
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

fn default_seam_samples() -> usize {
    256
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XiBenchConfig {
    #[serde(default = "default_xi_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn check_deltas(deltas: &[f64]) -> Result<(), CliError> {
    if deltas.is_empty() {
        return Err(invalid("deltas", "empty sweep"));
    }
    for (k, &d) in deltas.iter().enumerate() {
        check_delta(d, &format!("deltas[{k}]"))?;
    }
    Ok(())
}

fn sampler(samples: usize, seed: u64) -> SamplerConfig {
    SamplerConfig {
        samples,
        pairs: samples,
        seed,
        ..Default::default()
    }
}

impl XiBenchConfig {
    pub fn resolve(&self, ov: Overrides) -> Result<(Vec<f64>, f64, u64, SamplerConfig), CliError> {
        check_deltas(&self.deltas)?;
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(invalid(
                "width",
                format!("width {} is not positive", self.width),
            ));
        }
        let samples = ov.samples.unwrap_or(self.samples);
        check_samples(samples, "samples")?;
        let seed = ov.seed.unwrap_or(self.seed);
        Ok((
            self.deltas.clone(),
            self.width,
            seed,
            sampler(samples, seed),
        ))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaBenchConfig {
    #[serde(default = "default_eta_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_width")]
    pub w: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seam_samples")]
    pub seam_samples: usize,
}

impl EtaBenchConfig {
    pub fn resolve(
        &self,
        ov: Overrides,
    ) -> Result<(Vec<f64>, f64, u64, SamplerConfig, usize), CliError> {
        check_deltas(&self.deltas)?;
        if !(self.w > 0.0 && self.w.is_finite()) {
            return Err(invalid("w", format!("width {} is not positive", self.w)));
        }
        let samples = ov.samples.unwrap_or(self.samples);
        check_samples(samples, "samples")?;
        if self.seam_samples == 0 {
            return Err(invalid("seam_samples", "must be positive"));
        }
        let seed = ov.seed.unwrap_or(self.seed);
        Ok((
            self.deltas.clone(),
            self.w,
            seed,
            sampler(samples, seed),
            self.seam_samples,
        ))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QcConfig {
    pub track: TrackSpec,
    #[serde(rename = "L")]
    pub l: WeightSpec,
    #[serde(rename = "M")]
    pub m: WeightSpec,
    /// Per-branch core lengths; missing branches use `2 pi`.
    #[serde(default)]
    pub widths: BTreeMap<String, f64>,
    pub delta: f64,
    pub t_grid: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub pieces: Option<usize>,
    #[serde(default)]
    pub nodes: Option<usize>,
}

impl QcConfig {
    pub fn resolve(&self, ov: Overrides) -> Result<ExperimentSetup, CliError> {
        let track = self.track.resolve("track")?;
        let l = self.l.resolve(&track, "L")?;
        let m = self.m.resolve(&track, "M")?;
        check_delta(self.delta, "delta")?;
        check_t_grid(&self.t_grid, "t_grid")?;
        let samples = ov.samples.unwrap_or(self.samples);
        check_samples(samples, "samples")?;
        let mut widths = vec![DEFAULT_WIDTH; track.num_branches()];
        for (id, &w) in &self.widths {
            let i = track
                .branch_index(id)
                .ok_or_else(|| invalid("widths", format!("unknown branch `{id}`")))?;
            widths[i] = w;
        }
        let seed = ov.seed.unwrap_or(self.seed);
        let synthesis = SynthesisParams {
            delta: self.delta,
            widths,
            pieces: self.pieces.unwrap_or(DEFAULT_PIECES),
            nodes: self.nodes.unwrap_or(DEFAULT_NODES),
            seed,
        };
        synthesis
            .validate(track.num_branches())
            .map_err(|e| invalid("widths", e.to_string()))?;
        Ok(ExperimentSetup {
            track,
            l,
            m,
            synthesis,
            t_grid: self.t_grid.clone(),
            sampler: sampler(samples, seed),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_carries_field_path() {
        let err = parse::<QcConfig>(r#"{"track": "genus2-track-A", "L": "genus2-track-A/L", "M": "genus2-track-A/M", "delta": "x", "t_grid": [1]}"#)
            .unwrap_err();
        match err {
            CliError::Config { path, line, .. } => assert_eq!((path.as_str(), line), ("delta", 1)),
            e => panic!("{e}"),
        }
        let err = parse::<ApproxConfig>(
            "{\n \"track\": \"genus2-track-A\",\n \"weights\": {}, \"t_grid\": [1, \"a\"]}",
        )
        .unwrap_err();
        assert!(
            matches!(err, CliError::Config { ref path, line: 3, .. } if path == "t_grid[1]"),
            "{err}"
        );
    }

    #[test]
    fn ranges_are_enforced() {
        let base = |delta: f64, samples: usize, t: f64| {
            format!(
                r#"{{"track": "genus2-track-A", "L": "genus2-track-A/L", "M": "genus2-track-A/M", "delta": {delta}, "t_grid": [{t}], "samples": {samples}}}"#
            )
        };
        let cfg = |s: String| parse::<QcConfig>(&s).unwrap().resolve(Overrides::default());
        assert!(cfg(base(0.01, 4096, 100.0)).is_ok());
        assert!(
            matches!(cfg(base(0.0, 4096, 100.0)), Err(CliError::Validation { ref path, .. }) if path == "delta")
        );
        assert!(matches!(
            cfg(base(0.6, 4096, 100.0)),
            Err(CliError::Validation { .. })
        ));
        assert!(
            matches!(cfg(base(0.01, 255, 100.0)), Err(CliError::Validation { ref path, .. }) if path == "samples")
        );
        assert!(
            matches!(cfg(base(0.01, 4096, -1.0)), Err(CliError::Validation { ref path, .. }) if path == "t_grid")
        );
    }

    #[test]
    fn ids_resolve() {
        let s = r#"{"track": "genus2-track-A", "weights": {"z1": 1.0}, "t_grid": [1]}"#;
        assert!(matches!(
            parse::<ApproxConfig>(s).unwrap().resolve(),
            Err(CliError::Validation { .. })
        ));
        let s = r#"{"track": "nope", "weights": "genus2-track-A/L", "t_grid": [1]}"#;
        assert!(parse::<ApproxConfig>(s).unwrap().resolve().is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(parse::<XiBenchConfig>(r#"{"detla": [0.1]}"#).is_err());
        assert_eq!(
            parse::<XiBenchConfig>("{}").unwrap().deltas,
            vec![0.1, 0.03, 0.01, 0.003]
        );
    }
}
