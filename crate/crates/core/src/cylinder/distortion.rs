//! Sampled bilipschitz, rough-isometry and dilatation estimates for planar
//! maps between flat charts.

use num_complex::Complex64 as Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CylinderError, SupportedRectangle};

/// A map between flat charts.
pub trait PlanarMap: Sync {
    fn eval(&self, p: Complex) -> Complex;
}

impl<F: Fn(Complex) -> Complex + Sync> PlanarMap for F {
    fn eval(&self, p: Complex) -> Complex {
        self(p)
    }
}

/// Where samples are drawn from.
pub trait DomainSampler: Sync {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Complex;
    /// Length scale for the finite-difference step at `p`.
    fn local_scale(&self, p: Complex) -> f64;
    /// Values of `Re`, sorted ascending, across which the map may fail to be
    /// smooth.
    fn kinks(&self) -> &[f64];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub samples: usize,
    pub pairs: usize,
    pub seed: u64,
    /// Finite-difference step relative to the local scale.
    pub step: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            samples: 4096,
            pairs: 4096,
            seed: 0,
            step: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionEstimate {
    pub a_est: f64,
    pub b_est: f64,
    pub k_qc_est: f64,
    pub samples: usize,
    pub seam_max: f64,
    /// Extremes of the sampled Jacobian determinant.
    pub det_min: f64,
    pub det_max: f64,
}

impl DistortionEstimate {
    pub fn identity() -> Self {
        DistortionEstimate {
            a_est: 1.0,
            b_est: 0.0,
            k_qc_est: 1.0,
            samples: 0,
            seam_max: 0.0,
            det_min: 1.0,
            det_max: 1.0,
        }
    }

    /// Piecewise maximum; the estimate of a map assembled from pieces.
    pub fn combine(&self, o: &DistortionEstimate) -> DistortionEstimate {
        DistortionEstimate {
            a_est: self.a_est.max(o.a_est),
            b_est: self.b_est.max(o.b_est),
            k_qc_est: self.k_qc_est.max(o.k_qc_est),
            samples: self.samples + o.samples,
            seam_max: self.seam_max.max(o.seam_max),
            det_min: self.det_min.min(o.det_min),
            det_max: self.det_max.max(o.det_max),
        }
    }

    pub fn orientation_consistent(&self) -> bool {
        self.det_min > 0.0 || self.det_max < 0.0
    }
}

/// Rectangle in its chart.
pub struct RectangleDomain<'a> {
    rect: &'a SupportedRectangle,
    kinks: Vec<f64>,
}

impl<'a> RectangleDomain<'a> {
    pub fn new(rect: &'a SupportedRectangle) -> Self {
        let kinks = (0..rect.nodes()).map(|k| rect.bottom.node(k)).collect();
        RectangleDomain { rect, kinks }
    }

    pub fn with_kinks(mut self, extra: impl IntoIterator<Item = f64>) -> Self {
        self.kinks.extend(extra);
        self.kinks.sort_by(f64::total_cmp);
        self
    }
}

impl DomainSampler for RectangleDomain<'_> {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Complex {
        let u = rng.gen_range(0.0..self.rect.width());
        let s: f64 = rng.gen_range(0.0..1.0);
        Complex::new(u, self.rect.bottom.eval(u) + s * self.rect.leaf_length(u))
    }

    fn local_scale(&self, p: Complex) -> f64 {
        self.rect.leaf_length(p.re).min(self.rect.width())
    }

    fn kinks(&self) -> &[f64] {
        &self.kinks
    }
}

/// Axis-parallel box.
pub struct StripDomain {
    pub re: (f64, f64),
    pub im: (f64, f64),
    pub kinks: Vec<f64>,
}

impl StripDomain {
    pub fn new(re: (f64, f64), im: (f64, f64)) -> Self {
        StripDomain {
            re,
            im,
            kinks: vec![re.0, re.1],
        }
    }

    pub fn with_kink(mut self, k: f64) -> Self {
        self.kinks.push(k);
        self.kinks.sort_by(f64::total_cmp);
        self
    }
}

impl DomainSampler for StripDomain {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Complex {
        Complex::new(
            rng.gen_range(self.re.0..self.re.1),
            rng.gen_range(self.im.0..self.im.1),
        )
    }

    fn local_scale(&self, _p: Complex) -> f64 {
        (self.re.1 - self.re.0).min(self.im.1 - self.im.0)
    }

    fn kinks(&self) -> &[f64] {
        &self.kinks
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sample `i`, moved off kink lines so the difference stencil stays on one piece.
fn sample_point(domain: &dyn DomainSampler, cfg: &SamplerConfig, stream: u64) -> (Complex, f64) {
    let mut rng = rng_for(cfg.seed, stream);
    let mut p = domain.sample(&mut rng);
    let h = cfg.step * domain.local_scale(p);
    let margin = 4.0 * h;
    let kinks = domain.kinks();
    for _ in 0..kinks.len() {
        let i = kinks.partition_point(|&k| k < p.re);
        let near = [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter_map(|j| kinks.get(j))
            .find(|&&k| (p.re - k).abs() < margin);
        let Some(&k) = near else { break };
        p.re = if p.re >= k { k + margin } else { k - margin };
    }
    (p, h)
}

/// `(sigma_1, sigma_2, det)` of the real 2x2 matrix with columns `a`, `b`.
pub fn singular_values(a: Complex, b: Complex) -> (f64, f64, f64) {
    let (m11, m21, m12, m22) = (a.re, a.im, b.re, b.im);
    let e = (m11 + m22) / 2.0;
    let f = (m11 - m22) / 2.0;
    let g = (m21 + m12) / 2.0;
    let h = (m21 - m12) / 2.0;
    let q = e.hypot(h);
    let r = f.hypot(g);
    (q + r, (q - r).abs(), m11 * m22 - m12 * m21)
}

pub fn jacobian(map: &dyn PlanarMap, p: Complex, h: f64) -> (Complex, Complex) {
    let du = (map.eval(p + h) - map.eval(p - h)) / (2.0 * h);
    let dv = (map.eval(p + Complex::new(0.0, h)) - map.eval(p - Complex::new(0.0, h))) / (2.0 * h);
    (du, dv)
}

#[derive(Clone, Copy)]
struct Local {
    a: f64,
    k: f64,
    det_min: f64,
    det_max: f64,
    /// First sample index with a singular Jacobian.
    bad: Option<(usize, Complex)>,
}

impl Local {
    fn merge(self, o: Local) -> Local {
        let bad = match (self.bad, o.bad) {
            (Some(x), Some(y)) => Some(if x.0 <= y.0 { x } else { y }),
            (x, y) => x.or(y),
        };
        Local {
            a: self.a.max(o.a),
            k: self.k.max(o.k),
            det_min: self.det_min.min(o.det_min),
            det_max: self.det_max.max(o.det_max),
            bad,
        }
    }
}

/// Sampled estimates: `A` from the Jacobian singular values and their
/// inverses, `K` from their ratio, `B` from pairwise chart distances. Samples
/// are seeded per index and reduced by maxima, so the result does not depend
/// on the thread count.
pub fn estimate_distortion(
    map: &dyn PlanarMap,
    domain: &dyn DomainSampler,
    cfg: &SamplerConfig,
) -> Result<DistortionEstimate, CylinderError> {
    let init = Local {
        a: 1.0,
        k: 1.0,
        det_min: f64::INFINITY,
        det_max: f64::NEG_INFINITY,
        bad: None,
    };
    let local = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let (p, h) = sample_point(domain, cfg, i as u64);
            let (du, dv) = jacobian(map, p, h);
            let (s1, s2, det) = singular_values(du, dv);
            if !(s2 >= 1e-14) || !s1.is_finite() {
                return Local {
                    bad: Some((i, p)),
                    ..init
                };
            }
            Local {
                a: s1.max(1.0 / s2),
                k: s1 / s2,
                det_min: det,
                det_max: det,
                bad: None,
            }
        })
        .reduce(|| init, Local::merge);
    if let Some((_, p)) = local.bad {
        return Err(CylinderError::SingularJacobian(p.re, p.im));
    }
    let b_est = (0..cfg.pairs)
        .into_par_iter()
        .map(|j| {
            let stream = (1u64 << 40) + j as u64;
            let mut rng = rng_for(cfg.seed, stream);
            let p = domain.sample(&mut rng);
            let q = domain.sample(&mut rng);
            ((map.eval(p) - map.eval(q)).norm() - (p - q).norm()).abs()
        })
        .reduce(|| 0.0, f64::max);
    let (det_min, det_max) = if cfg.samples == 0 {
        (1.0, 1.0)
    } else {
        (local.det_min, local.det_max)
    };
    Ok(DistortionEstimate {
        a_est: local.a,
        b_est,
        k_qc_est: local.k,
        samples: cfg.samples,
        seam_max: 0.0,
        det_min,
        det_max,
    })
}

/// Largest chart displacement `|phi(p) - p|` over the samples.
pub fn sup_displacement(
    map: &dyn PlanarMap,
    domain: &dyn DomainSampler,
    cfg: &SamplerConfig,
) -> f64 {
    (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(cfg.seed, i as u64);
            let p = domain.sample(&mut rng);
            (map.eval(p) - p).norm()
        })
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip() -> StripDomain {
        StripDomain::new((0.0, 6.0), (0.0, 100.0))
    }

    #[test]
    fn identity_is_undistorted() {
        let id = |p: Complex| p;
        let e = estimate_distortion(&id, &strip(), &SamplerConfig::default()).unwrap();
        assert!((e.a_est - 1.0).abs() < 1e-9 && e.b_est < 1e-9 && (e.k_qc_est - 1.0).abs() < 1e-9);
        assert!(e.orientation_consistent());
    }

    #[test]
    fn vertical_stretch() {
        let s = |p: Complex| Complex::new(p.re, 1.005 * p.im);
        let e = estimate_distortion(&s, &strip(), &SamplerConfig::default()).unwrap();
        assert!((e.k_qc_est - 1.005).abs() < 1e-8);
        assert!((e.a_est - 1.005).abs() < 1e-8);
    }

    #[test]
    fn singular_map_reported() {
        let flat = |p: Complex| Complex::new(p.re, 0.0);
        assert!(matches!(
            estimate_distortion(
                &flat,
                &strip(),
                &SamplerConfig {
                    samples: 16,
                    ..Default::default()
                }
            ),
            Err(CylinderError::SingularJacobian(..))
        ));
    }

    #[test]
    fn singular_values_closed_form() {
        // Rotation times diag(3, 2).
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let (s1, s2, det) = singular_values(
            Complex::new(3.0 * c, 3.0 * s),
            Complex::new(-2.0 * s, 2.0 * c),
        );
        assert!((s1 - 3.0).abs() < 1e-14 && (s2 - 2.0).abs() < 1e-14 && (det - 6.0).abs() < 1e-13);
    }

    #[test]
    fn kinks_are_avoided() {
        let d = StripDomain::new((0.0, 2.0), (0.0, 1.0)).with_kink(1.0);
        let cfg = SamplerConfig {
            samples: 2000,
            ..Default::default()
        };
        let fold = |p: Complex| {
            Complex::new(
                if p.re < 1.0 {
                    p.re
                } else {
                    1.0 + 2.0 * (p.re - 1.0)
                },
                p.im,
            )
        };
        let e = estimate_distortion(&fold, &d, &cfg).unwrap();
        assert!((e.a_est - 2.0).abs() < 1e-9);
        assert!((e.k_qc_est - 2.0).abs() < 1e-9);
    }
}
