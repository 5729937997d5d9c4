use num_complex::Complex64 as Complex;

use super::distortion::PlanarMap;
use super::SupportedRectangle;

/// The rectangle map that is linear in the horizontal coordinate and affine
/// on every vertical leaf, in chart coordinates.
#[derive(Debug, Clone)]
pub struct XiMap {
    pub source: SupportedRectangle,
    pub target: SupportedRectangle,
    ratio: f64,
}

impl XiMap {
    pub fn new(source: SupportedRectangle, target: SupportedRectangle) -> Self {
        let ratio = target.width() / source.width();
        XiMap {
            source,
            target,
            ratio,
        }
    }

    pub fn horizontal(&self, u: f64) -> f64 {
        u * self.ratio
    }

    pub fn apply(&self, p: Complex) -> Complex {
        let (u, v) = (p.re, p.im);
        let u2 = self.horizontal(u);
        let s = (v - self.source.bottom.eval(u)) / self.source.leaf_length(u);
        Complex::new(
            u2,
            self.target.bottom.eval(u2) + s * self.target.leaf_length(u2),
        )
    }

    /// Exact one-sided Jacobian columns `(d/du, d/dv)` away from nodes.
    pub fn jacobian_at(&self, p: Complex) -> (Complex, Complex) {
        let (u, v) = (p.re, p.im);
        let u2 = self.horizontal(u);
        let (src, dst) = (&self.source, &self.target);
        let l = src.leaf_length(u);
        let l2 = dst.leaf_length(u2);
        let s = (v - src.bottom.eval(u)) / l;
        let (fb, dl) = (src.bottom.slope(u), src.top.slope(u) - src.bottom.slope(u));
        let (fb2, dl2) = (
            dst.bottom.slope(u2),
            dst.top.slope(u2) - dst.bottom.slope(u2),
        );
        let stretch = l2 / l;
        let shear = self.ratio * (fb2 + s * dl2) - stretch * (fb + s * dl);
        (Complex::new(self.ratio, shear), Complex::new(0.0, stretch))
    }
}

impl PlanarMap for XiMap {
    fn eval(&self, p: Complex) -> Complex {
        self.apply(p)
    }
}
