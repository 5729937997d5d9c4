//! Projective grafting on closed surfaces, weighted traintracks, round
//! cylinders and sampled quasiconformal distortion of assembled maps.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod cylinder;
pub mod experiments;
pub mod grafting;
pub mod moebius;
pub mod presets;
pub mod tolerance;
pub mod traintrack;
