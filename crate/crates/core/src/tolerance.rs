//! Process-wide numeric tolerances.
//!
//! Geometric predicates (incidence, adjacency, intersection) use
//! [`geometric`]; algebraic identities (determinants, sign quotients) use
//! [`algebraic`]. Both can be overridden once at startup, e.g. from a CLI flag.

use std::sync::atomic::{AtomicU64, Ordering};

pub const DEFAULT_GEOMETRIC: f64 = 1e-9;
pub const DEFAULT_ALGEBRAIC: f64 = 1e-12;
/// Threshold on `|tr^2 - 4|` below which a non-identity map is parabolic.
pub const PARABOLIC: f64 = 1e-10;

static GEOMETRIC: AtomicU64 = AtomicU64::new(0x3E11_2E0B_E826_D695); // 1e-9
static ALGEBRAIC: AtomicU64 = AtomicU64::new(0x3D71_9799_812D_EA11); // 1e-12

pub fn geometric() -> f64 {
    f64::from_bits(GEOMETRIC.load(Ordering::Relaxed))
}

pub fn algebraic() -> f64 {
    f64::from_bits(ALGEBRAIC.load(Ordering::Relaxed))
}

pub fn set_geometric(tol: f64) {
    assert!(tol > 0.0 && tol.is_finite(), "tolerance must be positive");
    GEOMETRIC.store(tol.to_bits(), Ordering::Relaxed);
}

pub fn set_algebraic(tol: f64) {
    assert!(tol > 0.0 && tol.is_finite(), "tolerance must be positive");
    ALGEBRAIC.store(tol.to_bits(), Ordering::Relaxed);
}
