//! Many-body dynamics over the truncated superatom basis.

pub mod basis;
pub mod integrate;
pub mod model;
pub mod pulse;
mod tridiag;

pub use basis::{enumerate_basis, enumerate_basis_capped, truncated_dimension, TruncatedBasis};
pub use integrate::{
    propagate, propagate_observed, ManyBodyState, Method, PropagationOptions, PropagationStats, Trajectory,
};
pub use model::{apply_hamiltonian, diagonal_energy, Hamiltonian, Model, SuperatomModel};
pub use pulse::{gaussian_full_area, pulse_area, PulseShape, PulseSpec};

use crate::scalar::{from_usize, lit, Real};

/// Excitation probability per atom of `n` fully blockaded atoms after a
/// resonant pulse of area `area`: `sin²(√n · area / 2) / n`.
pub fn blockaded_reference<T: Real>(n: usize, area: T) -> T {
    let nf: T = from_usize(n.max(1));
    let s = (nf.sqrt() * area / lit(2.0)).sin();
    s * s / nf
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn blockaded_reference_values() {
        assert!((blockaded_reference(1, PI) - 1.0f64).abs() < 1e-15);
        assert!((blockaded_reference(4, PI / 2.0) - 0.25f64).abs() < 1e-15);
        let n = 9;
        let peak = PI / (n as f64).sqrt();
        assert!((blockaded_reference(n, peak) - 1.0 / 9.0).abs() < 1e-15);
        assert!(blockaded_reference(n, peak * 1.01) < 1.0 / 9.0);
        assert!(blockaded_reference(n, peak * 0.99) < 1.0 / 9.0);
    }
}
