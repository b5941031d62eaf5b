//! Many-body simulation of collective Rydberg excitation in small ultracold
//! samples.
//!
//! Atoms are placed at random in a sphere, grouped into superatoms that hold
//! at most one excitation each, and driven by a resonant laser pulse. The
//! Schrödinger equation is integrated in a basis of excited-superatom subsets
//! truncated at a maximum excitation number. Results are averaged over random
//! arrangements to give excitation curves, counting statistics and spatial
//! correlation functions.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the runner uses.

pub mod coarse;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod observables;
pub mod oracle;
pub mod runner;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{Amp, Real};

pub type AtomEnsemble = geometry::AtomEnsemble<f64>;
pub type PairCouplings = geometry::PairCouplings<f64>;
pub type SuperatomPartition = coarse::SuperatomPartition<f64>;
pub type PulseSpec = dynamics::PulseSpec<f64>;
pub type ManyBodyState = dynamics::ManyBodyState<f64>;
pub type SuperatomModel = dynamics::SuperatomModel<f64>;
pub type PropagationOptions = dynamics::PropagationOptions<f64>;
pub type ObservableRecord = observables::ObservableRecord<f64>;
pub type CorrelationSample = observables::CorrelationSample<f64>;
pub type CollectiveFit = observables::CollectiveFit<f64>;
pub type ExactModel = oracle::ExactModel<f64>;

pub use runner::{run_ensemble, run_realization, EnsembleResult, RunConfig};
