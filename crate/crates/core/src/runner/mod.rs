//! Configuration, seeded ensembles of random arrangements, parameter scans
//! and result files.

pub mod config;
pub mod ensemble;
pub mod output;
pub mod validate;

pub use config::{
    calibrate_interaction, mhz_to_internal, parse_override, preset, shape_factor, Calibration, ConfigBuilder,
    RunConfig, ScanKind, PAPER_SCALED_STRENGTH, PRESETS, STRONG_MULTIPLIER,
};
pub use ensemble::{
    bin_correlation, correlation_index, nearest_index, realization_rng, run_ensemble, run_realization, scan_pulses, CorrelationBin,
    CurvePoint, EnsembleResult, FailedRealization, PairValue, RealizationCurve, Stability,
};
pub use output::{emit_results, fmt_f64, to_json};
pub use validate::{validate_against_oracle, OracleCheck};
