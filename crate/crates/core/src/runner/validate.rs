//! Superatom runs of one random sample checked against the exact solver.

use serde::Serialize;

use super::config::{calibrate_interaction, shape_factor, RunConfig};
use super::ensemble::realization_rng;
use crate::coarse::{build_partition, SuperatomPartition};
use crate::dynamics::{propagate, Hamiltonian, ManyBodyState, Model, PropagationOptions, PulseShape, PulseSpec, SuperatomModel};
use crate::error::{Error, Result};
use crate::geometry::{pair_couplings_with_min, sample_positions};
use crate::oracle::{compare_superatom, exact_evolve_with, oracle_options, DeviationReport, ExactModel, DEFAULT_ORACLE_CAP};

#[derive(Clone, Debug, Serialize)]
pub struct OracleCheck {
    pub n_atoms: usize,
    pub n_superatoms: usize,
    pub max_excited: usize,
    pub max_abs_kappa: f64,
    pub deviation: DeviationReport,
}

/// Draws realization 0 of `cfg`, propagates one pulse of area
/// `cfg.area_stop` with both the superatom model and the exact solver, and
/// compares them at `cfg.area_points` times. Without `superatoms` every atom
/// is its own unit; `max_excited` is capped at the unit count.
pub fn validate_against_oracle(cfg: &RunConfig) -> Result<OracleCheck> {
    cfg.validate()?;
    let n = cfg.n_atoms;
    if n > DEFAULT_ORACLE_CAP {
        return Err(Error::OracleTooLarge { n, cap: DEFAULT_ORACLE_CAP });
    }
    let cal = calibrate_interaction(cfg)?;
    let mut rng = realization_rng(cfg.seed, 0);
    let ensemble = sample_positions(n, cfg.radius()?, &mut rng)?;
    let kappa = pair_couplings_with_min(&ensemble, cal.c6_internal, cfg.min_distance_um)?;
    let partition = match cfg.superatoms {
        None => SuperatomPartition::singletons(&kappa),
        Some(m) => build_partition(&kappa, m.min(n))?,
    };
    let max_excited = cfg.max_excited.min(partition.n_superatoms());
    let mut pulse = PulseSpec::new(cfg.pulse_shape, cfg.area_stop / shape_factor(cfg.pulse_shape), 1.0);
    if cfg.pulse_shape == PulseShape::Gaussian {
        pulse.half_window = cfg.gaussian_half_window;
        pulse.center = cfg.gaussian_half_window;
    }
    let (start, end) = pulse.window();
    let points = cfg.area_points.max(1);
    let times: Vec<f64> = (1..=points).map(|k| start + (end - start) * k as f64 / points as f64).collect();

    let opts = PropagationOptions { method: cfg.method, ..oracle_options() };
    let exact = exact_evolve_with(&ensemble, &kappa, &pulse, &times, DEFAULT_ORACLE_CAP, &opts)?;
    let exact_model = ExactModel::new(&kappa)?;
    let model = SuperatomModel::new(&partition, max_excited)?;
    let ham = Hamiltonian::new(&model, pulse, 0.0);
    let approx = propagate(&ham, &ManyBodyState::ground(model.dim(), start), &times, &opts)?;
    let deviation = compare_superatom(&exact, &exact_model, &approx, &model, &partition)?;
    Ok(OracleCheck {
        n_atoms: n,
        n_superatoms: partition.n_superatoms(),
        max_excited,
        max_abs_kappa: kappa.max_abs(),
        deviation,
    })
}
