//! Realizations and their ensemble average.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{calibrate_interaction, shape_factor, Calibration, RunConfig, ScanKind};
use crate::coarse::{blockade_diagnostic, build_partition, SuperatomPartition};
use crate::dynamics::{propagate_observed, Hamiltonian, ManyBodyState, Model, PropagationOptions, PulseShape, PulseSpec, SuperatomModel};
use crate::error::{Error, Result};
use crate::geometry::{central_atom, pair_couplings_with_min, radius_from_density, sample_atom_count, sample_positions};
use crate::observables::{excitation_observables, extract_collective_params, pair_correlation, CollectiveFit};

/// One pair of the correlation function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairValue {
    pub distance: f64,
    pub c: Option<f64>,
    /// Whether the partner atom lies outside the central atom's superatom.
    pub cross: bool,
}

/// Curves of a single random arrangement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RealizationCurve {
    pub index: usize,
    pub n_atoms: usize,
    pub n_superatoms: usize,
    pub n_exc: Vec<f64>,
    pub variance_ratio: Vec<Option<f64>>,
    /// Central-atom correlations at every scan point.
    pub correlation: Vec<Vec<PairValue>>,
    /// Superatoms whose weakest internal pair is below the blockade threshold.
    pub flagged_groups: usize,
    pub steps: usize,
    pub max_norm_drift: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub pulse_area: f64,
    pub n_exc_mean: f64,
    pub n_exc_stderr: f64,
    /// Mean over the realizations where the ratio is defined.
    pub variance_ratio_mean: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CorrelationBin {
    /// Bin centre.
    pub distance_um: f64,
    pub c_mean: f64,
    pub c_stderr: f64,
    pub n_pairs: usize,
}

/// Peak of the averaged curve over subsets of the realizations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stability {
    pub first_half_realizations: usize,
    pub first_half_peak: Option<f64>,
    pub second_half_peak: Option<f64>,
    pub all_peak: f64,
    /// `|first half − all| / all`.
    pub first_half_vs_all: Option<f64>,
    /// `|first half − second half| / all`.
    pub halves: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FailedRealization {
    pub index: usize,
    pub error: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleResult {
    pub config: RunConfig,
    pub calibration: Calibration,
    pub curve: Vec<CurvePoint>,
    /// All partner atoms, including those sharing the central superatom.
    pub correlation: Vec<CorrelationBin>,
    /// Partner atoms in other superatoms only.
    pub cross_correlation: Vec<CorrelationBin>,
    /// Pairs left out because a population was too small.
    pub undefined_pairs: usize,
    pub correlation_area: f64,
    pub fit: Option<CollectiveFit<f64>>,
    pub stability: Stability,
    pub completed: usize,
    pub failed: Vec<FailedRealization>,
    pub mean_atoms: f64,
    pub mean_flagged_groups: f64,
    pub max_norm_drift: f64,
    pub total_steps: usize,
    pub realizations: Option<Vec<RealizationCurve>>,
}

/// Random stream of realization `index`: a function of the master seed and
/// the index only.
pub fn realization_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Pulse of every scan point, in units of `τ_ref`.
pub fn scan_pulses(cfg: &RunConfig) -> Vec<PulseSpec<f64>> {
    let g = shape_factor(cfg.pulse_shape);
    let make = |rabi: f64, tau: f64| {
        let mut p = PulseSpec::new(cfg.pulse_shape, rabi, tau);
        if cfg.pulse_shape == PulseShape::Gaussian {
            p.half_window = cfg.gaussian_half_window;
            p.center = cfg.gaussian_half_window * tau;
        }
        p
    };
    match cfg.scan {
        ScanKind::TauScan => {
            let rabi = cfg.tau_scan_rabi();
            cfg.grid().iter().map(|a| make(rabi, a / (g * rabi))).collect()
        }
        ScanKind::OmegaScan => cfg.grid().iter().map(|a| make(a / g, 1.0)).collect(),
    }
}

/// Grid index nearest to `area`.
pub fn nearest_index(grid: &[f64], area: f64) -> usize {
    let mut best = 0;
    for (i, x) in grid.iter().enumerate() {
        if (x - area).abs() < (grid[best] - area).abs() {
            best = i;
        }
    }
    best
}

/// Scan point of the reported correlation function: `correlation_area` if
/// set, else the first maximum of the averaged curve, else the last point.
pub fn correlation_index(cfg: &RunConfig, fit: Option<&CollectiveFit<f64>>) -> usize {
    let grid = cfg.grid();
    match (cfg.correlation_area, fit) {
        (Some(a), _) => nearest_index(&grid, a),
        (None, Some(f)) => nearest_index(&grid, f.f1),
        (None, None) => grid.len().saturating_sub(1),
    }
}

fn propagation_options(cfg: &RunConfig) -> PropagationOptions<f64> {
    PropagationOptions { method: cfg.method, rtol: cfg.rtol, ..PropagationOptions::default() }
}

/// Draws arrangement `index` and records the excitation curve over the scan.
pub fn run_realization(cfg: &RunConfig, index: usize) -> Result<RealizationCurve> {
    cfg.validate()?;
    let cal = calibrate_interaction(cfg)?;
    realization_with(cfg, &cal, index)
}

fn realization_with(cfg: &RunConfig, cal: &Calibration, index: usize) -> Result<RealizationCurve> {
    let grid = cfg.grid();
    let mut rng = realization_rng(cfg.seed, index);
    let n = if cfg.poissonian { sample_atom_count(cfg.n_atoms as f64, &mut rng)? } else { cfg.n_atoms };
    let mut out = RealizationCurve {
        index,
        n_atoms: n,
        n_superatoms: 0,
        n_exc: vec![0.0; grid.len()],
        variance_ratio: vec![None; grid.len()],
        correlation: vec![Vec::new(); grid.len()],
        flagged_groups: 0,
        steps: 0,
        max_norm_drift: 0.0,
    };
    if n == 0 {
        return Ok(out);
    }
    // The sample volume follows the nominal atom number.
    let radius = match (cfg.radius_um, cfg.density_cm3) {
        (Some(r), _) => r,
        (None, Some(d)) => radius_from_density(cfg.n_atoms, d)?,
        (None, None) => return Err(Error::Config("neither density nor radius given".into())),
    };
    let ensemble = sample_positions(n, radius, &mut rng)?;
    let kappa = pair_couplings_with_min(&ensemble, cal.c6_internal, cfg.min_distance_um)?;
    let (partition, max_excited) = if cal.c6_internal == 0.0 {
        // Without interactions nothing blockades: independent atoms, no
        // truncation.
        (SuperatomPartition::singletons(&kappa), n)
    } else {
        let target = cfg.superatoms.unwrap_or_else(|| crate::coarse::default_target_count(n)).min(n);
        (build_partition(&kappa, target)?, cfg.max_excited.min(target))
    };
    let model = SuperatomModel::new(&partition, max_excited)?;
    let central = central_atom(&ensemble);
    out.n_superatoms = partition.n_superatoms();
    out.flagged_groups = blockade_diagnostic(&partition, &kappa, 1.0, cfg.blockade_multiple).flagged.len();

    let opts = propagation_options(cfg);
    let pulses = scan_pulses(cfg);
    let mut record = |k: usize, psi: &[crate::Amp<f64>]| {
        let obs = excitation_observables(psi, &model, n, grid[k]);
        out.n_exc[k] = obs.n_exc;
        out.variance_ratio[k] = obs.variance_ratio;
        out.correlation[k] = pair_correlation(psi, &model, &partition, &ensemble, central)
            .into_iter()
            .map(|s| PairValue { distance: s.distance, c: s.c_value, cross: s.group_q != s.group_p })
            .collect();
    };
    let mut steps = 0;
    let mut drift: f64 = 0.0;
    if cfg.pulse_shape == PulseShape::Square && cfg.scan == ScanKind::TauScan {
        // Every pulse is a prefix of the longest one.
        let last = pulses.last().expect("grid is nonempty");
        let times: Vec<f64> = pulses.iter().map(|p| p.duration).collect();
        let ham = Hamiltonian::new(&model, *last, 0.0);
        let stats = propagate_observed(&ham, &ManyBodyState::ground(model.dim(), 0.0), &times, &opts, |k, _, psi| record(k, psi))?;
        steps += stats.steps;
        drift = drift.max(stats.max_norm_drift);
    } else {
        for (k, pulse) in pulses.iter().enumerate() {
            let (start, end) = pulse.window();
            let ham = Hamiltonian::new(&model, *pulse, 0.0);
            let stats = propagate_observed(&ham, &ManyBodyState::ground(model.dim(), start), &[end], &opts, |_, _, psi| record(k, psi))?;
            steps += stats.steps;
            drift = drift.max(stats.max_norm_drift);
        }
    }
    out.steps = steps;
    out.max_norm_drift = drift;
    Ok(out)
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn mean_curve(curves: &[&RealizationCurve], len: usize) -> Vec<f64> {
    let mut sum = vec![0.0; len];
    for c in curves {
        for (s, v) in sum.iter_mut().zip(&c.n_exc) {
            *s += v;
        }
    }
    sum.iter().map(|s| s / curves.len() as f64).collect()
}

fn peak(curve: &[f64]) -> f64 {
    curve.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Bins `(distance, c)` pairs by distance.
pub fn bin_correlation<'a>(pairs: impl Iterator<Item = (f64, f64)> + 'a, width: f64) -> Vec<CorrelationBin> {
    let mut bins: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (d, c) in pairs {
        bins.entry((d / width).floor() as u64).or_default().push(c);
    }
    bins.into_iter()
        .map(|(b, vals)| {
            let (c_mean, c_stderr) = mean_and_stderr(&vals);
            CorrelationBin { distance_um: (b as f64 + 0.5) * width, c_mean, c_stderr, n_pairs: vals.len() }
        })
        .collect()
}

/// Runs every realization on a pool of `cfg.workers` threads and averages.
pub fn run_ensemble(cfg: &RunConfig) -> Result<EnsembleResult> {
    cfg.validate()?;
    let cal = calibrate_interaction(cfg)?;
    let work = || -> Vec<Result<RealizationCurve>> {
        (0..cfg.realizations).into_par_iter().map(|k| realization_with(cfg, &cal, k)).collect()
    };
    let outcomes = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {w} workers: {e}")))?
            .install(work),
        None => work(),
    };
    let mut done = Vec::new();
    let mut failed = Vec::new();
    for (index, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(c) => done.push(c),
            Err(e) => failed.push(FailedRealization { index, error: e.to_string() }),
        }
    }
    let total = cfg.realizations;
    if done.is_empty() || failed.len() as f64 > cfg.max_failure_fraction * total as f64 {
        return Err(Error::TooManyFailures { failed: failed.len(), total });
    }
    Ok(aggregate(cfg, cal, done, failed))
}

fn aggregate(cfg: &RunConfig, cal: Calibration, done: Vec<RealizationCurve>, failed: Vec<FailedRealization>) -> EnsembleResult {
    let grid = cfg.grid();
    let r = done.len();
    let all: Vec<&RealizationCurve> = done.iter().collect();
    let means = mean_curve(&all, grid.len());
    let curve = grid
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let vals: Vec<f64> = done.iter().map(|c| c.n_exc[k]).collect();
            let (_, stderr) = mean_and_stderr(&vals);
            let ratios: Vec<f64> = done.iter().filter_map(|c| c.variance_ratio[k]).collect();
            let variance_ratio_mean = (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64);
            CurvePoint { pulse_area: a, n_exc_mean: means[k], n_exc_stderr: stderr, variance_ratio_mean }
        })
        .collect::<Vec<_>>();

    let fit_curve: Vec<(f64, f64)> = curve.iter().map(|p| (p.pulse_area, p.n_exc_mean)).collect();
    let fit = extract_collective_params(&fit_curve, cfg.n_atoms, cfg.domain_convention);

    let corr_at = correlation_index(cfg, fit.as_ref());
    let pairs = || done.iter().flat_map(|c| c.correlation[corr_at].iter());
    let undefined_pairs = pairs().filter(|p| p.c.is_none()).count();
    let correlation = bin_correlation(pairs().filter_map(|p| p.c.map(|c| (p.distance, c))), cfg.correlation_bin_um);
    let cross_correlation =
        bin_correlation(pairs().filter(|p| p.cross).filter_map(|p| p.c.map(|c| (p.distance, c))), cfg.correlation_bin_um);

    let half = r / 2;
    let all_peak = peak(&means);
    let (first_half_peak, second_half_peak) = if half == 0 {
        (None, None)
    } else {
        (Some(peak(&mean_curve(&all[..half], grid.len()))), Some(peak(&mean_curve(&all[half..], grid.len()))))
    };
    let rel = |x: f64| (x / all_peak).abs();
    let stability = Stability {
        first_half_realizations: half,
        first_half_peak,
        second_half_peak,
        all_peak,
        first_half_vs_all: first_half_peak.map(|p| rel(p - all_peak)),
        halves: first_half_peak.zip(second_half_peak).map(|(a, b)| rel(a - b)),
    };

    EnsembleResult {
        config: cfg.clone(),
        calibration: cal,
        curve,
        correlation,
        cross_correlation,
        undefined_pairs,
        correlation_area: grid[corr_at],
        fit,
        stability,
        completed: r,
        failed,
        mean_atoms: done.iter().map(|c| c.n_atoms as f64).sum::<f64>() / r as f64,
        mean_flagged_groups: done.iter().map(|c| c.flagged_groups as f64).sum::<f64>() / r as f64,
        max_norm_drift: done.iter().map(|c| c.max_norm_drift).fold(0.0, f64::max),
        total_steps: done.iter().map(|c| c.steps).sum(),
        realizations: cfg.retain_curves.then_some(done),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::config::ConfigBuilder;

    fn small(extra: &str) -> RunConfig {
        ConfigBuilder::new()
            .toml_str(
                "n_atoms = 8\ndensity_cm3 = 1e11\nscaled_strength = 20.0\nsuperatoms = 4\nmax_excited = 4\n\
                 realizations = 4\narea_start = 0.2\narea_stop = 6.0\narea_points = 30\nretain_curves = true\n",
            )
            .unwrap()
            .toml_str(extra)
            .unwrap()
            .build()
            .unwrap()
    }

    #[test]
    fn streams_depend_on_seed_and_index_only() {
        use rand::Rng;
        let a: u64 = realization_rng(5, 3).random();
        let b: u64 = realization_rng(5, 3).random();
        let c: u64 = realization_rng(5, 4).random();
        let d: u64 = realization_rng(6, 3).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn scan_pulses_hit_the_grid_areas() {
        for extra in ["", "scan = \"omega_scan\"", "pulse_shape = \"gaussian\"", "pulse_shape = \"gaussian\"\nscan = \"omega_scan\""] {
            let cfg = small(extra);
            for (p, a) in scan_pulses(&cfg).iter().zip(cfg.grid()) {
                let (_, end) = p.window();
                assert!((crate::dynamics::pulse_area(p, end) - a).abs() < 1e-9 * a, "{extra}");
            }
            let longest = scan_pulses(&cfg).iter().map(|p| p.duration).fold(0.0, f64::max);
            assert!((longest - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn interactions_off_give_independent_atoms() {
        for extra in ["interaction_multiplier = 0.0", "interaction_multiplier = 0.0\nscan = \"omega_scan\"\nseed = 9"] {
            let cfg = small(extra);
            let res = run_ensemble(&cfg).unwrap();
            for p in &res.curve {
                let expect = 8.0 * (p.pulse_area / 2.0).sin().powi(2);
                assert!((p.n_exc_mean - expect).abs() < 1e-7, "{} {}", p.n_exc_mean, expect);
                assert!(p.n_exc_stderr < 1e-7);
                if let Some(v) = p.variance_ratio_mean {
                    assert!((v - 1.0).abs() < 1e-5, "{v}");
                }
            }
        }
    }

    #[test]
    fn single_realization_is_its_own_average() {
        let cfg = small("realizations = 1");
        let res = run_ensemble(&cfg).unwrap();
        let only = &res.realizations.as_ref().unwrap()[0];
        for (p, v) in res.curve.iter().zip(&only.n_exc) {
            assert_eq!(p.n_exc_mean, *v);
            assert_eq!(p.n_exc_stderr, 0.0);
        }
        assert_eq!(res.stability.first_half_peak, None);
    }

    #[test]
    fn average_is_mean_of_retained_curves() {
        let res = run_ensemble(&small("")).unwrap();
        let curves = res.realizations.as_ref().unwrap();
        for (k, p) in res.curve.iter().enumerate() {
            let m = curves.iter().map(|c| c.n_exc[k]).sum::<f64>() / curves.len() as f64;
            assert!((p.n_exc_mean - m).abs() < 1e-12);
        }
        let direct = run_realization(&small(""), 2).unwrap();
        assert_eq!(&direct, &curves[2]);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let one = run_ensemble(&small("workers = 1")).unwrap();
        let three = run_ensemble(&small("workers = 3")).unwrap();
        assert_eq!(one.curve, three.curve);
        assert_eq!(one.correlation, three.correlation);
    }

    #[test]
    fn correlation_pairs_are_counted() {
        let res = run_ensemble(&small("correlation_area = 3.0")).unwrap();
        let total: usize = res.correlation.iter().map(|b| b.n_pairs).sum();
        assert_eq!(total + res.undefined_pairs, 4 * 7);
        assert!((res.correlation_area - 3.0).abs() < 0.11);
        let cross: usize = res.cross_correlation.iter().map(|b| b.n_pairs).sum();
        assert!(cross <= total);
    }

    #[test]
    fn poissonian_counts_vary() {
        let res = run_ensemble(&small("poissonian = true\nrealizations = 6\nsuperatoms = 3\nmax_excited = 3")).unwrap();
        let ns: Vec<usize> = res.realizations.unwrap().iter().map(|c| c.n_atoms).collect();
        assert!(ns.iter().any(|&n| n != ns[0]), "{ns:?}");
    }

    #[test]
    fn failures_are_counted_and_bounded() {
        // Coincidence guard larger than the sample: every draw fails.
        let err = run_ensemble(&small("min_distance_um = 100.0")).unwrap_err();
        assert!(matches!(err, Error::TooManyFailures { failed: 4, total: 4 }));
    }

    #[test]
    fn binning() {
        let bins = bin_correlation([(0.1, 1.0), (0.4, 3.0), (1.2, 2.0)].into_iter(), 0.5);
        assert_eq!(bins.len(), 2);
        assert_eq!((bins[0].distance_um, bins[0].c_mean, bins[0].n_pairs), (0.25, 2.0, 2));
        assert!((bins[0].c_stderr - 1.0).abs() < 1e-12);
        assert_eq!((bins[1].distance_um, bins[1].n_pairs), (1.25, 1));
    }
}
