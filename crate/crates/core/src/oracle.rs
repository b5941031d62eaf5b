//! Exact dynamics over the full `2^N` atomic product basis for small samples,
//! used as ground truth for the superatom approximation.

use serde::Serialize;

use crate::coarse::SuperatomPartition;
use crate::dynamics::{propagate, Hamiltonian, ManyBodyState, Model, PropagationOptions, PulseSpec, SuperatomModel, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{AtomEnsemble, PairCouplings};
use crate::observables::excitation_observables;
use crate::scalar::{lit, Amp, Real};

/// Largest atom number handled by default.
pub const DEFAULT_ORACLE_CAP: usize = 14;

/// Amplitudes indexed directly by atomic excitation bitmasks.
pub type ExactState<T> = ManyBodyState<T>;

/// Two-level atoms with pairwise couplings in the complete product basis.
#[derive(Clone, Debug)]
pub struct ExactModel<T: Real> {
    n: usize,
    energies: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> ExactModel<T> {
    pub fn new(kappa: &PairCouplings<T>) -> Result<Self> {
        Self::with_cap(kappa, DEFAULT_ORACLE_CAP)
    }

    pub fn with_cap(kappa: &PairCouplings<T>, cap: usize) -> Result<Self> {
        let n = kappa.n_atoms();
        if n > cap || n > 30 {
            return Err(Error::OracleTooLarge { n, cap: cap.min(30) });
        }
        if n == 0 {
            return Err(Error::InvalidArgument("exact model needs at least one atom".into()));
        }
        let dim = 1usize << n;
        let mut energies = vec![T::zero(); dim];
        for b in 1..dim {
            let low = b.trailing_zeros() as usize;
            let rest = b & (b - 1);
            let mut e = energies[rest];
            let mut bits = rest;
            while bits != 0 {
                e += kappa.get(low, bits.trailing_zeros() as usize);
                bits &= bits - 1;
            }
            energies[b] = e;
        }
        Ok(Self { n, energies, weights: vec![T::one(); n] })
    }

    pub fn n_atoms(&self) -> usize {
        self.n
    }
}

impl<T: Real> Model<T> for ExactModel<T> {
    fn dim(&self) -> usize {
        self.energies.len()
    }

    fn interaction_energies(&self) -> &[T] {
        &self.energies
    }

    fn n_units(&self) -> usize {
        self.n
    }

    #[inline]
    fn state_mask(&self, index: usize) -> u64 {
        index as u64
    }

    fn weights(&self) -> &[T] {
        &self.weights
    }

    #[inline]
    fn for_each_link(&self, index: usize, mut visit: impl FnMut(usize, usize, bool)) {
        for i in 0..self.n {
            let neighbour = index ^ (1 << i);
            visit(i, neighbour, index >> i & 1 == 0);
        }
    }
}

/// Integration settings tight enough for reference runs.
pub fn oracle_options<T: Real>() -> PropagationOptions<T> {
    PropagationOptions { rtol: lit(1e-11), atol: lit(1e-15), krylov_tol: lit(1e-13), ..PropagationOptions::default() }
}

/// Evolves the atomic ground state under the full pair Hamiltonian and
/// returns the state at every sample time.
pub fn exact_evolve<T: Real>(
    ensemble: &AtomEnsemble<T>,
    kappa: &PairCouplings<T>,
    pulse: &PulseSpec<T>,
    sample_times: &[T],
) -> Result<Trajectory<T>> {
    exact_evolve_with(ensemble, kappa, pulse, sample_times, DEFAULT_ORACLE_CAP, &oracle_options())
}

pub fn exact_evolve_with<T: Real>(
    ensemble: &AtomEnsemble<T>,
    kappa: &PairCouplings<T>,
    pulse: &PulseSpec<T>,
    sample_times: &[T],
    cap: usize,
    opts: &PropagationOptions<T>,
) -> Result<Trajectory<T>> {
    if ensemble.n_atoms() != kappa.n_atoms() {
        return Err(Error::InvalidArgument(format!(
            "ensemble has {} atoms, couplings cover {}",
            ensemble.n_atoms(),
            kappa.n_atoms()
        )));
    }
    pulse.validate()?;
    let model = ExactModel::with_cap(kappa, cap)?;
    let ham = Hamiltonian::new(&model, *pulse, T::zero());
    let start = sample_times.first().map_or(T::zero(), |&t| t.min(pulse.window().0));
    propagate(&ham, &ManyBodyState::ground(model.dim(), start), sample_times, opts)
}

/// Largest deviations between exact and superatom observables along a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeviationReport {
    pub n_times: usize,
    pub p_exc: f64,
    pub mean_n: f64,
    pub mean_n2: f64,
    /// Over superatoms and times.
    pub superatom_probability: f64,
    /// The superatom run was interpolated onto the exact time grid.
    pub resampled: bool,
}

impl DeviationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn max(&self) -> f64 {
        self.p_exc.max(self.mean_n).max(self.mean_n2).max(self.superatom_probability)
    }
}

struct Row {
    t: f64,
    p_exc: f64,
    mean_n: f64,
    mean_n2: f64,
    units: Vec<f64>,
}

fn rows<T: Real, M: Model<T>>(traj: &Trajectory<T>, model: &M, n_atoms: usize, fold: impl Fn(&[T]) -> Vec<f64>) -> Vec<Row> {
    traj.states
        .iter()
        .map(|s| {
            let r = excitation_observables(&s.amplitudes, model, n_atoms, T::zero());
            let f = |x: T| x.to_f64().unwrap_or(f64::NAN);
            Row { t: f(s.time), p_exc: f(r.p_exc), mean_n: f(r.mean_n), mean_n2: f(r.mean_n2), units: fold(&r.unit_probabilities) }
        })
        .collect()
}

fn interpolate(rows: &[Row], t: f64) -> Row {
    let k = rows.partition_point(|r| r.t < t);
    let (a, b) = if k == 0 {
        (&rows[0], &rows[0])
    } else if k >= rows.len() {
        (&rows[rows.len() - 1], &rows[rows.len() - 1])
    } else {
        (&rows[k - 1], &rows[k])
    };
    let w = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 0.0 };
    let mix = |x: f64, y: f64| x + w * (y - x);
    Row {
        t,
        p_exc: mix(a.p_exc, b.p_exc),
        mean_n: mix(a.mean_n, b.mean_n),
        mean_n2: mix(a.mean_n2, b.mean_n2),
        units: a.units.iter().zip(&b.units).map(|(&x, &y)| mix(x, y)).collect(),
    }
}

/// Compares an exact run with a superatom run of the same sample. The exact
/// probability of a superatom is the summed excitation probability of its
/// member atoms.
pub fn compare_superatom<T: Real>(
    exact: &Trajectory<T>,
    exact_model: &ExactModel<T>,
    approx: &Trajectory<T>,
    approx_model: &SuperatomModel<T>,
    partition: &SuperatomPartition<T>,
) -> Result<DeviationReport> {
    let n = exact_model.n_atoms();
    if partition.n_atoms() != n || approx_model.n_units() != partition.n_superatoms() {
        return Err(Error::InvalidArgument("exact model, superatom model and partition disagree".into()));
    }
    if approx.states.is_empty() {
        return Err(Error::InvalidArgument("superatom trajectory is empty".into()));
    }
    let groups = partition.groups().to_vec();
    let exact_rows = rows(exact, exact_model, n, |atoms| {
        groups.iter().map(|g| g.iter().map(|&p| atoms[p].to_f64().unwrap_or(f64::NAN)).sum()).collect()
    });
    let approx_rows = rows(approx, approx_model, n, |u| u.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect());
    let same_grid = exact_rows.len() == approx_rows.len()
        && exact_rows.iter().zip(&approx_rows).all(|(a, b)| (a.t - b.t).abs() <= 1e-12 * a.t.abs().max(1.0));
    let mut report = DeviationReport {
        n_times: exact_rows.len(),
        p_exc: 0.0,
        mean_n: 0.0,
        mean_n2: 0.0,
        superatom_probability: 0.0,
        resampled: !same_grid,
    };
    for (k, e) in exact_rows.iter().enumerate() {
        let a = if same_grid { interpolate(&approx_rows[k..=k], e.t) } else { interpolate(&approx_rows, e.t) };
        report.p_exc = report.p_exc.max((e.p_exc - a.p_exc).abs());
        report.mean_n = report.mean_n.max((e.mean_n - a.mean_n).abs());
        report.mean_n2 = report.mean_n2.max((e.mean_n2 - a.mean_n2).abs());
        for (x, y) in e.units.iter().zip(&a.units) {
            report.superatom_probability = report.superatom_probability.max((x - y).abs());
        }
    }
    Ok(report)
}

/// Per-atom excitation probabilities of an exact state.
pub fn atom_probabilities<T: Real>(state: &[Amp<T>], model: &ExactModel<T>) -> Vec<T> {
    excitation_observables(state, model, model.n_atoms(), T::zero()).unit_probabilities
}
