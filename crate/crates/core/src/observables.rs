//! Observables of many-body states: excitation number and its fluctuations,
//! superatom populations, pair correlations, and the parameters of the
//! collective oscillation read off an excitation curve.

use serde::{Deserialize, Serialize};

use crate::coarse::SuperatomPartition;
use crate::dynamics::Model;
use crate::geometry::AtomEnsemble;
use crate::scalar::{from_usize, lit, Amp, Real};

/// Populations below this are treated as zero when normalising correlations.
pub const MIN_POPULATION: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservableRecord<T: Real> {
    pub pulse_area: T,
    /// Excitation probability per atom.
    pub p_exc: T,
    /// Expected number of excited atoms.
    pub n_exc: T,
    /// `⟨n⟩` of the excited-unit number.
    pub mean_n: T,
    /// `⟨n²⟩` of the excited-unit number.
    pub mean_n2: T,
    pub variance_ratio: Option<T>,
    /// Excitation probability of every unit.
    pub unit_probabilities: Vec<T>,
}

/// Excitation statistics of `amplitudes` in the basis of `model` for a sample
/// of `n_atoms` atoms.
pub fn excitation_observables<T: Real, M: Model<T>>(
    amplitudes: &[Amp<T>],
    model: &M,
    n_atoms: usize,
    pulse_area: T,
) -> ObservableRecord<T> {
    let mut mean_n = T::zero();
    let mut mean_n2 = T::zero();
    let n_units = model.n_units();
    // Weight per value of every byte of the mask, marginalized to single
    // units at the end: a few adds per state instead of one per excitation.
    let bytes = n_units.div_ceil(8);
    let mut hist = vec![T::zero(); bytes * 256];
    for (s, c) in amplitudes.iter().enumerate() {
        let w = c.norm_sqr();
        if w == T::zero() {
            continue;
        }
        let mask = model.state_mask(s);
        let m: T = lit(mask.count_ones() as f64);
        mean_n += w * m;
        mean_n2 += w * m * m;
        for (b, row) in hist.chunks_exact_mut(256).enumerate() {
            row[((mask >> (8 * b)) & 0xff) as usize] += w;
        }
    }
    let mut unit = vec![T::zero(); n_units];
    for (b, row) in hist.chunks_exact(256).enumerate() {
        for (v, &w) in row.iter().enumerate().skip(1) {
            if w == T::zero() {
                continue;
            }
            let mut rest = v;
            while rest != 0 {
                unit[8 * b + rest.trailing_zeros() as usize] += w;
                rest &= rest - 1;
            }
        }
    }
    let p_exc = if n_atoms == 0 { T::zero() } else { mean_n / from_usize(n_atoms) };
    let mut record = ObservableRecord {
        pulse_area,
        p_exc,
        n_exc: mean_n,
        mean_n,
        mean_n2,
        variance_ratio: None,
        unit_probabilities: unit,
    };
    record.variance_ratio = variance_ratio(&record, n_atoms);
    record
}

/// Ratio of the actual excitation-number spread to the spread of `N`
/// independent atoms with the same excitation probability; `None` when that
/// probability is 0 or 1.
pub fn variance_ratio<T: Real>(record: &ObservableRecord<T>, n_atoms: usize) -> Option<T> {
    let p = record.p_exc;
    let independent = from_usize::<T>(n_atoms) * p * (T::one() - p);
    if n_atoms == 0 || !(independent > T::zero()) {
        return None;
    }
    let actual = (record.mean_n2 - record.mean_n * record.mean_n).max(T::zero());
    Some((actual / independent).sqrt())
}

/// Joint excitation probability of units `i` and `j`.
pub fn unit_pair_probability<T: Real, M: Model<T>>(amplitudes: &[Amp<T>], model: &M, i: usize, j: usize) -> T {
    let both = (1u64 << i) | (1u64 << j);
    amplitudes
        .iter()
        .enumerate()
        .filter(|(s, _)| model.state_mask(*s) & both == both)
        .map(|(_, c)| c.norm_sqr())
        .sum()
}

/// Joint probabilities `P(i, j)` of unit `i` with every unit `j`.
pub fn pair_probabilities_with<T: Real, M: Model<T>>(amplitudes: &[Amp<T>], model: &M, i: usize) -> Vec<T> {
    let mut out = vec![T::zero(); model.n_units()];
    let bit = 1u64 << i;
    for (s, c) in amplitudes.iter().enumerate() {
        let mask = model.state_mask(s);
        if mask & bit == 0 {
            continue;
        }
        let w = c.norm_sqr();
        let mut rest = mask & !bit;
        while rest != 0 {
            out[rest.trailing_zeros() as usize] += w;
            rest &= rest - 1;
        }
    }
    out
}

/// Correlation between the central atom and one other atom.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationSample<T: Real> {
    pub distance: T,
    /// `P(i,j) / (P(i) P(j))`; `None` if a population is too small.
    pub c_value: Option<T>,
    pub atom_p: usize,
    pub atom_q: usize,
    pub group_p: usize,
    pub group_q: usize,
}

/// `c(p, q)` between the atom `central` and every other atom. Atoms sharing
/// the central atom's superatom get zero.
pub fn pair_correlation<T: Real, M: Model<T>>(
    amplitudes: &[Amp<T>],
    model: &M,
    partition: &SuperatomPartition<T>,
    ensemble: &AtomEnsemble<T>,
    central: usize,
) -> Vec<CorrelationSample<T>> {
    let owner = partition.atom_to_group();
    let i = owner[central];
    let singles = excitation_observables(amplitudes, model, partition.n_atoms(), T::zero()).unit_probabilities;
    let joint = pair_probabilities_with(amplitudes, model, i);
    let floor = lit::<T>(MIN_POPULATION);
    (0..ensemble.n_atoms())
        .filter(|&q| q != central)
        .map(|q| {
            let j = owner[q];
            let c_value = if j == i {
                Some(T::zero())
            } else if singles[i] < floor || singles[j] < floor {
                None
            } else {
                Some(joint[j] / (singles[i] * singles[j]))
            };
            CorrelationSample { distance: ensemble.distance(central, q), c_value, atom_p: central, atom_q: q, group_p: i, group_q: j }
        })
        .collect()
}

/// Probabilities of `n = 0..=N` excitations for independent atoms.
pub fn bernoulli_distribution<T: Real>(n_atoms: usize, p: T) -> Vec<T> {
    let q = T::one() - p;
    let mut binom = T::one();
    (0..=n_atoms)
        .map(|k| {
            if k > 0 {
                binom = binom * from_usize::<T>(n_atoms + 1 - k) / from_usize::<T>(k);
            }
            binom * p.powi(k as i32) * q.powi((n_atoms - k) as i32)
        })
        .collect()
}

/// How the blockade-domain size is read from the first maximum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainConvention {
    /// `N_D = N / N_exc`, atoms per excitation.
    #[default]
    AtomsPerExcitation,
    /// `N_D = N_exc / N`.
    ExcitationFraction,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollectiveFit<T: Real> {
    /// Pulse area of the first maximum.
    pub f1: T,
    pub f2: Option<T>,
    /// Excitation probability per atom at the first maximum.
    pub p1: T,
    pub n_exc1: T,
    /// Collective frequency enhancement `π / f1`.
    pub alpha: T,
    pub beta: Option<T>,
    pub n_domain: T,
    pub gamma: T,
    /// `γ` under the other domain convention.
    pub gamma_alt: T,
    pub convention: DomainConvention,
}

/// A refined local maximum of a sampled curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak<T> {
    pub x: T,
    pub y: T,
    pub index: usize,
}

/// Interior local maxima whose prominence is at least `min_prominence`,
/// refined by a parabola through the three samples around each one.
pub fn find_peaks<T: Real>(xs: &[T], ys: &[T], min_prominence: T) -> Vec<Peak<T>> {
    let n = xs.len().min(ys.len());
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if ys[i] > ys[i - 1] {
            // Walk across a flat top.
            let mut j = i;
            while j + 1 < n && ys[j + 1] == ys[i] {
                j += 1;
            }
            if j + 1 < n && ys[j + 1] < ys[i] {
                let top = (i + j) / 2;
                if prominence(ys, top) >= min_prominence {
                    peaks.push(refine(xs, ys, top));
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

fn prominence<T: Real>(ys: &[T], k: usize) -> T {
    let h = ys[k];
    let mut left_min = h;
    for &y in ys[..k].iter().rev() {
        if y > h {
            break;
        }
        left_min = left_min.min(y);
    }
    let mut right_min = h;
    for &y in &ys[k + 1..] {
        if y > h {
            break;
        }
        right_min = right_min.min(y);
    }
    h - left_min.max(right_min)
}

fn refine<T: Real>(xs: &[T], ys: &[T], k: usize) -> Peak<T> {
    let (x0, x1, x2) = (xs[k - 1], xs[k], xs[k + 1]);
    let (y0, y1, y2) = (ys[k - 1], ys[k], ys[k + 1]);
    let num = (x1 - x0) * (x1 - x0) * (y1 - y2) - (x1 - x2) * (x1 - x2) * (y1 - y0);
    let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if den == T::zero() {
        return Peak { x: x1, y: y1, index: k };
    }
    let x = (x1 - lit::<T>(0.5) * num / den).max(x0).min(x2);
    // Lagrange form of the parabola through the three samples.
    let l0 = (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2));
    let l1 = (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2));
    let l2 = (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1));
    Peak { x, y: y0 * l0 + y1 * l1 + y2 * l2, index: k }
}

/// Default minimum prominence of a maximum, as a fraction of the curve maximum.
pub const DEFAULT_PROMINENCE: f64 = 0.02;

/// Reads the collective parameters off an excitation curve
/// `(pulse area, N_exc)`. Returns `None` without any maximum.
pub fn extract_collective_params<T: Real>(
    curve: &[(T, T)],
    n_atoms: usize,
    convention: DomainConvention,
) -> Option<CollectiveFit<T>> {
    let xs: Vec<T> = curve.iter().map(|p| p.0).collect();
    let ys: Vec<T> = curve.iter().map(|p| p.1).collect();
    let top = ys.iter().fold(T::zero(), |m, &y| m.max(y.abs()));
    let peaks = find_peaks(&xs, &ys, top * lit(DEFAULT_PROMINENCE));
    let first = *peaks.first()?;
    let nf: T = from_usize(n_atoms);
    let f1 = first.x;
    let n_exc1 = first.y;
    let alpha = T::PI() / f1;
    let per_excitation = nf / n_exc1;
    let fraction = n_exc1 / nf;
    let (n_domain, other) = match convention {
        DomainConvention::AtomsPerExcitation => (per_excitation, fraction),
        DomainConvention::ExcitationFraction => (fraction, per_excitation),
    };
    let f2 = peaks.get(1).map(|p| p.x);
    Some(CollectiveFit {
        f1,
        f2,
        p1: n_exc1 / nf,
        n_exc1,
        alpha,
        beta: f2.map(|f| f / f1),
        n_domain,
        gamma: alpha / n_domain.sqrt(),
        gamma_alt: alpha / other.sqrt(),
        convention,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{blockaded_reference, SuperatomModel};
    use crate::geometry::PairCouplings;
    use num_complex::Complex;

    fn c(re: f64) -> Amp<f64> {
        Complex::new(re, 0.0)
    }

    fn singles(n: usize, m: usize) -> SuperatomModel<f64> {
        SuperatomModel::new(&SuperatomPartition::singletons(&PairCouplings::zeros(n)), m).unwrap()
    }

    #[test]
    fn ground_state_has_no_excitation() {
        let model = singles(3, 3);
        let mut psi = vec![c(0.0); model.dim()];
        psi[0] = c(1.0);
        let r = excitation_observables(&psi, &model, 3, 0.0);
        assert_eq!((r.p_exc, r.mean_n, r.mean_n2), (0.0, 0.0, 0.0));
        assert_eq!(r.variance_ratio, None);
    }

    #[test]
    fn half_excited_superposition() {
        let model = singles(3, 3);
        let mut psi = vec![c(0.0); model.dim()];
        psi[0] = c(0.5f64.sqrt());
        psi[2] = c(0.5f64.sqrt());
        let r = excitation_observables(&psi, &model, 3, 0.0);
        assert!((r.mean_n - 0.5).abs() < 1e-15);
        assert!((r.mean_n2 - 0.5).abs() < 1e-15);
        assert!((r.unit_probabilities.iter().sum::<f64>() - r.mean_n).abs() < 1e-15);
    }

    #[test]
    fn blockaded_pair_ratio() {
        // N = 2, single excitation shared: |β|² = P·N with P = 1/4.
        let model = singles(2, 2);
        let mut psi = vec![c(0.0); model.dim()];
        psi[0] = c(0.5f64.sqrt());
        psi[1] = c(0.5);
        psi[2] = c(0.5);
        let r = excitation_observables(&psi, &model, 2, 0.0);
        assert!((r.p_exc - 0.25).abs() < 1e-15);
        let ratio = r.variance_ratio.unwrap();
        assert!((ratio - (2.0f64 / 3.0).sqrt()).abs() < 1e-12, "{ratio}");
        let corr = pair_probabilities_with(&psi, &model, 0);
        assert_eq!(corr[1], 0.0);
    }

    /// Product state of independent units with given excitation probabilities.
    fn product_state(model: &SuperatomModel<f64>, probs: &[f64]) -> Vec<Amp<f64>> {
        (0..model.dim())
            .map(|s| {
                let mask = model.state_mask(s);
                let mut a = 1.0;
                for (i, p) in probs.iter().enumerate() {
                    a *= if mask >> i & 1 == 1 { p.sqrt() } else { (1.0 - p).sqrt() };
                }
                c(a)
            })
            .collect()
    }

    #[test]
    fn product_state_moments_are_binomial() {
        let probs = [0.1, 0.35, 0.6, 0.8];
        let model = singles(4, 4);
        let psi = product_state(&model, &probs);
        let r = excitation_observables(&psi, &model, 4, 0.0);
        let mean: f64 = probs.iter().sum();
        let var: f64 = probs.iter().map(|p| p * (1.0 - p)).sum();
        assert!((r.mean_n - mean).abs() < 1e-14);
        assert!((r.mean_n2 - mean * mean - var).abs() < 1e-14);
        for i in 0..4 {
            assert!((r.unit_probabilities[i] - probs[i]).abs() < 1e-14);
            for j in 0..4 {
                if i != j {
                    let pij = unit_pair_probability(&psi, &model, i, j);
                    assert!((pij - probs[i] * probs[j]).abs() < 1e-14);
                }
            }
        }
        let same = product_state(&model, &[0.3; 4]);
        let r = excitation_observables(&same, &model, 4, 0.0);
        assert!((r.variance_ratio.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_of_product_state_is_one() {
        let e = AtomEnsemble::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, -1.5]], 2.0).unwrap();
        let k = PairCouplings::zeros(4);
        let p = SuperatomPartition::from_groups(vec![vec![0, 3], vec![1], vec![2]], &k).unwrap();
        let model = SuperatomModel::new(&p, 3).unwrap();
        let psi = product_state(&model, &[0.2, 0.5, 0.7]);
        let samples = pair_correlation(&psi, &model, &p, &e, 0);
        assert_eq!(samples.len(), 3);
        for s in &samples {
            if s.atom_q == 3 {
                assert_eq!(s.c_value, Some(0.0));
                assert!((s.distance - 1.5).abs() < 1e-15);
            } else {
                assert!((s.c_value.unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn correlation_marks_empty_populations_invalid() {
        let e = AtomEnsemble::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], 1.0).unwrap();
        let p = SuperatomPartition::singletons(&PairCouplings::zeros(2));
        let model = SuperatomModel::new(&p, 2).unwrap();
        let mut psi = vec![c(0.0); model.dim()];
        psi[0] = c(1.0);
        let samples = pair_correlation(&psi, &model, &p, &e, 0);
        assert_eq!(samples[0].c_value, None);
    }

    #[test]
    fn marginal_consistency() {
        let model = singles(5, 3);
        let psi: Vec<Amp<f64>> = (0..model.dim()).map(|s| Complex::new((s as f64 * 0.37).sin(), (s as f64).cos() * 0.2)).collect();
        let n: f64 = psi.iter().map(|x| x.norm_sqr()).sum();
        let psi: Vec<_> = psi.iter().map(|x| x / n.sqrt()).collect();
        for i in 0..5 {
            let joint: f64 = pair_probabilities_with(&psi, &model, i).iter().sum();
            let direct: f64 = (0..model.dim())
                .filter(|&s| model.state_mask(s) >> i & 1 == 1)
                .map(|s| psi[s].norm_sqr() * (model.state_mask(s).count_ones() as f64 - 1.0))
                .sum();
            assert!((joint - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn bernoulli_values_and_moments() {
        assert_eq!(bernoulli_distribution(3, 0.0), vec![1.0, 0.0, 0.0, 0.0]);
        let d = bernoulli_distribution(2, 0.5);
        assert_eq!(d, vec![0.25, 0.5, 0.25]);
        for (n, p) in [(10, 0.3), (70, 0.07), (25, 0.99)] {
            let d = bernoulli_distribution(n, p);
            let total: f64 = d.iter().sum();
            let mean: f64 = d.iter().enumerate().map(|(k, w)| k as f64 * w).sum();
            let second: f64 = d.iter().enumerate().map(|(k, w)| (k * k) as f64 * w).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!((mean - n as f64 * p).abs() < 1e-10);
            assert!((second - mean * mean - n as f64 * p * (1.0 - p)).abs() < 1e-9);
        }
    }

    fn analytic_curve(n: usize, points: usize, max_area: f64) -> Vec<(f64, f64)> {
        (0..=points)
            .map(|i| {
                let a = max_area * i as f64 / points as f64;
                (a, n as f64 * blockaded_reference(n, a))
            })
            .collect()
    }

    #[test]
    fn collective_params_of_blockaded_curve() {
        for n in [2usize, 10, 70] {
            let f1 = std::f64::consts::PI / (n as f64).sqrt();
            let curve = analytic_curve(n, 400, 4.0 * f1);
            let fit = extract_collective_params(&curve, n, DomainConvention::AtomsPerExcitation).unwrap();
            assert!((fit.alpha / (n as f64).sqrt() - 1.0).abs() < 0.01, "n={n} alpha={}", fit.alpha);
            assert!((fit.n_domain / n as f64 - 1.0).abs() < 0.01);
            assert!((fit.gamma - 1.0).abs() < 0.01);
            assert!((fit.beta.unwrap() - 3.0).abs() < 0.01);
            assert!(fit.f2.unwrap() > fit.f1);
        }
    }

    #[test]
    fn single_maximum_leaves_beta_absent() {
        let curve: Vec<(f64, f64)> = (0..=50).map(|i| {
            let x = i as f64 / 50.0 * 3.0;
            (x, (x).sin())
        }).collect();
        let fit = extract_collective_params(&curve, 1, DomainConvention::AtomsPerExcitation).unwrap();
        assert!(fit.beta.is_none());
        assert!((fit.f1 - std::f64::consts::FRAC_PI_2).abs() < 1e-3);
        assert!(extract_collective_params(&[(0.0, 0.0), (1.0, 1.0)], 1, DomainConvention::default()).is_none());
    }

    #[test]
    fn ripple_below_prominence_is_ignored() {
        let mut ys: Vec<f64> = (0..100).map(|i| (i as f64 / 99.0 * 6.0).sin()).collect();
        ys[10] += 0.005;
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let peaks = find_peaks(&xs, &ys, 0.02);
        assert_eq!(peaks.len(), 1);
    }
}
