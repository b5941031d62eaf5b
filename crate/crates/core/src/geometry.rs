//! Random atomic arrangements in a spherical sample and their van der Waals
//! pair couplings.
//!
//! Lengths are in micrometres. Coupling strengths carry whatever angular
//! frequency unit the caller picked for `c6_eff`; the runner works in
//! radians per reference pulse duration.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

/// Cubic micrometres per cubic centimetre.
pub const UM3_PER_CM3: f64 = 1.0e12;

/// Default guard on pair separations, in micrometres.
pub const DEFAULT_MIN_DISTANCE: f64 = 1.0e-3;

/// Positions of the atoms of one sample.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtomEnsemble<T: Real> {
    positions: Vec<[T; 3]>,
    radius: T,
}

impl<T: Real> AtomEnsemble<T> {
    /// Builds an ensemble from explicit positions. Every position must lie
    /// inside the sphere of the given radius.
    pub fn new(positions: Vec<[T; 3]>, radius: T) -> Result<Self> {
        if !(radius > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "sample radius must be positive, got {radius}"
            )));
        }
        // Tolerate round-off on points placed exactly on the surface.
        let slack = radius * (T::one() + lit::<T>(64.0) * T::epsilon());
        if let Some(p) = positions.iter().position(|r| norm(r) > slack) {
            return Err(Error::InvalidArgument(format!(
                "atom {p} lies outside the sample sphere of radius {radius}"
            )));
        }
        Ok(Self { positions, radius })
    }

    pub fn positions(&self) -> &[[T; 3]] {
        &self.positions
    }

    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    /// Number density in cm⁻³.
    pub fn density_cm3(&self) -> T {
        from_usize::<T>(self.n_atoms()) / sphere_volume(self.radius) * lit(UM3_PER_CM3)
    }

    pub fn distance(&self, p: usize, q: usize) -> T {
        distance(&self.positions[p], &self.positions[q])
    }

    /// Returns a copy with every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            positions: self
                .positions
                .iter()
                .map(|r| [r[0] * factor, r[1] * factor, r[2] * factor])
                .collect(),
            radius: self.radius * factor,
        }
    }
}

/// Symmetric matrix of pairwise interaction strengths `κ_pq = C̃₆ / R⁶`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairCouplings<T: Real> {
    n: usize,
    kappa: Vec<T>,
    c6_eff: T,
}

impl<T: Real> PairCouplings<T> {
    /// Wraps an explicit symmetric coupling matrix given row-major.
    pub fn from_matrix(n: usize, kappa: Vec<T>) -> Result<Self> {
        if kappa.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "coupling matrix has {} entries, expected {}",
                kappa.len(),
                n * n
            )));
        }
        for p in 0..n {
            if kappa[p * n + p] != T::zero() {
                return Err(Error::InvalidArgument(format!("nonzero self coupling at {p}")));
            }
            for q in 0..p {
                if kappa[p * n + q] != kappa[q * n + p] {
                    return Err(Error::InvalidArgument(format!(
                        "coupling matrix not symmetric at ({p}, {q})"
                    )));
                }
            }
        }
        Ok(Self { n, kappa, c6_eff: T::nan() })
    }

    /// `n × n` zero couplings.
    pub fn zeros(n: usize) -> Self {
        Self { n, kappa: vec![T::zero(); n * n], c6_eff: T::zero() }
    }

    pub fn n_atoms(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize) -> T {
        self.kappa[p * self.n + q]
    }

    /// Effective dispersion coefficient the matrix was built from, NaN if the
    /// matrix was supplied directly.
    pub fn c6_eff(&self) -> T {
        self.c6_eff
    }

    pub fn as_slice(&self) -> &[T] {
        &self.kappa
    }

    /// Every coupling multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            n: self.n,
            kappa: self.kappa.iter().map(|&k| k * factor).collect(),
            c6_eff: self.c6_eff * factor,
        }
    }

    /// Largest |κ| over distinct pairs.
    pub fn max_abs(&self) -> T {
        self.kappa.iter().fold(T::zero(), |m, k| m.max(k.abs()))
    }
}

/// Draws `n` points independently and uniformly from the ball of the given
/// radius.
pub fn sample_positions<T: Real, R: Rng + ?Sized>(
    n: usize,
    radius: T,
    rng: &mut R,
) -> Result<AtomEnsemble<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("atom count must be at least 1".into()));
    }
    if !(radius > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "sample radius must be positive, got {radius}"
        )));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let positions = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let cos_theta: f64 = 2.0 * rng.random::<f64>() - 1.0;
            let phi = two_pi * rng.random::<f64>();
            let r = u.cbrt();
            let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
            [
                radius * lit(r * sin_theta * phi.cos()),
                radius * lit(r * sin_theta * phi.sin()),
                radius * lit(r * cos_theta),
            ]
        })
        .collect();
    Ok(AtomEnsemble { positions, radius })
}

/// Poisson-distributed atom number with the given mean.
pub fn sample_atom_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::InvalidArgument(format!("mean atom number must be positive, got {mean}")));
    }
    let dist = Poisson::new(mean).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let draw: f64 = dist.sample(rng);
    Ok(draw as usize)
}

/// Pair couplings with the default minimum-separation guard.
pub fn pair_couplings<T: Real>(ensemble: &AtomEnsemble<T>, c6_eff: T) -> Result<PairCouplings<T>> {
    pair_couplings_with_min(ensemble, c6_eff, lit(DEFAULT_MIN_DISTANCE))
}

/// `κ_pq = c6_eff / |r_p − r_q|⁶`; pairs closer than `min_distance` are
/// rejected.
pub fn pair_couplings_with_min<T: Real>(
    ensemble: &AtomEnsemble<T>,
    c6_eff: T,
    min_distance: T,
) -> Result<PairCouplings<T>> {
    let n = ensemble.n_atoms();
    let mut kappa = vec![T::zero(); n * n];
    for p in 0..n {
        for q in (p + 1)..n {
            let d = ensemble.distance(p, q);
            if d < min_distance {
                return Err(Error::CoincidentAtoms {
                    p,
                    q,
                    distance: d.to_f64().unwrap_or(f64::NAN),
                    min: min_distance.to_f64().unwrap_or(f64::NAN),
                });
            }
            let d2 = d * d;
            let k = c6_eff / (d2 * d2 * d2);
            kappa[p * n + q] = k;
            kappa[q * n + p] = k;
        }
    }
    Ok(PairCouplings { n, kappa, c6_eff })
}

/// Index of the atom closest to the sample centre; ties go to the lower index.
pub fn central_atom<T: Real>(ensemble: &AtomEnsemble<T>) -> usize {
    let mut best = 0;
    let mut best_r = T::infinity();
    for (i, r) in ensemble.positions.iter().enumerate() {
        let d = norm(r);
        if d < best_r {
            best = i;
            best_r = d;
        }
    }
    best
}

/// Radius of the sphere holding `n` atoms at density `density_cm3`.
pub fn radius_from_density<T: Real>(n: usize, density_cm3: T) -> Result<T> {
    if n == 0 || !(density_cm3 > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "need n >= 1 and positive density, got n = {n}, density = {density_cm3}"
        )));
    }
    let rho_um = density_cm3 / lit(UM3_PER_CM3);
    let v = from_usize::<T>(n) / rho_um;
    Ok((lit::<T>(3.0) * v / (lit::<T>(4.0) * T::PI())).cbrt())
}

/// Median nearest-neighbour distance (μm) of a homogeneous Poisson gas at the
/// given density: the `r` with `exp(−ρ·4πr³/3) = 1/2`.
pub fn median_nearest_neighbor_distance<T: Real>(density_cm3: T) -> T {
    let rho_um = density_cm3 / lit(UM3_PER_CM3);
    (lit::<T>(3.0) * T::LN_2() / (lit::<T>(4.0) * T::PI() * rho_um)).cbrt()
}

pub(crate) fn sphere_volume<T: Real>(radius: T) -> T {
    lit::<T>(4.0 / 3.0) * T::PI() * radius * radius * radius
}

#[inline]
pub(crate) fn norm<T: Real>(r: &[T; 3]) -> T {
    (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()
}

#[inline]
pub(crate) fn distance<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    norm(&d)
}
