//! Matrix-free Hamiltonians over excitation bases.
//!
//! `H(t) = Σ_S (E_S + Δ n_S) |S⟩⟨S| + (Ω/2) Σ_i w_i (f(t) σ⁺_i + f*(t) σ⁻_i)`
//! where `σ⁺_i` raises unit `i`, `w_i = √N_i` is its collective weight, and
//! `E_S` sums the pair couplings of the excited units.

use std::sync::OnceLock;

use num_complex::Complex;
use rayon::prelude::*;

use super::basis::{enumerate_basis_capped, TruncatedBasis, DEFAULT_DIMENSION_CAP};
use super::pulse::PulseSpec;
use crate::coarse::SuperatomPartition;
use crate::error::Result;
use crate::scalar::{from_usize, lit, Amp, Real};

/// Dimension above which operator application is split across threads.
const PARALLEL_THRESHOLD: usize = 1 << 14;
const CHUNK: usize = 1 << 11;

/// A basis of excitation patterns with single-flip laser links.
pub trait Model<T: Real>: Sync {
    fn dim(&self) -> usize;

    /// Interaction energy of every basis state.
    fn interaction_energies(&self) -> &[T];

    /// Number of two-level units (superatoms or atoms).
    fn n_units(&self) -> usize;

    /// Bitmask of excited units of state `index`.
    fn state_mask(&self, index: usize) -> u64;

    /// Number of excited units in state `index`.
    fn excitation_number(&self, index: usize) -> u32 {
        self.state_mask(index).count_ones()
    }

    /// Collective weight `w_i` of unit `i`.
    fn weights(&self) -> &[T];

    /// Dense neighbour table: entry `s·n + i` is the state reached from `s` by
    /// flipping unit `i`, or `u32::MAX`. Optional fast path for operators.
    fn link_table(&self) -> Option<&[u32]> {
        None
    }

    /// Visits `(unit, neighbour, raised)` for every laser link of `index`;
    /// `raised` is true when the neighbour has unit `unit` excited.
    fn for_each_link(&self, index: usize, visit: impl FnMut(usize, usize, bool));
}

/// Largest neighbour table kept in memory, in entries.
const LINK_TABLE_LIMIT: usize = 1 << 28;
const NO_LINK: u32 = u32::MAX;

/// Superatom dynamics in the truncated excitation basis.
#[derive(Clone, Debug)]
pub struct SuperatomModel<T: Real> {
    basis: TruncatedBasis,
    energies: Vec<T>,
    weights: Vec<T>,
    /// `links[s·n + i]`: state reached from `s` by flipping superatom `i`.
    /// Built on first use; empty when the basis is too large, in which case
    /// ranks are computed on the fly.
    links: OnceLock<Vec<u32>>,
}

impl<T: Real> SuperatomModel<T> {
    pub fn new(partition: &SuperatomPartition<T>, max_excited: usize) -> Result<Self> {
        Self::with_cap(partition, max_excited, DEFAULT_DIMENSION_CAP)
    }

    pub fn with_cap(partition: &SuperatomPartition<T>, max_excited: usize, cap: usize) -> Result<Self> {
        let basis = enumerate_basis_capped(partition.n_superatoms(), max_excited, cap)?;
        let energies = basis.states().par_iter().map(|&s| diagonal_energy(s, partition)).collect();
        let weights = partition.member_counts().into_iter().map(|n| from_usize::<T>(n).sqrt()).collect();
        Ok(Self { basis, energies, weights, links: OnceLock::new() })
    }

    fn links(&self) -> &[u32] {
        self.links.get_or_init(|| {
            let basis = &self.basis;
            let n = basis.n_superatoms();
            let entries = basis.dimension().saturating_mul(n);
            if entries > LINK_TABLE_LIMIT || basis.dimension() >= NO_LINK as usize {
                return Vec::new();
            }
            let mut links = vec![NO_LINK; entries];
            links.par_chunks_mut(n).enumerate().for_each(|(s, row)| {
                basis.for_each_link(s, |i, j, _| row[i] = j as u32);
            });
            links
        })
    }

    pub fn basis(&self) -> &TruncatedBasis {
        &self.basis
    }
}

impl<T: Real> Model<T> for SuperatomModel<T> {
    fn dim(&self) -> usize {
        self.basis.dimension()
    }

    fn interaction_energies(&self) -> &[T] {
        &self.energies
    }

    fn n_units(&self) -> usize {
        self.basis.n_superatoms()
    }

    #[inline]
    fn state_mask(&self, index: usize) -> u64 {
        self.basis.state(index)
    }

    fn weights(&self) -> &[T] {
        &self.weights
    }

    fn link_table(&self) -> Option<&[u32]> {
        let links = self.links();
        (!links.is_empty()).then_some(links)
    }

    #[inline]
    fn for_each_link(&self, index: usize, mut visit: impl FnMut(usize, usize, bool)) {
        let links = self.links();
        if links.is_empty() {
            return self.basis.for_each_link(index, visit);
        }
        let n = self.basis.n_superatoms();
        let mask = self.basis.state(index);
        for (i, &j) in links[index * n..(index + 1) * n].iter().enumerate() {
            if j != NO_LINK {
                visit(i, j as usize, mask & (1u64 << i) == 0);
            }
        }
    }
}

/// Sum of `k_ij` over unordered pairs of excited superatoms in `mask`.
pub fn diagonal_energy<T: Real>(mask: u64, partition: &SuperatomPartition<T>) -> T {
    let mut e = T::zero();
    let mut outer = mask;
    while outer != 0 {
        let i = outer.trailing_zeros() as usize;
        outer &= outer - 1;
        let mut inner = outer;
        while inner != 0 {
            let j = inner.trailing_zeros() as usize;
            inner &= inner - 1;
            e += partition.coupling(i, j);
        }
    }
    e
}

/// Time-dependent Hamiltonian of a model driven by a pulse, with an optional
/// explicit detuning term.
pub struct Hamiltonian<'a, T: Real, M: Model<T>> {
    model: &'a M,
    pulse: PulseSpec<T>,
    diag: Vec<T>,
    max_abs_diag: T,
    weight_sum: T,
}

impl<'a, T: Real, M: Model<T>> Hamiltonian<'a, T, M> {
    pub fn new(model: &'a M, pulse: PulseSpec<T>, detuning: T) -> Self {
        let energies = model.interaction_energies();
        let diag: Vec<T> = if detuning == T::zero() {
            energies.to_vec()
        } else {
            energies
                .iter()
                .enumerate()
                .map(|(s, &e)| e + detuning * lit(model.excitation_number(s) as f64))
                .collect()
        };
        let max_abs_diag = diag.iter().fold(T::zero(), |m, d| m.max(d.abs()));
        let weight_sum = model.weights().iter().copied().sum();
        Self { model, pulse, diag, max_abs_diag, weight_sum }
    }

    pub fn model(&self) -> &M {
        self.model
    }

    pub fn pulse(&self) -> &PulseSpec<T> {
        &self.pulse
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diagonal(&self) -> &[T] {
        &self.diag
    }

    /// Laser matrix element prefactor `(Ω/2) f(t)`.
    pub fn laser_coupling(&self, t: T) -> Complex<T> {
        self.pulse.field(t) * (self.pulse.rabi / lit(2.0))
    }

    /// Gershgorin bound on the spectral radius for a given laser prefactor.
    pub fn spectral_bound(&self, laser: T) -> T {
        self.max_abs_diag + laser.abs() * self.weight_sum
    }

    /// `out = (scale·D + c L⁺ + c* L⁻) x`.
    pub fn apply_parts(&self, diag_scale: T, c: Complex<T>, x: &[Amp<T>], out: &mut [Amp<T>]) {
        // Per-unit coefficients of lowering (`c w_i`) and raising (`c* w_i`)
        // links, seen from the row state.
        let coef: Vec<[Complex<T>; 2]> = self.model.weights().iter().map(|&w| [c * w, c.conj() * w]).collect();
        let table = self.model.link_table();
        let n = self.model.n_units();
        let row = |s: usize| {
            let mut acc = x[s] * (self.diag[s] * diag_scale);
            match table {
                Some(links) => {
                    let mask = self.model.state_mask(s);
                    for (i, (&j, cf)) in links[s * n..(s + 1) * n].iter().zip(&coef).enumerate() {
                        if j != u32::MAX {
                            acc += cf[((mask >> i) & 1 == 0) as usize] * x[j as usize];
                        }
                    }
                }
                None => self.model.for_each_link(s, |i, j, raised| {
                    acc += coef[i][raised as usize] * x[j];
                }),
            }
            acc
        };
        if out.len() >= PARALLEL_THRESHOLD {
            out.par_chunks_mut(CHUNK).enumerate().for_each(|(chunk, block)| {
                let base = chunk * CHUNK;
                for (o, v) in block.iter_mut().enumerate() {
                    *v = row(base + o);
                }
            });
        } else {
            for (s, v) in out.iter_mut().enumerate() {
                *v = row(s);
            }
        }
    }

    /// `out = H(t) x`.
    pub fn apply(&self, t: T, x: &[Amp<T>], out: &mut [Amp<T>]) {
        self.apply_parts(T::one(), self.laser_coupling(t), x, out);
    }

    /// `out = −i H(t) x`, the Schrödinger right-hand side.
    pub fn derivative(&self, t: T, x: &[Amp<T>], out: &mut [Amp<T>]) {
        self.apply(t, x, out);
        for v in out.iter_mut() {
            *v = Complex::new(v.im, -v.re);
        }
    }
}

/// Schrödinger right-hand side `−i H(t) ψ` for a superatom model.
pub fn apply_hamiltonian<T: Real, M: Model<T>>(
    model: &M,
    pulse: &PulseSpec<T>,
    t: T,
    state: &[Amp<T>],
) -> Vec<Amp<T>> {
    let h = Hamiltonian::new(model, *pulse, T::zero());
    let mut out = vec![Complex::new(T::zero(), T::zero()); state.len()];
    h.derivative(t, state, &mut out);
    out
}
