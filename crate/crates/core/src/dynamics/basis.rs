//! Truncated many-body basis over excited-superatom subsets.
//!
//! States are grouped in shells of equal excitation number. Within a shell
//! subsets are ordered colexicographically, which for bitmasks is plain
//! numeric order, so the rank of `{s_0 < s_1 < … < s_{m-1}}` inside its shell
//! is `Σ_j C(s_j, j + 1)`.

use crate::error::{Error, Result};

/// Largest number of superatoms a bitmask state can hold.
pub const MAX_SUPERATOMS: usize = 64;

/// Default cap on the number of amplitudes.
pub const DEFAULT_DIMENSION_CAP: usize = 1 << 27;

#[derive(Clone, Debug)]
pub struct TruncatedBasis {
    n_superatoms: usize,
    max_excited: usize,
    states: Vec<u64>,
    /// `shell_offset[m]` is the ordinal of the first state with `m` excitations.
    shell_offset: Vec<usize>,
    binom: Binomials,
}

#[derive(Clone, Debug)]
struct Binomials {
    table: Vec<u64>,
}

impl Binomials {
    const STRIDE: usize = MAX_SUPERATOMS + 2;

    fn new() -> Self {
        let s = Self::STRIDE;
        let mut table = vec![0u64; (MAX_SUPERATOMS + 1) * s];
        for n in 0..=MAX_SUPERATOMS {
            table[n * s] = 1;
            for k in 1..=n {
                table[n * s + k] = table[(n - 1) * s + k - 1] + if k < n { table[(n - 1) * s + k] } else { 0 };
            }
        }
        Self { table }
    }

    #[inline]
    fn get(&self, n: usize, k: usize) -> usize {
        if k >= Self::STRIDE {
            return 0;
        }
        self.table[n * Self::STRIDE + k] as usize
    }
}

/// Number of subsets of `n` items with at most `m` members, exactly.
pub fn truncated_dimension(n: usize, m: usize) -> u128 {
    let mut c: u128 = 1;
    let mut total: u128 = 0;
    for k in 0..=m.min(n) {
        total += c;
        c = c * (n - k) as u128 / (k + 1) as u128;
    }
    total
}

/// Enumerates every subset of `n_sa` superatoms with at most `max_excited`
/// members.
pub fn enumerate_basis(n_sa: usize, max_excited: usize) -> Result<TruncatedBasis> {
    enumerate_basis_capped(n_sa, max_excited, DEFAULT_DIMENSION_CAP)
}

pub fn enumerate_basis_capped(n_sa: usize, max_excited: usize, cap: usize) -> Result<TruncatedBasis> {
    if n_sa == 0 || n_sa > MAX_SUPERATOMS {
        return Err(Error::InvalidArgument(format!(
            "superatom count must be in 1..={MAX_SUPERATOMS}, got {n_sa}"
        )));
    }
    if max_excited == 0 || max_excited > n_sa {
        return Err(Error::InvalidArgument(format!(
            "maximum excitation number must be in 1..={n_sa}, got {max_excited}"
        )));
    }
    let dimension = truncated_dimension(n_sa, max_excited);
    if dimension > cap as u128 {
        return Err(Error::BasisTooLarge { dimension, cap });
    }
    let binom = Binomials::new();
    let mut states = Vec::with_capacity(dimension as usize);
    let mut shell_offset = Vec::with_capacity(max_excited + 2);
    let limit: u128 = 1u128 << n_sa;
    for m in 0..=max_excited {
        shell_offset.push(states.len());
        if m == 0 {
            states.push(0);
            continue;
        }
        // Gosper's hack walks k-subsets in increasing numeric order.
        let mut s: u128 = (1u128 << m) - 1;
        while s < limit {
            states.push(s as u64);
            let c = s & s.wrapping_neg();
            let r = s + c;
            s = (((r ^ s) >> 2) / c) | r;
        }
    }
    shell_offset.push(states.len());
    Ok(TruncatedBasis { n_superatoms: n_sa, max_excited, states, shell_offset, binom })
}

impl TruncatedBasis {
    pub fn dimension(&self) -> usize {
        self.states.len()
    }

    pub fn n_superatoms(&self) -> usize {
        self.n_superatoms
    }

    pub fn max_excited(&self) -> usize {
        self.max_excited
    }

    /// Bitmask of excited superatoms for every ordinal.
    pub fn states(&self) -> &[u64] {
        &self.states
    }

    #[inline]
    pub fn state(&self, index: usize) -> u64 {
        self.states[index]
    }

    /// Ordinal of a subset, `None` if it lies outside the truncated space.
    pub fn index_of(&self, mask: u64) -> Option<usize> {
        let m = mask.count_ones() as usize;
        if m > self.max_excited || (self.n_superatoms < 64 && mask >> self.n_superatoms != 0) {
            return None;
        }
        let mut rank = self.shell_offset[m];
        let mut rest = mask;
        let mut j = 0;
        while rest != 0 {
            let s = rest.trailing_zeros() as usize;
            rank += self.binom.get(s, j + 1);
            rest &= rest - 1;
            j += 1;
        }
        Some(rank)
    }

    /// Calls `visit(superatom, neighbour_index, raised)` for every single-flip
    /// neighbour of state `index`: `raised == false` for `S ∖ {i}` (i ∈ S),
    /// `raised == true` for `S ∪ {i}` (i ∉ S, only below the top shell).
    #[inline]
    pub fn for_each_link(&self, index: usize, mut visit: impl FnMut(usize, usize, bool)) {
        let mask = self.states[index];
        let m = mask.count_ones() as usize;
        let mut elems = [0usize; MAX_SUPERATOMS];
        let mut rest = mask;
        for e in elems.iter_mut().take(m) {
            *e = rest.trailing_zeros() as usize;
            rest &= rest - 1;
        }
        // prefix_low[p] = Σ_{j<p} C(s_j, j+1)
        // suffix_up[p]   = Σ_{j≥p} C(s_j, j+2)
        // suffix_down[p] = Σ_{j≥p} C(s_j, j)
        let mut prefix_low = [0usize; MAX_SUPERATOMS + 1];
        let mut suffix_up = [0usize; MAX_SUPERATOMS + 1];
        let mut suffix_down = [0usize; MAX_SUPERATOMS + 1];
        for j in 0..m {
            prefix_low[j + 1] = prefix_low[j] + self.binom.get(elems[j], j + 1);
        }
        for j in (0..m).rev() {
            suffix_up[j] = suffix_up[j + 1] + self.binom.get(elems[j], j + 2);
            suffix_down[j] = suffix_down[j + 1] + self.binom.get(elems[j], j);
        }
        let can_raise = m < self.max_excited;
        let up_offset = self.shell_offset[m + 1];
        let down_offset = if m > 0 { self.shell_offset[m - 1] } else { 0 };
        let mut p = 0;
        for i in 0..self.n_superatoms {
            if p < m && elems[p] == i {
                visit(i, down_offset + prefix_low[p] + suffix_down[p + 1], false);
                p += 1;
            } else if can_raise {
                visit(i, up_offset + prefix_low[p] + self.binom.get(i, p + 1) + suffix_up[p], true);
            }
        }
    }
}
