//! Superatom coarse-graining: greedy merging of the most strongly coupled
//! clusters and the averaged inter-superatom couplings.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::PairCouplings;
use crate::scalar::{from_usize, lit, Real};

/// Disjoint grouping of atoms into superatoms together with the averaged
/// coupling matrix between groups.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuperatomPartition<T: Real> {
    groups: Vec<Vec<usize>>,
    n_atoms: usize,
    /// Row-major `n_sa × n_sa`, zero diagonal.
    k: Vec<T>,
}

#[derive(Serialize)]
struct PartitionDump<'a, T: Real> {
    n_atoms: usize,
    n_superatoms: usize,
    groups: &'a [Vec<usize>],
    member_counts: Vec<usize>,
    k: Vec<Vec<T>>,
}

impl<T: Real> SuperatomPartition<T> {
    /// Every atom its own superatom.
    pub fn singletons(kappa: &PairCouplings<T>) -> Self {
        let n = kappa.n_atoms();
        Self { groups: (0..n).map(|p| vec![p]).collect(), n_atoms: n, k: kappa.as_slice().to_vec() }
    }

    /// Partition from explicit groups; couplings are computed by direct
    /// averaging over cross pairs.
    pub fn from_groups(mut groups: Vec<Vec<usize>>, kappa: &PairCouplings<T>) -> Result<Self> {
        let n = kappa.n_atoms();
        let mut seen = vec![false; n];
        for g in &mut groups {
            if g.is_empty() {
                return Err(Error::InvalidArgument("empty superatom group".into()));
            }
            g.sort_unstable();
            for &p in g.iter() {
                if p >= n {
                    return Err(Error::InvalidArgument(format!("atom index {p} out of range")));
                }
                if seen[p] {
                    return Err(Error::OverlappingGroups(p));
                }
                seen[p] = true;
            }
        }
        if let Some(p) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("atom {p} is not assigned to a group")));
        }
        let m = groups.len();
        let mut k = vec![T::zero(); m * m];
        for i in 0..m {
            for j in (i + 1)..m {
                let v = mean_cross(&groups[i], &groups[j], kappa);
                k[i * m + j] = v;
                k[j * m + i] = v;
            }
        }
        Ok(Self { groups, n_atoms: n, k })
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn n_superatoms(&self) -> usize {
        self.groups.len()
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn member_counts(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    #[inline]
    pub fn coupling(&self, i: usize, j: usize) -> T {
        self.k[i * self.groups.len() + j]
    }

    pub fn coupling_matrix(&self) -> &[T] {
        &self.k
    }

    /// Superatom index of every atom.
    pub fn atom_to_group(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_atoms];
        for (i, g) in self.groups.iter().enumerate() {
            for &p in g {
                out[p] = i;
            }
        }
        out
    }

    /// Couplings multiplied by `factor`; groups unchanged.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            groups: self.groups.clone(),
            n_atoms: self.n_atoms,
            k: self.k.iter().map(|&v| v * factor).collect(),
        }
    }

    /// JSON dump of group membership and the coupling matrix.
    pub fn to_json(&self) -> Result<String> {
        let m = self.groups.len();
        let dump = PartitionDump {
            n_atoms: self.n_atoms,
            n_superatoms: m,
            groups: &self.groups,
            member_counts: self.member_counts(),
            k: self.k.chunks(m.max(1)).map(<[T]>::to_vec).collect(),
        };
        Ok(serde_json::to_string_pretty(&dump)?)
    }
}

fn mean_cross<T: Real>(a: &[usize], b: &[usize], kappa: &PairCouplings<T>) -> T {
    let mut sum = T::zero();
    for &p in a {
        for &q in b {
            sum += kappa.get(p, q);
        }
    }
    sum / from_usize(a.len() * b.len())
}

/// Mean of `κ_pq` over all cross pairs `p ∈ a`, `q ∈ b`.
pub fn superatom_coupling<T: Real>(a: &[usize], b: &[usize], kappa: &PairCouplings<T>) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("superatom groups must be nonempty".into()));
    }
    if let Some(&p) = a.iter().find(|p| b.contains(p)) {
        return Err(Error::OverlappingGroups(p));
    }
    Ok(mean_cross(a, b, kappa))
}

/// Default superatom count for `n` atoms: 23 per 70 atoms, at least one.
pub fn default_target_count(n_atoms: usize) -> usize {
    ((23.0 * n_atoms as f64 / 70.0).round() as usize).clamp(1, n_atoms.max(1))
}

/// Greedy merging from singletons: the pair with the largest `|k_ij|` is
/// fused until `target_count` groups remain. Equal couplings resolve to the
/// lexicographically smallest `(i, j)`.
pub fn build_partition<T: Real>(kappa: &PairCouplings<T>, target_count: usize) -> Result<SuperatomPartition<T>> {
    let n = kappa.n_atoms();
    if target_count == 0 || target_count > n {
        return Err(Error::InvalidArgument(format!(
            "target superatom count {target_count} outside 1..={n}"
        )));
    }
    let mut groups: Vec<Vec<usize>> = (0..n).map(|p| vec![p]).collect();
    // Working matrix keeps its original stride; `alive` maps group slots.
    let mut k = kappa.as_slice().to_vec();
    let mut alive: Vec<usize> = (0..n).collect();

    while alive.len() > target_count {
        let mut best = (0, 1);
        let mut best_abs = -T::one();
        for a in 0..alive.len() {
            for b in (a + 1)..alive.len() {
                let v = k[alive[a] * n + alive[b]].abs();
                if v > best_abs {
                    best_abs = v;
                    best = (a, b);
                }
            }
        }
        let (a, b) = best;
        let (si, sj) = (alive[a], alive[b]);
        let ni: T = from_usize(groups[si].len());
        let nj: T = from_usize(groups[sj].len());
        for &m in &alive {
            if m == si || m == sj {
                continue;
            }
            let merged = (ni * k[si * n + m] + nj * k[sj * n + m]) / (ni + nj);
            k[si * n + m] = merged;
            k[m * n + si] = merged;
        }
        let moved = std::mem::take(&mut groups[sj]);
        groups[si].extend(moved);
        groups[si].sort_unstable();
        alive.remove(b);
    }

    let m = alive.len();
    let mut out_k = vec![T::zero(); m * m];
    for (i, &si) in alive.iter().enumerate() {
        for (j, &sj) in alive.iter().enumerate() {
            if i != j {
                out_k[i * m + j] = k[si * n + sj];
            }
        }
    }
    let out_groups = alive.iter().map(|&s| std::mem::take(&mut groups[s])).collect();
    Ok(SuperatomPartition { groups: out_groups, n_atoms: n, k: out_k })
}

/// Per-group check of the one-excitation-per-superatom assumption.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockadeReport {
    /// Smallest intra-group `|κ|` per group, `None` for singletons.
    pub min_intra: Vec<Option<f64>>,
    /// Groups whose weakest internal pair falls below the threshold.
    pub flagged: Vec<usize>,
    pub threshold: f64,
}

/// Flags groups whose weakest internal coupling is below `multiple × bandwidth`.
pub fn blockade_diagnostic<T: Real>(
    partition: &SuperatomPartition<T>,
    kappa: &PairCouplings<T>,
    bandwidth: T,
    multiple: T,
) -> BlockadeReport {
    let threshold = bandwidth * multiple;
    let mut min_intra = Vec::with_capacity(partition.n_superatoms());
    let mut flagged = Vec::new();
    for (i, g) in partition.groups().iter().enumerate() {
        let mut lo: Option<T> = None;
        for (x, &p) in g.iter().enumerate() {
            for &q in &g[x + 1..] {
                let v = kappa.get(p, q).abs();
                lo = Some(lo.map_or(v, |l| l.min(v)));
            }
        }
        if let Some(v) = lo {
            if v < threshold {
                flagged.push(i);
            }
        }
        min_intra.push(lo.and_then(|v| v.to_f64()));
    }
    BlockadeReport { min_intra, flagged, threshold: threshold.to_f64().unwrap_or(f64::NAN) }
}

/// Default multiple of the bandwidth used by [`blockade_diagnostic`].
pub fn default_blockade_multiple<T: Real>() -> T {
    lit(10.0)
}
