//! Diamond hierarchical graphs `D_n^{b,s}`: indexing, paths and overlaps.
//!
//! A level-`n` graph replaces each edge of the level-`(n-1)` graph by `b`
//! parallel branches of `s` edges. Edges are addressed by the sequence of
//! `(branch, segment)` choices from the coarsest level down.

use crate::error::{Error, Result};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

/// Default cap on the number of objects an enumeration may produce.
pub const DEFAULT_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiamondParams {
    pub b: u32,
    pub s: u32,
}

impl DiamondParams {
    pub fn new(b: u32, s: u32) -> Result<Self> {
        if b < 2 || s < 2 {
            return Err(Error::InvalidParameter(format!(
                "need b >= 2 and s >= 2, got b={b}, s={s}"
            )));
        }
        Ok(Self { b, s })
    }

    pub fn symmetric(b: u32) -> Result<Self> {
        Self::new(b, b)
    }

    /// Number of `(i, j)` pairs at one level.
    pub fn radix(&self) -> u64 {
        self.b as u64 * self.s as u64
    }
}

/// An edge of `D_k`, given by its `k` coarse-to-fine `(i, j)` choices (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId {
    pub coords: Vec<(u32, u32)>,
}

impl EdgeId {
    pub fn root() -> Self {
        Self { coords: Vec::new() }
    }

    pub fn level(&self) -> usize {
        self.coords.len()
    }

    /// The edge `a x (i, j)` one level finer.
    pub fn child(&self, i: u32, j: u32) -> Self {
        let mut coords = self.coords.clone();
        coords.push((i, j));
        Self { coords }
    }

    /// Ancestor at level `l`.
    pub fn ancestor(&self, l: usize) -> Self {
        Self {
            coords: self.coords[..l].to_vec(),
        }
    }

    /// Base-`(b s)` serialization, least significant digit at the coarsest level.
    pub fn index(&self, params: DiamondParams) -> u64 {
        let radix = params.radix();
        let mut idx = 0u64;
        let mut place = 1u64;
        for &(i, j) in &self.coords {
            idx += place * ((i as u64 - 1) * params.s as u64 + (j as u64 - 1));
            place *= radix;
        }
        idx
    }

    pub fn from_index(params: DiamondParams, level: usize, mut idx: u64) -> Self {
        let radix = params.radix();
        let coords = (0..level)
            .map(|_| {
                let d = idx % radix;
                idx /= radix;
                ((d / params.s as u64) as u32 + 1, (d % params.s as u64) as u32 + 1)
            })
            .collect();
        Self { coords }
    }
}

/// A non-root vertex: junction `junction` on branch `branch` of the embedded
/// copy of `D_1` that replaces edge `copy`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId {
    pub copy: EdgeId,
    pub branch: u32,
    pub junction: u32,
}

impl VertexId {
    /// Generation `g` such that the vertex lies in `V_g \ V_{g-1}`.
    pub fn generation(&self) -> usize {
        self.copy.level() + 1
    }

    /// Dense index over all non-root vertices of `D_n` for any `n > copy level`.
    pub fn index(&self, params: DiamondParams) -> u64 {
        let per_copy = params.b as u64 * (params.s as u64 - 1);
        let l = self.copy.level() as u32;
        let base = per_copy * geometric_sum(params.radix(), l);
        base + self.copy.index(params) * per_copy
            + (self.branch as u64 - 1) * (params.s as u64 - 1)
            + (self.junction as u64 - 1)
    }
}

fn geometric_sum(radix: u64, terms: u32) -> u64 {
    (0..terms).map(|l| radix.pow(l)).sum()
}

/// A directed path: branch choice plus `s` sub-paths one level finer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DirectedPath {
    Empty,
    Node { branch: u32, subs: Vec<DirectedPath> },
}

impl DirectedPath {
    pub fn level(&self) -> usize {
        match self {
            DirectedPath::Empty => 0,
            DirectedPath::Node { subs, .. } => 1 + subs[0].level(),
        }
    }

    pub fn edges(&self) -> Vec<EdgeId> {
        let mut out = Vec::new();
        self.push_edges(&mut Vec::new(), &mut out);
        out
    }

    fn push_edges(&self, prefix: &mut Vec<(u32, u32)>, out: &mut Vec<EdgeId>) {
        match self {
            DirectedPath::Empty => out.push(EdgeId {
                coords: prefix.clone(),
            }),
            DirectedPath::Node { branch, subs } => {
                for (j, sub) in subs.iter().enumerate() {
                    prefix.push((*branch, j as u32 + 1));
                    sub.push_edges(prefix, out);
                    prefix.pop();
                }
            }
        }
    }

    /// Internal vertices in traversal order (`s^n - 1` of them).
    pub fn vertices(&self) -> Vec<VertexId> {
        let mut out = Vec::new();
        self.push_vertices(&mut Vec::new(), &mut out);
        out
    }

    fn push_vertices(&self, prefix: &mut Vec<(u32, u32)>, out: &mut Vec<VertexId>) {
        if let DirectedPath::Node { branch, subs } = self {
            for (j, sub) in subs.iter().enumerate() {
                prefix.push((*branch, j as u32 + 1));
                sub.push_vertices(prefix, out);
                prefix.pop();
                if j + 1 < subs.len() {
                    out.push(VertexId {
                        copy: EdgeId {
                            coords: prefix.clone(),
                        },
                        branch: *branch,
                        junction: j as u32 + 1,
                    });
                }
            }
        }
    }

    /// Coarse-graining to level `l`: keep the top `l` levels of branch choices.
    pub fn coarsen(&self, l: usize) -> DirectedPath {
        match self {
            _ if l == 0 => DirectedPath::Empty,
            DirectedPath::Empty => DirectedPath::Empty,
            DirectedPath::Node { branch, subs } => DirectedPath::Node {
                branch: *branch,
                subs: subs.iter().map(|p| p.coarsen(l - 1)).collect(),
            },
        }
    }

    /// Structural validity for the given parameters.
    pub fn is_valid(&self, params: DiamondParams, level: usize) -> bool {
        match self {
            DirectedPath::Empty => level == 0,
            DirectedPath::Node { branch, subs } => {
                level > 0
                    && (1..=params.b).contains(branch)
                    && subs.len() == params.s as usize
                    && subs.iter().all(|p| p.is_valid(params, level - 1))
            }
        }
    }
}

/// `(b s)^n`.
pub fn edge_count(params: DiamondParams, n: u32) -> Result<u64> {
    params.radix().checked_pow(n).ok_or(Error::Overflow("edge_count"))
}

/// `|Γ_n|` from `|Γ_0| = 1`, `|Γ_{k+1}| = b |Γ_k|^s`.
pub fn path_count(params: DiamondParams, n: u32) -> Result<u128> {
    let mut count: u128 = 1;
    for _ in 0..n {
        count = count
            .checked_pow(params.s)
            .and_then(|c| c.checked_mul(params.b as u128))
            .ok_or(Error::Overflow("path_count"))?;
    }
    Ok(count)
}

/// Number of non-root vertices of `D_n`.
pub fn vertex_count(params: DiamondParams, n: u32) -> Result<u64> {
    let radix = params.radix();
    let e = radix.checked_pow(n).ok_or(Error::Overflow("vertex_count"))?;
    (params.b as u64 * (params.s as u64 - 1))
        .checked_mul(e - 1)
        .map(|v| v / (radix - 1))
        .ok_or(Error::Overflow("vertex_count"))
}

/// All level-`n` paths in lexicographic order of (branch, sub-paths).
pub fn enumerate_paths(params: DiamondParams, n: u32, cap: u128) -> Result<Vec<DirectedPath>> {
    let needed = path_count(params, n)?;
    if needed > cap {
        return Err(Error::CapExceeded { needed, cap });
    }
    Ok(enumerate_unchecked(params, n))
}

fn enumerate_unchecked(params: DiamondParams, n: u32) -> Vec<DirectedPath> {
    if n == 0 {
        return vec![DirectedPath::Empty];
    }
    let lower = enumerate_unchecked(params, n - 1);
    let s = params.s as usize;
    let combos = lower.len().pow(params.s);
    let mut out = Vec::with_capacity(params.b as usize * combos);
    for branch in 1..=params.b {
        for code in 0..combos {
            // first sub-path slot is the most significant digit
            let mut rest = code;
            let mut subs = vec![DirectedPath::Empty; s];
            for slot in (0..s).rev() {
                subs[slot] = lower[rest % lower.len()].clone();
                rest /= lower.len();
            }
            out.push(DirectedPath::Node { branch, subs });
        }
    }
    out
}

/// All non-root vertices of `D_n`, ordered by generation then index.
pub fn enumerate_vertices(params: DiamondParams, n: u32) -> Vec<VertexId> {
    let mut out = Vec::new();
    for l in 0..n {
        let copies = params.radix().pow(l);
        for idx in 0..copies {
            let copy = EdgeId::from_index(params, l as usize, idx);
            for branch in 1..=params.b {
                for junction in 1..params.s {
                    out.push(VertexId {
                        copy: copy.clone(),
                        branch,
                        junction,
                    });
                }
            }
        }
    }
    out
}

/// Expected number of shared edges of two independent uniform paths.
///
/// Exact enumeration when `|Γ_n|^2 <= cap`, otherwise the product-chain
/// recursion `E_n = (s/b) E_{n-1}`.
pub fn expected_shared_edges(params: DiamondParams, n: u32, cap: u128) -> f64 {
    match shared_edges_exact(params, n, cap) {
        Ok(r) => *r.numer() as f64 / *r.denom() as f64,
        Err(_) => shared_edges_recursive(params, n),
    }
}

pub fn expected_shared_vertices(params: DiamondParams, n: u32, cap: u128) -> f64 {
    match shared_vertices_exact(params, n, cap) {
        Ok(r) => *r.numer() as f64 / *r.denom() as f64,
        Err(_) => shared_vertices_recursive(params, n),
    }
}

pub fn shared_edges_recursive(params: DiamondParams, n: u32) -> f64 {
    (params.s as f64 / params.b as f64).powi(n as i32)
}

/// `V_n = (s - 1 + s V_{n-1}) / b`, `V_0 = 0`.
pub fn shared_vertices_recursive(params: DiamondParams, n: u32) -> f64 {
    let (b, s) = (params.b as f64, params.s as f64);
    (0..n).fold(0.0, |v, _| (s - 1.0 + s * v) / b)
}

/// Exact rational overlap by enumerating ordered path pairs.
pub fn shared_edges_exact(params: DiamondParams, n: u32, cap: u128) -> Result<Ratio<u128>> {
    overlap_exact(params, n, cap, |p| {
        p.edges().iter().map(|e| e.index(params)).collect()
    })
}

pub fn shared_vertices_exact(params: DiamondParams, n: u32, cap: u128) -> Result<Ratio<u128>> {
    overlap_exact(params, n, cap, |p| {
        p.vertices().iter().map(|v| v.index(params)).collect()
    })
}

fn overlap_exact(
    params: DiamondParams,
    n: u32,
    cap: u128,
    keys: impl Fn(&DirectedPath) -> Vec<u64>,
) -> Result<Ratio<u128>> {
    let count = path_count(params, n)?;
    let pairs = count.checked_mul(count).ok_or(Error::Overflow("path pairs"))?;
    if pairs > cap {
        return Err(Error::CapExceeded { needed: pairs, cap });
    }
    let sets: Vec<Vec<u64>> = enumerate_unchecked(params, n)
        .iter()
        .map(|p| {
            let mut k = keys(p);
            k.sort_unstable();
            k
        })
        .collect();
    let mut total: u128 = 0;
    for a in &sets {
        for b in &sets {
            total += sorted_intersection(a, b) as u128;
        }
    }
    Ok(Ratio::new(total, pairs))
}

fn sorted_intersection(a: &[u64], b: &[u64]) -> usize {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

/// Brute-force bond partition function `(1/|Γ_n|) Σ_p Π_{e∈p} (1 + x_e)`,
/// with `x` indexed by serialized level-`n` edge.
pub fn path_sum_bond(params: DiamondParams, n: u32, x: &[f64], cap: u128) -> Result<f64> {
    let paths = enumerate_paths(params, n, cap)?;
    let total: f64 = paths
        .iter()
        .map(|p| {
            p.edges()
                .iter()
                .map(|e| 1.0 + x[e.index(params) as usize])
                .product::<f64>()
        })
        .sum();
    Ok(total / paths.len() as f64)
}

/// Brute-force site partition function with vertex weights `1 + x_v`,
/// `x` indexed by [`VertexId::index`].
pub fn path_sum_site(params: DiamondParams, n: u32, x: &[f64], cap: u128) -> Result<f64> {
    let paths = enumerate_paths(params, n, cap)?;
    let total: f64 = paths
        .iter()
        .map(|p| {
            p.vertices()
                .iter()
                .map(|v| 1.0 + x[v.index(params) as usize])
                .product::<f64>()
        })
        .sum();
    Ok(total / paths.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashMap, HashSet};

    fn p(b: u32, s: u32) -> DiamondParams {
        DiamondParams::new(b, s).unwrap()
    }

    #[test]
    fn counts_match_examples() {
        assert_eq!(edge_count(p(2, 2), 0).unwrap(), 1);
        assert_eq!(edge_count(p(2, 2), 3).unwrap(), 64);
        assert_eq!(edge_count(p(3, 3), 2).unwrap(), 81);
        assert_eq!(path_count(p(2, 2), 1).unwrap(), 2);
        assert_eq!(path_count(p(2, 2), 2).unwrap(), 8);
        assert_eq!(path_count(p(2, 2), 3).unwrap(), 128);
        assert_eq!(vertex_count(p(2, 2), 0).unwrap(), 0);
        assert_eq!(vertex_count(p(3, 3), 1).unwrap(), 6);
        // b(s-1)((bs)^n-1)/(bs-1) = 2*2*35/5
        assert_eq!(vertex_count(p(2, 3), 2).unwrap(), 28);
        assert_eq!(enumerate_vertices(p(2, 3), 2).len(), 28);
    }

    #[test]
    fn overflow_is_reported() {
        assert_eq!(path_count(p(2, 2), 8), Err(Error::Overflow("path_count")));
        assert!(edge_count(p(4, 4), 40).is_err());
        assert!(DiamondParams::new(1, 2).is_err());
    }

    #[test]
    fn enumeration_matches_counts() {
        for (b, s, n) in [(2, 2, 1), (2, 2, 2), (2, 2, 3), (3, 2, 1), (2, 3, 2), (3, 3, 2)] {
            let params = p(b, s);
            let paths = enumerate_paths(params, n, DEFAULT_CAP).unwrap();
            assert_eq!(paths.len() as u128, path_count(params, n).unwrap());
            let distinct: HashSet<Vec<EdgeId>> = paths.iter().map(|q| q.edges()).collect();
            assert_eq!(distinct.len(), paths.len());
        }
        let small = enumerate_paths(p(2, 2), 1, DEFAULT_CAP).unwrap();
        assert_eq!(
            small[0].edges(),
            vec![EdgeId { coords: vec![(1, 1)] }, EdgeId { coords: vec![(1, 2)] }]
        );
        assert!(matches!(
            enumerate_paths(p(2, 2), 5, DEFAULT_CAP),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn vertex_enumeration_matches_formula() {
        for (b, s, n) in [(2, 3, 2), (3, 3, 1), (2, 2, 3)] {
            let params = p(b, s);
            let vs = enumerate_vertices(params, n);
            assert_eq!(vs.len() as u64, vertex_count(params, n).unwrap());
            let idx: HashSet<u64> = vs.iter().map(|v| v.index(params)).collect();
            assert_eq!(idx.len(), vs.len());
            assert_eq!(*idx.iter().max().unwrap() + 1, vs.len() as u64);
        }
    }

    #[test]
    fn path_edges_and_vertices() {
        let params = p(2, 3);
        for q in enumerate_paths(params, 1, DEFAULT_CAP).unwrap() {
            assert_eq!(q.edges().len(), 3);
            assert_eq!(q.vertices().len(), 2);
        }
        for q in enumerate_paths(p(2, 2), 2, DEFAULT_CAP).unwrap() {
            assert_eq!(q.edges().len(), 4);
            assert_eq!(q.vertices().len(), 3);
            for v in q.vertices() {
                assert!(v.generation() <= 2);
            }
        }
    }

    #[test]
    fn uniform_edge_marginal_for_symmetric_graphs() {
        for (b, n) in [(2u32, 1u32), (2, 2), (2, 3), (3, 2)] {
            let params = p(b, b);
            let paths = enumerate_paths(params, n, DEFAULT_CAP).unwrap();
            let mut visits: HashMap<u64, u128> = HashMap::new();
            for q in &paths {
                for e in q.edges() {
                    *visits.entry(e.index(params)).or_default() += 1;
                }
            }
            let expected = paths.len() as u128 / (b as u128).pow(n);
            assert_eq!(visits.len() as u64, edge_count(params, n).unwrap());
            assert!(visits.values().all(|&v| v == expected));
        }
    }

    #[test]
    fn edge_index_round_trip() {
        let params = p(3, 2);
        for idx in 0..edge_count(params, 3).unwrap() {
            let e = EdgeId::from_index(params, 3, idx);
            assert_eq!(e.index(params), idx);
            assert_eq!(e.ancestor(2).child(e.coords[2].0, e.coords[2].1), e);
        }
    }

    #[test]
    fn coarsening_is_a_valid_path() {
        let params = p(2, 2);
        for q in enumerate_paths(params, 3, DEFAULT_CAP).unwrap() {
            for l in 0..=3 {
                let c = q.coarsen(l);
                assert!(c.is_valid(params, l));
                let fine: HashSet<EdgeId> = q.edges().iter().map(|e| e.ancestor(l)).collect();
                let coarse: HashSet<EdgeId> = c.edges().into_iter().collect();
                assert_eq!(fine, coarse);
            }
        }
    }

    #[test]
    fn overlaps() {
        let params = p(2, 2);
        assert_eq!(expected_shared_edges(params, 1, DEFAULT_CAP), 1.0);
        for n in 1..=3 {
            assert_eq!(shared_edges_exact(params, n, 1 << 20).unwrap(), Ratio::from_integer(1));
        }
        let v: Vec<f64> = (1..=4)
            .map(|n| expected_shared_vertices(params, n, 1 << 40))
            .collect();
        assert!(v.windows(2).all(|w| w[1] > w[0]));
        for n in 1..=3u32 {
            let exact = shared_vertices_exact(params, n, 1 << 20).unwrap();
            let rec = shared_vertices_recursive(params, n);
            assert!((*exact.numer() as f64 / *exact.denom() as f64 - rec).abs() < 1e-12);
        }
        let asym = p(3, 2);
        let exact = shared_edges_exact(asym, 2, 1 << 20).unwrap();
        assert_eq!(exact, Ratio::new(4, 9));
        assert!((shared_edges_recursive(asym, 2) - 4.0 / 9.0).abs() < 1e-15);
    }
}
