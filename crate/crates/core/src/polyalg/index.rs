//! Multi-indices, graded-lex ordering and monomial bases.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

/// Maximum number of variables a multi-index may carry.
pub const MAX_DIM: usize = 32;
/// Maximum total degree of a multi-index.
pub const MAX_DEGREE: u32 = 32;

/// Exponent vector of a monomial.
///
/// Ordered graded-lexicographically: lower total degree first, and within a
/// degree the exponent vectors compare in descending lexicographic order, so
/// that for two variables the degree-two block reads `x1^2, x1*x2, x2^2`.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct MultiIndex(Vec<u8>);

impl MultiIndex {
    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// Unit exponent on variable `v`.
    pub fn unit(dim: usize, v: usize) -> Self {
        let mut e = vec![0; dim];
        e[v] = 1;
        MultiIndex(e)
    }

    pub fn from_exponents(exps: &[u32]) -> Self {
        assert!(exps.len() <= MAX_DIM, "multi-index dimension exceeds {MAX_DIM}");
        let total: u32 = exps.iter().sum();
        assert!(total <= MAX_DEGREE, "multi-index degree exceeds {MAX_DEGREE}");
        MultiIndex(exps.iter().map(|&e| e as u8).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    /// Degree restricted to the listed variable positions.
    pub fn degree_in(&self, vars: &[usize]) -> u32 {
        vars.iter().map(|&v| self.0[v] as u32).sum()
    }

    pub fn exponent(&self, v: usize) -> u32 {
        self.0[v] as u32
    }

    pub fn exponents(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().map(|&e| e as u32)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// Exponent-wise sum.
    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.dim(), other.dim());
        let out: Vec<u8> = self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect();
        debug_assert!(out.iter().map(|&e| e as u32).sum::<u32>() <= MAX_DEGREE);
        MultiIndex(out)
    }

    /// Decrement the exponent of `v`; `None` if it is already zero.
    pub fn decrement(&self, v: usize) -> Option<MultiIndex> {
        if self.0[v] == 0 {
            return None;
        }
        let mut e = self.0.clone();
        e[v] -= 1;
        Some(MultiIndex(e))
    }

    pub fn with_exponent(&self, v: usize, e: u32) -> MultiIndex {
        let mut out = self.0.clone();
        out[v] = e as u8;
        MultiIndex(out)
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// `C(n, k)` as an exact integer.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

fn push_degree(dim: usize, k: u32, prefix: &mut Vec<u8>, out: &mut Vec<MultiIndex>) {
    if prefix.len() + 1 == dim {
        prefix.push(k as u8);
        out.push(MultiIndex(prefix.clone()));
        prefix.pop();
        return;
    }
    for e in (0..=k).rev() {
        prefix.push(e as u8);
        push_degree(dim, k - e, prefix, out);
        prefix.pop();
    }
}

/// All multi-indices in `dim` variables of total degree `<= d`, graded-lex.
pub fn mono_basis(dim: usize, d: u32) -> Vec<MultiIndex> {
    assert!(dim <= MAX_DIM && d <= MAX_DEGREE);
    let mut out = Vec::with_capacity(binomial((dim as u64) + d as u64, d as u64) as usize);
    if dim == 0 {
        out.push(MultiIndex(Vec::new()));
        return out;
    }
    let mut prefix = Vec::with_capacity(dim);
    for k in 0..=d {
        push_degree(dim, k, &mut prefix, &mut out);
    }
    out
}

/// An ordered set of monomials with a reverse lookup table.
#[derive(Clone, Debug)]
pub struct MonomialBasis {
    dim: usize,
    degree: u32,
    monomials: Vec<MultiIndex>,
    index: HashMap<MultiIndex, usize>,
}

impl MonomialBasis {
    /// Every monomial of degree `<= d`.
    pub fn graded(dim: usize, d: u32) -> Self {
        Self::from_monomials(dim, mono_basis(dim, d))
    }

    /// Monomials of degree `<= d` satisfying `keep`, order preserved.
    pub fn filtered(dim: usize, d: u32, keep: impl Fn(&MultiIndex) -> bool) -> Self {
        Self::from_monomials(dim, mono_basis(dim, d).into_iter().filter(|m| keep(m)).collect())
    }

    fn from_monomials(dim: usize, mut monomials: Vec<MultiIndex>) -> Self {
        monomials.sort();
        let degree = monomials.iter().map(MultiIndex::degree).max().unwrap_or(0);
        let index = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        MonomialBasis {
            dim,
            degree,
            monomials,
            index,
        }
    }

    /// Shared graded basis, built once per `(dim, d)`.
    pub fn cached(dim: usize, d: u32) -> Arc<MonomialBasis> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, u32), Arc<MonomialBasis>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("basis cache poisoned");
        guard
            .entry((dim, d))
            .or_insert_with(|| Arc::new(MonomialBasis::graded(dim, d)))
            .clone()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest degree present.
    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn position(&self, m: &MultiIndex) -> Option<usize> {
        self.index.get(m).copied()
    }

    pub fn contains(&self, m: &MultiIndex) -> bool {
        self.index.contains_key(m)
    }

    pub fn monomials(&self) -> &[MultiIndex] {
        &self.monomials
    }

    pub fn get(&self, i: usize) -> &MultiIndex {
        &self.monomials[i]
    }

    /// Sub-basis of monomials with degree `<= d`, keeping order.
    pub fn truncate(&self, d: u32) -> MonomialBasis {
        Self::from_monomials(
            self.dim,
            self.monomials.iter().filter(|m| m.degree() <= d).cloned().collect(),
        )
    }

    /// Sub-basis selected by predicate.
    pub fn select(&self, keep: impl Fn(&MultiIndex) -> bool) -> MonomialBasis {
        Self::from_monomials(
            self.dim,
            self.monomials.iter().filter(|m| keep(m)).cloned().collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grlex_listing_two_vars_degree_three() {
        let b = mono_basis(2, 3);
        let want: Vec<[u32; 2]> = vec![
            [0, 0],
            [1, 0],
            [0, 1],
            [2, 0],
            [1, 1],
            [0, 2],
            [3, 0],
            [2, 1],
            [1, 2],
            [0, 3],
        ];
        let got: Vec<Vec<u32>> = b.iter().map(|m| m.exponents().collect()).collect();
        let want: Vec<Vec<u32>> = want.iter().map(|w| w.to_vec()).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn degree_zero_is_constant_only() {
        for dim in 0..5 {
            let b = mono_basis(dim, 0);
            assert_eq!(b.len(), 1);
            assert!(b[0].is_constant());
        }
    }

    #[test]
    fn four_vars_degree_four_has_seventy() {
        assert_eq!(mono_basis(4, 4).len(), 70);
        assert_eq!(binomial(8, 4), 70);
    }

    #[test]
    fn basis_lengths_match_binomials() {
        for dim in 0..=6usize {
            for d in 0..=10u32 {
                assert_eq!(
                    mono_basis(dim, d).len() as u64,
                    binomial(dim as u64 + d as u64, d as u64),
                    "dim={dim} d={d}"
                );
            }
        }
    }

    #[test]
    fn basis_is_sorted_and_indexed() {
        let b = MonomialBasis::graded(3, 4);
        for w in b.monomials().windows(2) {
            assert!(w[0] < w[1]);
        }
        for (i, m) in b.monomials().iter().enumerate() {
            assert_eq!(b.position(m), Some(i));
        }
    }

    #[test]
    fn supports_thirty_two_variables() {
        let b = mono_basis(32, 1);
        assert_eq!(b.len(), 33);
        let m = MultiIndex::from_exponents(&[1; 32]);
        assert_eq!(m.degree(), 32);
    }
}
