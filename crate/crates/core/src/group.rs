//! Arithmetic over the elementary abelian group Z_p^n.
//!
//! Vectors are explicit residue arrays. Whenever a vector is read as an
//! integer (table indices, lexicographic comparisons) coordinate 0 is the
//! most significant base-p digit, so integer order and lexicographic order
//! coincide.
//!
//! Subgroups are kept in reduced row-echelon form with pivots ordered left to
//! right. That basis is the fixed generator list used to index the elements
//! of a subgroup: `k_i = sum_j i_j * g_j`.

use std::fmt;

use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `p^n` for which subgroup enumeration is allowed.
pub const SUBGROUP_ENUMERATION_CAP: usize = 4096;
/// Largest number of cosets [`Subgroup::coset_representatives`] materializes.
pub const COSET_CAP: usize = 1 << 24;

pub fn is_prime(p: u32) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u32;
    while (d as u64) * (d as u64) <= p as u64 {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// `p^n` as a `usize`, or `None` on overflow.
pub fn checked_pow(p: u32, n: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..n {
        acc = acc.checked_mul(p as usize)?;
    }
    Some(acc)
}

pub(crate) fn pow_or_guard(p: u32, n: usize, cap: usize, what: &'static str) -> Result<usize> {
    match checked_pow(p, n) {
        Some(v) if v <= cap => Ok(v),
        Some(v) => Err(Error::SizeGuard { what, needed: v as u128, cap: cap as u128 }),
        None => Err(Error::SizeGuard { what, needed: u128::MAX, cap: cap as u128 }),
    }
}

/// Returns `d` with `p^d == value`, if any.
pub fn log_p(value: usize, p: u32) -> Option<usize> {
    if value == 0 {
        return None;
    }
    let mut v = value;
    let mut d = 0;
    while v > 1 {
        if !v.is_multiple_of(p as usize) {
            return None;
        }
        v /= p as usize;
        d += 1;
    }
    Some(d)
}

pub(crate) fn check_prime(p: u32) -> Result<()> {
    if is_prime(p) {
        Ok(())
    } else {
        Err(Error::NotPrime(p))
    }
}

fn inv_mod(a: u32, p: u32) -> u32 {
    // Fermat: a^(p-2) mod p
    let mut result: u64 = 1;
    let mut base = a as u64 % p as u64;
    let mut e = p as u64 - 2;
    let m = p as u64;
    while e > 0 {
        if e & 1 == 1 {
            result = result * base % m;
        }
        base = base * base % m;
        e >>= 1;
    }
    result as u32
}

/// Digitwise `a + sign * b (mod p)` on two packed base-p numbers with `len` digits.
pub(crate) fn digitwise_add(a: usize, b: usize, p: u32, len: usize, subtract: bool) -> usize {
    if p == 2 {
        return a ^ b;
    }
    let p = p as usize;
    let mut out = 0usize;
    let mut scale = 1usize;
    let (mut a, mut b) = (a, b);
    for _ in 0..len {
        let da = a % p;
        let db = b % p;
        let d = if subtract { (da + p - db) % p } else { (da + db) % p };
        out += d * scale;
        scale *= p;
        a /= p;
        b /= p;
    }
    out
}

/// An element of Z_p^n.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupVector {
    p: u32,
    coords: Vec<u32>,
}

impl GroupVector {
    pub fn new(p: u32, coords: Vec<u32>) -> Result<Self> {
        check_prime(p)?;
        if let Some(&c) = coords.iter().find(|&&c| c >= p) {
            return Err(Error::InvalidParameter(format!("coordinate {c} not reduced mod {p}")));
        }
        Ok(GroupVector { p, coords })
    }

    pub fn zero(p: u32, n: usize) -> Self {
        GroupVector { p, coords: vec![0; n] }
    }

    /// Parses a digit string such as `"101"`; coordinate 0 comes first.
    pub fn parse(p: u32, digits: &str) -> Result<Self> {
        let coords = digits
            .chars()
            .map(|c| {
                c.to_digit(36)
                    .ok_or_else(|| Error::InvalidParameter(format!("bad digit {c:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        GroupVector::new(p, coords)
    }

    pub fn from_index(p: u32, n: usize, mut index: usize) -> Self {
        let mut coords = vec![0u32; n];
        for c in coords.iter_mut().rev() {
            *c = (index % p as usize) as u32;
            index /= p as usize;
        }
        GroupVector { p, coords }
    }

    pub fn to_index(&self) -> usize {
        self.coords.iter().fold(0usize, |acc, &c| acc * self.p as usize + c as usize)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[u32] {
        &self.coords
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|&c| c == 0)
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.p != other.p || self.n() != other.n() {
            return Err(Error::AmbientMismatch {
                p1: self.p,
                n1: self.n(),
                p2: other.p,
                n2: other.n(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(self.add_unchecked(other))
    }

    pub(crate) fn add_unchecked(&self, other: &Self) -> Self {
        let p = self.p;
        let coords = self.coords.iter().zip(&other.coords).map(|(a, b)| (a + b) % p).collect();
        GroupVector { p, coords }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(self.add_unchecked(&other.neg()))
    }

    pub fn neg(&self) -> Self {
        let p = self.p;
        GroupVector { p, coords: self.coords.iter().map(|&c| (p - c) % p).collect() }
    }

    pub fn scale(&self, s: u32) -> Self {
        let p = self.p;
        GroupVector {
            p,
            coords: self.coords.iter().map(|&c| ((c as u64 * s as u64) % p as u64) as u32).collect(),
        }
    }

    /// `sum_i a_i b_i (mod p)`
    pub fn dot(&self, other: &Self) -> Result<u32> {
        self.check_same(other)?;
        let p = self.p as u64;
        Ok((self.coords.iter().zip(&other.coords).map(|(&a, &b)| a as u64 * b as u64).sum::<u64>() % p)
            as u32)
    }
}

impl fmt::Display for GroupVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.p <= 10 {
            for c in &self.coords {
                write!(f, "{c}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.coords.iter().map(|c| c.to_string()).collect();
            write!(f, "({})", parts.join(","))
        }
    }
}

/// An element `i` of the index system `I = Z_p^d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexVector {
    p: u32,
    digits: Vec<u32>,
}

impl IndexVector {
    pub fn new(p: u32, digits: Vec<u32>) -> Result<Self> {
        let v = GroupVector::new(p, digits)?;
        Ok(IndexVector { p, digits: v.coords })
    }

    pub fn zero(p: u32, d: usize) -> Self {
        IndexVector { p, digits: vec![0; d] }
    }

    /// The `idx`-th index in lexicographic order.
    pub fn from_index(p: u32, d: usize, idx: usize) -> Self {
        let v = GroupVector::from_index(p, d, idx);
        IndexVector { p, digits: v.coords }
    }

    pub fn to_index(&self) -> usize {
        self.digits.iter().fold(0usize, |acc, &c| acc * self.p as usize + c as usize)
    }

    pub fn digits(&self) -> &[u32] {
        &self.digits
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.p != other.p || self.len() != other.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), actual: other.len() });
        }
        let p = self.p;
        Ok(IndexVector {
            p,
            digits: self.digits.iter().zip(&other.digits).map(|(a, b)| (a + b) % p).collect(),
        })
    }
}

/// The permutation `j -> i + j` of `I = Z_p^d`, as a table over `0..p^d`.
///
/// Applied to a tuple `t` indexed by `I`, it gives `(sigma_i t)_j = t_{i+j}`.
pub fn sigma_perm(i: &IndexVector) -> Vec<usize> {
    let p = i.p;
    let d = i.len();
    let size = checked_pow(p, d).expect("index system too large");
    let shift = GroupVector { p, coords: i.digits.clone() }.to_index();
    (0..size).map(|j| digitwise_add(shift, j, p, d, false)).collect()
}

/// Applies `sigma` to a tuple: `out[j] = tuple[sigma[j]]`.
pub fn apply_sigma<T: Clone>(sigma: &[usize], tuple: &[T]) -> Vec<T> {
    sigma.iter().map(|&j| tuple[j].clone()).collect()
}

/// Reduced row echelon form over Z_p. Returns (rows, pivot columns).
fn rref(p: u32, n: usize, mut rows: Vec<Vec<u32>>) -> (Vec<Vec<u32>>, Vec<usize>) {
    let pm = p as u64;
    let mut rank = 0;
    let mut pivots = Vec::new();
    for col in 0..n {
        let Some(r) = (rank..rows.len()).find(|&r| rows[r][col] != 0) else {
            continue;
        };
        rows.swap(rank, r);
        let inv = inv_mod(rows[rank][col], p) as u64;
        for v in rows[rank].iter_mut() {
            *v = ((*v as u64 * inv) % pm) as u32;
        }
        let pivot_row = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r == rank || row[col] == 0 {
                continue;
            }
            let f = row[col] as u64;
            for (v, &pv) in row.iter_mut().zip(&pivot_row) {
                *v = ((*v as u64 + pm * pm - f * pv as u64) % pm) as u32;
            }
        }
        pivots.push(col);
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rows.truncate(rank);
    (rows, pivots)
}

/// A subgroup of Z_p^n stored by its canonical (reduced echelon) basis.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Subgroup {
    p: u32,
    n: usize,
    basis: Vec<GroupVector>,
    pivots: Vec<usize>,
}

impl Subgroup {
    /// Canonical basis of the span of `generators` inside Z_p^n.
    pub fn span(p: u32, n: usize, generators: &[GroupVector]) -> Result<Self> {
        check_prime(p)?;
        for g in generators {
            if g.p != p || g.n() != n {
                return Err(Error::AmbientMismatch { p1: p, n1: n, p2: g.p, n2: g.n() });
            }
        }
        let rows = generators.iter().map(|g| g.coords.clone()).collect();
        let (rows, pivots) = rref(p, n, rows);
        let basis = rows.into_iter().map(|coords| GroupVector { p, coords }).collect();
        Ok(Subgroup { p, n, basis, pivots })
    }

    pub fn trivial(p: u32, n: usize) -> Result<Self> {
        Subgroup::span(p, n, &[])
    }

    pub fn full(p: u32, n: usize) -> Result<Self> {
        let gens: Vec<GroupVector> = (0..n)
            .map(|j| {
                let mut c = vec![0; n];
                c[j] = 1;
                GroupVector { p, coords: c }
            })
            .collect();
        Subgroup::span(p, n, &gens)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn basis(&self) -> &[GroupVector] {
        &self.basis
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `p^dim`; panics if it does not fit in a `usize`.
    pub fn order(&self) -> usize {
        checked_pow(self.p, self.dim()).expect("subgroup order overflows usize")
    }

    /// Lexicographic minimum of the coset `v + K`.
    pub fn reduce(&self, v: &GroupVector) -> GroupVector {
        let p = self.p as u64;
        let mut coords = v.coords.clone();
        for (g, &c) in self.basis.iter().zip(&self.pivots) {
            let f = coords[c] as u64;
            if f == 0 {
                continue;
            }
            for (x, &gx) in coords.iter_mut().zip(&g.coords) {
                *x = ((*x as u64 + p * p - f * gx as u64) % p) as u32;
            }
        }
        GroupVector { p: self.p, coords }
    }

    pub fn contains(&self, v: &GroupVector) -> bool {
        v.p == self.p && v.n() == self.n && self.reduce(v).is_zero()
    }

    pub fn is_subgroup_of(&self, other: &Subgroup) -> bool {
        self.p == other.p && self.n == other.n && self.basis.iter().all(|g| other.contains(g))
    }

    /// `k_i = sum_j i_j g_j`.
    pub fn element_at(&self, i: &IndexVector) -> Result<GroupVector> {
        if i.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: i.len() });
        }
        let mut acc = GroupVector::zero(self.p, self.n);
        for (g, &c) in self.basis.iter().zip(&i.digits) {
            if c != 0 {
                acc = acc.add_unchecked(&g.scale(c));
            }
        }
        Ok(acc)
    }

    /// Element with lexicographic index `idx` in `0..order()`.
    pub fn element_at_index(&self, idx: usize) -> GroupVector {
        let i = IndexVector::from_index(self.p, self.dim(), idx);
        self.element_at(&i).expect("dimension matches by construction")
    }

    /// Index of `k` in the index system, if `k` is in the subgroup.
    pub fn index_of(&self, k: &GroupVector) -> Option<IndexVector> {
        if !self.contains(k) {
            return None;
        }
        let digits = self.pivots.iter().map(|&c| k.coords[c]).collect();
        Some(IndexVector { p: self.p, digits })
    }

    /// All elements in index order.
    pub fn elements(&self) -> Vec<GroupVector> {
        (0..self.order()).map(|i| self.element_at_index(i)).collect()
    }

    /// Lexicographic minima of all cosets, sorted; the first one is `0^n`.
    pub fn coset_representatives(&self) -> Result<Vec<GroupVector>> {
        let count = pow_or_guard(self.p, self.n - self.dim(), COSET_CAP, "coset representatives")?;
        // The lexicographic minima are exactly the vectors vanishing on every pivot column.
        let free: Vec<usize> = (0..self.n).filter(|c| !self.pivots.contains(c)).collect();
        let mut reps: Vec<GroupVector> = (0..count)
            .map(|idx| {
                let q = GroupVector::from_index(self.p, free.len(), idx);
                let mut coords = vec![0u32; self.n];
                for (&c, &v) in free.iter().zip(&q.coords) {
                    coords[c] = v;
                }
                GroupVector { p: self.p, coords }
            })
            .collect();
        reps.sort();
        Ok(reps)
    }

    /// Coordinates of `v + K` in the quotient `Z_p^n / K`, identified with
    /// `Z_p^(n - dim)` through the non-pivot coordinates of the coset minimum.
    pub fn quotient_coords(&self, v: &GroupVector) -> GroupVector {
        let r = self.reduce(v);
        let coords = (0..self.n).filter(|c| !self.pivots.contains(c)).map(|c| r.coords[c]).collect();
        GroupVector { p: self.p, coords }
    }

    /// Lifts a subgroup `H` of the quotient back to the subgroup `K' + H` of Z_p^n.
    pub fn lift_from_quotient(&self, h: &Subgroup) -> Result<Subgroup> {
        let free: Vec<usize> = (0..self.n).filter(|c| !self.pivots.contains(c)).collect();
        if h.n != free.len() || h.p != self.p {
            return Err(Error::AmbientMismatch { p1: self.p, n1: free.len(), p2: h.p, n2: h.n });
        }
        let mut gens = self.basis.clone();
        for g in &h.basis {
            let mut coords = vec![0u32; self.n];
            for (&c, &v) in free.iter().zip(&g.coords) {
                coords[c] = v;
            }
            gens.push(GroupVector { p: self.p, coords });
        }
        Subgroup::span(self.p, self.n, &gens)
    }

    fn sort_key(&self) -> Vec<usize> {
        self.basis.iter().map(|g| g.to_index()).collect()
    }
}

impl fmt::Display for Subgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.basis.iter().map(|g| g.to_string()).collect();
        write!(f, "<{}>", parts.join(", "))
    }
}

/// Serializes as the list of canonical basis vectors in digit form.
impl Serialize for Subgroup {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let basis: Vec<String> = self.basis().iter().map(|g| g.to_string()).collect();
        basis.serialize(s)
    }
}

/// Canonical basis of the span of `generators` in Z_p^n. An empty list gives
/// the trivial subgroup.
pub fn canonical_basis(p: u32, n: usize, generators: &[GroupVector]) -> Result<Subgroup> {
    Subgroup::span(p, n, generators)
}

/// All subgroups of Z_p^n of order p^d, in sorted canonical order.
///
/// Walks every reduced echelon matrix with `d` rows directly, so each subgroup
/// is produced exactly once.
pub fn enumerate_subgroups(p: u32, n: usize, d: usize) -> Result<Vec<Subgroup>> {
    check_prime(p)?;
    pow_or_guard(p, n, SUBGROUP_ENUMERATION_CAP, "subgroup enumeration p^n")?;
    if d > n {
        return Err(Error::DimensionTooLarge { k: d, n });
    }
    let mut out = Vec::new();
    let mut pivots = Vec::with_capacity(d);
    pivot_sets(n, d, 0, &mut pivots, &mut |piv| {
        // free slots: row j, column c > piv[j] with c not a pivot
        let slots: Vec<(usize, usize)> = (0..d)
            .flat_map(|j| ((piv[j] + 1)..n).filter(|c| !piv.contains(c)).map(move |c| (j, c)))
            .collect();
        let combos = checked_pow(p, slots.len()).expect("guarded by p^n cap");
        for combo in 0..combos {
            let values = GroupVector::from_index(p, slots.len(), combo);
            let mut rows = vec![vec![0u32; n]; d];
            for (j, &c) in piv.iter().enumerate() {
                rows[j][c] = 1;
            }
            for (&(j, c), &v) in slots.iter().zip(&values.coords) {
                rows[j][c] = v;
            }
            let basis = rows.into_iter().map(|coords| GroupVector { p, coords }).collect();
            out.push(Subgroup { p, n, basis, pivots: piv.to_vec() });
        }
    });
    out.sort_by_key(|k| k.sort_key());
    Ok(out)
}

fn pivot_sets(n: usize, d: usize, start: usize, acc: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if acc.len() == d {
        f(acc);
        return;
    }
    for c in start..n {
        acc.push(c);
        pivot_sets(n, d, c + 1, acc, f);
        acc.pop();
    }
}

/// Number of subgroups of Z_p^n of order p^k:
/// `prod_{0 <= i < k} (p^(n-i) - 1) / (p^(k-i) - 1)`.
pub fn beta(p: u32, n: usize, k: usize) -> Result<BigUint> {
    check_prime(p)?;
    if k > n {
        return Err(Error::DimensionTooLarge { k, n });
    }
    let pb = BigUint::from(p);
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..k {
        num *= pb.pow((n - i) as u32) - BigUint::one();
        den *= pb.pow((k - i) as u32) - BigUint::one();
    }
    Ok(num / den)
}

/// `{k : z . k = 0 for every sample z}`.
pub fn nullspace_dual(p: u32, n: usize, samples: &[GroupVector]) -> Result<Subgroup> {
    check_prime(p)?;
    for z in samples {
        if z.p != p || z.n() != n {
            return Err(Error::AmbientMismatch { p1: p, n1: n, p2: z.p, n2: z.n() });
        }
    }
    let rows = samples.iter().map(|z| z.coords.clone()).collect();
    let (rows, pivots) = rref(p, n, rows);
    let gens: Vec<GroupVector> = (0..n)
        .filter(|c| !pivots.contains(c))
        .map(|free| {
            let mut coords = vec![0u32; n];
            coords[free] = 1;
            for (row, &pc) in rows.iter().zip(&pivots) {
                coords[pc] = (p - row[free]) % p;
            }
            GroupVector { p, coords }
        })
        .collect();
    Subgroup::span(p, n, &gens)
}

/// Rank of a list of vectors over Z_p.
pub fn rank(p: u32, n: usize, vectors: &[GroupVector]) -> usize {
    let rows = vectors.iter().map(|z| z.coords.clone()).collect();
    rref(p, n, rows).1.len()
}
