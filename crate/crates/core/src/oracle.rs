//! Oracle tables and the sequence families built from them.
//!
//! Tables store outputs as packed base-p indices (see [`GroupVector::to_index`]),
//! which is how the simulator and the counting code read them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{
    check_prime, checked_pow, digitwise_add, enumerate_subgroups, log_p, pow_or_guard, rank,
    sigma_perm, GroupVector, IndexVector, Subgroup,
};

/// Largest `p^n` for which tables are materialized.
pub const TABLE_CAP: usize = 1 << 20;
/// Largest number of members an exhaustive enumeration may produce.
pub const ENUMERATION_CAP: u128 = 10_000_000;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A permutation of Z_p^n, stored as a table over packed indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PermutationOracle {
    p: u32,
    n: usize,
    table: Vec<usize>,
}

impl PermutationOracle {
    pub fn new(p: u32, n: usize, table: Vec<usize>) -> Result<Self> {
        check_prime(p)?;
        let size = pow_or_guard(p, n, TABLE_CAP, "oracle table p^n")?;
        if table.len() != size {
            return Err(Error::DimensionMismatch { expected: size, actual: table.len() });
        }
        let mut seen = vec![false; size];
        for &y in &table {
            if y >= size || seen[y] {
                return Err(Error::NotAPermutation);
            }
            seen[y] = true;
        }
        Ok(PermutationOracle { p, n, table })
    }

    pub(crate) fn from_table_unchecked(p: u32, n: usize, table: Vec<usize>) -> Self {
        PermutationOracle { p, n, table }
    }

    pub fn identity(p: u32, n: usize) -> Result<Self> {
        check_prime(p)?;
        let size = pow_or_guard(p, n, TABLE_CAP, "oracle table p^n")?;
        Ok(PermutationOracle { p, n, table: (0..size).collect() })
    }

    /// Uniform permutation of Z_p^n.
    pub fn random<R: Rng + ?Sized>(p: u32, n: usize, rng: &mut R) -> Result<Self> {
        let mut o = Self::identity(p, n)?;
        o.table.shuffle(rng);
        Ok(o)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn size(&self) -> usize {
        self.table.len()
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    pub fn eval(&self, x: usize) -> usize {
        self.table[x]
    }

    pub fn eval_vec(&self, x: &GroupVector) -> GroupVector {
        GroupVector::from_index(self.p, self.n, self.table[x.to_index()])
    }

    pub fn inverse(&self) -> PermutationOracle {
        let mut inv = vec![0; self.table.len()];
        for (x, &y) in self.table.iter().enumerate() {
            inv[y] = x;
        }
        PermutationOracle { p: self.p, n: self.n, table: inv }
    }

    /// `x -> self(x + shift)`.
    pub fn shifted(&self, shift: &GroupVector) -> PermutationOracle {
        let s = shift.to_index();
        let table =
            (0..self.table.len()).map(|x| self.table[digitwise_add(x, s, self.p, self.n, false)]).collect();
        PermutationOracle { p: self.p, n: self.n, table }
    }
}

/// `O = (O_0, ..., O_{D-1})`, optionally with the subgroup it was built from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleSequence {
    p: u32,
    n: usize,
    oracles: Vec<PermutationOracle>,
    hidden: Option<Subgroup>,
}

impl OracleSequence {
    /// A sequence with no recorded hidden subgroup.
    pub fn new(oracles: Vec<PermutationOracle>) -> Result<Self> {
        let first = oracles
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty oracle sequence".into()))?;
        let (p, n) = (first.p, first.n);
        for o in &oracles {
            if o.p != p || o.n != n {
                return Err(Error::AmbientMismatch { p1: p, n1: n, p2: o.p, n2: o.n });
            }
        }
        Ok(OracleSequence { p, n, oracles, hidden: None })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.oracles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.oracles.is_empty()
    }

    pub fn oracles(&self) -> &[PermutationOracle] {
        &self.oracles
    }

    pub fn hidden(&self) -> Option<&Subgroup> {
        self.hidden.as_ref()
    }

    /// `O(x) = (O_0(x), ..., O_{D-1}(x))` as packed indices.
    pub fn eval_all(&self, x: usize) -> Vec<usize> {
        self.oracles.iter().map(|o| o.table[x]).collect()
    }

    pub fn tables(&self) -> Vec<Vec<usize>> {
        self.oracles.iter().map(|o| o.table.clone()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = SequenceDoc {
            p: self.p,
            n: self.n,
            d_len: self.len(),
            hidden_basis: self.hidden.as_ref().map(|k| k.basis().iter().map(|g| g.coords().to_vec()).collect()),
            tables: self.tables(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    /// Parses the JSON form. A recorded hidden basis must actually be hidden.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: SequenceDoc = serde_json::from_str(s)?;
        if doc.tables.len() != doc.d_len {
            return Err(Error::DimensionMismatch { expected: doc.d_len, actual: doc.tables.len() });
        }
        let oracles = doc
            .tables
            .into_iter()
            .map(|t| PermutationOracle::new(doc.p, doc.n, t))
            .collect::<Result<Vec<_>>>()?;
        let mut seq = OracleSequence::new(oracles)?;
        if let Some(basis) = doc.hidden_basis {
            let gens = basis.into_iter().map(|c| GroupVector::new(doc.p, c)).collect::<Result<Vec<_>>>()?;
            let k = Subgroup::span(doc.p, doc.n, &gens)?;
            if k.basis() != gens.as_slice() {
                return Err(Error::InvalidParameter("hidden basis is not in canonical form".into()));
            }
            if verify_hidden_subgroup(&seq).as_ref() != Some(&k) {
                return Err(Error::InvalidParameter("recorded subgroup is not hidden by the tables".into()));
            }
            seq.hidden = Some(k);
        }
        Ok(seq)
    }
}

#[derive(Serialize, Deserialize)]
struct SequenceDoc {
    p: u32,
    n: usize,
    #[serde(rename = "D")]
    d_len: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    hidden_basis: Option<Vec<Vec<u32>>>,
    tables: Vec<Vec<usize>>,
}

/// A core sequence followed by `N - D` unrelated permutations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedSequence {
    pub core: OracleSequence,
    pub padding: Vec<PermutationOracle>,
}

impl PaddedSequence {
    pub fn len(&self) -> usize {
        self.core.len() + self.padding.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tables(&self) -> Vec<Vec<usize>> {
        let mut t = self.core.tables();
        t.extend(self.padding.iter().map(|o| o.table.clone()));
        t
    }
}

/// `EM(x) = pi(x + k1) + k2` over Z_2^n.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmInstance {
    pub pi: PermutationOracle,
    pub k1: GroupVector,
    pub k2: GroupVector,
}

impl EmInstance {
    pub fn new(pi: PermutationOracle, k1: GroupVector, k2: GroupVector) -> Result<Self> {
        if pi.p != 2 {
            return Err(Error::InvalidParameter("Even-Mansour instances are defined over p = 2".into()));
        }
        for k in [&k1, &k2] {
            if k.p() != 2 || k.n() != pi.n {
                return Err(Error::AmbientMismatch { p1: 2, n1: pi.n, p2: k.p(), n2: k.n() });
            }
        }
        Ok(EmInstance { pi, k1, k2 })
    }

    pub fn n(&self) -> usize {
        self.pi.n
    }

    pub fn encrypt(&self, x: usize) -> usize {
        self.pi.table[x ^ self.k1.to_index()] ^ self.k2.to_index()
    }

    pub fn em_table(&self) -> PermutationOracle {
        let table = (0..self.pi.size()).map(|x| self.encrypt(x)).collect();
        PermutationOracle::from_table_unchecked(2, self.pi.n, table)
    }
}

/// Uniform EM instance. `k1 = 0^n` is excluded unless `allow_zero_k1`.
pub fn make_em_instance(p: u32, n: usize, seed: u64, allow_zero_k1: bool) -> Result<EmInstance> {
    if p != 2 {
        return Err(Error::InvalidParameter(format!("Even-Mansour instances need p = 2, got {p}")));
    }
    let mut rng = rng_from_seed(seed);
    let pi = PermutationOracle::random(2, n, &mut rng)?;
    let size = pi.size();
    let k1 = loop {
        let k = rng.gen_range(0..size);
        if k != 0 || allow_zero_k1 || size == 1 {
            break k;
        }
    };
    let k2 = rng.gen_range(0..size);
    EmInstance::new(pi, GroupVector::from_index(2, n, k1), GroupVector::from_index(2, n, k2))
}

/// `|Pi_K| = N (N-1) ... (N - N/D + 1)` as a `u128`, or `None` on overflow.
pub fn pi_k_count(p: u32, n: usize, d: usize) -> Option<u128> {
    let size = checked_pow(p, n)? as u128;
    let free = checked_pow(p, n.checked_sub(d)?)? as u128;
    let mut acc: u128 = 1;
    for j in 0..free {
        acc = acc.checked_mul(size - j)?;
    }
    Some(acc)
}

/// The member of `Pi_K` whose coset representatives (sorted) take `rep_values`.
///
/// Non-representative inputs, in increasing order, receive the unused values in
/// increasing order.
pub fn complete_pi_k(k: &Subgroup, reps: &[usize], rep_values: &[usize]) -> Result<PermutationOracle> {
    let (p, n) = (k.p(), k.n());
    let size = pow_or_guard(p, n, TABLE_CAP, "oracle table p^n")?;
    if reps.len() != rep_values.len() {
        return Err(Error::DimensionMismatch { expected: reps.len(), actual: rep_values.len() });
    }
    const UNSET: usize = usize::MAX;
    let mut table = vec![UNSET; size];
    let mut used = vec![false; size];
    for (&r, &v) in reps.iter().zip(rep_values) {
        if v >= size || used[v] {
            return Err(Error::NotAPermutation);
        }
        table[r] = v;
        used[v] = true;
    }
    let mut next = 0;
    for slot in table.iter_mut() {
        if *slot == UNSET {
            while used[next] {
                next += 1;
            }
            *slot = next;
            next += 1;
        }
    }
    Ok(PermutationOracle { p, n, table })
}

fn rep_indices(k: &Subgroup) -> Result<Vec<usize>> {
    Ok(k.coset_representatives()?.iter().map(|r| r.to_index()).collect())
}

pub fn sample_pi_k_with<R: Rng + ?Sized>(k: &Subgroup, rng: &mut R) -> Result<PermutationOracle> {
    let size = pow_or_guard(k.p(), k.n(), TABLE_CAP, "oracle table p^n")?;
    let reps = rep_indices(k)?;
    let mut values: Vec<usize> = (0..size).collect();
    let (chosen, _) = values.partial_shuffle(rng, reps.len());
    complete_pi_k(k, &reps, chosen)
}

/// Uniform member of `Pi_K`, deterministic in `seed`.
pub fn sample_pi_k(k: &Subgroup, seed: u64) -> Result<PermutationOracle> {
    sample_pi_k_with(k, &mut rng_from_seed(seed))
}

/// Every member of `Pi_K`, ordered by the representative values.
pub fn enumerate_pi_k(k: &Subgroup) -> Result<PiKIter> {
    let count = pi_k_count(k.p(), k.n(), k.dim()).unwrap_or(u128::MAX);
    if count > ENUMERATION_CAP {
        return Err(Error::SizeGuard { what: "Pi_K enumeration", needed: count, cap: ENUMERATION_CAP });
    }
    let size = pow_or_guard(k.p(), k.n(), TABLE_CAP, "oracle table p^n")?;
    let reps = rep_indices(k)?;
    Ok(PiKIter { k: k.clone(), values: InjectiveSeqs::new(size, reps.len()), reps })
}

/// Lexicographic walk over injective sequences of length `len` drawn from `0..size`.
#[derive(Clone, Debug)]
pub struct InjectiveSeqs {
    size: usize,
    current: Vec<usize>,
    used: Vec<bool>,
    started: bool,
    done: bool,
}

impl InjectiveSeqs {
    pub fn new(size: usize, len: usize) -> Self {
        InjectiveSeqs { size, current: Vec::with_capacity(len), used: vec![false; size], started: false, done: len > size }
            .with_len(len)
    }

    fn with_len(mut self, len: usize) -> Self {
        if !self.done {
            for v in 0..len {
                self.current.push(v);
                self.used[v] = true;
            }
        }
        self
    }

    /// Advances `current` in place; false when exhausted.
    fn advance(&mut self) -> bool {
        let len = self.current.len();
        let mut pos = len;
        while pos > 0 {
            pos -= 1;
            let old = self.current[pos];
            self.used[old] = false;
            if let Some(v) = ((old + 1)..self.size).find(|&v| !self.used[v]) {
                self.current[pos] = v;
                self.used[v] = true;
                // refill the tail with the smallest free values
                let mut next = 0;
                for slot in (pos + 1)..len {
                    while self.used[next] {
                        next += 1;
                    }
                    self.current[slot] = next;
                    self.used[next] = true;
                }
                return true;
            }
        }
        false
    }
}

impl Iterator for InjectiveSeqs {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        if self.started && !self.advance() {
            self.done = true;
            return None;
        }
        self.started = true;
        Some(self.current.clone())
    }
}

pub struct PiKIter {
    k: Subgroup,
    reps: Vec<usize>,
    values: InjectiveSeqs,
}

impl Iterator for PiKIter {
    type Item = PermutationOracle;

    fn next(&mut self) -> Option<PermutationOracle> {
        let v = self.values.next()?;
        Some(complete_pi_k(&self.k, &self.reps, &v).expect("injective values form a permutation"))
    }
}

/// `O_i(x) = O_0(x + k_i)` for every index `i` of `K`.
pub fn build_sequence(o0: &PermutationOracle, k: &Subgroup) -> Result<OracleSequence> {
    if o0.p != k.p() || o0.n != k.n() {
        return Err(Error::AmbientMismatch { p1: o0.p, n1: o0.n, p2: k.p(), n2: k.n() });
    }
    let oracles = (0..k.order()).map(|i| o0.shifted(&k.element_at_index(i))).collect();
    Ok(OracleSequence { p: o0.p, n: o0.n, oracles, hidden: Some(k.clone()) })
}

/// The subgroup hidden by `O`, if any.
///
/// `O_0` is a permutation, so `O_i(0) = O_0(k_i)` pins down the only possible
/// `k_i`. The candidates must form a subgroup of order `D` whose canonical
/// index map sends `i` to `k_i`, and every `O_i(x) = O_0(x + k_i)` must hold.
pub fn verify_hidden_subgroup(o: &OracleSequence) -> Option<Subgroup> {
    let (p, n) = (o.p, o.n);
    let d = log_p(o.len(), p)?;
    let inv0 = o.oracles[0].inverse();
    let ks: Vec<GroupVector> =
        o.oracles.iter().map(|oi| GroupVector::from_index(p, n, inv0.table[oi.table[0]])).collect();
    if rank(p, n, &ks) != d {
        return None;
    }
    let k = Subgroup::span(p, n, &ks).ok()?;
    for (i, ki) in ks.iter().enumerate() {
        if &k.element_at_index(i) != ki {
            return None;
        }
        let s = ki.to_index();
        let ok = (0..o.oracles[0].size())
            .all(|x| o.oracles[i].table[x] == o.oracles[0].table[digitwise_add(x, s, p, n, false)]);
        if !ok {
            return None;
        }
    }
    Some(k)
}

/// Literal check of `x' = x + k_i  <=>  O(x') = sigma_i O(x)` over all `x, x', i`.
pub fn shift_equivalence_holds(o: &OracleSequence, k: &Subgroup) -> bool {
    let (p, n) = (o.p, o.n);
    if k.order() != o.len() || k.p() != p || k.n() != n {
        return false;
    }
    let size = o.oracles[0].size();
    let values: Vec<Vec<usize>> = (0..size).map(|x| o.eval_all(x)).collect();
    let sigmas: Vec<Vec<usize>> =
        (0..o.len()).map(|i| sigma_perm(&IndexVector::from_index(p, k.dim(), i))).collect();
    let shifts: Vec<usize> = (0..o.len()).map(|i| k.element_at_index(i).to_index()).collect();
    for x in 0..size {
        for (i, sigma) in sigmas.iter().enumerate() {
            let permuted: Vec<usize> = sigma.iter().map(|&j| values[x][j]).collect();
            for (xp, vp) in values.iter().enumerate() {
                let lhs = xp == digitwise_add(x, shifts[i], p, n, false);
                let rhs = *vp == permuted;
                if lhs != rhs {
                    return false;
                }
            }
        }
    }
    true
}

/// Uniform subgroup of order `p^d`: the span of a uniform independent `d`-tuple.
pub fn sample_subgroup<R: Rng + ?Sized>(p: u32, n: usize, d: usize, rng: &mut R) -> Result<Subgroup> {
    check_prime(p)?;
    if d > n {
        return Err(Error::DimensionTooLarge { k: d, n });
    }
    let size = pow_or_guard(p, n, TABLE_CAP, "ambient p^n")?;
    let mut gens: Vec<GroupVector> = Vec::with_capacity(d);
    while gens.len() < d {
        let g = GroupVector::from_index(p, n, rng.gen_range(0..size));
        gens.push(g);
        if rank(p, n, &gens) < gens.len() {
            gens.pop();
        }
    }
    Subgroup::span(p, n, &gens)
}

fn check_d(p: u32, n: usize, big_d: usize) -> Result<usize> {
    let d = log_p(big_d, p).ok_or(Error::NotPowerOfP(big_d, p))?;
    if d > n {
        return Err(Error::DimensionTooLarge { k: d, n });
    }
    Ok(d)
}

/// Uniform member of `F_D*`: uniform `K` of order `D`, then uniform `O_0` in `Pi_K`.
pub fn sample_f_d_star(p: u32, n: usize, big_d: usize, seed: u64) -> Result<OracleSequence> {
    sample_f_d_star_with(p, n, big_d, &mut rng_from_seed(seed))
}

pub fn sample_f_d_star_with<R: Rng + ?Sized>(p: u32, n: usize, big_d: usize, rng: &mut R) -> Result<OracleSequence> {
    check_prime(p)?;
    let d = check_d(p, n, big_d)?;
    let k = sample_subgroup(p, n, d, rng)?;
    let o0 = sample_pi_k_with(&k, rng)?;
    build_sequence(&o0, &k)
}

/// `beta(p, n, d) * |Pi_K|`, or `None` on overflow.
pub fn f_d_star_count(p: u32, n: usize, d: usize) -> Option<u128> {
    let b = crate::group::beta(p, n, d).ok()?;
    let b: u128 = b.try_into().ok()?;
    b.checked_mul(pi_k_count(p, n, d)?)
}

/// Every member of `F_D*` exactly once, grouped by subgroup in canonical order.
pub fn enumerate_f_d_star(p: u32, n: usize, big_d: usize) -> Result<impl Iterator<Item = OracleSequence>> {
    check_prime(p)?;
    let d = check_d(p, n, big_d)?;
    let count = f_d_star_count(p, n, d).unwrap_or(u128::MAX);
    if count > ENUMERATION_CAP {
        return Err(Error::SizeGuard { what: "F_D* enumeration", needed: count, cap: ENUMERATION_CAP });
    }
    let subs = enumerate_subgroups(p, n, d)?;
    let iters = subs.into_iter().map(|k| enumerate_pi_k(&k).map(|it| (k, it))).collect::<Result<Vec<_>>>()?;
    Ok(iters
        .into_iter()
        .flat_map(|(k, it)| it.map(move |o0| build_sequence(&o0, &k).expect("ambient matches"))))
}

/// Appends `N - D` independent uniform permutations.
pub fn pad_sequence(o: &OracleSequence, big_n: usize, seed: u64) -> Result<PaddedSequence> {
    if big_n < o.len() {
        return Err(Error::InvalidParameter(format!("N = {big_n} is smaller than D = {}", o.len())));
    }
    let mut rng = rng_from_seed(seed);
    let padding = (o.len()..big_n)
        .map(|_| PermutationOracle::random(o.p, o.n, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(PaddedSequence { core: o.clone(), padding })
}
