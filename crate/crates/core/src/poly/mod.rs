//! Exact extension probabilities over `F_D*`, their factored closed forms,
//! degree fitting and the Koiran degree bound.

pub mod corpus;
pub mod fit;
pub mod qofd;

use std::collections::{BTreeMap, HashMap};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{
    apply_sigma, beta, check_prime, checked_pow, digitwise_add, enumerate_subgroups, log_p, rank, sigma_perm,
    GroupVector, IndexVector, Subgroup,
};
use crate::oracle::{enumerate_f_d_star, f_d_star_count, OracleSequence, ENUMERATION_CAP, TABLE_CAP};

pub use corpus::{degree_report, generate_corpus, DegreeReport, SEntry};
pub use fit::{fit_degree, fit_degree_exact, interpolate_exact, koiran_bound, koiran_degree_bound, ExactFit, FloatFit};
pub use qofd::{q_of_d_enumerated, QEstimate, QMethod, QOptions};

/// A finite map `x -> (y_0, ..., y_{arity-1})` over `Z_p^n`, points and values packed as indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartialFunction {
    p: u32,
    n: usize,
    arity: usize,
    entries: BTreeMap<usize, Vec<usize>>,
}

impl PartialFunction {
    pub fn new(p: u32, n: usize, arity: usize) -> Result<Self> {
        check_prime(p)?;
        match checked_pow(p, n) {
            Some(size) if size <= TABLE_CAP => {}
            _ => return Err(Error::SizeGuard { what: "group size", needed: u128::MAX, cap: TABLE_CAP as u128 }),
        }
        if arity == 0 {
            return Err(Error::InvalidParameter("arity must be positive".into()));
        }
        Ok(PartialFunction { p, n, arity, entries: BTreeMap::new() })
    }

    /// Restricts tables to `dom` and records the graph.
    pub fn from_graph(p: u32, n: usize, tables: &[Vec<usize>], dom: &[usize]) -> Result<Self> {
        let mut s = PartialFunction::new(p, n, tables.len())?;
        for &x in dom {
            let y = tables.iter().map(|t| t.get(x).copied()).collect::<Option<Vec<_>>>();
            let y = y.ok_or_else(|| Error::InvalidParameter(format!("point {x} outside the tables")))?;
            s.insert(x, y)?;
        }
        Ok(s)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &BTreeMap<usize, Vec<usize>> {
        &self.entries
    }

    pub fn get(&self, x: usize) -> Option<&[usize]> {
        self.entries.get(&x).map(|v| v.as_slice())
    }

    pub fn contains(&self, x: usize) -> bool {
        self.entries.contains_key(&x)
    }

    fn size(&self) -> usize {
        checked_pow(self.p, self.n).expect("checked at construction")
    }

    /// Adds `x -> y`. Re-inserting the same pair is allowed; a different value is not.
    pub fn insert(&mut self, x: usize, y: Vec<usize>) -> Result<()> {
        let size = self.size();
        if y.len() != self.arity {
            return Err(Error::DimensionMismatch { expected: self.arity, actual: y.len() });
        }
        if x >= size || y.iter().any(|&v| v >= size) {
            return Err(Error::InvalidParameter(format!("entry {x} -> {y:?} outside Z_{}^{}", self.p, self.n)));
        }
        match self.entries.get(&x) {
            Some(old) if *old != y => Err(Error::InvalidParameter(format!("point {x} already maps elsewhere"))),
            _ => {
                self.entries.insert(x, y);
                Ok(())
            }
        }
    }

    /// Keeps the first `arity` tuple components.
    pub fn restrict(&self, arity: usize) -> Result<Self> {
        if arity == 0 || arity > self.arity {
            return Err(Error::InvalidParameter(format!("cannot restrict arity {} to {arity}", self.arity)));
        }
        let entries = self.entries.iter().map(|(&x, y)| (x, y[..arity].to_vec())).collect();
        Ok(PartialFunction { p: self.p, n: self.n, arity, entries })
    }

    pub fn extends_tables(&self, tables: &[Vec<usize>]) -> bool {
        tables.len() == self.arity
            && self.entries.iter().all(|(&x, y)| tables.iter().zip(y).all(|(t, &v)| t.get(x) == Some(&v)))
    }

    /// `O ⊇ s`.
    pub fn extended_by(&self, o: &OracleSequence) -> Result<bool> {
        if o.p() != self.p || o.n() != self.n {
            return Err(Error::AmbientMismatch { p1: o.p(), n1: o.n(), p2: self.p, n2: self.n });
        }
        if o.len() != self.arity {
            return Err(Error::DimensionMismatch { expected: self.arity, actual: o.len() });
        }
        Ok(self.entries.iter().all(|(&x, y)| o.oracles().iter().zip(y).all(|(f, &v)| f.eval(x) == v)))
    }
}

pub fn extends(o: &OracleSequence, s: &PartialFunction) -> Result<bool> {
    s.extended_by(o)
}

/// `|F_D*|` for `D = p^d`.
pub fn fd_count(p: u32, n: usize, big_d: usize) -> Result<u128> {
    let d = log_p(big_d, p).ok_or(Error::NotPowerOfP(big_d, p))?;
    if d > n {
        return Err(Error::DimensionTooLarge { k: d, n });
    }
    Ok(f_d_star_count(p, n, d).unwrap_or(u128::MAX))
}

/// `Pr_{O in F_D*}[O ⊇ s]` by listing `F_D*`; `D` is the arity of `s`.
pub fn q_s_enumerated(s: &PartialFunction) -> Result<BigRational> {
    if s.is_empty() {
        return Ok(BigRational::one());
    }
    let big_d = s.arity;
    let total = fd_count(s.p, s.n, big_d)?;
    if total > ENUMERATION_CAP {
        return Err(Error::SizeGuard { what: "F_D* enumeration", needed: total, cap: ENUMERATION_CAP });
    }
    let mut hits = 0u64;
    for o in enumerate_f_d_star(s.p, s.n, big_d)? {
        if s.extended_by(&o)? {
            hits += 1;
        }
    }
    Ok(BigRational::new(BigInt::from(hits), BigInt::from(total)))
}

/// All of `F_D*` as flat tables `t[x * D + l] = O_l(x)`, for scoring many `s` at once.
pub struct FdStarTable {
    pub p: u32,
    pub n: usize,
    pub big_d: usize,
    members: Vec<Vec<usize>>,
}

impl FdStarTable {
    pub fn build(p: u32, n: usize, big_d: usize) -> Result<Self> {
        let total = fd_count(p, n, big_d)?;
        if total > ENUMERATION_CAP {
            return Err(Error::SizeGuard { what: "F_D* enumeration", needed: total, cap: ENUMERATION_CAP });
        }
        let size = checked_pow(p, n).expect("bounded by enumeration cap");
        let members = enumerate_f_d_star(p, n, big_d)?
            .map(|o| {
                let mut flat = vec![0; size * big_d];
                for (l, f) in o.oracles().iter().enumerate() {
                    for (x, &y) in f.table().iter().enumerate() {
                        flat[x * big_d + l] = y;
                    }
                }
                flat
            })
            .collect();
        Ok(FdStarTable { p, n, big_d, members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Same value as [`q_s_enumerated`] on `s` restricted to arity `D`.
    pub fn q_s(&self, s: &PartialFunction) -> Result<BigRational> {
        if s.p != self.p || s.n != self.n {
            return Err(Error::AmbientMismatch { p1: s.p, n1: s.n, p2: self.p, n2: self.n });
        }
        let s = s.restrict(self.big_d)?;
        let d = self.big_d;
        let hits = self
            .members
            .iter()
            .filter(|t| s.entries.iter().all(|(&x, y)| t[x * d..(x + 1) * d] == y[..]))
            .count();
        Ok(BigRational::new(BigInt::from(hits), BigInt::from(self.members.len())))
    }
}

/// Class partition of `dom(s)` by the σ-relation and the normal form `s̃`.
#[derive(Clone, Debug, Serialize)]
pub struct DomainStructure {
    pub p: u32,
    pub n: usize,
    pub big_d: usize,
    /// False when some tuple repeats a value or the rewrite collides; then `Q_s = 0`.
    pub consistent: bool,
    pub contains_zero: bool,
    /// Original points by class, anchor first; the class of `0^n` comes first.
    pub classes: Vec<Vec<usize>>,
    pub class_sizes: Vec<usize>,
    /// `s̃`, where only the class of `0^n` has more than one point.
    pub normalized: PartialFunction,
    /// Size of that class in `s̃`.
    pub v1: usize,
    pub w: usize,
    pub anchors: Vec<usize>,
    pub k_prime: Subgroup,
    pub d_prime: usize,
    /// Anchors that are the lex-min elements of their `K'` coset.
    pub w_prime: usize,
}

impl DomainStructure {
    /// `(v_1 - 1) + w`.
    pub fn degree_bound(&self) -> usize {
        (self.v1 - 1) + self.w
    }
}

fn sigmas(p: u32, big_d: usize) -> Result<Vec<Vec<usize>>> {
    let d = log_p(big_d, p).ok_or(Error::NotPowerOfP(big_d, p))?;
    Ok((0..big_d).map(|l| sigma_perm(&IndexVector::from_index(p, d, l))).collect())
}

pub fn domain_structure(s: &PartialFunction) -> Result<DomainStructure> {
    let (p, n, big_d) = (s.p, s.n, s.arity);
    if !s.contains(0) {
        return Err(Error::InvalidParameter("dom(s) must contain 0^n".into()));
    }
    let sig = sigmas(p, big_d)?;
    let mut out = DomainStructure {
        p,
        n,
        big_d,
        consistent: true,
        contains_zero: true,
        classes: Vec::new(),
        class_sizes: Vec::new(),
        normalized: PartialFunction::new(p, n, big_d)?,
        v1: 0,
        w: 0,
        anchors: Vec::new(),
        k_prime: Subgroup::trivial(p, n)?,
        d_prime: 0,
        w_prime: 0,
    };

    // (point, l) with s(point) = σ_l s(anchor)
    let mut classes: Vec<Vec<(usize, usize)>> = Vec::new();
    for (&x, y) in &s.entries {
        let mut seen = y.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != y.len() {
            out.consistent = false;
        }
        let hit = classes.iter().enumerate().find_map(|(c, members)| {
            let base = &s.entries[&members[0].0];
            sig.iter().position(|sg| apply_sigma(sg, base) == *y).map(|l| (c, l))
        });
        match hit {
            Some((c, l)) => classes[c].push((x, l)),
            None => classes.push(vec![(x, 0)]),
        }
    }
    out.classes = classes.iter().map(|c| c.iter().map(|&(x, _)| x).collect()).collect();
    out.class_sizes = classes.iter().map(|c| c.len()).collect();
    out.w = classes.len();
    out.anchors = classes.iter().map(|c| c[0].0).collect();

    let zero_value = s.entries[&0].clone();
    let mut a1 = vec![0usize];
    let mut norm = PartialFunction::new(p, n, big_d)?;
    let place = |norm: &mut PartialFunction, x: usize, y: Vec<usize>| norm.insert(x, y).is_ok();
    let mut ok = place(&mut norm, 0, zero_value.clone());
    for c in &classes {
        let anchor = c[0].0;
        if anchor != 0 {
            ok &= place(&mut norm, anchor, s.entries[&anchor].clone());
        }
    }
    for c in &classes {
        let anchor = c[0].0;
        for &(x, l) in &c[1..] {
            let moved = digitwise_add(x, anchor, p, n, true);
            ok &= place(&mut norm, moved, apply_sigma(&sig[l], &zero_value));
            a1.push(moved);
        }
    }
    a1.sort_unstable();
    a1.dedup();
    if !ok {
        out.consistent = false;
    }
    out.v1 = a1.len();
    out.normalized = norm;
    let gens: Vec<GroupVector> = a1.iter().map(|&x| GroupVector::from_index(p, n, x)).collect();
    out.k_prime = Subgroup::span(p, n, &gens)?;
    out.d_prime = out.k_prime.dim();
    out.w_prime = out
        .anchors
        .iter()
        .filter(|&&a| {
            let v = GroupVector::from_index(p, n, a);
            out.k_prime.reduce(&v) == v
        })
        .count();
    Ok(out)
}

fn ratio(num: BigUint, den: BigUint) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// `β_p(n-d', d-d') / β_p(n, d)`: the chance that a uniform order-`D` subgroup contains a fixed order-`p^{d'}` one.
pub fn q_s_r(d_prime: usize, p: u32, n: usize, big_d: usize) -> Result<BigRational> {
    let d = log_p(big_d, p).ok_or(Error::NotPowerOfP(big_d, p))?;
    if d > n || d_prime > n {
        return Err(Error::DimensionTooLarge { k: d.max(d_prime), n });
    }
    if d_prime > d {
        return Ok(BigRational::zero());
    }
    Ok(ratio(beta(p, n - d_prime, d - d_prime)?, beta(p, n, d)?))
}

/// `prod_{i < d'} (D/p^i - 1)/(p^{n-i} - 1)`.
pub fn q_s_r_product(d_prime: usize, p: u32, n: usize, big_d: usize) -> Result<BigRational> {
    let d = log_p(big_d, p).ok_or(Error::NotPowerOfP(big_d, p))?;
    if d > n || d_prime > n {
        return Err(Error::DimensionTooLarge { k: d.max(d_prime), n });
    }
    let big = |e: usize| BigInt::from(p).pow(e as u32);
    let dd = BigRational::from_integer(big(d));
    let mut acc = BigRational::one();
    for i in 0..d_prime {
        let num = &dd / BigRational::from_integer(big(i)) - BigRational::one();
        let den = BigRational::from_integer(big(n - i) - 1);
        acc *= num / den;
    }
    Ok(acc)
}

/// `1 / (p^n (p^n - 1) ... (p^n - w' + 1))`.
pub fn nu_t(w_prime: usize, p: u32, n: usize) -> Result<BigRational> {
    check_prime(p)?;
    let size = BigInt::from(p).pow(n as u32);
    if BigInt::from(w_prime) > size {
        return Err(Error::InvalidParameter(format!("w' = {w_prime} exceeds p^n")));
    }
    let mut den = BigInt::one();
    for i in 0..w_prime {
        den *= &size - i;
    }
    Ok(BigRational::new(BigInt::one(), den))
}

/// Cap on the number of anchor pairs in the inclusion-exclusion sum.
pub const LAMBDA_PAIR_CAP: usize = 20;

/// Chance that the anchors fall in distinct cosets of a uniform order-`E` subgroup of `Z_p^{n_q}`.
pub fn lambda_t(anchors: &[GroupVector], p: u32, n_q: usize, big_e: usize) -> Result<BigRational> {
    check_prime(p)?;
    let e_h = log_p(big_e, p).ok_or(Error::NotPowerOfP(big_e, p))?;
    if e_h > n_q {
        return Err(Error::DimensionTooLarge { k: e_h, n: n_q });
    }
    if let Some(a) = anchors.iter().find(|a| a.p() != p || a.n() != n_q) {
        return Err(Error::AmbientMismatch { p1: a.p(), n1: a.n(), p2: p, n2: n_q });
    }
    let mut diffs = Vec::new();
    for i in 0..anchors.len() {
        for j in i + 1..anchors.len() {
            diffs.push(anchors[i].sub(&anchors[j])?);
        }
    }
    if diffs.len() > LAMBDA_PAIR_CAP {
        return Err(Error::SizeGuard {
            what: "anchor pairs",
            needed: diffs.len() as u128,
            cap: LAMBDA_PAIR_CAP as u128,
        });
    }
    let den = beta(p, n_q, e_h)?;
    let mut term: HashMap<usize, BigRational> = HashMap::new();
    let mut total = BigRational::zero();
    let mut chosen = Vec::with_capacity(diffs.len());
    for mask in 0u32..(1u32 << diffs.len()) {
        chosen.clear();
        chosen.extend((0..diffs.len()).filter(|b| mask >> b & 1 == 1).map(|b| diffs[b].clone()));
        let e = rank(p, n_q, &chosen);
        let t = match term.get(&e) {
            Some(t) => t.clone(),
            None => {
                let t = if e > e_h {
                    BigRational::zero()
                } else {
                    ratio(beta(p, n_q - e, e_h - e)?, den.clone())
                };
                term.insert(e, t.clone());
                t
            }
        };
        if mask.count_ones() % 2 == 0 {
            total += t;
        } else {
            total -= t;
        }
    }
    Ok(total)
}

/// `O_0(x + k_l) = s(x)_l` for every entry, or `None` if two demands clash.
fn pi_k_constraints(s: &PartialFunction, k: &Subgroup) -> Option<BTreeMap<usize, usize>> {
    let (p, n) = (s.p, s.n);
    let ks: Vec<usize> = (0..k.order()).map(|l| k.element_at_index(l).to_index()).collect();
    let mut at: BTreeMap<usize, usize> = BTreeMap::new();
    let mut used: HashMap<usize, usize> = HashMap::new();
    for (&x, y) in &s.entries {
        for (l, &v) in y.iter().enumerate() {
            let z = digitwise_add(x, ks[l], p, n, false);
            if let Some(&old) = at.get(&z) {
                if old != v {
                    return None;
                }
                continue;
            }
            if used.insert(v, z).is_some() {
                return None;
            }
            at.insert(z, v);
        }
    }
    Some(at)
}

/// `Pr_{O_0 in Π_K}[O_0(z) = v for all (z, v)]`, by counting rep-value sets.
pub fn pi_k_probability(k: &Subgroup, constraints: &BTreeMap<usize, usize>) -> Result<BigRational> {
    let reps: Vec<usize> = k.coset_representatives()?.iter().map(|r| r.to_index()).collect();
    let size = checked_pow(k.p(), k.n()).expect("subgroup ambient fits");
    let m = reps.len();
    let mut is_rep = vec![false; size];
    for &r in &reps {
        is_rep[r] = true;
    }
    let mut nonrep_rank = vec![usize::MAX; size];
    let mut next = 0;
    for (z, rank_slot) in nonrep_rank.iter_mut().enumerate() {
        if !is_rep[z] {
            *rank_slot = next;
            next += 1;
        }
    }
    // per value: forced in, forced out, and the required count of chosen values below it
    let mut forced_in = vec![false; size];
    let mut forced_out = vec![false; size];
    let mut below: Vec<Option<usize>> = vec![None; size];
    let mut fixed = 0usize;
    for (&z, &v) in constraints {
        if v >= size || z >= size {
            return Err(Error::InvalidParameter(format!("constraint {z} -> {v} out of range")));
        }
        if is_rep[z] {
            forced_in[v] = true;
            fixed += 1;
        } else {
            forced_out[v] = true;
            let r = nonrep_rank[z];
            if v < r || v - r > m {
                return Ok(BigRational::zero());
            }
            below[v] = Some(v - r);
        }
    }
    if (0..size).any(|v| forced_in[v] && forced_out[v]) {
        return Ok(BigRational::zero());
    }
    let mut dp = vec![BigUint::zero(); m + 1];
    dp[0] = BigUint::one();
    for v in 0..size {
        if let Some(c) = below[v] {
            for (i, slot) in dp.iter_mut().enumerate() {
                if i != c {
                    *slot = BigUint::zero();
                }
            }
        }
        let mut nd = vec![BigUint::zero(); m + 1];
        for i in 0..=m {
            if dp[i].is_zero() {
                continue;
            }
            if !forced_in[v] {
                nd[i] += &dp[i];
            }
            if !forced_out[v] && i < m {
                nd[i + 1] += &dp[i];
            }
        }
        dp = nd;
    }
    let mut count = dp[m].clone();
    for f in 1..=(m - fixed) {
        count *= f;
    }
    let mut total = BigUint::one();
    for i in 0..m {
        total *= size - i;
    }
    Ok(ratio(count, total))
}

/// The factored value and its parts.
#[derive(Clone, Debug, PartialEq)]
pub struct FactoredQ {
    pub q_r: BigRational,
    /// Anchors in distinct cosets, given `K ⊇ K'`.
    pub lambda: BigRational,
    /// Extension probability given both events, averaged over the admissible `K`.
    pub nu: BigRational,
    /// The closed-form `ν_t` for the structure's `w'` in the quotient ambient.
    pub nu_closed_form: BigRational,
    pub value: BigRational,
}

impl FactoredQ {
    fn constant(v: BigRational) -> Self {
        FactoredQ {
            q_r: v.clone(),
            lambda: BigRational::one(),
            nu: BigRational::one(),
            nu_closed_form: BigRational::one(),
            value: v,
        }
    }

    /// `λ·ν`.
    pub fn q_c(&self) -> BigRational {
        &self.lambda * &self.nu
    }
}

/// `Q_s(D) = Q_s^R · λ · ν` through the quotient by `K'`; `D` is the arity of `s`.
pub fn q_s_factored(s: &PartialFunction) -> Result<FactoredQ> {
    if s.is_empty() {
        return Ok(FactoredQ::constant(BigRational::one()));
    }
    q_s_factored_with(&domain_structure(s)?)
}

pub fn q_s_factored_with(st: &DomainStructure) -> Result<FactoredQ> {
    let (p, n, big_d) = (st.p, st.n, st.big_d);
    let q_r = q_s_r(st.d_prime, p, n, big_d)?;
    if q_r.is_zero() {
        return Ok(FactoredQ::constant(BigRational::zero()));
    }
    if !st.consistent {
        let nu_closed_form = nu_t(st.w_prime, p, n - st.d_prime)?;
        return Ok(FactoredQ { q_r, lambda: BigRational::one(), nu: BigRational::zero(), nu_closed_form, value: BigRational::zero() });
    }
    let n_q = n - st.d_prime;
    let big_e = big_d / st.k_prime.order();
    let quot: Vec<GroupVector> =
        st.anchors.iter().map(|&a| st.k_prime.quotient_coords(&GroupVector::from_index(p, n, a))).collect();
    let lambda = lambda_t(&quot, p, n_q, big_e)?;
    let nu_closed_form = nu_t(st.w_prime, p, n_q)?;

    let e_h = log_p(big_e, p).expect("quotient of powers of p");
    let mut admissible = 0u64;
    let mut sum = BigRational::zero();
    for h in enumerate_subgroups(p, n_q, e_h)? {
        let distinct = {
            let mut seen: Vec<GroupVector> = quot.iter().map(|a| h.reduce(a)).collect();
            let before = seen.len();
            seen.sort_by_key(|v| v.to_index());
            seen.dedup();
            seen.len() == before
        };
        if !distinct {
            continue;
        }
        admissible += 1;
        let k = st.k_prime.lift_from_quotient(&h)?;
        if let Some(cons) = pi_k_constraints(&st.normalized, &k) {
            sum += pi_k_probability(&k, &cons)?;
        }
    }
    let nu = if admissible == 0 { BigRational::zero() } else { sum / BigRational::from_integer(admissible.into()) };
    let value = &q_r * &lambda * &nu;
    Ok(FactoredQ { q_r, lambda, nu, nu_closed_form, value })
}

/// `Q_s(D)` by summing the `Π_K` probability over every order-`D` subgroup.
pub fn q_s_by_subgroups(s: &PartialFunction) -> Result<BigRational> {
    if s.is_empty() {
        return Ok(BigRational::one());
    }
    let d = log_p(s.arity, s.p).ok_or(Error::NotPowerOfP(s.arity, s.p))?;
    let all = enumerate_subgroups(s.p, s.n, d)?;
    let mut sum = BigRational::zero();
    for k in &all {
        if let Some(cons) = pi_k_constraints(s, k) {
            sum += pi_k_probability(k, &cons)?;
        }
    }
    Ok(sum / BigRational::from_integer(all.len().into()))
}

#[cfg(test)]
mod tests;
