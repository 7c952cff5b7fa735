//! Random partial functions and the per-`s` degree report.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::checked_pow;
use crate::oracle::{rng_from_seed, sample_f_d_star_with, PermutationOracle};
use crate::poly::fit::fit_degree_exact;
use crate::poly::{domain_structure, q_s_factored_with, FactoredQ, FdStarTable, PartialFunction};

/// Attempts per requested corpus entry before giving up.
pub const CORPUS_ATTEMPTS: usize = 1000;

/// `count` partial functions of arity `N`, each the graph of a random member
/// of some `F_{D_0}*` padded with uniform permutations, on `{0^n}` plus up to
/// `dom_max - 1` further points. Only graphs whose σ-classification is
/// consistent at every `D = p^d <= N` are kept.
pub fn generate_corpus(p: u32, n: usize, big_n: usize, count: usize, dom_max: usize, seed: u64) -> Result<Vec<PartialFunction>> {
    let size = checked_pow(p, n).ok_or(Error::InvalidParameter("ambient too large".into()))?;
    if dom_max == 0 || dom_max > size {
        return Err(Error::InvalidParameter(format!("dom_max must lie in 1..={size}")));
    }
    let ds: Vec<usize> = (0..=n).filter_map(|d| checked_pow(p, d)).filter(|&v| v <= big_n).collect();
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > CORPUS_ATTEMPTS * count.max(1) {
            return Err(Error::InvalidParameter(format!("found only {} consistent partial functions", out.len())));
        }
        let d0 = *ds.choose(&mut rng).expect("D = 1 always qualifies");
        let o = sample_f_d_star_with(p, n, d0, &mut rng)?;
        let mut tables = o.tables();
        while tables.len() < big_n {
            tables.push(PermutationOracle::random(p, n, &mut rng)?.table().to_vec());
        }
        let mut others: Vec<usize> = (1..size).collect();
        others.shuffle(&mut rng);
        let extra = rng.gen_range(0..dom_max);
        let mut dom = vec![0];
        dom.extend_from_slice(&others[..extra]);
        let s = PartialFunction::from_graph(p, n, &tables, &dom)?;
        let mut consistent = true;
        for &d in &ds {
            consistent &= domain_structure(&s.restrict(d)?)?.consistent;
        }
        if consistent {
            out.push(s);
        }
    }
    Ok(out)
}

fn show(q: &BigRational) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

#[derive(Clone, Debug, Serialize)]
pub struct DEntry {
    #[serde(rename = "D")]
    pub big_d: usize,
    pub consistent: bool,
    pub v1: usize,
    pub w: usize,
    #[serde(rename = "D_prime")]
    pub big_d_prime: usize,
    pub w_prime: usize,
    pub enumerated: String,
    pub factored: String,
    pub q_r: String,
    pub lambda: String,
    pub nu: String,
    pub nu_closed_form: String,
    pub equal: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SEntry {
    pub index: usize,
    pub dom: Vec<usize>,
    pub dom_size: usize,
    pub per_d: Vec<DEntry>,
    pub degree_q: usize,
    pub degree_q_r: usize,
    /// Fitted over the `D` where `Q_s^R` is nonzero; `None` with fewer than two such points.
    pub degree_q_c: Option<usize>,
    /// Max over `D` of `v_1 - 1`.
    pub bound_q_r: usize,
    /// Max over `D` of `w`.
    pub bound_q_c: usize,
    pub exact_match: bool,
    pub pass_q: bool,
    pub pass_q_r: bool,
    pub pass_q_c: bool,
}

impl SEntry {
    pub fn passes(&self) -> bool {
        self.exact_match && self.pass_q && self.pass_q_r && self.pass_q_c
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DegreeReport {
    pub p: u32,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub d_values: Vec<usize>,
    pub corpus_size: usize,
    pub exact_matches: usize,
    pub pass_q: usize,
    pub pass_q_r: usize,
    pub pass_q_c: usize,
    pub pass_all: usize,
    pub entries: Vec<SEntry>,
}

fn int(v: usize) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Enumerated and factored `Q_s(D)` at every `D = p^d <= N`, with fitted degrees.
pub fn degree_report(corpus: &[PartialFunction]) -> Result<DegreeReport> {
    let first = corpus.first().ok_or(Error::InvalidParameter("empty corpus".into()))?;
    let (p, n, big_n) = (first.p(), first.n(), first.arity());
    if corpus.iter().any(|s| s.p() != p || s.n() != n || s.arity() != big_n) {
        return Err(Error::InvalidParameter("corpus entries must share p, n and arity".into()));
    }
    let d_values: Vec<usize> = (0..=n).filter_map(|d| checked_pow(p, d)).filter(|&v| v <= big_n).collect();
    if d_values.len() < 2 {
        return Err(Error::InvalidParameter("need at least two values of D".into()));
    }
    let tables = d_values.iter().map(|&d| FdStarTable::build(p, n, d)).collect::<Result<Vec<_>>>()?;

    let mut entries = Vec::with_capacity(corpus.len());
    for (index, s) in corpus.iter().enumerate() {
        if !s.contains(0) {
            return Err(Error::InvalidParameter(format!("corpus entry {index} lacks 0^n")));
        }
        let mut per_d = Vec::new();
        let mut q_pts = Vec::new();
        let mut qr_pts = Vec::new();
        let mut qc_pts = Vec::new();
        let (mut bound_q_r, mut bound_q_c) = (0, 0);
        for (&big_d, table) in d_values.iter().zip(&tables) {
            let sd = s.restrict(big_d)?;
            let st = domain_structure(&sd)?;
            let f: FactoredQ = q_s_factored_with(&st)?;
            let e = table.q_s(s)?;
            bound_q_r = bound_q_r.max(st.v1 - 1);
            bound_q_c = bound_q_c.max(st.w);
            q_pts.push((int(big_d), e.clone()));
            qr_pts.push((int(big_d), f.q_r.clone()));
            if !f.q_r.is_zero() {
                qc_pts.push((int(big_d), f.q_c()));
            }
            per_d.push(DEntry {
                big_d,
                consistent: st.consistent,
                v1: st.v1,
                w: st.w,
                big_d_prime: st.k_prime.order(),
                w_prime: st.w_prime,
                enumerated: show(&e),
                factored: show(&f.value),
                q_r: show(&f.q_r),
                lambda: show(&f.lambda),
                nu: show(&f.nu),
                nu_closed_form: show(&f.nu_closed_form),
                equal: e == f.value,
            });
        }
        let degree_q = fit_degree_exact(&q_pts)?.degree;
        let degree_q_r = fit_degree_exact(&qr_pts)?.degree;
        let degree_q_c = if qc_pts.len() >= 2 { Some(fit_degree_exact(&qc_pts)?.degree) } else { None };
        let exact_match = per_d.iter().all(|d| d.equal);
        entries.push(SEntry {
            index,
            dom: s.entries().keys().copied().collect(),
            dom_size: s.len(),
            per_d,
            degree_q,
            degree_q_r,
            degree_q_c,
            bound_q_r,
            bound_q_c,
            exact_match,
            pass_q: degree_q <= s.len(),
            pass_q_r: degree_q_r <= bound_q_r,
            pass_q_c: degree_q_c.is_none_or(|d| d <= bound_q_c),
        });
    }
    let count = |f: &dyn Fn(&SEntry) -> bool| entries.iter().filter(|e| f(e)).count();
    Ok(DegreeReport {
        p,
        n,
        big_n,
        d_values,
        corpus_size: entries.len(),
        exact_matches: count(&|e| e.exact_match),
        pass_q: count(&|e| e.pass_q),
        pass_q_r: count(&|e| e.pass_q_r),
        pass_q_c: count(&|e| e.pass_q_c),
        pass_all: count(&|e| e.passes()),
        entries,
    })
}
