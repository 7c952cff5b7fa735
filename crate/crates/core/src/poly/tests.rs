use std::sync::OnceLock;

use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::group::Subgroup;
use crate::oracle::{enumerate_pi_k, rng_from_seed, sample_f_d_star, sample_pi_k, sample_subgroup, InjectiveSeqs};

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn v(s: &str) -> GroupVector {
    GroupVector::parse(2, s).unwrap()
}

fn tables_n3() -> &'static Vec<FdStarTable> {
    static T: OnceLock<Vec<FdStarTable>> = OnceLock::new();
    T.get_or_init(|| [1, 2, 4, 8].iter().map(|&d| FdStarTable::build(2, 3, d).unwrap()).collect())
}

fn enumerated_n3(s: &PartialFunction) -> BigRational {
    let t = &tables_n3()[s.arity().trailing_zeros() as usize];
    t.q_s(s).unwrap()
}

#[test]
fn extends_trivial_cases() {
    let o = sample_f_d_star(2, 3, 2, 5).unwrap();
    let empty = PartialFunction::new(2, 3, 2).unwrap();
    assert!(extends(&o, &empty).unwrap());
    let own = PartialFunction::from_graph(2, 3, &o.tables(), &[0, 3, 6]).unwrap();
    assert!(extends(&o, &own).unwrap());
    let mut wrong = own.clone();
    let mut y = o.eval_all(5);
    y[1] = (y[1] + 1) % 8;
    wrong.insert(5, y).unwrap();
    assert!(!extends(&o, &wrong).unwrap());
    assert!(extends(&o, &own.restrict(1).unwrap()).is_err());
}

#[test]
fn insert_rejects_conflicts_and_bad_arity() {
    let mut s = PartialFunction::new(2, 2, 2).unwrap();
    s.insert(1, vec![0, 1]).unwrap();
    s.insert(1, vec![0, 1]).unwrap();
    assert!(s.insert(1, vec![1, 0]).is_err());
    assert!(s.insert(2, vec![0]).is_err());
    assert!(s.insert(4, vec![0, 1]).is_err());
    assert!(PartialFunction::new(4, 2, 1).is_err());
}

#[test]
fn enumerated_trivial_values() {
    assert_eq!(q_s_enumerated(&PartialFunction::new(2, 3, 2).unwrap()).unwrap(), q(1, 1));
    let mut rep = PartialFunction::new(2, 3, 2).unwrap();
    rep.insert(0, vec![3, 3]).unwrap();
    assert_eq!(q_s_enumerated(&rep).unwrap(), q(0, 1));
    assert_eq!(q_s_factored(&rep).unwrap().value, q(0, 1));
}

#[test]
fn fd_star_table_matches_direct_enumeration() {
    let mut rng = rng_from_seed(1);
    for _ in 0..5 {
        let d = [1usize, 2, 4, 8][rng.gen_range(0..4)];
        let o = sample_f_d_star(2, 3, d, rng.gen()).unwrap();
        let s = PartialFunction::from_graph(2, 3, &o.tables(), &[0, rng.gen_range(1..8)]).unwrap();
        assert_eq!(enumerated_n3(&s), q_s_enumerated(&s).unwrap());
    }
}

#[test]
fn structure_of_small_domains() {
    let mut s = PartialFunction::new(2, 3, 2).unwrap();
    s.insert(0, vec![1, 4]).unwrap();
    let st = domain_structure(&s).unwrap();
    assert_eq!((st.w, st.v1, st.k_prime.order()), (1, 1, 1));
    // s(k) = σ_1 s(0) swaps the two components when D = 2
    s.insert(5, vec![4, 1]).unwrap();
    let st = domain_structure(&s).unwrap();
    assert_eq!((st.w, st.v1, st.k_prime.order()), (1, 2, 2));
    assert!(st.k_prime.contains(&v("101")));
    assert_eq!(st.classes, vec![vec![0, 5]]);
    assert!(domain_structure(&PartialFunction::from_graph(2, 3, &[vec![0; 8]], &[1]).unwrap()).is_err());
}

#[test]
fn rewrite_moves_class_members_onto_zero() {
    // two classes of size 2: {0, 3} and {1, 6} with 6 = 1 + 7
    let mut s = PartialFunction::new(2, 3, 2).unwrap();
    s.insert(0, vec![0, 1]).unwrap();
    s.insert(3, vec![1, 0]).unwrap();
    s.insert(1, vec![2, 5]).unwrap();
    s.insert(6, vec![5, 2]).unwrap();
    let st = domain_structure(&s).unwrap();
    assert_eq!(st.w, 2);
    assert_eq!(st.class_sizes, vec![2, 2]);
    assert_eq!(st.anchors, vec![0, 1]);
    // 6 - 1 = 7 joins the class of zero with value σ_1 s(0)
    assert_eq!(st.normalized.get(7), Some(&[1, 0][..]));
    assert_eq!(st.v1, 3);
    assert_eq!(st.k_prime.order(), 4);
    assert_eq!(enumerated_n3(&s), enumerated_n3(&st.normalized));
}

#[test]
fn q_r_closed_forms() {
    for n in 1..=4 {
        for d in 0..=n {
            let big_d = 1usize << d;
            assert_eq!(q_s_r(0, 2, n, big_d).unwrap(), q(1, 1));
            assert_eq!(q_s_r(1, 2, n, big_d).unwrap(), q(big_d as i64 - 1, (1 << n) - 1));
            for dp in 0..=n {
                assert_eq!(q_s_r(dp, 2, n, big_d).unwrap(), q_s_r_product(dp, 2, n, big_d).unwrap());
            }
        }
    }
    for dp in 0..=3 {
        for d in 0..=3 {
            let big_d = 3usize.pow(d as u32);
            assert_eq!(q_s_r(dp, 3, 3, big_d).unwrap(), q_s_r_product(dp, 3, 3, big_d).unwrap());
        }
    }
    assert!(q_s_r(0, 2, 3, 3).is_err());
    assert!(q_s_r(0, 2, 3, 16).is_err());
}

#[test]
fn q_r_is_containment_probability() {
    let k = v("011");
    let members: Vec<OracleSequence> = enumerate_f_d_star(2, 3, 4).unwrap().collect();
    let hits = members.iter().filter(|o| o.hidden().unwrap().contains(&k)).count();
    assert_eq!(q(hits as i64, members.len() as i64), q(3, 7));
    assert_eq!(q_s_r(1, 2, 3, 4).unwrap(), q(3, 7));
}

#[test]
fn nu_closed_form() {
    assert_eq!(nu_t(0, 2, 3).unwrap(), q(1, 1));
    assert_eq!(nu_t(1, 2, 3).unwrap(), q(1, 8));
    assert_eq!(nu_t(1, 3, 2).unwrap(), q(1, 9));
    assert_eq!(nu_t(2, 2, 2).unwrap(), q(1, 12));
    assert!(nu_t(5, 2, 2).is_err());
}

/// Direct count over all order-E subgroups.
fn lambda_brute(anchors: &[GroupVector], p: u32, n_q: usize, e: usize) -> BigRational {
    let subs = enumerate_subgroups(p, n_q, e).unwrap();
    let good = subs
        .iter()
        .filter(|h| {
            let els = h.elements();
            (0..anchors.len()).all(|i| {
                (i + 1..anchors.len()).all(|j| !els.contains(&anchors[i].sub(&anchors[j]).unwrap()))
            })
        })
        .count();
    q(good as i64, subs.len() as i64)
}

#[test]
fn lambda_small_cases() {
    assert_eq!(lambda_t(&[v("010")], 2, 3, 4).unwrap(), q(1, 1));
    for nq in 1..=4usize {
        for e in 0..=nq {
            let a = GroupVector::from_index(2, nq, 0);
            let b = GroupVector::from_index(2, nq, 1);
            let big_e = 1i64 << e;
            assert_eq!(lambda_t(&[a, b], 2, nq, 1 << e).unwrap(), q(1, 1) - q(big_e - 1, (1 << nq) - 1));
        }
    }
    let three = [v("000"), v("011"), v("110")];
    for e in 0..=3 {
        assert_eq!(lambda_t(&three, 2, 3, 1 << e).unwrap(), lambda_brute(&three, 2, 3, e));
    }
    assert!(lambda_t(&three, 2, 3, 3).is_err());
    assert!(lambda_t(&three, 2, 3, 16).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lambda_matches_subgroup_enumeration(
        p in prop::sample::select(vec![2u32, 3]),
        raw in prop::collection::vec(0usize..81, 1..5),
        e_seed in 0usize..4,
    ) {
        let nq = if p == 2 { 4 } else { 3 };
        let size = p.pow(nq as u32) as usize;
        let mut pts: Vec<usize> = raw.iter().map(|r| r % size).collect();
        pts.dedup();
        let anchors: Vec<GroupVector> = pts.iter().map(|&x| GroupVector::from_index(p, nq, x)).collect();
        let e = e_seed % (nq + 1);
        let big_e = (p as usize).pow(e as u32);
        prop_assert_eq!(lambda_t(&anchors, p, nq, big_e).unwrap(), lambda_brute(&anchors, p, nq, e));
    }
}

/// Counts matching members of `Π_K` one by one.
fn pi_k_brute(k: &Subgroup, cons: &BTreeMap<usize, usize>) -> BigRational {
    let mut hits = 0i64;
    let mut total = 0i64;
    for o in enumerate_pi_k(k).unwrap() {
        total += 1;
        if cons.iter().all(|(&z, &val)| o.eval(z) == val) {
            hits += 1;
        }
    }
    q(hits, total)
}

#[test]
fn pi_k_counting_matches_enumeration() {
    let mut rng = rng_from_seed(7);
    for trial in 0..40 {
        let d = 1 + trial % 2;
        let k = sample_subgroup(2, 3, d, &mut rng).unwrap();
        let member = sample_pi_k(&k, rng.gen()).unwrap();
        let mut cons = BTreeMap::new();
        for _ in 0..rng.gen_range(1..4) {
            let z = rng.gen_range(0..8);
            // a third of the demands are arbitrary and may be unsatisfiable
            let val = if rng.gen_range(0..3) == 0 { rng.gen_range(0..8) } else { member.eval(z) };
            cons.insert(z, val);
        }
        let mut vals: Vec<usize> = cons.values().copied().collect();
        vals.sort_unstable();
        vals.dedup();
        if vals.len() != cons.len() {
            continue;
        }
        assert_eq!(pi_k_probability(&k, &cons).unwrap(), pi_k_brute(&k, &cons), "K = {k}, {cons:?}");
    }
}

fn random_s(seed: u64, dom_size: usize) -> PartialFunction {
    let mut rng = rng_from_seed(seed);
    let d0 = [1usize, 2, 4, 8][rng.gen_range(0..4)];
    let o = sample_f_d_star(2, 3, d0, rng.gen()).unwrap();
    let mut tables = o.tables();
    while tables.len() < 8 {
        tables.push(crate::oracle::PermutationOracle::random(2, 3, &mut rng).unwrap().table().to_vec());
    }
    let mut dom = vec![0];
    while dom.len() < dom_size {
        let x = rng.gen_range(1..8);
        if !dom.contains(&x) {
            dom.push(x);
        }
    }
    PartialFunction::from_graph(2, 3, &tables, &dom).unwrap()
}

#[test]
fn spec_pair_example_matches_factored() {
    let o = sample_f_d_star(2, 3, 2, 11).unwrap();
    let s = PartialFunction::from_graph(2, 3, &o.tables(), &[0]).unwrap();
    let f = q_s_factored(&s).unwrap();
    assert_eq!(f.q_r, q(1, 1));
    assert_eq!(f.lambda, q(1, 1));
    assert_eq!(f.value, enumerated_n3(&s));
}

#[test]
fn rewrite_preserves_extension_probability() {
    for seed in 0..30 {
        let s = random_s(seed, 3);
        for big_d in [1, 2, 4, 8] {
            let sd = s.restrict(big_d).unwrap();
            let st = domain_structure(&sd).unwrap();
            if st.consistent {
                assert_eq!(enumerated_n3(&sd), enumerated_n3(&st.normalized), "seed {seed} D {big_d}");
            }
        }
    }
}

#[test]
fn factored_equals_enumerated_on_random_s() {
    for seed in 100..160 {
        let s = random_s(seed, 1 + (seed as usize) % 4);
        for big_d in [1, 2, 4, 8] {
            let sd = s.restrict(big_d).unwrap();
            let e = enumerated_n3(&sd);
            assert_eq!(q_s_factored(&sd).unwrap().value, e, "seed {seed} D {big_d}");
            assert_eq!(q_s_by_subgroups(&sd).unwrap(), e);
        }
    }
}

#[test]
fn inconsistent_classes_give_zero_on_both_paths() {
    // 0 and 1 share a tuple at D = 1: the rewrite demands O(1) = O(0)
    let mut s = PartialFunction::new(2, 3, 1).unwrap();
    s.insert(0, vec![2]).unwrap();
    s.insert(1, vec![2]).unwrap();
    assert_eq!(q_s_factored(&s).unwrap().value, q(0, 1));
    assert_eq!(q_s_enumerated(&s).unwrap(), q(0, 1));
    // a σ-image that forces two different values on one point
    let mut s = PartialFunction::new(2, 3, 2).unwrap();
    s.insert(0, vec![0, 1]).unwrap();
    s.insert(3, vec![1, 0]).unwrap();
    s.insert(2, vec![4, 5]).unwrap();
    s.insert(1, vec![5, 4]).unwrap();
    s.insert(7, vec![6, 7]).unwrap();
    assert_eq!(q_s_factored(&s).unwrap().value, enumerated_n3(&s));
}

#[test]
fn empty_s_factors_to_one() {
    let s = PartialFunction::new(2, 3, 4).unwrap();
    assert_eq!(q_s_factored(&s).unwrap().value, q(1, 1));
}

#[test]
fn factored_works_for_p3() {
    let mut rng = rng_from_seed(21);
    for _ in 0..6 {
        let big_d = [1usize, 3][rng.gen_range(0..2)];
        let o = sample_f_d_star(3, 2, big_d, rng.gen()).unwrap();
        let s = PartialFunction::from_graph(3, 2, &o.tables(), &[0, rng.gen_range(1..9)]).unwrap();
        assert_eq!(q_s_factored(&s).unwrap().value, q_s_enumerated(&s).unwrap());
    }
}

#[test]
fn nu_closed_form_ignores_e() {
    for w in 0..4 {
        let a = nu_t(w, 2, 3).unwrap();
        assert!(a > BigRational::zero());
        assert_eq!(a, nu_t(w, 2, 3).unwrap());
    }
}

/// The conditional extension probability is not a function of `w'` alone:
/// for `s = {0 -> y}` the number of pinned values grows with `E = D`.
#[test]
fn conditional_extension_probability_moves_with_e() {
    let o = sample_f_d_star(2, 3, 8, 4).unwrap();
    let s = PartialFunction::from_graph(2, 3, &o.tables(), &[0]).unwrap();
    let nus: Vec<BigRational> = [1, 2, 4].iter().map(|&d| q_s_factored(&s.restrict(d).unwrap()).unwrap().nu).collect();
    assert_eq!(nus[0], q(1, 8));
    assert!(nus[0] > nus[1] && nus[1] > nus[2], "{nus:?}");
    // the closed form sees w' = 1 at every D
    for d in [1, 2, 4] {
        assert_eq!(q_s_factored(&s.restrict(d).unwrap()).unwrap().nu_closed_form, q(1, 8));
    }
}

/// Averaging one uniform pad block multiplies by the pad's own extension probability.
#[test]
fn pad_average_factors_exactly() {
    let perms: Vec<Vec<usize>> = InjectiveSeqs::new(4, 4).collect();
    let members: Vec<OracleSequence> = enumerate_f_d_star(2, 2, 1).unwrap().collect();
    let mut rng = rng_from_seed(5);
    for _ in 0..10 {
        let o = &members[rng.gen_range(0..members.len())];
        let pad = &perms[rng.gen_range(0..perms.len())];
        let dom = [0usize, rng.gen_range(1..4)];
        let full = PartialFunction::from_graph(2, 2, &[o.tables()[0].clone(), pad.clone()], &dom).unwrap();
        let mut hits = 0i64;
        for m in &members {
            for t in &perms {
                if full.extends_tables(&[m.tables()[0].clone(), t.clone()]) {
                    hits += 1;
                }
            }
        }
        let joint = q(hits, (members.len() * perms.len()) as i64);
        let core = q_s_enumerated(&full.restrict(1).unwrap()).unwrap();
        // two fixed values of a uniform permutation on 4 points
        assert_eq!(joint, core * q(1, 12));
    }
}
