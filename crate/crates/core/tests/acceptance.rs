//! One pass/fail line per acceptance criterion. Exits nonzero if any fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;

use emq_core::group::{beta, checked_pow, enumerate_subgroups, GroupVector};
use emq_core::oracle::{
    enumerate_f_d_star, shift_equivalence_holds, make_em_instance, pad_sequence, rng_from_seed, sample_f_d_star,
};
use emq_core::poly::{
    degree_report, generate_corpus, interpolate_exact, koiran_bound, q_of_d_enumerated, QOptions,
};
use emq_core::reduction::{compile_to_sync, random_standard_algorithm, tv_distance};
use emq_core::sim::{Gate, OracleTables, Simulator, StateVector};
use emq_core::simon::{gdikem_distinguisher_1q, km_attack};

const TV_TOL: f64 = 1e-9;
const SIM_TOL: f64 = 1e-9;
const RESIDUAL_TOL: f64 = 1e-9;
const PREDICTION_TOL: f64 = 1e-6;
const KOIRAN_TOL: f64 = 1e-2;
const KM_SUCCESS_FLOOR: f64 = 0.90;
const CORPUS_SIZE: usize = 60;

struct Outcome {
    pass: bool,
    detail: String,
}

/// Every subgroup as a bitmask of its elements, by closing spans of generator tuples.
fn brute_subgroup_counts(p: u32, n: usize) -> Vec<usize> {
    let size = checked_pow(p, n).unwrap();
    let add = |a: usize, b: usize| {
        let (x, y) = (GroupVector::from_index(p, n, a), GroupVector::from_index(p, n, b));
        x.add(&y).unwrap().to_index()
    };
    let mut found: BTreeSet<u128> = BTreeSet::new();
    let mut frontier: BTreeSet<u128> = [1u128].into();
    found.insert(1);
    while !frontier.is_empty() {
        let mut next = BTreeSet::new();
        for &set in &frontier {
            for g in 0..size {
                if set >> g & 1 == 1 {
                    continue;
                }
                // close set ∪ {g} under addition
                let mut cur = set;
                loop {
                    let els: Vec<usize> = (0..size).filter(|&e| cur >> e & 1 == 1).collect();
                    let mut grown = cur | 1u128 << g;
                    for &a in &els {
                        for &b in &els {
                            grown |= 1u128 << add(a, b);
                        }
                        grown |= 1u128 << add(a, g);
                    }
                    if grown == cur {
                        break;
                    }
                    cur = grown;
                }
                if found.insert(cur) {
                    next.insert(cur);
                }
            }
        }
        frontier = next;
    }
    let mut counts = vec![0usize; n + 1];
    for set in found {
        let order = set.count_ones() as usize;
        let k = (0..=n).find(|&k| checked_pow(p, k).unwrap() == order).unwrap();
        counts[k] += 1;
    }
    counts
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for (p, max_n) in [(2u32, 4usize), (3, 3)] {
        for n in 1..=max_n {
            let brute = brute_subgroup_counts(p, n);
            for k in 0..=n {
                checked += 1;
                let b = beta(p, n, k).unwrap();
                let listed = enumerate_subgroups(p, n, k).unwrap().len();
                if b != brute[k].into() || listed != brute[k] {
                    mismatches.push(format!("({p},{n},{k}): beta {b}, listed {listed}, brute {}", brute[k]));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: mismatches.is_empty() && elapsed < Duration::from_secs(60),
        detail: format!("{checked} (p,n,k) cases, {} mismatches {:?}, {:.1?}", mismatches.len(), mismatches, elapsed),
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut sequences = 0u64;
    let mut violations = 0u64;
    for big_d in [1usize, 2, 4, 8] {
        for o in enumerate_f_d_star(2, 3, big_d).unwrap() {
            sequences += 1;
            let k = o.hidden().unwrap().clone();
            if !shift_equivalence_holds(&o, &k) {
                violations += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: violations == 0 && sequences == 40320 + 11760 + 392 + 8 && elapsed < Duration::from_secs(300),
        detail: format!("{sequences} sequences, {violations} violations, {elapsed:.1?}"),
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let (n, m, trials) = (6, 10, 200u64);
    let mut correct = 0;
    let mut samples = 0;
    let mut orthogonal = 0;
    for seed in 0..trials {
        let inst = make_em_instance(2, n, seed, false).unwrap();
        let r = km_attack(&inst, m, seed).unwrap();
        if r.keys_correct {
            correct += 1;
        }
        for z in &r.samples {
            samples += 1;
            if z.dot(&inst.k1).unwrap() == 0 {
                orthogonal += 1;
            }
        }
    }
    let rate = correct as f64 / trials as f64;
    let elapsed = start.elapsed();
    Outcome {
        pass: rate >= KM_SUCCESS_FLOOR && orthogonal == samples && elapsed < Duration::from_secs(600),
        detail: format!(
            "n={n} m={m}: {correct}/{trials} full key recoveries ({rate:.3}), {orthogonal}/{samples} samples orthogonal, {elapsed:.1?}"
        ),
    }
}

fn criterion_4() -> Outcome {
    let sim = Simulator::default();
    let (p, n, big_n) = (2u32, 3usize, 2usize);
    let mut worst_tv = 0.0f64;
    let mut worst_residual = 0.0f64;
    let mut counts_ok = true;
    for seed in 0..20u64 {
        let mut rng = rng_from_seed(1000 + seed);
        let t = rng.gen_range(0..=2);
        let a = random_standard_algorithm(p, n, 1, 1, t, &mut rng).unwrap();
        let c = compile_to_sync(&a, big_n).unwrap();
        counts_ok &= c.compiled.query_count() == 2 * a.query_count();
        let space = checked_pow(p, a.measured.len()).unwrap();
        let o = sample_f_d_star(p, n, 2, seed).unwrap();
        let tables = OracleTables::from(&pad_sequence(&o, big_n, seed).unwrap());
        let dense = |d: &emq_core::sim::Distribution| (0..space).map(|k| d.get(&k).copied().unwrap_or(0.0)).collect::<Vec<_>>();
        let d1 = dense(&sim.output_distribution(&a, &tables).unwrap());
        let d2 = dense(&sim.output_distribution(&c.compiled, &tables).unwrap());
        worst_tv = worst_tv.max(tv_distance(&d1, &d2).unwrap());
        worst_residual = worst_residual.max(c.residual_block_mass(&tables, &sim).unwrap());
    }
    Outcome {
        pass: worst_tv <= TV_TOL && counts_ok && worst_residual <= RESIDUAL_TOL,
        detail: format!(
            "20 circuits: max TV {worst_tv:.2e}, query counts 2T {}, max ancilla mass after uncompute {worst_residual:.2e}",
            if counts_ok { "exact" } else { "WRONG" }
        ),
    }
}

fn criterion_5() -> Outcome {
    let corpus = generate_corpus(2, 3, 8, CORPUS_SIZE, 4, 2024).unwrap();
    let r = degree_report(&corpus).unwrap();
    let worst = r
        .entries
        .iter()
        .filter(|e| !e.pass_q)
        .map(|e| format!("#{} deg {} > |dom| {}", e.index, e.degree_q, e.dom_size))
        .take(3)
        .collect::<Vec<_>>();
    Outcome {
        pass: r.corpus_size >= 50 && r.pass_all == r.corpus_size,
        detail: format!(
            "{} partial functions: exact equality {}/{}, deg Q_s^R <= v1-1 {}/{}, deg Q_s^C <= w {}/{}, deg Q_s <= |dom| {}/{}; e.g. {:?}",
            r.corpus_size,
            r.exact_matches,
            r.corpus_size,
            r.pass_q_r,
            r.corpus_size,
            r.pass_q_c,
            r.corpus_size,
            r.pass_q,
            r.corpus_size,
            worst
        ),
    }
}

fn to_rational(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

fn criterion_6() -> Outcome {
    let (p, n, big_n) = (2u32, 3usize, 8usize);
    let alg = gdikem_distinguisher_1q(p, n, big_n).unwrap();
    let qs: Vec<f64> = [1usize, 2, 4, 8]
        .iter()
        .map(|&d| q_of_d_enumerated(&alg, p, n, d, big_n, &QOptions::default()).unwrap().value)
        .collect();
    let pts: Vec<(BigRational, BigRational)> =
        [1, 2, 4].iter().zip(&qs).map(|(&d, &v)| (BigRational::from_integer(BigInt::from(d)), to_rational(v))).collect();
    let predicted = interpolate_exact(&pts, &BigRational::from_integer(BigInt::from(8))).unwrap();
    let predicted: f64 = num_traits::ToPrimitive::to_f64(&predicted).unwrap();
    let err = (predicted - qs[3]).abs();
    Outcome {
        pass: err <= PREDICTION_TOL,
        detail: format!(
            "Q(1,2,4,8) = {:.9}, {:.9}, {:.9}, {:.9}; quadratic predicts Q(8) = {predicted:.9}, error {err:.3e}; Q(2) > Q(1): {}",
            qs[0],
            qs[1],
            qs[2],
            qs[3],
            qs[1] > qs[0]
        ),
    }
}

fn criterion_7() -> Outcome {
    let eps = 1.0 / 3.0;
    let b64 = koiran_bound(2, 64, eps).unwrap();
    let b128 = koiran_bound(2, 128, eps).unwrap();
    // 2^67 * (2 - 4/3) = 2^68 / 3
    let hand = ((68.0 - 3f64.log2()) - 1.0) / 4.0;
    let ratio = b128 / b64;
    Outcome {
        pass: (b64 - hand).abs() <= KOIRAN_TOL && (b64 - 16.35).abs() <= KOIRAN_TOL && (1.9..=2.1).contains(&ratio),
        detail: format!("bound(2, 64, 1/3) = {b64:.4} (hand {hand:.4}), bound(128)/bound(64) = {ratio:.4}"),
    }
}

fn criterion_8() -> Outcome {
    let sim = Simulator::default();
    let mut worst_norm = 0.0f64;
    let mut worst_order = 0.0f64;
    let mut worst_qft = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = rng_from_seed(5000 + seed);
        let p = if seed % 2 == 0 { 2 } else { 3 };
        let n = 2;
        let t = rng.gen_range(0..=2);
        let a = random_standard_algorithm(p, n, 1, 1, t, &mut rng).unwrap();
        let o = sample_f_d_star(p, n, p as usize, seed).unwrap();
        let tables = OracleTables::from(&o);
        let mut observe = |_: usize, _: &emq_core::sim::Stage, s: &StateVector| {
            worst_norm = worst_norm.max((s.norm_sqr() - 1.0).abs());
        };
        sim.run(&a, &tables, Some(&mut observe)).unwrap();

        let l = &a.layout;
        let s0 = StateVector::random(p, l.total_digits, &mut rng).unwrap();
        let mut s = s0.clone();
        for _ in 0..p {
            s.apply_oracle_standard(l, &tables, false).unwrap();
        }
        worst_order = worst_order.max(s.distance(&s0));

        let len = rng.gen_range(1..=l.total_digits);
        let start = rng.gen_range(0..=l.total_digits - len);
        let mut s = s0.clone();
        s.apply_gate(&Gate::Qft { start, len });
        s.apply_gate(&Gate::InverseQft { start, len });
        worst_qft = worst_qft.max(s.distance(&s0));
    }
    Outcome {
        pass: worst_norm <= SIM_TOL && worst_order <= SIM_TOL && worst_qft <= SIM_TOL,
        detail: format!(
            "100 circuits: max norm drift {worst_norm:.2e}, max O^p distance {worst_order:.2e}, max QFT round-trip distance {worst_qft:.2e}"
        ),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("subgroup counting", criterion_1),
        ("hidden-shift equivalence on F_D*", criterion_2),
        ("KM attack success", criterion_3),
        ("standard-to-synchronized compilation", criterion_4),
        ("partial-function degree bounds", criterion_5),
        ("Q(D) quadratic interpolation", criterion_6),
        ("Koiran bound calculator", criterion_7),
        ("simulator integrity", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let tag = format!("{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| *f == tag || name.contains(f.as_str())) {
            continue;
        }
        let out = run();
        if !out.pass {
            failed += 1;
        }
        println!("criterion {tag} [{}] {name}: {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
