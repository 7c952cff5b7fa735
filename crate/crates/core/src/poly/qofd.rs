//! `Q(D)`: mean acceptance of a synchronized algorithm over `F_D*` padded to `N`
//! blocks with uniform permutations.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::checked_pow;
use crate::oracle::{enumerate_f_d_star, sample_f_d_star_with, InjectiveSeqs, OracleSequence, PermutationOracle};
use crate::poly::fd_count;
use crate::sim::{DigitRange, Gate, OracleTables, QueryAlgorithm, QueryModel, Simulator, Stage, StateVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QMethod {
    /// Simulate every member of `F_D*`, and every padding when pads are live.
    Direct,
    /// One query: expand the final state over answer values and average the
    /// joint law of `(O(x), O(x'))` exactly.
    TwoPoint,
    Sampled,
}

#[derive(Clone, Debug)]
pub struct QOptions {
    /// Max number of oracle sequences simulated on the direct route.
    pub enumeration_cap: u128,
    /// Force one route instead of picking the cheapest exact one.
    pub method: Option<QMethod>,
    pub allow_sampling: bool,
    pub samples: usize,
    pub seed: u64,
    pub memory_cap: usize,
}

impl Default for QOptions {
    fn default() -> Self {
        QOptions {
            enumeration_cap: 200_000,
            method: None,
            allow_sampling: false,
            samples: 4000,
            seed: 0,
            memory_cap: 1 << 24,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QEstimate {
    #[serde(rename = "D")]
    pub big_d: usize,
    pub value: f64,
    /// Zero for the exact routes.
    pub std_error: f64,
    pub method: QMethod,
    /// Answer blocks that survive the inert-block check.
    pub active_blocks: Vec<usize>,
}

fn footprint(g: &Gate) -> Vec<DigitRange> {
    match g {
        Gate::Qft { start, len } | Gate::InverseQft { start, len } | Gate::Permutation { start, len, .. } => {
            vec![DigitRange::new(*start, *len)]
        }
        Gate::Unitary { digits, .. } => digits.iter().map(|&d| DigitRange::new(d, 1)).collect(),
        Gate::AddRegisters { sources, dst, len, .. } | Gate::AddMin { sources, dst, len, .. } => {
            sources.iter().chain([dst]).map(|&s| DigitRange::new(s, *len)).collect()
        }
        Gate::SelectorAdd { selector, blocks, dst, len, .. } => {
            let mut v: Vec<DigitRange> = blocks.iter().chain([dst]).map(|&s| DigitRange::new(s, *len)).collect();
            v.push(*selector);
            v
        }
    }
}

fn meets(r: &DigitRange, block: &DigitRange) -> bool {
    r.len > 0 && r.start < block.start + block.len && block.start < r.start + r.len
}

/// A block is inert when it is only Fourier-transformed from `|0>`, once per
/// digit, before the first call, and is never read or measured. A uniform
/// register absorbs every shift, so such a block can be dropped exactly.
fn is_inert(alg: &QueryAlgorithm, block: usize) -> bool {
    let r = alg.layout.answer_range(block);
    if alg.measured.iter().any(|&d| d >= r.start && d < r.start + r.len) {
        return false;
    }
    let mut covered = vec![0usize; r.len];
    let mut called = false;
    for stage in &alg.stages {
        match stage {
            Stage::Oracle { .. } => called = true,
            Stage::Gate(g) => {
                let fp = footprint(g);
                if !fp.iter().any(|f| meets(f, &r)) {
                    continue;
                }
                let inside = fp.len() == 1 && fp[0].start >= r.start && fp[0].start + fp[0].len <= r.start + r.len;
                if called || !inside || !matches!(g, Gate::Qft { .. } | Gate::InverseQft { .. }) {
                    return false;
                }
                for d in fp[0].start..fp[0].start + fp[0].len {
                    covered[d - r.start] += 1;
                }
            }
        }
    }
    covered.iter().all(|&c| c == 1)
}

fn remap_gate(g: &Gate, map: &impl Fn(usize) -> usize) -> Gate {
    match g {
        Gate::Qft { start, len } => Gate::Qft { start: map(*start), len: *len },
        Gate::InverseQft { start, len } => Gate::InverseQft { start: map(*start), len: *len },
        Gate::Unitary { digits, matrix } => {
            Gate::Unitary { digits: digits.iter().map(|&d| map(d)).collect(), matrix: matrix.clone() }
        }
        Gate::Permutation { start, len, table } => Gate::Permutation { start: map(*start), len: *len, table: table.clone() },
        Gate::AddRegisters { sources, dst, len, subtract } => Gate::AddRegisters {
            sources: sources.iter().map(|&s| map(s)).collect(),
            dst: map(*dst),
            len: *len,
            subtract: *subtract,
        },
        Gate::AddMin { sources, dst, len, subtract } => Gate::AddMin {
            sources: sources.iter().map(|&s| map(s)).collect(),
            dst: map(*dst),
            len: *len,
            subtract: *subtract,
        },
        Gate::SelectorAdd { selector, blocks, dst, len, subtract } => Gate::SelectorAdd {
            selector: DigitRange::new(map(selector.start), selector.len),
            blocks: blocks.iter().map(|&b| map(b)).collect(),
            dst: map(*dst),
            len: *len,
            subtract: *subtract,
        },
    }
}

/// Removes inert answer blocks and the gates on them. Returns the smaller
/// algorithm and the original indices of the blocks it keeps.
pub fn drop_inert_blocks(alg: &QueryAlgorithm) -> Result<(QueryAlgorithm, Vec<usize>)> {
    alg.validate()?;
    if alg.model != QueryModel::Synchronized {
        return Err(Error::InvalidCircuit("inert-block analysis needs a synchronized algorithm".into()));
    }
    let l = &alg.layout;
    let blocks = l.answers.len();
    let inert: Vec<bool> = (0..blocks).map(|b| is_inert(alg, b)).collect();
    let mut keep: Vec<usize> = (0..blocks).filter(|&b| !inert[b]).collect();
    // the model needs at least one block
    if keep.is_empty() {
        keep.push(0);
    }
    let dropped: Vec<DigitRange> =
        (0..blocks).filter(|b| !keep.contains(b)).map(|b| l.answer_range(b)).collect();
    let in_dropped = |d: usize| dropped.iter().any(|r| d >= r.start && d < r.start + r.len);
    let map = |d: usize| d - (0..d).filter(|&e| in_dropped(e)).count();
    let mut stages = Vec::with_capacity(alg.stages.len());
    for stage in &alg.stages {
        match stage {
            Stage::Gate(g) if footprint(g).iter().any(|f| dropped.iter().any(|r| meets(f, r))) => {}
            Stage::Gate(g) => stages.push(Stage::Gate(remap_gate(g, &map))),
            Stage::Oracle { inverse } => stages.push(Stage::Oracle { inverse: *inverse }),
        }
    }
    let mut layout = l.clone();
    layout.total_digits = l.total_digits - dropped.len() * l.n;
    layout.query = map(l.query);
    layout.selector = l.selector.map(|s| DigitRange::new(map(s.start), s.len));
    layout.answers = keep.iter().map(|&b| map(l.answers[b])).collect();
    let out = QueryAlgorithm {
        layout,
        model: alg.model,
        stages,
        measured: alg.measured.iter().map(|&d| map(d)).collect(),
        accept: alg.accept.clone(),
    };
    out.validate()?;
    Ok((out, keep))
}

fn tables_for(o: &OracleSequence, pads: &[&[usize]], active: &[usize], big_d: usize) -> Vec<Vec<usize>> {
    let mut next_pad = pads.iter();
    active
        .iter()
        .map(|&b| match b < big_d {
            true => o.oracles()[b].table().to_vec(),
            false => next_pad.next().expect("one pad table per live pad block").to_vec(),
        })
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean acceptance probability over `F_D*` padded to `N` blocks.
pub fn q_of_d_enumerated(
    alg: &QueryAlgorithm,
    p: u32,
    n: usize,
    big_d: usize,
    big_n: usize,
    opts: &QOptions,
) -> Result<QEstimate> {
    let l = &alg.layout;
    if l.p != p || l.n != n {
        return Err(Error::AmbientMismatch { p1: l.p, n1: l.n, p2: p, n2: n });
    }
    if alg.model != QueryModel::Synchronized || l.answers.len() != big_n {
        return Err(Error::InvalidCircuit(format!("need a synchronized algorithm with {big_n} answer blocks")));
    }
    if big_d > big_n {
        return Err(Error::InvalidParameter(format!("D = {big_d} exceeds N = {big_n}")));
    }
    let count = fd_count(p, n, big_d)?;
    let (reduced, active) = drop_inert_blocks(alg)?;
    let pads_live = active.iter().filter(|&&b| b >= big_d).count();
    let size = checked_pow(p, n).expect("layout fits the simulator");
    let perms = (1..=size as u128).try_fold(1u128, |acc, v| acc.checked_mul(v)).unwrap_or(u128::MAX);
    let direct_cost = (0..pads_live).try_fold(count, |acc, _| acc.checked_mul(perms)).unwrap_or(u128::MAX);
    let method = match opts.method {
        Some(m) => m,
        None if direct_cost <= opts.enumeration_cap && pads_live == 0 => QMethod::Direct,
        None if reduced.query_count() == 1 && count <= opts.enumeration_cap => QMethod::TwoPoint,
        None if direct_cost <= opts.enumeration_cap => QMethod::Direct,
        None if opts.allow_sampling => QMethod::Sampled,
        None => {
            return Err(Error::SizeGuard { what: "Q(D) enumeration", needed: direct_cost, cap: opts.enumeration_cap })
        }
    };
    let sim = Simulator::new(opts.memory_cap);
    let (value, std_error) = match method {
        QMethod::Direct => {
            if direct_cost > opts.enumeration_cap {
                return Err(Error::SizeGuard { what: "Q(D) enumeration", needed: direct_cost, cap: opts.enumeration_cap });
            }
            (direct(&sim, &reduced, &active, p, n, big_d, pads_live)?, 0.0)
        }
        QMethod::TwoPoint => {
            if count > opts.enumeration_cap {
                return Err(Error::SizeGuard { what: "F_D* enumeration", needed: count, cap: opts.enumeration_cap });
            }
            (two_point(&reduced, &active, p, n, big_d, opts.memory_cap)?, 0.0)
        }
        QMethod::Sampled => sampled(&sim, &reduced, &active, p, n, big_d, opts)?,
    };
    Ok(QEstimate { big_d, value, std_error, method, active_blocks: active })
}

fn direct(
    sim: &Simulator,
    alg: &QueryAlgorithm,
    active: &[usize],
    p: u32,
    n: usize,
    big_d: usize,
    pads_live: usize,
) -> Result<f64> {
    let size = checked_pow(p, n).expect("checked by caller");
    let members: Vec<OracleSequence> = enumerate_f_d_star(p, n, big_d)?.collect();
    let all_perms: Vec<Vec<usize>> = if pads_live > 0 { InjectiveSeqs::new(size, size).collect() } else { Vec::new() };
    let pad_choices = all_perms.len().max(1).pow(pads_live as u32);
    let values = members
        .par_iter()
        .map(|o| {
            let mut acc = 0.0;
            for choice in 0..pad_choices {
                let mut rest = choice;
                let pads: Vec<&[usize]> = (0..pads_live)
                    .map(|_| {
                        let t = &all_perms[rest % all_perms.len()];
                        rest /= all_perms.len();
                        t.as_slice()
                    })
                    .collect();
                let tables = OracleTables::new(p, n, tables_for(o, &pads, active, big_d))?;
                acc += sim.acceptance_probability(alg, &tables)?;
            }
            Ok(acc / pad_choices as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean(&values))
}

fn sampled(
    sim: &Simulator,
    alg: &QueryAlgorithm,
    active: &[usize],
    p: u32,
    n: usize,
    big_d: usize,
    opts: &QOptions,
) -> Result<(f64, f64)> {
    if opts.samples < 2 {
        return Err(Error::InvalidParameter("sampling needs at least 2 samples".into()));
    }
    let pads_live = active.iter().filter(|&&b| b >= big_d).count();
    let values = (0..opts.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            let o = sample_f_d_star_with(p, n, big_d, &mut rng)?;
            let pads: Vec<PermutationOracle> =
                (0..pads_live).map(|_| PermutationOracle::random(p, n, &mut rng)).collect::<Result<_>>()?;
            let pad_tables: Vec<&[usize]> = pads.iter().map(|t| t.table()).collect();
            let tables = OracleTables::new(p, n, tables_for(&o, &pad_tables, active, big_d))?;
            sim.acceptance_probability(alg, &tables)
        })
        .collect::<Result<Vec<f64>>>()?;
    let m = mean(&values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    Ok((m, (var / values.len() as f64).sqrt()))
}

/// `Q = sum_{x,x'} E <w_{x', O(x')} | w_{x, O(x)}>` with `w_{x,a}` the accepted part
/// of the final state when the call on query `x` returns the tuple `a`.
fn two_point(alg: &QueryAlgorithm, active: &[usize], p: u32, n: usize, big_d: usize, memory_cap: usize) -> Result<f64> {
    let pos = match alg.stages.iter().position(|s| matches!(s, Stage::Oracle { .. })) {
        Some(i) if alg.query_count() == 1 => i,
        _ => return Err(Error::InvalidCircuit("the two-point route needs exactly one oracle call".into())),
    };
    let inverse = matches!(alg.stages[pos], Stage::Oracle { inverse: true });
    let l = &alg.layout;
    let size = checked_pow(p, n).expect("checked by caller");
    let core: Vec<usize> = active.iter().copied().filter(|&b| b < big_d).collect();
    let pads = active.len() - core.len();
    let sc = checked_pow(p, n * core.len()).ok_or(Error::InvalidParameter("tuple space overflow".into()))?;
    let sp = checked_pow(p, n * pads).ok_or(Error::InvalidParameter("tuple space overflow".into()))?;
    let dim = l.dimension(memory_cap)?;
    let vectors = size * sc * sp;
    if vectors.saturating_mul(dim) > memory_cap {
        return Err(Error::SizeGuard {
            what: "two-point expansion amplitudes",
            needed: (vectors as u128) * (dim as u128),
            cap: memory_cap as u128,
        });
    }

    let mut psi = StateVector::zero(p, l.total_digits, memory_cap)?;
    for s in &alg.stages[..pos] {
        if let Stage::Gate(g) = s {
            psi.apply_gate(g);
        }
    }
    let tuple_digits = |mut t: usize| {
        let mut parts = vec![0; active.len()];
        for slot in parts.iter_mut().rev() {
            *slot = t % size;
            t /= size;
        }
        parts
    };
    // w[x][a], a = core tuple * sp + pad tuple; None when the query branch is empty
    let w: Vec<Option<StateVector>> = (0..size * sc * sp)
        .into_par_iter()
        .map(|i| {
            let (x, a) = (i / (sc * sp), i % (sc * sp));
            let mut st = psi.clone();
            st.keep_register_value(l.query_range(), x);
            if st.norm_sqr() == 0.0 {
                return None;
            }
            for (j, v) in tuple_digits(a).into_iter().enumerate() {
                st.shift_register(l.answer_range(j), v, inverse);
            }
            for s in &alg.stages[pos + 1..] {
                if let Stage::Gate(g) = s {
                    st.apply_gate(g);
                }
            }
            st.project_accepted(&alg.measured, &alg.accept);
            Some(st)
        })
        .collect();
    let vec_at = |x: usize, a: usize| w[x * sc * sp + a].as_ref();
    let ip = |x2: usize, a2: usize, x: usize, a: usize| match (vec_at(x2, a2), vec_at(x, a)) {
        (Some(u), Some(v)) => u.inner(v),
        _ => Complex64::new(0.0, 0.0),
    };

    // joint counts of (O_core(x), O_core(x')) over F_D*
    let members: Vec<OracleSequence> = enumerate_f_d_star(p, n, big_d)?.collect();
    let cells = (size * sc).pow(2);
    let counts: Vec<u64> = members
        .par_iter()
        .fold(
            || vec![0u64; cells],
            |mut acc, o| {
                let vals: Vec<usize> = (0..size)
                    .map(|x| core.iter().fold(0, |t, &b| t * size + o.oracles()[b].eval(x)))
                    .collect();
                for x in 0..size {
                    for x2 in 0..size {
                        acc[((x * sc + vals[x]) * size + x2) * sc + vals[x2]] += 1;
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; cells],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(u, v)| *u += v);
                a
            },
        );

    let pad_pairs = (size * (size - 1)).pow(pads as u32) as f64;
    let distinct = |a: usize, b: usize| {
        let (mut a, mut b) = (a, b);
        (0..pads).all(|_| {
            let ok = a % size != b % size;
            a /= size;
            b /= size;
            ok
        })
    };
    let keys: Vec<usize> = (0..cells).filter(|&c| counts[c] > 0).collect();
    let total: Complex64 = keys
        .par_iter()
        .map(|&c| {
            let ac2 = c % sc;
            let x2 = c / sc % size;
            let ac = c / (sc * size) % sc;
            let x = c / (sc * size * sc);
            let mut g = Complex64::new(0.0, 0.0);
            if x == x2 {
                for ap in 0..sp {
                    g += ip(x2, ac2 * sp + ap, x, ac * sp + ap);
                }
                g /= sp as f64;
            } else {
                for ap in 0..sp {
                    for ap2 in 0..sp {
                        if distinct(ap, ap2) {
                            g += ip(x2, ac2 * sp + ap2, x, ac * sp + ap);
                        }
                    }
                }
                g /= pad_pairs;
            }
            g * counts[c] as f64
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok((total.re / members.len() as f64).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::f_d_star_count;
    use crate::sim::{AcceptSet, RegisterLayout};
    use crate::simon::{gdikem_distinguisher_1q, summed_collision_probability};

    fn trivial(p: u32, n: usize, big_n: usize, accept: AcceptSet) -> QueryAlgorithm {
        let layout = RegisterLayout::synchronized(p, n, big_n, 0).unwrap();
        QueryAlgorithm {
            layout,
            model: QueryModel::Synchronized,
            stages: vec![
                Stage::Gate(Gate::Qft { start: 0, len: n }),
                Stage::Oracle { inverse: false },
                Stage::Gate(Gate::Qft { start: 0, len: n }),
            ],
            measured: (0..n).collect(),
            accept,
        }
    }

    #[test]
    fn accept_all_and_none() {
        for d in [1, 2, 4] {
            let opts = QOptions::default();
            let one = q_of_d_enumerated(&trivial(2, 2, 4, AcceptSet::All), 2, 2, d, 4, &opts).unwrap();
            let zero = q_of_d_enumerated(&trivial(2, 2, 4, AcceptSet::None), 2, 2, d, 4, &opts).unwrap();
            assert!((one.value - 1.0).abs() < 1e-9, "{one:?}");
            assert!(zero.value.abs() < 1e-9);
        }
    }

    #[test]
    fn unread_blocks_are_dropped() {
        let alg = gdikem_distinguisher_1q(2, 3, 8).unwrap();
        let (reduced, keep) = drop_inert_blocks(&alg).unwrap();
        assert_eq!(keep, vec![0, 1]);
        assert_eq!(reduced.layout.total_digits, 9);
        assert_eq!(reduced.query_count(), 1);
        // blocks with no Fourier prep are live
        let (_, keep) = drop_inert_blocks(&trivial(2, 2, 3, AcceptSet::All)).unwrap();
        assert_eq!(keep, vec![0, 1, 2]);
    }

    #[test]
    fn dropping_inert_blocks_keeps_acceptance() {
        let alg = gdikem_distinguisher_1q(2, 2, 4).unwrap();
        let (reduced, keep) = drop_inert_blocks(&alg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let full: Vec<Vec<usize>> =
                (0..4).map(|_| PermutationOracle::random(2, 2, &mut rng).unwrap().table().to_vec()).collect();
            let small: Vec<Vec<usize>> = keep.iter().map(|&b| full[b].clone()).collect();
            let a = Simulator::default().acceptance_probability(&alg, &OracleTables::new(2, 2, full).unwrap()).unwrap();
            let b = Simulator::default().acceptance_probability(&reduced, &OracleTables::new(2, 2, small).unwrap()).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    /// Independent value: the distinguisher accepts with the collision
    /// probability of `O_0 + O_1`, averaged classically.
    fn classical_q(p: u32, n: usize, big_d: usize, big_n: usize) -> f64 {
        let size = checked_pow(p, n).unwrap();
        let members: Vec<OracleSequence> = enumerate_f_d_star(p, n, big_d).unwrap().collect();
        // blocks past the second never enter the sum
        let pads: Vec<Vec<usize>> =
            if big_d < 2 { InjectiveSeqs::new(size, size).collect() } else { vec![(0..size).collect()] };
        let mut acc = 0.0;
        for o in &members {
            for pad in &pads {
                let mut tables = o.tables();
                while tables.len() < big_n {
                    tables.push(pad.clone());
                }
                acc += summed_collision_probability(&OracleTables::new(p, n, tables).unwrap()) / pads.len() as f64;
            }
        }
        acc / members.len() as f64
    }

    #[test]
    fn routes_agree_with_classical_collisions_at_n2() {
        let alg = gdikem_distinguisher_1q(2, 2, 4).unwrap();
        for d in [1, 2, 4] {
            let expected = classical_q(2, 2, d, 4);
            for method in [QMethod::Direct, QMethod::TwoPoint] {
                let opts = QOptions { method: Some(method), ..QOptions::default() };
                let q = q_of_d_enumerated(&alg, 2, 2, d, 4, &opts).unwrap();
                assert!((q.value - expected).abs() < 1e-9, "D={d} {method:?}: {} vs {expected}", q.value);
            }
        }
    }

    #[test]
    fn sampling_tracks_the_exact_value() {
        let alg = gdikem_distinguisher_1q(2, 2, 2).unwrap();
        let exact = q_of_d_enumerated(&alg, 2, 2, 1, 2, &QOptions::default()).unwrap();
        let opts = QOptions { method: Some(QMethod::Sampled), samples: 3000, seed: 9, ..QOptions::default() };
        let est = q_of_d_enumerated(&alg, 2, 2, 1, 2, &opts).unwrap();
        assert!(est.std_error > 0.0);
        assert!((est.value - exact.value).abs() < 5.0 * est.std_error + 1e-9);
    }

    #[test]
    fn rejects_bad_requests() {
        let alg = gdikem_distinguisher_1q(2, 2, 2).unwrap();
        assert!(q_of_d_enumerated(&alg, 2, 2, 4, 2, &QOptions::default()).is_err());
        assert!(q_of_d_enumerated(&alg, 2, 2, 3, 2, &QOptions::default()).is_err());
        assert!(q_of_d_enumerated(&alg, 2, 2, 1, 3, &QOptions::default()).is_err());
        let tight = QOptions { enumeration_cap: 1, ..QOptions::default() };
        assert!(matches!(q_of_d_enumerated(&alg, 2, 2, 1, 2, &tight), Err(Error::SizeGuard { .. })));
        assert_eq!(f_d_star_count(2, 2, 0), Some(24));
    }
}
