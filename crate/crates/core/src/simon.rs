//! Simon-style algorithms built on the simulator: plain Simon sampling, the
//! Kuwakado-Morii key recovery against Even-Mansour, the generalized Simon
//! solver on oracle sequences, and a one-query reference distinguisher.
//!
//! All sampling is nonadaptive: every query of a run is the same circuit, so
//! the exact output distribution is computed once and sampled `m` times.
//! Reports still count `m` quantum queries.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{checked_pow, nullspace_dual, GroupVector, Subgroup};
use crate::oracle::{rng_from_seed, EmInstance, OracleSequence};
use crate::sim::{
    sample_index, AcceptSet, Gate, OracleTables, QueryAlgorithm, QueryModel, RegisterLayout, Simulator, Stage,
};

/// Largest nullspace dimension for which `km_attack` tries every candidate.
pub const KM_CANDIDATE_DIM_CAP: usize = 4;
pub const KM_PROBES: usize = 8;

fn qft(start: usize, len: usize) -> Stage {
    Stage::Gate(Gate::Qft { start, len })
}

/// QFT on the query register, one standard query to a single function, QFT again.
pub fn simon_circuit(p: u32, n: usize) -> Result<QueryAlgorithm> {
    Ok(QueryAlgorithm {
        layout: RegisterLayout::standard(p, n, 0, 0)?,
        model: QueryModel::Standard,
        stages: vec![qft(0, n), Stage::Oracle { inverse: false }, qft(0, n)],
        measured: (0..n).collect(),
        accept: AcceptSet::All,
    })
}

/// Exact distribution of the measured dual vector `z`, indexed by packed `z`.
pub fn simon_distribution(f: &OracleTables) -> Result<Vec<f64>> {
    if f.len() != 1 {
        return Err(Error::OracleMismatch("Simon sampling queries a single function".into()));
    }
    let alg = simon_circuit(f.p, f.n)?;
    let (state, _) = Simulator::default().run(&alg, f, None)?;
    Ok(state.marginal(&alg.measured))
}

fn draw<R: Rng + ?Sized>(dist: &[f64], p: u32, n: usize, m: usize, rng: &mut R) -> Vec<GroupVector> {
    (0..m).map(|_| GroupVector::from_index(p, n, sample_index(dist, rng))).collect()
}

/// One dual sample (one query).
pub fn simon_sample(f: &OracleTables, seed: u64) -> Result<GroupVector> {
    let dist = simon_distribution(f)?;
    Ok(draw(&dist, f.p, f.n, 1, &mut rng_from_seed(seed)).remove(0))
}

/// Nullspace of `m` dual samples. With too few independent samples this is a
/// strict supergroup of the hidden subgroup.
pub fn simon_solve(f: &OracleTables, m: usize, seed: u64) -> Result<Subgroup> {
    let dist = simon_distribution(f)?;
    let samples = draw(&dist, f.p, f.n, m, &mut rng_from_seed(seed));
    nullspace_dual(f.p, f.n, &samples)
}

/// Probability that `m` uniform samples from the dual of an order-2 subgroup of
/// Z_2^n span that whole dual: `prod_{0 <= i <= n-2} (1 - 2^(i-m))`.
pub fn simon_success_probability(n: usize, m: usize) -> f64 {
    (0..n.saturating_sub(1)).map(|i| 1.0 - 2f64.powi(i as i32 - m as i32)).product::<f64>().max(0.0)
}

/// The query block used for sums of oracle answers.
///
/// Blocks `1..` are put in uniform superposition and block 0 is set to minus
/// their sum. After one synchronized call, adding them back leaves block 0
/// holding `sum_{l < summed} O_l(x)` while the other blocks stay uniform and
/// unentangled.
fn summed_query_stages(layout: &RegisterLayout, summed: usize) -> (Vec<Stage>, Vec<Stage>) {
    let n = layout.n;
    let blocks = &layout.answers;
    let mut before = vec![qft(layout.query, n)];
    before.extend(blocks[1..].iter().map(|&b| qft(b, n)));
    let sources: Vec<usize> = blocks[1..summed].to_vec();
    let mut after = Vec::new();
    if !sources.is_empty() {
        before.push(Stage::Gate(Gate::AddRegisters { sources: sources.clone(), dst: blocks[0], len: n, subtract: true }));
        after.push(Stage::Gate(Gate::AddRegisters { sources, dst: blocks[0], len: n, subtract: false }));
    }
    (before, after)
}

/// One synchronized query to `(pi, EM)` that leaves `pi(x) + EM(x)` in block 0, then QFT on `x`.
pub fn km_circuit(n: usize) -> Result<QueryAlgorithm> {
    let layout = RegisterLayout::synchronized(2, n, 2, 0)?;
    let (mut stages, after) = summed_query_stages(&layout, 2);
    stages.push(Stage::Oracle { inverse: false });
    stages.extend(after);
    stages.push(qft(0, n));
    Ok(QueryAlgorithm { layout, model: QueryModel::Synchronized, stages, measured: (0..n).collect(), accept: AcceptSet::All })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackReport {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub recovered_k1: Option<GroupVector>,
    pub recovered_k2: Option<GroupVector>,
    /// Synchronized quantum queries.
    pub queries_used: usize,
    /// Classical evaluations of `pi` and `EM` spent on candidates and verification.
    pub classical_evaluations: usize,
    pub samples: Vec<GroupVector>,
    pub nullspace_dim: usize,
    /// The recovered keys passed every probe.
    pub success: bool,
    /// The recovered keys equal the instance keys.
    pub keys_correct: bool,
}

fn probe_points(n: usize) -> Vec<usize> {
    let size = 1usize << n;
    let mut pts: Vec<usize> = (0..KM_PROBES as u64)
        .map(|j| ((j.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 17) as usize) % size)
        .collect();
    pts.dedup();
    pts
}

/// Recovers `k1` by Simon sampling on `O(x) = EM(x) + pi(x)` and `k2 = EM(0) + pi(k1)`.
///
/// Every element of the sample nullspace is tried (nonzero ones first) when its
/// dimension is at most [`KM_CANDIDATE_DIM_CAP`]; a candidate is kept only if
/// `EM(x) = pi(x + k1) + k2` on every probe point.
pub fn km_attack(inst: &EmInstance, m: usize, seed: u64) -> Result<AttackReport> {
    let n = inst.n();
    let alg = km_circuit(n)?;
    let tables = OracleTables::from(inst);
    let (state, _) = Simulator::default().run(&alg, &tables, None)?;
    let dist = state.marginal(&alg.measured);
    let samples = draw(&dist, 2, n, m, &mut rng_from_seed(seed));
    let ns = nullspace_dual(2, n, &samples)?;

    let em = tables.tables[1].clone();
    let pi = inst.pi.table();
    let probes = probe_points(n);
    let mut evals = 0;
    let mut found = None;
    if ns.dim() <= KM_CANDIDATE_DIM_CAP {
        let mut cands: Vec<GroupVector> = ns.elements();
        cands.rotate_left(1); // zero last
        for k1 in cands {
            let k1i = k1.to_index();
            let k2 = em[0] ^ pi[k1i];
            evals += 2;
            let mut ok = true;
            for &x in &probes {
                evals += 2;
                if em[x] != pi[x ^ k1i] ^ k2 {
                    ok = false;
                    break;
                }
            }
            if ok {
                found = Some((k1, GroupVector::from_index(2, n, k2)));
                break;
            }
        }
    }
    let keys_correct = found.as_ref().is_some_and(|(a, b)| a == &inst.k1 && b == &inst.k2);
    Ok(AttackReport {
        n,
        m,
        seed,
        success: found.is_some(),
        keys_correct,
        recovered_k1: found.as_ref().map(|f| f.0.clone()),
        recovered_k2: found.map(|f| f.1),
        queries_used: m,
        classical_evaluations: evals,
        samples,
        nullspace_dim: ns.dim(),
    })
}

/// One synchronized query over `big_n` answer blocks.
///
/// Block 0 ends up holding `g(x) = O_0(x) + ... + O_{p-1}(x)`; the remaining
/// blocks are prepared uniformly and never touched again. The query register is
/// Fourier transformed and the run accepts on `z = 0`, i.e. with probability
/// equal to the collision probability of `g` on a uniform input.
pub fn gdikem_distinguisher_1q(p: u32, n: usize, big_n: usize) -> Result<QueryAlgorithm> {
    if big_n == 0 {
        return Err(Error::InvalidParameter("need at least one answer block".into()));
    }
    let layout = RegisterLayout::synchronized(p, n, big_n, 0)?;
    let (mut stages, after) = summed_query_stages(&layout, (p as usize).min(big_n));
    stages.push(Stage::Oracle { inverse: false });
    stages.extend(after);
    stages.push(qft(0, n));
    Ok(QueryAlgorithm {
        layout,
        model: QueryModel::Synchronized,
        stages,
        measured: (0..n).collect(),
        accept: AcceptSet::Outcomes([0].into()),
    })
}

/// Two queries per sample: compute all blocks, add their minimum into a target
/// register, uncompute the blocks, QFT the query register.
///
/// `min_i O_i(x) = min_{k in K} O_0(x + k)` is constant on cosets of `K` and
/// injective across cosets, so the measured `z` is uniform on the dual of `K`.
pub fn gs_circuit(p: u32, n: usize, big_d: usize) -> Result<QueryAlgorithm> {
    let layout = RegisterLayout::synchronized(p, n, big_d, n)?;
    let target = n + big_d * n;
    let stages = vec![
        qft(0, n),
        Stage::Oracle { inverse: false },
        Stage::Gate(Gate::AddMin { sources: layout.answers.clone(), dst: target, len: n, subtract: false }),
        Stage::Oracle { inverse: true },
        qft(0, n),
    ];
    Ok(QueryAlgorithm { layout, model: QueryModel::Synchronized, stages, measured: (0..n).collect(), accept: AcceptSet::All })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GsReport {
    pub recovered: Subgroup,
    pub samples: Vec<GroupVector>,
    pub queries_used: usize,
}

/// Generators of the subgroup hidden by `o`, from `m` samples (`2m` queries).
pub fn gs_solve(o: &OracleSequence, m: usize, seed: u64) -> Result<GsReport> {
    let (p, n) = (o.p(), o.n());
    let alg = gs_circuit(p, n, o.len())?;
    let (state, q) = Simulator::default().run(&alg, &OracleTables::from(o), None)?;
    let dist = state.marginal(&alg.measured);
    let samples = draw(&dist, p, n, m, &mut rng_from_seed(seed));
    Ok(GsReport { recovered: nullspace_dual(p, n, &samples)?, samples, queries_used: q * m })
}

/// Collision probability `sum_y (#{x : g(x) = y} / p^n)^2` of `g = O_0 + ... + O_{p-1}`.
pub fn summed_collision_probability(o: &OracleTables) -> f64 {
    let size = checked_pow(o.p, o.n).expect("table size");
    let used = (o.p as usize).min(o.len());
    let mut counts = vec![0usize; size];
    for x in 0..size {
        let g = o.tables[..used]
            .iter()
            .fold(0, |acc, t| crate::group::digitwise_add(acc, t[x], o.p, o.n, false));
        counts[g] += 1;
    }
    counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / (size * size) as f64
}
