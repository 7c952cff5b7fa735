//! Compiling standard-model query algorithms into the synchronized model.
//!
//! Each standard call `|i,x>|y> -> |i,x>|y + O_i(x)>` becomes a synchronized
//! call into fresh answer blocks, a selector-controlled copy of block `i` into
//! `y`, and a second synchronized call that returns the blocks to zero. The
//! second call uses the inverse oracle when `p > 2`.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::group::checked_pow;
use crate::sim::{
    random_unitary, AcceptSet, DigitRange, Distribution, Gate, OracleTables, QueryAlgorithm, QueryModel,
    RegisterLayout, Simulator, Stage, StateVector,
};

#[derive(Clone, Debug, PartialEq)]
pub struct CompiledAlgorithm {
    pub original: QueryAlgorithm,
    pub compiled: QueryAlgorithm,
    /// For each original call, the (compute, uncompute) call ordinals in `compiled`.
    pub query_map: Vec<(usize, usize)>,
    /// Stage index of each uncompute call in `compiled`.
    pub uncompute_stages: Vec<usize>,
}

/// Builds the synchronized `2T`-query version of a standard algorithm against
/// `big_n` oracles. The new answer blocks are appended after every original digit.
pub fn compile_to_sync(a: &QueryAlgorithm, big_n: usize) -> Result<CompiledAlgorithm> {
    a.validate()?;
    if a.model != QueryModel::Standard {
        return Err(Error::InvalidCircuit("only standard-model algorithms are compiled".into()));
    }
    let l = &a.layout;
    let (p, n) = (l.p, l.n);
    if big_n == 0 {
        return Err(Error::InvalidParameter("N must be positive".into()));
    }
    let selector_range = l.selector.map_or(1, |s| checked_pow(p, s.len).unwrap_or(usize::MAX));
    if selector_range > big_n {
        return Err(Error::InvalidParameter(format!("selector takes {selector_range} values but N = {big_n}")));
    }
    let base = l.total_digits;
    let blocks: Vec<usize> = (0..big_n).map(|b| base + b * n).collect();
    let layout = RegisterLayout {
        p,
        n,
        total_digits: base + big_n * n,
        selector: l.selector,
        query: l.query,
        answers: blocks.clone(),
    };
    let y = l.answers[0];
    let mut stages = Vec::new();
    let mut query_map = Vec::new();
    let mut uncompute_stages = Vec::new();
    let mut calls = 0;
    for stage in &a.stages {
        match stage {
            Stage::Gate(_) => stages.push(stage.clone()),
            Stage::Oracle { inverse } => {
                stages.push(Stage::Oracle { inverse: false });
                let copy = match l.selector {
                    Some(sel) => Gate::SelectorAdd { selector: sel, blocks: blocks.clone(), dst: y, len: n, subtract: *inverse },
                    None => Gate::AddRegisters { sources: vec![blocks[0]], dst: y, len: n, subtract: *inverse },
                };
                stages.push(Stage::Gate(copy));
                uncompute_stages.push(stages.len());
                stages.push(Stage::Oracle { inverse: p > 2 });
                query_map.push((calls, calls + 1));
                calls += 2;
            }
        }
    }
    let compiled = QueryAlgorithm {
        layout,
        model: QueryModel::Synchronized,
        stages,
        measured: a.measured.clone(),
        accept: a.accept.clone(),
    };
    compiled.validate()?;
    Ok(CompiledAlgorithm { original: a.clone(), compiled, query_map, uncompute_stages })
}

impl CompiledAlgorithm {
    /// Largest probability mass left on nonzero answer blocks right after any uncompute call.
    pub fn residual_block_mass(&self, o: &OracleTables, sim: &Simulator) -> Result<f64> {
        let l = &self.compiled.layout;
        let ranges: Vec<DigitRange> = (0..l.answers.len()).map(|b| l.answer_range(b)).collect();
        let marks: BTreeSet<usize> = self.uncompute_stages.iter().copied().collect();
        let mut worst = 0.0f64;
        let mut observe = |k: usize, _: &Stage, s: &StateVector| {
            if marks.contains(&k) {
                worst = worst.max(s.mass_nonzero(&ranges));
            }
        };
        sim.run(&self.compiled, o, Some(&mut observe))?;
        Ok(worst)
    }
}

/// `1/2 sum |d1 - d2|` over a common outcome space.
pub fn tv_distance(d1: &[f64], d2: &[f64]) -> Result<f64> {
    if d1.len() != d2.len() {
        return Err(Error::DimensionMismatch { expected: d1.len(), actual: d2.len() });
    }
    Ok(0.5 * d1.iter().zip(d2).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// [`tv_distance`] for sparse distributions; missing outcomes have probability 0.
pub fn tv_distance_sparse(d1: &Distribution, d2: &Distribution) -> f64 {
    let keys: BTreeSet<&usize> = d1.keys().chain(d2.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (d1.get(k).copied().unwrap_or(0.0) - d2.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

fn random_gate<R: Rng + ?Sized>(p: u32, total: usize, rng: &mut R) -> Gate {
    match rng.gen_range(0..4) {
        0 => {
            let len = rng.gen_range(1..=2.min(total));
            Gate::Qft { start: rng.gen_range(0..=total - len), len }
        }
        1 => {
            let k = if total >= 2 && rng.gen_bool(0.5) { 2 } else { 1 };
            let mut digits: Vec<usize> = (0..total).collect();
            digits.shuffle(rng);
            digits.truncate(k);
            let dim = checked_pow(p, k).expect("small");
            Gate::Unitary { digits, matrix: random_unitary(dim, rng) }
        }
        2 => {
            let len = rng.gen_range(1..=2.min(total));
            let mut table: Vec<usize> = (0..checked_pow(p, len).expect("small")).collect();
            table.shuffle(rng);
            Gate::Permutation { start: rng.gen_range(0..=total - len), len, table }
        }
        _ => {
            let mut digits: Vec<usize> = (0..total).collect();
            digits.shuffle(rng);
            Gate::AddRegisters { sources: vec![digits[0]], dst: digits[1], len: 1, subtract: rng.gen_bool(0.5) }
        }
    }
}

/// A random standard-model algorithm with `t` calls, 1 to 3 random gates
/// between calls, and a random measured set and acceptance set.
pub fn random_standard_algorithm<R: Rng + ?Sized>(
    p: u32,
    n: usize,
    selector_digits: usize,
    work_digits: usize,
    t: usize,
    rng: &mut R,
) -> Result<QueryAlgorithm> {
    let layout = RegisterLayout::standard(p, n, selector_digits, work_digits)?;
    let total = layout.total_digits;
    let mut stages = Vec::new();
    for call in 0..=t {
        for _ in 0..rng.gen_range(1..=3) {
            stages.push(Stage::Gate(random_gate(p, total, rng)));
        }
        if call < t {
            stages.push(Stage::Oracle { inverse: p > 2 && rng.gen_bool(0.5) });
        }
    }
    let mut measured: Vec<usize> = (0..total).collect();
    measured.shuffle(rng);
    measured.truncate(rng.gen_range(1..=total.min(4)));
    let space = checked_pow(p, measured.len()).expect("small");
    let accept = AcceptSet::Outcomes((0..space).filter(|_| rng.gen_bool(0.5)).collect());
    let alg = QueryAlgorithm { layout, model: QueryModel::Standard, stages, measured, accept };
    alg.validate()?;
    Ok(alg)
}
