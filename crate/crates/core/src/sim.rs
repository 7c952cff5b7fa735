//! Dense statevector simulation of qudit query algorithms.
//!
//! Digit 0 of the register file is the most significant base-p digit of a
//! basis index, so a contiguous digit range reads as an ordinary packed
//! vector in Z_p^len (the same convention as [`GroupVector::to_index`]).
//!
//! [`GroupVector::to_index`]: crate::group::GroupVector::to_index

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{check_prime, checked_pow, digitwise_add};
use crate::oracle::{rng_from_seed, EmInstance, OracleSequence, PaddedSequence, PermutationOracle};

/// Default cap on the number of amplitudes.
pub const DEFAULT_MEMORY_CAP: usize = 1 << 26;
/// Dense unitaries may act on at most this many digits.
pub const DENSE_DIGIT_CAP: usize = 12;
pub const UNITARY_TOL: f64 = 1e-9;
pub const SCHEMA_VERSION: u32 = 1;

/// A contiguous run of digits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigitRange {
    pub start: usize,
    pub len: usize,
}

impl DigitRange {
    pub fn new(start: usize, len: usize) -> Self {
        DigitRange { start, len }
    }

    fn end(&self) -> usize {
        self.start + self.len
    }

    fn overlaps(&self, other: &DigitRange) -> bool {
        self.len > 0 && other.len > 0 && self.start < other.end() && other.start < self.end()
    }
}

/// Where the selector, query and answer registers sit. Every other digit is work space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    pub p: u32,
    pub n: usize,
    pub total_digits: usize,
    #[serde(default)]
    pub selector: Option<DigitRange>,
    /// First digit of the `n`-digit query register.
    pub query: usize,
    /// First digit of each `n`-digit answer block.
    pub answers: Vec<usize>,
}

impl RegisterLayout {
    /// `|i>|x>|y>|z>` with an `s`-digit selector and `m` work digits.
    pub fn standard(p: u32, n: usize, selector_digits: usize, work_digits: usize) -> Result<Self> {
        let s = selector_digits;
        let layout = RegisterLayout {
            p,
            n,
            total_digits: s + 2 * n + work_digits,
            selector: (s > 0).then(|| DigitRange::new(0, s)),
            query: s,
            answers: vec![s + n],
        };
        layout.validate()?;
        Ok(layout)
    }

    /// `|x>|y_0,...,y_{N-1}>|z>`.
    pub fn synchronized(p: u32, n: usize, blocks: usize, work_digits: usize) -> Result<Self> {
        let layout = RegisterLayout {
            p,
            n,
            total_digits: n + blocks * n + work_digits,
            selector: None,
            query: 0,
            answers: (0..blocks).map(|b| n + b * n).collect(),
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn query_range(&self) -> DigitRange {
        DigitRange::new(self.query, self.n)
    }

    pub fn answer_range(&self, b: usize) -> DigitRange {
        DigitRange::new(self.answers[b], self.n)
    }

    pub fn validate(&self) -> Result<()> {
        check_prime(self.p)?;
        let mut ranges = vec![self.query_range()];
        ranges.extend((0..self.answers.len()).map(|b| self.answer_range(b)));
        ranges.extend(self.selector);
        for (a, r) in ranges.iter().enumerate() {
            if r.end() > self.total_digits {
                return Err(Error::InvalidCircuit(format!("register {r:?} exceeds {} digits", self.total_digits)));
            }
            if ranges[..a].iter().any(|q| q.overlaps(r)) {
                return Err(Error::InvalidCircuit(format!("register {r:?} overlaps another register")));
            }
        }
        Ok(())
    }

    pub fn dimension(&self, cap: usize) -> Result<usize> {
        state_size(self.p, self.total_digits, cap)
    }
}

fn state_size(p: u32, digits: usize, cap: usize) -> Result<usize> {
    match checked_pow(p, digits) {
        Some(v) if v <= cap => Ok(v),
        Some(v) => Err(Error::SizeGuard { what: "statevector amplitudes", needed: v as u128, cap: cap as u128 }),
        None => Err(Error::SizeGuard { what: "statevector amplitudes", needed: u128::MAX, cap: cap as u128 }),
    }
}

/// Reads and writes one contiguous register inside a packed basis index.
#[derive(Clone, Copy, Debug)]
struct Reg {
    div: usize,
    modulus: usize,
}

impl Reg {
    fn new(p: u32, total: usize, r: DigitRange) -> Reg {
        Reg {
            div: checked_pow(p, total - r.end()).expect("within state size"),
            modulus: checked_pow(p, r.len).expect("within state size"),
        }
    }

    fn get(&self, idx: usize) -> usize {
        idx / self.div % self.modulus
    }

    fn set(&self, idx: usize, v: usize) -> usize {
        idx - self.get(idx) * self.div + v * self.div
    }
}

/// Structured and dense gates. Register arguments are first digits of `len`-digit runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "snake_case")]
pub enum Gate {
    /// Per-digit Fourier transform over Z_p.
    Qft { start: usize, len: usize },
    InverseQft { start: usize, len: usize },
    /// Dense unitary on the listed digits, the first listed digit most significant.
    Unitary { digits: Vec<usize>, matrix: Vec<Vec<Complex64>> },
    /// Basis permutation `v -> table[v]` of one register.
    Permutation { start: usize, len: usize, table: Vec<usize> },
    /// `dst +/-= sum of sources`, digitwise.
    AddRegisters { sources: Vec<usize>, dst: usize, len: usize, subtract: bool },
    /// `dst +/-= blocks[i]` where `i` is the selector value; no-op when `i >= blocks.len()`.
    SelectorAdd { selector: DigitRange, blocks: Vec<usize>, dst: usize, len: usize, subtract: bool },
    /// `dst +/-= min(sources)`, comparing registers as packed integers.
    AddMin { sources: Vec<usize>, dst: usize, len: usize, subtract: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Stage {
    Gate(Gate),
    Oracle {
        #[serde(default)]
        inverse: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryModel {
    Standard,
    Synchronized,
}

/// Outcomes (packed over the measured digits, first digit most significant) that accept.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptSet {
    All,
    None,
    Outcomes(BTreeSet<usize>),
}

impl AcceptSet {
    pub fn accepts(&self, outcome: usize) -> bool {
        match self {
            AcceptSet::All => true,
            AcceptSet::None => false,
            AcceptSet::Outcomes(s) => s.contains(&outcome),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryAlgorithm {
    pub layout: RegisterLayout,
    pub model: QueryModel,
    pub stages: Vec<Stage>,
    pub measured: Vec<usize>,
    pub accept: AcceptSet,
}

#[derive(Serialize, Deserialize)]
struct CircuitDoc {
    version: u32,
    #[serde(flatten)]
    algorithm: QueryAlgorithm,
}

impl QueryAlgorithm {
    pub fn query_count(&self) -> usize {
        self.stages.iter().filter(|s| matches!(s, Stage::Oracle { .. })).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CircuitDoc { version: SCHEMA_VERSION, algorithm: self.clone() })?)
    }

    /// Parses and validates a circuit description.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: CircuitDoc = serde_json::from_str(s)?;
        if doc.version != SCHEMA_VERSION {
            return Err(Error::Serialization(format!("unsupported circuit schema version {}", doc.version)));
        }
        doc.algorithm.validate()?;
        Ok(doc.algorithm)
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.layout;
        l.validate()?;
        match self.model {
            QueryModel::Standard if l.answers.len() != 1 => {
                return Err(Error::InvalidCircuit("standard model needs exactly one answer block".into()))
            }
            QueryModel::Synchronized if l.answers.is_empty() => {
                return Err(Error::InvalidCircuit("synchronized model needs answer blocks".into()))
            }
            _ => {}
        }
        for stage in &self.stages {
            if let Stage::Gate(g) = stage {
                validate_gate(g, l.p, l.total_digits)?;
            }
        }
        let mut seen = BTreeSet::new();
        for &d in &self.measured {
            if d >= l.total_digits || !seen.insert(d) {
                return Err(Error::InvalidCircuit(format!("bad measured digit {d}")));
            }
        }
        if let AcceptSet::Outcomes(s) = &self.accept {
            let space = checked_pow(l.p, self.measured.len()).unwrap_or(usize::MAX);
            if s.iter().any(|&o| o >= space) {
                return Err(Error::InvalidCircuit("accept outcome outside the measured space".into()));
            }
        }
        Ok(())
    }
}

fn check_range(r: DigitRange, total: usize) -> Result<()> {
    if r.end() > total {
        return Err(Error::InvalidCircuit(format!("digit range {r:?} exceeds {total} digits")));
    }
    Ok(())
}

fn check_disjoint(ranges: &[DigitRange], total: usize) -> Result<()> {
    for (a, r) in ranges.iter().enumerate() {
        check_range(*r, total)?;
        if ranges[..a].iter().any(|q| q.overlaps(r)) {
            return Err(Error::InvalidCircuit(format!("overlapping registers at {r:?}")));
        }
    }
    Ok(())
}

fn validate_gate(g: &Gate, p: u32, total: usize) -> Result<()> {
    match g {
        Gate::Qft { start, len } | Gate::InverseQft { start, len } => check_range(DigitRange::new(*start, *len), total),
        Gate::Unitary { digits, matrix } => {
            if digits.len() > DENSE_DIGIT_CAP {
                return Err(Error::InvalidCircuit(format!("dense unitary on {} digits", digits.len())));
            }
            let singles: Vec<DigitRange> = digits.iter().map(|&d| DigitRange::new(d, 1)).collect();
            check_disjoint(&singles, total)?;
            let dim = checked_pow(p, digits.len()).expect("dense cap");
            if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
                return Err(Error::InvalidCircuit(format!("unitary must be {dim}x{dim}")));
            }
            if !is_unitary(matrix, UNITARY_TOL) {
                return Err(Error::InvalidCircuit("matrix is not unitary within 1e-9".into()));
            }
            Ok(())
        }
        Gate::Permutation { start, len, table } => {
            check_range(DigitRange::new(*start, *len), total)?;
            let dim = checked_pow(p, *len).unwrap_or(usize::MAX);
            let mut seen = vec![false; table.len()];
            if table.len() != dim || table.iter().any(|&v| v >= dim || std::mem::replace(&mut seen[v], true)) {
                return Err(Error::InvalidCircuit("permutation gate table is not a bijection".into()));
            }
            Ok(())
        }
        Gate::AddRegisters { sources, dst, len, .. } | Gate::AddMin { sources, dst, len, .. } => {
            let dst_r = DigitRange::new(*dst, *len);
            check_range(dst_r, total)?;
            for &s in sources {
                let r = DigitRange::new(s, *len);
                check_range(r, total)?;
                if r.overlaps(&dst_r) {
                    return Err(Error::InvalidCircuit("source overlaps destination".into()));
                }
            }
            Ok(())
        }
        Gate::SelectorAdd { selector, blocks, dst, len, .. } => {
            let dst_r = DigitRange::new(*dst, *len);
            check_disjoint(&[*selector, dst_r], total)?;
            for &b in blocks {
                let r = DigitRange::new(b, *len);
                check_range(r, total)?;
                if r.overlaps(&dst_r) || r.overlaps(selector) {
                    return Err(Error::InvalidCircuit("block overlaps selector or destination".into()));
                }
            }
            Ok(())
        }
    }
}

pub fn is_unitary(m: &[Vec<Complex64>], tol: f64) -> bool {
    let dim = m.len();
    for a in 0..dim {
        for b in 0..dim {
            let dot: Complex64 = (0..dim).map(|r| m[r][a].conj() * m[r][b]).sum();
            let expect = if a == b { 1.0 } else { 0.0 };
            if (dot - Complex64::new(expect, 0.0)).norm() > tol {
                return false;
            }
        }
    }
    true
}

/// Haar-ish random unitary: Gram-Schmidt on a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<Vec<Complex64>> {
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        for c in &cols {
            let proj: Complex64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (x, a) in v.iter_mut().zip(c) {
                *x -= proj * a;
            }
        }
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    // rows of the matrix
    (0..dim).map(|r| (0..dim).map(|c| cols[c][r]).collect()).collect()
}

fn dft(p: u32, inverse: bool) -> Vec<Vec<Complex64>> {
    let scale = 1.0 / (p as f64).sqrt();
    let sign = if inverse { -1.0 } else { 1.0 };
    (0..p)
        .map(|r| {
            (0..p)
                .map(|c| Complex64::from_polar(scale, sign * 2.0 * PI * ((r * c) % p) as f64 / p as f64))
                .collect()
        })
        .collect()
}

/// Output tables the simulator answers queries from. Values live in Z_p^n;
/// tables need not be injective.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleTables {
    pub p: u32,
    pub n: usize,
    pub tables: Vec<Vec<usize>>,
}

impl OracleTables {
    pub fn new(p: u32, n: usize, tables: Vec<Vec<usize>>) -> Result<Self> {
        check_prime(p)?;
        let size = checked_pow(p, n).ok_or(Error::SizeGuard { what: "oracle table", needed: u128::MAX, cap: 0 })?;
        for t in &tables {
            if t.len() != size || t.iter().any(|&v| v >= size) {
                return Err(Error::OracleMismatch(format!("table is not a map on Z_{p}^{n}")));
            }
        }
        Ok(OracleTables { p, n, tables })
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// The first `count` tables.
    pub fn prefix(&self, count: usize) -> OracleTables {
        OracleTables { p: self.p, n: self.n, tables: self.tables[..count.min(self.len())].to_vec() }
    }
}

impl From<&OracleSequence> for OracleTables {
    fn from(o: &OracleSequence) -> Self {
        OracleTables { p: o.p(), n: o.n(), tables: o.tables() }
    }
}

impl From<&PaddedSequence> for OracleTables {
    fn from(o: &PaddedSequence) -> Self {
        OracleTables { p: o.core.p(), n: o.core.n(), tables: o.tables() }
    }
}

impl From<&PermutationOracle> for OracleTables {
    fn from(o: &PermutationOracle) -> Self {
        OracleTables { p: o.p(), n: o.n(), tables: vec![o.table().to_vec()] }
    }
}

impl From<&EmInstance> for OracleTables {
    /// The pair `(pi, EM)`.
    fn from(e: &EmInstance) -> Self {
        OracleTables { p: 2, n: e.n(), tables: vec![e.pi.table().to_vec(), e.em_table().table().to_vec()] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    p: u32,
    digits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zero(p: u32, digits: usize, cap: usize) -> Result<Self> {
        Self::basis(p, digits, 0, cap)
    }

    pub fn basis(p: u32, digits: usize, index: usize, cap: usize) -> Result<Self> {
        let size = state_size(p, digits, cap)?;
        if index >= size {
            return Err(Error::InvalidParameter(format!("basis index {index} out of range")));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); size];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(StateVector { p, digits, amps })
    }

    pub fn from_amplitudes(p: u32, digits: usize, amps: Vec<Complex64>) -> Result<Self> {
        let size = state_size(p, digits, usize::MAX)?;
        if amps.len() != size {
            return Err(Error::DimensionMismatch { expected: size, actual: amps.len() });
        }
        Ok(StateVector { p, digits, amps })
    }

    pub fn random<R: Rng + ?Sized>(p: u32, digits: usize, rng: &mut R) -> Result<Self> {
        let size = state_size(p, digits, DEFAULT_MEMORY_CAP)?;
        let mut amps: Vec<Complex64> =
            (0..size).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|a| *a /= norm);
        Ok(StateVector { p, digits, amps })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn digits(&self) -> usize {
        self.digits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn distance(&self, other: &StateVector) -> f64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }

    /// Value of a digit range in a basis index.
    pub fn register_value(&self, index: usize, r: DigitRange) -> usize {
        Reg::new(self.p, self.digits, r).get(index)
    }

    /// Probability mass on basis states whose digits in `r` are all zero.
    pub fn mass_with_zero(&self, r: DigitRange) -> f64 {
        let reg = Reg::new(self.p, self.digits, r);
        self.amps.iter().enumerate().filter(|(i, _)| reg.get(*i) == 0).map(|(_, a)| a.norm_sqr()).sum()
    }

    /// Probability mass on basis states where some digit in `ranges` is nonzero.
    pub fn mass_nonzero(&self, ranges: &[DigitRange]) -> f64 {
        let regs: Vec<Reg> = ranges.iter().map(|&r| Reg::new(self.p, self.digits, r)).collect();
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| regs.iter().any(|r| r.get(*i) != 0))
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Marginal distribution of `measured` (first listed digit most significant).
    pub fn marginal(&self, measured: &[usize]) -> Vec<f64> {
        let regs: Vec<Reg> = measured.iter().map(|&d| Reg::new(self.p, self.digits, DigitRange::new(d, 1))).collect();
        let mut out = vec![0.0; checked_pow(self.p, measured.len()).expect("within state size")];
        let p = self.p as usize;
        for (i, a) in self.amps.iter().enumerate() {
            let w = a.norm_sqr();
            if w == 0.0 {
                continue;
            }
            let o = regs.iter().fold(0usize, |acc, r| acc * p + r.get(i));
            out[o] += w;
        }
        out
    }

    /// `new[j] = old[src(j)]` for a basis permutation given by its inverse.
    fn remap<F: Fn(usize) -> usize + Sync>(&mut self, src: F) {
        let old = &self.amps;
        let new: Vec<Complex64> = (0..old.len()).into_par_iter().map(|j| old[src(j)]).collect();
        self.amps = new;
    }

    fn apply_dense(&mut self, digits: &[usize], m: &[Vec<Complex64>]) {
        let regs: Vec<Reg> = digits.iter().map(|&d| Reg::new(self.p, self.digits, DigitRange::new(d, 1))).collect();
        let local = m.len();
        let p = self.p as usize;
        let offsets: Vec<usize> = (0..local)
            .map(|v| {
                let mut rem = v;
                let mut off = 0;
                for r in regs.iter().rev() {
                    off += (rem % p) * r.div;
                    rem /= p;
                }
                off
            })
            .collect();
        let mut buf = vec![Complex64::new(0.0, 0.0); local];
        for base in 0..self.amps.len() {
            if regs.iter().any(|r| r.get(base) != 0) {
                continue;
            }
            for (c, &off) in offsets.iter().enumerate() {
                buf[c] = self.amps[base + off];
            }
            for (row, &off) in m.iter().zip(&offsets) {
                self.amps[base + off] = row.iter().zip(&buf).map(|(a, b)| a * b).sum();
            }
        }
    }

    pub fn apply_gate(&mut self, g: &Gate) {
        let (p, total) = (self.p, self.digits);
        match g {
            Gate::Qft { start, len } | Gate::InverseQft { start, len } => {
                let f = dft(p, matches!(g, Gate::InverseQft { .. }));
                for d in *start..start + len {
                    self.apply_dense(&[d], &f);
                }
            }
            Gate::Unitary { digits, matrix } => self.apply_dense(digits, matrix),
            Gate::Permutation { start, len, table } => {
                let reg = Reg::new(p, total, DigitRange::new(*start, *len));
                let mut inv = vec![0; table.len()];
                for (v, &t) in table.iter().enumerate() {
                    inv[t] = v;
                }
                self.remap(|j| reg.set(j, inv[reg.get(j)]));
            }
            Gate::AddRegisters { sources, dst, len, subtract } => {
                let d = Reg::new(p, total, DigitRange::new(*dst, *len));
                let srcs: Vec<Reg> = sources.iter().map(|&s| Reg::new(p, total, DigitRange::new(s, *len))).collect();
                let len = *len;
                // undo the forward map: old dst = new dst -/+ sum
                let undo = !*subtract;
                self.remap(|j| {
                    let sum = srcs.iter().fold(0, |acc, r| digitwise_add(acc, r.get(j), p, len, false));
                    d.set(j, digitwise_add(d.get(j), sum, p, len, undo))
                });
            }
            Gate::SelectorAdd { selector, blocks, dst, len, subtract } => {
                let sel = Reg::new(p, total, *selector);
                let d = Reg::new(p, total, DigitRange::new(*dst, *len));
                let bl: Vec<Reg> = blocks.iter().map(|&b| Reg::new(p, total, DigitRange::new(b, *len))).collect();
                let (len, undo) = (*len, !*subtract);
                self.remap(|j| match bl.get(sel.get(j)) {
                    Some(b) => d.set(j, digitwise_add(d.get(j), b.get(j), p, len, undo)),
                    None => j,
                });
            }
            Gate::AddMin { sources, dst, len, subtract } => {
                let d = Reg::new(p, total, DigitRange::new(*dst, *len));
                let srcs: Vec<Reg> = sources.iter().map(|&s| Reg::new(p, total, DigitRange::new(s, *len))).collect();
                let (len, undo) = (*len, !*subtract);
                self.remap(|j| {
                    let m = srcs.iter().map(|r| r.get(j)).min().unwrap_or(0);
                    d.set(j, digitwise_add(d.get(j), m, p, len, undo))
                });
            }
        }
    }

    /// Adds (or subtracts) the constant `by` to register `r` in every basis state.
    pub fn shift_register(&mut self, r: DigitRange, by: usize, subtract: bool) {
        let reg = Reg::new(self.p, self.digits, r);
        let p = self.p;
        // inverse map: old value = new value -/+ by
        self.remap(|j| reg.set(j, digitwise_add(reg.get(j), by, p, r.len, !subtract)));
    }

    /// Zeroes every amplitude whose register `r` does not hold `value`.
    pub fn keep_register_value(&mut self, r: DigitRange, value: usize) {
        let reg = Reg::new(self.p, self.digits, r);
        for (i, a) in self.amps.iter_mut().enumerate() {
            if reg.get(i) != value {
                *a = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Zeroes every amplitude whose measured outcome is rejected.
    pub fn project_accepted(&mut self, measured: &[usize], accept: &AcceptSet) {
        let regs: Vec<Reg> = measured.iter().map(|&d| Reg::new(self.p, self.digits, DigitRange::new(d, 1))).collect();
        let p = self.p as usize;
        for (i, a) in self.amps.iter_mut().enumerate() {
            let o = regs.iter().fold(0usize, |acc, r| acc * p + r.get(i));
            if !accept.accepts(o) {
                *a = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// `|i,x>|y> -> |i,x>|y +/- O_i(x)>`; selector values past the table list act trivially.
    pub fn apply_oracle_standard(&mut self, layout: &RegisterLayout, o: &OracleTables, inverse: bool) -> Result<()> {
        self.check_oracle(layout, o)?;
        if o.is_empty() || layout.answers.len() != 1 {
            return Err(Error::OracleMismatch("standard call needs one answer block and a table".into()));
        }
        let (p, total, n) = (self.p, self.digits, layout.n);
        let sel = layout.selector.map(|r| Reg::new(p, total, r));
        let x = Reg::new(p, total, layout.query_range());
        let y = Reg::new(p, total, layout.answer_range(0));
        let undo = !inverse;
        self.remap(|j| {
            let i = sel.map_or(0, |s| s.get(j));
            match o.tables.get(i) {
                Some(t) => y.set(j, digitwise_add(y.get(j), t[x.get(j)], p, n, undo)),
                None => j,
            }
        });
        Ok(())
    }

    /// `|x>|y_0..y_{N-1}> -> |x>|y_0 +/- O_0(x), ..., y_{N-1} +/- O_{N-1}(x)>`.
    pub fn apply_oracle_sync(&mut self, layout: &RegisterLayout, o: &OracleTables, inverse: bool) -> Result<()> {
        self.check_oracle(layout, o)?;
        if o.len() != layout.answers.len() {
            return Err(Error::OracleMismatch(format!(
                "{} answer blocks but {} oracles",
                layout.answers.len(),
                o.len()
            )));
        }
        let (p, total, n) = (self.p, self.digits, layout.n);
        let x = Reg::new(p, total, layout.query_range());
        let ys: Vec<Reg> = (0..o.len()).map(|b| Reg::new(p, total, layout.answer_range(b))).collect();
        let undo = !inverse;
        self.remap(|j| {
            let xv = x.get(j);
            ys.iter()
                .zip(&o.tables)
                .fold(j, |acc, (y, t)| y.set(acc, digitwise_add(y.get(acc), t[xv], p, n, undo)))
        });
        Ok(())
    }

    fn check_oracle(&self, layout: &RegisterLayout, o: &OracleTables) -> Result<()> {
        if o.p != layout.p || o.n != layout.n || self.p != layout.p || self.digits != layout.total_digits {
            return Err(Error::OracleMismatch(format!(
                "oracle over Z_{}^{} against layout over Z_{}^{} with {} digits",
                o.p, o.n, layout.p, layout.n, layout.total_digits
            )));
        }
        Ok(())
    }
}

pub type Distribution = BTreeMap<usize, f64>;

/// One sampled run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub outcome: usize,
    pub accepted: bool,
    pub queries: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct Simulator {
    pub memory_cap: usize,
}

impl Default for Simulator {
    fn default() -> Self {
        Simulator { memory_cap: DEFAULT_MEMORY_CAP }
    }
}

pub type Observer<'a> = &'a mut dyn FnMut(usize, &Stage, &StateVector);

impl Simulator {
    pub fn new(memory_cap: usize) -> Self {
        Simulator { memory_cap }
    }

    /// Runs every stage from `|0...0>`. Returns the final state and the number of oracle calls.
    pub fn run(
        &self,
        alg: &QueryAlgorithm,
        o: &OracleTables,
        mut observer: Option<Observer<'_>>,
    ) -> Result<(StateVector, usize)> {
        alg.validate()?;
        let l = &alg.layout;
        let mut state = StateVector::zero(l.p, l.total_digits, self.memory_cap)?;
        let mut queries = 0;
        for (k, stage) in alg.stages.iter().enumerate() {
            match stage {
                Stage::Gate(g) => state.apply_gate(g),
                Stage::Oracle { inverse } => {
                    match alg.model {
                        QueryModel::Standard => state.apply_oracle_standard(l, o, *inverse)?,
                        QueryModel::Synchronized => state.apply_oracle_sync(l, o, *inverse)?,
                    }
                    queries += 1;
                }
            }
            if let Some(obs) = observer.as_mut() {
                obs(k, stage, &state);
            }
        }
        Ok((state, queries))
    }

    pub fn output_distribution(&self, alg: &QueryAlgorithm, o: &OracleTables) -> Result<Distribution> {
        let (state, _) = self.run(alg, o, None)?;
        Ok(state.marginal(&alg.measured).into_iter().enumerate().filter(|(_, w)| *w > 0.0).collect())
    }

    pub fn acceptance_probability(&self, alg: &QueryAlgorithm, o: &OracleTables) -> Result<f64> {
        let dist = self.output_distribution(alg, o)?;
        Ok(dist.iter().filter(|(k, _)| alg.accept.accepts(**k)).map(|(_, w)| w).sum::<f64>().clamp(0.0, 1.0))
    }

    pub fn run_sampled(&self, alg: &QueryAlgorithm, o: &OracleTables, seed: u64) -> Result<SampleRecord> {
        let (state, queries) = self.run(alg, o, None)?;
        let marginal = state.marginal(&alg.measured);
        let mut rng = rng_from_seed(seed);
        let outcome = sample_index(&marginal, &mut rng);
        Ok(SampleRecord { outcome, accepted: alg.accept.accepts(outcome), queries, seed })
    }
}

/// Draws an index from unnormalized weights.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // rounding fallthrough: last index with positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

pub fn output_distribution(alg: &QueryAlgorithm, o: &OracleTables) -> Result<Distribution> {
    Simulator::default().output_distribution(alg, o)
}

pub fn acceptance_probability(alg: &QueryAlgorithm, o: &OracleTables) -> Result<f64> {
    Simulator::default().acceptance_probability(alg, o)
}

pub fn run_sampled(alg: &QueryAlgorithm, o: &OracleTables, seed: u64) -> Result<SampleRecord> {
    Simulator::default().run_sampled(alg, o, seed)
}
