use std::fs;
use std::path::Path;

use clap::Args;
use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;

use emq_core::group::{beta, checked_pow, enumerate_subgroups, SUBGROUP_ENUMERATION_CAP};
use emq_core::oracle::{make_em_instance, pad_sequence, rng_from_seed, sample_f_d_star};
use emq_core::poly::{
    degree_report, fit_degree, generate_corpus, koiran_bound, q_of_d_enumerated, q_s_factored, DegreeReport, FloatFit,
    PartialFunction, QEstimate, QOptions,
};
use emq_core::reduction::{compile_to_sync, random_standard_algorithm, tv_distance};
use emq_core::sim::{OracleTables, RegisterLayout, Simulator, DEFAULT_MEMORY_CAP};
use emq_core::simon::{gdikem_distinguisher_1q, km_attack};

use crate::output::{Csv, Jsonl};
use crate::{Cli, CliError, Command};

type Res<T> = Result<T, CliError>;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Accepts decimals and `a/b` fractions.
fn parse_real(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            a / b
        }
        None => s.trim().parse().map_err(|e| format!("{s}: {e}"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s} is not a finite number"))
    }
}

/// Runs the selected subcommand; `Ok(false)` means a checked bound was violated.
pub fn run(cli: &Cli) -> Res<bool> {
    let dir = cli.out_dir.as_path();
    let pass = match &cli.command {
        Command::Attack(a) => attack(a, cli.seed, dir)?,
        Command::Subgroups(a) => subgroups(a, dir)?,
        Command::Qdegree(a) => qdegree(a, cli.seed, dir)?,
        Command::Bound(a) => bound(a, dir)?,
        Command::Reduce(a) => reduce(a, cli.seed, dir)?,
    };
    println!("{}", if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    /// Block length in bits.
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    /// Synchronized queries per trial; defaults to n + 4.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub trials: u64,
    /// Lowest acceptable full key recovery rate.
    #[arg(long, default_value_t = 0.90, value_parser = parse_real)]
    pub min_success: f64,
}

#[derive(Serialize)]
struct TrialRecord {
    trial: u64,
    seed: u64,
    n: usize,
    m: usize,
    k1: usize,
    k2: usize,
    recovered_k1: Option<usize>,
    recovered_k2: Option<usize>,
    keys_correct: bool,
    queries_used: usize,
    classical_evaluations: usize,
    nullspace_dim: usize,
    samples: usize,
    orthogonal_samples: usize,
}

fn attack(a: &AttackArgs, seed: u64, dir: &Path) -> Res<bool> {
    let m = a.m.unwrap_or(a.n + 4);
    if a.n == 0 || m == 0 {
        return Err(config_err("n and m must be positive"));
    }
    // the attack circuit holds x and two answer blocks
    let layout = RegisterLayout::synchronized(2, a.n, 2, 0).map_err(|e| config_err(e.to_string()))?;
    if checked_pow(2, layout.total_digits).is_none_or(|s| s > DEFAULT_MEMORY_CAP) {
        return Err(config_err(format!("n = {} is beyond the simulator cap", a.n)));
    }
    if !(0.0..=1.0).contains(&a.min_success) {
        return Err(config_err("min-success must lie in [0, 1]"));
    }
    let records = (0..a.trials)
        .into_par_iter()
        .map(|trial| {
            let s = seed.wrapping_add(trial);
            let inst = make_em_instance(2, a.n, s, false)?;
            let r = km_attack(&inst, m, s)?;
            let orthogonal = r.samples.iter().filter(|z| z.dot(&inst.k1) == Ok(0)).count();
            Ok(TrialRecord {
                trial,
                seed: s,
                n: a.n,
                m,
                k1: inst.k1.to_index(),
                k2: inst.k2.to_index(),
                recovered_k1: r.recovered_k1.map(|k| k.to_index()),
                recovered_k2: r.recovered_k2.map(|k| k.to_index()),
                keys_correct: r.keys_correct,
                queries_used: r.queries_used,
                classical_evaluations: r.classical_evaluations,
                nullspace_dim: r.nullspace_dim,
                samples: r.samples.len(),
                orthogonal_samples: orthogonal,
            })
        })
        .collect::<Res<Vec<_>>>()?;

    let mut jsonl = Jsonl::create(dir, "attack_trials.jsonl", "emq.attack.trial")?;
    for r in &records {
        jsonl.write(r)?;
    }
    jsonl.finish()?;
    let mut csv = Csv::create(
        dir,
        "attack_summary.csv",
        "emq.attack.summary",
        &["n", "m", "trials", "successes", "success_rate", "mean_queries", "mean_classical_evaluations", "orthogonal_fraction", "status"],
    )?;
    if records.is_empty() {
        csv.finish()?;
        return Ok(true);
    }
    let t = records.len() as f64;
    let successes = records.iter().filter(|r| r.keys_correct).count();
    let rate = successes as f64 / t;
    let samples: usize = records.iter().map(|r| r.samples).sum();
    let orthogonal: usize = records.iter().map(|r| r.orthogonal_samples).sum();
    let orth_frac = if samples == 0 { 1.0 } else { orthogonal as f64 / samples as f64 };
    let pass = rate >= a.min_success && orthogonal == samples;
    csv.row([
        a.n.to_string(),
        m.to_string(),
        records.len().to_string(),
        successes.to_string(),
        format!("{rate:.6}"),
        format!("{:.6}", records.iter().map(|r| r.queries_used as f64).sum::<f64>() / t),
        format!("{:.6}", records.iter().map(|r| r.classical_evaluations as f64).sum::<f64>() / t),
        format!("{orth_frac:.6}"),
        status(pass).into(),
    ])?;
    csv.finish()?;
    eprintln!("attack n={} m={m}: {successes}/{} full recoveries", a.n, records.len());
    Ok(pass)
}

fn status(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

#[derive(Args, Debug)]
pub struct SubgroupsArgs {
    /// Primes to tabulate.
    #[arg(long, value_delimiter = ',', default_values_t = vec![2u32, 3])]
    pub p: Vec<u32>,
    #[arg(long, default_value_t = 4)]
    pub n_max: usize,
    /// Largest subgroup count that is enumerated; bigger ones are SKIPPED.
    #[arg(long, default_value_t = 100_000)]
    pub count_cap: u64,
}

fn subgroups(a: &SubgroupsArgs, dir: &Path) -> Res<bool> {
    let mut cells = Vec::new();
    for &p in &a.p {
        for n in 0..=a.n_max {
            for k in 0..=n {
                cells.push((p, n, k));
            }
        }
    }
    let rows = cells
        .par_iter()
        .map(|&(p, n, k)| {
            let b = beta(p, n, k).map_err(|e| config_err(e.to_string()))?;
            let feasible = checked_pow(p, n).is_some_and(|s| s <= SUBGROUP_ENUMERATION_CAP)
                && b <= BigUint::from(a.count_cap);
            let (enumerated, st) = if feasible {
                let count = enumerate_subgroups(p, n, k)?.len();
                let ok = b == BigUint::from(count);
                (count.to_string(), if ok { "MATCH" } else { "MISMATCH" })
            } else {
                (String::new(), "SKIPPED")
            };
            Ok([p.to_string(), n.to_string(), k.to_string(), b.to_string(), enumerated, st.to_string()])
        })
        .collect::<Res<Vec<_>>>()?;
    let mut csv = Csv::create(dir, "subgroups.csv", "emq.subgroups", &["p", "n", "k", "beta", "enumerated", "status"])?;
    let mut pass = true;
    for r in &rows {
        pass &= r[5] != "MISMATCH";
        csv.row(r)?;
    }
    csv.finish()?;
    Ok(pass)
}

#[derive(Args, Debug)]
pub struct QdegreeArgs {
    #[arg(long, default_value_t = 2)]
    pub p: u32,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    /// Number of oracle blocks N; D runs over the powers of p up to N.
    #[arg(long, default_value_t = 8)]
    pub blocks: usize,
    /// Partial functions in the corpus; 0 skips the corpus check.
    #[arg(long, default_value_t = 60)]
    pub corpus: usize,
    /// Largest domain size in the corpus.
    #[arg(long, default_value_t = 4)]
    pub dom_max: usize,
    /// Fit and prediction tolerance for simulated Q(D) values.
    #[arg(long, default_value_t = 1e-6, value_parser = parse_real)]
    pub tolerance: f64,
    /// Largest number of oracle sequences simulated exactly per D.
    #[arg(long, default_value_t = 200_000)]
    pub enumeration_cap: u128,
    /// Fall back to Monte-Carlo estimates above the enumeration cap.
    #[arg(long)]
    pub allow_sampling: bool,
    #[arg(long, default_value_t = 4000)]
    pub samples: usize,
}

#[derive(Serialize)]
struct DistinguisherRecord {
    kind: &'static str,
    p: u32,
    n: usize,
    blocks: usize,
    queries: usize,
    degree_bound: usize,
    points: Vec<QEstimate>,
    fit: FloatFit,
    /// `(D, value)` of the fit through the first `degree_bound + 1` points, at every later D.
    predicted: Vec<(f64, f64)>,
    prediction_error: Option<f64>,
    pass: bool,
}

#[derive(Serialize)]
struct CorpusRecord<'a> {
    kind: &'static str,
    report: &'a DegreeReport,
    pass: bool,
}

#[derive(Serialize)]
struct EmptyRecord {
    kind: &'static str,
    values: Vec<f64>,
    degree: usize,
    pass: bool,
}

fn qdegree(a: &QdegreeArgs, seed: u64, dir: &Path) -> Res<bool> {
    if !(a.tolerance >= 0.0) {
        return Err(config_err("tolerance must be non-negative"));
    }
    let alg = gdikem_distinguisher_1q(a.p, a.n, a.blocks).map_err(|e| config_err(e.to_string()))?;
    let ds: Vec<usize> = (0..=a.n).filter_map(|d| checked_pow(a.p, d)).filter(|&v| v <= a.blocks).collect();
    if ds.len() < 2 {
        return Err(config_err("need at least two powers of p up to the block count"));
    }
    let opts = QOptions {
        enumeration_cap: a.enumeration_cap,
        allow_sampling: a.allow_sampling,
        samples: a.samples,
        seed,
        ..QOptions::default()
    };
    let points = ds
        .par_iter()
        .map(|&d| q_of_d_enumerated(&alg, a.p, a.n, d, a.blocks, &opts))
        .collect::<Result<Vec<_>, _>>()?;
    let xy: Vec<(f64, f64)> = points.iter().map(|q| (q.big_d as f64, q.value)).collect();
    let fit = fit_degree(&xy, a.tolerance)?;
    let degree_bound = 2 * alg.query_count();
    // a degree <= 2T polynomial is pinned by its first 2T + 1 points; the rest are predictions
    let pinned = degree_bound + 1;
    let (predicted, prediction_error) = if xy.len() > pinned {
        let head = fit_degree(&xy[..pinned], a.tolerance)?;
        let predicted: Vec<(f64, f64)> = xy[pinned..].iter().map(|&(x, _)| (x, head.eval(x))).collect();
        let err = xy[pinned..].iter().zip(&predicted).map(|(o, p)| (o.1 - p.1).abs()).fold(0.0, f64::max);
        (predicted, Some(err))
    } else {
        (Vec::new(), None)
    };
    let dist_pass = fit.degree <= degree_bound && prediction_error.is_none_or(|e| e <= a.tolerance);
    let dist = DistinguisherRecord {
        kind: "distinguisher",
        p: a.p,
        n: a.n,
        blocks: a.blocks,
        queries: alg.query_count(),
        degree_bound,
        points,
        fit,
        predicted,
        prediction_error,
        pass: dist_pass,
    };

    let empty_values = ds
        .iter()
        .map(|&d| {
            let q = q_s_factored(&PartialFunction::new(a.p, a.n, d)?)?;
            Ok(q.value.to_f64().unwrap_or(f64::NAN))
        })
        .collect::<Res<Vec<_>>>()?;
    let empty_fit = fit_degree(&ds.iter().map(|&d| d as f64).zip(empty_values.iter().copied()).collect::<Vec<_>>(), a.tolerance)?;
    let empty = EmptyRecord { kind: "empty_partial_function", values: empty_values, degree: empty_fit.degree, pass: empty_fit.degree == 0 };

    let report = if a.corpus > 0 {
        let corpus = generate_corpus(a.p, a.n, a.blocks, a.corpus, a.dom_max, seed).map_err(|e| config_err(e.to_string()))?;
        Some(degree_report(&corpus)?)
    } else {
        None
    };
    let corpus_pass = report.as_ref().is_none_or(|r| r.pass_all == r.corpus_size);

    let mut jsonl = Jsonl::create(dir, "qdegree.jsonl", "emq.qdegree.report")?;
    jsonl.write(&dist)?;
    jsonl.write(&empty)?;
    if let Some(r) = &report {
        jsonl.write(&CorpusRecord { kind: "corpus", report: r, pass: corpus_pass })?;
    }
    jsonl.finish()?;

    let mut csv = Csv::create(dir, "qdegree.csv", "emq.qdegree.summary", &["check", "measured", "bound", "status"])?;
    csv.row(["distinguisher_degree".to_string(), dist.fit.degree.to_string(), degree_bound.to_string(), status(dist.fit.degree <= degree_bound).into()])?;
    if let Some(e) = dist.prediction_error {
        csv.row(["distinguisher_prediction_error".to_string(), format!("{e:.12}"), a.tolerance.to_string(), status(e <= a.tolerance).into()])?;
    }
    csv.row(["empty_degree".to_string(), empty.degree.to_string(), "0".into(), status(empty.pass).into()])?;
    if let Some(r) = &report {
        let n = r.corpus_size.to_string();
        for (name, got) in [
            ("corpus_exact_matches", r.exact_matches),
            ("corpus_deg_q", r.pass_q),
            ("corpus_deg_q_r", r.pass_q_r),
            ("corpus_deg_q_c", r.pass_q_c),
            ("corpus_all", r.pass_all),
        ] {
            csv.row([name.to_string(), got.to_string(), n.clone(), status(got == r.corpus_size).into()])?;
        }
    }
    csv.finish()?;

    let mut pts = Csv::create(dir, "qdegree_points.csv", "emq.qdegree.points", &["D", "Q", "std_error", "method"])?;
    for q in &dist.points {
        pts.row([q.big_d.to_string(), format!("{:.12}", q.value), format!("{:.3e}", q.std_error), method_name(q)?])?;
    }
    pts.finish()?;
    Ok(dist_pass && empty.pass && corpus_pass)
}

fn method_name(q: &QEstimate) -> Res<String> {
    Ok(serde_json::to_value(q.method)?.as_str().unwrap_or_default().to_string())
}

#[derive(Args, Debug)]
pub struct BoundArgs {
    #[arg(long, default_value_t = 2)]
    pub p: u32,
    /// Distinguishing gap, e.g. 1/3.
    #[arg(long, default_value = "1/3", value_parser = parse_real)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1)]
    pub n_min: usize,
    #[arg(long, default_value_t = 128)]
    pub n_max: usize,
    #[arg(long, default_value_t = 1)]
    pub n_step: usize,
    /// Also write a gnuplot script for the table.
    #[arg(long)]
    pub gnuplot_script: bool,
}

fn bound(a: &BoundArgs, dir: &Path) -> Res<bool> {
    if a.n_step == 0 || a.n_min > a.n_max {
        return Err(config_err("need n-min <= n-max and n-step > 0"));
    }
    let ns: Vec<usize> = (a.n_min..=a.n_max).step_by(a.n_step).collect();
    let values = ns.iter().map(|&n| koiran_bound(a.p, n, a.epsilon)).collect::<Result<Vec<_>, _>>().map_err(|e| config_err(e.to_string()))?;
    let mut csv = Csv::create(dir, "bound.csv", "emq.bound", &["n", "bound", "branch"])?;
    let mut switch = None;
    for (&n, &v) in ns.iter().zip(&values) {
        let half = v == n as f64 / 2.0 && v > 0.0;
        if half {
            switch = Some(n);
        }
        csv.row([n.to_string(), format!("{v:.6}"), if half { "half_n" } else { "log" }.to_string()])?;
    }
    csv.finish()?;
    let monotone = values.windows(2).all(|w| w[1] >= w[0]);
    let last = *ns.last().expect("nonempty grid");
    let ratio = if last >= 2 {
        let lo = koiran_bound(a.p, last / 2, a.epsilon)?;
        (lo > 0.0).then(|| koiran_bound(a.p, last, a.epsilon).map(|hi| hi / lo)).transpose()?
    } else {
        None
    };
    let mut summary = Csv::create(
        dir,
        "bound_summary.csv",
        "emq.bound.summary",
        &["p", "epsilon", "last_half_n_branch", "bound_at_n_max", "doubling_ratio", "monotone"],
    )?;
    summary.row([
        a.p.to_string(),
        format!("{:.6}", a.epsilon),
        switch.map_or(String::new(), |n| n.to_string()),
        format!("{:.6}", values[values.len() - 1]),
        ratio.map_or(String::new(), |r| format!("{r:.6}")),
        monotone.to_string(),
    ])?;
    summary.finish()?;
    if a.gnuplot_script {
        let script = format!(
            "set datafile separator ','\nset key left top\nset xlabel 'n'\nset ylabel 'degree lower bound'\n\
             set title 'p = {}, epsilon = {:.4}'\nplot 'bound.csv' every ::1 using 1:2 with linespoints title 'bound'\n",
            a.p, a.epsilon
        );
        fs::write(dir.join("bound.gp"), script)?;
    }
    Ok(monotone)
}

#[derive(Args, Debug)]
pub struct ReduceArgs {
    #[arg(long, default_value_t = 20)]
    pub circuits: u64,
    /// Calls per circuit cycle through 0..=t-max.
    #[arg(long, default_value_t = 2)]
    pub t_max: usize,
    #[arg(long, default_value_t = 2)]
    pub p: u32,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    /// Oracle blocks N of the synchronized target.
    #[arg(long, default_value_t = 2)]
    pub blocks: usize,
    #[arg(long, default_value_t = 1e-9, value_parser = parse_real)]
    pub tolerance: f64,
}

#[derive(Serialize)]
struct ReduceRecord {
    circuit: u64,
    seed: u64,
    t: usize,
    queries_original: usize,
    queries_compiled: usize,
    tv_distance: f64,
    ancilla_mass: f64,
    pass: bool,
}

fn reduce(a: &ReduceArgs, seed: u64, dir: &Path) -> Res<bool> {
    if !(a.tolerance >= 0.0) {
        return Err(config_err("tolerance must be non-negative"));
    }
    if a.blocks < a.p as usize {
        return Err(config_err(format!("need at least p = {} blocks for a one-digit selector", a.p)));
    }
    // largest power of p that fits in the block count
    let big_d = (0..=a.n).filter_map(|d| checked_pow(a.p, d)).filter(|&v| v <= a.blocks).max().unwrap_or(1);
    let sim = Simulator::default();
    let records = (0..a.circuits)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i);
            let t = i as usize % (a.t_max + 1);
            let mut rng = rng_from_seed(s);
            let alg = random_standard_algorithm(a.p, a.n, 1, 1, t, &mut rng).map_err(|e| config_err(e.to_string()))?;
            let c = compile_to_sync(&alg, a.blocks)?;
            let space = checked_pow(a.p, alg.measured.len()).expect("at most four measured digits");
            let o = sample_f_d_star(a.p, a.n, big_d, s)?;
            let tables = OracleTables::from(&pad_sequence(&o, a.blocks, s)?);
            let dense = |d: &emq_core::sim::Distribution| (0..space).map(|k| d.get(&k).copied().unwrap_or(0.0)).collect::<Vec<_>>();
            let tv = tv_distance(&dense(&sim.output_distribution(&alg, &tables)?), &dense(&sim.output_distribution(&c.compiled, &tables)?))?;
            let mass = c.residual_block_mass(&tables, &sim)?;
            let (qo, qc) = (alg.query_count(), c.compiled.query_count());
            Ok(ReduceRecord {
                circuit: i,
                seed: s,
                t,
                queries_original: qo,
                queries_compiled: qc,
                tv_distance: tv,
                ancilla_mass: mass,
                pass: tv <= a.tolerance && mass <= a.tolerance && qc == 2 * qo,
            })
        })
        .collect::<Res<Vec<_>>>()?;
    let mut jsonl = Jsonl::create(dir, "reduce_circuits.jsonl", "emq.reduce.circuit")?;
    for r in &records {
        jsonl.write(r)?;
    }
    jsonl.finish()?;
    let pass = records.iter().all(|r| r.pass);
    let mut csv = Csv::create(
        dir,
        "reduce_summary.csv",
        "emq.reduce.summary",
        &["circuits", "max_tv_distance", "max_ancilla_mass", "query_counts_exact", "status"],
    )?;
    let max = |f: fn(&ReduceRecord) -> f64| records.iter().map(f).fold(0.0, f64::max);
    csv.row([
        records.len().to_string(),
        format!("{:.3e}", max(|r| r.tv_distance)),
        format!("{:.3e}", max(|r| r.ancilla_mass)),
        records.iter().all(|r| r.queries_compiled == 2 * r.queries_original).to_string(),
        status(pass).into(),
    ])?;
    csv.finish()?;
    Ok(pass)
}

#[cfg(test)]
mod tests {
    use super::parse_real;

    #[test]
    fn reals_and_fractions() {
        assert_eq!(parse_real("0.25").unwrap(), 0.25);
        assert!((parse_real("1/3").unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(parse_real("1/0").is_err());
        assert!(parse_real("x").is_err());
    }
}
