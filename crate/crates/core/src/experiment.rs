//! Sweeps over (protocol, node count, seed), report files and threshold calibration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::engine::{self, write_trace, Protocol, TraceLevel};
use crate::error::{Error, Result};
use crate::lmeec::{elect_cluster_heads, Candidate, NodeProtocolState, Role};
use crate::metrics::{summarize, MetricsRecord, Stat, SummaryRow};
use crate::topology::{assign_layers, NetworkTopology};

pub const RUNS_HEADER: [&str; 9] = [
    "protocol",
    "n",
    "seed",
    "avg_dissipated_j",
    "fnd_s",
    "hnd_s",
    "lnd_s",
    "delivery",
    "disconnected_count",
];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RunKey {
    pub protocol: Protocol,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RunFailure {
    pub key: RunKey,
    pub error: String,
}

#[derive(Debug)]
pub struct ExperimentReport {
    /// Successful runs, sorted by (protocol, n, seed).
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<RunFailure>,
    pub summary: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
}

impl ExperimentReport {
    pub fn complete(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExperimentOptions {
    /// Also write a full NDJSON event trace per run under `traces/`.
    pub trace: bool,
}

/// Every (protocol, n, seed) triple of the configuration, sorted.
pub fn run_keys(config: &RunConfig) -> Vec<RunKey> {
    let e = &config.experiment;
    let mut keys: Vec<RunKey> = e
        .protocols
        .iter()
        .flat_map(|&protocol| {
            e.node_counts
                .iter()
                .flat_map(move |&n| e.seeds.iter().map(move |&seed| RunKey { protocol, n, seed }))
        })
        .collect();
    keys.sort();
    keys.dedup();
    keys
}

/// Runs the sweep without touching the filesystem.
pub fn execute(config: &RunConfig) -> Result<(Vec<MetricsRecord>, Vec<RunFailure>)> {
    let (records, failures, _) = execute_with(config, false)?;
    Ok((records, failures))
}

type Outcome = (RunKey, Result<(MetricsRecord, Option<Vec<engine::Event>>)>);
type Traces = Vec<(RunKey, Vec<engine::Event>)>;

fn execute_with(config: &RunConfig, trace: bool) -> Result<(Vec<MetricsRecord>, Vec<RunFailure>, Traces)> {
    config.validate()?;
    let keys = run_keys(config);
    let one = |key: &RunKey| -> Outcome {
        let mut cfg = config.sim_config(key.n, key.seed, key.protocol);
        if trace {
            cfg.trace = TraceLevel::Full;
        }
        let out = engine::run(&cfg).map(|o| (o.metrics, trace.then_some(o.events)));
        (key.clone(), out)
    };
    let outcomes: Vec<Outcome> = if config.experiment.parallel {
        keys.par_iter().map(one).collect()
    } else {
        keys.iter().map(one).collect()
    };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut traces = Vec::new();
    for (key, outcome) in outcomes {
        match outcome {
            Ok((m, events)) => {
                if let Some(ev) = events {
                    traces.push((key, ev));
                }
                records.push(m);
            }
            Err(e) => failures.push(RunFailure {
                key,
                error: e.to_string(),
            }),
        }
    }
    Ok((records, failures, traces))
}

/// Runs the sweep and writes `runs.csv`, `summary.csv` and `summary.json`
/// (plus `failures.txt` when any run failed) into `out_dir`.
pub fn run_experiment(config: &RunConfig, out_dir: &Path, options: ExperimentOptions) -> Result<ExperimentReport> {
    fs::create_dir_all(out_dir)?;
    let (records, failures, traces) = execute_with(config, options.trace)?;

    let mut files = Vec::new();
    let runs_path = out_dir.join("runs.csv");
    fs::write(&runs_path, runs_csv(&records)?)?;
    files.push(runs_path);

    let summary = if records.is_empty() {
        Vec::new()
    } else {
        summarize(&records)?
    };
    let summary_csv_path = out_dir.join("summary.csv");
    fs::write(&summary_csv_path, summary_csv(&summary)?)?;
    files.push(summary_csv_path);
    let summary_json_path = out_dir.join("summary.json");
    fs::write(&summary_json_path, summary_json(&summary)?)?;
    files.push(summary_json_path);

    if !failures.is_empty() {
        let path = out_dir.join("failures.txt");
        let mut f = fs::File::create(&path)?;
        writeln!(f, "partial results: {} run(s) failed", failures.len())?;
        for fail in &failures {
            writeln!(
                f,
                "{},{},{}: {}",
                fail.key.protocol, fail.key.n, fail.key.seed, fail.error
            )?;
        }
        files.push(path);
    }

    if !traces.is_empty() {
        let dir = out_dir.join("traces");
        fs::create_dir_all(&dir)?;
        for (key, events) in traces {
            let path = dir.join(format!("{}_n{}_s{}.ndjson", key.protocol, key.n, key.seed));
            write_trace(&events, std::io::BufWriter::new(fs::File::create(&path)?))?;
            files.push(path);
        }
    }

    Ok(ExperimentReport {
        records,
        failures,
        summary,
        files,
    })
}

/// Formats like C's `%.9g`: nine significant digits, trailing zeros trimmed.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if !(-4..9).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (8 - exp) as usize;
        trim_fraction(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_sig9).unwrap_or_default()
}

pub fn runs_csv(records: &[MetricsRecord]) -> Result<String> {
    let mut sorted: Vec<&MetricsRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.protocol, r.n, r.seed));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RUNS_HEADER).map_err(csv_err)?;
    for r in sorted {
        w.write_record([
            r.protocol.to_string(),
            r.n.to_string(),
            r.seed.to_string(),
            format_sig9(r.avg_dissipated_per_node),
            opt(r.lifetime_fnd),
            opt(r.lifetime_hnd),
            opt(r.lifetime_lnd),
            opt(r.delivery_fraction),
            r.disconnected_count.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["protocol".to_string(), "n".to_string(), "runs".to_string()];
    for m in [
        "avg_dissipated_j",
        "total_dissipated_j",
        "fnd_s",
        "hnd_s",
        "lnd_s",
        "delivery",
    ] {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
        header.push(format!("{m}_count"));
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.protocol.to_string(), r.n.to_string(), r.runs.to_string()];
        for s in [
            Some(r.avg_dissipated_j),
            Some(r.total_dissipated_j),
            r.fnd_s,
            r.hnd_s,
            r.lnd_s,
            r.delivery,
        ] {
            match s {
                Some(Stat { mean, std, count }) => rec.extend([format_sig9(mean), format_sig9(std), count.to_string()]),
                None => rec.extend([String::new(), String::new(), "0".to_string()]),
            }
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}

pub fn summary_json(rows: &[SummaryRow]) -> Result<String> {
    #[derive(Serialize)]
    struct Doc<'a> {
        groups: &'a [SummaryRow],
    }
    let mut s = serde_json::to_string_pretty(&Doc { groups: rows })?;
    s.push('\n');
    Ok(s)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Outcome of a τ₀ search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub threshold_base: f64,
    /// Mean first-round head fraction on the calibration seeds.
    pub achieved_fraction: f64,
    /// Same, replayed on fresh seeds.
    pub holdout_fraction: f64,
    pub iterations: usize,
    /// Fractions at the bracket ends (τ₀ → −∞ and τ₀ → +∞).
    pub bracket: (f64, f64),
}

pub const CALIBRATION_MAX_ITERATIONS: usize = 60;
pub const CALIBRATION_TOLERANCE: f64 = 0.2;
const HOLDOUT_SEED_OFFSET: u64 = 1_000_000;

/// Mean fraction of layered nodes that become heads in the first round
/// (fresh batteries, no service history) with threshold base `tau`.
pub fn first_round_head_fraction(config: &RunConfig, n: usize, seeds: &[u64], tau: f64) -> Result<f64> {
    let mut lmeec = config.lmeec.clone();
    lmeec.threshold_base = tau;
    let e_total = config.sim.initial_energy;
    let mut sum = 0.0;
    for &seed in seeds {
        let topo = NetworkTopology::deploy(n, &config.topology, seed)?;
        let layers = assign_layers(&topo);
        let candidates: Vec<Candidate> = layers
            .layered()
            .map(|(id, layer)| Candidate {
                state: NodeProtocolState {
                    node: id,
                    layer,
                    degree: topo.neighbors(id).len(),
                    num_ch: 0,
                    role: Role::Member,
                },
                e_res: e_total,
            })
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let election = elect_cluster_heads(&candidates, &topo, e_total, n, &lmeec)?;
        sum += election.heads.len() as f64 / candidates.len() as f64;
    }
    Ok(sum / seeds.len().max(1) as f64)
}

/// Bisection over τ₀ until the first-round head fraction is within ±20% of `target`.
///
/// The fraction is non-increasing in τ₀; the bracket is widened until it spans
/// everything-elected and the orphan-rescue floor. Targets outside that range,
/// or windows the step function jumps over, end in [`Error::NoConvergence`].
pub fn calibrate_threshold(config: &RunConfig, target: f64, n: usize, trials: usize) -> Result<Calibration> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::config("calibrate.target", "must lie in (0, 1)"));
    }
    if n == 0 {
        return Err(Error::config("calibrate.n", "must be >= 1"));
    }
    if trials == 0 {
        return Err(Error::config("calibrate.trials", "must be >= 1"));
    }
    let seeds: Vec<u64> = (0..trials as u64).collect();
    let frac = |tau: f64| first_round_head_fraction(config, n, &seeds, tau);
    let within = |f: f64| (f - target).abs() <= CALIBRATION_TOLERANCE * target;

    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let (mut f_lo, mut f_hi) = (frac(lo)?, frac(hi)?);
    for _ in 0..20 {
        if f_lo >= 1.0 {
            break;
        }
        lo *= 2.0;
        f_lo = frac(lo)?;
    }
    for _ in 0..20 {
        let next = frac(hi * 2.0)?;
        if next == f_hi {
            break;
        }
        hi *= 2.0;
        f_hi = next;
    }
    let bracket = (f_lo, f_hi);
    let no_convergence = |iterations: usize, best: f64| Error::NoConvergence {
        iterations,
        best_fraction: best,
        target,
    };
    if target > f_lo * (1.0 + CALIBRATION_TOLERANCE) || target < f_hi * (1.0 - CALIBRATION_TOLERANCE) {
        let best = if (f_lo - target).abs() < (f_hi - target).abs() {
            f_lo
        } else {
            f_hi
        };
        return Err(no_convergence(0, best));
    }

    // sanity sweep: the fraction must not increase with τ₀
    let mut prev = f_lo;
    for k in 1..8 {
        let f = frac(lo + (hi - lo) * k as f64 / 8.0)?;
        if f > prev + 1e-12 {
            log::warn!("head fraction is not monotone in the threshold base near {f}");
        }
        prev = f;
    }

    let holdout: Vec<u64> = seeds.iter().map(|s| s + HOLDOUT_SEED_OFFSET).collect();
    let accept = |tau: f64, f: f64, iterations: usize| -> Result<Calibration> {
        Ok(Calibration {
            threshold_base: tau,
            achieved_fraction: f,
            holdout_fraction: first_round_head_fraction(config, n, &holdout, tau)?,
            iterations,
            bracket,
        })
    };
    if within(f_hi) {
        return accept(hi, f_hi, 0);
    }
    if within(f_lo) {
        return accept(lo, f_lo, 0);
    }
    let mut best = if (f_lo - target).abs() < (f_hi - target).abs() {
        (lo, f_lo)
    } else {
        (hi, f_hi)
    };
    for it in 1..=CALIBRATION_MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        let f = frac(mid)?;
        if (f - target).abs() < (best.1 - target).abs() {
            best = (mid, f);
        }
        if within(f) {
            return accept(mid, f, it);
        }
        if f > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(no_convergence(CALIBRATION_MAX_ITERATIONS, best.1))
}
