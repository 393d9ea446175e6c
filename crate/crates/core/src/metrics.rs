//! Per-round and per-run observations, lifetime milestones and cross-seed summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{Action, Event, Protocol};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    /// Alive nodes at the end of the round.
    pub alive_count: usize,
    /// Energy dissipated during this round.
    pub dissipated_j: f64,
    /// Cumulative dissipation at the end of the round.
    pub total_dissipated_j: f64,
    pub ch_count: usize,
    /// Head layer → mean member count of that layer's clusters.
    pub mean_cluster_size_by_layer: BTreeMap<u32, f64>,
    /// (head layer, member count) per cluster; empty for protocols without layers.
    pub cluster_sizes: Vec<(u32, usize)>,
    pub sum_initial: f64,
    pub sum_residual: f64,
    pub sum_dissipated: f64,
    /// Readings that reached the base station / readings sensed.
    pub delivered: u64,
    pub attempted: u64,
    /// Alive nodes outside the layered graph this round.
    pub disconnected: usize,
}

impl RoundRecord {
    pub fn delivery(&self) -> Option<f64> {
        (self.attempted > 0).then(|| self.delivered as f64 / self.attempted as f64)
    }

    /// Relative gap between Σ initial and Σ residual + Σ dissipated.
    pub fn conservation_error(&self) -> f64 {
        ((self.sum_residual + self.sum_dissipated) - self.sum_initial).abs() / self.sum_initial.max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub protocol: Protocol,
    pub n: usize,
    pub seed: u64,
    pub per_round: Vec<RoundRecord>,
    pub lifetime_fnd: Option<f64>,
    pub lifetime_hnd: Option<f64>,
    pub lifetime_lnd: Option<f64>,
    /// Σ dissipated / deployed N.
    pub avg_dissipated_per_node: f64,
    pub total_dissipated_j: f64,
    /// Mean of per-round delivery over rounds that sensed anything.
    pub delivery_fraction: Option<f64>,
    /// Nodes unreachable from the base station at deployment.
    pub disconnected_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Lifetime {
    pub fnd: Option<f64>,
    pub hnd: Option<f64>,
    pub lnd: Option<f64>,
}

/// Lifetime milestones from the death events of a run with `n` deployed nodes.
///
/// FND is the first death, HND the death that brings the dead count to ⌈n/2⌉,
/// LND the death of the n-th node. Milestones not reached are `None`.
pub fn compute_lifetime(events: &[Event], n: usize) -> Lifetime {
    let mut deaths: Vec<f64> = events
        .iter()
        .filter(|e| e.action == Action::Death)
        .map(|e| e.time)
        .collect();
    deaths.sort_by(f64::total_cmp);
    lifetime_from_death_times(&deaths, n)
}

pub fn lifetime_from_death_times(sorted_deaths: &[f64], n: usize) -> Lifetime {
    let nth = |k: usize| -> Option<f64> {
        if k == 0 {
            None
        } else {
            sorted_deaths.get(k - 1).copied()
        }
    };
    Lifetime {
        fnd: nth(1),
        hnd: nth(n.div_ceil(2)),
        lnd: if n > 0 && sorted_deaths.len() >= n {
            nth(n)
        } else {
            None
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Number of samples contributing (undefined values are skipped).
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stat {
            mean,
            std: var.sqrt(),
            count: values.len(),
        })
    }
}

/// Aggregates for one (protocol, n) group across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub protocol: Protocol,
    pub n: usize,
    pub runs: usize,
    pub avg_dissipated_j: Stat,
    pub total_dissipated_j: Stat,
    /// `None` when no run reached the milestone.
    pub fnd_s: Option<Stat>,
    pub hnd_s: Option<Stat>,
    pub lnd_s: Option<Stat>,
    pub delivery: Option<Stat>,
}

/// Groups records by (protocol, n) and reports mean and standard deviation
/// across seeds, in sorted group order.
pub fn summarize(records: &[MetricsRecord]) -> Result<Vec<SummaryRow>> {
    let mut groups: BTreeMap<(Protocol, usize), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.protocol, r.n)).or_default().push(r);
    }
    if groups.is_empty() {
        return Err(Error::EmptyGroup);
    }
    groups
        .into_iter()
        .map(|((protocol, n), rs)| summarize_group(protocol, n, &rs))
        .collect()
}

pub fn summarize_group(protocol: Protocol, n: usize, records: &[&MetricsRecord]) -> Result<SummaryRow> {
    if records.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let collect =
        |f: &dyn Fn(&MetricsRecord) -> Option<f64>| -> Vec<f64> { records.iter().filter_map(|r| f(r)).collect() };
    let required = |f: &dyn Fn(&MetricsRecord) -> Option<f64>| Stat::of(&collect(f)).unwrap_or_default();
    Ok(SummaryRow {
        protocol,
        n,
        runs: records.len(),
        avg_dissipated_j: required(&|r| Some(r.avg_dissipated_per_node)),
        total_dissipated_j: required(&|r| Some(r.total_dissipated_j)),
        fnd_s: Stat::of(&collect(&|r| r.lifetime_fnd)),
        hnd_s: Stat::of(&collect(&|r| r.lifetime_hnd)),
        lnd_s: Stat::of(&collect(&|r| r.lifetime_lnd)),
        delivery: Stat::of(&collect(&|r| r.delivery_fraction)),
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    pearson(&rx, &ry)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}
