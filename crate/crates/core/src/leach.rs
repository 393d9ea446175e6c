//! LEACH baseline: rotating probabilistic head election, nearest-head joining
//! and single-hop head-to-base-station delivery.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmeec::{ClusterAssignment, Relay};
use crate::topology::{NetworkTopology, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeachParams {
    /// Desired fraction of heads per round.
    pub p: f64,
}

impl Default for LeachParams {
    fn default() -> Self {
        Self { p: 0.05 }
    }
}

impl LeachParams {
    pub fn validate(&self) -> Result<()> {
        if self.p > 0.0 && self.p < 1.0 {
            Ok(())
        } else {
            Err(Error::config("leach.p", "must lie in (0, 1)"))
        }
    }

    /// Rounds per rotation cycle, ⌈1/p⌉.
    pub fn cycle_len(&self) -> u64 {
        cycle_len(self.p)
    }
}

fn cycle_len(p: f64) -> u64 {
    // absorb representation error in 1/p (1/0.05 must give 20, not 21)
    ((1.0 / p) - 1e-9).ceil().max(1.0) as u64
}

/// Rotating election threshold `p / (1 − p·(r mod ⌈1/p⌉))`, or 0 when not eligible.
/// Saturates at 1 in the last round of a cycle.
pub fn leach_threshold(p: f64, round: u64, eligible: bool) -> f64 {
    if !eligible {
        return 0.0;
    }
    let m = (round % cycle_len(p)) as f64;
    let denom = 1.0 - p * m;
    if denom <= p * (1.0 + 1e-9) {
        1.0
    } else {
        p / denom
    }
}

/// Per-node rotation bookkeeping, carried across rounds of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeachState {
    last_head_round: Vec<Option<u64>>,
    pub num_ch: Vec<u32>,
}

impl LeachState {
    pub fn new(n: usize) -> Self {
        Self {
            last_head_round: vec![None; n],
            num_ch: vec![0; n],
        }
    }

    /// Not a head within the last ⌈1/p⌉ rounds.
    pub fn eligible(&self, id: NodeId, round: u64, params: &LeachParams) -> bool {
        match self.last_head_round[id.0] {
            None => true,
            Some(r) => round - r >= params.cycle_len(),
        }
    }
}

/// Elects this round's heads among `alive` nodes: one uniform draw per alive
/// node in id order, elected when the draw falls below its threshold.
pub fn leach_elect<R: Rng + ?Sized>(
    alive: &[bool],
    round: u64,
    params: &LeachParams,
    state: &mut LeachState,
    rng: &mut R,
) -> BTreeSet<NodeId> {
    let mut heads = BTreeSet::new();
    for (i, _) in alive.iter().enumerate().filter(|(_, &a)| a) {
        let id = NodeId(i);
        let t = leach_threshold(params.p, round, state.eligible(id, round, params));
        let draw: f64 = rng.random();
        if draw < t {
            heads.insert(id);
        }
    }
    for &h in &heads {
        state.last_head_round[h.0] = Some(round);
        state.num_ch[h.0] += 1;
    }
    heads
}

/// Nearest head for `node` (ties to the smaller id).
pub fn nearest_head(node: NodeId, heads: &BTreeSet<NodeId>, topology: &NetworkTopology) -> Option<NodeId> {
    heads
        .iter()
        .map(|&h| (topology.distance(node, h), h))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, h)| h)
}

/// Every alive non-head joins its nearest head; heads relay straight to the base station.
pub fn leach_form_clusters(
    heads: &BTreeSet<NodeId>,
    topology: &NetworkTopology,
    alive: &[bool],
) -> Vec<ClusterAssignment> {
    let mut members: Vec<Vec<NodeId>> = vec![Vec::new(); heads.len()];
    let index: std::collections::BTreeMap<NodeId, usize> = heads.iter().enumerate().map(|(k, &h)| (h, k)).collect();
    for (i, _) in alive.iter().enumerate().filter(|(_, &a)| a) {
        let id = NodeId(i);
        if heads.contains(&id) {
            continue;
        }
        if let Some(h) = nearest_head(id, heads, topology) {
            members[index[&h]].push(id);
        }
    }
    heads
        .iter()
        .zip(members)
        .map(|(&h, m)| {
            let mut c = ClusterAssignment::new(h, m);
            c.relay = Relay::BaseStation;
            c
        })
        .collect()
}
