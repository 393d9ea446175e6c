//! Layered multi-hop clustering: weighted self-election, announcement-weighted
//! cluster joining, adjacent-head relay selection and TDMA slotting.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{LayerMap, NetworkTopology, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmeecParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// τ₀ in the layer threshold τ₀ / L.
    pub threshold_base: f64,
    /// Use 1/|α − L| for the degree coefficient instead of 1/(α − L).
    pub abs_degree_term: bool,
    /// Optional per-layer overrides; entry `k` applies to layer `k + 1`.
    pub alpha_by_layer: Vec<f64>,
    pub beta_by_layer: Vec<f64>,
    pub gamma_by_layer: Vec<f64>,
}

impl Default for LmeecParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            gamma: 0.5,
            threshold_base: DEFAULT_THRESHOLD_BASE,
            abs_degree_term: false,
            alpha_by_layer: Vec::new(),
            beta_by_layer: Vec::new(),
            gamma_by_layer: Vec::new(),
        }
    }
}

/// Smallest round τ₀ at which the first-round head fraction on the default
/// 100-node field drops to the orphan-rescue floor (about 12.5% heads); lower
/// fractions are unreachable there. See `lmeec calibrate`.
pub const DEFAULT_THRESHOLD_BASE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LmeecParams {
    pub fn coefficients(&self, layer: u32) -> LayerCoefficients {
        let pick = |table: &[f64], base: f64| -> f64 {
            layer
                .checked_sub(1)
                .and_then(|k| table.get(k as usize))
                .copied()
                .unwrap_or(base)
        };
        LayerCoefficients {
            alpha: pick(&self.alpha_by_layer, self.alpha),
            beta: pick(&self.beta_by_layer, self.beta),
            gamma: pick(&self.gamma_by_layer, self.gamma),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_alpha = |field: &str, a: f64| {
            if (0.0..1.0).contains(&a) {
                Ok(())
            } else {
                Err(Error::config(field, "must lie in [0, 1)"))
            }
        };
        let check_unit = |field: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(field, "must lie in [0, 1]"))
            }
        };
        check_alpha("lmeec.alpha", self.alpha)?;
        check_unit("lmeec.beta", self.beta)?;
        check_unit("lmeec.gamma", self.gamma)?;
        for (k, &a) in self.alpha_by_layer.iter().enumerate() {
            check_alpha(&format!("lmeec.alpha_by_layer[{k}]"), a)?;
        }
        for (k, &b) in self.beta_by_layer.iter().enumerate() {
            check_unit(&format!("lmeec.beta_by_layer[{k}]"), b)?;
        }
        for (k, &g) in self.gamma_by_layer.iter().enumerate() {
            check_unit(&format!("lmeec.gamma_by_layer[{k}]"), g)?;
        }
        if !self.threshold_base.is_finite() {
            return Err(Error::config("lmeec.threshold_base", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    ClusterHead,
    Member,
    Orphan,
}

/// Per-round protocol view of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeProtocolState {
    pub node: NodeId,
    pub layer: u32,
    /// Alive neighbors this round.
    pub degree: usize,
    /// Past cluster-head terms.
    pub num_ch: u32,
    pub role: Role,
}

/// Where a cluster-head's aggregate goes next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relay {
    BaseStation,
    /// Adjacent cluster-head in a lower layer.
    Head(NodeId),
    /// Non-head neighbor in a lower layer, forwarding without aggregation.
    Forwarder(NodeId),
}

impl Relay {
    pub fn node(self) -> Option<NodeId> {
        match self {
            Relay::BaseStation => None,
            Relay::Head(n) | Relay::Forwarder(n) => Some(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub head: NodeId,
    /// Sorted by id.
    pub members: Vec<NodeId>,
    pub relay: Relay,
    pub tdma: BTreeMap<NodeId, usize>,
}

impl ClusterAssignment {
    pub fn new(head: NodeId, mut members: Vec<NodeId>) -> Self {
        members.sort_unstable();
        members.dedup();
        let tdma = build_tdma_schedule(&members);
        Self {
            head,
            members,
            relay: Relay::BaseStation,
            tdma,
        }
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Members in TDMA slot order.
    pub fn slot_order(&self) -> impl Iterator<Item = NodeId> + '_ {
        let mut order: Vec<(usize, NodeId)> = self.tdma.iter().map(|(&m, &s)| (s, m)).collect();
        order.sort_unstable();
        order.into_iter().map(|(_, m)| m)
    }
}

/// Self-election weight of one node:
///
/// `P = (1/(α−L))·(deg/N) + (1/(β+L))·(E_res/E_total) − γ·(1 − 1/(1+num_CH))`
pub fn compute_election_weight(
    state: &NodeProtocolState,
    e_res: f64,
    e_total: f64,
    n_total: usize,
    params: &LmeecParams,
) -> Result<f64> {
    if state.layer < 1 {
        return Err(Error::Unlayered);
    }
    let layer = f64::from(state.layer);
    let LayerCoefficients { alpha, beta, gamma } = params.coefficients(state.layer);
    let degree_coef = if params.abs_degree_term {
        1.0 / (alpha - layer).abs()
    } else {
        1.0 / (alpha - layer)
    };
    let degree_term = degree_coef * (state.degree as f64 / n_total as f64);
    let energy_term = (1.0 / (beta + layer)) * (e_res / e_total);
    let penalty = gamma * (1.0 - 1.0 / (1.0 + f64::from(state.num_ch)));
    Ok(degree_term + energy_term - penalty)
}

pub fn election_threshold(layer: u32, params: &LmeecParams) -> f64 {
    params.threshold_base / f64::from(layer)
}

/// A node taking part in this round's election.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub state: NodeProtocolState,
    pub e_res: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Election {
    pub heads: BTreeSet<NodeId>,
    /// Heads that passed their layer threshold.
    pub self_elected: BTreeSet<NodeId>,
    /// Heads promoted because they heard no announcement.
    pub rescued: BTreeSet<NodeId>,
    pub weights: BTreeMap<NodeId, f64>,
}

/// Threshold election followed by orphan rescue.
///
/// Candidates are the alive, layered nodes; two candidates hear each other when
/// they are topology neighbors. After thresholding, candidates with no head in
/// their closed neighborhood are visited in order of decreasing weight (ties by
/// smaller id) and promoted if they are still uncovered at their turn, so the
/// result always dominates the candidate set.
pub fn elect_cluster_heads(
    candidates: &[Candidate],
    topology: &NetworkTopology,
    e_total: f64,
    n_total: usize,
    params: &LmeecParams,
) -> Result<Election> {
    let mut election = Election::default();
    let mut is_candidate = vec![false; topology.len()];
    for c in candidates {
        is_candidate[c.state.node.0] = true;
        let w = compute_election_weight(&c.state, c.e_res, e_total, n_total, params)?;
        election.weights.insert(c.state.node, w);
        if w >= election_threshold(c.state.layer, params) {
            election.self_elected.insert(c.state.node);
        }
    }
    election.heads = election.self_elected.clone();

    let covered = |id: NodeId, heads: &BTreeSet<NodeId>| {
        heads.contains(&id)
            || topology
                .neighbors(id)
                .iter()
                .any(|j| is_candidate[j.0] && heads.contains(j))
    };
    let mut order: Vec<(f64, NodeId)> = candidates
        .iter()
        .map(|c| c.state.node)
        .filter(|&id| !covered(id, &election.heads))
        .map(|id| (election.weights[&id], id))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, id) in order {
        if !covered(id, &election.heads) {
            election.heads.insert(id);
            election.rescued.insert(id);
        }
    }
    Ok(election)
}

/// Announcement weight `P_CH = (E_res / deg) · L`.
pub fn compute_announcement_weight(e_res: f64, degree: usize, layer: u32) -> Result<f64> {
    if degree == 0 {
        return Err(Error::SingletonCluster);
    }
    Ok(e_res / degree as f64 * f64::from(layer))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Announcement {
    pub weight: f64,
    pub layer: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Formation {
    /// One entry per head, ordered by head id.
    pub clusters: Vec<ClusterAssignment>,
    /// Participants that heard no announcement.
    pub orphans: Vec<NodeId>,
}

/// The head a node joins among the announcements it heard: greatest weight,
/// then the head farther from the base station (higher layer), then smaller id.
pub fn choose_head<I>(heard: I) -> Option<NodeId>
where
    I: IntoIterator<Item = (NodeId, Announcement)>,
{
    heard
        .into_iter()
        .reduce(|best, cand| {
            let (b, c) = (best.1, cand.1);
            let better = c
                .weight
                .total_cmp(&b.weight)
                .then(c.layer.cmp(&b.layer))
                .then(best.0.cmp(&cand.0));
            if better.is_gt() {
                cand
            } else {
                best
            }
        })
        .map(|(id, _)| id)
}

/// Joins every participating non-head to the best announcing neighbor head.
///
/// `participants` marks the alive, layered nodes. Heads without an entry in
/// `announcements` (singletons) still get a cluster but attract no members.
pub fn form_clusters(
    heads: &BTreeSet<NodeId>,
    announcements: &BTreeMap<NodeId, Announcement>,
    topology: &NetworkTopology,
    participants: &[bool],
) -> Formation {
    let mut members: BTreeMap<NodeId, Vec<NodeId>> = heads.iter().map(|&h| (h, Vec::new())).collect();
    let mut orphans = Vec::new();
    for (i, _) in participants.iter().enumerate().filter(|(_, &p)| p) {
        let id = NodeId(i);
        if heads.contains(&id) {
            continue;
        }
        let heard = topology
            .neighbors(id)
            .iter()
            .filter_map(|h| announcements.get(h).map(|a| (*h, *a)));
        match choose_head(heard) {
            Some(h) => members.get_mut(&h).expect("announcer is a head").push(id),
            None => orphans.push(id),
        }
    }
    Formation {
        clusters: members.into_iter().map(|(h, m)| ClusterAssignment::new(h, m)).collect(),
        orphans,
    }
}

/// Next hop toward the base station for `node`.
///
/// Layer-1 nodes send to the base station. Otherwise the ladder is: an adjacent
/// alive head in a lower layer (lowest layer, then most residual energy, then
/// smallest id); failing that, any alive lower-layer neighbor as a forwarder
/// with the same ordering; failing that, the base station directly.
pub fn select_relay(
    node: NodeId,
    heads: &BTreeSet<NodeId>,
    topology: &NetworkTopology,
    layers: &LayerMap,
    residual: &[f64],
    alive: &[bool],
) -> Relay {
    let Some(own) = layers.get(node) else {
        return Relay::BaseStation;
    };
    if own == 1 {
        return Relay::BaseStation;
    }
    let lower = |only_heads: bool| {
        topology
            .neighbors(node)
            .iter()
            .copied()
            .filter(|&j| alive[j.0] && (!only_heads || heads.contains(&j)))
            .filter_map(|j| layers.get(j).filter(|&l| l < own).map(|l| (j, l)))
            .min_by(|a, b| {
                a.1.cmp(&b.1)
                    .then(residual[b.0 .0].total_cmp(&residual[a.0 .0]))
                    .then(a.0.cmp(&b.0))
            })
            .map(|(j, _)| j)
    };
    if let Some(h) = lower(true) {
        Relay::Head(h)
    } else if let Some(f) = lower(false) {
        Relay::Forwarder(f)
    } else {
        Relay::BaseStation
    }
}

/// Members sorted by id get consecutive slots `0..m`.
pub fn build_tdma_schedule(members: &[NodeId]) -> BTreeMap<NodeId, usize> {
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted.into_iter().enumerate().map(|(s, m)| (m, s)).collect()
}
