//! Node deployment, unit-disk neighbor graph and hop-count layering.
//!
//! Layers are what a Hello flood launched by the base station would produce:
//! nodes within radio range of the base station form layer 1, and every other
//! reachable node sits one hop further out than its closest layered neighbor.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{rx_cost, tx_cost, RadioParams};
use crate::error::{Error, Result};

/// Dense node identifier, `0..n` within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Field and radio-range parameters for a deployment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyParams {
    pub field_width: f64,
    pub field_height: f64,
    pub comm_range: f64,
    pub bs_x: f64,
    pub bs_y: f64,
}

impl Default for TopologyParams {
    fn default() -> Self {
        Self {
            field_width: 100.0,
            field_height: 100.0,
            comm_range: 25.0,
            bs_x: 50.0,
            bs_y: 50.0,
        }
    }
}

impl TopologyParams {
    pub fn base_station(&self) -> Position {
        Position::new(self.bs_x, self.bs_y)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.field_width > 0.0 && self.field_width.is_finite()) {
            return Err(Error::config("topology.field_width", "must be > 0"));
        }
        if !(self.field_height > 0.0 && self.field_height.is_finite()) {
            return Err(Error::config("topology.field_height", "must be > 0"));
        }
        if !(self.comm_range > 0.0 && self.comm_range.is_finite()) {
            return Err(Error::config("topology.comm_range", "must be > 0"));
        }
        if !self.bs_x.is_finite() || !self.bs_y.is_finite() {
            return Err(Error::config("topology.bs_x", "base station must be finite"));
        }
        Ok(())
    }
}

/// Draws `n` positions uniformly over `[0, width] × [0, height]`.
pub fn deploy_uniform(n: usize, width: f64, height: f64, seed: u64) -> Result<Vec<Position>> {
    if n == 0 {
        return Err(Error::EmptyDeployment);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let x = rng.random_range(0.0..=width);
            let y = rng.random_range(0.0..=height);
            Position::new(x, y)
        })
        .collect())
}

/// Symmetric, irreflexive unit-disk graph; each neighbor list is sorted by id.
/// Distance exactly `comm_range` counts as in range.
pub fn build_adjacency(positions: &[Position], comm_range: f64) -> Vec<Vec<NodeId>> {
    let n = positions.len();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if positions[i].distance(&positions[j]) <= comm_range {
                adj[i].push(NodeId(j));
                adj[j].push(NodeId(i));
            }
        }
    }
    adj
}

/// A deployed network: positions, base station and neighbor graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub positions: Vec<Position>,
    pub base_station: Position,
    pub comm_range: f64,
    pub adjacency: Vec<Vec<NodeId>>,
}

impl NetworkTopology {
    pub fn new(positions: Vec<Position>, base_station: Position, comm_range: f64) -> Self {
        let adjacency = build_adjacency(&positions, comm_range);
        Self {
            positions,
            base_station,
            comm_range,
            adjacency,
        }
    }

    pub fn deploy(n: usize, params: &TopologyParams, seed: u64) -> Result<Self> {
        let positions = deploy_uniform(n, params.field_width, params.field_height, seed)?;
        Ok(Self::new(positions, params.base_station(), params.comm_range))
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.adjacency[id.0]
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        self.positions[a.0].distance(&self.positions[b.0])
    }

    pub fn distance_to_bs(&self, id: NodeId) -> f64 {
        self.positions[id.0].distance(&self.base_station)
    }

    pub fn in_bs_range(&self, id: NodeId) -> bool {
        self.distance_to_bs(id) <= self.comm_range
    }
}

/// Hop-count layer per node; `None` for nodes the flood never reached.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LayerMap {
    layers: Vec<Option<u32>>,
}

impl LayerMap {
    pub fn from_vec(layers: Vec<Option<u32>>) -> Self {
        Self { layers }
    }

    pub fn get(&self, id: NodeId) -> Option<u32> {
        self.layers.get(id.0).copied().flatten()
    }

    pub fn as_slice(&self) -> &[Option<u32>] {
        &self.layers
    }

    pub fn layered(&self) -> impl Iterator<Item = (NodeId, u32)> + '_ {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|l| (NodeId(i), l)))
    }

    pub fn layered_count(&self) -> usize {
        self.layers.iter().filter(|l| l.is_some()).count()
    }

    pub fn max_layer(&self) -> Option<u32> {
        self.layers.iter().flatten().copied().max()
    }
}

/// Hop layers over all nodes.
pub fn assign_layers(topology: &NetworkTopology) -> LayerMap {
    assign_layers_among(topology, |_| true)
}

/// Hop layers over the subgraph of nodes for which `participates` holds
/// (dead nodes neither receive nor rebroadcast the Hello).
pub fn assign_layers_among<F>(topology: &NetworkTopology, participates: F) -> LayerMap
where
    F: Fn(NodeId) -> bool,
{
    let n = topology.len();
    let mut layers: Vec<Option<u32>> = vec![None; n];
    let mut queue = VecDeque::new();
    for (i, slot) in layers.iter_mut().enumerate() {
        let id = NodeId(i);
        if participates(id) && topology.in_bs_range(id) {
            *slot = Some(1);
            queue.push_back(id);
        }
    }
    while let Some(u) = queue.pop_front() {
        let next = layers[u.0].unwrap() + 1;
        for &v in topology.neighbors(u) {
            if layers[v.0].is_none() && participates(v) {
                layers[v.0] = Some(next);
                queue.push_back(v);
            }
        }
    }
    let map = LayerMap { layers };
    let unreachable = (0..n)
        .filter(|&i| participates(NodeId(i)) && map.layers[i].is_none())
        .count();
    if unreachable > 0 {
        log::warn!("degenerate topology: {unreachable} node(s) unreachable from the base station");
    }
    map
}

/// Energy a node spends on one Hello flood.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HelloDebit {
    pub tx_joules: f64,
    /// Number of Hello copies heard (base station included).
    pub receptions: usize,
    pub rx_joules: f64,
}

impl HelloDebit {
    pub fn total(&self) -> f64 {
        self.tx_joules + self.rx_joules
    }
}

/// Energy debits of one Hello flood; returned, not applied.
///
/// Every layered node rebroadcasts once at `comm_range`, and hears one copy from
/// each layered neighbor plus the base station's own Hello when in its range.
/// Unlayered nodes are charged nothing.
pub fn hello_energy_accounting(topology: &NetworkTopology, layers: &LayerMap, radio: &RadioParams) -> Vec<HelloDebit> {
    let bits = radio.control_bits;
    let tx = tx_cost(bits, topology.comm_range, radio);
    let rx = rx_cost(bits, radio);
    (0..topology.len())
        .map(|i| {
            let id = NodeId(i);
            if layers.get(id).is_none() {
                return HelloDebit::default();
            }
            let from_nodes = topology
                .neighbors(id)
                .iter()
                .filter(|&&j| layers.get(j).is_some())
                .count();
            let receptions = from_nodes + usize::from(topology.in_bs_range(id));
            HelloDebit {
                tx_joules: tx,
                receptions,
                rx_joules: receptions as f64 * rx,
            }
        })
        .collect()
}
