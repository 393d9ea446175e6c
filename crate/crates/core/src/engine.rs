//! Round-based simulation loop.
//!
//! Every round runs a control phase (configuration, election, announcements,
//! joins) that costs energy but no simulated time, followed by a steady state
//! of sensing ticks. On each tick, members transmit to their head in TDMA slot
//! order, the head aggregates everything it received plus its own reading into
//! one packet and sends it toward the base station along the relay chain.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};

use crate::energy::{aggregate_cost, rx_cost, tx_cost, EnergyState, RadioParams};
use crate::error::{Error, Result};
use crate::leach::{leach_elect, leach_form_clusters, LeachParams, LeachState};
use crate::lmeec::{
    compute_announcement_weight, elect_cluster_heads, form_clusters, select_relay, Announcement, Candidate,
    ClusterAssignment, LmeecParams, NodeProtocolState, Relay, Role,
};
use crate::metrics::{lifetime_from_death_times, MetricsRecord, RoundRecord};
use crate::topology::{
    assign_layers_among, hello_energy_accounting, LayerMap, NetworkTopology, NodeId, TopologyParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Leach,
    Lmeec,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::Leach, Protocol::Lmeec];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Leach => "leach",
            Protocol::Lmeec => "lmeec",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "leach" => Ok(Protocol::Leach),
            "lmeec" => Ok(Protocol::Lmeec),
            other => Err(Error::config("protocol", format!("unknown protocol `{other}`"))),
        }
    }
}

/// Timing and battery parameters of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    /// Seconds.
    pub duration: f64,
    pub round_length: f64,
    pub sense_interval: f64,
    /// Joules per node at deployment.
    pub initial_energy: f64,
    /// Repeat the Hello flood at the start of every round (otherwise only in round 0).
    pub reconfigure_every_round: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            duration: 500.0,
            round_length: 20.0,
            sense_interval: 0.2,
            initial_energy: 2.0,
            reconfigure_every_round: true,
        }
    }
}

/// `a / b` when it is a whole number (up to float noise).
fn whole_ratio(a: f64, b: f64) -> Option<u64> {
    let r = a / b;
    let k = r.round();
    ((r - k).abs() <= 1e-9 * k.max(1.0) && k >= 0.0).then_some(k as u64)
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::config("sim.duration", "must be >= 0"));
        }
        if !(self.round_length > 0.0 && self.round_length.is_finite()) {
            return Err(Error::config("sim.round_length", "must be > 0"));
        }
        if !(self.sense_interval > 0.0 && self.sense_interval.is_finite()) {
            return Err(Error::config("sim.sense_interval", "must be > 0"));
        }
        if !(self.initial_energy > 0.0 && self.initial_energy.is_finite()) {
            return Err(Error::config("sim.initial_energy", "must be > 0"));
        }
        if whole_ratio(self.duration, self.round_length).is_none() {
            return Err(Error::config("sim.round_length", "must divide sim.duration"));
        }
        match whole_ratio(self.round_length, self.sense_interval) {
            Some(k) if k >= 1 => Ok(()),
            _ => Err(Error::config("sim.sense_interval", "must divide sim.round_length")),
        }
    }

    pub fn rounds(&self) -> u64 {
        whole_ratio(self.duration, self.round_length).unwrap_or(0)
    }

    pub fn ticks_per_round(&self) -> u64 {
        whole_ratio(self.round_length, self.sense_interval).unwrap_or(0)
    }
}

/// How much of the event stream a run keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceLevel {
    /// Death events only (enough for lifetime metrics).
    #[default]
    Deaths,
    /// Every debit, election and death, plus per-tick delivered sets.
    Full,
}

/// Everything one run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub seed: u64,
    pub protocol: Protocol,
    pub sim: SimParams,
    pub topology: TopologyParams,
    pub radio: RadioParams,
    pub lmeec: LmeecParams,
    pub leach: LeachParams,
    pub trace: TraceLevel,
}

impl SimConfig {
    pub fn new(n: usize, seed: u64, protocol: Protocol) -> Self {
        Self {
            n,
            seed,
            protocol,
            sim: SimParams::default(),
            topology: TopologyParams::default(),
            radio: RadioParams::default(),
            lmeec: LmeecParams::default(),
            leach: LeachParams::default(),
            trace: TraceLevel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("experiment.node_counts", "node count must be >= 1"));
        }
        self.sim.validate()?;
        self.topology.validate()?;
        self.radio.validate()?;
        self.lmeec.validate()?;
        self.leach.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Actor {
    Node(NodeId),
    BaseStation,
}

impl Serialize for Actor {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Actor::Node(id) => s.serialize_u64(id.0 as u64),
            Actor::BaseStation => s.serialize_str("bs"),
        }
    }
}

impl From<Relay> for Actor {
    fn from(r: Relay) -> Self {
        r.node().map_or(Actor::BaseStation, Actor::Node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    HelloTx,
    HelloRx,
    Elected,
    AnnounceTx,
    AnnounceRx,
    JoinTx,
    JoinRx,
    DataTx,
    DataRx,
    Aggregate,
    RelayRx,
    RelayTx,
    Death,
}

/// One entry of the run log. `joules` is what was actually drawn from the battery.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub round: u64,
    pub actor: Actor,
    pub action: Action,
    pub joules: f64,
    pub peer: Option<Actor>,
}

impl Serialize for Event {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Event", 6)?;
        st.serialize_field("time", &self.time)?;
        st.serialize_field("round", &self.round)?;
        st.serialize_field("actor", &self.actor)?;
        st.serialize_field("action", &self.action)?;
        st.serialize_field("joules", &self.joules)?;
        st.serialize_field("peer", &self.peer)?;
        st.end()
    }
}

/// Writes events as newline-delimited JSON.
pub fn write_trace<W: Write>(events: &[Event], mut out: W) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickDelivery {
    pub time: f64,
    /// Readings sensed this tick by participating nodes alive at tick start.
    pub attempted: u64,
    pub delivered: u64,
    /// Nodes whose reading reached the base station; kept at [`TraceLevel::Full`].
    pub delivered_nodes: Option<Vec<NodeId>>,
}

/// What one round decided and how its data phase went.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundState {
    pub round_index: u64,
    pub clusters: Vec<ClusterAssignment>,
    /// Alive at the start of the round.
    pub alive_set: Vec<NodeId>,
    /// Nodes sending straight to the base station (LEACH round without heads).
    pub direct: Vec<NodeId>,
    /// Next hop of every participating node, as selected for this round.
    pub next_hop: BTreeMap<NodeId, Relay>,
    /// Layer map used this round (empty for LEACH).
    pub layers: LayerMap,
    pub orphans: Vec<NodeId>,
    pub ticks: Vec<TickDelivery>,
    /// Index range of this round's entries in the run's event log.
    pub events: std::ops::Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryReport {
    /// Per tick, delivered / attempted (1.0 for ticks with nothing to send).
    pub per_tick: Vec<f64>,
    pub fraction: f64,
}

/// Fraction of sensed readings that reached the base station, per tick and overall.
pub fn packet_delivery_check(round: &RoundState) -> DeliveryReport {
    let per_tick = round
        .ticks
        .iter()
        .map(|t| {
            if t.attempted == 0 {
                1.0
            } else {
                t.delivered as f64 / t.attempted as f64
            }
        })
        .collect();
    let (d, a) = round
        .ticks
        .iter()
        .fold((0u64, 0u64), |(d, a), t| (d + t.delivered, a + t.attempted));
    DeliveryReport {
        per_tick,
        fraction: if a == 0 { 1.0 } else { d as f64 / a as f64 },
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub events: Vec<Event>,
    pub rounds: Vec<RoundState>,
    pub topology: NetworkTopology,
    /// Battery state of every node at the end of the run.
    pub energy: Vec<EnergyState>,
}

/// Runs one simulation to completion.
pub fn run(config: &SimConfig) -> Result<RunOutput> {
    config.validate()?;
    let topology = NetworkTopology::deploy(config.n, &config.topology, config.seed)?;
    Ok(Engine::new(config, topology).run())
}

/// Runs one simulation on a caller-supplied topology.
pub fn run_on(config: &SimConfig, topology: NetworkTopology) -> Result<RunOutput> {
    config.validate()?;
    if topology.len() != config.n {
        return Err(Error::config("n", "does not match the topology size"));
    }
    Ok(Engine::new(config, topology).run())
}

struct RoundPlan {
    clusters: Vec<ClusterAssignment>,
    direct: Vec<NodeId>,
    next_hop: BTreeMap<NodeId, Relay>,
    orphans: Vec<NodeId>,
    ch_count: usize,
    disconnected: usize,
}

struct Engine<'c> {
    cfg: &'c SimConfig,
    topo: NetworkTopology,
    energy: Vec<EnergyState>,
    num_ch: Vec<u32>,
    leach: LeachState,
    rng: ChaCha8Rng,
    layers: LayerMap,
    events: Vec<Event>,
    deaths: Vec<f64>,
    now: f64,
    round: u64,
}

impl<'c> Engine<'c> {
    fn new(cfg: &'c SimConfig, topo: NetworkTopology) -> Self {
        let n = topo.len();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        // stream 0 is the deployment stream
        rng.set_stream(1);
        Self {
            cfg,
            energy: vec![EnergyState::new(cfg.sim.initial_energy); n],
            num_ch: vec![0; n],
            leach: LeachState::new(n),
            rng,
            layers: LayerMap::default(),
            events: Vec::new(),
            deaths: Vec::new(),
            now: 0.0,
            round: 0,
            topo,
        }
    }

    fn full(&self) -> bool {
        self.cfg.trace == TraceLevel::Full
    }

    fn alive(&self, id: NodeId) -> bool {
        self.energy[id.0].alive
    }

    fn alive_mask(&self) -> Vec<bool> {
        self.energy.iter().map(|e| e.alive).collect()
    }

    fn log(&mut self, actor: Actor, action: Action, joules: f64, peer: Option<Actor>) {
        self.events.push(Event {
            time: self.now,
            round: self.round,
            actor,
            action,
            joules,
            peer,
        });
    }

    /// Debits `id`; true when the action completed. Dead nodes do nothing.
    fn spend(&mut self, id: NodeId, amount: f64, action: Action, peer: Option<Actor>) -> bool {
        if !self.energy[id.0].alive {
            return false;
        }
        let debit = self.energy[id.0].debit(amount).expect("energy costs are non-negative");
        if self.full() {
            self.log(Actor::Node(id), action, debit.drawn, peer);
        }
        if debit.died {
            self.deaths.push(self.now);
            self.log(Actor::Node(id), Action::Death, 0.0, None);
        }
        debit.completed
    }

    fn run(mut self) -> RunOutput {
        let sim = self.cfg.sim;
        let ticks = sim.ticks_per_round();
        let n = self.topo.len();
        let mut rounds = Vec::new();
        let mut per_round = Vec::new();
        let mut initial_disconnected = 0;
        let mut prev_dissipated = 0.0;

        for r in 0..sim.rounds() {
            if self.energy.iter().all(|e| !e.alive) {
                break;
            }
            self.round = r;
            self.now = r as f64 * sim.round_length;
            let first_event = self.events.len();
            let alive_set: Vec<NodeId> = (0..n).map(NodeId).filter(|&i| self.alive(i)).collect();

            let plan = match self.cfg.protocol {
                Protocol::Lmeec => self.lmeec_control(),
                Protocol::Leach => self.leach_control(),
            };
            if r == 0 {
                initial_disconnected = plan.disconnected;
            }

            let mut tick_log = Vec::with_capacity(ticks as usize);
            for k in 0..ticks {
                self.now = (r * ticks + k) as f64 * sim.sense_interval;
                tick_log.push(self.data_tick(&plan));
            }

            let sum_initial: f64 = self.energy.iter().map(|e| e.initial).sum();
            let sum_residual: f64 = self.energy.iter().map(|e| e.residual).sum();
            let sum_dissipated: f64 = self.energy.iter().map(|e| e.dissipated).sum();
            let (delivered, attempted) = tick_log
                .iter()
                .fold((0, 0), |(d, a), t| (d + t.delivered, a + t.attempted));

            let mut by_layer: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
            let mut cluster_sizes = Vec::new();
            if self.cfg.protocol == Protocol::Lmeec {
                for c in &plan.clusters {
                    if let Some(l) = self.layers.get(c.head) {
                        cluster_sizes.push((l, c.size()));
                        let e = by_layer.entry(l).or_default();
                        e.0 += c.size();
                        e.1 += 1;
                    }
                }
            }

            per_round.push(RoundRecord {
                round: r,
                alive_count: self.energy.iter().filter(|e| e.alive).count(),
                dissipated_j: sum_dissipated - prev_dissipated,
                total_dissipated_j: sum_dissipated,
                ch_count: plan.ch_count,
                mean_cluster_size_by_layer: by_layer
                    .into_iter()
                    .map(|(l, (m, c))| (l, m as f64 / c as f64))
                    .collect(),
                cluster_sizes,
                sum_initial,
                sum_residual,
                sum_dissipated,
                delivered,
                attempted,
                disconnected: plan.disconnected,
            });
            prev_dissipated = sum_dissipated;

            rounds.push(RoundState {
                round_index: r,
                clusters: plan.clusters,
                alive_set,
                direct: plan.direct,
                next_hop: plan.next_hop,
                layers: if self.cfg.protocol == Protocol::Lmeec {
                    self.layers.clone()
                } else {
                    LayerMap::default()
                },
                orphans: plan.orphans,
                ticks: tick_log,
                events: first_event..self.events.len(),
            });
        }

        let total: f64 = self.energy.iter().map(|e| e.dissipated).sum();
        let life = lifetime_from_death_times(&self.deaths, n);
        let deliveries: Vec<f64> = per_round.iter().filter_map(RoundRecord::delivery).collect();
        let metrics = MetricsRecord {
            protocol: self.cfg.protocol,
            n,
            seed: self.cfg.seed,
            per_round,
            lifetime_fnd: life.fnd,
            lifetime_hnd: life.hnd,
            lifetime_lnd: life.lnd,
            avg_dissipated_per_node: total / n as f64,
            total_dissipated_j: total,
            delivery_fraction: if deliveries.is_empty() {
                None
            } else {
                Some(deliveries.iter().sum::<f64>() / deliveries.len() as f64)
            },
            disconnected_count: initial_disconnected,
        };
        RunOutput {
            metrics,
            events: self.events,
            rounds,
            topology: self.topo,
            energy: self.energy,
        }
    }

    fn lmeec_control(&mut self) -> RoundPlan {
        let cfg = self.cfg;
        let radio = cfg.radio;
        let n = self.topo.len();

        if cfg.sim.reconfigure_every_round || self.round == 0 {
            let alive = self.alive_mask();
            self.layers = assign_layers_among(&self.topo, |id| alive[id.0]);
            let debits = hello_energy_accounting(&self.topo, &self.layers, &radio);
            for (i, d) in debits.iter().enumerate() {
                if self.layers.get(NodeId(i)).is_none() {
                    continue;
                }
                self.spend(NodeId(i), d.tx_joules, Action::HelloTx, None);
                self.spend(NodeId(i), d.rx_joules, Action::HelloRx, None);
            }
        }

        let layered = |e: &Self, i: usize| e.energy[i].alive && e.layers.get(NodeId(i)).is_some();
        let participants: Vec<bool> = (0..n).map(|i| layered(self, i)).collect();
        let disconnected = (0..n).filter(|&i| self.energy[i].alive && !participants[i]).count();
        let alive_degree = |e: &Self, id: NodeId| e.topo.neighbors(id).iter().filter(|j| e.energy[j.0].alive).count();

        let candidates: Vec<Candidate> = (0..n)
            .filter(|&i| participants[i])
            .map(|i| {
                let id = NodeId(i);
                Candidate {
                    state: NodeProtocolState {
                        node: id,
                        layer: self.layers.get(id).expect("participant is layered"),
                        degree: alive_degree(self, id),
                        num_ch: self.num_ch[i],
                        role: Role::Member,
                    },
                    e_res: self.energy[i].residual,
                }
            })
            .collect();
        let election = elect_cluster_heads(&candidates, &self.topo, cfg.sim.initial_energy, n, &cfg.lmeec)
            .expect("candidates are layered");
        for &h in &election.heads {
            self.num_ch[h.0] += 1;
            if self.full() {
                self.log(Actor::Node(h), Action::Elected, 0.0, None);
            }
        }

        let mut announcements = BTreeMap::new();
        let ctrl_tx = tx_cost(radio.control_bits, self.topo.comm_range, &radio);
        let ctrl_rx = rx_cost(radio.control_bits, &radio);
        for &h in &election.heads {
            if !self.alive(h) {
                continue;
            }
            let degree = alive_degree(self, h);
            let layer = self.layers.get(h).expect("head is layered");
            let Ok(weight) = compute_announcement_weight(self.energy[h.0].residual, degree, layer) else {
                continue; // singleton cluster, nobody to tell
            };
            if !self.spend(h, ctrl_tx, Action::AnnounceTx, None) {
                continue;
            }
            announcements.insert(h, Announcement { weight, layer });
            let hearers: Vec<NodeId> = self
                .topo
                .neighbors(h)
                .iter()
                .copied()
                .filter(|j| participants[j.0])
                .collect();
            for j in hearers {
                self.spend(j, ctrl_rx, Action::AnnounceRx, Some(Actor::Node(h)));
            }
        }

        let alive_participants: Vec<bool> = (0..n).map(|i| participants[i] && self.energy[i].alive).collect();
        let heads: BTreeSet<NodeId> = election.heads.iter().copied().filter(|&h| self.alive(h)).collect();
        let formation = form_clusters(&heads, &announcements, &self.topo, &alive_participants);
        let mut clusters = self.collect_joins(formation.clusters);

        let alive = self.alive_mask();
        let residual: Vec<f64> = self.energy.iter().map(|e| e.residual).collect();
        let mut next_hop = BTreeMap::new();
        for i in (0..n).filter(|&i| participants[i] && alive[i]) {
            let id = NodeId(i);
            next_hop.insert(
                id,
                select_relay(id, &heads, &self.topo, &self.layers, &residual, &alive),
            );
        }
        for c in &mut clusters {
            c.relay = next_hop.get(&c.head).copied().unwrap_or(Relay::BaseStation);
        }

        RoundPlan {
            clusters,
            direct: Vec::new(),
            next_hop,
            orphans: formation.orphans,
            ch_count: election.heads.len(),
            disconnected,
        }
    }

    fn leach_control(&mut self) -> RoundPlan {
        let cfg = self.cfg;
        let radio = cfg.radio;
        let n = self.topo.len();
        let alive = self.alive_mask();
        let heads = leach_elect(&alive, self.round, &cfg.leach, &mut self.leach, &mut self.rng);
        for &h in &heads {
            self.num_ch[h.0] += 1;
            if self.full() {
                self.log(Actor::Node(h), Action::Elected, 0.0, None);
            }
        }
        if heads.is_empty() {
            let direct: Vec<NodeId> = (0..n).map(NodeId).filter(|&i| alive[i.0]).collect();
            return RoundPlan {
                next_hop: direct.iter().map(|&i| (i, Relay::BaseStation)).collect(),
                clusters: Vec::new(),
                direct,
                orphans: Vec::new(),
                ch_count: 0,
                disconnected: 0,
            };
        }

        let ctrl_rx = rx_cost(radio.control_bits, &radio);
        let mut announced = BTreeSet::new();
        for &h in &heads {
            let reach = (0..n)
                .map(NodeId)
                .filter(|&j| j != h && self.alive(j))
                .map(|j| self.topo.distance(h, j))
                .fold(0.0, f64::max);
            if !self.spend(h, tx_cost(radio.control_bits, reach, &radio), Action::AnnounceTx, None) {
                continue;
            }
            announced.insert(h);
            for j in (0..n).map(NodeId).filter(|&j| j != h) {
                self.spend(j, ctrl_rx, Action::AnnounceRx, Some(Actor::Node(h)));
            }
        }

        let alive = self.alive_mask();
        let clusters = leach_form_clusters(&announced, &self.topo, &alive);
        let clusters = self.collect_joins(clusters);
        let mut next_hop = BTreeMap::new();
        for c in &clusters {
            next_hop.insert(c.head, Relay::BaseStation);
        }
        RoundPlan {
            clusters,
            direct: Vec::new(),
            next_hop,
            orphans: Vec::new(),
            ch_count: heads.len(),
            disconnected: 0,
        }
    }

    /// Members send a join message to their head; members whose join did not go
    /// out (they died sending it) are dropped from the cluster.
    fn collect_joins(&mut self, clusters: Vec<ClusterAssignment>) -> Vec<ClusterAssignment> {
        let radio = self.cfg.radio;
        let ctrl_rx = rx_cost(radio.control_bits, &radio);
        let mut out = Vec::with_capacity(clusters.len());
        for c in clusters {
            let mut joined = Vec::with_capacity(c.members.len());
            for &m in &c.members {
                let d = self.topo.distance(m, c.head);
                if self.spend(
                    m,
                    tx_cost(radio.control_bits, d, &radio),
                    Action::JoinTx,
                    Some(Actor::Node(c.head)),
                ) {
                    self.spend(c.head, ctrl_rx, Action::JoinRx, Some(Actor::Node(m)));
                    joined.push(m);
                }
            }
            let mut fresh = ClusterAssignment::new(c.head, joined);
            fresh.relay = c.relay;
            out.push(fresh);
        }
        out
    }

    fn data_tick(&mut self, plan: &RoundPlan) -> TickDelivery {
        let radio = self.cfg.radio;
        let bits = radio.data_bits;
        let full = self.full();
        let mut attempted = 0u64;
        for c in &plan.clusters {
            attempted += u64::from(self.alive(c.head));
            attempted += c.members.iter().filter(|&&m| self.alive(m)).count() as u64;
        }
        attempted += plan.direct.iter().filter(|&&d| self.alive(d)).count() as u64;

        let mut delivered = 0u64;
        let mut delivered_nodes = full.then(Vec::new);

        for c in &plan.clusters {
            let head = c.head;
            let mut carried = Vec::new();
            for m in c.slot_order() {
                if !self.alive(m) {
                    continue;
                }
                let d = self.topo.distance(m, head);
                if self.spend(m, tx_cost(bits, d, &radio), Action::DataTx, Some(Actor::Node(head)))
                    && self.spend(head, rx_cost(bits, &radio), Action::DataRx, Some(Actor::Node(m)))
                {
                    carried.push(m);
                }
            }
            if !self.alive(head) {
                continue;
            }
            carried.push(head);
            let agg = aggregate_cost(carried.len() as u64 * bits, &radio);
            if !self.spend(head, agg, Action::Aggregate, None) {
                continue;
            }
            if self.forward(head, c.relay, &plan.next_hop) {
                delivered += carried.len() as u64;
                if let Some(v) = delivered_nodes.as_mut() {
                    v.extend(carried);
                }
            }
        }

        for &d in &plan.direct {
            if !self.alive(d) {
                continue;
            }
            let dist = self.topo.distance_to_bs(d);
            if self.spend(d, tx_cost(bits, dist, &radio), Action::DataTx, Some(Actor::BaseStation)) {
                delivered += 1;
                if let Some(v) = delivered_nodes.as_mut() {
                    v.push(d);
                }
            }
        }

        if let Some(v) = delivered_nodes.as_mut() {
            v.sort_unstable();
        }
        TickDelivery {
            time: self.now,
            attempted,
            delivered,
            delivered_nodes,
        }
    }

    /// Carries one aggregate from `origin` along the relay chain; true if it reached the base station.
    fn forward(&mut self, origin: NodeId, first_hop: Relay, next_hop: &BTreeMap<NodeId, Relay>) -> bool {
        let radio = self.cfg.radio;
        let bits = radio.data_bits;
        let mut sender = origin;
        let mut hop = first_hop;
        for _ in 0..=self.topo.len() {
            let action = if sender == origin {
                Action::DataTx
            } else {
                Action::RelayTx
            };
            let dist = match hop.node() {
                Some(r) => self.topo.distance(sender, r),
                None => self.topo.distance_to_bs(sender),
            };
            if !self.spend(sender, tx_cost(bits, dist, &radio), action, Some(hop.into())) {
                return false;
            }
            let Some(r) = hop.node() else {
                return true;
            };
            if !self.spend(r, rx_cost(bits, &radio), Action::RelayRx, Some(Actor::Node(sender))) {
                return false;
            }
            sender = r;
            hop = next_hop.get(&r).copied().unwrap_or(Relay::BaseStation);
        }
        log::error!("relay chain from {origin} exceeded the node count; dropping packet");
        false
    }
}
