//! Seeded discrete-event simulation of a fully meshed set of servers and
//! VMs exchanging messages over pairwise contacts.
//!
//! Contacts between each pair follow a Poisson process. A node holds every
//! message it carries until a contact and then decides per [`Routing`]
//! whether to hand it over. Each contact leaves one co-signed
//! [`EncounterRecord`] on each side.

pub mod behavior;
pub mod forge;
pub mod trace;

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::ConfigError;
use crate::model::{Direction, EncounterRecord, EntryKind, Message, MessageEntry, MessageId, NodeId, SimTime};
use crate::sign::{Keyring, NodeKey};

pub use behavior::{decide_forward, Behavior, DropMode, ForwardDecision};
pub use forge::{forge_collusion_records, mirror_for_partner, ForgeRequest, Forgery};
pub use trace::{DropReason, GroundTruth, TraceEvent, TraceLog, TraceSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GenerationMode {
    /// Every node draws its own inter-arrival times.
    #[default]
    PerNode,
    /// One network-wide stream; each message picks a random source.
    PerNetwork,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Routing {
    /// Hand a message to the destination, to a peer closer to it on a static
    /// random line, or to any other peer on a fair coin flip. Messages take
    /// many hops.
    #[default]
    Gradient,
    /// The source hands its copies to the first peers it meets; relays only
    /// hand to the destination. Messages take at most two hops.
    TwoHop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackerKind {
    Blackhole,
    Greyhole,
    Colluder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackerConfig {
    pub kind: AttackerKind,
    pub drop_prob: Option<f64>,
    pub drop_period_t: Option<SimTime>,
    pub drop_every_n: Option<u64>,
    pub colluder_partners: Vec<NodeId>,
    /// Colluders forge only when at least one target is set; a colluder
    /// without targets just co-signs its partners' fakes.
    pub target_rr: Option<f64>,
    pub target_sr: Option<f64>,
    pub max_entries_per_fake: Option<usize>,
}

impl AttackerConfig {
    fn base(kind: AttackerKind) -> Self {
        Self {
            kind,
            drop_prob: None,
            drop_period_t: None,
            drop_every_n: None,
            colluder_partners: Vec::new(),
            target_rr: None,
            target_sr: None,
            max_entries_per_fake: None,
        }
    }

    pub fn blackhole() -> Self {
        Self::base(AttackerKind::Blackhole)
    }

    pub fn greyhole(drop_prob: f64) -> Self {
        Self { drop_prob: Some(drop_prob), ..Self::base(AttackerKind::Greyhole) }
    }

    pub fn greyhole_periodic(period: SimTime) -> Self {
        Self { drop_period_t: Some(period), ..Self::base(AttackerKind::Greyhole) }
    }

    pub fn greyhole_every(n: u64) -> Self {
        Self { drop_every_n: Some(n), ..Self::base(AttackerKind::Greyhole) }
    }

    /// A dropping colluder that forges towards the given targets.
    pub fn forger(drop_prob: f64, partners: Vec<NodeId>, target_rr: f64, target_sr: f64) -> Self {
        Self {
            drop_prob: Some(drop_prob),
            colluder_partners: partners,
            target_rr: Some(target_rr),
            target_sr: Some(target_sr),
            ..Self::base(AttackerKind::Colluder)
        }
    }

    /// A colluder that drops and co-signs but does not forge itself.
    pub fn accomplice(drop_prob: f64, partners: Vec<NodeId>) -> Self {
        Self { drop_prob: Some(drop_prob), colluder_partners: partners, ..Self::base(AttackerKind::Colluder) }
    }

    pub fn forges(&self) -> bool {
        self.kind == AttackerKind::Colluder && (self.target_rr.is_some() || self.target_sr.is_some())
    }

    fn drop_mode(&self) -> Option<DropMode> {
        if let Some(p) = self.drop_prob {
            Some(DropMode::Probability(p))
        } else if let Some(period) = self.drop_period_t {
            Some(DropMode::Periodic { period })
        } else {
            self.drop_every_n.map(DropMode::EveryNth)
        }
    }

    pub fn behavior(&self) -> Behavior {
        match self.kind {
            AttackerKind::Blackhole => Behavior::Blackhole,
            AttackerKind::Greyhole => Behavior::Greyhole(self.drop_mode().expect("validated greyhole")),
            AttackerKind::Colluder => Behavior::Colluder(self.drop_mode()),
        }
    }

    pub fn ground_truth(&self) -> GroundTruth {
        match self.kind {
            AttackerKind::Blackhole => GroundTruth::Blackhole,
            AttackerKind::Greyhole => GroundTruth::Greyhole,
            AttackerKind::Colluder => GroundTruth::Colluder,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let modes = [self.drop_prob.is_some(), self.drop_period_t.is_some(), self.drop_every_n.is_some()]
            .iter()
            .filter(|x| **x)
            .count();
        match self.kind {
            AttackerKind::Greyhole if modes != 1 => {
                return Err(ConfigError::new(
                    "attackers.drop_prob",
                    "a greyhole needs exactly one of drop_prob, drop_period_t, drop_every_n",
                ));
            }
            AttackerKind::Colluder if modes > 1 => {
                return Err(ConfigError::new("attackers.drop_prob", "at most one drop mode per colluder"));
            }
            AttackerKind::Colluder if self.colluder_partners.is_empty() => {
                return Err(ConfigError::new("attackers.colluder_partners", "colluders need at least one partner"));
            }
            _ => {}
        }
        if let Some(p) = self.drop_prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::new("attackers.drop_prob", "must be in [0, 1]"));
            }
        }
        if self.drop_period_t.is_some_and(|t| t.as_millis() == 0) {
            return Err(ConfigError::new("attackers.drop_period_t", "must be positive"));
        }
        if self.drop_every_n == Some(0) {
            return Err(ConfigError::new("attackers.drop_every_n", "must be at least 1"));
        }
        for (field, t) in [("attackers.target_rr", self.target_rr), ("attackers.target_sr", self.target_sr)] {
            if let Some(t) = t {
                if !(t > 0.0 && t <= 1.0) {
                    return Err(ConfigError::new(field, "must be in (0, 1]"));
                }
            }
        }
        if self.max_entries_per_fake == Some(0) {
            return Err(ConfigError::new("attackers.max_entries_per_fake", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackerGroup {
    pub nodes: Vec<NodeId>,
    pub config: AttackerConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_servers: u32,
    pub n_vms: u32,
    pub duration: SimTime,
    /// Inclusive range of message inter-arrival times.
    pub msg_interval: (SimTime, SimTime),
    pub generation: GenerationMode,
    pub routing: Routing,
    /// Mean contacts per node pair per hour.
    pub encounter_rate: f64,
    pub routing_copies: u32,
    pub message_ttl: SimTime,
    /// Colluders forge once at the end of every window of this width.
    pub forge_window: SimTime,
    pub seed: u64,
    pub attacker_mix: Vec<AttackerGroup>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_servers: 5,
            n_vms: 50,
            duration: SimTime::from_secs(36_000),
            msg_interval: (SimTime::from_secs(20), SimTime::from_secs(30)),
            generation: GenerationMode::PerNode,
            routing: Routing::Gradient,
            encounter_rate: 6.0,
            routing_copies: 1,
            message_ttl: SimTime::from_secs(3600),
            forge_window: SimTime::from_secs(3600),
            seed: 0,
            attacker_mix: Vec::new(),
        }
    }
}

impl SimConfig {
    pub fn node_count(&self) -> usize {
        self.n_servers as usize + self.n_vms as usize
    }

    /// Node with the given global index, if it exists in this topology.
    pub fn node(&self, index: u32) -> Option<NodeId> {
        if index < self.n_servers {
            Some(NodeId::server(index))
        } else if (index as usize) < self.node_count() {
            Some(NodeId::vm(index))
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_servers == 0 {
            return Err(ConfigError::new("topology.n_servers", "must be at least 1"));
        }
        if self.n_vms == 0 {
            return Err(ConfigError::new("topology.n_vms", "must be at least 1"));
        }
        if self.duration.as_millis() == 0 {
            return Err(ConfigError::new("traffic.duration", "must be positive"));
        }
        let (lo, hi) = self.msg_interval;
        if lo.as_millis() == 0 || lo > hi {
            return Err(ConfigError::new("traffic.msg_interval", "needs 0 < low <= high"));
        }
        if !(self.encounter_rate > 0.0 && self.encounter_rate.is_finite()) {
            return Err(ConfigError::new("traffic.encounter_rate", "must be positive"));
        }
        if self.routing_copies == 0 {
            return Err(ConfigError::new("traffic.routing_copies", "must be at least 1"));
        }
        if self.message_ttl.as_millis() == 0 {
            return Err(ConfigError::new("traffic.message_ttl", "must be positive"));
        }
        if self.forge_window.as_millis() == 0 {
            return Err(ConfigError::new("attackers.forge_window", "must be positive"));
        }
        let mut seen = BTreeSet::new();
        for group in &self.attacker_mix {
            group.config.validate()?;
            for n in group.nodes.iter().chain(&group.config.colluder_partners) {
                if self.node(n.index) != Some(*n) {
                    return Err(ConfigError::new("attackers.nodes", format!("{n} is not part of the topology")));
                }
            }
            for n in &group.nodes {
                if !seen.insert(*n) {
                    return Err(ConfigError::new("attackers.nodes", format!("{n} appears in more than one group")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub nodes: Vec<NodeId>,
    /// Undirected links, each listed once with the lower id first.
    pub links: Vec<(NodeId, NodeId)>,
}

/// Full mesh over `n_servers` servers followed by `n_vms` VMs.
pub fn build_topology(config: &SimConfig) -> Result<Topology, ConfigError> {
    if config.n_servers == 0 {
        return Err(ConfigError::new("topology.n_servers", "must be at least 1"));
    }
    if config.n_vms == 0 {
        return Err(ConfigError::new("topology.n_vms", "must be at least 1"));
    }
    let nodes: Vec<NodeId> = (0..config.node_count() as u32).map(|i| config.node(i).unwrap()).collect();
    let mut links = Vec::with_capacity(nodes.len() * (nodes.len() - 1) / 2);
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[i + 1..] {
            links.push((*a, *b));
        }
    }
    Ok(Topology { nodes, links })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Generate(Option<usize>),
    Contact(usize),
    Expire(usize),
    Forge { window_start: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    InFlight,
    Delivered,
    Dropped,
}

struct MessageState {
    msg: Message,
    holders: Vec<usize>,
    copies: u32,
    status: Status,
}

struct Forger {
    node: usize,
    partners: Vec<NodeId>,
    target_rr: f64,
    target_sr: f64,
    cap: Option<usize>,
}

struct Engine<'c> {
    cfg: &'c SimConfig,
    rng: ChaCha8Rng,
    nodes: Vec<NodeId>,
    links: Vec<(usize, usize)>,
    behavior: Vec<Behavior>,
    position: Vec<f64>,
    seq: Vec<u64>,
    relay_count: Vec<u64>,
    buffers: Vec<BTreeMap<usize, u32>>,
    history: Vec<Vec<usize>>,
    messages: Vec<MessageState>,
    queue: BinaryHeap<Reverse<(u64, u64, Event)>>,
    order: u64,
    forgers: Vec<Forger>,
    log: TraceLog,
}

/// Runs the configured scenario to completion.
pub fn run(config: &SimConfig) -> Result<TraceLog, ConfigError> {
    config.validate()?;
    let topo = build_topology(config)?;
    let mut engine = Engine::new(config, &topo);
    engine.schedule_initial();
    engine.run_loop();
    Ok(engine.log)
}

impl<'c> Engine<'c> {
    fn new(cfg: &'c SimConfig, topo: &Topology) -> Self {
        let n = topo.nodes.len();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

        let mut keyring = Keyring::new();
        for id in &topo.nodes {
            let mut key = [0u8; 32];
            rng.fill_bytes(&mut key);
            keyring.insert(*id, NodeKey(key));
        }
        let position = (0..n).map(|_| rng.random::<f64>()).collect();

        let mut behavior = vec![Behavior::Honest; n];
        let mut labels: BTreeMap<NodeId, GroundTruth> =
            topo.nodes.iter().map(|id| (*id, GroundTruth::Honest)).collect();
        let mut forgers = Vec::new();
        for group in &cfg.attacker_mix {
            for id in &group.nodes {
                let idx = id.index as usize;
                behavior[idx] = group.config.behavior();
                labels.insert(*id, group.config.ground_truth());
                if group.config.forges() {
                    forgers.push(Forger {
                        node: idx,
                        partners: group.config.colluder_partners.clone(),
                        target_rr: group.config.target_rr.unwrap_or(0.0).max(f64::MIN_POSITIVE),
                        target_sr: group.config.target_sr.unwrap_or(1.0),
                        cap: group.config.max_entries_per_fake,
                    });
                }
            }
        }
        forgers.sort_by_key(|f| topo.nodes[f.node]);

        let links = topo.links.iter().map(|(a, b)| (a.index as usize, b.index as usize)).collect();

        Self {
            cfg,
            rng,
            nodes: topo.nodes.clone(),
            links,
            behavior,
            position,
            seq: vec![0; n],
            relay_count: vec![0; n],
            buffers: vec![BTreeMap::new(); n],
            history: vec![Vec::new(); n],
            messages: Vec::new(),
            queue: BinaryHeap::new(),
            order: 0,
            forgers,
            log: TraceLog { labels, keyring, ..TraceLog::default() },
        }
    }

    fn push(&mut self, at: u64, ev: Event) {
        self.order += 1;
        self.queue.push(Reverse((at, self.order, ev)));
    }

    fn next_interval(&mut self) -> u64 {
        let (lo, hi) = self.cfg.msg_interval;
        self.rng.random_range(lo.as_millis()..=hi.as_millis())
    }

    fn next_contact_gap(&mut self) -> u64 {
        let mean_ms = 3_600_000.0 / self.cfg.encounter_rate;
        let u: f64 = self.rng.random();
        let gap = -libm::log(1.0 - u) * mean_ms;
        (libm::round(gap) as u64).max(1)
    }

    fn schedule_initial(&mut self) {
        match self.cfg.generation {
            GenerationMode::PerNode => {
                for i in 0..self.nodes.len() {
                    let t = self.next_interval();
                    self.push(t, Event::Generate(Some(i)));
                }
            }
            GenerationMode::PerNetwork => {
                let t = self.next_interval();
                self.push(t, Event::Generate(None));
            }
        }
        for p in 0..self.links.len() {
            let t = self.next_contact_gap();
            self.push(t, Event::Contact(p));
        }
        if !self.forgers.is_empty() {
            let w = self.cfg.forge_window.as_millis();
            let end = self.cfg.duration.as_millis();
            let mut start = 0;
            while start < end {
                let at = (start + w).min(end) - 1;
                self.push(at, Event::Forge { window_start: start });
                start += w;
            }
        }
    }

    fn run_loop(&mut self) {
        let end = self.cfg.duration.as_millis();
        while let Some(Reverse((at, _, ev))) = self.queue.pop() {
            if at >= end {
                break;
            }
            let now = SimTime::from_millis(at);
            match ev {
                Event::Generate(source) => self.generate(source, now),
                Event::Contact(p) => {
                    self.contact(p, now);
                    let gap = self.next_contact_gap();
                    self.push(at + gap, Event::Contact(p));
                }
                Event::Expire(m) => self.expire(m, now),
                Event::Forge { window_start } => self.forge(SimTime::from_millis(window_start), now),
            }
        }
    }

    fn generate(&mut self, source: Option<usize>, now: SimTime) {
        let n = self.nodes.len();
        let src = match source {
            Some(s) => s,
            None => self.rng.random_range(0..n),
        };
        let mut dst = self.rng.random_range(0..n - 1);
        if dst >= src {
            dst += 1;
        }
        let id = self.messages.len();
        let msg = Message {
            id: MessageId(id as u64),
            source: self.nodes[src],
            destination: self.nodes[dst],
            created_at: now,
            ttl: self.cfg.message_ttl,
        };
        self.messages.push(MessageState {
            msg,
            holders: vec![src],
            copies: self.cfg.routing_copies,
            status: Status::InFlight,
        });
        self.buffers[src].insert(id, self.cfg.routing_copies);
        self.log.events.push(TraceEvent::MessageCreated { message: msg });
        self.push(msg.expires_at().as_millis(), Event::Expire(id));

        let gap = self.next_interval();
        self.push(now.as_millis() + gap, Event::Generate(source));
    }

    fn distance(&self, node: usize, dest: NodeId) -> f64 {
        libm::fabs(self.position[node] - self.position[dest.index as usize])
    }

    fn contact(&mut self, pair: usize, now: SimTime) {
        let (a, b) = self.links[pair];
        let snap_a: Vec<usize> = self.buffers[a].keys().copied().collect();
        let snap_b: Vec<usize> = self.buffers[b].keys().copied().collect();

        let event_index = self.log.events.len();
        self.log.events.push(TraceEvent::Encounter { at: now, a: self.nodes[a], b: self.nodes[b], records: [0, 0] });

        let mut entries_a = Vec::new();
        let mut entries_b = Vec::new();
        self.transfer(a, b, &snap_a, now, &mut entries_a, &mut entries_b);
        self.transfer(b, a, &snap_b, now, &mut entries_b, &mut entries_a);

        let ra = self.record(a, b, now, entries_a, false);
        let rb = self.record(b, a, now, entries_b, false);
        if let TraceEvent::Encounter { records, .. } = &mut self.log.events[event_index] {
            *records = [ra, rb];
        }
    }

    fn record(&mut self, local: usize, peer: usize, now: SimTime, entries: Vec<MessageEntry>, forged: bool) -> usize {
        self.seq[local] += 1;
        let mut er = EncounterRecord::unsigned(self.nodes[local], self.nodes[peer], now, self.seq[local], entries);
        er.ground_truth_forged = forged;
        self.log.keyring.co_sign(&mut er);
        self.push_record(er)
    }

    fn push_record(&mut self, er: EncounterRecord) -> usize {
        let idx = self.log.ers.len();
        self.history[er.local_node.index as usize].push(idx);
        self.log.ers.push(er);
        idx
    }

    fn transfer(
        &mut self,
        from: usize,
        to: usize,
        snapshot: &[usize],
        now: SimTime,
        out_from: &mut Vec<MessageEntry>,
        out_to: &mut Vec<MessageEntry>,
    ) {
        for &m in snapshot {
            if self.messages[m].status != Status::InFlight || self.buffers[to].contains_key(&m) {
                continue;
            }
            let Some(&copies) = self.buffers[from].get(&m) else {
                continue;
            };
            let msg = self.messages[m].msg;
            if msg.source == self.nodes[to] {
                continue;
            }
            let kind = if msg.source == self.nodes[from] { EntryKind::Generated } else { EntryKind::Relayed };
            let entry =
                MessageEntry { message_id: msg.id, destination: msg.destination, direction: Direction::Sent, kind };

            if msg.destination == self.nodes[to] {
                out_from.push(entry);
                out_to.push(entry.mirrored());
                self.deliver(m, to, now);
                continue;
            }

            let give = match self.cfg.routing {
                Routing::Gradient => {
                    let closer = self.distance(to, msg.destination) < self.distance(from, msg.destination);
                    if !closer && !self.rng.random_bool(0.5) {
                        continue;
                    }
                    if copies > 1 {
                        copies / 2
                    } else {
                        1
                    }
                }
                Routing::TwoHop if kind == EntryKind::Generated => 1,
                Routing::TwoHop => continue,
            };
            out_from.push(entry);
            out_to.push(entry.mirrored());

            if copies == give {
                self.buffers[from].remove(&m);
                self.messages[m].holders.retain(|h| *h != from);
            } else {
                self.buffers[from].insert(m, copies - give);
            }

            self.relay_count[to] += 1;
            match decide_forward(&self.behavior[to], self.relay_count[to], now, &mut self.rng) {
                ForwardDecision::Forward => {
                    self.buffers[to].insert(m, give);
                    self.messages[m].holders.push(to);
                }
                ForwardDecision::Drop => {
                    let st = &mut self.messages[m];
                    st.copies -= give;
                    if st.copies == 0 {
                        st.status = Status::Dropped;
                    }
                    self.log.events.push(TraceEvent::MessageDropped {
                        at: now,
                        message: msg.id,
                        node: self.nodes[to],
                        reason: DropReason::Malicious,
                    });
                }
            }
        }
    }

    fn deliver(&mut self, m: usize, at_node: usize, now: SimTime) {
        let holders = core::mem::take(&mut self.messages[m].holders);
        for h in holders {
            self.buffers[h].remove(&m);
        }
        let st = &mut self.messages[m];
        st.status = Status::Delivered;
        st.copies = 0;
        self.log.events.push(TraceEvent::MessageDelivered { at: now, message: st.msg.id, node: self.nodes[at_node] });
    }

    fn expire(&mut self, m: usize, now: SimTime) {
        if self.messages[m].status != Status::InFlight {
            return;
        }
        let holders = core::mem::take(&mut self.messages[m].holders);
        let id = self.messages[m].msg.id;
        for h in holders {
            self.buffers[h].remove(&m);
            self.log.events.push(TraceEvent::MessageDropped {
                at: now,
                message: id,
                node: self.nodes[h],
                reason: DropReason::Expired,
            });
        }
        let st = &mut self.messages[m];
        st.status = Status::Dropped;
        st.copies = 0;
    }

    fn forge(&mut self, window_start: SimTime, now: SimTime) {
        for k in 0..self.forgers.len() {
            let node = self.forgers[k].node;
            let forgery = {
                let f = &self.forgers[k];
                let ers = &self.log.ers;
                let window: Vec<&EncounterRecord> = self.history[node]
                    .iter()
                    .map(|&i| &ers[i])
                    .filter(|er| er.timestamp >= window_start && er.timestamp <= now)
                    .collect();
                let req = ForgeRequest {
                    attacker: self.nodes[node],
                    partners: &f.partners,
                    history: &window,
                    target_rr: f.target_rr,
                    target_sr: f.target_sr,
                    at: now,
                    next_seq: self.seq[node] + 1,
                    max_entries_per_record: f.cap,
                };
                forge_collusion_records(&req, &self.log.keyring)
            };
            if forgery.unreachable {
                self.log.unreachable_forgeries += 1;
            }
            let Some(partner) = forgery.partner else { continue };
            let p = partner.index as usize;
            for fake in forgery.records {
                self.seq[node] = fake.local_seq;
                self.seq[p] += 1;
                let mirror = mirror_for_partner(&fake, self.seq[p], &self.log.keyring);
                let event_index = self.log.events.len();
                self.log.events.push(TraceEvent::Encounter {
                    at: now,
                    a: self.nodes[node],
                    b: partner,
                    records: [0, 0],
                });
                let ra = self.push_record(fake);
                let rb = self.push_record(mirror);
                if let TraceEvent::Encounter { records, .. } = &mut self.log.events[event_index] {
                    *records = [ra, rb];
                }
            }
        }
    }
}
