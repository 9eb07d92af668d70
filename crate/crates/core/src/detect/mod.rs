//! The detection pipeline run by a trusted auditor holding every node's
//! records and keys.
//!
//! Per node and per tumbling window:
//!
//! 1. audits (order, signatures, neighbor cross-check); any violation marks
//!    the node an [`Classification::ErForger`];
//! 2. the messages-per-encounter screen picks suspicious peers and their
//!    records are dropped from the window;
//! 3. relayed and self-forwarding ratios are recomputed on what is left and
//!    tested against the thresholds. A node that only passes because of the
//!    removed records is a [`Classification::Colluder`], and so are the
//!    suspicious peers it was leaning on;
//! 4. reputation moves down on a flagged window and up on a clean one.
//!
//! A threshold breach or audit violation blacklists the node at once; so
//! does reputation falling under the cut-off. Blacklisting is permanent and
//! a verdict carries the most severe classification seen so far.

pub mod audit;
pub mod collusion;
pub mod metrics;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::ConfigError;
use crate::model::{EncounterRecord, NodeId, SimTime};
use crate::sign::{verify, Keyring};

use audit::{audit_sequences, audit_signatures, cross_check_neighbors, NeighborMismatch};
use collusion::{remove_peers, suspicious_peers, FxsThreshold};
use metrics::{classify_individual, compute_counters, IndividualClass};

/// Which ratios the individual-attacker test looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndividualRule {
    #[default]
    Either,
    RelayedRatioOnly,
    SelfForwardingOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionConfig {
    pub rr_threshold: f64,
    pub sr_threshold: f64,
    pub fxs_threshold: FxsThreshold,
    /// Width of the tumbling filter window.
    pub window: SimTime,
    pub reputation_down: f64,
    pub reputation_up: f64,
    pub blacklist_reputation: f64,
    pub rule: IndividualRule,
    /// Turns the messages-per-encounter screen on. Off means only the audits
    /// and the raw ratios are used.
    pub collusion_phase: bool,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            rr_threshold: 0.5375,
            sr_threshold: 0.63,
            fxs_threshold: FxsThreshold::default(),
            window: SimTime::from_secs(3600),
            reputation_down: 0.1,
            reputation_up: 0.05,
            blacklist_reputation: 0.5,
            rule: IndividualRule::Either,
            collusion_phase: true,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.rr_threshold) {
            return Err(ConfigError::new("rr_threshold", "must be in (0, 1]"));
        }
        if !unit(self.sr_threshold) {
            return Err(ConfigError::new("sr_threshold", "must be in (0, 1]"));
        }
        match self.fxs_threshold {
            FxsThreshold::Fixed(t) if t.is_nan() || t <= 0.0 => {
                return Err(ConfigError::new("fxs_threshold", "must be positive"));
            }
            FxsThreshold::Adaptive { sigmas, floor } if !(sigmas >= 0.0 && floor > 0.0) => {
                return Err(ConfigError::new("fxs_threshold", "adaptive rule needs sigmas >= 0 and floor > 0"));
            }
            _ => {}
        }
        if self.window.as_millis() == 0 {
            return Err(ConfigError::new("window", "must be positive"));
        }
        if !(self.reputation_down > 0.0 && self.reputation_up >= 0.0) {
            return Err(ConfigError::new("reputation_step", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.blacklist_reputation) {
            return Err(ConfigError::new("blacklist_reputation", "must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Classification {
    Benign,
    IndividualAttacker,
    Colluder,
    ErForger,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Benign => "benign",
            Classification::IndividualAttacker => "individual_attacker",
            Classification::Colluder => "colluder",
            Classification::ErForger => "er_forger",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "benign" => Classification::Benign,
            "individual_attacker" => Classification::IndividualAttacker,
            "colluder" => Classification::Colluder,
            "er_forger" => Classification::ErForger,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub node: NodeId,
    pub window_id: u64,
    pub classification: Classification,
    /// Ratios after the collusion screen.
    pub rr: f64,
    pub sr: f64,
    pub reputation: f64,
    pub blacklisted: bool,
}

/// Intermediate values of one node-window, kept for analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDiagnostics {
    pub node: NodeId,
    pub window_id: u64,
    pub raw_rr: f64,
    pub raw_sr: f64,
    pub suspicious: Vec<NodeId>,
    pub audit_violations: usize,
    /// Classification of this window alone.
    pub window_class: Classification,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionReport {
    /// Sorted by node, then window.
    pub verdicts: Vec<Verdict>,
    pub diagnostics: Vec<WindowDiagnostics>,
    pub blacklist: BTreeSet<NodeId>,
}

impl DetectionReport {
    /// The last-window verdict of every node.
    pub fn final_verdicts(&self) -> Vec<&Verdict> {
        let mut last: BTreeMap<NodeId, &Verdict> = BTreeMap::new();
        for v in &self.verdicts {
            last.insert(v.node, v);
        }
        last.into_values().collect()
    }

    pub fn diagnostics_for(&self, node: NodeId) -> impl Iterator<Item = &WindowDiagnostics> {
        self.diagnostics.iter().filter(move |d| d.node == node)
    }
}

/// Audited view of a trace. Audits do not depend on thresholds, so one
/// detector can be run under many configurations.
#[derive(Debug, Clone)]
pub struct Detector {
    histories: BTreeMap<NodeId, Vec<EncounterRecord>>,
    nodes: BTreeSet<NodeId>,
    /// Timestamps of audit violations blamed on each node.
    violations: BTreeMap<NodeId, Vec<SimTime>>,
    last_timestamp: SimTime,
}

impl Detector {
    pub fn new(records: Vec<EncounterRecord>, keyring: &Keyring) -> Self {
        let mut nodes: BTreeSet<NodeId> = keyring.nodes().collect();
        let mut histories: BTreeMap<NodeId, Vec<EncounterRecord>> = BTreeMap::new();
        let mut last_timestamp = SimTime::ZERO;
        for er in records {
            nodes.insert(er.local_node);
            nodes.insert(er.peer_node);
            last_timestamp = last_timestamp.max(er.timestamp);
            histories.entry(er.local_node).or_default().push(er);
        }

        let mut violations: BTreeMap<NodeId, Vec<SimTime>> = BTreeMap::new();
        let mut blame = |n: NodeId, t: SimTime| violations.entry(n).or_default().push(t);

        for (&node, history) in &histories {
            for v in audit_sequences(history) {
                blame(node, history[v.index].timestamp);
            }
            for v in audit_signatures(history, keyring) {
                blame(node, history[v.index].timestamp);
            }
        }

        let empty: Vec<EncounterRecord> = Vec::new();
        let mut pairs: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
        for (&node, history) in &histories {
            for er in history {
                let (a, b) = if node < er.peer_node { (node, er.peer_node) } else { (er.peer_node, node) };
                pairs.insert((a, b));
            }
        }
        for (a, b) in pairs {
            let ha = histories.get(&a).unwrap_or(&empty);
            let hb = histories.get(&b).unwrap_or(&empty);
            for m in cross_check_neighbors(a, ha, b, hb) {
                match m {
                    NeighborMismatch::OneSided { claimant, absent, record, timestamp } => {
                        let er = if claimant == a { &ha[record] } else { &hb[record] };
                        // a valid co-signature means the absent side agreed
                        // to the encounter and later dropped its own record
                        let countersigned = keyring.get(absent).is_some_and(|k| verify(k, er, &er.sig_peer));
                        blame(if countersigned { absent } else { claimant }, timestamp);
                    }
                    NeighborMismatch::Divergent { timestamp, .. } => {
                        blame(a, timestamp);
                        blame(b, timestamp);
                    }
                }
            }
        }

        Self { histories, nodes, violations, last_timestamp }
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn history(&self, node: NodeId) -> &[EncounterRecord] {
        self.histories.get(&node).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn violation_count(&self, node: NodeId) -> usize {
        self.violations.get(&node).map_or(0, Vec::len)
    }

    pub fn run(&self, cfg: &DetectionConfig) -> DetectionReport {
        let width = cfg.window.as_millis().max(1);
        let n_windows = (self.last_timestamp.as_millis() / width + 1) as usize;
        let window_of = |t: SimTime| (t.as_millis() / width) as usize;

        struct NodeState {
            reputation: f64,
            worst: Classification,
            blacklisted: bool,
        }

        let nodes: Vec<NodeId> = self.nodes.iter().copied().collect();
        let mut state: Vec<NodeState> = nodes
            .iter()
            .map(|_| NodeState { reputation: 1.0, worst: Classification::Benign, blacklisted: false })
            .collect();

        // per node: window -> record indices, and window -> violation count
        let buckets: Vec<Vec<Vec<usize>>> = nodes
            .iter()
            .map(|n| {
                let mut b = vec![Vec::new(); n_windows];
                for (i, er) in self.history(*n).iter().enumerate() {
                    b[window_of(er.timestamp)].push(i);
                }
                b
            })
            .collect();
        let audit_hits: Vec<Vec<usize>> = nodes
            .iter()
            .map(|n| {
                let mut hits = vec![0usize; n_windows];
                for t in self.violations.get(n).into_iter().flatten() {
                    hits[window_of(*t)] += 1;
                }
                hits
            })
            .collect();
        let index_of: BTreeMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();

        let mut verdicts = Vec::with_capacity(nodes.len() * n_windows);
        let mut diagnostics = Vec::with_capacity(nodes.len() * n_windows);

        for w in 0..n_windows {
            let mut rows: Vec<(Classification, f64, f64, WindowDiagnostics)> = Vec::with_capacity(nodes.len());
            let mut partner_evidence: BTreeSet<NodeId> = BTreeSet::new();

            for (k, &node) in nodes.iter().enumerate() {
                let history = self.history(node);
                let slice: Vec<&EncounterRecord> = buckets[k][w].iter().map(|&i| &history[i]).collect();

                let suspicious = if cfg.collusion_phase {
                    suspicious_peers(slice.iter().copied(), &cfg.fxs_threshold)
                } else {
                    BTreeSet::new()
                };
                let kept = remove_peers(slice.iter().copied(), &suspicious);

                let raw = compute_counters(slice.iter().copied(), node);
                let filtered = compute_counters(kept.iter().copied(), node);
                let (raw_rr, raw_sr) = (raw.relayed_ratio(), raw.self_forwarding_ratio());
                let (rr, sr) = (filtered.relayed_ratio(), filtered.self_forwarding_ratio());

                let class = if audit_hits[k][w] > 0 {
                    Classification::ErForger
                } else if classify_individual(rr, sr, cfg) == IndividualClass::IndividualAttacker {
                    let masked =
                        !suspicious.is_empty() && classify_individual(raw_rr, raw_sr, cfg) == IndividualClass::Benign;
                    if masked {
                        partner_evidence.extend(suspicious.iter().copied());
                        Classification::Colluder
                    } else {
                        Classification::IndividualAttacker
                    }
                } else {
                    Classification::Benign
                };

                rows.push((
                    class,
                    rr,
                    sr,
                    WindowDiagnostics {
                        node,
                        window_id: w as u64,
                        raw_rr,
                        raw_sr,
                        suspicious: suspicious.into_iter().collect(),
                        audit_violations: audit_hits[k][w],
                        window_class: class,
                    },
                ));
            }

            for p in partner_evidence {
                if let Some(&k) = index_of.get(&p) {
                    let row = &mut rows[k];
                    if row.0 < Classification::Colluder {
                        row.0 = Classification::Colluder;
                        row.3.window_class = Classification::Colluder;
                    }
                }
            }

            for (k, (class, rr, sr, diag)) in rows.into_iter().enumerate() {
                let st = &mut state[k];
                let flagged = class != Classification::Benign;
                st.reputation = if flagged {
                    (st.reputation - cfg.reputation_down).max(0.0)
                } else {
                    (st.reputation + cfg.reputation_up).min(1.0)
                };
                st.worst = st.worst.max(class);
                if flagged || st.reputation < cfg.blacklist_reputation {
                    st.blacklisted = true;
                }
                verdicts.push(Verdict {
                    node: nodes[k],
                    window_id: w as u64,
                    classification: st.worst,
                    rr,
                    sr,
                    reputation: st.reputation,
                    blacklisted: st.blacklisted,
                });
                diagnostics.push(diag);
            }
        }

        verdicts.sort_by_key(|v| (v.node, v.window_id));
        diagnostics.sort_by_key(|d| (d.node, d.window_id));
        let blacklist = state.iter().zip(&nodes).filter(|(s, _)| s.blacklisted).map(|(_, n)| *n).collect();
        DetectionReport { verdicts, diagnostics, blacklist }
    }
}

/// One-shot pipeline over a record set.
pub fn detect(records: Vec<EncounterRecord>, keyring: &Keyring, cfg: &DetectionConfig) -> DetectionReport {
    Detector::new(records, keyring).run(cfg)
}
