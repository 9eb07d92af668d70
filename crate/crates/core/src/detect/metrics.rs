//! Forwarding metrics: relayed ratio, self-forwarding ratio and the
//! per-pair messages-per-encounter ratio.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::model::{Direction, EncounterRecord, EntryKind, NodeId};

use super::{DetectionConfig, IndividualRule};

/// Per-node tallies that feed the two forwarding ratios.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BehaviorCounters {
    /// Relayed messages forwarded onward.
    pub rfm: u64,
    /// Messages received as relay (the node was not the destination).
    pub rmr: u64,
    /// Own messages generated and sent.
    pub gsm: u64,
    /// All messages sent.
    pub sm: u64,
}

impl BehaviorCounters {
    pub fn relayed_ratio(&self) -> f64 {
        relayed_ratio(self)
    }

    pub fn self_forwarding_ratio(&self) -> f64 {
        self_forwarding_ratio(self)
    }
}

impl core::ops::AddAssign for BehaviorCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.rfm += rhs.rfm;
        self.rmr += rhs.rmr;
        self.gsm += rhs.gsm;
        self.sm += rhs.sm;
    }
}

/// Tallies the counters of `node` over `history`. Records kept by other
/// nodes are ignored.
pub fn compute_counters<'a, I>(history: I, node: NodeId) -> BehaviorCounters
where
    I: IntoIterator<Item = &'a EncounterRecord>,
{
    let mut c = BehaviorCounters::default();
    for er in history.into_iter().filter(|er| er.local_node == node) {
        for e in &er.entries {
            match e.direction {
                Direction::Sent => {
                    c.sm += 1;
                    match e.kind {
                        EntryKind::Generated => c.gsm += 1,
                        EntryKind::Relayed => c.rfm += 1,
                    }
                }
                Direction::Received => {
                    if e.destination != node {
                        c.rmr += 1;
                    }
                }
            }
        }
    }
    c
}

/// `rfm / rmr`; a node with no relay obligations scores 1.0.
pub fn relayed_ratio(c: &BehaviorCounters) -> f64 {
    if c.rmr == 0 {
        1.0
    } else {
        c.rfm as f64 / c.rmr as f64
    }
}

/// `gsm / sm`; a node that sent nothing scores 0.0.
pub fn self_forwarding_ratio(c: &BehaviorCounters) -> f64 {
    if c.sm == 0 {
        0.0
    } else {
        c.gsm as f64 / c.sm as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum IndividualClass {
    Benign,
    IndividualAttacker,
}

/// Strict-inequality threshold test. Under the default rule either metric
/// alone is enough to flag the node.
pub fn classify_individual(rr: f64, sr: f64, cfg: &DetectionConfig) -> IndividualClass {
    let low_rr = rr < cfg.rr_threshold;
    let high_sr = sr > cfg.sr_threshold;
    let flagged = match cfg.rule {
        IndividualRule::Either => low_rr || high_sr,
        IndividualRule::RelayedRatioOnly => low_rr,
        IndividualRule::SelfForwardingOnly => high_sr,
    };
    if flagged {
        IndividualClass::IndividualAttacker
    } else {
        IndividualClass::Benign
    }
}

/// Message and encounter counts for one ordered node pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairStats {
    pub from: NodeId,
    pub to: NodeId,
    pub m: u64,
    pub f: u64,
}

/// Messages per encounter. Messages claimed over zero encounters map to
/// `f64::INFINITY`, above every finite threshold.
pub fn fxs(p: &PairStats) -> f64 {
    match (p.m, p.f) {
        (0, 0) => 0.0,
        (_, 0) => f64::INFINITY,
        (m, f) => m as f64 / f as f64,
    }
}

/// Both directions of every pair seen in `history`, from the point of view
/// of its keeper. Outgoing stats come first, then incoming, each sorted by
/// peer.
pub fn pair_stats<'a, I>(history: I) -> (Vec<PairStats>, Vec<PairStats>)
where
    I: IntoIterator<Item = &'a EncounterRecord>,
{
    // peer -> (sent, received, encounters)
    let mut acc: BTreeMap<(NodeId, NodeId), (u64, u64, u64)> = BTreeMap::new();
    for er in history {
        let slot = acc.entry((er.local_node, er.peer_node)).or_default();
        slot.2 += 1;
        for e in &er.entries {
            match e.direction {
                Direction::Sent => slot.0 += 1,
                Direction::Received => slot.1 += 1,
            }
        }
    }
    let outgoing =
        acc.iter().map(|(&(local, peer), &(sent, _, f))| PairStats { from: local, to: peer, m: sent, f }).collect();
    let incoming =
        acc.iter().map(|(&(local, peer), &(_, recv, f))| PairStats { from: peer, to: local, m: recv, f }).collect();
    (outgoing, incoming)
}
