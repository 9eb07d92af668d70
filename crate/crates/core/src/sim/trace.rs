use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::model::{EncounterRecord, Message, MessageId, NodeId, SimTime};
use crate::sign::Keyring;

/// Ground-truth role of a node, for evaluation only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroundTruth {
    Honest,
    Blackhole,
    Greyhole,
    Colluder,
}

impl GroundTruth {
    pub fn is_malicious(self) -> bool {
        self != GroundTruth::Honest
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GroundTruth::Honest => "honest",
            GroundTruth::Blackhole => "blackhole",
            GroundTruth::Greyhole => "greyhole",
            GroundTruth::Colluder => "colluder",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "honest" => GroundTruth::Honest,
            "blackhole" => GroundTruth::Blackhole,
            "greyhole" => GroundTruth::Greyhole,
            "colluder" => GroundTruth::Colluder,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DropReason {
    /// Discarded by a black-hole, grey-hole or colluder.
    Malicious,
    /// TTL ran out while the node held it.
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    MessageCreated {
        message: Message,
    },
    /// A contact between `a` and `b`. `records` index [`TraceLog::ers`]: the
    /// record kept by `a`, then the one kept by `b`.
    Encounter {
        at: SimTime,
        a: NodeId,
        b: NodeId,
        records: [usize; 2],
    },
    MessageDelivered {
        at: SimTime,
        message: MessageId,
        node: NodeId,
    },
    /// `node` is the holder that lost the copy; for malicious drops it is
    /// the attacker responsible.
    MessageDropped {
        at: SimTime,
        message: MessageId,
        node: NodeId,
        reason: DropReason,
    },
}

impl TraceEvent {
    pub fn at(&self) -> SimTime {
        match self {
            TraceEvent::MessageCreated { message } => message.created_at,
            TraceEvent::Encounter { at, .. }
            | TraceEvent::MessageDelivered { at, .. }
            | TraceEvent::MessageDropped { at, .. } => *at,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TraceSummary {
    pub nodes: usize,
    pub messages: usize,
    pub encounters: usize,
    pub records: usize,
    pub delivered: usize,
    pub malicious_drops: usize,
    pub expired: usize,
    pub forged_records: usize,
}

/// Everything one simulation run produced.
#[derive(Debug, Clone, Default)]
pub struct TraceLog {
    /// Non-decreasing in time.
    pub events: Vec<TraceEvent>,
    pub ers: Vec<EncounterRecord>,
    pub labels: BTreeMap<NodeId, GroundTruth>,
    pub keyring: Keyring,
    /// Colluders whose targets could not be met in some window.
    pub unreachable_forgeries: usize,
}

impl TraceLog {
    pub fn summary(&self) -> TraceSummary {
        let mut s = TraceSummary { nodes: self.labels.len(), records: self.ers.len(), ..Default::default() };
        for e in &self.events {
            match e {
                TraceEvent::MessageCreated { .. } => s.messages += 1,
                TraceEvent::Encounter { .. } => s.encounters += 1,
                TraceEvent::MessageDelivered { .. } => s.delivered += 1,
                TraceEvent::MessageDropped { reason: DropReason::Malicious, .. } => s.malicious_drops += 1,
                TraceEvent::MessageDropped { reason: DropReason::Expired, .. } => s.expired += 1,
            }
        }
        s.forged_records = self.ers.iter().filter(|e| e.ground_truth_forged).count();
        s
    }

    /// Records with the simulator annotation cleared: what the detector gets.
    pub fn detector_view(&self) -> Vec<EncounterRecord> {
        self.ers.iter().map(|er| EncounterRecord { ground_truth_forged: false, ..er.clone() }).collect()
    }

    pub fn history(&self, node: NodeId) -> impl Iterator<Item = &EncounterRecord> {
        self.ers.iter().filter(move |er| er.local_node == node)
    }
}
