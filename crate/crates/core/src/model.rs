//! Node identities, messages and encounter records.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Kind of host a node represents in the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Role {
    Server,
    Vm,
}

/// Identity of a node. `index` is unique within a scenario; `role` is fixed
/// for the lifetime of a run.
///
/// The textual form is `s<index>` for servers and `v<index>` for VMs, which is
/// what the trace, label and verdict files carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub index: u32,
    pub role: Role,
}

impl NodeId {
    pub const fn server(index: u32) -> Self {
        Self { index, role: Role::Server }
    }

    pub const fn vm(index: u32) -> Self {
        Self { index, role: Role::Vm }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.role {
            Role::Server => 's',
            Role::Vm => 'v',
        };
        write!(f, "{tag}{}", self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseNodeIdError;

impl fmt::Display for ParseNodeIdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("node id must look like `s<index>` or `v<index>`")
    }
}

impl core::error::Error for ParseNodeIdError {}

impl FromStr for NodeId {
    type Err = ParseNodeIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        let role = match chars.next() {
            Some('s') => Role::Server,
            Some('v') => Role::Vm,
            _ => return Err(ParseNodeIdError),
        };
        let rest = chars.as_str();
        if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseNodeIdError);
        }
        let index = rest.parse().map_err(|_| ParseNodeIdError)?;
        Ok(Self { index, role })
    }
}

#[cfg(feature = "serde")]
impl Serialize for NodeId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[cfg(feature = "serde")]
impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <alloc::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Simulation time in milliseconds since the start of the run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_secs(secs: u64) -> Self {
        SimTime(secs * 1000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms)
    }

    pub const fn as_millis(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub const fn saturating_add(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(other.0))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}s", self.0 / 1000, self.0 % 1000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct MessageId(pub u64);

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Message {
    pub id: MessageId,
    pub source: NodeId,
    pub destination: NodeId,
    pub created_at: SimTime,
    pub ttl: SimTime,
}

impl Message {
    pub fn expires_at(&self) -> SimTime {
        self.created_at.saturating_add(self.ttl)
    }

    pub fn is_well_formed(&self) -> bool {
        self.source != self.destination && self.ttl.0 > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Direction {
    Sent,
    Received,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::Sent => Direction::Received,
            Direction::Received => Direction::Sent,
        }
    }
}

/// Whether the transferred message was the sender's own traffic or carried
/// on behalf of another node. Both sides of a transfer record the sender's
/// kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EntryKind {
    Generated,
    Relayed,
}

/// One message transfer logged inside an encounter record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageEntry {
    pub message_id: MessageId,
    /// Final destination of the message. Needed to tell relay obligations
    /// apart from deliveries.
    pub destination: NodeId,
    pub direction: Direction,
    pub kind: EntryKind,
}

impl MessageEntry {
    /// The same transfer as seen from the other side of the contact.
    pub fn mirrored(self) -> Self {
        Self { direction: self.direction.flipped(), ..self }
    }
}

/// Keyed digest produced by one of the two parties of an encounter.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; 32]);

impl Signature {
    pub const EMPTY: Signature = Signature([0; 32]);
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Signature(")?;
        for b in &self.0[..6] {
            write!(f, "{b:02x}")?;
        }
        f.write_str("..)")
    }
}

/// Record of a single contact, kept by `local_node` and co-signed by both
/// parties.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncounterRecord {
    pub local_node: NodeId,
    pub peer_node: NodeId,
    pub timestamp: SimTime,
    pub local_seq: u64,
    pub entries: Vec<MessageEntry>,
    pub sig_local: Signature,
    pub sig_peer: Signature,
    /// Simulator annotation. Never part of the encoding, never serialized
    /// into the detector's view.
    pub ground_truth_forged: bool,
}

impl EncounterRecord {
    pub fn unsigned(
        local_node: NodeId,
        peer_node: NodeId,
        timestamp: SimTime,
        local_seq: u64,
        entries: Vec<MessageEntry>,
    ) -> Self {
        Self {
            local_node,
            peer_node,
            timestamp,
            local_seq,
            entries,
            sig_local: Signature::EMPTY,
            sig_peer: Signature::EMPTY,
            ground_truth_forged: false,
        }
    }

    /// Entry list in canonical order, used when two records are compared.
    pub fn sorted_entries(&self) -> Vec<MessageEntry> {
        let mut entries = self.entries.clone();
        entries.sort_unstable();
        entries
    }

    pub fn sent(&self) -> impl Iterator<Item = &MessageEntry> {
        self.entries.iter().filter(|e| e.direction == Direction::Sent)
    }

    pub fn received(&self) -> impl Iterator<Item = &MessageEntry> {
        self.entries.iter().filter(|e| e.direction == Direction::Received)
    }
}
