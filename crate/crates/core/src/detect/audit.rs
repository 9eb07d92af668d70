//! Record audits: sequence/timestamp order, signatures, and the neighbor
//! cross-check between the two sides of every claimed encounter.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::model::{EncounterRecord, NodeId, SimTime};
use crate::sign::{verify, Keyring};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderViolation {
    /// `local_seq` did not strictly increase.
    Sequence,
    /// Timestamp went backwards.
    Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceViolation {
    pub index: usize,
    pub kind: OrderViolation,
}

/// Checks one node's history in recorded order. An index may appear twice
/// when both the counter and the clock regress there.
pub fn audit_sequences(history: &[EncounterRecord]) -> Vec<SequenceViolation> {
    let mut out = Vec::new();
    for (i, pair) in history.windows(2).enumerate() {
        let (prev, cur) = (&pair[0], &pair[1]);
        if cur.local_seq <= prev.local_seq {
            out.push(SequenceViolation { index: i + 1, kind: OrderViolation::Sequence });
        }
        if cur.timestamp < prev.timestamp {
            out.push(SequenceViolation { index: i + 1, kind: OrderViolation::Timestamp });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signer {
    Local,
    Peer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignatureFault {
    Invalid,
    /// The keyring has no key for the signer.
    Unverifiable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignatureViolation {
    pub index: usize,
    pub signer: Signer,
    pub fault: SignatureFault,
}

pub fn audit_signatures(history: &[EncounterRecord], keyring: &Keyring) -> Vec<SignatureViolation> {
    let mut out = Vec::new();
    for (index, er) in history.iter().enumerate() {
        for (signer, node, sig) in
            [(Signer::Local, er.local_node, &er.sig_local), (Signer::Peer, er.peer_node, &er.sig_peer)]
        {
            let fault = match keyring.get(node) {
                None => Some(SignatureFault::Unverifiable),
                Some(key) if !verify(key, er, sig) => Some(SignatureFault::Invalid),
                Some(_) => None,
            };
            if let Some(fault) = fault {
                out.push(SignatureViolation { index, signer, fault });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborMismatch {
    /// `claimant` recorded an encounter at `timestamp` that `absent` has no
    /// record of. `record` indexes the claimant's slice.
    OneSided { claimant: NodeId, absent: NodeId, record: usize, timestamp: SimTime },
    /// Both sides recorded the encounter but the entry sets are not mirror
    /// images. Indices refer to the `a` and `b` slices.
    Divergent { a_record: usize, b_record: usize, timestamp: SimTime },
}

impl NeighborMismatch {
    pub fn timestamp(&self) -> SimTime {
        match *self {
            NeighborMismatch::OneSided { timestamp, .. } => timestamp,
            NeighborMismatch::Divergent { timestamp, .. } => timestamp,
        }
    }
}

/// Compares the encounters `a` claims with `b` against those `b` claims with
/// `a`. Records naming other peers are ignored, so full histories can be
/// passed. Encounters are matched on timestamp; when several share one, they
/// are paired in recorded order.
pub fn cross_check_neighbors(
    a: NodeId,
    ers_a: &[EncounterRecord],
    b: NodeId,
    ers_b: &[EncounterRecord],
) -> Vec<NeighborMismatch> {
    let mut by_time: BTreeMap<SimTime, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, er) in ers_a.iter().enumerate() {
        if er.local_node == a && er.peer_node == b {
            by_time.entry(er.timestamp).or_default().0.push(i);
        }
    }
    for (i, er) in ers_b.iter().enumerate() {
        if er.local_node == b && er.peer_node == a {
            by_time.entry(er.timestamp).or_default().1.push(i);
        }
    }

    let mut out = Vec::new();
    for (timestamp, (side_a, side_b)) in by_time {
        let paired = side_a.len().min(side_b.len());
        for k in 0..paired {
            let (ia, ib) = (side_a[k], side_b[k]);
            if !mirrors(&ers_a[ia], &ers_b[ib]) {
                out.push(NeighborMismatch::Divergent { a_record: ia, b_record: ib, timestamp });
            }
        }
        for &ia in &side_a[paired..] {
            out.push(NeighborMismatch::OneSided { claimant: a, absent: b, record: ia, timestamp });
        }
        for &ib in &side_b[paired..] {
            out.push(NeighborMismatch::OneSided { claimant: b, absent: a, record: ib, timestamp });
        }
    }
    out
}

/// True when `b`'s entries are exactly `a`'s with directions flipped.
pub fn mirrors(a: &EncounterRecord, b: &EncounterRecord) -> bool {
    if a.entries.len() != b.entries.len() {
        return false;
    }
    let mut lhs: Vec<_> = a.entries.iter().map(|e| e.mirrored()).collect();
    lhs.sort_unstable();
    lhs == b.sorted_entries()
}
