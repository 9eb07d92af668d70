//! Canonical record encoding and the per-node keyed digest used as a
//! signature.
//!
//! Every node holds a secret key that the trusted auditor also knows. A
//! record carries one digest per party; a third party cannot produce the
//! peer digest without the peer's key, so framing a non-colluder fails
//! verification while two colluders can co-sign anything they like.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use hmac::{Hmac, Mac};
use sha2::Sha256;

use crate::model::{Direction, EncounterRecord, EntryKind, NodeId, Role, Signature};

type HmacSha256 = Hmac<Sha256>;

const ENCODING_VERSION: u8 = 1;

#[derive(Clone, PartialEq, Eq)]
pub struct NodeKey(pub [u8; 32]);

impl core::fmt::Debug for NodeKey {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("NodeKey(..)")
    }
}

fn put_node(out: &mut Vec<u8>, id: NodeId) {
    out.extend_from_slice(&id.index.to_le_bytes());
    out.push(match id.role {
        Role::Server => 0,
        Role::Vm => 1,
    });
}

/// Deterministic little-endian byte layout of a record without its
/// signatures and simulator annotation.
///
/// Layout: version `u8`, local node, peer node (each `u32` index + `u8`
/// role), timestamp ms `u64`, local_seq `u64`, entry count `u32`, then per
/// entry: message id `u64`, destination node, direction `u8`, kind `u8`.
pub fn canonical_encode(er: &EncounterRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + er.entries.len() * 15);
    out.push(ENCODING_VERSION);
    put_node(&mut out, er.local_node);
    put_node(&mut out, er.peer_node);
    out.extend_from_slice(&er.timestamp.as_millis().to_le_bytes());
    out.extend_from_slice(&er.local_seq.to_le_bytes());
    out.extend_from_slice(&(er.entries.len() as u32).to_le_bytes());
    for e in &er.entries {
        out.extend_from_slice(&e.message_id.0.to_le_bytes());
        put_node(&mut out, e.destination);
        out.push(match e.direction {
            Direction::Sent => 0,
            Direction::Received => 1,
        });
        out.push(match e.kind {
            EntryKind::Generated => 0,
            EntryKind::Relayed => 1,
        });
    }
    out
}

fn digest(key: &NodeKey, bytes: &[u8]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(&key.0).expect("hmac accepts any key length");
    mac.update(bytes);
    mac.finalize().into_bytes().into()
}

pub fn sign(key: &NodeKey, er: &EncounterRecord) -> Signature {
    Signature(digest(key, &canonical_encode(er)))
}

pub fn verify(key: &NodeKey, er: &EncounterRecord, sig: &Signature) -> bool {
    let mut mac = HmacSha256::new_from_slice(&key.0).expect("hmac accepts any key length");
    mac.update(&canonical_encode(er));
    mac.verify_slice(&sig.0).is_ok()
}

/// Fills both signature slots of `er` using the two parties' keys.
pub fn co_sign(er: &mut EncounterRecord, local_key: &NodeKey, peer_key: &NodeKey) {
    let bytes = canonical_encode(er);
    er.sig_local = Signature(digest(local_key, &bytes));
    er.sig_peer = Signature(digest(peer_key, &bytes));
}

/// The auditor's table of node keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Keyring {
    keys: BTreeMap<NodeId, NodeKey>,
}

impl Keyring {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, node: NodeId, key: NodeKey) {
        self.keys.insert(node, key);
    }

    pub fn get(&self, node: NodeId) -> Option<&NodeKey> {
        self.keys.get(&node)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.keys.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &NodeKey)> {
        self.keys.iter().map(|(n, k)| (*n, k))
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Signs `er` with the keys of its two parties. Returns `false` when
    /// either key is missing.
    pub fn co_sign(&self, er: &mut EncounterRecord) -> bool {
        match (self.get(er.local_node), self.get(er.peer_node)) {
            (Some(l), Some(p)) => {
                co_sign(er, l, p);
                true
            }
            _ => false,
        }
    }
}

impl FromIterator<(NodeId, NodeKey)> for Keyring {
    fn from_iter<I: IntoIterator<Item = (NodeId, NodeKey)>>(iter: I) -> Self {
        Self { keys: iter.into_iter().collect() }
    }
}
