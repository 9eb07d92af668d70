//! Fake encounter records a colluder produces to lift its relayed ratio and
//! lower its self-forwarding ratio.
//!
//! The forger claims to have forwarded messages it actually dropped, all of
//! them to the partner it met least often, in as few records as the per-record
//! cap allows. The partner keeps a mirrored record and both co-sign, so the
//! fakes pass sequence, signature and cross-check audits.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::detect::metrics::{compute_counters, relayed_ratio, self_forwarding_ratio, BehaviorCounters};
use crate::model::{Direction, EncounterRecord, EntryKind, MessageEntry, MessageId, NodeId, SimTime};
use crate::sign::Keyring;

#[derive(Debug, Clone)]
pub struct ForgeRequest<'a> {
    pub attacker: NodeId,
    pub partners: &'a [NodeId],
    /// The attacker's authentic records over the span it wants to cover.
    pub history: &'a [&'a EncounterRecord],
    pub target_rr: f64,
    pub target_sr: f64,
    /// Timestamp carried by the fakes.
    pub at: SimTime,
    /// First `local_seq` available to the attacker.
    pub next_seq: u64,
    /// Cap on entries per fake record; `None` packs everything into one.
    pub max_entries_per_record: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Forgery {
    pub partner: Option<NodeId>,
    /// Attacker-side fakes, co-signed, with consecutive `local_seq`s.
    pub records: Vec<EncounterRecord>,
    /// Fake forwards claimed across all records.
    pub claimed_forwards: u64,
    /// Targets could not be met with the available material.
    pub unreachable: bool,
}

/// Smallest number of extra relayed forwards that meets both targets, found
/// by stepping the closed-form estimate until the ratio functions agree.
pub fn required_forwards(c: &BehaviorCounters, target_rr: f64, target_sr: f64) -> u64 {
    let with = |k: u64| BehaviorCounters { rfm: c.rfm + k, sm: c.sm + k, ..*c };
    let ok = |k: u64| relayed_ratio(&with(k)) >= target_rr && self_forwarding_ratio(&with(k)) <= target_sr;

    let rr_guess = if c.rmr == 0 { 0.0 } else { target_rr * c.rmr as f64 - c.rfm as f64 };
    let sr_guess = if target_sr > 0.0 { c.gsm as f64 / target_sr - c.sm as f64 } else { 0.0 };
    let guess = libm::ceil(if rr_guess > sr_guess { rr_guess } else { sr_guess });
    let mut k = if guess > 0.0 { guess as u64 } else { 0 };
    while k > 0 && ok(k - 1) {
        k -= 1;
    }
    // float rounding can leave the estimate one short
    let mut guard = 0;
    while !ok(k) && guard < 4 {
        k += 1;
        guard += 1;
    }
    k
}

/// Relayed messages the attacker received in `history` and never sent on,
/// as entries ready to be claimed, ordered by message id.
fn claimable(history: &[&EncounterRecord], attacker: NodeId) -> Vec<MessageEntry> {
    let mut sent: BTreeSet<MessageId> = BTreeSet::new();
    let mut received: Vec<MessageEntry> = Vec::new();
    for er in history.iter().filter(|er| er.local_node == attacker) {
        for e in &er.entries {
            match e.direction {
                Direction::Sent => {
                    sent.insert(e.message_id);
                }
                Direction::Received if e.destination != attacker => received.push(*e),
                Direction::Received => {}
            }
        }
    }
    received.sort_unstable_by_key(|e| e.message_id);
    received.dedup_by_key(|e| e.message_id);
    received
        .into_iter()
        .filter(|e| !sent.contains(&e.message_id))
        .map(|e| MessageEntry { direction: Direction::Sent, kind: EntryKind::Relayed, ..e })
        .collect()
}

/// Partner with the fewest encounters in `history`; ties go to the lowest id.
pub fn least_met_partner(history: &[&EncounterRecord], attacker: NodeId, partners: &[NodeId]) -> Option<NodeId> {
    partners
        .iter()
        .copied()
        .filter(|p| *p != attacker)
        .map(|p| {
            let met = history.iter().filter(|er| er.local_node == attacker && er.peer_node == p).count();
            (met, p)
        })
        .min()
        .map(|(_, p)| p)
}

pub fn forge_collusion_records(req: &ForgeRequest<'_>, keyring: &Keyring) -> Forgery {
    let counters = compute_counters(req.history.iter().copied(), req.attacker);
    let needed = required_forwards(&counters, req.target_rr, req.target_sr);
    if needed == 0 {
        return Forgery::default();
    }
    let Some(partner) = least_met_partner(req.history, req.attacker, req.partners) else {
        return Forgery { unreachable: true, ..Forgery::default() };
    };

    let mut pool = claimable(req.history, req.attacker);
    let unreachable = (pool.len() as u64) < needed;
    pool.truncate(needed as usize);
    if pool.is_empty() {
        return Forgery { partner: Some(partner), unreachable, ..Forgery::default() };
    }

    let cap = req.max_entries_per_record.unwrap_or(usize::MAX).max(1);
    let claimed_forwards = pool.len() as u64;
    let mut records = Vec::with_capacity(pool.len().div_ceil(cap));
    for (i, chunk) in pool.chunks(cap).enumerate() {
        let mut er = EncounterRecord::unsigned(req.attacker, partner, req.at, req.next_seq + i as u64, chunk.to_vec());
        er.ground_truth_forged = true;
        let _ = keyring.co_sign(&mut er);
        records.push(er);
    }
    Forgery { partner: Some(partner), records, claimed_forwards, unreachable }
}

/// The record the partner keeps for a fake: same encounter and entries seen
/// from its side, co-signed by both colluders.
pub fn mirror_for_partner(fake: &EncounterRecord, partner_seq: u64, keyring: &Keyring) -> EncounterRecord {
    let entries = fake.entries.iter().map(|e| e.mirrored()).collect();
    let mut er = EncounterRecord::unsigned(fake.peer_node, fake.local_node, fake.timestamp, partner_seq, entries);
    er.ground_truth_forged = true;
    let _ = keyring.co_sign(&mut er);
    er
}
