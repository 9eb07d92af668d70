#![allow(dead_code)]

use er_sentinel_core::sim::{AttackerConfig, AttackerGroup, SimConfig};
use er_sentinel_core::{Direction, EncounterRecord, EntryKind, NodeId, SimTime};

/// One entry of one record, flattened so the recounts below never touch the
/// engine's own aggregation code.
#[derive(Debug, Clone, Copy)]
pub struct Flat {
    pub local: NodeId,
    pub peer: NodeId,
    pub t_ms: u64,
    pub sent: bool,
    pub relayed: bool,
    pub dst: NodeId,
}

pub fn flatten(ers: &[EncounterRecord]) -> Vec<Flat> {
    let mut out = Vec::new();
    for er in ers {
        for e in &er.entries {
            out.push(Flat {
                local: er.local_node,
                peer: er.peer_node,
                t_ms: er.timestamp.as_millis(),
                sent: e.direction == Direction::Sent,
                relayed: e.kind == EntryKind::Relayed,
                dst: e.destination,
            });
        }
    }
    out
}

pub fn in_window(t_ms: u64, window: Option<(u64, u64)>) -> bool {
    window.is_none_or(|(lo, hi)| t_ms >= lo && t_ms < hi)
}

/// (rfm, rmr, gsm, sm) for `node`, counted entry by entry.
pub fn brute_counts(flat: &[Flat], node: NodeId, window: Option<(u64, u64)>, skip_peers: &[NodeId]) -> [u64; 4] {
    let mut c = [0u64; 4];
    for f in flat {
        if f.local != node || !in_window(f.t_ms, window) || skip_peers.contains(&f.peer) {
            continue;
        }
        if f.sent {
            c[3] += 1;
            if f.relayed {
                c[0] += 1;
            } else {
                c[2] += 1;
            }
        } else if f.dst != node {
            c[1] += 1;
        }
    }
    c
}

pub fn brute_rr(c: [u64; 4]) -> f64 {
    if c[1] == 0 {
        1.0
    } else {
        c[0] as f64 / c[1] as f64
    }
}

pub fn brute_sr(c: [u64; 4]) -> f64 {
    if c[3] == 0 {
        0.0
    } else {
        c[2] as f64 / c[3] as f64
    }
}

/// Messages per encounter between `node` and `peer` in `node`'s records,
/// sent (`outgoing`) or received.
pub fn brute_fxs(
    ers: &[EncounterRecord],
    node: NodeId,
    peer: NodeId,
    outgoing: bool,
    window: Option<(u64, u64)>,
) -> f64 {
    let mut m = 0u64;
    let mut f = 0u64;
    for er in ers {
        if er.local_node != node || er.peer_node != peer || !in_window(er.timestamp.as_millis(), window) {
            continue;
        }
        f += 1;
        for e in &er.entries {
            if (e.direction == Direction::Sent) == outgoing {
                m += 1;
            }
        }
    }
    if f == 0 {
        if m == 0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        m as f64 / f as f64
    }
}

pub fn hours(h: u64) -> SimTime {
    SimTime::from_secs(h * 3600)
}

pub fn vms(range: std::ops::Range<u32>) -> Vec<NodeId> {
    range.map(NodeId::vm).collect()
}

pub fn group(nodes: Vec<NodeId>, config: AttackerConfig) -> AttackerGroup {
    AttackerGroup { nodes, config }
}

/// Five forger/accomplice pairs and one greyhole on the default mesh.
pub fn collusion_config(seed: u64, duration: SimTime) -> SimConfig {
    let mut cfg = SimConfig { seed, duration, ..SimConfig::default() };
    for k in 0..5u32 {
        let forger = NodeId::vm(44 + 2 * k);
        let accomplice = NodeId::vm(45 + 2 * k);
        cfg.attacker_mix.push(group(vec![forger], AttackerConfig::forger(0.7, vec![accomplice], 0.6, 0.5)));
        cfg.attacker_mix.push(group(vec![accomplice], AttackerConfig::accomplice(0.7, vec![forger])));
    }
    cfg.attacker_mix.push(group(vec![NodeId::vm(54)], AttackerConfig::greyhole(0.7)));
    cfg
}
