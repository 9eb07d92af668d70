mod common;

use std::collections::BTreeMap;

use common::*;
use er_sentinel_core::detect::audit::mirrors;
use er_sentinel_core::detect::metrics::compute_counters;
use er_sentinel_core::sim::{self, AttackerConfig, DropReason, GenerationMode, GroundTruth, SimConfig, TraceEvent};
use er_sentinel_core::{MessageId, NodeId, SimTime};

fn short(seed: u64) -> SimConfig {
    SimConfig { seed, duration: hours(2), ..SimConfig::default() }
}

#[test]
fn default_run_generates_expected_message_count() {
    let log = sim::run(&SimConfig { seed: 11, ..SimConfig::default() }).unwrap();
    let created = log.events.iter().filter(|e| matches!(e, TraceEvent::MessageCreated { .. })).count() as f64;
    let expected = 55.0 * 36_000.0 / 25.0;
    assert!((created - expected).abs() <= 0.05 * expected, "{created}");
}

#[test]
fn per_network_generation_is_one_stream() {
    let cfg = SimConfig { generation: GenerationMode::PerNetwork, ..short(3) };
    let log = sim::run(&cfg).unwrap();
    let created = log.summary().messages as f64;
    let expected = 7200.0 / 25.0;
    assert!((created - expected).abs() <= 0.15 * expected, "{created}");
}

#[test]
fn honest_run_has_no_malicious_drops_and_mirrored_records() {
    let log = sim::run(&short(5)).unwrap();
    let s = log.summary();
    assert_eq!(s.malicious_drops, 0);
    assert_eq!(s.records, 2 * s.encounters);
    for e in &log.events {
        if let TraceEvent::Encounter { records, .. } = e {
            assert!(mirrors(&log.ers[records[0]], &log.ers[records[1]]));
        }
    }
}

#[test]
fn honest_relays_forward_or_expire() {
    let log = sim::run(&short(6)).unwrap();
    let end = log.events.last().unwrap().at();
    // a relayed receipt is still owed only if the message is still alive at the end
    let mut resolved: BTreeMap<MessageId, SimTime> = BTreeMap::new();
    let mut created: BTreeMap<MessageId, SimTime> = BTreeMap::new();
    for e in &log.events {
        match e {
            TraceEvent::MessageCreated { message } => {
                created.insert(message.id, message.expires_at());
            }
            TraceEvent::MessageDelivered { message, at, .. } | TraceEvent::MessageDropped { message, at, .. } => {
                resolved.entry(*message).or_insert(*at);
            }
            _ => {}
        }
    }
    for node in log.labels.keys() {
        let c = compute_counters(log.history(*node), *node);
        assert!(c.rfm <= c.rmr);
        let owed = c.rmr - c.rfm;
        let alive = created.iter().filter(|(id, exp)| !resolved.contains_key(id) && **exp > end).count() as u64;
        assert!(owed <= alive, "{node}: {owed} relays unaccounted, {alive} messages alive");
    }
}

#[test]
fn every_message_has_at_most_one_terminal_state() {
    let mut cfg = short(8);
    cfg.attacker_mix.push(group(vms(40..45), AttackerConfig::greyhole(0.5)));
    cfg.attacker_mix.push(group(vms(45..50), AttackerConfig::blackhole()));
    let log = sim::run(&cfg).unwrap();
    let mut terminal: BTreeMap<MessageId, usize> = BTreeMap::new();
    let mut created = 0;
    for e in &log.events {
        match e {
            TraceEvent::MessageCreated { .. } => created += 1,
            TraceEvent::MessageDelivered { message, .. } | TraceEvent::MessageDropped { message, .. } => {
                *terminal.entry(*message).or_default() += 1;
            }
            _ => {}
        }
    }
    assert!(terminal.values().all(|n| *n == 1));
    let s = log.summary();
    assert_eq!(s.delivered + s.malicious_drops + s.expired, terminal.len());
    assert!(terminal.len() <= created);
}

#[test]
fn drops_are_attributed_to_attackers() {
    let mut cfg = short(9);
    cfg.attacker_mix.push(group(vms(45..50), AttackerConfig::greyhole(0.5)));
    cfg.attacker_mix.push(group(vms(50..55), AttackerConfig::blackhole()));
    let log = sim::run(&cfg).unwrap();
    let mut per_node: BTreeMap<NodeId, u64> = BTreeMap::new();
    for e in &log.events {
        if let TraceEvent::MessageDropped { node, reason: DropReason::Malicious, .. } = e {
            assert!(log.labels[node].is_malicious(), "{node}");
            *per_node.entry(*node).or_default() += 1;
        }
    }
    for n in vms(45..55) {
        assert!(per_node[&n] > 0, "{n}");
    }
    for n in vms(50..55) {
        let c = compute_counters(log.history(n), n);
        assert_eq!(c.rfm, 0);
        assert_eq!(per_node[&n], c.rmr);
    }
}

#[test]
fn greyhole_drop_fraction_follows_probability() {
    let mut cfg = short(10);
    cfg.attacker_mix.push(group(vms(45..55), AttackerConfig::greyhole(0.5)));
    let log = sim::run(&cfg).unwrap();
    let (mut drops, mut received) = (0u64, 0u64);
    for e in &log.events {
        if let TraceEvent::MessageDropped { reason: DropReason::Malicious, .. } = e {
            drops += 1;
        }
    }
    for n in vms(45..55) {
        received += compute_counters(log.history(n), n).rmr;
    }
    assert!(received >= 10_000, "{received}");
    let frac = drops as f64 / received as f64;
    assert!((0.45..=0.55).contains(&frac), "{frac}");
}

#[test]
fn every_nth_and_periodic_modes() {
    let mut cfg = short(12);
    cfg.attacker_mix.push(group(vec![NodeId::vm(20)], AttackerConfig::greyhole_every(4)));
    cfg.attacker_mix.push(group(vec![NodeId::vm(21)], AttackerConfig::greyhole_periodic(SimTime::from_secs(600))));
    let log = sim::run(&cfg).unwrap();
    let every = compute_counters(log.history(NodeId::vm(20)), NodeId::vm(20));
    let dropped_every = log
        .events
        .iter()
        .filter(|e| matches!(e, TraceEvent::MessageDropped { node, reason: DropReason::Malicious, .. } if *node == NodeId::vm(20)))
        .count() as u64;
    assert_eq!(dropped_every, every.rmr / 4);
    for e in &log.events {
        if let TraceEvent::MessageDropped { node, reason: DropReason::Malicious, at, .. } = e {
            if *node == NodeId::vm(21) {
                assert!(at.as_millis() % 600_000 < 300_000);
            }
        }
    }
}

#[test]
fn collusion_fakes_are_cosigned_and_labelled() {
    let log = sim::run(&collusion_config(4, hours(3))).unwrap();
    let fakes: Vec<_> = log.ers.iter().filter(|e| e.ground_truth_forged).collect();
    assert!(!fakes.is_empty());
    for er in &fakes {
        assert_eq!(log.labels[&er.local_node], GroundTruth::Colluder);
        assert_eq!(log.labels[&er.peer_node], GroundTruth::Colluder);
        assert!(er.timestamp.as_millis() % 3_600_000 == 3_599_999);
    }
    assert!(log.detector_view().iter().all(|e| !e.ground_truth_forged));
    assert_eq!(log.unreachable_forgeries, 0);
}

#[test]
fn identical_seed_identical_trace() {
    let cfg = collusion_config(42, hours(2));
    let a = sim::run(&cfg).unwrap();
    let b = sim::run(&cfg).unwrap();
    assert_eq!(a.events, b.events);
    assert_eq!(a.ers, b.ers);
    assert_eq!(a.labels, b.labels);
}

#[test]
fn rejects_invalid_configs() {
    assert!(sim::run(&SimConfig { n_vms: 0, ..SimConfig::default() }).is_err());
    assert!(sim::run(&SimConfig { encounter_rate: -1.0, ..SimConfig::default() }).is_err());
    assert!(sim::run(&SimConfig { routing_copies: 0, ..SimConfig::default() }).is_err());
}
