//! Engine metrics against entry-by-entry recounts.

mod common;

use std::collections::BTreeMap;

use common::*;
use er_sentinel_core::detect::metrics::{compute_counters, fxs, pair_stats};
use er_sentinel_core::detect::{DetectionConfig, Detector};
use er_sentinel_core::eval::{confusion, f_score, precision, recall, ConfusionCounts};
use er_sentinel_core::sim::{self, AttackerConfig, GroundTruth, Routing, SimConfig};
use er_sentinel_core::{Direction, EncounterRecord, EntryKind, MessageEntry, MessageId, NodeId, SimTime};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_instance(seed: u64) -> SimConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n_servers = rng.random_range(1..=2);
    let n_vms = rng.random_range(1..=6 - n_servers);
    let lo = rng.random_range(120..=600);
    let mut cfg = SimConfig {
        n_servers,
        n_vms,
        duration: SimTime::from_secs(rng.random_range(600..=5400)),
        msg_interval: (SimTime::from_secs(lo), SimTime::from_secs(lo + rng.random_range(0..=600))),
        encounter_rate: rng.random_range(4.0..30.0),
        routing: if rng.random_bool(0.5) { Routing::Gradient } else { Routing::TwoHop },
        message_ttl: SimTime::from_secs(rng.random_range(300..=3600)),
        seed,
        ..SimConfig::default()
    };
    let n = n_servers + n_vms;
    if n > 2 && rng.random_bool(0.6) {
        let victim = cfg.node(rng.random_range(0..n)).unwrap();
        let config = match rng.random_range(0..3) {
            0 => AttackerConfig::blackhole(),
            1 => AttackerConfig::greyhole(rng.random_range(0.0..=1.0)),
            _ => AttackerConfig::greyhole_every(rng.random_range(1..=4)),
        };
        cfg.attacker_mix.push(group(vec![victim], config));
    }
    cfg
}

#[test]
fn engine_matches_recount_on_small_instances() {
    let mut checked = 0;
    let mut seed = 0;
    while checked < 250 {
        seed += 1;
        assert!(seed < 5000, "not enough small instances");
        let cfg = small_instance(seed);
        let log = sim::run(&cfg).unwrap();
        if log.events.len() > 200 || log.ers.is_empty() {
            continue;
        }
        checked += 1;

        let ers = log.detector_view();
        let flat = flatten(&ers);
        let det = Detector::new(ers.clone(), &log.keyring);
        let dcfg = DetectionConfig::default();
        let report = det.run(&dcfg);
        let width = dcfg.window.as_millis();

        for node in det.nodes() {
            let c = compute_counters(det.history(node), node);
            assert_eq!([c.rfm, c.rmr, c.gsm, c.sm], brute_counts(&flat, node, None, &[]), "seed {seed} {node}");
            assert_eq!(c.relayed_ratio(), brute_rr(brute_counts(&flat, node, None, &[])));

            let (out, inc) = pair_stats(det.history(node));
            for p in &out {
                assert_eq!(fxs(p), brute_fxs(&ers, node, p.to, true, None), "seed {seed}");
            }
            for p in &inc {
                assert_eq!(fxs(p), brute_fxs(&ers, node, p.from, false, None), "seed {seed}");
            }
        }

        for (d, v) in report.diagnostics.iter().zip(&report.verdicts) {
            assert_eq!((d.node, d.window_id), (v.node, v.window_id));
            let w = Some((d.window_id * width, (d.window_id + 1) * width));
            let raw = brute_counts(&flat, d.node, w, &[]);
            assert_eq!(d.raw_rr, brute_rr(raw), "seed {seed}");
            assert_eq!(d.raw_sr, brute_sr(raw), "seed {seed}");
            let kept = brute_counts(&flat, d.node, w, &d.suspicious);
            assert_eq!(v.rr, brute_rr(kept), "seed {seed}");
            assert_eq!(v.sr, brute_sr(kept), "seed {seed}");
        }

        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        let mut last: BTreeMap<NodeId, bool> = BTreeMap::new();
        for v in &report.verdicts {
            last.insert(v.node, v.blacklisted);
        }
        for (node, flagged) in &last {
            match (flagged, log.labels[node] != GroundTruth::Honest) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let c = confusion(&report.verdicts, &log.labels).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (tp, fp, fn_));
        let p = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else if fn_ == 0 {
            1.0
        } else {
            0.0
        };
        let r = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 1.0 };
        assert_eq!(precision(&c), p);
        assert_eq!(recall(&c), r);
    }
}

fn arb_entry(nodes: u32) -> impl Strategy<Value = MessageEntry> {
    (0u64..50, 0..nodes, any::<bool>(), any::<bool>()).prop_map(|(m, dst, sent, relayed)| MessageEntry {
        message_id: MessageId(m),
        destination: NodeId::vm(dst),
        direction: if sent { Direction::Sent } else { Direction::Received },
        kind: if relayed { EntryKind::Relayed } else { EntryKind::Generated },
    })
}

fn arb_history() -> impl Strategy<Value = Vec<EncounterRecord>> {
    prop::collection::vec((0u32..6, 0u32..6, 0u64..7200, prop::collection::vec(arb_entry(6), 0..8)), 0..40).prop_map(
        |rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (local, peer, t, entries))| {
                    EncounterRecord::unsigned(
                        NodeId::vm(local),
                        NodeId::vm(peer),
                        SimTime::from_secs(t),
                        i as u64,
                        entries,
                    )
                })
                .collect()
        },
    )
}

proptest! {
    #[test]
    fn counters_match_recount(history in arb_history(), node in 0u32..6) {
        let node = NodeId::vm(node);
        let c = compute_counters(&history, node);
        let b = brute_counts(&flatten(&history), node, None, &[]);
        prop_assert_eq!([c.rfm, c.rmr, c.gsm, c.sm], b);
        prop_assert_eq!(c.relayed_ratio(), brute_rr(b));
        prop_assert_eq!(c.self_forwarding_ratio(), brute_sr(b));
        prop_assert!(c.gsm <= c.sm);
    }

    #[test]
    fn fxs_matches_recount(history in arb_history(), node in 0u32..6) {
        let node = NodeId::vm(node);
        let own: Vec<_> = history.iter().filter(|e| e.local_node == node).cloned().collect();
        let (out, inc) = pair_stats(&own);
        for p in &out {
            prop_assert_eq!(fxs(p), brute_fxs(&own, node, p.to, true, None));
        }
        for p in &inc {
            prop_assert_eq!(fxs(p), brute_fxs(&own, node, p.from, false, None));
        }
        let peers: std::collections::BTreeSet<_> = own.iter().map(|e| e.peer_node).collect();
        prop_assert_eq!(out.len(), peers.len());
    }

    #[test]
    fn scores_match_recount(rows in prop::collection::vec((any::<bool>(), any::<bool>()), 0..60)) {
        let labels: BTreeMap<NodeId, GroundTruth> = rows
            .iter()
            .enumerate()
            .map(|(i, (mal, _))| (NodeId::vm(i as u32), if *mal { GroundTruth::Greyhole } else { GroundTruth::Honest }))
            .collect();
        let verdicts: Vec<_> = rows
            .iter()
            .enumerate()
            .map(|(i, (_, flagged))| er_sentinel_core::detect::Verdict {
                node: NodeId::vm(i as u32),
                window_id: 0,
                classification: er_sentinel_core::detect::Classification::Benign,
                rr: 1.0,
                sr: 0.0,
                reputation: 1.0,
                blacklisted: *flagged,
            })
            .collect();
        let c = confusion(&verdicts, &labels).unwrap();
        let tp = rows.iter().filter(|(m, f)| *m && *f).count() as u64;
        let fp = rows.iter().filter(|(m, f)| !*m && *f).count() as u64;
        let fn_ = rows.iter().filter(|(m, f)| *m && !*f).count() as u64;
        let tn = rows.iter().filter(|(m, f)| !*m && !*f).count() as u64;
        prop_assert_eq!(c, ConfusionCounts { tp, fp, fn_, tn });
        prop_assert_eq!(c.total(), rows.len() as u64);
        let s = c.score();
        for x in [s.precision, s.recall, s.f_score] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
        if s.precision + s.recall > 0.0 {
            prop_assert!((s.f_score - 2.0 * s.precision * s.recall / (s.precision + s.recall)).abs() < 1e-15);
        } else {
            prop_assert_eq!(s.f_score, 0.0);
        }
    }

    #[test]
    fn f_is_between_min_and_max(p in 0.0f64..=1.0, r in 0.0f64..=1.0) {
        let f = f_score(p, r);
        prop_assert!(f <= p.max(r) + 1e-12);
        prop_assert!(f + 1e-12 >= p.min(r) || f == 0.0);
    }
}
