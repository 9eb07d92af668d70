//! Messages-per-encounter screening of a node's peers and removal of the
//! records that name suspicious ones.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::model::{EncounterRecord, NodeId};

use super::metrics::{fxs, pair_stats, PairStats};
use super::DetectionConfig;

/// How the cut-off for a pair's messages-per-encounter ratio is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FxsThreshold {
    /// `max(floor, mean + sigmas * sd / sqrt(f))` for a pair with `f`
    /// encounters. `mean` is messages per encounter pooled over the node's
    /// other pairs in the same direction and `sd` the per-encounter spread
    /// estimated from those pairs, so one extreme pair cannot raise its own
    /// cut-off and pairs seen only once are not judged on a single sample.
    Adaptive {
        sigmas: f64,
        floor: f64,
    },
    Fixed(f64),
}

impl Default for FxsThreshold {
    fn default() -> Self {
        FxsThreshold::Adaptive { sigmas: 10.0, floor: 5.0 }
    }
}

impl FxsThreshold {
    /// Cut-off applied to `stats[index]`. Pairs without encounters are left
    /// out of the statistics.
    pub fn cutoff(&self, stats: &[PairStats], index: usize) -> f64 {
        match *self {
            FxsThreshold::Fixed(t) => t,
            FxsThreshold::Adaptive { sigmas, floor } => {
                let others = || stats.iter().enumerate().filter(move |(i, s)| *i != index && s.f > 0).map(|(_, s)| s);
                let n = others().count();
                let f = stats[index].f;
                if n == 0 || f == 0 {
                    return floor;
                }
                let mean = others().map(|s| s.m as f64).sum::<f64>() / others().map(|s| s.f as f64).sum::<f64>();
                let var = others()
                    .map(|s| {
                        let d = fxs(s) - mean;
                        s.f as f64 * d * d
                    })
                    .sum::<f64>()
                    / n as f64;
                let adaptive = mean + sigmas * libm::sqrt(var / f as f64);
                if adaptive > floor {
                    adaptive
                } else {
                    floor
                }
            }
        }
    }
}

fn flag_direction(
    stats: &[PairStats],
    rule: &FxsThreshold,
    peer_of: impl Fn(&PairStats) -> NodeId,
    out: &mut BTreeSet<NodeId>,
) {
    for (i, s) in stats.iter().enumerate() {
        if fxs(s) > rule.cutoff(stats, i) {
            out.insert(peer_of(s));
        }
    }
}

/// Peers whose exchange with the history's keeper is abnormally dense in
/// either direction.
pub fn suspicious_peers<'a, I>(history: I, rule: &FxsThreshold) -> BTreeSet<NodeId>
where
    I: IntoIterator<Item = &'a EncounterRecord>,
{
    let (outgoing, incoming) = pair_stats(history);
    let mut out = BTreeSet::new();
    flag_direction(&outgoing, rule, |s| s.to, &mut out);
    flag_direction(&incoming, rule, |s| s.from, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollusionFilter<'a> {
    pub suspicious: BTreeSet<NodeId>,
    /// The history minus every record whose peer is suspicious, in the
    /// original order.
    pub kept: Vec<&'a EncounterRecord>,
}

pub fn filter_colluders<'a>(history: &'a [EncounterRecord], cfg: &DetectionConfig) -> CollusionFilter<'a> {
    let suspicious = suspicious_peers(history, &cfg.fxs_threshold);
    let kept = remove_peers(history, &suspicious);
    CollusionFilter { suspicious, kept }
}

pub fn remove_peers<'a, I>(history: I, peers: &BTreeSet<NodeId>) -> Vec<&'a EncounterRecord>
where
    I: IntoIterator<Item = &'a EncounterRecord>,
{
    history.into_iter().filter(|er| !peers.contains(&er.peer_node)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Direction, EntryKind, MessageEntry, MessageId, SimTime};
    use alloc::vec;

    fn er(peer: u32, t: u64, sent: u64) -> EncounterRecord {
        let entries = (0..sent)
            .map(|i| MessageEntry {
                message_id: MessageId(t * 1000 + i),
                destination: NodeId::vm(99),
                direction: Direction::Sent,
                kind: EntryKind::Relayed,
            })
            .collect();
        EncounterRecord::unsigned(NodeId::vm(0), NodeId::vm(peer), SimTime::from_secs(t), t, entries)
    }

    #[test]
    fn cutoff_floor_and_fixed() {
        let p = |m, f| PairStats { from: NodeId::vm(0), to: NodeId::vm(m as u32 + 100 * f as u32), m, f };
        let rule = FxsThreshold::default();
        assert_eq!(rule.cutoff(&[p(7, 1)], 0), 5.0);
        assert_eq!(rule.cutoff(&[p(1, 1), p(1, 1), p(1, 1)], 1), 5.0);
        assert_eq!(FxsThreshold::Fixed(6.0).cutoff(&[p(100, 1)], 0), 6.0);
        // others: 2/2 and 6/2 -> mean 2, per-encounter variance (2*1 + 2*1)/2 = 2;
        // a pair with f = 8 gets 2 + 4 * sqrt(2 / 8) = 4
        let stats = [p(2, 2), p(90, 8), p(6, 2), p(3, 0)];
        let c = FxsThreshold::Adaptive { sigmas: 4.0, floor: 0.0 }.cutoff(&stats, 1);
        assert!((c - 4.0).abs() < 1e-12, "{c}");
    }

    #[test]
    fn honest_history_untouched() {
        let history: Vec<_> = (0..30).map(|i| er(1 + (i % 6) as u32, i, 2 + i % 3)).collect();
        let out = filter_colluders(&history, &DetectionConfig::default());
        assert!(out.suspicious.is_empty());
        assert_eq!(out.kept.len(), history.len());
    }

    #[test]
    fn dense_partner_is_removed() {
        // authentic pairs carry at most 3 messages per encounter, the
        // partner 20
        let mut history = vec![];
        let mut t = 0;
        for peer in 1..=8u32 {
            for k in 0..3 {
                t += 1;
                history.push(er(peer, t, 1 + (k + peer as u64) % 3));
            }
        }
        t += 1;
        history.push(er(9, t, 20));
        t += 1;
        history.push(er(9, t, 20));
        let cfg = DetectionConfig { fxs_threshold: FxsThreshold::Fixed(6.0), ..DetectionConfig::default() };
        let out = filter_colluders(&history, &cfg);
        assert_eq!(out.suspicious, [NodeId::vm(9)].into_iter().collect());
        assert_eq!(out.kept.len(), history.len() - 2);
        assert!(out.kept.iter().all(|er| er.peer_node != NodeId::vm(9)));
    }

    #[test]
    fn empty_history() {
        let out = filter_colluders(&[], &DetectionConfig::default());
        assert!(out.suspicious.is_empty() && out.kept.is_empty());
    }
}
