//! On-disk formats.
//!
//! * `trace.jsonl`: one JSON object per line, tagged by `type`:
//!   - `msg_created`: `t_ms`, `id`, `src`, `dst`, `ttl_ms`
//!   - `encounter`: `t_ms`, `a`, `b`; followed by the `er` line of `a`, then of `b`
//!   - `er`: `t_ms`, `local`, `peer`, `seq`, `entries` (objects with `m`,
//!     `dst`, `dir` = `sent`|`received`, `kind` = `generated`|`relayed`),
//!     `sig_local`, `sig_peer` (64 hex digits each)
//!   - `msg_delivered`: `t_ms`, `id`, `node`
//!   - `msg_dropped`: `t_ms`, `id`, `node`, `reason` = `malicious`|`expired`
//! * `labels.json`: node id to `honest`|`blackhole`|`greyhole`|`colluder`.
//! * `keyring.json`: node id to 64 hex digits.
//! * `verdicts.jsonl`: one verdict per node and window.
//! * sweep CSVs: `threshold,precision,recall,f_score`, scores to 3 decimals.
//!
//! Node ids are written `s<index>` for servers and `v<index>` for VMs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use er_sentinel_core::detect::{Classification, Verdict};
use er_sentinel_core::eval::{ConfusionCounts, DetectionScore, SweepMetric, SweepMode, SweepRow};
use er_sentinel_core::sim::{DropReason, GroundTruth, TraceEvent, TraceLog};
use er_sentinel_core::{
    Direction, EncounterRecord, EntryKind, Keyring, MessageEntry, MessageId, NodeId, NodeKey, Signature, SimTime,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryLine {
    pub m: u64,
    pub dst: NodeId,
    pub dir: Direction,
    pub kind: EntryKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErLine {
    pub t_ms: u64,
    pub local: NodeId,
    pub peer: NodeId,
    pub seq: u64,
    pub entries: Vec<EntryLine>,
    pub sig_local: String,
    pub sig_peer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReasonText {
    Malicious,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceLine {
    MsgCreated { t_ms: u64, id: u64, src: NodeId, dst: NodeId, ttl_ms: u64 },
    Encounter { t_ms: u64, a: NodeId, b: NodeId },
    Er(ErLine),
    MsgDelivered { t_ms: u64, id: u64, node: NodeId },
    MsgDropped { t_ms: u64, id: u64, node: NodeId, reason: DropReasonText },
}

impl From<&EncounterRecord> for ErLine {
    fn from(er: &EncounterRecord) -> Self {
        ErLine {
            t_ms: er.timestamp.as_millis(),
            local: er.local_node,
            peer: er.peer_node,
            seq: er.local_seq,
            entries: er
                .entries
                .iter()
                .map(|e| EntryLine { m: e.message_id.0, dst: e.destination, dir: e.direction, kind: e.kind })
                .collect(),
            sig_local: hex::encode(er.sig_local.0),
            sig_peer: hex::encode(er.sig_peer.0),
        }
    }
}

fn parse_signature(s: &str) -> Result<Signature, String> {
    let mut out = [0u8; 32];
    hex::decode_to_slice(s, &mut out).map_err(|e| format!("bad signature {s:?}: {e}"))?;
    Ok(Signature(out))
}

impl ErLine {
    pub fn to_record(&self) -> Result<EncounterRecord, String> {
        let entries = self
            .entries
            .iter()
            .map(|e| MessageEntry { message_id: MessageId(e.m), destination: e.dst, direction: e.dir, kind: e.kind })
            .collect();
        let mut er =
            EncounterRecord::unsigned(self.local, self.peer, SimTime::from_millis(self.t_ms), self.seq, entries);
        er.sig_local = parse_signature(&self.sig_local)?;
        er.sig_peer = parse_signature(&self.sig_peer)?;
        Ok(er)
    }
}

/// Trace lines in event order. Records follow their encounter line; the
/// simulator's forged flag is not written.
pub fn trace_lines(log: &TraceLog) -> impl Iterator<Item = TraceLine> + '_ {
    log.events.iter().flat_map(move |e| {
        let lines: Vec<TraceLine> = match e {
            TraceEvent::MessageCreated { message } => vec![TraceLine::MsgCreated {
                t_ms: message.created_at.as_millis(),
                id: message.id.0,
                src: message.source,
                dst: message.destination,
                ttl_ms: message.ttl.as_millis(),
            }],
            TraceEvent::Encounter { at, a, b, records } => vec![
                TraceLine::Encounter { t_ms: at.as_millis(), a: *a, b: *b },
                TraceLine::Er(ErLine::from(&log.ers[records[0]])),
                TraceLine::Er(ErLine::from(&log.ers[records[1]])),
            ],
            TraceEvent::MessageDelivered { at, message, node } => {
                vec![TraceLine::MsgDelivered { t_ms: at.as_millis(), id: message.0, node: *node }]
            }
            TraceEvent::MessageDropped { at, message, node, reason } => vec![TraceLine::MsgDropped {
                t_ms: at.as_millis(),
                id: message.0,
                node: *node,
                reason: match reason {
                    DropReason::Malicious => DropReasonText::Malicious,
                    DropReason::Expired => DropReasonText::Expired,
                },
            }],
        };
        lines
    })
}

pub fn write_trace<W: Write>(log: &TraceLog, mut w: W) -> std::io::Result<()> {
    for line in trace_lines(log) {
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Encounter records of a trace file, in file order. Every line must parse.
pub fn read_trace(path: &Path) -> Result<Vec<EncounterRecord>, CliError> {
    let file = File::open(path).map_err(CliError::io(path))?;
    let mut ers = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(CliError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| CliError::Parse { path: path.to_path_buf(), line: i + 1, message };
        let parsed: TraceLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if let TraceLine::Er(er) = parsed {
            ers.push(er.to_record().map_err(parse_err)?);
        }
    }
    Ok(ers)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(CliError::io(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(std::io::Error::from)
        .and_then(|_| w.write_all(b"\n"))
        .and_then(|_| w.flush())
        .map_err(CliError::io(path))
}

pub fn write_labels(path: &Path, labels: &BTreeMap<NodeId, GroundTruth>) -> Result<(), CliError> {
    let map: BTreeMap<NodeId, &str> = labels.iter().map(|(n, l)| (*n, l.as_str())).collect();
    write_json(path, &map)
}

pub fn read_labels(path: &Path) -> Result<BTreeMap<NodeId, GroundTruth>, CliError> {
    let raw: BTreeMap<NodeId, String> = read_json(path)?;
    raw.into_iter()
        .map(|(n, l)| match GroundTruth::parse(&l) {
            Some(g) => Ok((n, g)),
            None => Err(CliError::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("unknown label {l:?} for {n}"),
            }),
        })
        .collect()
}

pub fn write_keyring(path: &Path, keyring: &Keyring) -> Result<(), CliError> {
    let map: BTreeMap<NodeId, String> = keyring.iter().map(|(n, k)| (n, hex::encode(k.0))).collect();
    write_json(path, &map)
}

pub fn read_keyring(path: &Path) -> Result<Keyring, CliError> {
    let raw: BTreeMap<NodeId, String> = read_json(path)?;
    let mut ring = Keyring::new();
    for (n, k) in raw {
        let mut key = [0u8; 32];
        hex::decode_to_slice(&k, &mut key).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("bad key for {n}: {e}"),
        })?;
        ring.insert(n, NodeKey(key));
    }
    Ok(ring)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictLine {
    pub node: NodeId,
    pub window_id: u64,
    pub classification: String,
    pub rr: f64,
    pub sr: f64,
    pub reputation: f64,
    pub blacklisted: bool,
}

impl From<&Verdict> for VerdictLine {
    fn from(v: &Verdict) -> Self {
        VerdictLine {
            node: v.node,
            window_id: v.window_id,
            classification: v.classification.as_str().to_string(),
            rr: v.rr,
            sr: v.sr,
            reputation: v.reputation,
            blacklisted: v.blacklisted,
        }
    }
}

pub fn write_verdicts(path: &Path, verdicts: &[Verdict]) -> Result<(), CliError> {
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut w = BufWriter::new(file);
    for v in verdicts {
        serde_json::to_writer(&mut w, &VerdictLine::from(v)).map_err(|e| CliError::io(path)(e.into()))?;
        w.write_all(b"\n").map_err(CliError::io(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn read_verdicts(path: &Path) -> Result<Vec<Verdict>, CliError> {
    let file = File::open(path).map_err(CliError::io(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(CliError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| CliError::Parse { path: path.to_path_buf(), line: i + 1, message };
        let v: VerdictLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let classification = Classification::parse(&v.classification)
            .ok_or_else(|| parse_err(format!("unknown classification {:?}", v.classification)))?;
        out.push(Verdict {
            node: v.node,
            window_id: v.window_id,
            classification,
            rr: v.rr,
            sr: v.sr,
            reputation: v.reputation,
            blacklisted: v.blacklisted,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFile {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

impl ScoreFile {
    pub fn new(c: &ConfusionCounts, s: &DetectionScore) -> Self {
        ScoreFile {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            tn: c.tn,
            precision: s.precision,
            recall: s.recall,
            f_score: s.f_score,
        }
    }
}

pub fn write_score(path: &Path, score: &ScoreFile) -> Result<(), CliError> {
    write_json(path, score)
}

pub const SWEEP_HEADER: &str = "threshold,precision,recall,f_score";

/// Rows sorted by ascending threshold.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in &sorted {
        out.push_str(&format!(
            "{},{:.3},{:.3},{:.3}\n",
            r.threshold, r.score.precision, r.score.recall, r.score.f_score
        ));
    }
    out
}

pub fn sweep_file_name(metric: SweepMetric, mode: SweepMode) -> String {
    format!("sweep_{}_{}.csv", metric.as_str(), mode.as_str())
}

pub const SUMMARY_HEADER: &str = "metric,mode,threshold,precision,recall,f_score";

pub fn summary_csv(best: &[(SweepMetric, SweepMode, SweepRow)]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (metric, mode, r) in best {
        out.push_str(&format!(
            "{},{},{},{:.3},{:.3},{:.3}\n",
            metric.as_str(),
            mode.as_str(),
            r.threshold,
            r.score.precision,
            r.score.recall,
            r.score.f_score
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use er_sentinel_core::sim::{self, SimConfig};

    #[test]
    fn trace_round_trip_keeps_records() {
        let cfg =
            SimConfig { n_servers: 1, n_vms: 4, duration: SimTime::from_secs(1800), seed: 3, ..SimConfig::default() };
        let log = sim::run(&cfg).unwrap();
        let mut buf = Vec::new();
        write_trace(&log, &mut buf).unwrap();
        let dir = std::env::temp_dir().join(format!("ers-formats-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("trace.jsonl");
        std::fs::write(&path, &buf).unwrap();
        assert_eq!(read_trace(&path).unwrap(), log.detector_view());

        let text = String::from_utf8(buf).unwrap();
        let first_er = text.lines().find(|l| l.contains("\"type\":\"er\"")).unwrap();
        assert!(first_er.starts_with("{\"type\":\"er\",\"t_ms\":"));
        assert!(!text.contains("forged"));
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn malformed_line_names_line_number() {
        let dir = std::env::temp_dir().join(format!("ers-formats-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("trace.jsonl");
        std::fs::write(
            &path,
            "{\"type\":\"encounter\",\"t_ms\":1,\"a\":\"v1\",\"b\":\"v2\"}\n{\"type\":\"er\",\"t_ms\":\n",
        )
        .unwrap();
        match read_trace(&path) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn csv_rows_sorted_and_rounded() {
        let row = |t: f64, f: f64| SweepRow {
            threshold: t,
            counts: ConfusionCounts::default(),
            score: DetectionScore { precision: 0.78125, recall: 0.625, f_score: f },
        };
        let csv = sweep_csv(&[row(0.5875, 0.6944), row(0.4375, 0.5)]);
        assert_eq!(csv, "threshold,precision,recall,f_score\n0.4375,0.781,0.625,0.500\n0.5875,0.781,0.625,0.694\n");
    }
}
