use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use er_sentinel_core::detect::{DetectionConfig, Detector};
use er_sentinel_core::eval::{best_row, confusion, sweep_row, SweepMetric, SweepMode, SweepRow, SweepSpec};
use er_sentinel_core::sim::{self, SimConfig, TraceSummary};
use rayon::prelude::*;

use crate::error::CliError;
use crate::formats::{
    read_keyring, read_labels, read_trace, read_verdicts, summary_csv, sweep_csv, sweep_file_name, write_keyring,
    write_labels, write_score, write_trace, write_verdicts, ScoreFile,
};

pub const TRACE_FILE: &str = "trace.jsonl";
pub const LABELS_FILE: &str = "labels.json";
pub const KEYRING_FILE: &str = "keyring.json";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";
pub const SCORE_FILE: &str = "score.json";
pub const SUMMARY_FILE: &str = "summary.csv";

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

/// Runs the simulator and writes the trace, labels and keyring into `out`.
pub fn simulate(sim: &SimConfig, out: &Path) -> Result<TraceSummary, CliError> {
    let log = sim::run(sim)?;
    ensure_dir(out)?;
    let trace = out.join(TRACE_FILE);
    let file = File::create(&trace).map_err(CliError::io(&trace))?;
    write_trace(&log, BufWriter::new(file)).map_err(CliError::io(&trace))?;
    write_labels(&out.join(LABELS_FILE), &log.labels)?;
    write_keyring(&out.join(KEYRING_FILE), &log.keyring)?;
    Ok(log.summary())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectSummary {
    pub nodes: usize,
    pub windows: usize,
    pub blacklisted: usize,
}

/// Detection over a trace; writes every node-window verdict to `verdicts`.
pub fn detect(trace: &Path, keyring: &Path, det: &DetectionConfig, verdicts: &Path) -> Result<DetectSummary, CliError> {
    det.validate()?;
    let records = read_trace(trace)?;
    let keys = read_keyring(keyring)?;
    let report = Detector::new(records, &keys).run(det);
    if let Some(dir) = verdicts.parent() {
        ensure_dir(dir)?;
    }
    write_verdicts(verdicts, &report.verdicts)?;
    let finals = report.final_verdicts();
    Ok(DetectSummary {
        nodes: finals.len(),
        windows: finals.iter().map(|v| v.window_id as usize + 1).max().unwrap_or(0),
        blacklisted: finals.iter().filter(|v| v.blacklisted).count(),
    })
}

/// Scores the final verdict of each node against the labels.
pub fn evaluate(verdicts: &Path, labels: &Path, score_out: &Path) -> Result<ScoreFile, CliError> {
    let verdicts = read_verdicts(verdicts)?;
    let labels = read_labels(labels)?;
    let counts = confusion(&verdicts, &labels)?;
    let score = ScoreFile::new(&counts, &counts.score());
    if let Some(dir) = score_out.parent() {
        ensure_dir(dir)?;
    }
    write_score(score_out, &score)?;
    Ok(score)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub metric: SweepMetric,
    pub mode: SweepMode,
    /// In the order of the sweep's threshold list.
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn best(&self) -> Option<&SweepRow> {
        best_row(&self.rows)
    }
}

/// One detection run per (spec, threshold), spread over `jobs` threads.
/// Results do not depend on `jobs`.
pub fn sweep(
    trace: &Path,
    keyring: &Path,
    labels: &Path,
    det: &DetectionConfig,
    specs: &[SweepSpec],
    jobs: usize,
    out: &Path,
) -> Result<Vec<SweepResult>, CliError> {
    det.validate()?;
    for s in specs {
        s.validate()?;
    }
    let labels = read_labels(labels)?;
    let detector = Detector::new(read_trace(trace)?, &read_keyring(keyring)?);

    let tasks: Vec<(usize, f64)> =
        specs.iter().enumerate().flat_map(|(i, s)| s.thresholds.iter().map(move |&t| (i, t))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} worker threads: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        tasks.par_iter().map(|&(i, t)| sweep_row(&detector, &labels, det, &specs[i], t)).collect::<Result<_, _>>()
    })?;

    let mut rows = rows.into_iter();
    let results: Vec<SweepResult> = specs
        .iter()
        .map(|s| SweepResult { metric: s.metric, mode: s.mode, rows: rows.by_ref().take(s.thresholds.len()).collect() })
        .collect();

    ensure_dir(out)?;
    for r in &results {
        let path = out.join(sweep_file_name(r.metric, r.mode));
        fs::write(&path, sweep_csv(&r.rows)).map_err(CliError::io(&path))?;
    }
    let best: Vec<_> = results.iter().filter_map(|r| r.best().map(|b| (r.metric, r.mode, *b))).collect();
    let path = out.join(SUMMARY_FILE);
    fs::write(&path, summary_csv(&best)).map_err(CliError::io(&path))?;
    Ok(results)
}
