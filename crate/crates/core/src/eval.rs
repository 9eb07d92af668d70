//! Node-level scoring of detection verdicts against ground truth, and
//! threshold sweeps.
//!
//! A node counts as positive when its final verdict has it blacklisted and as
//! malicious when its label is anything but honest.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::detect::{DetectionConfig, Detector, IndividualRule, Verdict};
use crate::error::ConfigError;
use crate::model::NodeId;
use crate::sim::GroundTruth;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn score(&self) -> DetectionScore {
        let p = precision(self);
        let r = recall(self);
        DetectionScore { precision: p, recall: r, f_score: f_score(p, r) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionScore {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalError {
    MissingLabel(NodeId),
    /// A labelled node that has no verdict.
    MissingVerdict(NodeId),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::MissingLabel(n) => write!(f, "node {n} has a verdict but no label"),
            EvalError::MissingVerdict(n) => write!(f, "node {n} has a label but no verdict"),
        }
    }
}

impl core::error::Error for EvalError {}

/// Tallies the last-window verdict of each node. The verdict and label node
/// sets must be identical.
pub fn confusion<'a, I>(verdicts: I, labels: &BTreeMap<NodeId, GroundTruth>) -> Result<ConfusionCounts, EvalError>
where
    I: IntoIterator<Item = &'a Verdict>,
{
    let mut last: BTreeMap<NodeId, &Verdict> = BTreeMap::new();
    for v in verdicts {
        match last.get(&v.node) {
            Some(prev) if prev.window_id > v.window_id => {}
            _ => {
                last.insert(v.node, v);
            }
        }
    }
    let mut c = ConfusionCounts::default();
    for (node, v) in &last {
        let label = labels.get(node).ok_or(EvalError::MissingLabel(*node))?;
        match (v.blacklisted, label.is_malicious()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    if let Some(node) = labels.keys().find(|n| !last.contains_key(n)) {
        return Err(EvalError::MissingVerdict(*node));
    }
    Ok(c)
}

/// With nothing flagged this is 1.0 only if nothing was missed either.
pub fn precision(c: &ConfusionCounts) -> f64 {
    if c.tp + c.fp > 0 {
        c.tp as f64 / (c.tp + c.fp) as f64
    } else if c.fn_ == 0 {
        1.0
    } else {
        0.0
    }
}

/// 1.0 when there is nothing to find.
pub fn recall(c: &ConfusionCounts) -> f64 {
    if c.tp + c.fn_ > 0 {
        c.tp as f64 / (c.tp + c.fn_) as f64
    } else {
        1.0
    }
}

pub fn f_score(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SweepMetric {
    RelayedRatio,
    SelfForwarding,
}

impl SweepMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepMetric::RelayedRatio => "rr",
            SweepMetric::SelfForwarding => "sr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SweepMode {
    /// Audits and raw ratios only.
    Individual,
    /// Full pipeline including the messages-per-encounter screen.
    Collusion,
}

impl SweepMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepMode::Individual => "individual",
            SweepMode::Collusion => "collusion",
        }
    }
}

/// Reference threshold lists for each metric and mode.
pub fn reference_thresholds(metric: SweepMetric, mode: SweepMode) -> &'static [f64] {
    match (metric, mode) {
        (SweepMetric::RelayedRatio, SweepMode::Individual) => &[0.4375, 0.5375, 0.5875],
        (SweepMetric::SelfForwarding, SweepMode::Individual) => &[0.56, 0.63, 0.69],
        (SweepMetric::RelayedRatio, SweepMode::Collusion) => &[0.47, 0.52, 0.66],
        (SweepMetric::SelfForwarding, SweepMode::Collusion) => &[0.59, 0.65, 0.71],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub metric: SweepMetric,
    pub mode: SweepMode,
    pub thresholds: Vec<f64>,
}

impl SweepSpec {
    pub fn reference(metric: SweepMetric, mode: SweepMode) -> Self {
        Self { metric, mode, thresholds: reference_thresholds(metric, mode).to_vec() }
    }

    /// All four metric/mode combinations with their reference lists.
    pub fn reference_set() -> Vec<Self> {
        let mut out = Vec::with_capacity(4);
        for mode in [SweepMode::Individual, SweepMode::Collusion] {
            for metric in [SweepMetric::RelayedRatio, SweepMetric::SelfForwarding] {
                out.push(Self::reference(metric, mode));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.thresholds.is_empty() {
            return Err(ConfigError::new("sweep.thresholds", "must not be empty"));
        }
        if self.thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(ConfigError::new("sweep.thresholds", "every threshold must be in (0, 1]"));
        }
        Ok(())
    }

    /// `base` with the swept threshold set and everything else unchanged
    /// apart from the rule and mode this sweep implies.
    pub fn config_for(&self, base: &DetectionConfig, threshold: f64) -> DetectionConfig {
        let mut cfg = base.clone();
        match self.metric {
            SweepMetric::RelayedRatio => {
                cfg.rr_threshold = threshold;
                cfg.rule = IndividualRule::RelayedRatioOnly;
            }
            SweepMetric::SelfForwarding => {
                cfg.sr_threshold = threshold;
                cfg.rule = IndividualRule::SelfForwardingOnly;
            }
        }
        cfg.collusion_phase = self.mode == SweepMode::Collusion;
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub score: DetectionScore,
}

pub fn sweep_row(
    detector: &Detector,
    labels: &BTreeMap<NodeId, GroundTruth>,
    base: &DetectionConfig,
    spec: &SweepSpec,
    threshold: f64,
) -> Result<SweepRow, EvalError> {
    let report = detector.run(&spec.config_for(base, threshold));
    let counts = confusion(&report.verdicts, labels)?;
    Ok(SweepRow { threshold, counts, score: counts.score() })
}

/// One detection run per threshold, rows in the order of `spec.thresholds`.
pub fn threshold_sweep(
    detector: &Detector,
    labels: &BTreeMap<NodeId, GroundTruth>,
    base: &DetectionConfig,
    spec: &SweepSpec,
) -> Result<Vec<SweepRow>, EvalError> {
    spec.thresholds.iter().map(|&t| sweep_row(detector, labels, base, spec, t)).collect()
}

/// Highest F-score; ties go to the lowest threshold.
pub fn best_row(rows: &[SweepRow]) -> Option<&SweepRow> {
    rows.iter().reduce(|best, r| {
        let better = r.score.f_score > best.score.f_score
            || (r.score.f_score == best.score.f_score && r.threshold < best.threshold);
        if better {
            r
        } else {
            best
        }
    })
}
