//! Throughput instrumentation and the decision functions for the five
//! waste-management rules.
//!
//! Throughput is useful work over latency, `T = C / L`. The rule predicates
//! compare throughputs of the alternatives each rule chooses between.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expandlist::DEFAULT_COMPACTION_THRESHOLD;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("latency must be positive")]
    ZeroLatency,
    #[error("argument outside the function's domain: {0}")]
    DomainError(&'static str),
}

/// `c / l`.
pub fn little_throughput(c: f64, l: f64) -> Result<f64, RuleError> {
    if !(l > 0.0) {
        return Err(RuleError::ZeroLatency);
    }
    Ok(c / l)
}

/// Filtering raises the useful fraction of work from `alpha` to `beta` at an
/// added latency `ell` over the base latency `l`. Worth it iff
/// `(l + ell) / l < beta / alpha`.
pub fn rule2_filter_beneficial(alpha: f64, beta: f64, l: f64, ell: f64) -> Result<bool, RuleError> {
    if !(alpha > 0.0 && alpha < beta && beta <= 1.0) {
        return Err(RuleError::DomainError("need 0 < alpha < beta <= 1"));
    }
    if !(l > 0.0) || !(ell >= 0.0) {
        return Err(RuleError::DomainError("need l > 0 and ell >= 0"));
    }
    Ok((l + ell) / l < beta / alpha)
}

/// Stopping once a fraction `1 - gamma` of the work is done saves latency
/// `ell` out of `l`. Worth it iff `ell > gamma * l`.
pub fn rule3_early_stop_beneficial(gamma: f64, l: f64, ell: f64) -> Result<bool, RuleError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(RuleError::DomainError("need 0 < gamma < 1"));
    }
    if !(l > 0.0) || !(ell >= 0.0 && ell < l) {
        return Err(RuleError::DomainError("need l > 0 and 0 <= ell < l"));
    }
    Ok(ell > gamma * l)
}

/// Running two work sets `(c_i, l_i)` and `(c_j, l_j)` as one merged set
/// `(c_m, l_m)` is worth it iff `c_m / l_m > (c_i + c_j) / (l_i + l_j)`.
pub fn rule4_merge_beneficial(c_i: f64, c_j: f64, l_i: f64, l_j: f64, c_m: f64, l_m: f64) -> Result<bool, RuleError> {
    if [c_i, c_j, l_i, l_j, c_m, l_m].iter().any(|&v| !(v > 0.0)) {
        return Err(RuleError::DomainError("all arguments must be positive"));
    }
    Ok(c_m / l_m > (c_i + c_j) / (l_i + l_j))
}

/// Splitting off work that would hold a batch open and carrying it into the
/// next batch. See [`crate::expandlist::carry_forward_beneficial`].
pub fn rule5_split_beneficial(remaining: f64, batch_latency: f64, gamma: f64) -> bool {
    crate::expandlist::carry_forward_beneficial(remaining, batch_latency, gamma)
}

pub const DEFAULT_GAMMA: f64 = 0.2;
pub const DEFAULT_RATE_DROP: f64 = 0.25;

/// Pure form of the completion monitor's stop test.
pub fn rule3_should_stop(completed: usize, total: usize, rate: f64, peak_rate: f64, gamma: f64, drop: f64) -> bool {
    total > 0 && completed as f64 >= (1.0 - gamma) * total as f64 && rate < drop * peak_rate
}

/// Watches completion timestamps of a fixed-size work set and signals when
/// the tail is no longer worth waiting for.
#[derive(Clone, Debug)]
pub struct CompletionMonitor {
    total: usize,
    gamma: f64,
    drop: f64,
    window: usize,
    stamps: Vec<f64>,
    peak: f64,
}

impl CompletionMonitor {
    pub fn new(total: usize, gamma: f64, drop: f64, window: usize) -> Self {
        CompletionMonitor { total, gamma, drop, window: window.max(2), stamps: Vec::with_capacity(total), peak: 0.0 }
    }

    pub fn completed(&self) -> usize {
        self.stamps.len()
    }

    /// Records a completion at time `t` (nondecreasing) and returns whether
    /// to stop.
    pub fn record(&mut self, t: f64) -> bool {
        self.stamps.push(t);
        let rate = self.trailing_rate();
        if rate.is_finite() {
            self.peak = self.peak.max(rate);
        }
        rule3_should_stop(self.stamps.len(), self.total, rate, self.peak, self.gamma, self.drop)
    }

    fn trailing_rate(&self) -> f64 {
        let n = self.stamps.len();
        if n < self.window {
            return f64::NAN;
        }
        let span = self.stamps[n - 1] - self.stamps[n - self.window];
        if span <= 0.0 {
            f64::INFINITY
        } else {
            (self.window - 1) as f64 / span
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleFlags {
    /// Windows below this size are not compacted.
    pub rule1_compaction_threshold: usize,
    pub rule2_filtering_enabled: bool,
    pub rule3_bounded_work: bool,
    pub rule3_gamma: f64,
    pub rule4_unified_collection: bool,
    pub rule5_split_lengthy_work: bool,
}

impl Default for RuleFlags {
    fn default() -> Self {
        RuleFlags {
            rule1_compaction_threshold: DEFAULT_COMPACTION_THRESHOLD,
            rule2_filtering_enabled: true,
            rule3_bounded_work: true,
            rule3_gamma: DEFAULT_GAMMA,
            rule4_unified_collection: true,
            rule5_split_lengthy_work: true,
        }
    }
}

impl RuleFlags {
    /// Turns off rule `k` (1..=5).
    pub fn without(mut self, k: u8) -> Self {
        match k {
            1 => self.rule1_compaction_threshold = 0,
            2 => self.rule2_filtering_enabled = false,
            3 => self.rule3_bounded_work = false,
            4 => self.rule4_unified_collection = false,
            5 => self.rule5_split_lengthy_work = false,
            _ => {}
        }
        self
    }
}

/// Per-phase latencies of one batch, in nanoseconds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub collect_ns: u64,
    pub split_points_ns: u64,
    pub locate_ns: u64,
    pub claim_ns: u64,
    pub cavity_ns: u64,
    pub insert_ns: u64,
    pub flip_flop_ns: u64,
}

impl PhaseTimes {
    pub fn total_ns(&self) -> u64 {
        self.collect_ns
            + self.split_points_ns
            + self.locate_ns
            + self.claim_ns
            + self.cavity_ns
            + self.insert_ns
            + self.flip_flop_ns
    }

    pub fn add(&mut self, other: &PhaseTimes) {
        self.collect_ns += other.collect_ns;
        self.split_points_ns += other.split_points_ns;
        self.locate_ns += other.locate_ns;
        self.claim_ns += other.claim_ns;
        self.cavity_ns += other.cavity_ns;
        self.insert_ns += other.insert_ns;
        self.flip_flop_ns += other.flip_flop_ns;
    }
}

pub(crate) fn nanos(d: Duration) -> u64 {
    d.as_nanos().min(u64::MAX as u128) as u64
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchMetrics {
    pub batch: u32,
    /// Candidates collected for this batch.
    pub attempted: u64,
    /// Steiner points inserted and still present when the batch ends.
    pub useful: u64,
    /// Useful work completed (`C`).
    pub concurrency: u64,
    /// Batch wall time in seconds (`L`).
    pub latency_s: f64,
    /// `C / L`, zero for an empty batch.
    pub throughput: f64,
    /// `1 - useful / attempted`, zero for an empty batch.
    pub waste_fraction: f64,
    #[serde(flatten)]
    pub phases: PhaseTimes,
    pub subseg_candidates: u64,
    pub triangle_candidates: u64,
    pub filtered_claim: u64,
    pub filtered_cavity: u64,
    pub deferred: u64,
    pub inserted: u64,
    pub removed: u64,
    pub flips: u64,
    pub marked_encroached: u64,
    /// Bad triangles given up on in this batch.
    pub abandoned: u64,
    /// Rule 2 inequality evaluated on this batch's counts, when defined.
    pub rule2_beneficial: Option<bool>,
}

/// Builds a batch record; arithmetic identities hold by construction.
pub fn record_batch(batch: u32, phases: PhaseTimes, attempted: u64, useful: u64) -> BatchMetrics {
    let latency_s = phases.total_ns() as f64 * 1e-9;
    let throughput = little_throughput(useful as f64, latency_s).unwrap_or(0.0);
    let waste_fraction = if attempted == 0 { 0.0 } else { 1.0 - (useful.min(attempted) as f64 / attempted as f64) };
    BatchMetrics {
        batch,
        attempted,
        useful,
        concurrency: useful,
        latency_s,
        throughput,
        waste_fraction,
        phases,
        ..BatchMetrics::default()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityStats {
    pub points: usize,
    pub steiner_points: usize,
    pub triangles: usize,
    pub bad_triangles: usize,
    pub bad_area_percent: f64,
    pub min_angle_deg: f64,
    pub max_edge: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    #[default]
    Converged,
    IterationCap,
    MemoryCap,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub batches: Vec<BatchMetrics>,
    pub quality: QualityStats,
    pub stop: StopReason,
    pub wall_s: f64,
    pub rules: RuleFlags,
}

impl RunReport {
    pub fn total_phases(&self) -> PhaseTimes {
        let mut p = PhaseTimes::default();
        for b in &self.batches {
            p.add(&b.phases);
        }
        p
    }
}

#[derive(Serialize)]
struct MetricsLine<'a> {
    #[serde(flatten)]
    batch: &'a BatchMetrics,
    #[serde(flatten)]
    rules: &'a RuleFlags,
}

/// One JSON object per line, one line per batch.
pub fn emit_metrics(report: &RunReport) -> String {
    let mut out = String::new();
    for b in &report.batches {
        out.push_str(&serde_json::to_string(&MetricsLine { batch: b, rules: &report.rules }).expect("metrics serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn throughput_examples() {
        assert_eq!(little_throughput(100.0, 4.0), Ok(25.0));
        assert_eq!(little_throughput(0.0, 1.0), Ok(0.0));
        assert_eq!(little_throughput(7.0, 0.0), Err(RuleError::ZeroLatency));
    }

    #[test]
    fn rule2_examples() {
        assert_eq!(rule2_filter_beneficial(0.5, 0.9, 10.0, 2.0), Ok(true));
        assert_eq!(rule2_filter_beneficial(0.5, 0.6, 10.0, 3.0), Ok(false));
        assert_eq!(rule2_filter_beneficial(0.3, 0.31, 10.0, 0.0), Ok(true));
        assert!(rule2_filter_beneficial(0.6, 0.5, 10.0, 1.0).is_err());
        assert!(rule2_filter_beneficial(0.5, 1.1, 10.0, 1.0).is_err());
        assert!(rule2_filter_beneficial(0.5, 0.9, 0.0, 1.0).is_err());
        assert!(rule2_filter_beneficial(0.5, 0.9, 1.0, -1.0).is_err());
        // Break-even: (l + ell) / l == beta / alpha is not beneficial.
        assert_eq!(rule2_filter_beneficial(0.5, 0.75, 2.0, 1.0), Ok(false));
    }

    #[test]
    fn rule3_examples() {
        assert_eq!(rule3_early_stop_beneficial(0.2, 10.0, 3.0), Ok(true));
        assert_eq!(rule3_early_stop_beneficial(0.2, 10.0, 1.0), Ok(false));
        assert_eq!(rule3_early_stop_beneficial(0.2, 10.0, 2.0), Ok(false));
        assert!(rule3_early_stop_beneficial(1.0, 10.0, 2.0).is_err());
        assert!(rule3_early_stop_beneficial(0.2, 10.0, 10.0).is_err());
    }

    #[test]
    fn rule4_examples() {
        assert_eq!(rule4_merge_beneficial(100.0, 100.0, 5.0, 4.0, 200.0, 5.0), Ok(true));
        assert_eq!(rule4_merge_beneficial(100.0, 100.0, 5.0, 4.0, 200.0, 20.0), Ok(false));
        assert_eq!(rule4_merge_beneficial(100.0, 50.0, 5.0, 4.0, 100.0, 5.0), Ok(true));
        assert!(rule4_merge_beneficial(0.0, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn monitor_examples() {
        // Pure form.
        assert!(rule3_should_stop(80, 100, 1.0, 10.0, 0.2, 0.25));
        assert!(!rule3_should_stop(50, 100, 10.0, 10.0, 0.2, 0.25));
        assert!(!rule3_should_stop(95, 100, 10.0, 10.0, 0.2, 0.25));

        // 80 completions at a steady 100/s, then a straggler 1 s later.
        let mut m = CompletionMonitor::new(100, 0.2, 0.25, 4);
        let mut stopped = false;
        for k in 0..79 {
            stopped |= m.record(k as f64 * 0.01);
        }
        assert!(!stopped);
        assert!(m.record(1.0));

        // Steady rate all the way: never stops.
        let mut m = CompletionMonitor::new(100, 0.2, 0.25, 4);
        assert!((0..100).all(|k| !m.record(k as f64 * 0.01)));
    }

    #[test]
    fn batch_record_identities() {
        let ph = PhaseTimes { collect_ns: 2_000_000_000, ..PhaseTimes::default() };
        let b = record_batch(1, ph, 100, 80);
        assert!((b.waste_fraction - 0.2).abs() < 1e-12);
        let b = record_batch(1, PhaseTimes { insert_ns: 2_000_000_000, ..PhaseTimes::default() }, 50, 50);
        assert_eq!(b.throughput, 25.0);
        assert_eq!(b.throughput, b.concurrency as f64 / b.latency_s);
        let e = record_batch(3, PhaseTimes::default(), 0, 0);
        assert_eq!((e.throughput, e.waste_fraction, e.concurrency), (0.0, 0.0, 0));
    }

    #[test]
    fn metrics_are_json_lines() {
        let report = RunReport {
            batches: vec![record_batch(1, PhaseTimes::default(), 3, 2), record_batch(2, PhaseTimes::default(), 1, 1)],
            ..RunReport::default()
        };
        let text = emit_metrics(&report);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(v["batch"], 1);
        assert_eq!(v["attempted"], 3);
        assert_eq!(v["rule2_filtering_enabled"], true);
        assert!(v.get("collect_ns").is_some());
    }

    #[test]
    fn without_flags() {
        let f = RuleFlags::default();
        assert_eq!(f.clone().without(1).rule1_compaction_threshold, 0);
        assert!(!f.clone().without(2).rule2_filtering_enabled);
        assert!(!f.clone().without(3).rule3_bounded_work);
        assert!(!f.clone().without(4).rule4_unified_collection);
        assert!(!f.without(5).rule5_split_lengthy_work);
    }
}
