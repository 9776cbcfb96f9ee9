//! Run records, aggregate statistics, and the CSV emitter.
//!
//! Every formatting path here is deterministic: integer math, sorted maps,
//! and fixed column order, so identical runs serialize byte-identically.

use crate::digest::Digest;
use crate::TimeMs;
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Terminal state of one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskOutcome {
    /// Tally verified and the value reached the subscriber.
    Delivered,
    /// Tally failed; a rejection notice went out instead of a value.
    Rejected,
}

#[derive(Debug, Clone)]
pub struct TaskRecord {
    pub task_id: Digest,
    pub label: &'static str,
    pub publish_t: TimeMs,
    pub deliver_t: Option<TimeMs>,
    pub outcome: TaskOutcome,
    pub expected: u64,
    pub delivered_value: Option<u64>,
}

impl TaskRecord {
    pub fn e2e_ms(&self) -> Option<u64> {
        self.deliver_t.map(|d| d - self.publish_t)
    }

    /// True unless a value was delivered and disagrees with the oracle.
    pub fn oracle_ok(&self) -> bool {
        self.delivered_value.map(|v| v == self.expected).unwrap_or(true)
    }
}

/// Everything one simulation run produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: u8,
    pub mode_name: &'static str,
    pub period_ms: u64,
    pub run: u32,
    pub records: Vec<TaskRecord>,
    /// Plaintext observed where only ciphertext may travel (fortified mode).
    pub taint_violations: u64,
    /// Plaintext publishes counted in baseline mode, where they are legal.
    pub plain_exposures: u64,
    /// Publishes deferred because the publisher was out of credits.
    pub credit_rejections: u64,
    /// Ciphertexts produced by publishers (zero in baseline mode).
    pub encryptions: u64,
    pub counters: BTreeMap<String, u64>,
    pub blocks: u64,
    pub ledger_dump: String,
    /// Per-manager event lines, in manager order.
    pub ppsm_logs: Vec<String>,
}

impl RunReport {
    pub fn delivered_e2e(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self.records.iter().filter_map(|r| r.e2e_ms()).collect();
        v.sort_unstable();
        v
    }

    pub fn mean_e2e_ms(&self) -> Option<f64> {
        let v = self.delivered_e2e();
        if v.is_empty() {
            return None;
        }
        Some(v.iter().sum::<u64>() as f64 / v.len() as f64)
    }

    /// Nearest-rank percentile over delivered tasks.
    pub fn percentile_e2e_ms(&self, p: u32) -> Option<u64> {
        let v = self.delivered_e2e();
        if v.is_empty() {
            return None;
        }
        let rank = (v.len() as u64 * u64::from(p)).div_ceil(100).max(1) as usize;
        Some(v[rank - 1])
    }

    pub fn rejection_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let rejected = self
            .records
            .iter()
            .filter(|r| r.outcome == TaskOutcome::Rejected)
            .count();
        rejected as f64 / self.records.len() as f64
    }

    pub fn all_oracle_ok(&self) -> bool {
        self.records.iter().all(TaskRecord::oracle_ok)
    }

    pub fn any_rejected(&self) -> bool {
        self.records
            .iter()
            .any(|r| r.outcome == TaskOutcome::Rejected)
    }

    /// Human-oriented one-run summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario {} mode={} period={}s run={}: {} tasks, {} delivered, {} rejected",
            self.scenario,
            self.mode_name,
            format_period_s(self.period_ms),
            self.run,
            self.records.len(),
            self.records.iter().filter(|r| r.e2e_ms().is_some()).count(),
            self.records
                .iter()
                .filter(|r| r.outcome == TaskOutcome::Rejected)
                .count(),
        );
        if let Some(mean) = self.mean_e2e_ms() {
            let _ = writeln!(
                out,
                "  e2e ms: mean={mean:.1} p50={} p95={}",
                self.percentile_e2e_ms(50).unwrap(),
                self.percentile_e2e_ms(95).unwrap(),
            );
        }
        let _ = writeln!(
            out,
            "  blocks={} encryptions={} credit_rejections={} taint_violations={} plain_exposures={}",
            self.blocks,
            self.encryptions,
            self.credit_rejections,
            self.taint_violations,
            self.plain_exposures,
        );
        for r in &self.records {
            match (r.deliver_t, r.delivered_value) {
                (Some(at), Some(v)) => {
                    let _ = writeln!(
                        out,
                        "  task {} [{}] delivered {} at t={} (e2e {} ms, oracle {})",
                        short_id(&r.task_id),
                        r.label,
                        v,
                        at,
                        r.e2e_ms().unwrap(),
                        if r.oracle_ok() { "ok" } else { "MISMATCH" },
                    );
                }
                _ => {
                    let _ = writeln!(
                        out,
                        "  task {} [{}] rejected, no delivery",
                        short_id(&r.task_id),
                        r.label,
                    );
                }
            }
        }
        out
    }
}

pub const CSV_HEADER: &str = "scenario,mode,period_s,run,task_id,publish_t,deliver_t,e2e_ms,verdict";

/// Period in seconds with trailing zeros trimmed: 500 -> "0.5", 1000 -> "1".
pub fn format_period_s(period_ms: u64) -> String {
    let whole = period_ms / 1000;
    let frac = period_ms % 1000;
    if frac == 0 {
        return whole.to_string();
    }
    let mut s = format!("{whole}.{frac:03}");
    while s.ends_with('0') {
        s.pop();
    }
    s
}

/// First 16 hex characters of a task id: unambiguous at run scale, short
/// enough to scan.
pub fn short_id(id: &Digest) -> String {
    id.to_hex()[..16].to_string()
}

/// Appends one run's rows (no header) onto `out`.
pub fn append_csv_rows(out: &mut String, report: &RunReport) {
    for r in &report.records {
        let (deliver, e2e) = match r.deliver_t {
            Some(d) => (d.to_string(), (d - r.publish_t).to_string()),
            None => (String::new(), String::new()),
        };
        let verdict = match r.outcome {
            TaskOutcome::Delivered => "verified",
            TaskOutcome::Rejected => "rejected",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            report.scenario,
            report.mode_name,
            format_period_s(report.period_ms),
            report.run,
            short_id(&r.task_id),
            r.publish_t,
            deliver,
            e2e,
            verdict,
        );
    }
}

/// Full CSV document for a list of runs.
pub fn to_csv(reports: &[RunReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for report in reports {
        append_csv_rows(&mut out, report);
    }
    out
}

/// One period's worth of a sweep: both modes side by side.
#[derive(Debug)]
pub struct SweepPoint {
    pub period_ms: u64,
    pub fortified_mean_ms: f64,
    pub baseline_mean_ms: f64,
}

impl SweepPoint {
    /// Mean end-to-end overhead of the fortified pipeline over the baseline.
    pub fn overhead_ratio(&self) -> f64 {
        self.fortified_mean_ms / self.baseline_mean_ms
    }
}

#[derive(Debug)]
pub struct SweepReport {
    pub scenario: u8,
    pub points: Vec<SweepPoint>,
    pub reports: Vec<RunReport>,
}

impl SweepReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>9} {:>14} {:>14} {:>9}",
            "period_s", "zk_mean_ms", "plain_mean_ms", "ratio"
        );
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:>9} {:>14.1} {:>14.1} {:>9.2}",
                format_period_s(p.period_ms),
                p.fortified_mean_ms,
                p.baseline_mean_ms,
                p.overhead_ratio(),
            );
        }
        out
    }
}
