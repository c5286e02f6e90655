//! Line-record report stream and derived analyses.
//!
//! ```text
//! {"kind":"config","config":{..}}
//! {"kind":"batch","index":0,..,"records":[..]}      one per batch
//! {"kind":"aggregate","records":N,"metrics":{..},..}
//! ```

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    AdaptationReport, BatchStats, EventStats, LossComponents, Metrics, IMBALANCE_REPORT_RATIO,
};
use crate::error::{RadarError, Result};
use crate::feature_io::Class;

/// Optional detail in the written stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportOptions {
    /// Per-record pre/post entropies.
    pub trace_entropy: bool,
    /// Per-record pseudo-labels with scores and reference counts.
    pub trace_pseudo: bool,
    /// Bank contents after each insertion.
    pub trace_bank: bool,
    /// Configuration echoed in the first line; defaults to the adaptation
    /// config.
    pub echo: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordLine {
    pub id: String,
    pub event_id: String,
    pub prediction: Class,
    pub probs: Vec<f64>,
    pub references: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Class>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_entropy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_entropy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLine {
    pub id: String,
    pub label: Class,
    pub scores: Vec<f64>,
    pub references: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLine {
    pub index: usize,
    pub size: usize,
    pub losses: LossComponents,
    pub total: f64,
    pub covered: usize,
    pub clamped: usize,
    pub grad_norm: f64,
    pub records: Vec<RecordLine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo: Option<Vec<PseudoLine>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateLine {
    pub records: usize,
    pub metrics: Option<Metrics>,
    pub pseudo_label_metrics: Option<Metrics>,
    pub events: Vec<EventStats>,
    pub imbalanced_events: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Config { config: Value },
    Batch(BatchLine),
    Aggregate(AggregateLine),
}

/// A parsed report stream.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportFile {
    pub config: Option<Value>,
    pub batches: Vec<BatchLine>,
    pub aggregate: Option<AggregateLine>,
}

impl ReportFile {
    pub fn records(&self) -> impl Iterator<Item = &RecordLine> {
        self.batches.iter().flat_map(|b| b.records.iter())
    }

    pub fn num_records(&self) -> usize {
        self.batches.iter().map(|b| b.records.len()).sum()
    }
}

fn batch_line(report: &AdaptationReport, stats: &BatchStats, opts: &ReportOptions) -> BatchLine {
    let recs: Vec<_> = report
        .records
        .iter()
        .filter(|r| r.batch == stats.index)
        .collect();
    BatchLine {
        index: stats.index,
        size: stats.size,
        losses: stats.losses,
        total: stats.total,
        covered: stats.covered,
        clamped: stats.clamped,
        grad_norm: stats.grad_norm,
        records: recs
            .iter()
            .map(|r| RecordLine {
                id: r.id.clone(),
                event_id: r.event_id.clone(),
                prediction: r.prediction,
                probs: r.probs.clone(),
                references: r.references,
                label: r.label,
                pre_entropy: opts.trace_entropy.then_some(r.pre_entropy),
                post_entropy: opts.trace_entropy.then_some(r.post_entropy),
            })
            .collect(),
        pseudo: opts.trace_pseudo.then(|| {
            recs.iter()
                .filter_map(|r| {
                    r.pseudo.as_ref().map(|p| PseudoLine {
                        id: r.id.clone(),
                        label: p.label,
                        scores: p.combined_scores.clone(),
                        references: p.used_references,
                    })
                })
                .collect()
        }),
        bank: opts.trace_bank.then(|| stats.bank_ids.clone()),
    }
}

fn json_line(w: &mut impl Write, line: &Line) -> Result<()> {
    let s = serde_json::to_string(line).map_err(|e| RadarError::Report(e.to_string()))?;
    writeln!(w, "{s}").map_err(|e| RadarError::Report(e.to_string()))
}

pub fn write_report(
    report: &AdaptationReport,
    opts: &ReportOptions,
    w: &mut impl Write,
) -> Result<()> {
    let config = match &opts.echo {
        Some(v) => v.clone(),
        None => {
            serde_json::to_value(&report.config).map_err(|e| RadarError::Report(e.to_string()))?
        }
    };
    json_line(w, &Line::Config { config })?;
    for stats in &report.batches {
        json_line(w, &Line::Batch(batch_line(report, stats, opts)))?;
    }
    let aggregate = AggregateLine {
        records: report.records.len(),
        metrics: report.metrics,
        pseudo_label_metrics: report.pseudo_label_metrics,
        events: report.events.clone(),
        imbalanced_events: report
            .imbalanced_events()
            .map(|e| e.event_id.clone())
            .collect(),
    };
    json_line(w, &Line::Aggregate(aggregate))
}

/// Parses a report stream. Blank lines are skipped; an empty stream gives
/// an empty report.
pub fn read_report(reader: impl BufRead) -> Result<ReportFile> {
    let mut out = ReportFile::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| RadarError::Report(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line)
            .map_err(|e| RadarError::format(i + 1, None, e.to_string()))?;
        match parsed {
            Line::Config { config } => out.config = Some(config),
            Line::Batch(b) => out.batches.push(b),
            Line::Aggregate(a) => out.aggregate = Some(a),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyBucket {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub errors: usize,
}

impl EntropyBucket {
    pub fn error_rate(&self) -> Option<f64> {
        (self.count > 0).then(|| self.errors as f64 / self.count as f64)
    }
}

/// Splits `[0, ln 2]` into `n` equal intervals, closed on the left; the
/// last also holds `ln 2`. Values outside the range are clamped into the
/// end buckets.
pub fn entropy_buckets(samples: &[(f64, bool)], n: usize) -> Result<Vec<EntropyBucket>> {
    if n == 0 {
        return Err(RadarError::invalid("bucket count must be at least 1"));
    }
    let max = std::f64::consts::LN_2;
    let width = max / n as f64;
    let mut buckets: Vec<EntropyBucket> = (0..n)
        .map(|i| EntropyBucket {
            lo: i as f64 * width,
            hi: if i + 1 == n {
                max
            } else {
                (i + 1) as f64 * width
            },
            count: 0,
            errors: 0,
        })
        .collect();
    for &(h, correct) in samples {
        if !h.is_finite() {
            return Err(RadarError::NonFinite("entropy sample".into()));
        }
        let i = ((h / width).floor().max(0.0) as usize).min(n - 1);
        buckets[i].count += 1;
        buckets[i].errors += !correct as usize;
    }
    Ok(buckets)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Human-readable summary of a run.
pub fn summary_table(report: &AdaptationReport) -> String {
    let mut s = String::new();
    let n = report.batches.len().max(1) as f64;
    let mean = |f: fn(&BatchStats) -> f64| report.batches.iter().map(f).sum::<f64>() / n;
    let _ = writeln!(s, "batches          {}", report.batches.len());
    let _ = writeln!(s, "records          {}", report.records.len());
    let _ = writeln!(s, "mean L_align     {:.6}", mean(|b| b.losses.align));
    let _ = writeln!(s, "mean L_self      {:.6}", mean(|b| b.losses.self_train));
    let _ = writeln!(s, "mean L_entropy   {:.6}", mean(|b| b.losses.entropy));
    let _ = writeln!(s, "mean L_total     {:.6}", mean(|b| b.total));
    let (pre, post) = report.records.iter().fold((0.0, 0.0), |(a, b), r| {
        (a + r.pre_entropy, b + r.post_entropy)
    });
    let rn = report.records.len().max(1) as f64;
    let _ = writeln!(s, "mean entropy     {:.6} -> {:.6}", pre / rn, post / rn);
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<14} {:>8} {:>8} {:>8}", "", "Acc", "M-F1", "M-R");
    for (name, m) in [
        ("predictions", report.metrics),
        ("pseudo-labels", report.pseudo_label_metrics),
    ] {
        let _ = writeln!(
            s,
            "{:<14} {:>8} {:>8} {:>8}",
            name,
            fmt_opt(m.map(|m| m.accuracy)),
            fmt_opt(m.map(|m| m.macro_f1)),
            fmt_opt(m.map(|m| m.macro_recall))
        );
    }
    let imbalanced: Vec<&EventStats> = report.imbalanced_events().collect();
    if !imbalanced.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "events with imbalance > {IMBALANCE_REPORT_RATIO}:1");
        let _ = writeln!(s, "{:<12} {:>5} {:>8} {:>8}", "event", "n", "acc", "pseudo");
        for e in imbalanced {
            let _ = writeln!(
                s,
                "{:<12} {:>5} {:>8.4} {:>8}",
                e.event_id,
                e.count,
                e.accuracy,
                fmt_opt(e.pseudo_label_accuracy)
            );
        }
    }
    s
}
