//! Behavioral measures computed from trial logs: accuracy, perseverative
//! error rate, completed rule changes and rule-identification latency.
//!
//! Latency of a completed block is the number of trials consumed before
//! the terminal run of `switch_streak` correct responses; a block that never
//! completes is censored at its trial count. A perseverative error is an
//! incorrect response on the key the previous block's rule points at.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::{RuleDimension, TrialRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no trials to summarize")]
    Empty,
    #[error("trials span blocks {0} and {1}")]
    MixedBlocks(usize, usize),
    #[error("report needs at least one entry")]
    EmptyReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub block_index: usize,
    pub rule: RuleDimension,
    pub n_trials: usize,
    pub completed: bool,
    pub latency: usize,
    pub perseverative_errors: usize,
    pub total_errors: usize,
}

impl BlockSummary {
    /// This block's share of perseverative errors among its errors.
    pub fn per_contribution(&self) -> f64 {
        self.perseverative_errors as f64 / self.total_errors.max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub acc: f64,
    /// `None` when no block after the first was reached.
    pub per: Option<f64>,
    pub rc: usize,
    pub mean_latency: f64,
    pub n_trials: usize,
    pub blocks: Vec<BlockSummary>,
}

pub fn summarize_block(
    trials: &[TrialRecord],
    previous_rule: Option<RuleDimension>,
    switch_streak: usize,
) -> Result<BlockSummary, MetricsError> {
    let first = trials.first().ok_or(MetricsError::Empty)?;
    let block_index = first.trial_spec.block_index;
    if let Some(other) = trials
        .iter()
        .find(|t| t.trial_spec.block_index != block_index)
    {
        return Err(MetricsError::MixedBlocks(
            block_index,
            other.trial_spec.block_index,
        ));
    }
    let n = trials.len();
    let completed = n >= switch_streak && trials[n - switch_streak..].iter().all(|t| t.correct);
    let total_errors = trials.iter().filter(|t| !t.correct).count();
    let perseverative_errors = match previous_rule {
        None => 0,
        Some(prev) => trials
            .iter()
            .filter(|t| !t.correct && t.choice.key0() == Some(t.trial_spec.key_for(prev)))
            .count(),
    };
    Ok(BlockSummary {
        block_index,
        rule: first.trial_spec.active_rule,
        n_trials: n,
        completed,
        latency: if completed { n - switch_streak } else { n },
        perseverative_errors,
        total_errors,
    })
}

/// Splits records into contiguous runs sharing a block index.
pub fn split_blocks(records: &[TrialRecord]) -> Vec<&[TrialRecord]> {
    records
        .chunk_by(|a, b| a.trial_spec.block_index == b.trial_spec.block_index)
        .collect()
}

pub fn summarize_session(
    records: &[TrialRecord],
    switch_streak: usize,
) -> Result<SessionMetrics, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut blocks = Vec::new();
    let mut prev_rule = None;
    for chunk in split_blocks(records) {
        let b = summarize_block(chunk, prev_rule, switch_streak)?;
        prev_rule = Some(b.rule);
        blocks.push(b);
    }
    let correct = records.iter().filter(|t| t.correct).count();
    let completed = blocks.iter().filter(|b| b.completed).count();
    let later: Vec<f64> = blocks
        .iter()
        .skip(1)
        .map(BlockSummary::per_contribution)
        .collect();
    Ok(SessionMetrics {
        acc: 100.0 * correct as f64 / records.len() as f64,
        per: if later.is_empty() {
            None
        } else {
            Some(later.iter().sum::<f64>() / later.len() as f64)
        },
        rc: completed.saturating_sub(1),
        mean_latency: blocks.iter().map(|b| b.latency as f64).sum::<f64>() / blocks.len() as f64,
        n_trials: records.len(),
        blocks,
    })
}

/// Stimulus-phase label of a trial within its block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrialPhase {
    /// Before the block's identification point.
    Search,
    /// Inside the terminal correct streak.
    Confirm,
}

/// Labels each record SEARCH or CONF. Trials before a completed block's
/// terminal streak, and every trial of an incomplete block, are SEARCH.
pub fn trial_phases(records: &[TrialRecord], switch_streak: usize) -> Vec<TrialPhase> {
    let mut out = Vec::with_capacity(records.len());
    for chunk in split_blocks(records) {
        let n = chunk.len();
        let completed = n >= switch_streak && chunk[n - switch_streak..].iter().all(|t| t.correct);
        let latency = if completed { n - switch_streak } else { n };
        out.extend((0..n).map(|i| {
            if i < latency {
                TrialPhase::Search
            } else {
                TrialPhase::Confirm
            }
        }));
    }
    out
}

/// One row of a comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub label: String,
    pub acc: f64,
    pub per: Option<f64>,
    pub rc: f64,
    pub latency: f64,
}

impl MetricsRow {
    pub fn from_session(label: impl Into<String>, m: &SessionMetrics) -> Self {
        MetricsRow {
            label: label.into(),
            acc: m.acc,
            per: m.per,
            rc: m.rc as f64,
            latency: m.mean_latency,
        }
    }

    /// Unweighted mean of per-session values. PER averages only the
    /// sessions that define it.
    pub fn mean_of(label: impl Into<String>, sessions: &[SessionMetrics]) -> Option<Self> {
        if sessions.is_empty() {
            return None;
        }
        let n = sessions.len() as f64;
        let pers: Vec<f64> = sessions.iter().filter_map(|s| s.per).collect();
        Some(MetricsRow {
            label: label.into(),
            acc: sessions.iter().map(|s| s.acc).sum::<f64>() / n,
            per: if pers.is_empty() {
                None
            } else {
                Some(pers.iter().sum::<f64>() / pers.len() as f64)
            },
            rc: sessions.iter().map(|s| s.rc as f64).sum::<f64>() / n,
            latency: sessions.iter().map(|s| s.mean_latency).sum::<f64>() / n,
        })
    }
}

/// Whether larger values are better in each report column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnDirections {
    pub acc_higher: bool,
    pub per_higher: bool,
    pub rc_higher: bool,
    pub latency_higher: bool,
}

impl Default for ColumnDirections {
    /// ACC, PER and #RC up; latency down.
    fn default() -> Self {
        ColumnDirections {
            acc_higher: true,
            per_higher: true,
            rc_higher: true,
            latency_higher: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub text: String,
    pub csv: String,
    /// `best[row][col]` for columns ACC, PER, #RC, Latency.
    pub best: Vec<[bool; 4]>,
}

fn fmt_rc(rc: f64) -> String {
    if (rc - rc.round()).abs() < 1e-9 {
        format!("{}", rc.round() as i64)
    } else {
        format!("{rc:.2}")
    }
}

fn cells(r: &MetricsRow) -> [String; 4] {
    [
        format!("{:.1}", r.acc),
        r.per.map_or_else(|| "-".to_string(), |p| format!("{p:.2}")),
        fmt_rc(r.rc),
        format!("{:.2}", r.latency),
    ]
}

fn best_mask(values: &[Option<f64>], higher: bool) -> Vec<bool> {
    let best = values.iter().flatten().copied().fold(None, |acc: Option<f64>, v| {
        Some(match acc {
            None => v,
            Some(a) if higher => a.max(v),
            Some(a) => a.min(v),
        })
    });
    values
        .iter()
        .map(|v| matches!((v, best), (Some(v), Some(b)) if (v - b).abs() < 1e-12))
        .collect()
}

/// Table with one row per entry; best value per column is starred in the
/// text rendering and reported in [`Report::best`].
pub fn report_table(rows: &[MetricsRow], dirs: ColumnDirections) -> Result<Report, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::EmptyReport);
    }
    let cols: [(Vec<Option<f64>>, bool); 4] = [
        (rows.iter().map(|r| Some(r.acc)).collect(), dirs.acc_higher),
        (rows.iter().map(|r| r.per).collect(), dirs.per_higher),
        (rows.iter().map(|r| Some(r.rc)).collect(), dirs.rc_higher),
        (rows.iter().map(|r| Some(r.latency)).collect(), dirs.latency_higher),
    ];
    let masks: Vec<Vec<bool>> = cols.iter().map(|(v, h)| best_mask(v, *h)).collect();
    let best: Vec<[bool; 4]> = (0..rows.len())
        .map(|i| [masks[0][i], masks[1][i], masks[2][i], masks[3][i]])
        .collect();

    let arrow = |h: bool| if h { "↑" } else { "↓" };
    let header = [
        "Label".to_string(),
        format!("ACC {}", arrow(dirs.acc_higher)),
        format!("PER {}", arrow(dirs.per_higher)),
        format!("#RC {}", arrow(dirs.rc_higher)),
        format!("Latency {}", arrow(dirs.latency_higher)),
    ];
    let body: Vec<[String; 5]> = rows
        .iter()
        .zip(&best)
        .map(|(r, b)| {
            let c = cells(r);
            let mark = |i: usize| {
                if b[i] {
                    format!("*{}*", c[i])
                } else {
                    c[i].clone()
                }
            };
            [r.label.clone(), mark(0), mark(1), mark(2), mark(3)]
        })
        .collect();
    let width = |i: usize| {
        body.iter()
            .map(|r| r[i].chars().count())
            .chain(std::iter::once(header[i].chars().count()))
            .max()
            .unwrap_or(0)
    };
    let widths: Vec<usize> = (0..5).map(width).collect();
    let mut text = String::new();
    let line = |out: &mut String, cells: &[String]| {
        for (i, c) in cells.iter().enumerate() {
            let pad = widths[i] - c.chars().count();
            if i == 0 {
                let _ = write!(out, "{c}{}", " ".repeat(pad));
            } else {
                let _ = write!(out, "  {}{c}", " ".repeat(pad));
            }
        }
        out.push('\n');
    };
    line(&mut text, &header);
    let total: usize = widths.iter().sum::<usize>() + 2 * 4;
    text.push_str(&"-".repeat(total));
    text.push('\n');
    for r in &body {
        line(&mut text, r);
    }
    text.push_str("* best value in column\n");

    let mut csv = String::from("label,acc,per,rc,latency\n");
    for r in rows {
        let c = cells(r);
        let _ = writeln!(csv, "{},{},{},{},{}", csv_field(&r.label), c[0], c[1], c[2], c[3]);
    }
    Ok(Report { text, csv, best })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
