//! ABX report serialisation.
//!
//! Reports are pretty-printed JSON with a fixed field order. Percentages
//! are written with exactly two decimals (round half up); scores keep full
//! precision. Nothing time- or machine-dependent goes into a report.

use std::io::Write;

use abxkit_core::fmt::percent2;
use abxkit_core::score::{AbxReport, CellScore, LevelEntry};
use abxkit_core::task::{AbxCell, CellKey, ConditionKind};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{data_err, Result};

pub const FORMAT: &str = "abxkit-report/1";
pub const AGGREGATION: &str =
    "cells -> speakers -> contexts -> symmetrized class pairs -> final; unweighted means in ascending key order";

/// Two-decimal JSON number.
pub fn percent_raw(v: f64) -> Box<RawValue> {
    RawValue::from_string(percent2(v)).expect("percent2 yields a JSON number")
}

#[derive(Serialize)]
struct Sampling {
    enabled: bool,
    max_triplets: Option<usize>,
    seed: Option<u64>,
    cells_sampled: usize,
}

#[derive(Serialize)]
struct CellDoc<'a> {
    key: String,
    class_a: &'a str,
    class_b: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    context: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    speaker: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x_speaker: Option<&'a str>,
    triplets: u64,
    sampled: bool,
    score: f64,
}

#[derive(Serialize)]
struct LevelDoc<'a> {
    class_a: &'a str,
    class_b: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    context: Option<String>,
    members: usize,
    score: f64,
}

#[derive(Serialize)]
struct PairDoc<'a> {
    class_a: &'a str,
    class_b: &'a str,
    directions: usize,
    score: f64,
}

#[derive(Serialize)]
struct Levels<'a> {
    cells: Vec<CellDoc<'a>>,
    speaker_collapsed: Vec<LevelDoc<'a>>,
    context_collapsed: Vec<LevelDoc<'a>>,
    symmetrized: Vec<PairDoc<'a>>,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    format: &'static str,
    condition: &'static str,
    frame_metric: &'static str,
    sequence_mode: &'static str,
    min_class_a: usize,
    min_class_b: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    speaker_control: Option<&'static str>,
    aggregation: &'static str,
    sampling: Sampling,
    final_score: f64,
    final_error_percent: Box<RawValue>,
    cells_scored: usize,
    cells_skipped: usize,
    triplets_scored: u64,
    levels: Levels<'a>,
}

fn cell_doc(c: &CellScore) -> CellDoc<'_> {
    let (class_a, class_b) = c.key.classes();
    let (context, speaker, x_speaker) = match &c.key {
        CellKey::Phonetic {
            context,
            speaker,
            x_speaker,
            ..
        } => (
            Some(context.to_string()),
            Some(speaker.as_str()),
            x_speaker.as_deref(),
        ),
        CellKey::Language { speaker, .. } => (None, speaker.as_deref(), None),
    };
    CellDoc {
        key: c.key.to_string(),
        class_a,
        class_b,
        context,
        speaker,
        x_speaker,
        triplets: c.triplet_count,
        sampled: c.sampled,
        score: c.score,
    }
}

fn level_doc(e: &LevelEntry) -> LevelDoc<'_> {
    LevelDoc {
        class_a: &e.class_a,
        class_b: &e.class_b,
        context: e.context.as_ref().map(|c| c.to_string()),
        members: e.members,
        score: e.score,
    }
}

pub fn report_json(r: &AbxReport) -> String {
    let doc = ReportDoc {
        format: FORMAT,
        condition: r.condition.kind.name(),
        frame_metric: r.distance.frame_metric.name(),
        sequence_mode: r.distance.sequence_mode.name(),
        min_class_a: r.condition.min_class_a,
        min_class_b: r.condition.min_class_b,
        speaker_control: (r.condition.kind == ConditionKind::Language).then_some(
            if r.condition.same_speaker {
                "same_speaker"
            } else {
                "unconstrained"
            },
        ),
        aggregation: AGGREGATION,
        sampling: Sampling {
            enabled: r.sampling.is_some(),
            max_triplets: r.sampling.map(|s| s.max_triplets),
            seed: r.sampling.map(|s| s.seed),
            cells_sampled: r.cells_sampled,
        },
        final_score: r.final_score,
        final_error_percent: percent_raw(r.final_error_percent),
        cells_scored: r.cells_scored,
        cells_skipped: r.cells_skipped,
        triplets_scored: r.triplets_scored,
        levels: Levels {
            cells: r.cells.iter().map(cell_doc).collect(),
            speaker_collapsed: r.speaker_collapsed.iter().map(level_doc).collect(),
            context_collapsed: r.context_collapsed.iter().map(level_doc).collect(),
            symmetrized: r
                .symmetrized
                .iter()
                .map(|p| PairDoc {
                    class_a: &p.class_a,
                    class_b: &p.class_b,
                    directions: p.directions,
                    score: p.score,
                })
                .collect(),
        },
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("report serialises");
    s.push('\n');
    s
}

/// The fields of a report JSON needed downstream.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReportSummary {
    pub format: String,
    pub condition: String,
    pub frame_metric: String,
    pub final_score: f64,
    pub final_error_percent: f64,
}

pub fn parse_report_summary(text: &str) -> Result<ReportSummary> {
    let s: ReportSummary =
        serde_json::from_str(text).map_err(|e| data_err!("invalid ABX report: {e}"))?;
    if s.format != FORMAT {
        return Err(data_err!("unsupported report format {:?}", s.format));
    }
    Ok(s)
}

/// Per-cell CSV: key columns, triplet count and score.
pub fn write_cell_csv<W: Write>(r: &AbxReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| data_err!("writing cell CSV: {e}");
    out.write_record([
        "class_a",
        "class_b",
        "context",
        "speaker",
        "x_speaker",
        "triplets",
        "sampled",
        "score",
    ])
    .map_err(csv_err)?;
    for c in &r.cells {
        let d = cell_doc(c);
        out.write_record([
            d.class_a.to_owned(),
            d.class_b.to_owned(),
            d.context.unwrap_or_default(),
            d.speaker.unwrap_or_default().to_owned(),
            d.x_speaker.unwrap_or_default().to_owned(),
            d.triplets.to_string(),
            d.sampled.to_string(),
            format!("{:?}", d.score),
        ])
        .map_err(csv_err)?;
    }
    out.flush()
        .map_err(|e| data_err!("writing cell CSV: {e}"))?;
    Ok(())
}

/// Audit listing: one tab-separated line per cell.
pub fn write_cell_listing<W: Write>(cells: &[AbxCell], mut w: W) -> std::io::Result<()> {
    writeln!(w, "#condition\tkey\tn_a\tn_b\tn_x\ttriplets")?;
    for c in cells {
        writeln!(w, "{}", c.listing_line())?;
    }
    Ok(())
}
