//! Result tables in, gap reports out.
//!
//! Two input forms are accepted. A CSV with header `stage,setting,ws,as`
//! holding error rates in percent, or a JSON mapping
//! `{"rows": [{"stage", "setting", "within", "across"}]}` whose `within`
//! and `across` entries are paths to ABX reports (relative paths resolve
//! against the mapping file's directory).

use std::fs;
use std::path::Path;

use abxkit_core::gaps::{analyze_with, AvgBasis, Columns, GapReport, ResultRow, Setting, Stage};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{data_err, Error, Result};
use crate::report::{parse_report_summary, percent_raw};

pub const FORMAT: &str = "abxkit-gaps/1";
pub const CSV_HEADER: [&str; 4] = ["stage", "setting", "ws", "as"];

pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| data_err!("results CSV: {e}"))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(data_err!(
            "results CSV: expected header {:?}, found {:?}",
            CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| data_err!("results CSV line {line}: {e}"))?;
        let num = |j: usize, name: &str| -> Result<f64> {
            rec[j]
                .parse::<f64>()
                .map_err(|_| data_err!("results CSV line {line}: non-numeric {name} {:?}", &rec[j]))
        };
        let stage = Stage::parse(&rec[0]).map_err(|e| data_err!("results CSV line {line}: {e}"))?;
        let setting =
            Setting::parse(&rec[1]).map_err(|e| data_err!("results CSV line {line}: {e}"))?;
        rows.push(ResultRow::new(
            stage,
            setting,
            num(2, "ws")?,
            num(3, "as")?,
        )?);
    }
    Ok(rows)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Mapping {
    rows: Vec<MappingRow>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingRow {
    stage: String,
    setting: String,
    within: String,
    across: String,
}

fn report_error(path: &Path, expect: &str) -> Result<f64> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let s = parse_report_summary(&text).map_err(|e| data_err!("{}: {e}", path.display()))?;
    if s.condition != expect {
        return Err(data_err!(
            "{}: expected a {expect} report, found {}",
            path.display(),
            s.condition
        ));
    }
    Ok(100.0 * (1.0 - s.final_score))
}

pub fn parse_results_mapping(text: &str, base: &Path) -> Result<Vec<ResultRow>> {
    let m: Mapping = serde_json::from_str(text).map_err(|e| data_err!("results mapping: {e}"))?;
    m.rows
        .iter()
        .map(|r| {
            let stage = Stage::parse(&r.stage)?;
            let setting = Setting::parse(&r.setting)?;
            let ws = report_error(&base.join(&r.within), "phonetic_within")?;
            let as_ = report_error(&base.join(&r.across), "phonetic_across")?;
            Ok(ResultRow::new(stage, setting, ws, as_)?)
        })
        .collect()
}

/// Reads either input form, picked by the first non-blank character.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = if text.trim_start().starts_with('{') {
        parse_results_mapping(&text, path.parent().unwrap_or(Path::new(".")))
    } else {
        parse_results_csv(&text)
    };
    rows.map_err(|e| data_err!("{}: {e}", path.display()))
}

#[derive(Serialize)]
struct RowDoc {
    stage: &'static str,
    setting: &'static str,
    ws: f64,
    #[serde(rename = "as")]
    as_: f64,
    avg: Box<RawValue>,
}

#[derive(Serialize)]
struct ColumnsDoc {
    ws: Box<RawValue>,
    #[serde(rename = "as")]
    as_: Box<RawValue>,
    avg: Box<RawValue>,
}

impl From<Columns> for ColumnsDoc {
    fn from(c: Columns) -> Self {
        Self {
            ws: percent_raw(c.ws),
            as_: percent_raw(c.as_),
            avg: percent_raw(c.avg),
        }
    }
}

#[derive(Serialize)]
struct ExactColumns {
    ws: f64,
    #[serde(rename = "as")]
    as_: f64,
    avg: f64,
}

impl From<Columns> for ExactColumns {
    fn from(c: Columns) -> Self {
        Self {
            ws: c.ws,
            as_: c.as_,
            avg: c.avg,
        }
    }
}

#[derive(Serialize)]
struct Unrounded {
    y: ExactColumns,
    w: ExactColumns,
    x: f64,
    z: f64,
}

#[derive(Serialize)]
struct GapDoc {
    format: &'static str,
    avg_basis: &'static str,
    rows: Vec<RowDoc>,
    y: ColumnsDoc,
    w: ColumnsDoc,
    x: Box<RawValue>,
    z: Box<RawValue>,
    gap_reduction: bool,
    differential_benefit: bool,
    notes: Vec<String>,
    unrounded: Unrounded,
}

pub fn basis_name(b: AvgBasis) -> &'static str {
    match b {
        AvgBasis::Table => "table",
        AvgBasis::Exact => "exact",
    }
}

pub fn gap_json(r: &GapReport) -> String {
    let doc = GapDoc {
        format: FORMAT,
        avg_basis: basis_name(r.basis),
        rows: r
            .rows
            .iter()
            .zip(&r.averages)
            .map(|(row, avg)| RowDoc {
                stage: row.stage.name(),
                setting: row.setting.name(),
                ws: row.ws_error,
                as_: row.as_error,
                avg: percent_raw(*avg),
            })
            .collect(),
        y: r.y.into(),
        w: r.w.into(),
        x: percent_raw(r.x),
        z: percent_raw(r.z),
        gap_reduction: r.gap_reduction,
        differential_benefit: r.differential_benefit,
        notes: r.notes.clone(),
        unrounded: Unrounded {
            y: r.y.into(),
            w: r.w.into(),
            x: r.x,
            z: r.z,
        },
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("gap report serialises");
    s.push('\n');
    s
}

pub fn analyze_file(path: &Path, basis: AvgBasis) -> Result<GapReport> {
    let rows = read_results(path)?;
    Ok(analyze_with(&rows, basis)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: &str = "stage,setting,ws,as\n\
        SSL_A,monolingual,6.46,7.75\n\
        SSL_A,bilingual,8.36,10.34\n\
        VGS_plus,monolingual,5.86,6.81\n\
        VGS+,bilingual,6.18,7.52\n";

    #[test]
    fn csv_to_json() {
        let rows = parse_results_csv(TABLE).unwrap();
        assert_eq!(rows.len(), 4);
        let r = analyze_with(&rows, AvgBasis::Table).unwrap();
        let text = gap_json(&r);
        assert!(text.contains("\"avg\": 31.50"), "{text}");
        assert!(text.contains("\"avg\": 8.04"), "{text}");
        assert!(text.contains("\"avg\": 7.11"), "{text}");
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["gap_reduction"], true);
        assert_eq!(v["differential_benefit"], true);
    }

    #[test]
    fn csv_errors() {
        assert!(parse_results_csv("stage,setting,ws\nSSL_A,monolingual,1\n").is_err());
        let e = parse_results_csv("stage,setting,ws,as\nSSL_A,monolingual,x,1\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        assert!(parse_results_csv("stage,setting,ws,as\nSSL_B,monolingual,1,1\n").is_err());
        assert!(parse_results_csv("stage,setting,ws,as\nSSL_A,monolingual,101,1\n").is_err());
    }

    #[test]
    fn missing_rows_are_listed() {
        let rows = parse_results_csv("stage,setting,ws,as\nSSL_A,monolingual,6,7\n").unwrap();
        let e = analyze_with(&rows, AvgBasis::Table)
            .unwrap_err()
            .to_string();
        assert!(
            e.contains("SSL_A bilingual") && e.contains("VGS_plus monolingual"),
            "{e}"
        );
    }
}
