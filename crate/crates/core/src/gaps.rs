//! Multilingual gap and visual-grounding gain statistics.
//!
//! Given within- and across-speaker ABX error rates for monolingual and
//! bilingual models at each training stage, computes
//! * the relative multilingual gap of the audio-only stage (`y`) and of
//!   the grounded stage (`w`), per column,
//! * the relative gain of grounding for monolingual (`x`) and bilingual
//!   (`z`) models from the averaged column,
//! * the verdicts `y > w` (gap reduction) and `z > x` (differential
//!   benefit).
//!
//! By default the averaged column is the two-decimal table value (round
//! half up), the same value a reader sees in a printed table; all other
//! quantities stay unrounded until printing. [`AvgBasis::Exact`] keeps the
//! average unrounded too, which makes every statistic a pure ratio.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{data_err, Result};
use crate::fmt::percent2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Stage {
    #[cfg_attr(feature = "serde", serde(rename = "SSL"))]
    Ssl,
    #[cfg_attr(feature = "serde", serde(rename = "SSL_A"))]
    SslA,
    #[cfg_attr(feature = "serde", serde(rename = "VGS_plus"))]
    VgsPlus,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ssl => "SSL",
            Stage::SslA => "SSL_A",
            Stage::VgsPlus => "VGS_plus",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "SSL" => Ok(Stage::Ssl),
            "SSL_A" => Ok(Stage::SslA),
            "VGS_plus" | "VGS+" => Ok(Stage::VgsPlus),
            other => Err(data_err!(
                "unknown stage {other:?} (expected SSL, SSL_A or VGS_plus)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Setting {
    Monolingual,
    Bilingual,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::Monolingual => "monolingual",
            Setting::Bilingual => "bilingual",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "monolingual" => Ok(Setting::Monolingual),
            "bilingual" => Ok(Setting::Bilingual),
            other => Err(data_err!(
                "unknown setting {other:?} (expected monolingual or bilingual)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRow {
    pub stage: Stage,
    pub setting: Setting,
    pub ws_error: f64,
    pub as_error: f64,
}

impl ResultRow {
    pub fn new(stage: Stage, setting: Setting, ws_error: f64, as_error: f64) -> Result<Self> {
        for (name, v) in [("ws", ws_error), ("as", as_error)] {
            if !(v.is_finite() && (0.0..=100.0).contains(&v)) {
                return Err(data_err!(
                    "{} {}: {name} error {v} outside [0, 100]",
                    stage.name(),
                    setting.name()
                ));
            }
        }
        Ok(Self {
            stage,
            setting,
            ws_error,
            as_error,
        })
    }

    pub fn average(&self) -> f64 {
        row_average(self.ws_error, self.as_error)
    }
}

pub fn row_average(ws: f64, as_: f64) -> f64 {
    (ws + as_) / 2.0
}

/// Parses a rendered two-decimal value back; used for the table Avg column.
fn table_value(v: f64) -> f64 {
    percent2(v).parse().unwrap_or(v)
}

/// `100 · (bili − mono) / mono`.
pub fn relative_gap(mono: f64, bili: f64) -> Result<f64> {
    if !(mono.is_finite() && mono > 0.0) {
        return Err(data_err!("monolingual error must be positive, got {mono}"));
    }
    Ok(100.0 * (bili - mono) / mono)
}

/// `100 · (baseline − grounded) / baseline`.
pub fn relative_gain(baseline: f64, grounded: f64) -> Result<f64> {
    if !(baseline.is_finite() && baseline > 0.0) {
        return Err(data_err!("baseline error must be positive, got {baseline}"));
    }
    Ok(100.0 * (baseline - grounded) / baseline)
}

/// One statistic for the within-speaker, across-speaker and averaged columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Columns {
    pub ws: f64,
    pub as_: f64,
    pub avg: f64,
}

/// Which row average feeds the Avg-column gap and the gains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AvgBasis {
    /// Two-decimal table value.
    #[default]
    Table,
    /// Unrounded `(ws + as) / 2`.
    Exact,
}

impl AvgBasis {
    fn apply(self, v: f64) -> f64 {
        match self {
            AvgBasis::Table => table_value(v),
            AvgBasis::Exact => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub basis: AvgBasis,
    pub rows: Vec<ResultRow>,
    /// Avg value for every input row, same order as `rows`.
    pub averages: Vec<f64>,
    /// Audio-only multilingual gap.
    pub y: Columns,
    /// Grounded multilingual gap.
    pub w: Columns,
    /// Grounding gain, monolingual.
    pub x: f64,
    /// Grounding gain, bilingual.
    pub z: f64,
    pub gap_reduction: bool,
    pub differential_benefit: bool,
    pub notes: Vec<String>,
}

fn find(rows: &[ResultRow], stage: Stage, setting: Setting) -> Option<&ResultRow> {
    rows.iter()
        .find(|r| r.stage == stage && r.setting == setting)
}

fn gap_columns(mono: &ResultRow, bili: &ResultRow, basis: AvgBasis) -> Result<Columns> {
    Ok(Columns {
        ws: relative_gap(mono.ws_error, bili.ws_error)?,
        as_: relative_gap(mono.as_error, bili.as_error)?,
        avg: relative_gap(basis.apply(mono.average()), basis.apply(bili.average()))?,
    })
}

/// [`analyze_with`] using table averages.
pub fn analyze(rows: &[ResultRow]) -> Result<GapReport> {
    analyze_with(rows, AvgBasis::Table)
}

pub fn analyze_with(rows: &[ResultRow], basis: AvgBasis) -> Result<GapReport> {
    for (i, r) in rows.iter().enumerate() {
        if rows[..i]
            .iter()
            .any(|o| o.stage == r.stage && o.setting == r.setting)
        {
            return Err(data_err!(
                "duplicate row for {} {}",
                r.stage.name(),
                r.setting.name()
            ));
        }
    }
    let mut missing = Vec::new();
    for stage in [Stage::SslA, Stage::VgsPlus] {
        for setting in [Setting::Monolingual, Setting::Bilingual] {
            if find(rows, stage, setting).is_none() {
                missing.push(alloc::format!("{} {}", stage.name(), setting.name()));
            }
        }
    }
    if !missing.is_empty() {
        return Err(data_err!("missing rows: {}", missing.join(", ")));
    }
    let get = |s, t| *find(rows, s, t).expect("checked above");
    let a_mono = get(Stage::SslA, Setting::Monolingual);
    let a_bili = get(Stage::SslA, Setting::Bilingual);
    let v_mono = get(Stage::VgsPlus, Setting::Monolingual);
    let v_bili = get(Stage::VgsPlus, Setting::Bilingual);

    let y = gap_columns(&a_mono, &a_bili, basis)?;
    let w = gap_columns(&v_mono, &v_bili, basis)?;
    let x = relative_gain(basis.apply(a_mono.average()), basis.apply(v_mono.average()))?;
    let z = relative_gain(basis.apply(a_bili.average()), basis.apply(v_bili.average()))?;

    let mut notes = Vec::new();
    if y.avg <= 0.0 && w.avg <= 0.0 {
        notes.push(String::from(
            "no multilingual gap: bilingual models match or beat monolingual ones",
        ));
    }
    Ok(GapReport {
        basis,
        rows: rows.to_vec(),
        averages: rows.iter().map(|r| basis.apply(r.average())).collect(),
        y,
        w,
        x,
        z,
        gap_reduction: y.avg > w.avg,
        differential_benefit: z > x,
        notes,
    })
}

impl fmt::Display for GapReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:<12} {:>8} {:>8} {:>8}",
            "stage", "setting", "WS", "AS", "Avg"
        )?;
        for (r, avg) in self.rows.iter().zip(&self.averages) {
            writeln!(
                f,
                "{:<10} {:<12} {:>8} {:>8} {:>8}",
                r.stage.name(),
                r.setting.name(),
                percent2(r.ws_error),
                percent2(r.as_error),
                percent2(*avg)
            )?;
        }
        for (name, c) in [("gap y", self.y), ("gap w", self.w)] {
            writeln!(
                f,
                "{:<23} {:>8} {:>8} {:>8}",
                name,
                percent2(c.ws),
                percent2(c.as_),
                percent2(c.avg)
            )?;
        }
        writeln!(f, "gain x (monolingual) {:>8}", percent2(self.x))?;
        writeln!(f, "gain z (bilingual)   {:>8}", percent2(self.z))?;
        writeln!(f, "gap reduction (y > w):        {}", self.gap_reduction)?;
        writeln!(
            f,
            "differential benefit (z > x): {}",
            self.differential_benefit
        )?;
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        Ok(())
    }
}
