//! Item lists.
//!
//! Phone items, header `#file onset offset #phone prev-phone next-phone
//! speaker [language]`, then one whitespace-separated token per line.
//! Language items, header `#file speaker language`. Only the first line
//! may be a header; blank or comment lines in the body are errors.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use abxkit_core::items::{PhoneToken, UtteranceRecord};

use crate::error::{data_err, Error, Result};

pub const PHONE_HEADER: &str = "#file onset offset #phone prev-phone next-phone speaker";
pub const LANGUAGE_HEADER: &str = "#file speaker language";

/// Yields `(line_number, line)` for body lines after checking the header.
fn body_lines<R: BufRead>(reader: R) -> Result<Vec<(usize, String)>> {
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.starts_with('#') => {}
        Some((_, Ok(_))) | None => {
            return Err(data_err!("missing header: first line must start with '#'"))
        }
        Some((_, Err(e))) => return Err(data_err!("line 1: {e}")),
    }
    let mut body = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        let line = line.map_err(|e| data_err!("line {n}: {e}"))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            return Err(data_err!("blank line at line {n}"));
        }
        if trimmed.starts_with('#') {
            return Err(data_err!("unexpected comment at line {n}"));
        }
        body.push((n, line));
    }
    Ok(body)
}

fn parse_time(field: &str, what: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| data_err!("non-numeric {what} {field:?} at line {line}"))?;
    if !v.is_finite() {
        return Err(data_err!("non-finite {what} at line {line}"));
    }
    Ok(v)
}

pub fn parse_phone_items<R: BufRead>(reader: R) -> Result<Vec<PhoneToken>> {
    body_lines(reader)?
        .into_iter()
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 7 && cols.len() != 8 {
                return Err(data_err!(
                    "expected 7 or 8 columns, found {} at line {n}",
                    cols.len()
                ));
            }
            let onset = parse_time(cols[1], "onset", n)?;
            let offset = parse_time(cols[2], "offset", n)?;
            if onset >= offset {
                return Err(data_err!("onset ≥ offset at line {n}"));
            }
            Ok(PhoneToken {
                utterance_id: cols[0].to_owned(),
                onset,
                offset,
                phone: cols[3].to_owned(),
                prev_phone: cols[4].to_owned(),
                next_phone: cols[5].to_owned(),
                speaker: cols[6].to_owned(),
                language: cols.get(7).map(|s| (*s).to_owned()),
            })
        })
        .collect()
}

pub fn parse_language_items<R: BufRead>(reader: R) -> Result<Vec<UtteranceRecord>> {
    let mut seen = HashSet::new();
    body_lines(reader)?
        .into_iter()
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 3 {
                return Err(data_err!(
                    "expected 3 columns, found {} at line {n}",
                    cols.len()
                ));
            }
            if !seen.insert(cols[0].to_owned()) {
                return Err(data_err!("duplicate utterance {} at line {n}", cols[0]));
            }
            Ok(UtteranceRecord {
                utterance_id: cols[0].to_owned(),
                speaker: cols[1].to_owned(),
                language: cols[2].to_owned(),
            })
        })
        .collect()
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Data(msg) => data_err!("{}: {msg}", path.display()),
        other => other,
    })
}

pub fn read_phone_items(path: &Path) -> Result<Vec<PhoneToken>> {
    with_path(path, parse_phone_items(open(path)?))
}

pub fn read_language_items(path: &Path) -> Result<Vec<UtteranceRecord>> {
    with_path(path, parse_language_items(open(path)?))
}

/// Times are written in shortest round-trip form, so parsing the output
/// gives back identical tokens.
pub fn write_phone_items<W: Write>(tokens: &[PhoneToken], mut w: W) -> std::io::Result<()> {
    if tokens.iter().any(|t| t.language.is_some()) {
        writeln!(w, "{PHONE_HEADER} language")?;
    } else {
        writeln!(w, "{PHONE_HEADER}")?;
    }
    for t in tokens {
        write!(
            w,
            "{} {:?} {:?} {} {} {} {}",
            t.utterance_id, t.onset, t.offset, t.phone, t.prev_phone, t.next_phone, t.speaker
        )?;
        if let Some(lang) = &t.language {
            write!(w, " {lang}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_language_items<W: Write>(
    records: &[UtteranceRecord],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "{LANGUAGE_HEADER}")?;
    for r in records {
        writeln!(w, "{} {} {}", r.utterance_id, r.speaker, r.language)?;
    }
    Ok(())
}
