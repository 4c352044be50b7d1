//! The repeatability records file.
//!
//! One CSV row per (detector, scene, kind, step) with columns
//! `detector,scene,kind,step,amount,n_ref,n_rep,rate`. The rate cell is
//! empty when the rate is undefined.

use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{RepeatabilityRecord, SceneId, StepIndex};

pub const HEADER: [&str; 8] = ["detector", "scene", "kind", "step", "amount", "n_ref", "n_rep", "rate"];

pub fn header_line() -> String {
    format!("{}\n", HEADER.join(","))
}

/// One CSV line, newline included.
pub fn format_record(r: &RepeatabilityRecord) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let rate = r.rate().map(|v| v.to_string()).unwrap_or_default();
    w.write_record([
        r.detector.as_str(),
        &r.scene.to_string(),
        r.kind.name(),
        &r.step.to_string(),
        &r.amount.to_string(),
        &r.n_ref.to_string(),
        &r.n_rep.to_string(),
        &rate,
    ])
    .expect("write to memory");
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 fields")
}

/// Serializes records in canonical (detector, kind, scene, step) order.
pub fn format_records(records: &[RepeatabilityRecord]) -> String {
    let mut sorted: Vec<&RepeatabilityRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.key());
    let mut s = header_line();
    for r in sorted {
        s.push_str(&format_record(r));
    }
    s
}

pub fn write_records(path: &Path, records: &[RepeatabilityRecord]) -> Result<()> {
    crate::io::write_atomic(path, format_records(records).as_bytes())
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, line: usize, ctx: &str) -> Result<T> {
    let raw = row.get(i).unwrap_or("");
    raw.parse().map_err(|_| Error::Parse {
        context: ctx.to_string(),
        line,
        column: i + 1,
        message: format!("invalid {} `{raw}`", HEADER[i]),
    })
}

/// Parses a records file. A truncated final line (no trailing newline) is
/// ignored when `tolerate_partial_tail` is set, so that an interrupted
/// writer can be resumed.
pub fn parse_records(text: &str, context: &str, tolerate_partial_tail: bool) -> Result<Vec<RepeatabilityRecord>> {
    let body = if tolerate_partial_tail && !text.is_empty() && !text.ends_with('\n') {
        &text[..text.rfind('\n').map_or(0, |i| i + 1)]
    } else {
        text
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(body.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Parse {
        context: context.to_string(),
        line: 1,
        column: 0,
        message: e.to_string(),
    })?;
    if !body.is_empty() && headers.iter().ne(HEADER) {
        return Err(Error::Parse {
            context: context.to_string(),
            line: 1,
            column: 0,
            message: format!("expected header `{}`", HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            context: context.to_string(),
            line: e.position().map_or(0, |p| p.line() as usize),
            column: 0,
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let record = RepeatabilityRecord {
            detector: row.get(0).unwrap_or("").to_string(),
            scene: SceneId(field(&row, 1, line, context)?),
            kind: field(&row, 2, line, context)?,
            step: StepIndex(field(&row, 3, line, context)?),
            amount: field(&row, 4, line, context)?,
            n_ref: field(&row, 5, line, context)?,
            n_rep: field(&row, 6, line, context)?,
        };
        if record.n_rep > record.n_ref {
            return Err(Error::Parse {
                context: context.to_string(),
                line,
                column: 7,
                message: format!("n_rep {} exceeds n_ref {}", record.n_rep, record.n_ref),
            });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<RepeatabilityRecord>> {
    let text = crate::io::read_to_string(path)?;
    parse_records(&text, &path.display().to_string(), false)
}
