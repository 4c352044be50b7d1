//! Affine-region keypoint files: line 1 is `1.0`, line 2 the point count
//! `N`, then `N` lines `x y a b c` where `(a, b, c)` are the coefficients of
//! the region ellipse `a dx^2 + 2b dx dy + c dy^2 = 1`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Ellipse, Keypoint};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        context: "keypoint file".into(),
        line,
        column: 0,
        message: message.into(),
    }
}

pub fn parse_keypoint_file(text: &str) -> Result<Vec<Keypoint>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (no, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    header
        .parse::<f64>()
        .map_err(|_| parse_err(no, format!("expected header `1.0`, got `{header}`")))?;
    let (no, count) = lines.next().ok_or_else(|| parse_err(2, "missing point count"))?;
    let count: usize = count
        .parse()
        .map_err(|_| parse_err(no, format!("invalid point count `{count}`")))?;

    let mut out = Vec::with_capacity(count);
    for (no, line) in lines {
        if out.len() == count {
            return Err(parse_err(no, format!("more than {count} points")));
        }
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(no, format!("non-numeric field in `{line}`")))?;
        let [x, y, a, b, c] = fields[..] else {
            return Err(parse_err(no, format!("expected 5 fields, got {}", fields.len())));
        };
        if !x.is_finite() || !y.is_finite() {
            return Err(parse_err(no, "non-finite position"));
        }
        let region = Ellipse { a, b, c };
        if !region.is_positive_definite() {
            return Err(parse_err(no, format!("ellipse ({a}, {b}, {c}) is not positive-definite")));
        }
        out.push(Keypoint::with_region(x, y, region));
    }
    if out.len() != count {
        return Err(parse_err(
            text.lines().count(),
            format!("header announces {count} points, found {}", out.len()),
        ));
    }
    Ok(out)
}

/// Formats keypoints; ones without a region are written as circles of
/// radius `scale`. Values use shortest round-trip formatting.
pub fn format_keypoints(kps: &[Keypoint]) -> String {
    let mut s = format!("1.0\n{}\n", kps.len());
    for k in kps {
        let e = k.ellipse();
        writeln!(s, "{} {} {} {} {}", k.x, k.y, e.a, e.b, e.c).expect("write to string");
    }
    s
}

pub fn read_keypoint_file(path: &Path) -> Result<Vec<Keypoint>> {
    let text = crate::io::read_to_string(path)?;
    parse_keypoint_file(&text).map_err(|e| match e {
        Error::Parse {
            line,
            column,
            message,
            ..
        } => Error::Parse {
            context: path.display().to_string(),
            line,
            column,
            message,
        },
        other => other,
    })
}

pub fn write_keypoint_file(path: &Path, kps: &[Keypoint]) -> Result<()> {
    crate::io::write_atomic(path, format_keypoints(kps).as_bytes())
}
