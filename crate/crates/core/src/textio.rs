//! Small helpers shared by the plain-text artifact formats.
//!
//! Reals are written with `{}` formatting, which emits the shortest string
//! that parses back to the identical `f64`.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub(crate) fn join_reals(values: impl IntoIterator<Item = f64>) -> String {
    let mut out = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v}").expect("writing to String");
    }
    out
}

pub(crate) fn parse_reals(what: &str, line_no: usize, line: &str, expected: usize) -> Result<Vec<f64>> {
    let values = line
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|e| Error::parse(what, line_no, format!("bad real {tok:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(Error::parse(
            what,
            line_no,
            format!("expected {expected} values, found {}", values.len()),
        ));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::parse(what, line_no, format!("non-finite value {bad}")));
    }
    Ok(values)
}

/// Parses a header such as `RBM v1 kind=binary M=4 J=3`, checking the magic
/// words and returning the `key=value` pairs in order.
pub(crate) fn parse_header<'a>(
    what: &str,
    line: &'a str,
    magic: &[&str],
) -> Result<Vec<(&'a str, &'a str)>> {
    let mut tokens = line.split_whitespace();
    for expected in magic {
        match tokens.next() {
            Some(tok) if tok == *expected => {}
            other => {
                return Err(Error::parse(
                    what,
                    1,
                    format!("expected {expected:?}, found {other:?}"),
                ))
            }
        }
    }
    tokens
        .map(|tok| {
            tok.split_once('=')
                .ok_or_else(|| Error::parse(what, 1, format!("expected key=value, found {tok:?}")))
        })
        .collect()
}

pub(crate) fn header_value<'a>(what: &str, pairs: &[(&str, &'a str)], key: &str) -> Result<&'a str> {
    pairs
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::parse(what, 1, format!("missing header field {key}")))
}

pub(crate) fn header_usize(what: &str, pairs: &[(&str, &str)], key: &str) -> Result<usize> {
    let raw = header_value(what, pairs, key)?;
    raw.parse()
        .map_err(|e| Error::parse(what, 1, format!("bad {key}={raw:?}: {e}")))
}

/// Pulls the next line, failing with a parse error naming the line number.
pub(crate) fn next_line<'a>(
    what: &str,
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<(usize, &'a str)> {
    lines
        .next()
        .ok_or_else(|| Error::parse(what, 0, "unexpected end of file"))
}
