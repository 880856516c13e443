//! Section-based plain-text container shared by the model file formats.
//!
//! ```text
//! # free comment
//! [section-name arg1 arg2]
//! line
//! line
//! ```
//!
//! Numbers are written with Rust's shortest round-trip `f64` formatting, so
//! values read back bit-identical.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Section {
    pub name: String,
    pub args: Vec<String>,
    pub lines: Vec<String>,
}

impl Section {
    pub fn arg<T: FromStr>(&self, i: usize) -> Result<T> {
        let raw = self
            .args
            .get(i)
            .ok_or_else(|| Error::parse(&self.name, format!("missing header argument {i}")))?;
        raw.parse()
            .map_err(|_| Error::parse(&self.name, format!("bad header argument `{raw}`")))
    }

    pub fn numbers(&self) -> Result<Vec<Vec<f64>>> {
        self.lines
            .iter()
            .map(|l| parse_row(l).map_err(|m| Error::parse(&self.name, m)))
            .collect()
    }

    pub fn single_row(&self) -> Result<Vec<f64>> {
        match self.lines.as_slice() {
            [] => Ok(Vec::new()),
            [line] => parse_row(line).map_err(|m| Error::parse(&self.name, m)),
            _ => Err(Error::parse(&self.name, "expected a single row")),
        }
    }
}

/// Splits a document into sections, checking the leading magic line.
pub fn read_sections(text: &str, magic: &str) -> Result<Vec<Section>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if first.trim() == magic => {}
        _ => return Err(Error::parse(magic, "missing format header")),
    }
    let mut sections: Vec<Section> = Vec::new();
    for line in lines {
        if line.starts_with('#') {
            continue;
        }
        if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let mut parts = header.split_whitespace().map(str::to_string);
            let name = parts.next().unwrap_or_default();
            sections.push(Section {
                name,
                args: parts.collect(),
                lines: Vec::new(),
            });
        } else if let Some(current) = sections.last_mut() {
            current.lines.push(line.to_string());
        } else if !line.trim().is_empty() {
            return Err(Error::parse(magic, format!("content before first section: `{line}`")));
        }
    }
    for s in &mut sections {
        while s.lines.last().is_some_and(|l| l.trim().is_empty()) {
            s.lines.pop();
        }
    }
    Ok(sections)
}

pub fn find<'a>(sections: &'a [Section], name: &str) -> Result<&'a Section> {
    sections
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::parse(name, "section missing"))
}

pub fn write_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

fn parse_row(line: &str) -> std::result::Result<Vec<f64>, String> {
    line.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad number `{t}`")))
        .collect()
}
