//! Line-oriented tokenizer shared by the text-file parsers.
//!
//! All on-disk formats (tensors, bases, graphs) are whitespace-separated
//! UTF-8 text with `#` comment lines; parsers report 1-based line numbers.

use std::io::{BufRead, BufReader, Read};

use crate::error::{Error, Result};

/// The non-comment lines of a stream, each paired with its 1-based number.
pub struct Lines {
    lines: Vec<(usize, String)>,
    /// Number of the last physical line, for end-of-input diagnostics.
    pub last_line: usize,
}

impl Lines {
    pub fn read(source: impl Read) -> Result<Self> {
        let mut lines = Vec::new();
        let mut last_line = 0;
        for (idx, line) in BufReader::new(source).lines().enumerate() {
            let no = idx + 1;
            last_line = no;
            let line = line.map_err(|e| Error::parse(no, format!("unreadable line: {e}")))?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            lines.push((no, trimmed.to_string()));
        }
        Ok(Lines { lines, last_line })
    }

    /// Same as [`Lines::read`] but keeps comment lines (the sparse tensor
    /// format carries its shape in a `# shape:` header).
    pub fn read_keeping_comments(source: impl Read) -> Result<Self> {
        let mut lines = Vec::new();
        let mut last_line = 0;
        for (idx, line) in BufReader::new(source).lines().enumerate() {
            let no = idx + 1;
            last_line = no;
            let line = line.map_err(|e| Error::parse(no, format!("unreadable line: {e}")))?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            lines.push((no, trimmed.to_string()));
        }
        Ok(Lines { lines, last_line })
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &str)> {
        self.lines.iter().map(|(no, s)| (*no, s.as_str()))
    }
}

pub fn parse_f64(line: usize, token: &str) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| Error::parse(line, format!("expected a number, got '{token}'")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite value '{token}'")));
    }
    Ok(v)
}

pub fn parse_index(line: usize, token: &str) -> Result<usize> {
    let v: usize = token
        .parse()
        .map_err(|_| Error::parse(line, format!("expected a positive integer, got '{token}'")))?;
    if v == 0 {
        return Err(Error::parse(line, "indices are 1-based; got 0".to_string()));
    }
    Ok(v)
}
