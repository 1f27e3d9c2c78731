//! Extents and access traces, plus the line-oriented trace text format.
//!
//! ```text
//! read
//! # comment lines are ignored
//! 0,3
//! 10,2
//! ```
//!
//! The first line names the trace kind; every other non-empty line is a
//! `start,len` pair in block units.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A contiguous run of device blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Extent {
    pub start: u64,
    pub len: u64,
}

impl Extent {
    /// Builds an extent, rejecting empty or overflowing runs.
    pub fn new(start: u64, len: u64) -> Result<Self> {
        if len == 0 {
            return Err(Error::TraceFormat(format!(
                "extent at {start} has zero length"
            )));
        }
        if start.checked_add(len).is_none() {
            return Err(Error::TraceFormat(format!(
                "extent ({start},{len}) overflows"
            )));
        }
        Ok(Extent { start, len })
    }

    /// One past the last block.
    #[inline]
    pub fn end(&self) -> u64 {
        self.start + self.len
    }

    #[inline]
    pub fn contains(&self, block: u64) -> bool {
        block >= self.start && block < self.end()
    }

    /// Whether `next` begins exactly where `self` ends.
    #[inline]
    pub fn is_followed_by(&self, next: &Extent) -> bool {
        self.end() == next.start
    }

    pub fn overlaps(&self, other: &Extent) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

impl fmt::Display for Extent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.start, self.len)
    }
}

/// Appends `e` to `list`, merging it into the last entry when adjacent.
pub(crate) fn push_coalesced(list: &mut Vec<Extent>, e: Extent) {
    if let Some(last) = list.last_mut() {
        if last.end() == e.start {
            last.len += e.len;
            return;
        }
    }
    list.push(e);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    Read,
    Write,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Read => "read",
            TraceKind::Write => "write",
        }
    }
}

impl FromStr for TraceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "read" => Ok(TraceKind::Read),
            "write" => Ok(TraceKind::Write),
            other => Err(Error::TraceFormat(format!("unknown trace kind {other:?}"))),
        }
    }
}

/// Ordered sequence of extents as requested, in request order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessTrace {
    pub kind: TraceKind,
    pub entries: Vec<Extent>,
}

impl AccessTrace {
    pub fn new(kind: TraceKind) -> Self {
        AccessTrace {
            kind,
            entries: Vec::new(),
        }
    }

    /// Builds a trace from `(start, len)` pairs, validating each.
    pub fn from_pairs(kind: TraceKind, pairs: &[(u64, u64)]) -> Result<Self> {
        let entries = pairs
            .iter()
            .map(|&(s, l)| Extent::new(s, l))
            .collect::<Result<Vec<_>>>()?;
        Ok(AccessTrace { kind, entries })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total blocks requested.
    pub fn total_blocks(&self) -> u64 {
        self.entries.iter().map(|e| e.len).sum()
    }

    /// Rejects zero-length or overflowing entries, and entries beyond
    /// `device_blocks` when a bound is given.
    pub fn validate(&self, device_blocks: Option<u64>) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.len == 0 {
                return Err(Error::TraceFormat(format!("entry {i} has zero length")));
            }
            let end = e
                .start
                .checked_add(e.len)
                .ok_or_else(|| Error::TraceFormat(format!("entry {i} overflows")))?;
            if let Some(limit) = device_blocks {
                if end > limit {
                    return Err(Error::TraceFormat(format!(
                        "entry {i} {e} runs past the device end {limit}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parses the trace text format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if kind.is_none() {
                kind = Some(line.parse::<TraceKind>().map_err(|_| {
                    Error::parse(line_no, format!("expected `read` or `write`, got {line:?}"))
                })?);
                continue;
            }
            let (start, len) = line.split_once(',').ok_or_else(|| {
                Error::parse(line_no, format!("expected `start,len`, got {line:?}"))
            })?;
            let start: u64 = start
                .trim()
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad start {:?}", start.trim())))?;
            let len_str = len.trim();
            let len: i128 = len_str
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad length {len_str:?}")))?;
            if len <= 0 {
                return Err(Error::parse(
                    line_no,
                    format!("length must be positive, got {len}"),
                ));
            }
            let len =
                u64::try_from(len).map_err(|_| Error::parse(line_no, "length out of range"))?;
            let e = Extent::new(start, len).map_err(|e| Error::parse(line_no, e.to_string()))?;
            entries.push(e);
        }
        let kind = kind.ok_or_else(|| Error::parse(1, "missing `read`/`write` header"))?;
        Ok(AccessTrace { kind, entries })
    }

    /// Canonical text form: header plus one `start,len` line per entry.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(8 + self.entries.len() * 12);
        out.push_str(self.kind.as_str());
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!("{},{}\n", e.start, e.len));
        }
        out
    }
}
