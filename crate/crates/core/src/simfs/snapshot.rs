//! Text dump of an image and its parser.
//!
//! ```text
//! fsimage
//! device_blocks 1024
//! block_size 4096
//! allocator {"kind":"first_fit_extent","delayed_allocation":false}
//! dir /d
//! file /d/a 8192 0+2
//! file /d/empty 0 -
//! free 2 1022
//! ```
//!
//! Directories and files appear depth-first in name order, free extents in
//! address order. Equal images render to identical text.

use std::fmt::Write;

use super::namespace::Node;
use super::{AllocatorKind, FsImage};
use crate::error::{Error, Result};
use crate::extent::Extent;

pub(crate) fn render(image: &FsImage) -> String {
    let mut out = String::new();
    let allocator = serde_json::to_string(image.allocator()).expect("allocator serializes");
    let _ = writeln!(out, "fsimage");
    let _ = writeln!(out, "device_blocks {}", image.device_blocks());
    let _ = writeln!(out, "block_size {}", image.block_size());
    let _ = writeln!(out, "allocator {allocator}");
    image.namespace().walk(|path, node| match node {
        Node::Dir(_) => {
            let _ = writeln!(out, "dir {path}");
        }
        Node::File(id) => {
            let f = image.store().file(*id);
            let _ = writeln!(out, "file {path} {} {}", f.size(), extent_list(f.extents()));
        }
    });
    for e in image.store().free.iter() {
        let _ = writeln!(out, "free {} {}", e.start, e.len);
    }
    out
}

fn extent_list(extents: &[Extent]) -> String {
    if extents.is_empty() {
        return "-".into();
    }
    extents
        .iter()
        .map(|e| format!("{}+{}", e.start, e.len))
        .collect::<Vec<_>>()
        .join(",")
}

/// A file entry of a parsed snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotFile {
    pub path: String,
    pub size: u64,
    pub extents: Vec<Extent>,
}

/// Parsed form of [`FsImage::snapshot`] output.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSnapshot {
    pub device_blocks: u64,
    pub block_size: u64,
    pub allocator: AllocatorKind,
    pub dirs: Vec<String>,
    pub files: Vec<SnapshotFile>,
    pub free: Vec<Extent>,
}

fn parse(line: usize, msg: impl Into<String>) -> Error {
    Error::parse(line, msg)
}

fn num(s: Option<&str>, line: usize, what: &str) -> Result<u64> {
    let s = s.ok_or_else(|| parse(line, format!("missing {what}")))?;
    s.parse()
        .map_err(|_| parse(line, format!("invalid {what} {s:?}")))
}

fn parse_extents(s: &str, line: usize) -> Result<Vec<Extent>> {
    if s == "-" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|piece| {
            let (a, b) = piece
                .split_once('+')
                .ok_or_else(|| parse(line, format!("bad extent {piece:?}")))?;
            let start = num(Some(a), line, "extent start")?;
            let len = num(Some(b), line, "extent length")?;
            Extent::new(start, len).map_err(|e| parse(line, e.to_string()))
        })
        .collect()
}

impl ImageSnapshot {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
        match lines.next() {
            Some((_, "fsimage")) => {}
            _ => return Err(parse(1, "expected `fsimage` header")),
        }
        let mut device_blocks = None;
        let mut block_size = None;
        let mut allocator = None;
        let mut snap_dirs = Vec::new();
        let mut files = Vec::new();
        let mut free = Vec::new();
        for (no, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
            let mut words = rest.split_whitespace();
            match tag {
                "device_blocks" => device_blocks = Some(num(words.next(), no, "device_blocks")?),
                "block_size" => block_size = Some(num(words.next(), no, "block_size")?),
                "allocator" => {
                    allocator = Some(
                        serde_json::from_str(rest)
                            .map_err(|e| parse(no, format!("allocator: {e}")))?,
                    )
                }
                "dir" => snap_dirs.push(
                    words
                        .next()
                        .ok_or_else(|| parse(no, "missing path"))?
                        .to_string(),
                ),
                "file" => {
                    let path = words
                        .next()
                        .ok_or_else(|| parse(no, "missing path"))?
                        .to_string();
                    let size = num(words.next(), no, "size")?;
                    let extents = parse_extents(
                        words.next().ok_or_else(|| parse(no, "missing extents"))?,
                        no,
                    )?;
                    files.push(SnapshotFile {
                        path,
                        size,
                        extents,
                    });
                }
                "free" => {
                    let start = num(words.next(), no, "free start")?;
                    let len = num(words.next(), no, "free length")?;
                    free.push(Extent::new(start, len).map_err(|e| parse(no, e.to_string()))?);
                }
                other => return Err(parse(no, format!("unknown record {other:?}"))),
            }
        }
        let missing = |what: &str| Error::TraceFormat(format!("snapshot lacks {what}"));
        Ok(ImageSnapshot {
            device_blocks: device_blocks.ok_or_else(|| missing("device_blocks"))?,
            block_size: block_size.ok_or_else(|| missing("block_size"))?,
            allocator: allocator.ok_or_else(|| missing("allocator"))?,
            dirs: snap_dirs,
            files,
            free,
        })
    }
}
