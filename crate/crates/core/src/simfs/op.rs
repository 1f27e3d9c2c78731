//! File-system mutations and their line-oriented text form.
//!
//! ```text
//! round 0
//! mkdir /src
//! create /src/main.c
//! append /src/main.c 4096
//! rename /src/main.c /src/lib.c
//! delete /src/lib.c
//! checkpoint
//! ```

use std::fmt;

use crate::error::{Error, Result};
use crate::simfs::namespace::validate_path;

/// One logical file-system mutation. `Round` marks the start of a workload
/// round and does not touch the image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FsOp {
    Mkdir(String),
    Create(String),
    Append(String, u64),
    /// Removes a file, or a directory together with everything below it.
    Delete(String),
    Rename(String, String),
    Checkpoint,
    Round(u64),
}

impl FsOp {
    pub fn is_round(&self) -> bool {
        matches!(self, FsOp::Round(_))
    }

    /// Paths referenced by the op.
    pub fn paths(&self) -> Vec<&str> {
        match self {
            FsOp::Mkdir(p) | FsOp::Create(p) | FsOp::Append(p, _) | FsOp::Delete(p) => vec![p],
            FsOp::Rename(a, b) => vec![a, b],
            FsOp::Checkpoint | FsOp::Round(_) => vec![],
        }
    }

    /// Prepends `prefix` (an absolute directory path) to every path.
    pub fn with_prefix(self, prefix: &str) -> FsOp {
        let p = |s: String| format!("{prefix}{s}");
        match self {
            FsOp::Mkdir(a) => FsOp::Mkdir(p(a)),
            FsOp::Create(a) => FsOp::Create(p(a)),
            FsOp::Append(a, n) => FsOp::Append(p(a), n),
            FsOp::Delete(a) => FsOp::Delete(p(a)),
            FsOp::Rename(a, b) => FsOp::Rename(p(a), p(b)),
            other => other,
        }
    }

    /// Parses one line of the op text format. Blank and `#` lines are the
    /// caller's business.
    pub fn parse_line(line: &str, line_no: usize) -> Result<FsOp> {
        let mut words = line.split_whitespace();
        let verb = words
            .next()
            .ok_or_else(|| Error::parse(line_no, "empty line"))?;
        let args: Vec<&str> = words.collect();
        let want = |n: usize| -> Result<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(Error::parse(
                    line_no,
                    format!("`{verb}` takes {n} argument(s), got {}", args.len()),
                ))
            }
        };
        let path = |s: &str| -> Result<String> {
            validate_path(s).map_err(|e| Error::parse(line_no, e.to_string()))?;
            if s == "/" {
                return Err(Error::parse(
                    line_no,
                    "the root directory cannot be an operand",
                ));
            }
            Ok(s.to_string())
        };
        let num = |s: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| Error::parse(line_no, format!("bad number {s:?}")))
        };
        let op = match verb {
            "mkdir" => {
                want(1)?;
                FsOp::Mkdir(path(args[0])?)
            }
            "create" => {
                want(1)?;
                FsOp::Create(path(args[0])?)
            }
            "append" => {
                want(2)?;
                FsOp::Append(path(args[0])?, num(args[1])?)
            }
            "delete" => {
                want(1)?;
                FsOp::Delete(path(args[0])?)
            }
            "rename" => {
                want(2)?;
                FsOp::Rename(path(args[0])?, path(args[1])?)
            }
            "checkpoint" => {
                want(0)?;
                FsOp::Checkpoint
            }
            "round" => {
                want(1)?;
                FsOp::Round(num(args[0])?)
            }
            other => {
                return Err(Error::parse(
                    line_no,
                    format!("unknown operation {other:?}"),
                ))
            }
        };
        Ok(op)
    }
}

impl fmt::Display for FsOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FsOp::Mkdir(p) => write!(f, "mkdir {p}"),
            FsOp::Create(p) => write!(f, "create {p}"),
            FsOp::Append(p, n) => write!(f, "append {p} {n}"),
            FsOp::Delete(p) => write!(f, "delete {p}"),
            FsOp::Rename(a, b) => write!(f, "rename {a} {b}"),
            FsOp::Checkpoint => f.write_str("checkpoint"),
            FsOp::Round(n) => write!(f, "round {n}"),
        }
    }
}
