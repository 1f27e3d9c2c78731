//! Intrafile and interfile microbenchmarks.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{width, RoundedStream, Rounds};
use crate::error::{Error, Result};
use crate::simfs::namespace::validate_path;
use crate::simfs::FsOp;

/// Files grown by round-robin appends after a sequential initial write.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntrafileParams {
    pub n_files: u64,
    pub initial_bytes: u64,
    pub chunk_bytes: u64,
    pub rounds: u64,
}

impl Default for IntrafileParams {
    fn default() -> Self {
        IntrafileParams {
            n_files: 10,
            initial_bytes: 256 * 1024,
            chunk_bytes: 4096,
            rounds: 100,
        }
    }
}

pub(crate) struct Intrafile {
    names: Vec<String>,
    initial: u64,
    chunk: u64,
    rounds: u64,
    next: u64,
}

impl Intrafile {
    pub fn new(p: &IntrafileParams) -> Result<Self> {
        if p.n_files == 0 || p.chunk_bytes == 0 {
            return Err(Error::InvalidParameter(
                "intrafile needs n_files and chunk_bytes > 0".into(),
            ));
        }
        let w = width(p.n_files);
        Ok(Intrafile {
            names: (0..p.n_files).map(|i| format!("/f{i:0w$}")).collect(),
            initial: p.initial_bytes,
            chunk: p.chunk_bytes,
            rounds: p.rounds,
            next: 0,
        })
    }
}

impl Rounds for Intrafile {
    fn next_round(&mut self, out: &mut Vec<FsOp>) -> bool {
        if self.next > self.rounds {
            return false;
        }
        for name in &self.names {
            if self.next == 0 {
                out.push(FsOp::Create(name.clone()));
                if self.initial > 0 {
                    out.push(FsOp::Append(name.clone(), self.initial));
                }
            } else {
                out.push(FsOp::Append(name.clone(), self.chunk));
            }
            out.push(FsOp::Checkpoint);
        }
        self.next += 1;
        true
    }
}

/// Round 0 writes each file whole; round `r` appends one chunk to every
/// file in turn, with a checkpoint after each write.
pub fn gen_intrafile(p: &IntrafileParams) -> Result<RoundedStream> {
    Ok(RoundedStream::by_round(Intrafile::new(p)?))
}

/// Where the interfile file list comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ManifestSpec {
    /// Explicit `(path, bytes)` pairs, sorted by path.
    Files(Vec<(String, u64)>),
    /// A random tree, see [`synthetic_manifest`].
    Synthetic {
        n_files: u64,
        n_dirs: u64,
        file_bytes: u64,
    },
}

impl ManifestSpec {
    pub fn resolve(&self, seed: u64) -> Result<Vec<(String, u64)>> {
        match self {
            ManifestSpec::Files(f) => Ok(f.clone()),
            ManifestSpec::Synthetic {
                n_files,
                n_dirs,
                file_bytes,
            } => Ok(synthetic_manifest(*n_files, *n_dirs, *file_bytes, seed)),
        }
    }
}

/// A sorted manifest of `n_files` files of `file_bytes` each, spread
/// uniformly over a random tree of `n_dirs` directories (each directory's
/// parent drawn uniformly from those before it, root included).
pub fn synthetic_manifest(
    n_files: u64,
    n_dirs: u64,
    file_bytes: u64,
    seed: u64,
) -> Vec<(String, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs = vec![String::new()];
    let wd = width(n_dirs);
    for i in 0..n_dirs {
        let parent = &dirs[rng.gen_range(0..dirs.len())];
        let d = format!("{parent}/d{i:0wd$}");
        dirs.push(d);
    }
    let wf = width(n_files);
    let mut files: Vec<(String, u64)> = (0..n_files)
        .map(|i| {
            (
                format!("{}/f{i:0wf$}", dirs[rng.gen_range(0..dirs.len())]),
                file_bytes,
            )
        })
        .collect();
    files.sort();
    files
}

/// Copy of a sorted manifest in which part of the order is randomized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfileParams {
    pub manifest: ManifestSpec,
    /// Percentage (0 to 100) of the sorted list, from the front, whose copy
    /// order is shuffled.
    pub pct: f64,
}

pub(crate) struct Interfile {
    ops: Option<Vec<FsOp>>,
}

impl Interfile {
    pub fn new(p: &InterfileParams, seed: u64) -> Result<Self> {
        let manifest = p.manifest.resolve(seed)?;
        Ok(Interfile {
            ops: Some(interfile_ops(&manifest, p.pct, seed)?),
        })
    }
}

impl Rounds for Interfile {
    fn next_round(&mut self, out: &mut Vec<FsOp>) -> bool {
        match self.ops.take() {
            Some(ops) => {
                out.extend(ops);
                true
            }
            None => false,
        }
    }
}

/// The copy order: the first `ceil(pct * M / 100)` entries in the order a
/// seeded master permutation of all entries visits them, then the rest in
/// sorted order. Growing `pct` only ever extends the shuffled prefix.
pub(crate) fn copy_order(m: usize, pct: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=100.0).contains(&pct) {
        return Err(Error::InvalidParameter(format!(
            "pct must lie in [0, 100], got {pct}"
        )));
    }
    let prefix = ((pct * m as f64 / 100.0).ceil() as usize).min(m);
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut order: Vec<usize> = perm.into_iter().filter(|&i| i < prefix).collect();
    order.extend(prefix..m);
    Ok(order)
}

fn interfile_ops(manifest: &[(String, u64)], pct: f64, seed: u64) -> Result<Vec<FsOp>> {
    for w in manifest.windows(2) {
        if w[0].0 >= w[1].0 {
            return Err(Error::InvalidParameter(format!(
                "manifest must be sorted and unique: {:?} before {:?}",
                w[0].0, w[1].0
            )));
        }
    }
    for (path, _) in manifest {
        validate_path(path).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    let mut made = BTreeSet::new();
    let mut ops = Vec::new();
    for i in copy_order(manifest.len(), pct, seed)? {
        let (path, bytes) = &manifest[i];
        for (pos, _) in path.match_indices('/').skip(1) {
            let dir = &path[..pos];
            if made.insert(dir.to_string()) {
                ops.push(FsOp::Mkdir(dir.to_string()));
            }
        }
        ops.push(FsOp::Create(path.clone()));
        if *bytes > 0 {
            ops.push(FsOp::Append(path.clone(), *bytes));
        }
        ops.push(FsOp::Checkpoint);
    }
    Ok(ops)
}

/// A single round copying every manifest entry once, creating parent
/// directories on first use.
pub fn gen_interfile(p: &InterfileParams, seed: u64) -> Result<RoundedStream> {
    Ok(RoundedStream::by_round(Interfile::new(p, seed)?))
}
