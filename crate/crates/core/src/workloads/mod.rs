//! Seeded aging workloads.
//!
//! Every generator is a pure function of its parameters and seed and yields
//! a [`RoundedStream`]: a lazy sequence of [`FsOp`]s in which `Round(r)`
//! markers open each round. Round 0 is the initial state (setup); later
//! rounds age it. Streams are produced one round at a time, so large
//! workloads never materialize in full.

mod fsfb;
mod mailserver;
mod micro;
mod repo;
mod steady;

use std::collections::VecDeque;
use std::path::PathBuf;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simfs::FsOp;

pub use fsfb::{gen_fsfb, FsfbParams};
pub use mailserver::{gen_mailserver, MailserverParams};
pub use micro::{
    gen_interfile, gen_intrafile, synthetic_manifest, InterfileParams, IntrafileParams,
    ManifestSpec,
};
pub use repo::{gen_synthetic_repo, SyntheticRepoParams};
pub use steady::{copy_count, steady_full, SteadyFullParams};

/// A consumer-driven source of ops.
pub trait OpSource: Send {
    fn next_op(&mut self) -> Option<FsOp>;

    /// Tells the source that the op it yielded last failed for lack of
    /// space. Returns whether the source reacted (only fullness controllers
    /// do).
    fn report_enospc(&mut self) -> bool {
        false
    }
}

/// A workload that produces its ops one round at a time.
pub(crate) trait Rounds: Send {
    /// Appends the next round's ops to `out`; `false` once exhausted.
    fn next_round(&mut self, out: &mut Vec<FsOp>) -> bool;
}

/// Turns a round generator into an op source, inserting round markers.
struct ByRound<G> {
    gen: G,
    round: u64,
    buf: VecDeque<FsOp>,
    scratch: Vec<FsOp>,
    done: bool,
}

impl<G: Rounds> OpSource for ByRound<G> {
    fn next_op(&mut self) -> Option<FsOp> {
        loop {
            if let Some(op) = self.buf.pop_front() {
                return Some(op);
            }
            if self.done {
                return None;
            }
            self.scratch.clear();
            if !self.gen.next_round(&mut self.scratch) {
                self.done = true;
                return None;
            }
            self.buf.push_back(FsOp::Round(self.round));
            self.round += 1;
            self.buf.extend(self.scratch.drain(..));
        }
    }
}

struct VecSource(std::vec::IntoIter<FsOp>);

impl OpSource for VecSource {
    fn next_op(&mut self) -> Option<FsOp> {
        self.0.next()
    }
}

/// Splits a flat op list at its round markers, renumbering rounds from 0.
/// Ops before the first marker form a leading round of their own.
pub(crate) struct SplitRounds(VecDeque<Vec<FsOp>>);

impl SplitRounds {
    pub fn new(ops: Vec<FsOp>) -> Self {
        let mut rounds = VecDeque::new();
        let mut cur = Vec::new();
        let mut started = false;
        for op in ops {
            if op.is_round() {
                if started {
                    rounds.push_back(std::mem::take(&mut cur));
                }
            } else {
                cur.push(op);
            }
            started = true;
        }
        if started {
            rounds.push_back(cur);
        }
        SplitRounds(rounds)
    }
}

impl Rounds for SplitRounds {
    fn next_round(&mut self, out: &mut Vec<FsOp>) -> bool {
        match self.0.pop_front() {
            Some(r) => {
                out.extend(r);
                true
            }
            None => false,
        }
    }
}

/// Lazy op stream of a workload.
pub struct RoundedStream {
    src: Box<dyn OpSource>,
}

impl RoundedStream {
    pub fn new(src: impl OpSource + 'static) -> Self {
        RoundedStream { src: Box::new(src) }
    }

    pub(crate) fn by_round(gen: impl Rounds + 'static) -> Self {
        RoundedStream::new(ByRound {
            gen,
            round: 0,
            buf: VecDeque::new(),
            scratch: Vec::new(),
            done: false,
        })
    }

    /// A stream replaying `ops` verbatim.
    pub fn from_ops(ops: Vec<FsOp>) -> Self {
        RoundedStream::new(VecSource(ops.into_iter()))
    }

    /// Forwards an out-of-space failure of the last yielded op.
    pub fn report_enospc(&mut self) -> bool {
        self.src.report_enospc()
    }
}

impl Iterator for RoundedStream {
    type Item = FsOp;

    fn next(&mut self) -> Option<FsOp> {
        self.src.next_op()
    }
}

/// Op stream as text, one op per line.
pub fn export_ops(ops: impl IntoIterator<Item = FsOp>) -> String {
    let mut out = String::new();
    for op in ops {
        out.push_str(&op.to_string());
        out.push('\n');
    }
    out
}

/// Parses the op text format. Blank lines and `#` comments are skipped;
/// round markers must be strictly increasing.
pub fn import_ops(text: &str) -> Result<Vec<FsOp>> {
    let mut ops = Vec::new();
    let mut last_round: Option<u64> = None;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let op = FsOp::parse_line(t, i + 1)?;
        if let FsOp::Round(r) = op {
            if last_round.is_some_and(|l| r <= l) {
                return Err(Error::parse(i + 1, format!("round {r} does not increase")));
            }
            last_round = Some(r);
        }
        ops.push(op);
    }
    Ok(ops)
}

/// Derives an independent seed for sub-stream `(a, b)` of `seed`.
pub(crate) fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(a.wrapping_mul(0x1_0000_0001).wrapping_add(b));
    rng.next_u64()
}

/// Width of the largest index below `n`, for zero-padded names.
pub(crate) fn width(n: u64) -> usize {
    n.saturating_sub(1).max(1).ilog10() as usize + 1
}

/// Workload description as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkloadSpec {
    Intrafile(IntrafileParams),
    Interfile(InterfileParams),
    Fsfb(FsfbParams),
    Mailserver(MailserverParams),
    SyntheticRepo(SyntheticRepoParams),
    SteadyFull(SteadyFullParams),
    /// An externally recorded op stream in the text format.
    OpsFile {
        path: PathBuf,
    },
    /// An op stream given inline in the text format.
    Ops {
        text: String,
    },
}

impl WorkloadSpec {
    pub fn name(&self) -> &'static str {
        match self {
            WorkloadSpec::Intrafile(_) => "intrafile",
            WorkloadSpec::Interfile(_) => "interfile",
            WorkloadSpec::Fsfb(_) => "fsfb",
            WorkloadSpec::Mailserver(_) => "mailserver",
            WorkloadSpec::SyntheticRepo(_) => "synthetic_repo",
            WorkloadSpec::SteadyFull(_) => "steady_full",
            WorkloadSpec::OpsFile { .. } => "ops_file",
            WorkloadSpec::Ops { .. } => "ops",
        }
    }

    /// The op stream for a device of `device_bytes` with `block_size`
    /// blocks.
    pub fn stream(&self, device_bytes: u64, block_size: u64, seed: u64) -> Result<RoundedStream> {
        match self {
            WorkloadSpec::SteadyFull(p) => steady_full(p, device_bytes, block_size, seed),
            other => Ok(RoundedStream::by_round(other.rounds(
                device_bytes,
                block_size,
                seed,
            )?)),
        }
    }

    pub(crate) fn rounds(
        &self,
        device_bytes: u64,
        block_size: u64,
        seed: u64,
    ) -> Result<Box<dyn Rounds>> {
        Ok(match self {
            WorkloadSpec::Intrafile(p) => Box::new(micro::Intrafile::new(p)?),
            WorkloadSpec::Interfile(p) => Box::new(micro::Interfile::new(p, seed)?),
            WorkloadSpec::Fsfb(p) => Box::new(fsfb::Fsfb::new(p, device_bytes, block_size, seed)?),
            WorkloadSpec::Mailserver(p) => Box::new(mailserver::Mailserver::new(p, seed)?),
            WorkloadSpec::SyntheticRepo(p) => Box::new(repo::SyntheticRepo::new(p, seed)?),
            WorkloadSpec::SteadyFull(_) => {
                return Err(Error::InvalidParameter(
                    "steady_full cannot be nested".into(),
                ));
            }
            WorkloadSpec::OpsFile { path } => {
                let text = std::fs::read_to_string(path)?;
                Box::new(SplitRounds::new(import_ops(&text)?))
            }
            WorkloadSpec::Ops { text } => Box::new(SplitRounds::new(import_ops(text)?)),
        })
    }
}

impl Rounds for Box<dyn Rounds> {
    fn next_round(&mut self, out: &mut Vec<FsOp>) -> bool {
        (**self).next_round(out)
    }
}
