//! Simulated file system over a block address space.
//!
//! An [`FsImage`] owns a namespace, per-file extent lists, a coalesced free
//! set and one of four allocator models. Allocated extents (file data plus
//! allocator-reserved blocks) and free extents always partition the device.
//! Workloads drive the image with [`FsOp`]s; [`FsImage::checkpoint`] places
//! any deferred data and returns the [`WriteRecord`] for the interval.

mod alloc;
mod free_space;
pub mod namespace;
pub mod op;
mod snapshot;

use std::collections::BTreeMap;
use std::hash::{DefaultHasher, Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extent::{AccessTrace, Extent, TraceKind};
use alloc::Policy;
use free_space::FreeSpace;
use namespace::{Dir, Namespace, Node};

pub use namespace::FileId;
pub use op::FsOp;
pub use snapshot::{ImageSnapshot, SnapshotFile};

/// Allocation policy of an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AllocatorKind {
    /// Lowest-address placement. Without delayed allocation every block is
    /// placed as it is written; with it, each file's dirty bytes become one
    /// request at checkpoint time.
    FirstFitExtent {
        #[serde(default)]
        delayed_allocation: bool,
    },
    /// FFS-style groups: directories are spread to the emptiest group and
    /// files are placed in their directory's group. One reserved block per
    /// group.
    BlockGroup { group_blocks: u64 },
    /// Append-only log of fixed-size segments with greedy cleaning.
    LogStructured {
        segment_blocks: u64,
        #[serde(default = "default_clean_threshold")]
        clean_threshold: f64,
    },
    /// Copy-on-write leaves of a path-keyed tree, packed into contiguous
    /// nodes of at most `node_bytes`, fed through a `buffer_bytes` staging
    /// buffer.
    PackedTree { node_bytes: u64, buffer_bytes: u64 },
}

fn default_clean_threshold() -> f64 {
    0.1
}

impl AllocatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            AllocatorKind::FirstFitExtent { .. } => "first_fit_extent",
            AllocatorKind::BlockGroup { .. } => "block_group",
            AllocatorKind::LogStructured { .. } => "log_structured",
            AllocatorKind::PackedTree { .. } => "packed_tree",
        }
    }

    pub fn validate(&self, block_size: u64) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match *self {
            AllocatorKind::FirstFitExtent { .. } => Ok(()),
            AllocatorKind::BlockGroup { group_blocks } if group_blocks < 2 => {
                bad(format!("group_blocks must be >= 2, got {group_blocks}"))
            }
            AllocatorKind::BlockGroup { .. } => Ok(()),
            AllocatorKind::LogStructured {
                segment_blocks,
                clean_threshold,
            } => {
                if segment_blocks == 0 {
                    bad("segment_blocks must be positive".into())
                } else if !(clean_threshold > 0.0 && clean_threshold < 1.0) {
                    bad(format!(
                        "clean_threshold must lie in (0,1), got {clean_threshold}"
                    ))
                } else {
                    Ok(())
                }
            }
            AllocatorKind::PackedTree {
                node_bytes,
                buffer_bytes,
            } => {
                if node_bytes == 0 || node_bytes % block_size != 0 {
                    bad(format!(
                        "node_bytes must be a positive multiple of {block_size}, got {node_bytes}"
                    ))
                } else if buffer_bytes == 0 {
                    bad("buffer_bytes must be positive".into())
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Physical writes since the previous checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct WriteRecord {
    pub trace: AccessTrace,
    /// Bytes the workload asked to persist.
    pub bytes_logical: u64,
    /// Bytes actually written, including rewrites and relocations.
    pub bytes_physical: u64,
}

impl WriteRecord {
    /// Physical over logical bytes; `None` when nothing logical was written.
    pub fn write_amplification(&self) -> Option<f64> {
        (self.bytes_logical > 0).then(|| self.bytes_physical as f64 / self.bytes_logical as f64)
    }
}

/// A regular file.
#[derive(Debug, Clone)]
pub struct FileData {
    path: String,
    size: u64,
    /// Bytes already placed on the device; the rest is deferred.
    durable: u64,
    extents: Vec<Extent>,
    group: u32,
}

impl FileData {
    pub fn path(&self) -> &str {
        &self.path
    }

    /// Logical size in bytes.
    pub fn size(&self) -> u64 {
        self.size
    }

    /// Physical extents in logical order.
    pub fn extents(&self) -> &[Extent] {
        &self.extents
    }

    pub fn durable_size(&self) -> u64 {
        self.durable
    }
}

/// State shared by every allocator.
#[derive(Debug, Clone)]
pub(crate) struct Store {
    pub device_blocks: u64,
    pub block_size: u64,
    pub free: FreeSpace,
    pub files: BTreeMap<FileId, FileData>,
    pub trace: Vec<Extent>,
    pub bytes_logical: u64,
    pub bytes_physical: u64,
    pub blocks_written: u64,
}

impl Store {
    pub fn blocks_for(&self, bytes: u64) -> u64 {
        bytes.div_ceil(self.block_size)
    }

    pub fn note_write(&mut self, e: Extent) {
        self.trace.push(e);
        self.bytes_physical += e.len * self.block_size;
        self.blocks_written += e.len;
    }

    pub fn file(&self, id: FileId) -> &FileData {
        self.files.get(&id).expect("live file id")
    }

    pub fn file_mut(&mut self, id: FileId) -> &mut FileData {
        self.files.get_mut(&id).expect("live file id")
    }

    /// Drops the deferred tail of a file that could not be placed.
    pub fn drop_pending(&mut self, id: FileId) {
        let f = self.files.get_mut(&id).expect("live file id");
        let lost = f.size - f.durable;
        f.size = f.durable;
        self.bytes_logical = self.bytes_logical.saturating_sub(lost);
    }
}

/// Cumulative counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub blocks_written: u64,
    pub ops_applied: u64,
}

/// Simulated file-system image.
#[derive(Debug, Clone)]
pub struct FsImage {
    kind: AllocatorKind,
    store: Store,
    ns: Namespace,
    policy: Policy,
    reserved: Vec<Extent>,
    next_file: u64,
    ops_applied: u64,
    poisoned: bool,
}

impl FsImage {
    /// An empty image. `device_blocks` must be at least 16 and large enough
    /// for the allocator's reservations.
    pub fn new(device_blocks: u64, block_size: u64, allocator: AllocatorKind) -> Result<Self> {
        if device_blocks < 16 {
            return Err(Error::Capacity(format!(
                "device of {device_blocks} blocks is below the 16-block minimum"
            )));
        }
        if block_size < 512 || !block_size.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "block_size must be a power of two >= 512, got {block_size}"
            )));
        }
        allocator.validate(block_size)?;
        let (policy, reserved) = Policy::new(&allocator, device_blocks, block_size)?;
        let mut free = FreeSpace::new(device_blocks);
        let mut cursor = 0;
        for r in &reserved {
            if r.start > cursor {
                free.release(Extent {
                    start: cursor,
                    len: r.start - cursor,
                })?;
            }
            cursor = r.end();
        }
        if cursor < device_blocks {
            free.release(Extent {
                start: cursor,
                len: device_blocks - cursor,
            })?;
        }
        Ok(FsImage {
            kind: allocator,
            store: Store {
                device_blocks,
                block_size,
                free,
                files: BTreeMap::new(),
                trace: Vec::new(),
                bytes_logical: 0,
                bytes_physical: 0,
                blocks_written: 0,
            },
            ns: Namespace::default(),
            policy,
            reserved,
            next_file: 0,
            ops_applied: 0,
            poisoned: false,
        })
    }

    pub fn device_blocks(&self) -> u64 {
        self.store.device_blocks
    }

    pub fn block_size(&self) -> u64 {
        self.store.block_size
    }

    pub fn allocator(&self) -> &AllocatorKind {
        &self.kind
    }

    pub fn counters(&self) -> Counters {
        Counters {
            blocks_written: self.store.blocks_written,
            ops_applied: self.ops_applied,
        }
    }

    /// Set after an unrecoverable allocation failure; every later op fails.
    pub fn is_poisoned(&self) -> bool {
        self.poisoned
    }

    /// Free extents in address order.
    pub fn free_extents(&self) -> Vec<Extent> {
        self.store.free.to_vec()
    }

    pub fn free_blocks(&self) -> u64 {
        self.store.free.free_blocks()
    }

    /// Blocks reserved by the allocator.
    pub fn reserved_extents(&self) -> &[Extent] {
        &self.reserved
    }

    /// Allocated blocks (including reservations) over device blocks.
    pub fn fullness(&self) -> f64 {
        (self.store.device_blocks - self.free_blocks()) as f64 / self.store.device_blocks as f64
    }

    pub fn file_count(&self) -> usize {
        self.store.files.len()
    }

    /// Sum of logical file sizes.
    pub fn logical_bytes(&self) -> u64 {
        self.store.files.values().map(|f| f.size).sum()
    }

    pub fn file(&self, path: &str) -> Result<&FileData> {
        let id = self.ns.file(path)?;
        Ok(self.store.file(id))
    }

    /// Whether a directory exists at `path`.
    pub fn is_dir(&self, path: &str) -> bool {
        path == "/" || matches!(self.ns.get(path), Ok(Some(Node::Dir(_))))
    }

    pub fn exists(&self, path: &str) -> bool {
        path == "/" || matches!(self.ns.get(path), Ok(Some(_)))
    }

    /// Calls `f` for every regular file, depth-first in name order.
    pub fn for_each_file_dfs(&self, mut f: impl FnMut(&str, &FileData)) {
        self.ns.walk(|path, node| {
            if let Node::File(id) = node {
                f(path, self.store.file(*id));
            }
        });
    }

    /// Directories depth-first in name order (root excluded).
    pub fn dirs_dfs(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.ns.walk(|p, n| {
            if matches!(n, Node::Dir(_)) {
                out.push(p.to_string());
            }
        });
        out
    }

    /// `(path, size)` for every file in depth-first order.
    pub fn contents(&self) -> Vec<(String, u64)> {
        let mut out = Vec::with_capacity(self.store.files.len());
        self.for_each_file_dfs(|p, f| out.push((p.to_string(), f.size)));
        out
    }

    /// Digest of the logical contents: directory set plus file paths and
    /// sizes. Equal across images holding the same logical state.
    pub fn content_digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.ns.walk(|p, n| {
            p.hash(&mut h);
            match n {
                Node::Dir(_) => 0u64.hash(&mut h),
                Node::File(id) => (1 + self.store.file(*id).size).hash(&mut h),
            }
        });
        h.finish()
    }

    /// Applies one op. Returns the write record when the op is a checkpoint.
    pub fn apply(&mut self, op: &FsOp) -> Result<Option<WriteRecord>> {
        if self.poisoned {
            return Err(Error::NoSpace {
                needed: 0,
                free: self.free_blocks(),
            });
        }
        let out = match op {
            FsOp::Round(_) => return Ok(None),
            FsOp::Checkpoint => Some(self.checkpoint()?),
            FsOp::Mkdir(path) => {
                let group = self.policy.directory_group();
                self.ns.insert(
                    path,
                    Node::Dir(Dir {
                        group,
                        ..Dir::default()
                    }),
                )?;
                None
            }
            FsOp::Create(path) => {
                let group = self.ns.parent_group(path)?;
                let id = FileId(self.next_file);
                self.ns.insert(path, Node::File(id))?;
                self.next_file += 1;
                let data = FileData {
                    path: path.clone(),
                    size: 0,
                    durable: 0,
                    extents: Vec::new(),
                    group,
                };
                self.store.files.insert(id, data);
                None
            }
            FsOp::Append(path, n) => {
                let id = self.ns.file(path)?;
                if *n > 0 {
                    let r = self.policy.append(&mut self.store, id, *n);
                    self.settle(r)?;
                }
                None
            }
            FsOp::Delete(path) => {
                let node = self.ns.remove(path)?;
                for (_, id) in Namespace::files_under(&node, path) {
                    let data = self.store.files.remove(&id).expect("live file id");
                    // deferred bytes of a deleted file are never persisted
                    self.store.bytes_logical = self
                        .store
                        .bytes_logical
                        .saturating_sub(data.size - data.durable);
                    let r = self.policy.delete(&mut self.store, id, data);
                    self.settle(r)?;
                }
                None
            }
            FsOp::Rename(from, to) => {
                if to.starts_with(from.as_str()) && to.as_bytes().get(from.len()) == Some(&b'/') {
                    return Err(Error::InvalidOp(format!("cannot move {from} into itself")));
                }
                if self.exists(to) {
                    return Err(Error::InvalidOp(format!("{to} already exists")));
                }
                let node = self.ns.remove(from)?;
                if let Err(e) = self.ns.insert(to, node.clone()) {
                    self.ns.insert(from, node).expect("reinsert detached node");
                    return Err(e);
                }
                let mut moved = Vec::new();
                for (new_path, id) in Namespace::files_under(&node, to) {
                    let f = self.store.file_mut(id);
                    let old = std::mem::replace(&mut f.path, new_path);
                    moved.push((old, id));
                }
                let r = self.policy.renamed(&mut self.store, &moved);
                self.settle(r)?;
                None
            }
        };
        self.ops_applied += 1;
        Ok(out)
    }

    fn settle(&mut self, r: Result<()>) -> Result<()> {
        if let Err(e) = &r {
            if e.is_no_space() && self.policy.poisons_on_no_space() {
                self.poisoned = true;
            }
        }
        r
    }

    /// Places all deferred writes and returns the interval's write record.
    /// On `NoSpace` the image stays consistent (files whose data could not be
    /// placed keep only their durable prefix), except for the packed tree,
    /// which becomes poisoned.
    pub fn checkpoint(&mut self) -> Result<WriteRecord> {
        if self.poisoned {
            return Err(Error::NoSpace {
                needed: 0,
                free: self.free_blocks(),
            });
        }
        let r = self.policy.checkpoint(&mut self.store);
        self.settle(r)?;
        Ok(self.take_record())
    }

    fn take_record(&mut self) -> WriteRecord {
        let trace = AccessTrace {
            kind: TraceKind::Write,
            entries: std::mem::take(&mut self.store.trace),
        };
        let rec = WriteRecord {
            trace,
            bytes_logical: self.store.bytes_logical,
            bytes_physical: self.store.bytes_physical,
        };
        self.store.bytes_logical = 0;
        self.store.bytes_physical = 0;
        rec
    }

    /// Fresh image with the same device and allocator holding the same
    /// logical contents, written file by file in depth-first name order.
    pub fn unaged_copy(&self) -> Result<FsImage> {
        self.unaged_copy_with(|_| {})
    }

    /// [`FsImage::unaged_copy`], handing every checkpoint's write record of
    /// the copy to `on_record`.
    pub fn unaged_copy_with(&self, mut on_record: impl FnMut(WriteRecord)) -> Result<FsImage> {
        let mut copy = FsImage::new(
            self.store.device_blocks,
            self.store.block_size,
            self.kind.clone(),
        )?;
        let mut ops = Vec::new();
        self.ns.walk(|path, node| match node {
            Node::Dir(_) => ops.push(FsOp::Mkdir(path.to_string())),
            Node::File(id) => {
                ops.push(FsOp::Create(path.to_string()));
                let size = self.store.file(*id).size;
                if size > 0 {
                    ops.push(FsOp::Append(path.to_string(), size));
                }
                ops.push(FsOp::Checkpoint);
            }
        });
        for op in &ops {
            if let Some(rec) = copy.apply(op)? {
                on_record(rec);
            }
        }
        on_record(copy.checkpoint()?);
        Ok(copy)
    }

    /// Verifies the partition, coverage and coalescing invariants.
    pub fn check_consistency(&self) -> Result<()> {
        let st = &self.store;
        let mut allocated: Vec<Extent> = self.reserved.clone();
        for (id, f) in &st.files {
            let covered: u64 = f.extents.iter().map(|e| e.len).sum();
            if covered != st.blocks_for(f.durable) {
                return Err(Error::Consistency(format!(
                    "file {} ({id:?}) covers {covered} blocks but holds {} durable bytes",
                    f.path, f.durable
                )));
            }
            if f.durable > f.size {
                return Err(Error::Consistency(format!(
                    "file {} durable beyond size",
                    f.path
                )));
            }
            if self.policy.owned_extents().is_none() {
                allocated.extend_from_slice(&f.extents);
            }
        }
        if let Some(owned) = self.policy.owned_extents() {
            allocated.extend(owned);
        }
        allocated.sort_unstable();
        for w in allocated.windows(2) {
            if w[0].end() > w[1].start {
                return Err(Error::Consistency(format!(
                    "allocated extents {} and {} overlap",
                    w[0], w[1]
                )));
            }
        }
        let free = st.free.to_vec();
        for w in free.windows(2) {
            if w[0].end() >= w[1].start {
                return Err(Error::Consistency(format!(
                    "free extents {} and {} not coalesced",
                    w[0], w[1]
                )));
            }
        }
        let mut all: Vec<Extent> = allocated;
        all.extend_from_slice(&free);
        all.sort_unstable();
        let mut cursor = 0;
        for e in &all {
            if e.start != cursor {
                let what = if e.start > cursor {
                    "unaccounted gap"
                } else {
                    "overlap"
                };
                return Err(Error::Consistency(format!(
                    "{what} at block {cursor} (next extent {e})"
                )));
            }
            cursor = e.end();
        }
        if cursor != st.device_blocks {
            return Err(Error::Consistency(format!(
                "partition ends at {cursor}, device has {}",
                st.device_blocks
            )));
        }
        let free_sum: u64 = free.iter().map(|e| e.len).sum();
        if free_sum != st.free.free_blocks() {
            return Err(Error::Consistency("free block counter drifted".into()));
        }
        self.policy.check(st)
    }

    /// Deterministic text dump of the image.
    pub fn snapshot(&self) -> String {
        snapshot::render(self)
    }

    pub(crate) fn namespace(&self) -> &Namespace {
        &self.ns
    }

    pub(crate) fn store(&self) -> &Store {
        &self.store
    }
}

#[cfg(test)]
mod tests;
