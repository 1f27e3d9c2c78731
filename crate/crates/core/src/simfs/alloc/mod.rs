//! Allocator models behind a single dispatch enum.

mod block_group;
mod first_fit;
mod log_structured;
mod packed_tree;

use crate::error::{Error, Result};
use crate::extent::{push_coalesced, Extent};
use crate::simfs::{AllocatorKind, FileData, FileId, Store};

pub(crate) use block_group::BlockGroups;
pub(crate) use first_fit::FirstFit;
pub(crate) use log_structured::LogState;
pub(crate) use packed_tree::TreeState;

#[derive(Debug, Clone)]
pub(crate) enum Policy {
    FirstFit(FirstFit),
    BlockGroup(BlockGroups),
    Log(LogState),
    Tree(TreeState),
}

impl Policy {
    /// Builds the allocator state and the blocks it reserves, in address
    /// order.
    pub fn new(
        kind: &AllocatorKind,
        device_blocks: u64,
        block_size: u64,
    ) -> Result<(Policy, Vec<Extent>)> {
        Ok(match *kind {
            AllocatorKind::FirstFitExtent { delayed_allocation } => (
                Policy::FirstFit(FirstFit::new(delayed_allocation)),
                Vec::new(),
            ),
            AllocatorKind::BlockGroup { group_blocks } => {
                let (g, reserved) = BlockGroups::new(device_blocks, group_blocks)?;
                (Policy::BlockGroup(g), reserved)
            }
            AllocatorKind::LogStructured {
                segment_blocks,
                clean_threshold,
            } => {
                let (l, reserved) = LogState::new(device_blocks, segment_blocks, clean_threshold)?;
                (Policy::Log(l), reserved)
            }
            AllocatorKind::PackedTree {
                node_bytes,
                buffer_bytes,
            } => {
                let node_blocks = node_bytes / block_size;
                if device_blocks < 2 * node_blocks {
                    return Err(Error::Capacity(format!(
                        "device of {device_blocks} blocks cannot hold a {node_blocks}-block node and its copy-on-write shadow"
                    )));
                }
                let buffer_blocks = buffer_bytes.div_ceil(block_size);
                (
                    Policy::Tree(TreeState::new(node_blocks, buffer_blocks)),
                    Vec::new(),
                )
            }
        })
    }

    /// Group for a newly created directory.
    pub fn directory_group(&self) -> u32 {
        match self {
            Policy::BlockGroup(g) => g.directory_group(),
            _ => 0,
        }
    }

    pub fn poisons_on_no_space(&self) -> bool {
        matches!(self, Policy::Tree(_))
    }

    pub fn append(&mut self, st: &mut Store, id: FileId, bytes: u64) -> Result<()> {
        match self {
            Policy::FirstFit(p) => p.append(st, id, bytes),
            Policy::BlockGroup(p) => p.append(st, id, bytes),
            Policy::Log(p) => {
                p.append(st, id, bytes);
                Ok(())
            }
            Policy::Tree(p) => p.append(st, id, bytes),
        }
    }

    /// `data` has already been removed from the store.
    pub fn delete(&mut self, st: &mut Store, id: FileId, data: FileData) -> Result<()> {
        match self {
            Policy::FirstFit(p) => p.delete(st, id, data),
            Policy::BlockGroup(p) => p.release_all(st, &data.extents),
            Policy::Log(p) => p.delete(st, id, data),
            Policy::Tree(p) => {
                p.delete(st, id, data);
                Ok(())
            }
        }
    }

    /// Files in `moved` already carry their new paths; the old ones are
    /// passed alongside.
    pub fn renamed(&mut self, st: &mut Store, moved: &[(String, FileId)]) -> Result<()> {
        match self {
            Policy::Tree(p) => p.renamed(st, moved),
            _ => Ok(()),
        }
    }

    pub fn checkpoint(&mut self, st: &mut Store) -> Result<()> {
        match self {
            Policy::FirstFit(p) => p.checkpoint(st),
            Policy::BlockGroup(_) => Ok(()),
            Policy::Log(p) => p.checkpoint(st),
            Policy::Tree(p) => p.flush(st),
        }
    }

    /// Extents the allocator holds on behalf of files, when file extent
    /// lists alone do not describe allocation (tree nodes may still hold
    /// blocks of deleted files until the next flush).
    pub fn owned_extents(&self) -> Option<Vec<Extent>> {
        match self {
            Policy::Tree(p) => Some(p.node_extents()),
            _ => None,
        }
    }

    /// Allocator-specific invariants.
    pub fn check(&self, st: &Store) -> Result<()> {
        match self {
            Policy::FirstFit(_) => Ok(()),
            Policy::BlockGroup(p) => p.check(st),
            Policy::Log(p) => p.check(st),
            Policy::Tree(p) => p.check(st),
        }
    }
}

/// Grows a file's placed data in place up to its logical size. The partially
/// filled last block, if any, is rewritten where it lies; `alloc` must take
/// and return exactly `need` new blocks.
pub(crate) fn grow_in_place(
    st: &mut Store,
    id: FileId,
    mut alloc: impl FnMut(&mut Store, u64, &FileData) -> Result<Vec<Extent>>,
) -> Result<()> {
    let f = st.file(id);
    let (durable, size) = (f.durable, f.size);
    if size <= durable {
        return Ok(());
    }
    let need = st.blocks_for(size) - st.blocks_for(durable);
    let free = st.free.free_blocks();
    if need > free {
        return Err(Error::NoSpace { needed: need, free });
    }
    if durable % st.block_size != 0 {
        let last = f.extents.last().expect("partial block is placed").end() - 1;
        st.note_write(Extent {
            start: last,
            len: 1,
        });
    }
    if need > 0 {
        let snapshot = st.file(id).clone();
        let pieces = alloc(st, need, &snapshot)?;
        debug_assert_eq!(pieces.iter().map(|p| p.len).sum::<u64>(), need);
        for p in pieces {
            st.note_write(p);
            push_coalesced(&mut st.file_mut(id).extents, p);
        }
    }
    st.file_mut(id).durable = size;
    Ok(())
}
