//! Lowest-address placement.

use std::collections::BTreeSet;

use crate::error::Result;
use crate::extent::Extent;
use crate::simfs::alloc::grow_in_place;
use crate::simfs::{FileData, FileId, Store};

#[derive(Debug, Clone)]
pub(crate) struct FirstFit {
    delayed: bool,
    /// Files with deferred bytes, in order of first dirtying.
    dirty: Vec<FileId>,
    dirty_set: BTreeSet<FileId>,
}

impl FirstFit {
    pub fn new(delayed: bool) -> Self {
        FirstFit {
            delayed,
            dirty: Vec::new(),
            dirty_set: BTreeSet::new(),
        }
    }

    pub fn append(&mut self, st: &mut Store, id: FileId, bytes: u64) -> Result<()> {
        st.file_mut(id).size += bytes;
        st.bytes_logical += bytes;
        if self.delayed {
            if self.dirty_set.insert(id) {
                self.dirty.push(id);
            }
            return Ok(());
        }
        let r = grow_in_place(st, id, |st, need, _| {
            take_pieces(st, st.free.lowest_pieces(need, 0, st.device_blocks))
        });
        if r.is_err() {
            st.drop_pending(id);
        }
        r
    }

    pub fn delete(&mut self, st: &mut Store, id: FileId, data: FileData) -> Result<()> {
        if self.dirty_set.remove(&id) {
            self.dirty.retain(|d| *d != id);
        }
        for e in data.extents {
            st.free.release(e)?;
        }
        Ok(())
    }

    /// One request per dirty file: the lowest hole holding the whole request,
    /// else lowest-address pieces.
    pub fn checkpoint(&mut self, st: &mut Store) -> Result<()> {
        let mut first_err = None;
        for id in std::mem::take(&mut self.dirty) {
            let r = grow_in_place(st, id, |st, need, _| {
                let pieces = match st.free.first_fit(need, 0, st.device_blocks) {
                    Some(s) => vec![Extent {
                        start: s,
                        len: need,
                    }],
                    None => st.free.lowest_pieces(need, 0, st.device_blocks),
                };
                take_pieces(st, pieces)
            });
            if let Err(e) = r {
                st.drop_pending(id);
                first_err.get_or_insert(e);
            }
        }
        self.dirty_set.clear();
        first_err.map_or(Ok(()), Err)
    }
}

pub(crate) fn take_pieces(st: &mut Store, pieces: Vec<Extent>) -> Result<Vec<Extent>> {
    for p in &pieces {
        st.free.take(*p)?;
    }
    Ok(pieces)
}
