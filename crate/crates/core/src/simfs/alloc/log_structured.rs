//! Log-structured placement with greedy segment cleaning.
//!
//! Data is only ever written at the log head, which walks through clean
//! segments in address order (wrapping). Overwritten or deleted blocks stay
//! dead inside their segment until the segment's live count reaches zero or
//! the cleaner relocates its survivors. The cleaner runs at checkpoint time
//! whenever clean segments fall below `clean_threshold` of the total, always
//! picking the segment with the least live data (lowest index on ties).

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::extent::{push_coalesced, Extent};
use crate::simfs::{FileData, FileId, Store};

#[derive(Debug, Clone)]
pub(crate) struct LogState {
    seg_blocks: u64,
    n_segs: u64,
    threshold: f64,
    live: Vec<u64>,
    clean: BTreeSet<u64>,
    /// Current head segment and next block to write.
    head: Option<(u64, u64)>,
    /// Runs written by the log: start -> (owner, len). Never crosses a
    /// segment boundary.
    placed: BTreeMap<u64, (FileId, u64)>,
    dirty: Vec<FileId>,
    dirty_set: BTreeSet<FileId>,
}

impl LogState {
    pub fn new(device_blocks: u64, seg_blocks: u64, threshold: f64) -> Result<(Self, Vec<Extent>)> {
        let n_segs = device_blocks / seg_blocks;
        if n_segs < 2 {
            return Err(Error::Capacity(format!(
                "device of {device_blocks} blocks holds fewer than two {seg_blocks}-block segments"
            )));
        }
        let tail = n_segs * seg_blocks;
        let reserved = if tail < device_blocks {
            vec![Extent {
                start: tail,
                len: device_blocks - tail,
            }]
        } else {
            Vec::new()
        };
        let state = LogState {
            seg_blocks,
            n_segs,
            threshold,
            live: vec![0; n_segs as usize],
            clean: (0..n_segs).collect(),
            head: None,
            placed: BTreeMap::new(),
            dirty: Vec::new(),
            dirty_set: BTreeSet::new(),
        };
        Ok((state, reserved))
    }

    fn seg_of(&self, block: u64) -> u64 {
        block / self.seg_blocks
    }

    fn head_seg(&self) -> Option<u64> {
        self.head.map(|(s, _)| s)
    }

    fn head_room(&self) -> u64 {
        self.head
            .map_or(0, |(s, pos)| (s + 1) * self.seg_blocks - pos)
    }

    /// Blocks writable without cleaning.
    fn capacity(&self) -> u64 {
        self.head_room() + self.clean.len() as u64 * self.seg_blocks
    }

    fn clean_fraction(&self) -> f64 {
        self.clean.len() as f64 / self.n_segs as f64
    }

    fn advance(&mut self) -> Result<()> {
        let cur = self.head_seg();
        let next = cur
            .and_then(|c| self.clean.range(c + 1..).next().copied())
            .or_else(|| self.clean.iter().next().copied())
            .ok_or(Error::NoSpace { needed: 1, free: 0 })?;
        self.clean.remove(&next);
        if let Some(c) = cur {
            if self.live[c as usize] == 0 {
                self.clean.insert(c);
            }
        }
        self.head = Some((next, next * self.seg_blocks));
        Ok(())
    }

    /// Writes `n` blocks for `owner` at the head.
    fn alloc(&mut self, st: &mut Store, owner: FileId, mut n: u64) -> Result<Vec<Extent>> {
        let mut out = Vec::new();
        while n > 0 {
            if self.head_room() == 0 {
                self.advance()?;
            }
            let (seg, pos) = self.head.expect("head after advance");
            let take = n.min(self.head_room());
            let e = Extent {
                start: pos,
                len: take,
            };
            st.free.take(e)?;
            self.live[seg as usize] += take;
            self.placed.insert(e.start, (owner, take));
            self.head = Some((seg, pos + take));
            out.push(e);
            n -= take;
        }
        Ok(out)
    }

    fn unmap(&mut self, e: Extent) {
        let hits: Vec<(u64, FileId, u64)> = self
            .placed
            .range(..e.end())
            .rev()
            .take_while(|(&s, &(_, l))| s + l > e.start)
            .map(|(&s, &(o, l))| (s, o, l))
            .collect();
        for (s, owner, l) in hits {
            self.placed.remove(&s);
            if s < e.start {
                self.placed.insert(s, (owner, e.start - s));
            }
            if s + l > e.end() {
                self.placed.insert(e.end(), (owner, s + l - e.end()));
            }
        }
    }

    fn release(&mut self, st: &mut Store, e: Extent) -> Result<()> {
        st.free.release(e)?;
        self.unmap(e);
        let mut s = e.start;
        while s < e.end() {
            let seg = self.seg_of(s);
            let end = ((seg + 1) * self.seg_blocks).min(e.end());
            let live = &mut self.live[seg as usize];
            *live -= end - s;
            if *live == 0 && self.head_seg() != Some(seg) {
                self.clean.insert(seg);
            }
            s = end;
        }
        Ok(())
    }

    pub fn append(&mut self, st: &mut Store, id: FileId, bytes: u64) {
        st.file_mut(id).size += bytes;
        st.bytes_logical += bytes;
        if self.dirty_set.insert(id) {
            self.dirty.push(id);
        }
    }

    pub fn delete(&mut self, st: &mut Store, id: FileId, data: FileData) -> Result<()> {
        if self.dirty_set.remove(&id) {
            self.dirty.retain(|d| *d != id);
        }
        for e in data.extents {
            self.release(st, e)?;
        }
        Ok(())
    }

    pub fn checkpoint(&mut self, st: &mut Store) -> Result<()> {
        let mut first_err = None;
        for id in std::mem::take(&mut self.dirty) {
            if let Err(e) = self.write_file(st, id) {
                st.drop_pending(id);
                first_err.get_or_insert(e);
            }
        }
        self.dirty_set.clear();
        if self.clean_fraction() < self.threshold {
            let goal = (self.threshold * self.n_segs as f64).ceil() as usize;
            self.clean_until(st, |me| me.clean.len() >= goal)?;
        }
        first_err.map_or(Ok(()), Err)
    }

    /// Writes a file's deferred bytes at the head; a partially filled last
    /// block is rewritten there too.
    fn write_file(&mut self, st: &mut Store, id: FileId) -> Result<()> {
        let f = st.file(id);
        let (durable, size) = (f.durable, f.size);
        if size <= durable {
            return Ok(());
        }
        let partial = durable % st.block_size != 0;
        let need = st.blocks_for(size) - st.blocks_for(durable) + partial as u64;
        if need > self.capacity() {
            self.clean_until(st, |me| me.capacity() >= need)?;
        }
        if need > self.capacity() {
            return Err(Error::NoSpace {
                needed: need,
                free: self.capacity(),
            });
        }
        if partial {
            let f = st.file_mut(id);
            let last = f.extents.last_mut().expect("partial block is placed");
            let block = last.end() - 1;
            last.len -= 1;
            if last.len == 0 {
                f.extents.pop();
            }
            self.release(
                st,
                Extent {
                    start: block,
                    len: 1,
                },
            )?;
        }
        for p in self.alloc(st, id, need)? {
            st.note_write(p);
            push_coalesced(&mut st.file_mut(id).extents, p);
        }
        st.file_mut(id).durable = size;
        Ok(())
    }

    fn victim(&self) -> Option<u64> {
        let head = self.head_seg();
        (0..self.n_segs)
            .filter(|&s| Some(s) != head && !self.clean.contains(&s) && self.live[s as usize] > 0)
            .min_by_key(|&s| (self.live[s as usize], s))
    }

    /// Greedy cleaning until `done` holds or no victim frees space.
    fn clean_until(&mut self, st: &mut Store, done: impl Fn(&Self) -> bool) -> Result<()> {
        for _ in 0..self.n_segs {
            if done(self) {
                break;
            }
            let Some(v) = self.victim() else { break };
            let live = self.live[v as usize];
            if live >= self.seg_blocks || live > self.capacity() {
                break;
            }
            self.relocate(st, v)?;
        }
        Ok(())
    }

    fn relocate(&mut self, st: &mut Store, seg: u64) -> Result<()> {
        let lo = seg * self.seg_blocks;
        let runs: Vec<(u64, FileId, u64)> = self
            .placed
            .range(lo..lo + self.seg_blocks)
            .map(|(&s, &(o, l))| (s, o, l))
            .collect();
        for (start, owner, len) in runs {
            let moved = self.alloc(st, owner, len)?;
            for p in &moved {
                st.note_write(*p);
            }
            let old = Extent { start, len };
            replace_range(&mut st.file_mut(owner).extents, old, &moved)?;
            self.release(st, old)?;
        }
        Ok(())
    }

    pub fn check(&self, st: &Store) -> Result<()> {
        let mut live = vec![0u64; self.n_segs as usize];
        for f in st.files.values() {
            for e in &f.extents {
                let mut s = e.start;
                while s < e.end() {
                    let seg = self.seg_of(s);
                    let end = ((seg + 1) * self.seg_blocks).min(e.end());
                    live[seg as usize] += end - s;
                    s = end;
                }
            }
        }
        if live != self.live {
            return Err(Error::Consistency("segment live counts drifted".into()));
        }
        for &c in &self.clean {
            if self.live[c as usize] != 0 || Some(c) == self.head_seg() {
                return Err(Error::Consistency(format!(
                    "segment {c} marked clean but in use"
                )));
            }
        }
        let placed: u64 = self.placed.values().map(|&(_, l)| l).sum();
        if placed != live.iter().sum::<u64>() {
            return Err(Error::Consistency(
                "placement map does not match live blocks".into(),
            ));
        }
        Ok(())
    }
}

/// Replaces the physical run `old` inside a file's extent list with `new`,
/// keeping logical order.
fn replace_range(extents: &mut Vec<Extent>, old: Extent, new: &[Extent]) -> Result<()> {
    let idx = extents
        .iter()
        .position(|e| e.contains(old.start) && e.end() >= old.end())
        .ok_or_else(|| Error::Consistency(format!("run {old} not found in owner's extents")))?;
    let host = extents[idx];
    let mut out = Vec::with_capacity(extents.len() + new.len() + 2);
    for e in &extents[..idx] {
        push_coalesced(&mut out, *e);
    }
    if old.start > host.start {
        push_coalesced(
            &mut out,
            Extent {
                start: host.start,
                len: old.start - host.start,
            },
        );
    }
    for e in new {
        push_coalesced(&mut out, *e);
    }
    if host.end() > old.end() {
        push_coalesced(
            &mut out,
            Extent {
                start: old.end(),
                len: host.end() - old.end(),
            },
        );
    }
    for e in &extents[idx + 1..] {
        push_coalesced(&mut out, *e);
    }
    *extents = out;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replace_range_keeps_order() {
        let mut v = vec![Extent { start: 0, len: 10 }, Extent { start: 50, len: 2 }];
        replace_range(
            &mut v,
            Extent { start: 3, len: 2 },
            &[Extent { start: 90, len: 2 }],
        )
        .unwrap();
        assert_eq!(
            v,
            vec![
                Extent { start: 0, len: 3 },
                Extent { start: 90, len: 2 },
                Extent { start: 5, len: 5 },
                Extent { start: 50, len: 2 }
            ]
        );
        assert!(replace_range(&mut v, Extent { start: 40, len: 1 }, &[]).is_err());
    }
}
