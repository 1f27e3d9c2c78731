//! Coalesced free-extent set with a first-fit index.
//!
//! Extents live in a `BTreeMap` keyed by start block. A max-segment-tree over
//! fixed-size address chunks (an extent belongs to the chunk holding its
//! start) answers "lowest extent at or after X with at least N blocks"
//! without walking every hole.

use std::collections::BTreeMap;
use std::ops::Bound::{Excluded, Included, Unbounded};

use crate::error::{Error, Result};
use crate::extent::Extent;

const CHUNK_SHIFT: u32 = 8;

#[derive(Debug, Clone)]
pub(crate) struct FreeSpace {
    extents: BTreeMap<u64, u64>,
    free_blocks: u64,
    device_blocks: u64,
    leaves: usize,
    tree: Vec<u64>,
}

impl FreeSpace {
    /// A device with every block allocated; callers release the free ranges.
    pub fn new(device_blocks: u64) -> Self {
        let chunks = ((device_blocks >> CHUNK_SHIFT) + 1) as usize;
        let leaves = chunks.next_power_of_two();
        FreeSpace {
            extents: BTreeMap::new(),
            free_blocks: 0,
            device_blocks,
            leaves,
            tree: vec![0; 2 * leaves],
        }
    }

    pub fn free_blocks(&self) -> u64 {
        self.free_blocks
    }

    pub fn iter(&self) -> impl Iterator<Item = Extent> + '_ {
        self.extents
            .iter()
            .map(|(&start, &len)| Extent { start, len })
    }

    pub fn to_vec(&self) -> Vec<Extent> {
        self.iter().collect()
    }

    fn chunk_of(block: u64) -> usize {
        (block >> CHUNK_SHIFT) as usize
    }

    fn refresh_chunk(&mut self, chunk: usize) {
        let lo = (chunk as u64) << CHUNK_SHIFT;
        let hi = lo + (1u64 << CHUNK_SHIFT);
        let max = self
            .extents
            .range(lo..hi)
            .map(|(_, &l)| l)
            .max()
            .unwrap_or(0);
        let mut i = chunk + self.leaves;
        self.tree[i] = max;
        while i > 1 {
            i /= 2;
            self.tree[i] = self.tree[2 * i].max(self.tree[2 * i + 1]);
        }
    }

    fn insert_raw(&mut self, start: u64, len: u64) {
        self.extents.insert(start, len);
        self.refresh_chunk(Self::chunk_of(start));
    }

    fn remove_raw(&mut self, start: u64) -> u64 {
        let len = self.extents.remove(&start).expect("extent present");
        self.refresh_chunk(Self::chunk_of(start));
        len
    }

    /// The free extent containing `block`, if any.
    pub fn containing(&self, block: u64) -> Option<Extent> {
        let (&s, &l) = self.extents.range(..=block).next_back()?;
        (block < s + l).then_some(Extent { start: s, len: l })
    }

    /// Free blocks available starting exactly at `block`.
    pub fn run_at(&self, block: u64) -> u64 {
        self.containing(block).map_or(0, |e| e.end() - block)
    }

    /// Marks `e` free, merging with neighbours.
    pub fn release(&mut self, e: Extent) -> Result<()> {
        if e.len == 0 || e.end() > self.device_blocks {
            return Err(Error::Consistency(format!("release of invalid extent {e}")));
        }
        let mut start = e.start;
        let mut len = e.len;
        if let Some((&ps, &pl)) = self.extents.range(..=e.start).next_back() {
            if ps + pl > e.start {
                return Err(Error::Consistency(format!(
                    "double free of {e}: overlaps ({ps},{pl})"
                )));
            }
            if ps + pl == e.start {
                self.remove_raw(ps);
                start = ps;
                len += pl;
            }
        }
        if let Some((&ns, &nl)) = self.extents.range((Excluded(e.start), Unbounded)).next() {
            if ns < e.end() {
                return Err(Error::Consistency(format!(
                    "double free of {e}: overlaps ({ns},{nl})"
                )));
            }
            if ns == e.end() {
                self.remove_raw(ns);
                len += nl;
            }
        }
        self.insert_raw(start, len);
        self.free_blocks += e.len;
        Ok(())
    }

    /// Marks `e` allocated; it must lie inside one free extent.
    pub fn take(&mut self, e: Extent) -> Result<()> {
        let host = self
            .containing(e.start)
            .filter(|h| h.end() >= e.end())
            .ok_or_else(|| Error::Consistency(format!("allocation of non-free range {e}")))?;
        self.remove_raw(host.start);
        if e.start > host.start {
            self.insert_raw(host.start, e.start - host.start);
        }
        if host.end() > e.end() {
            self.insert_raw(e.end(), host.end() - e.end());
        }
        self.free_blocks -= e.len;
        Ok(())
    }

    /// Leftmost chunk index `>= lo` whose largest extent has `>= need` blocks.
    fn leftmost_chunk(
        &self,
        node: usize,
        node_lo: usize,
        node_hi: usize,
        lo: usize,
        need: u64,
    ) -> Option<usize> {
        if node_hi <= lo || self.tree[node] < need {
            return None;
        }
        if node_hi - node_lo == 1 {
            return Some(node_lo);
        }
        let mid = (node_lo + node_hi) / 2;
        self.leftmost_chunk(2 * node, node_lo, mid, lo, need)
            .or_else(|| self.leftmost_chunk(2 * node + 1, mid, node_hi, lo, need))
    }

    /// Start of the lowest free extent with `start` in `[from, to)` and at
    /// least `need` blocks.
    pub fn first_fit(&self, need: u64, from: u64, to: u64) -> Option<u64> {
        if need == 0 {
            return None;
        }
        let mut chunk_from = Self::chunk_of(from);
        loop {
            let chunk = self.leftmost_chunk(1, 0, self.leaves, chunk_from, need)?;
            let lo = ((chunk as u64) << CHUNK_SHIFT).max(from);
            let hi = ((chunk as u64) + 1) << CHUNK_SHIFT;
            if lo >= to {
                return None;
            }
            if let Some((&s, _)) = self.extents.range(lo..hi.min(to)).find(|(_, &l)| l >= need) {
                return Some(s);
            }
            chunk_from = chunk + 1;
        }
    }

    /// Free pieces in address order starting at `from`, stopping once `need`
    /// blocks are covered or `to` is reached. The first piece may begin
    /// inside an extent that starts before `from`.
    pub fn lowest_pieces(&self, need: u64, from: u64, to: u64) -> Vec<Extent> {
        let mut out = Vec::new();
        if from >= to {
            return out;
        }
        let mut left = need;
        let mut push = |s: u64, l: u64, left: &mut u64| {
            let end = (s + l).min(to);
            if end > s && *left > 0 {
                let take = (end - s).min(*left);
                out.push(Extent {
                    start: s,
                    len: take,
                });
                *left -= take;
            }
        };
        if let Some(e) = self.containing(from) {
            if e.start < from {
                push(from, e.end() - from, &mut left);
            }
        }
        for (&s, &l) in self.extents.range((Included(from), Excluded(to))) {
            if left == 0 {
                break;
            }
            push(s, l, &mut left);
        }
        out
    }

    /// Free blocks within `[from, to)`.
    pub fn free_in(&self, from: u64, to: u64) -> u64 {
        let mut total = 0;
        if from >= to {
            return 0;
        }
        if let Some(e) = self.containing(from) {
            if e.start < from {
                total += e.end().min(to) - from;
            }
        }
        for (&s, &l) in self.extents.range(from..to) {
            total += (s + l).min(to) - s;
        }
        total
    }
}
