//! FFS-style block groups.
//!
//! The device is cut into `group_blocks`-sized groups (the remainder joins
//! the last group) and the first block of each group is reserved. A new
//! directory goes to the group with the most free blocks, lowest index on
//! ties; a file lives in its directory's group. A write first extends the
//! file's last extent in place, then takes the lowest hole holding the rest
//! in the home group or the groups after it (wrapping), and only then splits
//! across holes in the same group order.

use crate::error::{Error, Result};
use crate::extent::Extent;
use crate::simfs::alloc::grow_in_place;
use crate::simfs::{FileData, FileId, Store};

#[derive(Debug, Clone)]
pub(crate) struct BlockGroups {
    group_blocks: u64,
    device_blocks: u64,
    free_per_group: Vec<u64>,
}

impl BlockGroups {
    pub fn new(device_blocks: u64, group_blocks: u64) -> Result<(Self, Vec<Extent>)> {
        let n = device_blocks / group_blocks;
        if n == 0 {
            return Err(Error::Capacity(format!(
                "device of {device_blocks} blocks is smaller than one {group_blocks}-block group"
            )));
        }
        let mut g = BlockGroups {
            group_blocks,
            device_blocks,
            free_per_group: vec![0; n as usize],
        };
        let reserved = (0..n)
            .map(|i| Extent {
                start: i * group_blocks,
                len: 1,
            })
            .collect();
        for i in 0..n as usize {
            let (s, e) = g.range(i);
            g.free_per_group[i] = e - s - 1;
        }
        Ok((g, reserved))
    }

    pub fn n_groups(&self) -> usize {
        self.free_per_group.len()
    }

    fn range(&self, g: usize) -> (u64, u64) {
        let start = g as u64 * self.group_blocks;
        let end = if g + 1 == self.n_groups() {
            self.device_blocks
        } else {
            start + self.group_blocks
        };
        (start, end)
    }

    fn group_of(&self, block: u64) -> usize {
        ((block / self.group_blocks) as usize).min(self.n_groups() - 1)
    }

    /// Applies `delta` blocks to every group `e` touches.
    fn account(&mut self, e: Extent, taken: bool) {
        let mut s = e.start;
        while s < e.end() {
            let g = self.group_of(s);
            let end = self.range(g).1.min(e.end());
            let n = end - s;
            if taken {
                self.free_per_group[g] -= n;
            } else {
                self.free_per_group[g] += n;
            }
            s = end;
        }
    }

    pub fn directory_group(&self) -> u32 {
        let mut best = 0;
        for (i, &f) in self.free_per_group.iter().enumerate() {
            if f > self.free_per_group[best] {
                best = i;
            }
        }
        best as u32
    }

    fn take(&mut self, st: &mut Store, e: Extent) -> Result<()> {
        st.free.take(e)?;
        self.account(e, true);
        Ok(())
    }

    pub fn release_all(&mut self, st: &mut Store, extents: &[Extent]) -> Result<()> {
        for e in extents {
            st.free.release(*e)?;
            self.account(*e, false);
        }
        Ok(())
    }

    fn group_order(&self, home: usize) -> impl Iterator<Item = usize> {
        let n = self.n_groups();
        (home..n).chain(0..home)
    }

    fn allocate(&mut self, st: &mut Store, need: u64, file: &FileData) -> Result<Vec<Extent>> {
        let mut out = Vec::new();
        let mut left = need;
        if let Some(last) = file.extents.last() {
            let run = st.free.run_at(last.end()).min(left);
            if run > 0 {
                let e = Extent {
                    start: last.end(),
                    len: run,
                };
                self.take(st, e)?;
                out.push(e);
                left -= run;
            }
        }
        if left == 0 {
            return Ok(out);
        }
        let home = (file.group as usize).min(self.n_groups() - 1);
        let order: Vec<usize> = self.group_order(home).collect();
        for &g in &order {
            let (gs, ge) = self.range(g);
            if self.free_per_group[g] < left {
                continue;
            }
            if let Some(s) = st.free.first_fit(left, gs, ge) {
                let e = Extent {
                    start: s,
                    len: left,
                };
                self.take(st, e)?;
                out.push(e);
                return Ok(out);
            }
        }
        for &g in &order {
            if left == 0 {
                break;
            }
            let (gs, ge) = self.range(g);
            for p in st.free.lowest_pieces(left, gs, ge) {
                self.take(st, p)?;
                left -= p.len;
                out.push(p);
            }
        }
        Ok(out)
    }

    pub fn append(&mut self, st: &mut Store, id: FileId, bytes: u64) -> Result<()> {
        st.file_mut(id).size += bytes;
        st.bytes_logical += bytes;
        let r = grow_in_place(st, id, |st, need, f| self.allocate(st, need, f));
        if r.is_err() {
            st.drop_pending(id);
        }
        r
    }

    pub fn check(&self, st: &Store) -> Result<()> {
        for g in 0..self.n_groups() {
            let (s, e) = self.range(g);
            let actual = st.free.free_in(s, e);
            if actual != self.free_per_group[g] {
                return Err(Error::Consistency(format!(
                    "group {g} free counter {} but {actual} blocks free",
                    self.free_per_group[g]
                )));
            }
        }
        Ok(())
    }
}
