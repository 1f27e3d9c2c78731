//! Leaf level of a write-optimized, path-keyed tree.
//!
//! Every file block is an item keyed by `(path, block index)`. Items are
//! packed in key order into nodes; each node occupies one contiguous extent
//! of exactly as many blocks as it holds items. Mutations are staged as
//! messages in a buffer; a flush (buffer full or checkpoint) rewrites every
//! affected node copy-on-write at a fresh first-fit location. Overfull nodes
//! are split into equal parts of at most `node_blocks`, except the rightmost
//! node, which is packed full from the left so that in-order loading fills
//! nodes completely. Underfull nodes (below half) are merged with their
//! successor, so every node but the last in key order holds between half and
//! all of `node_blocks` items.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::ops::Bound::{Excluded, Unbounded};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::extent::{push_coalesced, Extent};
use crate::simfs::namespace::PathKey;
use crate::simfs::{FileData, FileId, Store};

type Key = (PathKey, u64);
type Item = (Key, FileId);

/// Messages routed to a node (`None`: the tree is empty).
type Routed = (Option<Key>, Vec<(Key, Msg)>);

#[derive(Debug, Clone)]
struct Node {
    items: Vec<Item>,
    extent: Extent,
}

#[derive(Debug, Clone, Copy)]
enum Msg {
    Put(FileId),
    Del,
}

#[derive(Debug, Clone)]
pub(crate) struct TreeState {
    node_blocks: u64,
    buffer_blocks: u64,
    nodes: BTreeMap<Key, Node>,
    buffer: BTreeMap<Key, Msg>,
    buffered_puts: u64,
    pending: BTreeSet<FileId>,
}

fn path_key(path: &str) -> PathKey {
    PathKey(Arc::from(path))
}

impl TreeState {
    pub fn new(node_blocks: u64, buffer_blocks: u64) -> Self {
        TreeState {
            node_blocks,
            buffer_blocks: buffer_blocks.max(1),
            nodes: BTreeMap::new(),
            buffer: BTreeMap::new(),
            buffered_puts: 0,
            pending: BTreeSet::new(),
        }
    }

    fn stage(&mut self, key: Key, msg: Msg) {
        let was_put = matches!(self.buffer.insert(key, msg), Some(Msg::Put(_)));
        match (was_put, msg) {
            (false, Msg::Put(_)) => self.buffered_puts += 1,
            (true, Msg::Del) => self.buffered_puts -= 1,
            _ => {}
        }
    }

    fn maybe_flush(&mut self, st: &mut Store) -> Result<()> {
        if self.buffered_puts >= self.buffer_blocks {
            self.flush(st)?;
        }
        Ok(())
    }

    pub fn append(&mut self, st: &mut Store, id: FileId, bytes: u64) -> Result<()> {
        let f = st.file(id);
        let old = f.size;
        let new = old + bytes;
        let path = path_key(&f.path);
        let old_blocks = st.blocks_for(old);
        let first = if !old.is_multiple_of(st.block_size) {
            old_blocks - 1
        } else {
            old_blocks
        };
        for idx in first..st.blocks_for(new) {
            self.stage((path.clone(), idx), Msg::Put(id));
        }
        st.file_mut(id).size = new;
        st.bytes_logical += bytes;
        self.pending.insert(id);
        self.maybe_flush(st)
    }

    pub fn delete(&mut self, st: &mut Store, id: FileId, data: FileData) {
        let path = path_key(&data.path);
        for idx in 0..st.blocks_for(data.size) {
            self.stage((path.clone(), idx), Msg::Del);
        }
        self.pending.remove(&id);
    }

    /// Renamed files are reinserted under their new keys.
    pub fn renamed(&mut self, st: &mut Store, moved: &[(String, FileId)]) -> Result<()> {
        for (old_path, id) in moved {
            let f = st.file(*id);
            let old = path_key(old_path);
            let new = path_key(&f.path);
            for idx in 0..st.blocks_for(f.size) {
                self.stage((old.clone(), idx), Msg::Del);
                self.stage((new.clone(), idx), Msg::Put(*id));
            }
            self.pending.insert(*id);
        }
        self.maybe_flush(st)
    }

    fn half(&self) -> usize {
        (self.node_blocks / 2) as usize
    }

    /// Splits `items` into `ceil(n / node_blocks)` parts of near-equal size.
    fn split(&self, items: Vec<Item>) -> Vec<Vec<Item>> {
        let n = items.len();
        let k = n.div_ceil(self.node_blocks as usize);
        let (base, extra) = (n / k, n % k);
        let mut out = Vec::with_capacity(k);
        let mut it = items.into_iter();
        for i in 0..k {
            let size = base + usize::from(i < extra);
            out.push(it.by_ref().take(size).collect());
        }
        out
    }

    /// Applies all buffered messages, rewriting affected nodes.
    pub fn flush(&mut self, st: &mut Store) -> Result<()> {
        let msgs = std::mem::take(&mut self.buffer);
        self.buffered_puts = 0;
        if msgs.is_empty() {
            self.pending.clear();
            return Ok(());
        }

        // Route messages to the node whose key range covers them.
        let first_node = self.nodes.keys().next().cloned();
        let mut groups: Vec<Routed> = Vec::new();
        for (k, m) in msgs {
            let target = self
                .nodes
                .range(..=&k)
                .next_back()
                .map(|(nk, _)| nk.clone())
                .or_else(|| first_node.clone());
            match groups.last_mut() {
                Some((t, v)) if *t == target => v.push((k, m)),
                _ => groups.push((target, vec![(k, m)])),
            }
        }

        let mut old_extents = Vec::new();
        let mut queue: VecDeque<Vec<Item>> = VecDeque::new();
        for (target, group) in groups {
            let base = match target {
                Some(k) => {
                    let node = self.nodes.remove(&k).expect("routed node exists");
                    old_extents.push(node.extent);
                    node.items
                }
                None => Vec::new(),
            };
            let merged = merge(base, group);
            if !merged.is_empty() {
                queue.push_back(merged);
            }
        }

        let mut done: Vec<Vec<Item>> = Vec::new();
        while let Some(mut list) = queue.pop_front() {
            if list.len() as u64 > self.node_blocks {
                let last = &list.last().expect("non-empty").0;
                let rightmost = queue.is_empty()
                    && self
                        .nodes
                        .range((Excluded(last), Unbounded))
                        .next()
                        .is_none();
                if rightmost {
                    done.extend(list.chunks(self.node_blocks as usize).map(<[Item]>::to_vec));
                } else {
                    done.extend(self.split(list));
                }
                continue;
            }
            if list.len() < self.half() {
                let last = list.last().expect("non-empty").0.clone();
                let in_tree = self
                    .nodes
                    .range((Excluded(&last), Unbounded))
                    .next()
                    .map(|(k, _)| k.clone());
                let in_queue = queue.front().map(|l| l[0].0.clone());
                let take_tree = match (&in_tree, &in_queue) {
                    (Some(t), Some(q)) => t < q,
                    (Some(_), None) => true,
                    _ => false,
                };
                if take_tree {
                    let node = self
                        .nodes
                        .remove(in_tree.as_ref().expect("checked"))
                        .expect("neighbour exists");
                    old_extents.push(node.extent);
                    list.extend(node.items);
                    queue.push_front(list);
                    continue;
                }
                if let Some(next) = queue.pop_front() {
                    list.extend(next);
                    queue.push_front(list);
                    continue;
                }
            }
            done.push(list);
        }

        let mut touched = std::mem::take(&mut self.pending);
        for items in done {
            let len = items.len() as u64;
            let start = st
                .free
                .first_fit(len, 0, st.device_blocks)
                .ok_or(Error::NoSpace {
                    needed: len,
                    free: st.free.free_blocks(),
                })?;
            let extent = Extent { start, len };
            st.free.take(extent)?;
            st.note_write(extent);
            touched.extend(items.iter().map(|(_, id)| *id));
            self.nodes
                .insert(items[0].0.clone(), Node { items, extent });
        }
        for e in old_extents {
            st.free.release(e)?;
        }
        for id in touched {
            if st.files.contains_key(&id) {
                self.rebuild_extents(st, id)?;
            }
        }
        Ok(())
    }

    /// Recomputes a file's extents from the nodes holding its items.
    fn rebuild_extents(&self, st: &mut Store, id: FileId) -> Result<()> {
        let f = st.file(id);
        let path = path_key(&f.path);
        let want = st.blocks_for(f.size);
        let lo: Key = (path.clone(), 0);
        let from = self
            .nodes
            .range(..=&lo)
            .next_back()
            .map(|(k, _)| k.clone())
            .unwrap_or(lo.clone());
        let mut extents = Vec::new();
        let mut next_idx = 0u64;
        for node in self.nodes.range(from..).map(|(_, n)| n) {
            if node.items[0].0 .0 > path {
                break;
            }
            let begin = node.items.partition_point(|(k, _)| *k < lo);
            for (i, ((p, idx), owner)) in node.items.iter().enumerate().skip(begin) {
                if *p != path {
                    break;
                }
                if *idx != next_idx || *owner != id {
                    return Err(Error::Consistency(format!(
                        "item {}#{idx} out of place",
                        path.0
                    )));
                }
                next_idx += 1;
                push_coalesced(
                    &mut extents,
                    Extent {
                        start: node.extent.start + i as u64,
                        len: 1,
                    },
                );
            }
        }
        if next_idx != want {
            return Err(Error::Consistency(format!(
                "{} has {next_idx} items, expected {want}",
                path.0
            )));
        }
        let f = st.file_mut(id);
        f.extents = extents;
        f.durable = f.size;
        Ok(())
    }

    /// Node extents in key order.
    pub fn node_extents(&self) -> Vec<Extent> {
        self.nodes.values().map(|n| n.extent).collect()
    }

    pub fn check(&self, st: &Store) -> Result<()> {
        let n = self.nodes.len();
        let mut prev: Option<&Key> = None;
        for (i, (k, node)) in self.nodes.iter().enumerate() {
            if node.items.is_empty()
                || node.items[0].0 != *k
                || node.extent.len != node.items.len() as u64
            {
                return Err(Error::Consistency(format!("malformed node at {}", k.0 .0)));
            }
            let len = node.items.len() as u64;
            if len > self.node_blocks || (i + 1 < n && (len as usize) < self.half()) {
                return Err(Error::Consistency(format!(
                    "node of {len} items violates fill bounds"
                )));
            }
            for w in node.items.windows(2) {
                if w[0].0 >= w[1].0 {
                    return Err(Error::Consistency("node items out of order".into()));
                }
            }
            if let Some(p) = prev {
                if p >= k {
                    return Err(Error::Consistency("nodes out of order".into()));
                }
            }
            prev = Some(k);
        }
        if self.buffer.is_empty() {
            let items: u64 = self.nodes.values().map(|n| n.extent.len).sum();
            let blocks: u64 = st.files.values().map(|f| st.blocks_for(f.size)).sum();
            if items != blocks {
                return Err(Error::Consistency(format!(
                    "tree holds {items} items for {blocks} file blocks"
                )));
            }
        }
        Ok(())
    }
}

fn merge(base: Vec<Item>, msgs: Vec<(Key, Msg)>) -> Vec<Item> {
    let mut out = Vec::with_capacity(base.len() + msgs.len());
    let mut a = base.into_iter().peekable();
    let mut b = msgs.into_iter().peekable();
    loop {
        match (a.peek(), b.peek()) {
            (None, None) => break,
            (Some(_), None) => out.push(a.next().expect("peeked")),
            (None, Some(_)) => {
                if let (k, Msg::Put(id)) = b.next().expect("peeked") {
                    out.push((k, id));
                }
            }
            (Some((ka, _)), Some((kb, _))) => {
                if ka < kb {
                    out.push(a.next().expect("peeked"));
                } else {
                    if ka == kb {
                        a.next();
                    }
                    if let (k, Msg::Put(id)) = b.next().expect("peeked") {
                        out.push((k, id));
                    }
                }
            }
        }
    }
    out
}
