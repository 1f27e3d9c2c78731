//! Directory tree keyed by name, plus path validation and ordering.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Identifier of a regular file; never reused within an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FileId(pub(crate) u64);

/// Splits an absolute, normalized path into its components. The root `/`
/// yields no components.
pub fn components(path: &str) -> Result<Vec<&str>> {
    let rest = path
        .strip_prefix('/')
        .ok_or_else(|| Error::InvalidOp(format!("path {path:?} is not absolute")))?;
    if rest.is_empty() {
        return Ok(Vec::new());
    }
    rest.split('/')
        .map(|c| validate_name(c, path).map(|_| c))
        .collect()
}

fn validate_name(name: &str, path: &str) -> Result<()> {
    if name.is_empty() || name == "." || name == ".." {
        return Err(Error::InvalidOp(format!("path {path:?} is not normalized")));
    }
    if name.chars().any(|c| c.is_whitespace() || c == '\0') {
        return Err(Error::InvalidOp(format!(
            "path {path:?} contains whitespace or NUL"
        )));
    }
    Ok(())
}

pub fn validate_path(path: &str) -> Result<()> {
    components(path).map(|_| ())
}

/// Orders paths the way a depth-first walk in name order visits them: byte
/// order with `/` sorting below every other byte.
pub fn dfs_cmp(a: &str, b: &str) -> Ordering {
    let key = |c: u8| if c == b'/' { 0 } else { c };
    a.bytes().map(key).cmp(b.bytes().map(key))
}

/// A path compared in depth-first name order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct PathKey(pub Arc<str>);

impl Ord for PathKey {
    fn cmp(&self, other: &Self) -> Ordering {
        dfs_cmp(&self.0, &other.0)
    }
}

impl PartialOrd for PathKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Dir {
    pub children: BTreeMap<String, Node>,
    /// Home block group (0 when the allocator has no groups).
    pub group: u32,
}

#[derive(Debug, Clone)]
pub(crate) enum Node {
    Dir(Dir),
    File(FileId),
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Namespace {
    pub root: Dir,
}

impl Namespace {
    pub fn dir(&self, comps: &[&str]) -> Option<&Dir> {
        let mut d = &self.root;
        for c in comps {
            match d.children.get(*c)? {
                Node::Dir(sub) => d = sub,
                Node::File(_) => return None,
            }
        }
        Some(d)
    }

    fn dir_mut(&mut self, comps: &[&str]) -> Option<&mut Dir> {
        let mut d = &mut self.root;
        for c in comps {
            match d.children.get_mut(*c)? {
                Node::Dir(sub) => d = sub,
                Node::File(_) => return None,
            }
        }
        Some(d)
    }

    pub fn get(&self, path: &str) -> Result<Option<&Node>> {
        let comps = components(path)?;
        let Some((last, parent)) = comps.split_last() else {
            return Ok(None);
        };
        Ok(self.dir(parent).and_then(|d| d.children.get(*last)))
    }

    pub fn file(&self, path: &str) -> Result<FileId> {
        match self.get(path)? {
            Some(Node::File(id)) => Ok(*id),
            Some(Node::Dir(_)) => Err(Error::InvalidOp(format!("{path} is a directory"))),
            None => Err(Error::InvalidOp(format!("{path} does not exist"))),
        }
    }

    /// Group of the directory that would hold `path`.
    pub fn parent_group(&self, path: &str) -> Result<u32> {
        let comps = components(path)?;
        let parent = &comps[..comps.len().saturating_sub(1)];
        self.dir(parent)
            .map(|d| d.group)
            .ok_or_else(|| Error::InvalidOp(format!("parent of {path} is not a directory")))
    }

    /// Attaches `node` at `path`; the parent must exist and the name be free.
    pub fn insert(&mut self, path: &str, node: Node) -> Result<()> {
        let comps = components(path)?;
        let (last, parent) = comps
            .split_last()
            .ok_or_else(|| Error::InvalidOp("cannot replace the root directory".into()))?;
        let dir = self
            .dir_mut(parent)
            .ok_or_else(|| Error::InvalidOp(format!("parent of {path} is not a directory")))?;
        if dir.children.contains_key(*last) {
            return Err(Error::InvalidOp(format!("{path} already exists")));
        }
        dir.children.insert((*last).to_string(), node);
        Ok(())
    }

    /// Detaches and returns the node at `path`.
    pub fn remove(&mut self, path: &str) -> Result<Node> {
        let comps = components(path)?;
        let (last, parent) = comps
            .split_last()
            .ok_or_else(|| Error::InvalidOp("cannot remove the root directory".into()))?;
        self.dir_mut(parent)
            .and_then(|d| d.children.remove(*last))
            .ok_or_else(|| Error::InvalidOp(format!("{path} does not exist")))
    }

    /// Visits every node depth-first in name order. Directories are reported
    /// before their contents.
    pub fn walk(&self, mut visit: impl FnMut(&str, &Node)) {
        fn rec(dir: &Dir, prefix: &mut String, visit: &mut dyn FnMut(&str, &Node)) {
            for (name, node) in &dir.children {
                let len = prefix.len();
                prefix.push('/');
                prefix.push_str(name);
                visit(prefix, node);
                if let Node::Dir(sub) = node {
                    rec(sub, prefix, visit);
                }
                prefix.truncate(len);
            }
        }
        let mut prefix = String::new();
        rec(&self.root, &mut prefix, &mut visit);
    }

    /// Files under `node` (itself if a file) with their paths relative to
    /// `base`, in depth-first name order.
    pub fn files_under(node: &Node, base: &str) -> Vec<(String, FileId)> {
        let mut out = Vec::new();
        match node {
            Node::File(id) => out.push((base.to_string(), *id)),
            Node::Dir(d) => {
                let sub = Namespace { root: d.clone() };
                sub.walk(|p, n| {
                    if let Node::File(id) = n {
                        out.push((format!("{base}{p}"), *id));
                    }
                });
            }
        }
        out
    }
}
