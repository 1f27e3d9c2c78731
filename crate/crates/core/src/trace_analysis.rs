//! Fragmentation metrics over traces, files and free space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extent::{AccessTrace, Extent, TraceKind};
use crate::scalar::Real;
use crate::simfs::FsImage;

/// Fraction of block-to-block transitions that step to the next address.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutScore<T> {
    pub value: T,
    pub n_blocks: u64,
    /// Transitions `b[i] == b[i-1] + 1`.
    pub consecutive: u64,
}

impl<T: Real> LayoutScore<T> {
    fn from_counts(n_blocks: u64, consecutive: u64) -> Self {
        let value = if n_blocks <= 1 {
            T::one()
        } else {
            T::from_count(consecutive) / T::from_count(n_blocks - 1)
        };
        LayoutScore {
            value,
            n_blocks,
            consecutive,
        }
    }
}

/// Counts blocks and +1 transitions without expanding extents.
fn transition_counts(extents: &[Extent]) -> (u64, u64) {
    let mut n = 0u64;
    let mut good = 0u64;
    let mut prev_end: Option<u64> = None;
    for e in extents {
        if prev_end == Some(e.start) {
            good += 1;
        }
        good += e.len - 1;
        n += e.len;
        prev_end = Some(e.end());
    }
    (n, good)
}

/// Dynamic layout score of a request stream: the block sequence is the
/// concatenation of every requested extent, and the score is the fraction of
/// its `N - 1` transitions that are `+1`. Traces of at most one block score 1.
pub fn dynamic_layout_score<T: Real>(trace: &AccessTrace) -> Result<LayoutScore<T>> {
    trace.validate(None)?;
    let (n, good) = transition_counts(&trace.entries);
    Ok(LayoutScore::from_counts(n, good))
}

/// Static layout score of one file: the same transition fraction over the
/// file's physical blocks in logical order.
pub fn static_layout_score<T: Real>(file_extents: &[Extent]) -> LayoutScore<T> {
    let (n, good) = transition_counts(file_extents);
    LayoutScore::from_counts(n, good)
}

/// Read trace of a recursive scan: namespace visited depth-first in name
/// order, each regular file contributing its extents in logical order.
/// Directories contribute no blocks.
pub fn grep_trace(image: &FsImage) -> AccessTrace {
    let mut trace = AccessTrace::new(TraceKind::Read);
    image.for_each_file_dfs(|_, file| trace.entries.extend_from_slice(file.extents()));
    trace
}

/// Smallest bucket: 4 KiB.
pub const HIST_MIN_SHIFT: u32 = 12;
/// Largest bucket: 2 GiB (extents beyond clamp into it).
pub const HIST_MAX_SHIFT: u32 = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBucket {
    /// Lower bound of the size class in bytes (`2^k`).
    pub floor_bytes: u64,
    pub count: u64,
    pub total_bytes: u64,
}

/// Power-of-two histogram of free-extent sizes, 4 KiB through 2 GiB.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeExtentHistogram {
    pub buckets: Vec<HistogramBucket>,
}

impl Default for FreeExtentHistogram {
    fn default() -> Self {
        let buckets = (HIST_MIN_SHIFT..=HIST_MAX_SHIFT)
            .map(|k| HistogramBucket {
                floor_bytes: 1u64 << k,
                count: 0,
                total_bytes: 0,
            })
            .collect();
        FreeExtentHistogram { buckets }
    }
}

impl FreeExtentHistogram {
    fn bucket_index(bytes: u64) -> usize {
        let k = 63 - bytes.max(1).leading_zeros();
        (k.clamp(HIST_MIN_SHIFT, HIST_MAX_SHIFT) - HIST_MIN_SHIFT) as usize
    }

    fn add(&mut self, bytes: u64) {
        let b = &mut self.buckets[Self::bucket_index(bytes)];
        b.count += 1;
        b.total_bytes += bytes;
    }

    pub fn total_bytes(&self) -> u64 {
        self.buckets.iter().map(|b| b.total_bytes).sum()
    }

    pub fn total_extents(&self) -> u64 {
        self.buckets.iter().map(|b| b.count).sum()
    }

    pub fn bucket(&self, floor_bytes: u64) -> Option<&HistogramBucket> {
        self.buckets.iter().find(|b| b.floor_bytes == floor_bytes)
    }

    /// The `n` buckets holding the most free bytes (ties: smaller class
    /// first), formatted `floorxcount` and joined with `;`. Empty buckets
    /// are skipped; an empty histogram renders as `-`.
    pub fn top_summary(&self, n: usize) -> String {
        let mut nonzero: Vec<&HistogramBucket> =
            self.buckets.iter().filter(|b| b.count > 0).collect();
        nonzero.sort_by(|a, b| {
            b.total_bytes
                .cmp(&a.total_bytes)
                .then(a.floor_bytes.cmp(&b.floor_bytes))
        });
        if nonzero.is_empty() {
            return "-".into();
        }
        nonzero
            .iter()
            .take(n)
            .map(|b| format!("{}x{}", b.floor_bytes, b.count))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Multi-line table, one line per non-empty bucket.
    pub fn to_table(&self) -> String {
        let mut out = String::from("bucket_bytes,count,total_bytes\n");
        for b in &self.buckets {
            out.push_str(&format!(
                "{},{},{}\n",
                b.floor_bytes, b.count, b.total_bytes
            ));
        }
        out
    }
}

/// Buckets free extents by byte size. The input must be pairwise disjoint and
/// maximally coalesced.
pub fn free_extent_histogram(free: &[Extent], block_size: u64) -> Result<FreeExtentHistogram> {
    let mut sorted = free.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[1].start <= w[0].end() {
            let what = if w[1].start == w[0].end() {
                "adjacent"
            } else {
                "overlapping"
            };
            return Err(Error::Consistency(format!(
                "{what} free extents {} and {}",
                w[0], w[1]
            )));
        }
    }
    let mut hist = FreeExtentHistogram::default();
    for e in &sorted {
        if e.len == 0 {
            return Err(Error::Consistency(format!(
                "zero-length free extent at {}",
                e.start
            )));
        }
        hist.add(e.len * block_size);
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::MIB;

    fn ext(pairs: &[(u64, u64)]) -> Vec<Extent> {
        pairs
            .iter()
            .map(|&(s, l)| Extent { start: s, len: l })
            .collect()
    }

    fn dyn_score(pairs: &[(u64, u64)]) -> f64 {
        let t = AccessTrace::from_pairs(TraceKind::Read, pairs).unwrap();
        dynamic_layout_score::<f64>(&t).unwrap().value
    }

    #[test]
    fn dynamic_score_examples() {
        assert_eq!(dyn_score(&[(0, 1), (1, 1), (2, 1)]), 1.0);
        assert_eq!(dyn_score(&[(2, 1), (1, 1), (0, 1)]), 0.0);
        assert!((dyn_score(&[(0, 2), (10, 2)]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(dyn_score(&[]), 1.0);
        assert_eq!(dyn_score(&[(9, 1)]), 1.0);
    }

    #[test]
    fn static_score_examples() {
        assert_eq!(static_layout_score::<f64>(&ext(&[(7, 40)])).value, 1.0);
        assert_eq!(
            static_layout_score::<f64>(&ext(&[(0, 4), (4, 4)])).value,
            1.0
        );
        assert_eq!(
            static_layout_score::<f64>(&ext(&[(0, 1), (8, 1), (16, 1), (24, 1)])).value,
            0.0
        );
    }

    #[test]
    fn score_in_f32() {
        let t = AccessTrace::from_pairs(TraceKind::Read, &[(0, 2), (10, 2)]).unwrap();
        let s = dynamic_layout_score::<f32>(&t).unwrap();
        assert!((s.value - 2.0f32 / 3.0).abs() < 1e-6);
        assert_eq!(s.n_blocks, 4);
        assert_eq!(s.consecutive, 2);
    }

    #[test]
    fn histogram_empty() {
        let h = free_extent_histogram(&[], 4096).unwrap();
        assert_eq!(h.buckets.len(), 20);
        assert_eq!(h.total_bytes(), 0);
        assert_eq!(h.top_summary(3), "-");
    }

    #[test]
    fn histogram_single_two_mib_extent() {
        let h = free_extent_histogram(&ext(&[(100, 512)]), 4096).unwrap();
        let b = h.bucket(2 * MIB).unwrap();
        assert_eq!((b.count, b.total_bytes), (1, 2 * MIB));
        assert_eq!(h.total_extents(), 1);
    }

    #[test]
    fn histogram_small_classes() {
        let h = free_extent_histogram(&ext(&[(0, 1), (2, 2), (10, 3)]), 4096).unwrap();
        assert_eq!(h.bucket(4096).unwrap().count, 1);
        let b8 = h.bucket(8192).unwrap();
        assert_eq!((b8.count, b8.total_bytes), (2, 8192 + 12288));
        assert_eq!(h.top_summary(3), "8192x2;4096x1");
    }

    #[test]
    fn histogram_clamps_top_bucket() {
        // 1 TiB of 4 KiB blocks
        let h = free_extent_histogram(&ext(&[(0, 1 << 28)]), 4096).unwrap();
        let top = h.buckets.last().unwrap();
        assert_eq!(top.floor_bytes, 2 * crate::GIB);
        assert_eq!(top.count, 1);
        assert_eq!(h.total_bytes(), 1 << 40);
    }

    #[test]
    fn histogram_rejects_overlap_and_adjacency() {
        assert!(matches!(
            free_extent_histogram(&ext(&[(0, 4), (2, 4)]), 4096),
            Err(Error::Consistency(_))
        ));
        assert!(matches!(
            free_extent_histogram(&ext(&[(4, 4), (0, 4)]), 4096),
            Err(Error::Consistency(_))
        ));
    }
}
