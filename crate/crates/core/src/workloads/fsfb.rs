//! Free-space fragmentation benchmark.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{RoundedStream, Rounds};
use crate::error::{Error, Result};
use crate::simfs::FsOp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FsfbParams {
    pub n_dirs: u64,
    pub file_min: u64,
    pub file_max: u64,
    pub target_fullness: f64,
    pub replace_fraction: f64,
    pub rounds: u64,
}

impl Default for FsfbParams {
    fn default() -> Self {
        FsfbParams {
            n_dirs: 1000,
            file_min: 1024,
            file_max: 150 * 1024,
            target_fullness: 0.95,
            replace_fraction: 0.05,
            rounds: 500,
        }
    }
}

pub(crate) struct Fsfb {
    p: FsfbParams,
    rng: ChaCha8Rng,
    target_bytes: u64,
    block_size: u64,
    dirs: Vec<String>,
    files: Vec<(String, u64)>,
    total: u64,
    next_dir: u64,
    next_file: u64,
    round: u64,
}

impl Fsfb {
    pub fn new(p: &FsfbParams, device_bytes: u64, block_size: u64, seed: u64) -> Result<Self> {
        if p.file_min == 0 || p.file_min > p.file_max {
            return Err(Error::InvalidParameter(format!(
                "file sizes need 0 < file_min <= file_max, got [{}, {}]",
                p.file_min, p.file_max
            )));
        }
        if !(p.target_fullness > 0.0 && p.target_fullness <= 1.0)
            || !(0.0..=1.0).contains(&p.replace_fraction)
        {
            return Err(Error::InvalidParameter(
                "fsfb ratios must lie in (0, 1]".into(),
            ));
        }
        let target_bytes = (p.target_fullness * device_bytes as f64).ceil() as u64;
        let slack = p.file_max.div_ceil(block_size) * block_size;
        if target_bytes + slack > device_bytes {
            return Err(Error::Capacity(format!(
                "fullness target of {target_bytes} bytes plus one {slack}-byte file exceeds the {device_bytes}-byte device"
            )));
        }
        Ok(Fsfb {
            p: p.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            target_bytes,
            block_size,
            dirs: vec![String::new()],
            files: Vec::new(),
            total: 0,
            next_dir: 0,
            next_file: 0,
            round: 0,
        })
    }

    fn mkdir(&mut self, out: &mut Vec<FsOp>) -> String {
        let parent = &self.dirs[self.rng.gen_range(0..self.dirs.len())];
        let d = format!("{parent}/d{}", self.next_dir);
        self.next_dir += 1;
        self.dirs.push(d.clone());
        out.push(FsOp::Mkdir(d.clone()));
        d
    }

    fn create(&mut self, dir: &str, size: u64, out: &mut Vec<FsOp>) {
        let path = format!("{dir}/f{}", self.next_file);
        self.next_file += 1;
        out.push(FsOp::Create(path.clone()));
        out.push(FsOp::Append(path.clone(), size));
        out.push(FsOp::Checkpoint);
        self.total += size;
        self.files.push((path, size));
    }

    fn draw_size(&mut self) -> u64 {
        self.rng.gen_range(self.p.file_min..=self.p.file_max)
    }

    /// Builds the tree, then drops files into uniformly chosen directories
    /// until their block-rounded footprint reaches the target.
    fn setup(&mut self, out: &mut Vec<FsOp>) {
        for _ in 0..self.p.n_dirs {
            self.mkdir(out);
        }
        let mut footprint = 0;
        while footprint < self.target_bytes {
            let dir = self.dirs[self.rng.gen_range(0..self.dirs.len())].clone();
            let size = self.draw_size();
            footprint += size.div_ceil(self.block_size) * self.block_size;
            self.create(&dir, size, out);
        }
    }

    /// Deletes a random `replace_fraction` of the bytes and rewrites the
    /// same byte count into one new directory.
    fn replace(&mut self, out: &mut Vec<FsOp>) {
        let goal = self.p.replace_fraction * self.total as f64;
        let mut deleted = 0u64;
        while (deleted as f64) < goal && !self.files.is_empty() {
            let i = self.rng.gen_range(0..self.files.len());
            let (path, size) = self.files.swap_remove(i);
            out.push(FsOp::Delete(path));
            deleted += size;
            self.total -= size;
        }
        let dir = self.mkdir(out);
        let mut left = deleted;
        while left > 0 {
            let size = self.draw_size().min(left);
            self.create(&dir, size, out);
            left -= size;
        }
        out.push(FsOp::Checkpoint);
    }
}

impl Rounds for Fsfb {
    fn next_round(&mut self, out: &mut Vec<FsOp>) -> bool {
        if self.round > self.p.rounds {
            return false;
        }
        if self.round == 0 {
            self.setup(out);
        } else {
            self.replace(out);
        }
        self.round += 1;
        true
    }
}

/// Fills the device to `target_fullness` out of directory order, then
/// replaces `replace_fraction` of the data (by size) each round.
pub fn gen_fsfb(
    p: &FsfbParams,
    device_bytes: u64,
    block_size: u64,
    seed: u64,
) -> Result<RoundedStream> {
    Ok(RoundedStream::by_round(Fsfb::new(
        p,
        device_bytes,
        block_size,
        seed,
    )?))
}
