//! Synthetic source-tree churn.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{width, RoundedStream, Rounds};
use crate::error::{Error, Result};
use crate::simfs::FsOp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticRepoParams {
    pub n_dir_rounds: u64,
    pub n_files: u64,
    pub size_rounds: Vec<u64>,
}

impl Default for SyntheticRepoParams {
    fn default() -> Self {
        SyntheticRepoParams {
            n_dir_rounds: 1000,
            n_files: 32768,
            size_rounds: vec![8192, 12288, 16384, 20480],
        }
    }
}

pub(crate) struct SyntheticRepo {
    dirs: Vec<String>,
    files: Vec<String>,
    sizes: Vec<u64>,
    round: usize,
}

impl SyntheticRepo {
    pub fn new(p: &SyntheticRepoParams, seed: u64) -> Result<Self> {
        if p.size_rounds.is_empty() {
            return Err(Error::InvalidParameter(
                "size_rounds must not be empty".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dirs = vec![String::new()];
        let wd = width(p.n_dir_rounds);
        for i in 0..p.n_dir_rounds {
            let parent = &dirs[rng.gen_range(0..dirs.len())];
            let d = format!("{parent}/d{i:0wd$}");
            dirs.push(d);
        }
        let wf = width(p.n_files);
        let files = (0..p.n_files)
            .map(|i| format!("{}/f{i:0wf$}", dirs[rng.gen_range(0..dirs.len())]))
            .collect();
        Ok(SyntheticRepo {
            dirs,
            files,
            sizes: p.size_rounds.clone(),
            round: 0,
        })
    }

    /// Directories, root included.
    #[cfg(test)]
    pub fn dir_count(&self) -> usize {
        self.dirs.len()
    }
}

impl Rounds for SyntheticRepo {
    fn next_round(&mut self, out: &mut Vec<FsOp>) -> bool {
        let Some(&size) = self.sizes.get(self.round) else {
            return false;
        };
        if self.round == 0 {
            out.extend(self.dirs[1..].iter().map(|d| FsOp::Mkdir(d.clone())));
        } else {
            out.extend(self.files.iter().map(|f| FsOp::Delete(f.clone())));
        }
        for f in &self.files {
            out.push(FsOp::Create(f.clone()));
            if size > 0 {
                out.push(FsOp::Append(f.clone(), size));
            }
        }
        out.push(FsOp::Checkpoint);
        self.round += 1;
        true
    }
}

/// A random tree of `n_dir_rounds` directories holding `n_files` files at
/// random locations, rewritten once per entry of `size_rounds` at that
/// uniform size.
pub fn gen_synthetic_repo(p: &SyntheticRepoParams, seed: u64) -> Result<RoundedStream> {
    Ok(RoundedStream::by_round(SyntheticRepo::new(p, seed)?))
}
