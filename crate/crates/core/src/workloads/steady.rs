//! Keeps a device near full by running several copies of a workload.
//!
//! Copies live under `/copy<k>`. Round 0 writes the initial state of every
//! copy; each later round advances every live copy by one of its own rounds,
//! in slot order, with a checkpoint closing each copy's turn. When the
//! consumer reports that an op ran out of space, the rest of that turn is
//! dropped, the copy is deleted, and the slot restarts from a fresh instance
//! of the workload at its next turn. A fresh instance that itself runs out
//! of space retires the slot.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{derive_seed, OpSource, RoundedStream, Rounds, WorkloadSpec};
use crate::error::{Error, Result};
use crate::simfs::FsOp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyFullParams {
    pub inner: Box<WorkloadSpec>,
    #[serde(default = "default_fill")]
    pub fill_ratio: f64,
    /// Rounds after the initial fill.
    pub rounds: u64,
}

fn default_fill() -> f64 {
    0.75
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SlotState {
    /// Initial state not yet written.
    Fresh,
    Active,
    Exhausted,
    Dead,
}

struct Slot {
    gen: Box<dyn Rounds>,
    generation: u64,
    state: SlotState,
}

struct Steady {
    inner: WorkloadSpec,
    device_bytes: u64,
    block_size: u64,
    seed: u64,
    slots: Vec<Slot>,
    rounds: u64,
    /// Next outer round to open.
    round: u64,
    next_slot: usize,
    queue: VecDeque<FsOp>,
    /// Slot whose ops are currently queued, with whether they are its setup.
    current: Option<(usize, bool)>,
    scratch: Vec<FsOp>,
}

/// Logical bytes written by a workload's initial round.
fn initial_bytes(gen: &mut dyn Rounds) -> u64 {
    let mut ops = Vec::new();
    gen.next_round(&mut ops);
    ops.iter()
        .map(|op| if let FsOp::Append(_, n) = op { *n } else { 0 })
        .sum()
}

impl Steady {
    fn instance(&self, slot: u64, generation: u64) -> Result<Box<dyn Rounds>> {
        self.inner.rounds(
            self.device_bytes,
            self.block_size,
            derive_seed(self.seed, slot, generation),
        )
    }

    fn fill_turn(&mut self, k: usize) {
        let prefix = format!("/copy{k}");
        let slot = &mut self.slots[k];
        self.scratch.clear();
        let setup = slot.state == SlotState::Fresh;
        match slot.state {
            SlotState::Fresh => {
                self.scratch.push(FsOp::Mkdir(String::new()));
                slot.gen.next_round(&mut self.scratch);
                slot.state = SlotState::Active;
            }
            SlotState::Active => {
                if !slot.gen.next_round(&mut self.scratch) {
                    slot.state = SlotState::Exhausted;
                    return;
                }
            }
            SlotState::Exhausted | SlotState::Dead => return,
        }
        self.current = Some((k, setup));
        self.queue
            .extend(self.scratch.drain(..).map(|op| op.with_prefix(&prefix)));
        self.queue.push_back(FsOp::Checkpoint);
    }
}

impl OpSource for Steady {
    fn next_op(&mut self) -> Option<FsOp> {
        loop {
            if let Some(op) = self.queue.pop_front() {
                return Some(op);
            }
            self.current = None;
            if self.next_slot < self.slots.len() {
                let k = self.next_slot;
                self.next_slot += 1;
                self.fill_turn(k);
                continue;
            }
            let live = self
                .slots
                .iter()
                .any(|s| matches!(s.state, SlotState::Fresh | SlotState::Active));
            if self.round > self.rounds || !live {
                return None;
            }
            self.queue.push_back(FsOp::Round(self.round));
            self.round += 1;
            self.next_slot = 0;
        }
    }

    fn report_enospc(&mut self) -> bool {
        let Some((k, setup)) = self.current.take() else {
            return false;
        };
        self.queue.clear();
        self.queue.push_back(FsOp::Delete(format!("/copy{k}")));
        self.queue.push_back(FsOp::Checkpoint);
        if setup {
            self.slots[k].state = SlotState::Dead;
            return true;
        }
        let generation = self.slots[k].generation + 1;
        match self.instance(k as u64, generation) {
            Ok(gen) => {
                self.slots[k] = Slot {
                    gen,
                    generation,
                    state: SlotState::Fresh,
                }
            }
            Err(_) => self.slots[k].state = SlotState::Dead,
        }
        true
    }
}

/// Round-robin copies of `inner`, enough to fill `fill_ratio` of the device
/// with their initial states: `floor(fill_ratio * device_bytes /
/// copy_bytes)` of them.
pub fn steady_full(
    p: &SteadyFullParams,
    device_bytes: u64,
    block_size: u64,
    seed: u64,
) -> Result<RoundedStream> {
    if !(p.fill_ratio > 0.0 && p.fill_ratio <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "fill_ratio must lie in (0, 1], got {}",
            p.fill_ratio
        )));
    }
    let mut st = Steady {
        inner: (*p.inner).clone(),
        device_bytes,
        block_size,
        seed,
        slots: Vec::new(),
        rounds: p.rounds,
        round: 0,
        next_slot: 0,
        queue: VecDeque::new(),
        current: None,
        scratch: Vec::new(),
    };
    let copy_bytes = initial_bytes(st.instance(0, 0)?.as_mut()).max(1);
    let copies = (p.fill_ratio * device_bytes as f64 / copy_bytes as f64).floor() as u64;
    if copies == 0 {
        return Err(Error::Capacity(format!(
            "one copy holds {copy_bytes} bytes, more than {} of the {device_bytes}-byte device",
            p.fill_ratio
        )));
    }
    for k in 0..copies {
        let gen = st.instance(k, 0)?;
        st.slots.push(Slot {
            gen,
            generation: 0,
            state: SlotState::Fresh,
        });
    }
    // round 0 writes every copy's initial state
    st.queue.push_back(FsOp::Round(0));
    st.round = 1;
    Ok(RoundedStream::new(st))
}

/// Number of copies `steady_full` would run.
pub fn copy_count(
    p: &SteadyFullParams,
    device_bytes: u64,
    block_size: u64,
    seed: u64,
) -> Result<u64> {
    let inner = (*p.inner).clone();
    let mut gen = inner.rounds(device_bytes, block_size, derive_seed(seed, 0, 0))?;
    let copy_bytes = initial_bytes(gen.as_mut()).max(1);
    Ok((p.fill_ratio * device_bytes as f64 / copy_bytes as f64).floor() as u64)
}
