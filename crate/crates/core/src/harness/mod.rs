//! Experiment driver and reports.
//!
//! [`run_experiment`] generates a workload stream once and applies every op
//! to two images of the same allocator: a "full" one sized to the workload
//! and an "empty" one with room to spare. Both therefore pass through the
//! same logical states. At reporting rounds each image (and optionally a
//! freshly written unaged copy of it) is measured: layout score and
//! estimated scan cost of its grep trace, write cost of the interval,
//! fullness and free-space shape.

mod config;
mod report;
mod sweep;

use crate::device_model::estimate_trace_cost;
use crate::error::{Error, Result};
use crate::simfs::{FsImage, FsOp, WriteRecord};
use crate::trace_analysis::{dynamic_layout_score, free_extent_histogram, grep_trace};
use crate::{DeviceProfile, GIB};

pub use config::{ExperimentConfig, ProfileSpec};
pub use report::{emit_csv, emit_sweep_csv, ReportRow, Variant, CSV_HEADER};
pub use sweep::{apply_axis, sweep, SweepRow};

/// Images as they stand at the end of a round.
pub struct RoundState<'a> {
    pub round: u64,
    /// `None` once the full image has stopped for lack of space.
    pub full: Option<&'a FsImage>,
    pub empty: &'a FsImage,
}

/// Rows plus what happened to the full image.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub rows: Vec<ReportRow>,
    /// Round in which the full image ran out of space and stopped.
    pub full_stopped_round: Option<u64>,
    /// Out-of-space failures absorbed by the workload (steady-state
    /// controllers delete a copy and carry on).
    pub enospc_absorbed: u64,
}

/// Write cost accumulated over a reporting interval.
#[derive(Debug, Default, Clone, Copy)]
struct WriteAcc {
    seconds: f64,
    logical: u64,
}

impl WriteAcc {
    fn add(&mut self, rec: &WriteRecord, profile: &DeviceProfile) -> Result<()> {
        self.seconds += estimate_trace_cost(&rec.trace, profile)?.total_seconds;
        self.logical += rec.bytes_logical;
        Ok(())
    }

    fn take_per_gib(&mut self) -> f64 {
        let v = per_gib(self.seconds, self.logical);
        *self = WriteAcc::default();
        v
    }
}

fn per_gib(seconds: f64, bytes: u64) -> f64 {
    if bytes == 0 {
        0.0
    } else {
        seconds / (bytes as f64 / GIB as f64)
    }
}

fn measure(
    variant: Variant,
    round: u64,
    img: &FsImage,
    write_s_per_gib: f64,
    profile: &DeviceProfile,
) -> Result<ReportRow> {
    let trace = grep_trace(img);
    let layout: f64 = dynamic_layout_score(&trace)?.value;
    let cost = estimate_trace_cost(&trace, profile)?;
    let hist = free_extent_histogram(&img.free_extents(), img.block_size())?;
    Ok(ReportRow {
        round,
        variant,
        dynamic_layout: layout,
        est_grep_seconds_per_gib: per_gib(cost.total_seconds, img.logical_bytes()),
        write_seconds_per_gib: write_s_per_gib,
        fullness: img.fullness(),
        blocks_written_cum: img.counters().blocks_written,
        free_histogram: hist.top_summary(3),
    })
}

#[allow(clippy::too_many_arguments)]
fn measure_with_unaged(
    rows: &mut Vec<ReportRow>,
    aged: Variant,
    unaged: Variant,
    round: u64,
    img: &FsImage,
    acc: &mut WriteAcc,
    cfg: &ExperimentConfig,
    profile: &DeviceProfile,
) -> Result<()> {
    rows.push(measure(aged, round, img, acc.take_per_gib(), profile)?);
    if cfg.compute_unaged {
        let mut uacc = WriteAcc::default();
        let mut err = None;
        let copy = img.unaged_copy_with(|rec| {
            if let Err(e) = uacc.add(&rec, profile) {
                err.get_or_insert(e);
            }
        })?;
        if let Some(e) = err {
            return Err(e);
        }
        rows.push(measure(unaged, round, &copy, uacc.take_per_gib(), profile)?);
    }
    Ok(())
}

/// Runs an experiment and returns its report rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    Ok(run_experiment_with(cfg, |_| {})?.rows)
}

/// Runs an experiment, calling `observer` at the end of every round.
///
/// Rows are emitted for every round `r >= 1` with `r % checkpoint_every ==
/// 0`, and for the last round. Before measuring, both images are
/// checkpointed.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    observer: impl FnMut(&RoundState),
) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let profile = cfg.profile()?;
    let bs = profile.block_size;
    let stream = cfg
        .workload
        .stream(cfg.device_blocks_full * bs, bs, cfg.seed)?;
    run_stream(cfg, stream, observer)
}

/// Like [`run_experiment_with`] but replays a given op stream instead of
/// generating the configured workload.
pub fn run_stream(
    cfg: &ExperimentConfig,
    mut stream: crate::workloads::RoundedStream,
    mut observer: impl FnMut(&RoundState),
) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let profile = cfg.profile()?;
    let bs = profile.block_size;
    let mut run = Run {
        cfg,
        profile: &profile,
        full: Some(FsImage::new(
            cfg.device_blocks_full,
            bs,
            cfg.allocator.clone(),
        )?),
        empty: FsImage::new(cfg.device_blocks_empty, bs, cfg.allocator.clone())?,
        acc_full: WriteAcc::default(),
        acc_empty: WriteAcc::default(),
        rows: Vec::new(),
        full_stopped_round: None,
        absorbed: 0,
    };
    // ops before the first marker belong to round 0
    let mut round: Option<u64> = None;
    let mut preamble = false;
    while let Some(op) = stream.next() {
        if let FsOp::Round(r) = op {
            if round.is_some() || preamble {
                run.end_round(round.unwrap_or(0), false, &mut observer)?;
            }
            round = Some(r);
            continue;
        }
        preamble |= round.is_none();
        let r = round.unwrap_or(0);
        if let Some(full) = run.full.as_mut() {
            match full.apply(&op) {
                Ok(Some(rec)) => run.acc_full.add(&rec, &profile)?,
                Ok(None) => {}
                Err(e) if e.is_no_space() => {
                    if full.is_poisoned() || !stream.report_enospc() {
                        run.stop_full(r);
                    } else {
                        run.absorbed += 1;
                    }
                }
                Err(e) => return Err(e),
            }
        }
        match run.empty.apply(&op) {
            Ok(Some(rec)) => run.acc_empty.add(&rec, &profile)?,
            Ok(None) => {}
            Err(e) if e.is_no_space() => {
                return Err(Error::Capacity(format!(
                    "empty image ran out of space in round {r} at `{op}`"
                )));
            }
            Err(e) => return Err(e),
        }
    }
    if round.is_some() || preamble {
        run.end_round(round.unwrap_or(0), true, &mut observer)?;
    }
    Ok(ExperimentOutcome {
        rows: run.rows,
        full_stopped_round: run.full_stopped_round,
        enospc_absorbed: run.absorbed,
    })
}

/// Replays the configured workload on a single image of `device_blocks`
/// and checkpoints it. Out-of-space failures the workload does not absorb
/// are returned.
pub fn replay(cfg: &ExperimentConfig, device_blocks: u64) -> Result<FsImage> {
    cfg.validate()?;
    let bs = cfg.profile()?.block_size;
    let mut stream = cfg
        .workload
        .stream(cfg.device_blocks_full * bs, bs, cfg.seed)?;
    let mut img = FsImage::new(device_blocks, bs, cfg.allocator.clone())?;
    while let Some(op) = stream.next() {
        match img.apply(&op) {
            Ok(_) => {}
            Err(e) if e.is_no_space() && !img.is_poisoned() && stream.report_enospc() => {}
            Err(e) => return Err(e),
        }
    }
    img.checkpoint()?;
    Ok(img)
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    profile: &'a DeviceProfile,
    full: Option<FsImage>,
    empty: FsImage,
    acc_full: WriteAcc,
    acc_empty: WriteAcc,
    rows: Vec<ReportRow>,
    full_stopped_round: Option<u64>,
    absorbed: u64,
}

impl Run<'_> {
    fn stop_full(&mut self, round: u64) {
        self.full = None;
        self.full_stopped_round.get_or_insert(round);
    }

    fn end_round(
        &mut self,
        round: u64,
        last: bool,
        observer: &mut impl FnMut(&RoundState),
    ) -> Result<()> {
        let report = last || (round >= 1 && round.is_multiple_of(self.cfg.checkpoint_every));
        if report {
            if let Some(full) = self.full.as_mut() {
                match full.checkpoint() {
                    Ok(rec) => self.acc_full.add(&rec, self.profile)?,
                    Err(e) if e.is_no_space() => self.stop_full(round),
                    Err(e) => return Err(e),
                }
            }
            let rec = self.empty.checkpoint().map_err(|e| match e {
                Error::NoSpace { .. } => {
                    Error::Capacity(format!("empty image ran out of space in round {round}"))
                }
                e => e,
            })?;
            self.acc_empty.add(&rec, self.profile)?;
        }
        if let Some(full) = &self.full {
            if report && full.content_digest() != self.empty.content_digest() {
                return Err(Error::Consistency(format!(
                    "full and empty images diverged by round {round}"
                )));
            }
        }
        observer(&RoundState {
            round,
            full: self.full.as_ref(),
            empty: &self.empty,
        });
        if !report {
            return Ok(());
        }
        if let Some(full) = &self.full {
            measure_with_unaged(
                &mut self.rows,
                Variant::Full,
                Variant::UnagedOfFull,
                round,
                full,
                &mut self.acc_full,
                self.cfg,
                self.profile,
            )?;
        }
        measure_with_unaged(
            &mut self.rows,
            Variant::Empty,
            Variant::UnagedOfEmpty,
            round,
            &self.empty,
            &mut self.acc_empty,
            self.cfg,
            self.profile,
        )
    }
}

#[cfg(test)]
mod tests;
