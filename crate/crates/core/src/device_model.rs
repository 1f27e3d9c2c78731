//! Parametric storage cost model.
//!
//! Every discontiguous IO pays one flat seek; bytes then stream at the
//! sustained bandwidth. There is no rotational or geometric modeling, and an
//! SSD is just a profile with a small seek time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extent::AccessTrace;
use crate::scalar::Real;

pub const DEFAULT_BLOCK_SIZE: u64 = 4096;

/// Seek latency, sustained bandwidth and block size of a storage device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile<T> {
    /// Seconds per discontiguous IO.
    pub seek_time: T,
    /// Sustained sequential bytes per second.
    pub bandwidth: T,
    /// Bytes per logical block.
    #[serde(default = "default_block_size")]
    pub block_size: u64,
    #[serde(default)]
    pub label: String,
}

fn default_block_size() -> u64 {
    DEFAULT_BLOCK_SIZE
}

impl<T: Real> DeviceProfile<T> {
    pub fn new(
        seek_time: T,
        bandwidth: T,
        block_size: u64,
        label: impl Into<String>,
    ) -> Result<Self> {
        let p = DeviceProfile {
            seek_time,
            bandwidth,
            block_size,
            label: label.into(),
        };
        p.validate()?;
        Ok(p)
    }

    /// 5 ms seek, 100 MiB/s.
    pub fn hdd() -> Self {
        DeviceProfile {
            seek_time: T::lit(5e-3),
            bandwidth: T::from_count(100 * crate::MIB),
            block_size: DEFAULT_BLOCK_SIZE,
            label: "hdd".into(),
        }
    }

    /// 80 µs per IO, 500 MiB/s.
    pub fn ssd() -> Self {
        DeviceProfile {
            seek_time: T::lit(80e-6),
            bandwidth: T::from_count(500 * crate::MIB),
            block_size: DEFAULT_BLOCK_SIZE,
            label: "ssd".into(),
        }
    }

    /// Looks up a built-in profile by label.
    pub fn named(label: &str) -> Result<Self> {
        match label {
            "hdd" => Ok(Self::hdd()),
            "ssd" => Ok(Self::ssd()),
            other => Err(Error::InvalidParameter(format!(
                "unknown device profile {other:?}"
            ))),
        }
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.seek_time >= T::zero()) || !self.seek_time.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "seek_time must be >= 0, got {}",
                self.seek_time
            )));
        }
        if !(self.bandwidth > T::zero()) || !self.bandwidth.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be > 0, got {}",
                self.bandwidth
            )));
        }
        if self.block_size < 512 || !self.block_size.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "block_size must be a power of two >= 512, got {}",
                self.block_size
            )));
        }
        Ok(())
    }

    /// Seconds to read `bytes` sequentially after one seek.
    pub fn contiguous_cost(&self, bytes: u64) -> T {
        self.seek_time + T::from_count(bytes) / self.bandwidth
    }
}

/// Estimated time to serve a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate<T> {
    pub total_seconds: T,
    /// Coalesced contiguous runs; each costs one seek.
    pub n_runs: u64,
    pub total_bytes: u64,
}

impl<T: Real> CostEstimate<T> {
    pub fn zero() -> Self {
        CostEstimate {
            total_seconds: T::zero(),
            n_runs: 0,
            total_bytes: 0,
        }
    }

    fn from_parts(n_runs: u64, total_bytes: u64, profile: &DeviceProfile<T>) -> Self {
        let total_seconds = T::from_count(n_runs) * profile.seek_time
            + T::from_count(total_bytes) / profile.bandwidth;
        CostEstimate {
            total_seconds,
            n_runs,
            total_bytes,
        }
    }
}

/// Throughput achieved by IOs of `io_size` bytes:
/// `io_size / (seek_time + io_size / bandwidth)`.
pub fn effective_bandwidth<T: Real>(io_size: u64, profile: &DeviceProfile<T>) -> T {
    let size = T::from_count(io_size);
    size / (profile.seek_time + size / profile.bandwidth)
}

/// Whether IOs of `io_size` bytes reach `fraction` of peak bandwidth.
///
/// Compared in the rearranged form `io_size * (1 - f) >= f * seek * bw` with
/// a few ulps of slack so the exact crossover point counts as reached.
fn reaches_fraction<T: Real>(io_size: u64, profile: &DeviceProfile<T>, fraction: T) -> bool {
    let lhs = T::from_count(io_size) * (T::one() - fraction);
    let rhs = fraction * profile.seek_time * profile.bandwidth;
    lhs >= rhs - rhs * T::epsilon() * T::lit(8.0)
}

/// Smallest block-multiple IO size whose effective bandwidth is at least
/// `fraction` of the device's peak.
pub fn natural_transfer_size<T: Real>(profile: &DeviceProfile<T>, fraction: T) -> Result<u64> {
    profile.validate()?;
    if !(fraction > T::zero() && fraction < T::one()) {
        return Err(Error::InvalidParameter(format!(
            "fraction must lie in (0,1), got {fraction}"
        )));
    }
    let bs = profile.block_size;
    let exact = fraction / (T::one() - fraction) * profile.seek_time * profile.bandwidth;
    let blocks = (exact / T::from_count(bs)).ceil().to_u64().ok_or_else(|| {
        Error::InvalidParameter("natural transfer size does not fit in u64".into())
    })?;
    let mut size = blocks.max(1) * bs;
    // Float rounding can land one block off the true crossover either way.
    while size > bs && reaches_fraction(size - bs, profile, fraction) {
        size -= bs;
    }
    while !reaches_fraction(size, profile, fraction) {
        size += bs;
    }
    Ok(size)
}

/// Estimates the time to serve `trace`. Entries that begin exactly where the
/// previous one ended are coalesced into one run.
pub fn estimate_trace_cost<T: Real>(
    trace: &AccessTrace,
    profile: &DeviceProfile<T>,
) -> Result<CostEstimate<T>> {
    trace.validate(None)?;
    if trace.entries.is_empty() {
        return Ok(CostEstimate::zero());
    }
    let mut n_runs = 1u64;
    let mut blocks = 0u64;
    let mut prev_end = None;
    for e in &trace.entries {
        if let Some(end) = prev_end {
            if e.start != end {
                n_runs += 1;
            }
        }
        blocks += e.len;
        prev_end = Some(e.end());
    }
    Ok(CostEstimate::from_parts(
        n_runs,
        blocks * profile.block_size,
        profile,
    ))
}

/// One read of a probe plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRead {
    pub offset: u64,
    pub size: u64,
}

/// Plans a bandwidth-vs-IO-size probe for an external runner.
///
/// `n_offsets` positions are drawn once as uniform fractions of the device;
/// for each size the fraction maps onto `[0, device_bytes - size]` and is
/// aligned down to `block_size`. Output is size-major.
pub fn probe_plan(
    device_bytes: u64,
    n_offsets: usize,
    sizes: &[u64],
    block_size: u64,
    seed: u64,
) -> Result<Vec<ProbeRead>> {
    if n_offsets == 0 {
        return Err(Error::InvalidParameter("n_offsets must be >= 1".into()));
    }
    if block_size == 0 {
        return Err(Error::InvalidParameter("block_size must be > 0".into()));
    }
    for &size in sizes {
        if size == 0 || size > device_bytes {
            return Err(Error::InvalidParameter(format!(
                "probe size {size} must lie in [1, device_bytes={device_bytes}]"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fractions: Vec<f64> = (0..n_offsets).map(|_| rng.gen::<f64>()).collect();
    let mut plan = Vec::with_capacity(n_offsets * sizes.len());
    for &size in sizes {
        let span = device_bytes - size;
        for &u in &fractions {
            let raw = ((u * (span as f64 + 1.0)) as u64).min(span);
            plan.push(ProbeRead {
                offset: raw - raw % block_size,
                size,
            });
        }
    }
    Ok(plan)
}

/// Doubling size ladder from `min` up to and including `max`.
pub fn doubling_sizes(min: u64, max: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut s = min.max(1);
    while s <= max {
        out.push(s);
        match s.checked_mul(2) {
            Some(n) => s = n,
            None => break,
        }
    }
    out
}
