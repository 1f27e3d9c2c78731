//! A deterministic file-system aging workbench.
//!
//! The crate simulates block allocators under aging workloads and measures
//! the resulting fragmentation: dynamic and static layout scores, free-extent
//! histograms, and a seek/bandwidth cost model that turns an access trace into
//! an estimated scan time.
//!
//! The floating-point parts (device model, layout scores) are generic over
//! [`Real`]; the aliases at the crate root fix the scalar to `f64`, which is
//! what the simulator and harness use.

pub mod device_model;
pub mod error;
pub mod extent;
pub mod harness;
pub mod scalar;
pub mod simfs;
pub mod trace_analysis;
pub mod workloads;

pub use error::{Error, Result};
pub use extent::{AccessTrace, Extent, TraceKind};
pub use scalar::Real;
pub use simfs::{AllocatorKind, FsImage, FsOp, WriteRecord};
pub use trace_analysis::{FreeExtentHistogram, HistogramBucket};

/// Device profile with `f64` parameters.
pub type DeviceProfile = device_model::DeviceProfile<f64>;
/// Cost estimate with `f64` seconds.
pub type CostEstimate = device_model::CostEstimate<f64>;
/// Layout score with an `f64` ratio.
pub type LayoutScore = trace_analysis::LayoutScore<f64>;

/// Bytes in one KiB.
pub const KIB: u64 = 1 << 10;
/// Bytes in one MiB.
pub const MIB: u64 = 1 << 20;
/// Bytes in one GiB.
pub const GIB: u64 = 1 << 30;
