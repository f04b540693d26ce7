//! Deterministic simulator of a tiled mesh-interconnect CPU (cores, L2,
//! non-inclusive LLC slices, CHAs, YX-routed links with contention) plus a
//! complete stateless contention side-channel pipeline: layout inference,
//! eviction-set probes, victim workloads, trace capture and secret recovery.
//!
//! Everything is cycle-driven and seed-reproducible: identical seeds and
//! schedules produce identical traces, counters and reports.

pub mod analysis;
pub mod cache;
pub mod config;
pub mod evset;
pub mod layout;
pub mod mesh;
pub mod report;
pub mod sim;
pub mod workload;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown layout preset `{0}`")]
    UnknownPreset(String),
    #[error("malformed layout config: {0}")]
    MalformedLayout(String),
    #[error("malformed experiment config: {0}")]
    MalformedConfig(String),
    #[error("profiling counters are ambiguous for core {core}: CHAs {a} and {b} tie")]
    AmbiguousCounters { core: usize, a: usize, b: usize },
    #[error("slice location is ambiguous: tiles {a} and {b} tie at latency {latency}")]
    AmbiguousSlice { a: usize, b: usize, latency: u64 },
    #[error("no valid probe path exists for victim tile {0}")]
    NoValidPath(usize),
    #[error("address {0:#x} is outside the configured memory range")]
    AddressOutOfRange(u64),
    #[error("candidate pool cannot produce a conflicting eviction set")]
    InsufficientCandidates,
    #[error("no eviction set reaches slice {slice} from L2 set {l2_set}")]
    SliceUnreachable { slice: usize, l2_set: usize },
    #[error("eviction set size {0} cannot force L2 misses (need more than 16 ways)")]
    EvSizeTooSmall(usize),
    #[error("invalid RSA inputs: {0}")]
    InvalidKey(String),
    #[error("trace too short: {0}")]
    TraceTooShort(String),
    #[error("no discernible mul/sqr pattern in trace")]
    NoPattern,
    #[error("signal frequency {signal} exceeds Nyquist limit {nyquist}")]
    AboveNyquist { signal: f64, nyquist: f64 },
    #[error("mul/sqr sequence is inconsistent with every {key_len}-bit key")]
    InconsistentSequence { key_len: usize },
    #[error("no peaks found in trace")]
    NoPeaks,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
