//! Transfer, fan-out and node-chain experiments comparing the streaming
//! runtime against a double-copy shared-memory baseline.

mod baseline;
mod chain;
mod report;
mod stats;
mod transfer;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::msgdef::MsgError;
use crate::runtime::{PortError, RuntimeError};
use crate::topology::TopologyError;

pub use chain::{bench_chain, camera_image, chain_report, ChainParams, CHAIN_STAGES};
pub use baseline::{BaselineDds, BaselineReader, BaselineWriter};
pub use report::{emit_report, BenchReport, ConfigResult, ReportFormat, SubjectResult};
pub use stats::{discard_warmup, stats, Measurement};
pub use transfer::{bench_fanout, bench_transfer, size_label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subject {
    Baseline,
    Streaming,
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subject::Baseline => "baseline",
            Subject::Streaming => "streaming",
        })
    }
}

impl FromStr for Subject {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Subject::Baseline),
            "streaming" => Ok(Subject::Streaming),
            other => Err(BenchError::InvalidParam(format!("unknown subject `{other}`"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no samples")]
    EmptySamples,
    #[error("{0}")]
    InvalidParam(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("unknown report format `{0}` (expected csv, json or markdown)")]
    UnknownFormat(String),
    #[error("{received} of {published} messages received")]
    Lost { published: usize, received: usize },
    #[error("{0}")]
    Faulted(String),
    #[error(transparent)]
    Msg(#[from] MsgError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Port(#[from] PortError),
}

/// Nanoseconds since the first call in this process.
pub(crate) fn now_ns() -> u64 {
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    EPOCH.get_or_init(Instant::now).elapsed().as_nanos() as u64
}
