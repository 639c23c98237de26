//! Executes a compiled topology.
//!
//! Every topic becomes a small network of bounded channels. A link without
//! a FIFO buffers a single word, so a publisher hands its frame over almost
//! as a rendezvous: the consumer copies straight out of the publisher's
//! serialized frame. Arbiters and broadcasters forward frames without
//! copying them.

mod channel;
mod infra;
mod instance;
mod kernel;
mod port;
mod signal;
mod trace;

use thiserror::Error;

use crate::codec::CodecError;

pub use channel::{ChannelStats, FrameTag};
pub use instance::{instantiate, InstanceSummary, NodeFault, RuntimeConfig, RuntimeError, RuntimeInstance};
pub use kernel::{DataflowFn, ExecutionMode, KernelBody, KernelFault, NodeIo, NodeKernel, SequentialFn};
pub use port::{Chunk, FrameReader, FrameWriter, Publisher, ReadStatus, Subscriber};
pub use trace::{trace_csv, RecvRecord, RecvTiming, SendRecord, SendTiming};

#[derive(Debug, Error)]
pub enum PortError {
    #[error("runtime shut down")]
    Shutdown,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("write of {0} bytes is not a whole number of words")]
    Unaligned(usize),
    #[error("frame aborted by its publisher")]
    FrameAborted,
    #[error("frame already complete")]
    FrameFinished,
}
