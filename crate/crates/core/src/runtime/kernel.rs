use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::port::{Publisher, Subscriber};
use super::PortError;
use crate::codec::MessageValue;

pub type SequentialFn = dyn Fn(&[MessageValue]) -> Result<Vec<MessageValue>, KernelFault> + Send + Sync;
pub type DataflowFn = dyn Fn(&mut NodeIo) -> Result<(), KernelFault> + Send + Sync;

#[derive(Debug, Error)]
pub enum KernelFault {
    #[error(transparent)]
    Port(#[from] PortError),
    #[error("{0}")]
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExecutionMode {
    /// Whole-message receive, compute, send.
    Sequential,
    /// Word-level reads and writes interleaved by the kernel body.
    Dataflow,
}

impl fmt::Display for ExecutionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecutionMode::Sequential => "sequential",
            ExecutionMode::Dataflow => "dataflow",
        })
    }
}

#[derive(Clone)]
pub enum KernelBody {
    /// Called with one message per subscriber port (declaration order);
    /// must return one message per publisher port.
    Sequential(Arc<SequentialFn>),
    /// Called repeatedly with the node's ports until shutdown.
    Dataflow(Arc<DataflowFn>),
    /// No thread is started; the ports are taken with
    /// [`RuntimeInstance::ports`](super::RuntimeInstance::ports) and driven by the caller.
    External,
}

#[derive(Clone)]
pub struct NodeKernel {
    pub kernel_id: String,
    pub body: KernelBody,
}

impl NodeKernel {
    pub fn sequential<F>(kernel_id: &str, f: F) -> Self
    where
        F: Fn(&[MessageValue]) -> Result<Vec<MessageValue>, KernelFault> + Send + Sync + 'static,
    {
        NodeKernel {
            kernel_id: kernel_id.to_owned(),
            body: KernelBody::Sequential(Arc::new(f)),
        }
    }

    pub fn dataflow<F>(kernel_id: &str, f: F) -> Self
    where
        F: Fn(&mut NodeIo) -> Result<(), KernelFault> + Send + Sync + 'static,
    {
        NodeKernel {
            kernel_id: kernel_id.to_owned(),
            body: KernelBody::Dataflow(Arc::new(f)),
        }
    }

    pub fn external(kernel_id: &str) -> Self {
        NodeKernel {
            kernel_id: kernel_id.to_owned(),
            body: KernelBody::External,
        }
    }

    pub fn mode(&self) -> Option<ExecutionMode> {
        match self.body {
            KernelBody::Sequential(_) => Some(ExecutionMode::Sequential),
            KernelBody::Dataflow(_) => Some(ExecutionMode::Dataflow),
            KernelBody::External => None,
        }
    }
}

impl fmt::Debug for NodeKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NodeKernel")
            .field("kernel_id", &self.kernel_id)
            .field("mode", &self.mode())
            .finish()
    }
}

/// The ports of one node, in declaration order.
pub struct NodeIo {
    pub subscribers: Vec<Subscriber>,
    pub publishers: Vec<Publisher>,
}

impl NodeIo {
    pub fn subscriber(&mut self, port: &str) -> Option<&mut Subscriber> {
        self.subscribers.iter_mut().find(|s| s.port() == port)
    }

    pub fn publisher(&mut self, port: &str) -> Option<&mut Publisher> {
        self.publishers.iter_mut().find(|p| p.port() == port)
    }

    /// Removes and returns the subscriber for `port`.
    pub fn take_subscriber(&mut self, port: &str) -> Option<Subscriber> {
        let i = self.subscribers.iter().position(|s| s.port() == port)?;
        Some(self.subscribers.remove(i))
    }

    /// Removes and returns the publisher for `port`.
    pub fn take_publisher(&mut self, port: &str) -> Option<Publisher> {
        let i = self.publishers.iter().position(|p| p.port() == port)?;
        Some(self.publishers.remove(i))
    }
}
