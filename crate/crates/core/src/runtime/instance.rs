use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use thiserror::Error;

use super::channel::{Channel, ChannelStats};
use super::infra::{run_arbiter, run_broadcaster};
use super::kernel::{KernelBody, KernelFault, NodeIo, NodeKernel};
use super::port::{PortCtx, Publisher, Subscriber};
use super::signal::{Shared, Signal};
use super::trace::{trace_csv, RecvRecord, SendRecord, Trace};
use super::PortError;
use crate::topology::{Direction, TopologyGraph};

#[derive(Debug, Clone)]
pub struct RuntimeConfig {
    /// Buffer of a link without a FIFO, in words.
    pub link_capacity_words: usize,
    /// Needed to size FIFOs of topics whose type has no fixed size.
    pub max_message_bytes: Option<usize>,
    /// Yield rounds before a blocked context parks.
    pub poll_budget: u32,
    /// Record per-frame timestamps for all ports.
    pub trace: bool,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            link_capacity_words: 1,
            max_message_bytes: None,
            poll_budget: 200,
            trace: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("node `{node}` needs kernel `{kernel_id}`, which was not provided")]
    MissingKernel { node: String, kernel_id: String },
    #[error("subscriber {node}.{port} of topic `{topic}` has a FIFO but its type has no fixed size; set max_message_bytes")]
    UnsizedFifo { topic: String, node: String, port: String },
    #[error("no node `{0}`")]
    UnknownNode(String),
    #[error("ports of node `{0}` were already taken")]
    PortsTaken(String),
    #[error("node `{0}` is not external; its ports belong to its kernel")]
    NotExternal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InstanceSummary {
    pub nodes: usize,
    pub topics: usize,
    pub arbiters: usize,
    pub broadcasters: usize,
    pub fifos: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeFault {
    pub node: String,
    pub message: String,
}

enum Infra {
    Arbiter {
        inputs: Vec<Arc<Channel>>,
        output: Arc<Channel>,
        signal: Arc<Signal>,
    },
    Broadcaster {
        input: Arc<Channel>,
        outputs: Vec<Arc<Channel>>,
        signal: Arc<Signal>,
    },
}

/// A running (or ready to run) topology: one context per node, arbiter and
/// broadcaster, all connected by bounded channels.
pub struct RuntimeInstance {
    shared: Arc<Shared>,
    trace: Option<Arc<Trace>>,
    summary: InstanceSummary,
    channels: Vec<Arc<Channel>>,
    kernels: Vec<(String, NodeKernel)>,
    ports: BTreeMap<String, NodeIo>,
    infra: Vec<Infra>,
    threads: Vec<JoinHandle<()>>,
    faults: Arc<Mutex<Vec<NodeFault>>>,
}

/// Allocates channels and contexts for `graph`; nothing runs until
/// [`RuntimeInstance::start`].
///
/// Every node's `kernel_id` must be a key of `kernels`. Subscriber FIFOs
/// sit after the broadcaster split and hold `fifo_depth` whole messages.
pub fn instantiate(
    graph: &TopologyGraph,
    kernels: &HashMap<String, NodeKernel>,
    config: &RuntimeConfig,
) -> Result<RuntimeInstance, RuntimeError> {
    let spec = graph.spec();
    let mut node_kernels = Vec::new();
    for node in &spec.nodes {
        let kernel = kernels.get(&node.kernel_id).ok_or_else(|| RuntimeError::MissingKernel {
            node: node.name.clone(),
            kernel_id: node.kernel_id.clone(),
        })?;
        node_kernels.push((node.name.clone(), kernel.clone()));
    }

    let shared = Shared::new(config.poll_budget);
    let trace = config.trace.then(|| Arc::new(Trace::default()));
    let link = config.link_capacity_words;
    let mut channels: Vec<Arc<Channel>> = Vec::new();
    let mut infra = Vec::new();
    let mut summary = InstanceSummary {
        nodes: spec.nodes.len(),
        topics: graph.topics().len(),
        ..Default::default()
    };
    // (node, port) -> (channel, publisher origin)
    let mut endpoints: HashMap<(&str, &str), (Arc<Channel>, u32)> = HashMap::new();

    let mut new_channel = |label: String, words: usize, frames: usize, producer: &Arc<Signal>, consumer: &Arc<Signal>| {
        let c = Channel::new(label, words, frames, Arc::clone(producer), Arc::clone(consumer), Arc::clone(&shared));
        channels.push(Arc::clone(&c));
        c
    };

    for topic in graph.topics() {
        let plan = graph.plan(&topic.name).expect("every topic has a plan");
        let name = &topic.name;
        let pub_sigs: Vec<Arc<Signal>> = topic.publishers.iter().map(|_| shared.signal()).collect();
        let arbiter = topic.structure.has_arbiter().then(|| shared.signal());
        let broadcaster = topic.structure.has_broadcaster().then(|| shared.signal());
        let orphan = shared.signal();

        // Context feeding the subscriber side.
        let upstream = broadcaster
            .as_ref()
            .or(arbiter.as_ref())
            .or(pub_sigs.first())
            .unwrap_or(&orphan)
            .clone();

        let mut sub_channels = Vec::new();
        for s in &topic.subscribers {
            let (words, frames) = match s.fifo {
                Some(depth) => {
                    let frame_words = plan
                        .fixed_size_words()
                        .or(config.max_message_bytes.map(|b| b.div_ceil(4)))
                        .ok_or_else(|| RuntimeError::UnsizedFifo {
                            topic: name.clone(),
                            node: s.node.clone(),
                            port: s.port.clone(),
                        })?;
                    summary.fifos += 1;
                    (depth * frame_words, depth)
                }
                None => (link, 1),
            };
            let c = new_channel(format!("{name}->{}.{}", s.node, s.port), words, frames, &upstream, &shared.signal());
            endpoints.insert((&s.node, &s.port), (Arc::clone(&c), 0));
            sub_channels.push(c);
        }

        // Where the publisher side delivers: the broadcaster input, the only
        // subscriber channel, or a sink nobody reads.
        let fan_in_target = match &broadcaster {
            Some(b) => {
                let from = arbiter.as_ref().or(pub_sigs.first()).unwrap_or(&orphan);
                let input = new_channel(format!("{name}->broadcaster"), link, 1, from, b);
                infra.push(Infra::Broadcaster {
                    input: Arc::clone(&input),
                    outputs: sub_channels.clone(),
                    signal: Arc::clone(b),
                });
                summary.broadcasters += 1;
                input
            }
            None => match sub_channels.first() {
                Some(c) => Arc::clone(c),
                None => {
                    let from = arbiter.as_ref().or(pub_sigs.first()).unwrap_or(&orphan);
                    new_channel(format!("{name}->(none)"), link, 1, from, &shared.signal())
                }
            },
        };

        match &arbiter {
            Some(a) => {
                let mut inputs = Vec::new();
                for (i, (p, sig)) in topic.publishers.iter().zip(&pub_sigs).enumerate() {
                    let c = new_channel(format!("{}.{}->arbiter", p.node, p.port), link, 1, sig, a);
                    endpoints.insert((&p.node, &p.port), (Arc::clone(&c), i as u32));
                    inputs.push(c);
                }
                infra.push(Infra::Arbiter {
                    inputs,
                    output: fan_in_target,
                    signal: Arc::clone(a),
                });
                summary.arbiters += 1;
            }
            None => {
                if let Some(p) = topic.publishers.first() {
                    endpoints.insert((&p.node, &p.port), (fan_in_target, 0));
                }
            }
        }
    }

    let mut ports = BTreeMap::new();
    for node in &spec.nodes {
        let mut io = NodeIo {
            subscribers: Vec::new(),
            publishers: Vec::new(),
        };
        for port in &node.ports {
            let (channel, origin) = endpoints[&(node.name.as_str(), port.name.as_str())].clone();
            let ctx = PortCtx {
                topic: port.topic.as_str().into(),
                node: node.name.as_str().into(),
                port: port.name.as_str().into(),
                label: format!("{}.{}", node.name, port.name).into(),
                plan: Arc::new(graph.plan(&port.topic).expect("topic plan").clone()),
                channel,
                shared: Arc::clone(&shared),
                trace: trace.clone(),
            };
            match port.direction {
                Direction::Publisher => io.publishers.push(Publisher::new(ctx, origin)),
                Direction::Subscriber => io.subscribers.push(Subscriber::new(ctx)),
            }
        }
        ports.insert(node.name.clone(), io);
    }
    summary.channels = channels.len();

    Ok(RuntimeInstance {
        shared,
        trace,
        summary,
        channels,
        kernels: node_kernels,
        ports,
        infra,
        threads: Vec::new(),
        faults: Arc::new(Mutex::new(Vec::new())),
    })
}

impl RuntimeInstance {
    pub fn summary(&self) -> InstanceSummary {
        self.summary
    }

    /// Starts one thread per arbiter, broadcaster and non-external node.
    /// Calling it again has no effect.
    pub fn start(&mut self) {
        for task in self.infra.drain(..) {
            let shared = Arc::clone(&self.shared);
            let handle = match task {
                Infra::Arbiter { inputs, output, signal } => thread::Builder::new()
                    .name("arbiter".into())
                    .spawn(move || run_arbiter(&inputs, &output, &signal, &shared)),
                Infra::Broadcaster { input, outputs, signal } => thread::Builder::new()
                    .name("broadcaster".into())
                    .spawn(move || run_broadcaster(&input, &outputs, &signal, &shared)),
            };
            self.threads.push(handle.expect("spawn infrastructure thread"));
        }
        for (node, kernel) in &self.kernels {
            if matches!(kernel.body, KernelBody::External) {
                continue;
            }
            let Some(io) = self.ports.remove(node) else { continue };
            let (shared, faults, body, name) = (
                Arc::clone(&self.shared),
                Arc::clone(&self.faults),
                kernel.body.clone(),
                node.clone(),
            );
            let handle = thread::Builder::new()
                .name(node.clone())
                .spawn(move || run_node(&name, &body, io, &shared, &faults))
                .expect("spawn node thread");
            self.threads.push(handle);
        }
    }

    /// Hands out the ports of an external node.
    pub fn ports(&mut self, node: &str) -> Result<NodeIo, RuntimeError> {
        let (_, kernel) = self
            .kernels
            .iter()
            .find(|(n, _)| n == node)
            .ok_or_else(|| RuntimeError::UnknownNode(node.to_owned()))?;
        if !matches!(kernel.body, KernelBody::External) {
            return Err(RuntimeError::NotExternal(node.to_owned()));
        }
        self.ports
            .remove(node)
            .ok_or_else(|| RuntimeError::PortsTaken(node.to_owned()))
    }

    /// Stops every context: blocked port operations fail with
    /// [`PortError::Shutdown`] and frames still in flight are dropped.
    /// Safe to call more than once.
    pub fn shutdown(&mut self) {
        self.shared.shut_down();
        for h in self.threads.drain(..) {
            let _ = h.join();
        }
    }

    pub fn is_shut_down(&self) -> bool {
        self.shared.is_shut_down()
    }

    /// Kernel failures so far; a fault also shuts the instance down.
    pub fn faults(&self) -> Vec<NodeFault> {
        self.faults.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Nanoseconds on the clock used for all port timestamps.
    pub fn now_ns(&self) -> u64 {
        self.shared.now_ns()
    }

    pub fn channel_stats(&self) -> Vec<ChannelStats> {
        self.channels.iter().map(|c| c.stats()).collect()
    }

    pub fn trace_sends(&self) -> Vec<SendRecord> {
        self.trace.as_ref().map(|t| t.sends()).unwrap_or_default()
    }

    pub fn trace_recvs(&self) -> Vec<RecvRecord> {
        self.trace.as_ref().map(|t| t.recvs()).unwrap_or_default()
    }

    /// Per-frame CSV log; header only when tracing is off.
    pub fn trace_csv(&self) -> String {
        trace_csv(&self.trace_sends(), &self.trace_recvs())
    }
}

impl Drop for RuntimeInstance {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn run_node(name: &str, body: &KernelBody, mut io: NodeIo, shared: &Shared, faults: &Mutex<Vec<NodeFault>>) {
    let fail = |message: String| {
        faults.lock().unwrap_or_else(|e| e.into_inner()).push(NodeFault {
            node: name.to_owned(),
            message,
        });
        shared.shut_down();
    };
    while !shared.is_shut_down() {
        match catch_unwind(AssertUnwindSafe(|| run_once(body, &mut io))) {
            Ok(Ok(())) | Ok(Err(KernelFault::Port(PortError::FrameAborted))) => {}
            Ok(Err(KernelFault::Port(PortError::Shutdown))) => return,
            Ok(Err(e)) => return fail(e.to_string()),
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "unknown panic".to_owned());
                return fail(format!("kernel panicked: {msg}"));
            }
        }
    }
}

fn run_once(body: &KernelBody, io: &mut NodeIo) -> Result<(), KernelFault> {
    match body {
        KernelBody::Sequential(f) => {
            let inputs = io
                .subscribers
                .iter_mut()
                .map(Subscriber::take_blocking)
                .collect::<Result<Vec<_>, _>>()?;
            let outputs = f(&inputs)?;
            if outputs.len() != io.publishers.len() {
                return Err(KernelFault::Failed(format!(
                    "kernel returned {} messages for {} publisher ports",
                    outputs.len(),
                    io.publishers.len()
                )));
            }
            for (p, v) in io.publishers.iter_mut().zip(&outputs) {
                p.publish_blocking(v)?;
            }
            Ok(())
        }
        KernelBody::Dataflow(f) => f(io),
        KernelBody::External => Ok(()),
    }
}
