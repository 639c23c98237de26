//! Compiles an application config into one static network per topic.

mod config;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::msgdef::{flatten, MsgError, SerializationPlan, TypeName, TypeRegistry};

pub use config::parse_config;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Publisher,
    Subscriber,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortSpec {
    pub name: String,
    pub direction: Direction,
    pub topic: String,
    pub msg_type: TypeName,
    /// Subscriber buffer depth in messages.
    pub fifo_depth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub name: String,
    pub kernel_id: String,
    pub ports: Vec<PortSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AppSpec {
    pub nodes: Vec<NodeSpec>,
}

impl AppSpec {
    pub fn port_count(&self) -> usize {
        self.nodes.iter().map(|n| n.ports.len()).sum()
    }

    pub fn node(&self, name: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.name == name)
    }
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate node `{node}`")]
    DuplicateNode { line: usize, node: String },
    #[error("{}duplicate port `{port}` on node `{node}`", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    DuplicatePort {
        line: Option<usize>,
        node: String,
        port: String,
    },
    #[error("line {line}: fifo on publisher of topic `{topic}` in node `{node}`")]
    FifoOnPublisher { line: usize, node: String, topic: String },
    #[error("node `{node}` port `{port}`: {source}")]
    Type {
        node: String,
        port: String,
        source: MsgError,
    },
    #[error("invalid topology: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Direct,
    ArbiterOnly,
    BroadcastOnly,
    ArbiterThenBroadcast,
    /// At most one side present and not both: nothing to connect.
    Unconnected,
}

impl Structure {
    /// Arbiter iff several publishers, broadcaster iff several subscribers.
    pub fn for_counts(publishers: usize, subscribers: usize) -> Structure {
        match (publishers > 1, subscribers > 1) {
            (true, true) => Structure::ArbiterThenBroadcast,
            (true, false) => Structure::ArbiterOnly,
            (false, true) => Structure::BroadcastOnly,
            (false, false) if publishers == 1 && subscribers == 1 => Structure::Direct,
            (false, false) => Structure::Unconnected,
        }
    }

    pub fn has_arbiter(self) -> bool {
        matches!(self, Structure::ArbiterOnly | Structure::ArbiterThenBroadcast)
    }

    pub fn has_broadcaster(self) -> bool {
        matches!(self, Structure::BroadcastOnly | Structure::ArbiterThenBroadcast)
    }

    pub fn name(self) -> &'static str {
        match self {
            Structure::Direct => "direct",
            Structure::ArbiterOnly => "arbiter_only",
            Structure::BroadcastOnly => "broadcast_only",
            Structure::ArbiterThenBroadcast => "arbiter_then_broadcast",
            Structure::Unconnected => "unconnected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PublisherRef {
    pub node: String,
    pub port: String,
    #[serde(skip)]
    pub msg_type: TypeName,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubscriberRef {
    pub node: String,
    pub port: String,
    pub fifo: Option<usize>,
    #[serde(skip)]
    pub msg_type: TypeName,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TopicPlan {
    pub name: String,
    #[serde(rename = "type")]
    pub msg_type: TypeName,
    pub structure: Structure,
    pub publishers: Vec<PublisherRef>,
    pub subscribers: Vec<SubscriberRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum History {
    KeepAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reliability {
    Reliable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifetime {
    Infinite,
}

/// The only quality of service the fabric offers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Qos {
    pub history: History,
    pub reliability: Reliability,
    pub lifespan: Lifetime,
    pub lease: Lifetime,
}

pub const QOS: Qos = Qos {
    history: History::KeepAll,
    reliability: Reliability::Reliable,
    lifespan: Lifetime::Infinite,
    lease: Lifetime::Infinite,
};

#[derive(Debug, Clone, Serialize)]
pub struct TopologyGraph {
    topics: Vec<TopicPlan>,
    #[serde(skip)]
    plans: BTreeMap<String, SerializationPlan>,
    #[serde(skip)]
    spec: AppSpec,
}

impl TopologyGraph {
    pub fn topics(&self) -> &[TopicPlan] {
        &self.topics
    }

    pub fn topic(&self, name: &str) -> Option<&TopicPlan> {
        self.topics.iter().find(|t| t.name == name)
    }

    /// Plan for the topic's declared type.
    pub fn plan(&self, topic: &str) -> Option<&SerializationPlan> {
        self.plans.get(topic)
    }

    pub fn spec(&self) -> &AppSpec {
        &self.spec
    }

    pub fn qos(&self) -> Qos {
        QOS
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("graph serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: &'static str,
    pub topic: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}[{}] topic `{}`: {}", self.code, self.topic, self.message)
    }
}

/// Groups ports by topic without judging the result; see [`validate`].
///
/// Topics appear in the order their first port is declared, and ports keep
/// declaration order within a topic.
pub fn assemble(spec: &AppSpec, registry: &TypeRegistry) -> Result<TopologyGraph, TopologyError> {
    let mut topics: Vec<TopicPlan> = Vec::new();
    let mut plans = BTreeMap::new();
    let mut flattened: BTreeMap<&TypeName, SerializationPlan> = BTreeMap::new();

    for node in &spec.nodes {
        let mut seen = std::collections::HashSet::new();
        for port in &node.ports {
            if !seen.insert(&port.name) {
                return Err(TopologyError::DuplicatePort {
                    line: None,
                    node: node.name.clone(),
                    port: port.name.clone(),
                });
            }
            if !flattened.contains_key(&port.msg_type) {
                let plan = flatten(registry, &port.msg_type).map_err(|source| TopologyError::Type {
                    node: node.name.clone(),
                    port: port.name.clone(),
                    source,
                })?;
                flattened.insert(&port.msg_type, plan);
            }

            let idx = match topics.iter().position(|t| t.name == port.topic) {
                Some(i) => i,
                None => {
                    topics.push(TopicPlan {
                        name: port.topic.clone(),
                        msg_type: port.msg_type.clone(),
                        structure: Structure::Unconnected,
                        publishers: Vec::new(),
                        subscribers: Vec::new(),
                    });
                    plans.insert(port.topic.clone(), flattened[&port.msg_type].clone());
                    topics.len() - 1
                }
            };
            let topic = &mut topics[idx];
            match port.direction {
                Direction::Publisher => topic.publishers.push(PublisherRef {
                    node: node.name.clone(),
                    port: port.name.clone(),
                    msg_type: port.msg_type.clone(),
                }),
                Direction::Subscriber => topic.subscribers.push(SubscriberRef {
                    node: node.name.clone(),
                    port: port.name.clone(),
                    fifo: port.fifo_depth,
                    msg_type: port.msg_type.clone(),
                }),
            }
        }
    }
    for t in &mut topics {
        t.structure = Structure::for_counts(t.publishers.len(), t.subscribers.len());
    }
    Ok(TopologyGraph {
        topics,
        plans,
        spec: spec.clone(),
    })
}

/// Assembles the graph and rejects it if validation finds errors.
/// Warnings (partially connected topics) do not fail the build.
pub fn build_topology(spec: &AppSpec, registry: &TypeRegistry) -> Result<TopologyGraph, TopologyError> {
    let graph = assemble(spec, registry)?;
    let errors: Vec<Diagnostic> = validate(&graph)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .collect();
    if errors.is_empty() {
        Ok(graph)
    } else {
        Err(TopologyError::Invalid(errors))
    }
}

/// Type mismatches are errors; topics missing one side are warnings,
/// since a publisher without subscribers blocks forever under Reliable.
pub fn validate(graph: &TopologyGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for t in &graph.topics {
        let port_types = t
            .publishers
            .iter()
            .map(|p| (&p.node, &p.port, &p.msg_type))
            .chain(t.subscribers.iter().map(|s| (&s.node, &s.port, &s.msg_type)));
        let mismatched: Vec<String> = port_types
            .filter(|(_, _, ty)| **ty != t.msg_type)
            .map(|(node, port, ty)| format!("{node}.{port} is {ty}"))
            .collect();
        if !mismatched.is_empty() {
            out.push(Diagnostic {
                severity: Severity::Error,
                code: "type-mismatch",
                topic: t.name.clone(),
                message: format!("expected {}, but {}", t.msg_type, mismatched.join(", ")),
            });
        }
        if t.publishers.is_empty() && !t.subscribers.is_empty() {
            out.push(Diagnostic {
                severity: Severity::Warning,
                code: "unreachable-subscribers",
                topic: t.name.clone(),
                message: format!("{} subscriber(s) but no publisher", t.subscribers.len()),
            });
        }
        if t.subscribers.is_empty() && !t.publishers.is_empty() {
            out.push(Diagnostic {
                severity: Severity::Warning,
                code: "orphan-publishers",
                topic: t.name.clone(),
                message: format!("{} publisher(s) but no subscriber; publishing will block", t.publishers.len()),
            });
        }
    }
    out
}

/// One line per topic, e.g.
/// `A: arbiter_then_broadcast n1.A, n2.A -> arbiter -> broadcaster -> n3.A[fifo=4], n4.A`.
pub fn explain(graph: &TopologyGraph) -> String {
    let mut out = String::new();
    for t in &graph.topics {
        let pubs: Vec<String> = t.publishers.iter().map(|p| format!("{}.{}", p.node, p.port)).collect();
        let subs: Vec<String> = t
            .subscribers
            .iter()
            .map(|s| match s.fifo {
                Some(d) => format!("{}.{}[fifo={d}]", s.node, s.port),
                None => format!("{}.{}", s.node, s.port),
            })
            .collect();
        let side = |v: &[String]| if v.is_empty() { "(none)".to_owned() } else { v.join(", ") };
        let mut parts = vec![side(&pubs)];
        if t.structure.has_arbiter() {
            parts.push("arbiter".to_owned());
        }
        if t.structure.has_broadcaster() {
            parts.push("broadcaster".to_owned());
        }
        parts.push(side(&subs));
        out.push_str(&format!("{}: {} {}\n", t.name, t.structure.name(), parts.join(" -> ")));
    }
    out
}
