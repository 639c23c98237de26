use super::{AppSpec, Direction, NodeSpec, PortSpec, TopologyError};
use crate::msgdef::TypeName;

/// Parses the line-oriented application config.
///
/// ```text
/// # comment
/// node camera
///   kernel capture          # optional, defaults to the node name
///   pub image sensor_msgs/Image
/// node viewer
///   sub image sensor_msgs/Image fifo=2 port=in
/// ```
pub fn parse_config(config_text: &str) -> Result<AppSpec, TopologyError> {
    let mut spec = AppSpec::default();
    // Per node: whether `kernel` was given explicitly.
    let mut kernel_set = false;

    for (idx, raw) in config_text.lines().enumerate() {
        let line = idx + 1;
        let text = raw.split('#').next().unwrap_or_default();
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let Some((&keyword, args)) = tokens.split_first() else {
            continue;
        };
        let syntax = |message: String| TopologyError::Syntax { line, message };

        match keyword {
            "node" => {
                let [name] = args else {
                    return Err(syntax("expected `node <name>`".into()));
                };
                if !is_ident(name) {
                    return Err(syntax(format!("invalid node name `{name}`")));
                }
                if spec.nodes.iter().any(|n| n.name == *name) {
                    return Err(TopologyError::DuplicateNode {
                        line,
                        node: (*name).to_owned(),
                    });
                }
                spec.nodes.push(NodeSpec {
                    name: (*name).to_owned(),
                    kernel_id: (*name).to_owned(),
                    ports: Vec::new(),
                });
                kernel_set = false;
            }
            "kernel" => {
                let node = spec
                    .nodes
                    .last_mut()
                    .ok_or_else(|| syntax("`kernel` outside a node block".into()))?;
                let [id] = args else {
                    return Err(syntax("expected `kernel <id>`".into()));
                };
                if kernel_set {
                    return Err(syntax(format!("node `{}` already has a kernel", node.name)));
                }
                node.kernel_id = (*id).to_owned();
                kernel_set = true;
            }
            "pub" | "sub" => {
                let direction = if keyword == "pub" {
                    Direction::Publisher
                } else {
                    Direction::Subscriber
                };
                let node = spec
                    .nodes
                    .last_mut()
                    .ok_or_else(|| syntax(format!("`{keyword}` outside a node block")))?;
                let [topic, msg_type, options @ ..] = args else {
                    return Err(syntax(format!("expected `{keyword} <topic> <msg_type>`")));
                };
                if !is_topic(topic) {
                    return Err(syntax(format!("invalid topic name `{topic}`")));
                }
                let msg_type: TypeName = msg_type
                    .parse()
                    .map_err(|_| syntax(format!("invalid message type `{msg_type}`")))?;

                let mut fifo_depth = None;
                let mut port_name = None;
                for opt in options {
                    match opt.split_once('=') {
                        Some(("fifo", depth)) => {
                            if direction == Direction::Publisher {
                                return Err(TopologyError::FifoOnPublisher {
                                    line,
                                    node: node.name.clone(),
                                    topic: (*topic).to_owned(),
                                });
                            }
                            match depth.parse::<usize>() {
                                Ok(d) if d >= 1 => fifo_depth = Some(d),
                                _ => return Err(syntax(format!("fifo depth must be a positive integer, got `{depth}`"))),
                            }
                        }
                        Some(("port", name)) if is_ident(name) => port_name = Some(name.to_owned()),
                        _ => return Err(syntax(format!("unknown option `{opt}`"))),
                    }
                }
                let name = port_name.unwrap_or_else(|| (*topic).to_owned());
                if node.ports.iter().any(|p| p.name == name) {
                    return Err(TopologyError::DuplicatePort {
                        line: Some(line),
                        node: node.name.clone(),
                        port: name,
                    });
                }
                node.ports.push(PortSpec {
                    name,
                    direction,
                    topic: (*topic).to_owned(),
                    msg_type,
                    fifo_depth,
                });
            }
            other => return Err(syntax(format!("unknown keyword `{other}`"))),
        }
    }
    Ok(spec)
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_topic(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '/')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let spec = parse_config("node a\n  pub t std_msgs/UInt32\n").unwrap();
        assert_eq!(spec.nodes.len(), 1);
        assert_eq!(spec.port_count(), 1);
        let port = &spec.nodes[0].ports[0];
        assert_eq!(port.name, "t");
        assert_eq!(port.direction, Direction::Publisher);
        assert_eq!(spec.nodes[0].kernel_id, "a");
    }

    #[test]
    fn kernel_port_and_fifo_options() {
        let spec = parse_config("node a # the node\n kernel k1\n sub t pkg/T fifo=4 port=input\n").unwrap();
        let n = &spec.nodes[0];
        assert_eq!(n.kernel_id, "k1");
        assert_eq!(n.ports[0].name, "input");
        assert_eq!(n.ports[0].fifo_depth, Some(4));
    }

    #[test]
    fn fifo_on_publisher_is_rejected() {
        let err = parse_config("node a\n pub t pkg/T fifo=2").unwrap_err();
        assert!(matches!(err, TopologyError::FifoOnPublisher { line: 2, .. }), "{err}");
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_config("node a\nnode a"), Err(TopologyError::DuplicateNode { line: 2, .. })));
        assert!(matches!(
            parse_config("node a\n pub t pkg/T\n sub t pkg/T"),
            Err(TopologyError::DuplicatePort { line: Some(3), .. })
        ));
        assert!(parse_config("node a\n pub t pkg/T\n sub t pkg/T port=in").is_ok());
        assert!(matches!(parse_config("pub t pkg/T"), Err(TopologyError::Syntax { line: 1, .. })));
        assert!(matches!(parse_config("node a\n sub t pkg/T fifo=0"), Err(TopologyError::Syntax { line: 2, .. })));
        assert!(matches!(parse_config("node a\n sub t"), Err(TopologyError::Syntax { line: 2, .. })));
        assert!(matches!(parse_config("node a\n frob"), Err(TopologyError::Syntax { line: 2, .. })));
        assert!(matches!(parse_config("node a\n sub t Bad"), Err(TopologyError::Syntax { .. })));
    }

    #[test]
    fn empty_config() {
        assert!(parse_config("# nothing\n\n").unwrap().nodes.is_empty());
    }
}
