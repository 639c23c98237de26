#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use fabricdds::msgdef::{load_msg_dir, resolve, TypeRegistry};
use fabricdds::runtime::{Chunk, NodeIo, NodeKernel};
use fabricdds::topology::{build_topology, parse_config, TopologyGraph};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Fixture types plus a few sized test types.
pub fn registry() -> TypeRegistry {
    let mut reg = load_msg_dir(&fixtures().join("msg")).expect("fixture messages load");
    reg.add_source("test_msgs/Block", "uint32[16] data\n").unwrap();
    reg.add_source("test_msgs/Blob", "uint8[] data\n").unwrap();
    resolve(reg).expect("fixture messages resolve")
}

pub fn graph(cfg: &str) -> TopologyGraph {
    build_topology(&parse_config(cfg).expect("config parses"), &registry()).expect("topology builds")
}

pub fn fixture_graph(file: &str) -> TopologyGraph {
    graph(&std::fs::read_to_string(fixtures().join(file)).unwrap())
}

/// One external kernel per node, keyed by the node's kernel id.
pub fn externals(graph: &TopologyGraph) -> HashMap<String, NodeKernel> {
    graph
        .spec()
        .nodes
        .iter()
        .map(|n| (n.kernel_id.clone(), NodeKernel::external(&n.kernel_id)))
        .collect()
}

pub fn identity_sequential(id: &str) -> NodeKernel {
    NodeKernel::sequential(id, |inputs| Ok(inputs.to_vec()))
}

/// Forwards the first subscriber's frames to the first publisher in chunks
/// of at most `chunk` bytes, starting each output before the input has ended.
pub fn identity_dataflow(id: &str, chunk: usize) -> NodeKernel {
    NodeKernel::dataflow(id, move |io: &mut NodeIo| {
        let NodeIo { subscribers, publishers } = io;
        let mut reader = subscribers[0].begin_take()?;
        let mut writer = publishers[0].begin_frame()?;
        loop {
            match reader.read_chunk(chunk)? {
                Chunk::Data(d) => writer.write(d)?,
                Chunk::End(_) => {
                    writer.finish()?;
                    return Ok(());
                }
            }
        }
    })
}
