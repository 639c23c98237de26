use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::codec::MessageValue;
use crate::msgdef::{flatten, resolve, TypeName, TypeRegistry};
use crate::runtime::{instantiate, NodeKernel, PortError, RecvTiming, RuntimeConfig, SendTiming};
use crate::topology::{build_topology, parse_config, TopologyGraph};

use super::{BaselineDds, BenchError, BenchReport, ConfigResult, Measurement, Subject, SubjectResult};

const PAYLOAD: &str = "bench_msgs/Payload";
const STALL_LIMIT: Duration = Duration::from_secs(60);

/// `3072` → `3k`, `4` → `4B`.
pub fn size_label(bytes: usize) -> String {
    if bytes >= 1024 && bytes % 1024 == 0 {
        format!("{}k", bytes / 1024)
    } else {
        format!("{bytes}B")
    }
}

/// One publisher and one subscriber per size; the publisher waits for each
/// message to arrive before sending the next.
pub fn bench_transfer(sizes: &[usize], reps: usize, subjects: &[Subject]) -> Result<BenchReport, BenchError> {
    check_reps(reps, subjects)?;
    let mut configs = Vec::new();
    for &size in sizes {
        check_size(size)?;
        let (b, s) = run_subjects(subjects, |subject| run_fan(subject, size, reps, 1))?;
        configs.push(ConfigResult::new(size_label(size), b, s));
    }
    Ok(BenchReport {
        scenario: "transfer".into(),
        key: "size".into(),
        configs,
    })
}

/// One publisher and `k` draining subscribers for each `k` in `n_subs`;
/// a message counts as delivered when the last subscriber has it.
pub fn bench_fanout(n_subs: &[usize], size: usize, reps: usize, subjects: &[Subject]) -> Result<BenchReport, BenchError> {
    check_reps(reps, subjects)?;
    check_size(size)?;
    let mut configs = Vec::new();
    for &k in n_subs {
        if k == 0 {
            return Err(BenchError::InvalidParam("subscriber count must be at least 1".into()));
        }
        let (b, s) = run_subjects(subjects, |subject| run_fan(subject, size, reps, k))?;
        configs.push(ConfigResult::new(k.to_string(), b, s));
    }
    Ok(BenchReport {
        scenario: "fanout".into(),
        key: "subscribers".into(),
        configs,
    })
}

fn check_reps(reps: usize, subjects: &[Subject]) -> Result<(), BenchError> {
    if reps == 0 {
        return Err(BenchError::InvalidParam("reps must be at least 1".into()));
    }
    if subjects.is_empty() {
        return Err(BenchError::InvalidParam("no subject selected".into()));
    }
    Ok(())
}

fn check_size(size: usize) -> Result<(), BenchError> {
    if size < 4 {
        return Err(BenchError::InvalidParam(format!("message size {size} is below 4 bytes")));
    }
    Ok(())
}

pub(super) fn run_subjects(
    subjects: &[Subject],
    mut run: impl FnMut(Subject) -> Result<SubjectResult, BenchError>,
) -> Result<(Option<SubjectResult>, Option<SubjectResult>), BenchError> {
    let mut out = (None, None);
    for &subject in subjects {
        let r = Some(run(subject)?);
        match subject {
            Subject::Baseline => out.0 = r,
            Subject::Streaming => out.1 = r,
        }
    }
    Ok(out)
}

fn payload_registry(size: usize) -> Result<TypeRegistry, BenchError> {
    let mut reg = TypeRegistry::new();
    reg.add_source(PAYLOAD, &format!("uint8[{size}] data\n"))?;
    Ok(resolve(reg)?)
}

fn payload_value(size: usize) -> MessageValue {
    MessageValue::new().with("data", (0..size).map(|i| (i % 251) as u8).collect::<Vec<u8>>())
}

fn fan_graph(size: usize, k: usize) -> Result<TopologyGraph, BenchError> {
    let mut cfg = format!("node source\n  pub data {PAYLOAD}\n");
    for i in 0..k {
        let _ = writeln!(cfg, "node sink{i}\n  sub data {PAYLOAD}");
    }
    Ok(build_topology(&parse_config(&cfg)?, &payload_registry(size)?)?)
}

fn run_fan(subject: Subject, size: usize, reps: usize, k: usize) -> Result<SubjectResult, BenchError> {
    let value = payload_value(size);
    let received = Arc::new(AtomicUsize::new(0));
    let mut sends = Vec::with_capacity(reps);
    let recvs = match subject {
        Subject::Streaming => {
            let graph = fan_graph(size, k)?;
            let kernels: HashMap<_, _> = graph
                .spec()
                .nodes
                .iter()
                .map(|n| (n.kernel_id.clone(), NodeKernel::external(&n.kernel_id)))
                .collect();
            let mut rt = instantiate(&graph, &kernels, &RuntimeConfig::default())?;
            rt.start();
            let mut publisher = rt.ports("source")?.publishers.remove(0);
            let mut sinks = Vec::new();
            for i in 0..k {
                let mut s = rt.ports(&format!("sink{i}"))?.subscribers.remove(0);
                sinks.push(spawn_sink(reps, &received, move || {
                    s.take_blocking()?;
                    Ok(s.last_timing().expect("take records timing"))
                }));
            }
            for r in 0..reps {
                publisher.publish_blocking(&value)?;
                sends.push(publisher.last_timing().expect("publish records timing"));
                wait_for(&received, (r + 1) * k)?;
            }
            let recvs = join_sinks(sinks);
            rt.shutdown();
            recvs?
        }
        Subject::Baseline => {
            let reg = payload_registry(size)?;
            let type_name: TypeName = PAYLOAD.parse()?;
            let dds = BaselineDds::new(flatten(&reg, &type_name)?, k, 16);
            let mut sinks = Vec::new();
            for _ in 0..k {
                let mut reader = dds.reader();
                sinks.push(spawn_sink(reps, &received, move || Ok(reader.take()?.1)));
            }
            let mut writer = dds.writer();
            for r in 0..reps {
                sends.push(writer.publish(&value)?);
                wait_for(&received, (r + 1) * k)?;
            }
            let recvs = join_sinks(sinks);
            dds.shutdown();
            recvs?
        }
    };
    summarize(&sends, &recvs)
}

type SinkHandle = JoinHandle<Result<Vec<RecvTiming>, PortError>>;

fn spawn_sink(
    reps: usize,
    received: &Arc<AtomicUsize>,
    mut take: impl FnMut() -> Result<RecvTiming, PortError> + Send + 'static,
) -> SinkHandle {
    let received = Arc::clone(received);
    thread::spawn(move || {
        let mut timings = Vec::with_capacity(reps);
        for _ in 0..reps {
            timings.push(take()?);
            received.fetch_add(1, Ordering::AcqRel);
        }
        Ok(timings)
    })
}

fn join_sinks(sinks: Vec<SinkHandle>) -> Result<Vec<Vec<RecvTiming>>, BenchError> {
    sinks
        .into_iter()
        .map(|h| match h.join() {
            Ok(r) => r.map_err(BenchError::from),
            Err(_) => Err(BenchError::Faulted("subscriber thread panicked".into())),
        })
        .collect()
}

/// Yields until `counter` reaches `target`.
fn wait_for(counter: &AtomicUsize, target: usize) -> Result<(), BenchError> {
    let start = Instant::now();
    while counter.load(Ordering::Acquire) < target {
        if start.elapsed() > STALL_LIMIT {
            return Err(BenchError::Faulted(format!("delivery stalled at {} of {target}", counter.load(Ordering::Acquire))));
        }
        thread::yield_now();
    }
    Ok(())
}

/// Per message: latest receipt over all subscribers minus first send.
pub(super) fn summarize(sends: &[SendTiming], recvs: &[Vec<RecvTiming>]) -> Result<SubjectResult, BenchError> {
    for r in recvs {
        if r.len() != sends.len() {
            return Err(BenchError::Lost {
                published: sends.len(),
                received: r.len(),
            });
        }
    }
    let mut transport = Vec::with_capacity(sends.len());
    let mut codec = Vec::with_capacity(sends.len());
    for (i, s) in sends.iter().enumerate() {
        let last = recvs.iter().map(|r| r[i].t_last_recv).max().unwrap_or(s.t_last_sent);
        let decoded = recvs.iter().map(|r| r[i].t_decode_end).max().unwrap_or(s.t_last_sent);
        transport.push(last.saturating_sub(s.t_first_sent));
        codec.push(decoded.saturating_sub(s.t_encode_start));
    }
    Ok(SubjectResult {
        transport: Measurement::steady_state(&transport)?,
        codec_inclusive: Some(Measurement::steady_state(&codec)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(size_label(3 * 1024), "3k");
        assert_eq!(size_label(4), "4B");
        assert_eq!(size_label(1500), "1500B");
    }

    #[test]
    fn single_rep_four_bytes() {
        let r = bench_transfer(&[4], 1, &[Subject::Streaming, Subject::Baseline]).unwrap();
        assert_eq!(r.configs.len(), 1);
        for s in [&r.configs[0].baseline, &r.configs[0].streaming] {
            let m = &s.as_ref().unwrap().transport;
            assert_eq!((m.n, m.sigma), (1, 0.0));
        }
        assert!(r.configs[0].speedup.unwrap() > 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(bench_transfer(&[2], 1, &[Subject::Streaming]).is_err());
        assert!(bench_transfer(&[8], 0, &[Subject::Streaming]).is_err());
        assert!(bench_fanout(&[0], 8, 1, &[Subject::Streaming]).is_err());
    }

    #[test]
    fn fanout_conserves_messages() {
        let r = bench_fanout(&[1, 3], 64, 20, &[Subject::Streaming, Subject::Baseline]).unwrap();
        for c in &r.configs {
            assert_eq!(c.streaming.as_ref().unwrap().transport.n, 19);
            assert_eq!(c.baseline.as_ref().unwrap().transport.n, 19);
        }
    }
}
