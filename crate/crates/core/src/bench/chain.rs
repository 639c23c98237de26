use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{ArrayValue, MessageValue, Value};
use crate::msgdef::{flatten, resolve, TypeName, TypeRegistry};
use crate::runtime::{
    instantiate, ExecutionMode, FrameReader, KernelFault, NodeIo, NodeKernel, PortError, ReadStatus, RecvTiming,
    RuntimeConfig, SendTiming,
};
use crate::topology::{build_topology, parse_config, TopologyGraph};

use super::transfer::run_subjects;
use super::{BaselineDds, BenchError, BenchReport, ConfigResult, Measurement, Subject, SubjectResult};

/// Processing nodes of the chain, in order.
pub const CHAIN_STAGES: [&str; 5] = ["compensation", "blur", "projection", "lane_following", "control"];

const TOPICS: [(&str, &str); 6] = [
    ("image_raw", IMAGE),
    ("image_comp", IMAGE),
    ("image_blur", IMAGE),
    ("image_bev", IMAGE),
    ("lane_center", CENTER),
    ("cmd_vel", COMMAND),
];

const IMAGE: &str = "bench_msgs/Image";
const CENTER: &str = "bench_msgs/LaneCenter";
const COMMAND: &str = "bench_msgs/Command";

#[derive(Debug, Clone)]
pub struct ChainParams {
    /// Image side scale relative to 1000 × 600.
    pub scale: f64,
    pub reps: usize,
    pub seed: u64,
    /// Write granularity of dataflow stages.
    pub chunk_bytes: usize,
    /// FIFO depth, in images, in front of each streaming stage; 0 for none.
    pub fifo_depth: usize,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            scale: 1.0,
            reps: 1000,
            seed: 1,
            chunk_bytes: 64 * 1024,
            fifo_depth: 1,
        }
    }
}

impl ChainParams {
    /// Width (a multiple of 4) and height of the image.
    pub fn dims(&self) -> (usize, usize) {
        let w = ((1000.0 * self.scale).round() as usize).max(4).next_multiple_of(4);
        let h = ((600.0 * self.scale).round() as usize).max(1);
        (w, h)
    }
}

/// Runs the camera → five stages → drive chain and measures, per frame,
/// control's publish completion minus compensation's first received word.
pub fn bench_chain(mode: ExecutionMode, subject: Subject, params: &ChainParams) -> Result<SubjectResult, BenchError> {
    if params.reps == 0 {
        return Err(BenchError::InvalidParam("reps must be at least 1".into()));
    }
    if !(params.scale > 0.0) {
        return Err(BenchError::InvalidParam("scale must be positive".into()));
    }
    let samples = match (subject, mode) {
        (Subject::Streaming, mode) => streaming_chain(mode, params)?,
        (Subject::Baseline, ExecutionMode::Sequential) => baseline_chain(params)?,
        (Subject::Baseline, ExecutionMode::Dataflow) => {
            return Err(BenchError::Unsupported("the baseline only runs sequential kernels".into()))
        }
    };
    Ok(SubjectResult {
        transport: Measurement::steady_state(&samples)?,
        codec_inclusive: None,
    })
}

/// One row per mode; the baseline column stays empty for dataflow.
pub fn chain_report(modes: &[ExecutionMode], subjects: &[Subject], params: &ChainParams) -> Result<BenchReport, BenchError> {
    if subjects.is_empty() {
        return Err(BenchError::InvalidParam("no subject selected".into()));
    }
    let mut configs = Vec::new();
    for &mode in modes {
        let usable: Vec<Subject> = subjects
            .iter()
            .copied()
            .filter(|&s| !(s == Subject::Baseline && mode == ExecutionMode::Dataflow))
            .collect();
        if usable.is_empty() {
            return Err(BenchError::Unsupported("the baseline only runs sequential kernels".into()));
        }
        let (b, s) = run_subjects(&usable, |subject| bench_chain(mode, subject, params))?;
        configs.push(ConfigResult::new(mode.to_string(), b, s));
    }
    Ok(BenchReport {
        scenario: "chain".into(),
        key: "mode".into(),
        configs,
    })
}

fn chain_registry() -> Result<TypeRegistry, BenchError> {
    let mut reg = TypeRegistry::new();
    reg.add_source(IMAGE, "uint32 width\nuint32 height\nuint8[] data\n")?;
    reg.add_source(CENTER, "float64 x\nfloat64 y\nfloat64 width\n")?;
    reg.add_source(COMMAND, "float64 linear\nfloat64 angular\n")?;
    Ok(resolve(reg)?)
}

fn chain_graph(fifo_depth: usize) -> Result<TopologyGraph, BenchError> {
    let fifo = match fifo_depth {
        0 => String::new(),
        d => format!(" fifo={d}"),
    };
    let mut cfg = format!("node camera\n  pub {} {}\n", TOPICS[0].0, TOPICS[0].1);
    for (i, stage) in CHAIN_STAGES.iter().enumerate() {
        let (input, in_ty) = TOPICS[i];
        let (output, out_ty) = TOPICS[i + 1];
        cfg.push_str(&format!("node {stage}\n  sub {input} {in_ty}{fifo}\n  pub {output} {out_ty}\n"));
    }
    cfg.push_str(&format!("node drive\n  sub {} {}\n", TOPICS[5].0, TOPICS[5].1));
    Ok(build_topology(&parse_config(&cfg)?, &chain_registry()?)?)
}

/// Noise with two bright lane markings drifting across the rows.
pub fn camera_image(params: &ChainParams) -> MessageValue {
    let (w, h) = params.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut data = vec![0u8; w * h];
    for (y, row) in data.chunks_mut(w).enumerate() {
        for px in row.iter_mut() {
            *px = rng.gen_range(0..64);
        }
        let shift = y * w / (8 * h);
        for lane in [w / 3 + shift, 2 * w / 3 - shift] {
            for x in lane.saturating_sub(2)..(lane + 2).min(w) {
                row[x] = 230;
            }
        }
    }
    image(w, h, data)
}

fn image(w: usize, h: usize, data: Vec<u8>) -> MessageValue {
    MessageValue::new()
        .with("width", w as u32)
        .with("height", h as u32)
        .with("data", data)
}

fn compensate_row(src: &[u8], dst: &mut Vec<u8>) {
    dst.extend(src.iter().map(|&v| ((v as u16 * 3) / 4 + 16) as u8));
}

fn blur3(l: u8, c: u8, r: u8) -> u8 {
    ((l as u16 + 2 * c as u16 + r as u16) / 4) as u8
}

/// 1-2-1 horizontal blur with clamped edges.
fn blur_row(src: &[u8], dst: &mut Vec<u8>) {
    match src {
        [] => {}
        [v] => dst.push(*v),
        _ => {
            let n = src.len();
            dst.push(blur3(src[0], src[0], src[1]));
            dst.extend(src.windows(3).map(|t| blur3(t[0], t[1], t[2])));
            dst.push(blur3(src[n - 2], src[n - 1], src[n - 1]));
        }
    }
}

/// Widens rows towards the bottom, a crude inverse perspective. Source
/// columns are `c + floor((x - c) * (y + h) / 2h)` in 16.16 fixed point.
fn project_row(src: &[u8], y: usize, h: usize, dst: &mut Vec<u8>) {
    let w = src.len() as i64;
    let c = w / 2;
    let step = (((y + h) as i64) << 16) / (2 * h) as i64;
    dst.extend((0..w).map(|x| src[(c + (((x - c) * step) >> 16)) as usize]));
}

#[derive(Default)]
struct LaneCenter {
    sum_x: f64,
    sum_y: f64,
    weight: f64,
}

impl LaneCenter {
    fn add_row(&mut self, row: &[u8], y: usize) {
        for (x, &v) in row.iter().enumerate() {
            if v > 128 {
                let wgt = v as f64;
                self.sum_x += wgt * x as f64;
                self.sum_y += wgt * y as f64;
                self.weight += wgt;
            }
        }
    }

    fn value(&self, w: usize, h: usize) -> MessageValue {
        let (x, y) = if self.weight > 0.0 {
            (self.sum_x / self.weight, self.sum_y / self.weight)
        } else {
            (w as f64 / 2.0, h as f64 / 2.0)
        };
        MessageValue::new().with("x", x).with("y", y).with("width", w as f64)
    }
}

fn steer(center: &MessageValue) -> Result<MessageValue, KernelFault> {
    let x = float(center, "x")?;
    let w = float(center, "width").unwrap_or(1000.0);
    let offset = (x - w / 2.0) / (w / 2.0);
    Ok(MessageValue::new()
        .with("linear", 1.0 - 0.5 * offset.abs())
        .with("angular", -0.8 * offset))
}

fn float(m: &MessageValue, name: &str) -> Result<f64, KernelFault> {
    match m.get(name) {
        Some(Value::Float64(v)) => Ok(*v),
        _ => Err(KernelFault::Failed(format!("missing float field `{name}`"))),
    }
}

fn unpack_image(m: &MessageValue) -> Result<(usize, usize, &[u8]), KernelFault> {
    let dim = |name| match m.get(name) {
        Some(Value::Uint32(v)) => Ok(*v as usize),
        _ => Err(KernelFault::Failed(format!("image without `{name}`"))),
    };
    let (w, h) = (dim("width")?, dim("height")?);
    match m.get("data") {
        Some(Value::Array(ArrayValue::Uint8(d))) if d.len() == w * h && w > 0 => Ok((w, h, d)),
        _ => Err(KernelFault::Failed("image data does not match its size".into())),
    }
}

/// Whole-message version of a stage.
fn stage_sequential(stage: &str, input: &MessageValue) -> Result<MessageValue, KernelFault> {
    if stage == "control" {
        return steer(input);
    }
    let (w, h, data) = unpack_image(input)?;
    let rows = data.chunks(w).enumerate();
    if stage == "lane_following" {
        let mut acc = LaneCenter::default();
        rows.for_each(|(y, row)| acc.add_row(row, y));
        return Ok(acc.value(w, h));
    }
    let mut out = Vec::with_capacity(w * h);
    for (y, row) in rows {
        match stage {
            "compensation" => compensate_row(row, &mut out),
            "blur" => blur_row(row, &mut out),
            _ => project_row(row, y, h, &mut out),
        }
    }
    Ok(image(w, h, out))
}

/// Buffers incoming chunks so a dataflow stage can consume exact lengths.
struct Rows<'r, 'p> {
    reader: &'r mut FrameReader<'p>,
    buf: Vec<u8>,
    pos: usize,
    chunk: usize,
}

impl Rows<'_, '_> {
    fn next(&mut self, n: usize) -> Result<&[u8], KernelFault> {
        while self.buf.len() - self.pos < n {
            if self.pos > 0 {
                self.buf.drain(..self.pos);
                self.pos = 0;
            }
            if let ReadStatus::End(_) = self.reader.read(&mut self.buf, self.chunk)? {
                return Err(KernelFault::Failed("image frame ended early".into()));
            }
        }
        self.pos += n;
        Ok(&self.buf[self.pos - n..self.pos])
    }

    fn finish(&mut self) -> Result<(), KernelFault> {
        if self.pos != self.buf.len() {
            return Err(KernelFault::Failed("image frame has trailing bytes".into()));
        }
        match self.reader.read(&mut self.buf, 4)? {
            ReadStatus::End(_) => Ok(()),
            ReadStatus::Data(_) => Err(KernelFault::Failed("image frame has trailing bytes".into())),
        }
    }
}

fn header(bytes: &[u8]) -> Result<(usize, usize), KernelFault> {
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes")) as usize;
    let (w, h, n) = (word(0), word(1), word(2));
    if w == 0 || w % 4 != 0 || n != w * h {
        return Err(KernelFault::Failed(format!("unsupported image {w}x{h} with {n} bytes")));
    }
    Ok((w, h))
}

/// Row-streaming version of a stage: output rows leave while later input
/// rows are still arriving.
fn stage_dataflow(stage: &str, io: &mut NodeIo, chunk: usize) -> Result<(), KernelFault> {
    let NodeIo { subscribers, publishers } = io;
    if stage == "control" {
        let center = subscribers[0].take_blocking()?;
        publishers[0].publish_blocking(&steer(&center)?)?;
        return Ok(());
    }
    let mut reader = subscribers[0].begin_take()?;
    let mut rows = Rows {
        reader: &mut reader,
        buf: Vec::with_capacity(2 * chunk),
        pos: 0,
        chunk,
    };
    let head = rows.next(12)?.to_vec();
    let (w, h) = header(&head)?;
    if stage == "lane_following" {
        let mut acc = LaneCenter::default();
        for y in 0..h {
            acc.add_row(rows.next(w)?, y);
        }
        rows.finish()?;
        drop(reader);
        publishers[0].publish_blocking(&acc.value(w, h))?;
        return Ok(());
    }
    let mut writer = publishers[0].begin_frame()?;
    writer.write(head)?;
    let mut out = Vec::with_capacity(chunk + w);
    for y in 0..h {
        let row = rows.next(w)?;
        match stage {
            "compensation" => compensate_row(row, &mut out),
            "blur" => blur_row(row, &mut out),
            _ => project_row(row, y, h, &mut out),
        }
        if out.len() >= chunk {
            writer.write(std::mem::replace(&mut out, Vec::with_capacity(chunk + w)))?;
        }
    }
    rows.finish()?;
    writer.finish_with(out)?;
    Ok(())
}

fn stage_kernel(stage: &'static str, mode: ExecutionMode, chunk: usize) -> NodeKernel {
    match mode {
        ExecutionMode::Sequential => NodeKernel::sequential(stage, move |inputs| Ok(vec![stage_sequential(stage, &inputs[0])?])),
        ExecutionMode::Dataflow => NodeKernel::dataflow(stage, move |io| stage_dataflow(stage, io, chunk)),
    }
}

/// With more stages than cores, waiting stages that yield only delay the
/// one doing work, so they park at once.
fn chain_poll_budget() -> u32 {
    let cores = thread::available_parallelism().map_or(1, |n| n.get());
    if cores > CHAIN_STAGES.len() {
        RuntimeConfig::default().poll_budget
    } else {
        0
    }
}

const SETTLE_LIMIT: Duration = Duration::from_secs(30);

fn streaming_chain(mode: ExecutionMode, params: &ChainParams) -> Result<Vec<u64>, BenchError> {
    let graph = chain_graph(params.fifo_depth)?;
    let mut kernels: HashMap<String, NodeKernel> = CHAIN_STAGES
        .iter()
        .map(|&s| (s.to_owned(), stage_kernel(s, mode, params.chunk_bytes.max(4).next_multiple_of(4))))
        .collect();
    for n in ["camera", "drive"] {
        kernels.insert(n.to_owned(), NodeKernel::external(n));
    }
    let (w, h) = params.dims();
    let config = RuntimeConfig {
        trace: true,
        // Width, height and length words ahead of the pixels.
        max_message_bytes: Some(12 + w * h),
        poll_budget: chain_poll_budget(),
        ..Default::default()
    };
    let mut rt = instantiate(&graph, &kernels, &config)?;
    rt.start();
    let mut camera = rt.ports("camera")?.publishers.remove(0);
    let mut drive = rt.ports("drive")?.subscribers.remove(0);
    let frame = camera_image(params);
    let fault = |rt: &crate::runtime::RuntimeInstance, e: PortError| match rt.faults().first() {
        Some(f) => BenchError::Faulted(format!("{}: {}", f.node, f.message)),
        None => e.into(),
    };
    for _ in 0..params.reps {
        camera.publish_blocking(&frame).map_err(|e| fault(&rt, e))?;
        drive.take_blocking().map_err(|e| fault(&rt, e))?;
    }
    // Control records its send just after drive's take returns.
    let start = Instant::now();
    let (first, last) = loop {
        let recvs: Vec<u64> = rt
            .trace_recvs()
            .iter()
            .filter(|r| &*r.subscriber == "compensation.image_raw")
            .map(|r| r.timing.t_first_recv)
            .collect();
        let sends: Vec<u64> = rt
            .trace_sends()
            .iter()
            .filter(|s| &*s.publisher == "control.cmd_vel")
            .map(|s| s.timing.t_first_sent)
            .collect();
        if sends.len() >= params.reps || start.elapsed() > SETTLE_LIMIT {
            break (recvs, sends);
        }
        thread::sleep(Duration::from_millis(1));
    };
    rt.shutdown();
    pair(&first, &last, params.reps)
}

fn pair(first: &[u64], last: &[u64], reps: usize) -> Result<Vec<u64>, BenchError> {
    if first.len() < reps || last.len() < reps {
        return Err(BenchError::Lost {
            published: reps,
            received: first.len().min(last.len()),
        });
    }
    Ok(first[..reps].iter().zip(&last[..reps]).map(|(a, b)| b.saturating_sub(*a)).collect())
}

fn baseline_chain(params: &ChainParams) -> Result<Vec<u64>, BenchError> {
    let reg = chain_registry()?;
    let mut topics = Vec::new();
    for (_, ty) in &TOPICS[..6] {
        let name: TypeName = ty.parse()?;
        topics.push(BaselineDds::new(flatten(&reg, &name)?, 1, 4));
    }
    let first: Arc<Mutex<Vec<RecvTiming>>> = Arc::default();
    let last: Arc<Mutex<Vec<SendTiming>>> = Arc::default();
    let mut threads = Vec::new();
    for (i, &stage) in CHAIN_STAGES.iter().enumerate() {
        let mut reader = topics[i].reader();
        let mut writer = topics[i + 1].writer();
        let (first, last) = (Arc::clone(&first), Arc::clone(&last));
        threads.push(thread::spawn(move || -> Result<(), BenchError> {
            loop {
                let (input, recv) = match reader.take() {
                    Ok(r) => r,
                    Err(PortError::Shutdown) => return Ok(()),
                    Err(e) => return Err(e.into()),
                };
                if i == 0 {
                    first.lock().unwrap_or_else(|e| e.into_inner()).push(recv);
                }
                let output = stage_sequential(stage, &input).map_err(|e| BenchError::Faulted(format!("{stage}: {e}")))?;
                let sent = match writer.publish(&output) {
                    Ok(t) => t,
                    Err(PortError::Shutdown) => return Ok(()),
                    Err(e) => return Err(e.into()),
                };
                if stage == "control" {
                    last.lock().unwrap_or_else(|e| e.into_inner()).push(sent);
                }
            }
        }));
    }
    let mut camera = topics[0].writer();
    let mut drive = topics[5].reader();
    let frame = camera_image(params);
    let mut result = Ok(());
    for _ in 0..params.reps {
        if let Err(e) = camera.publish(&frame).and_then(|_| drive.take()) {
            result = Err(BenchError::from(e));
            break;
        }
    }
    let start = Instant::now();
    while result.is_ok() && last.lock().unwrap_or_else(|e| e.into_inner()).len() < params.reps && start.elapsed() < SETTLE_LIMIT {
        thread::sleep(Duration::from_millis(1));
    }
    for t in &topics {
        t.shutdown();
    }
    for t in threads {
        match t.join() {
            Ok(r) => r?,
            Err(_) => return Err(BenchError::Faulted("chain stage panicked".into())),
        }
    }
    result?;
    let first: Vec<u64> = first.lock().unwrap_or_else(|e| e.into_inner()).iter().map(|t| t.t_first_recv).collect();
    let last: Vec<u64> = last.lock().unwrap_or_else(|e| e.into_inner()).iter().map(|t| t.t_first_sent).collect();
    pair(&first, &last, params.reps)
}
