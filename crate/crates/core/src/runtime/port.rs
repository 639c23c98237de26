use std::sync::Arc;

use bytes::Bytes;

use super::channel::{Channel, FrameTag, Step};
use super::signal::Shared;
use super::trace::{RecvRecord, RecvTiming, SendRecord, SendTiming, Trace};
use super::PortError;
use crate::codec::{decode_payload, serialize, Frame, MessageValue};
use crate::msgdef::SerializationPlan;

pub(crate) struct PortCtx {
    pub(crate) topic: Arc<str>,
    pub(crate) node: Arc<str>,
    pub(crate) port: Arc<str>,
    /// `node.port`, as written to the trace.
    pub(crate) label: Arc<str>,
    pub(crate) plan: Arc<SerializationPlan>,
    pub(crate) channel: Arc<Channel>,
    pub(crate) shared: Arc<Shared>,
    pub(crate) trace: Option<Arc<Trace>>,
}

/// Writing end of a topic for one node port.
pub struct Publisher {
    ctx: PortCtx,
    origin: u32,
    next_seq: u64,
    last: Option<SendTiming>,
}

/// Reading end of a topic for one node port.
pub struct Subscriber {
    ctx: PortCtx,
    last: Option<RecvTiming>,
    /// A reader was dropped mid-frame; the rest must be skipped.
    skip_rest: bool,
}

impl Publisher {
    pub(crate) fn new(ctx: PortCtx, origin: u32) -> Self {
        Publisher {
            ctx,
            origin,
            next_seq: 0,
            last: None,
        }
    }

    pub fn topic(&self) -> &str {
        &self.ctx.topic
    }

    pub fn node(&self) -> &str {
        &self.ctx.node
    }

    pub fn port(&self) -> &str {
        &self.ctx.port
    }

    pub fn plan(&self) -> &SerializationPlan {
        &self.ctx.plan
    }

    /// Timestamps of the most recently completed frame.
    pub fn last_timing(&self) -> Option<SendTiming> {
        self.last
    }

    pub fn frames_sent(&self) -> u64 {
        self.next_seq
    }

    fn next_tag(&mut self) -> FrameTag {
        let tag = FrameTag {
            origin: self.origin,
            seq: self.next_seq,
            aborted: false,
        };
        self.next_seq += 1;
        tag
    }

    fn record(&mut self, timing: SendTiming) {
        self.last = Some(timing);
        if let Some(trace) = &self.ctx.trace {
            trace.record_send(SendRecord {
                topic: Arc::clone(&self.ctx.topic),
                publisher: Arc::clone(&self.ctx.label),
                timing,
            });
        }
    }

    fn check_open(&self) -> Result<(), PortError> {
        if self.ctx.shared.is_shut_down() {
            Err(PortError::Shutdown)
        } else {
            Ok(())
        }
    }

    /// Serializes and sends one message; returns once the last word and the
    /// end marker have been accepted downstream.
    pub fn publish_blocking(&mut self, value: &MessageValue) -> Result<(), PortError> {
        self.check_open()?;
        let t_encode_start = self.ctx.shared.now_ns();
        let frame = serialize(value, &self.ctx.plan)?;
        self.send(frame.into_bytes(), t_encode_start)
    }

    /// Sends an already serialized frame.
    pub fn publish_frame_blocking(&mut self, frame: Frame) -> Result<(), PortError> {
        self.check_open()?;
        let t = self.ctx.shared.now_ns();
        self.send(frame.into_bytes(), t)
    }

    fn send(&mut self, bytes: Vec<u8>, t_encode_start: u64) -> Result<(), PortError> {
        let tag = self.next_tag();
        let t_first_sent = self.ctx.shared.now_ns();
        self.ctx.channel.write(Bytes::from(bytes), Some(tag))?;
        let t_last_sent = self.ctx.shared.now_ns();
        self.record(SendTiming {
            origin: tag.origin,
            seq: tag.seq,
            t_encode_start,
            t_first_sent,
            t_last_sent,
        });
        Ok(())
    }

    /// Enqueues the whole frame if the downstream buffer can hold all of it
    /// now; otherwise returns `false` and changes nothing. On an unbuffered
    /// link only frames of at most one word can be accepted this way.
    pub fn publish_try(&mut self, value: &MessageValue) -> Result<bool, PortError> {
        self.check_open()?;
        let t_encode_start = self.ctx.shared.now_ns();
        let frame = serialize(value, &self.ctx.plan)?;
        let tag = FrameTag {
            origin: self.origin,
            seq: self.next_seq,
            aborted: false,
        };
        let t_first_sent = self.ctx.shared.now_ns();
        if !self.ctx.channel.try_write_frame(Bytes::from(frame.into_bytes()), tag)? {
            return Ok(false);
        }
        self.next_seq += 1;
        let t_last_sent = self.ctx.shared.now_ns();
        self.record(SendTiming {
            origin: tag.origin,
            seq: tag.seq,
            t_encode_start,
            t_first_sent,
            t_last_sent,
        });
        Ok(true)
    }

    /// Starts a frame written piecewise, for dataflow kernels.
    pub fn begin_frame(&mut self) -> Result<FrameWriter<'_>, PortError> {
        self.check_open()?;
        let tag = self.next_tag();
        Ok(FrameWriter {
            publisher: self,
            tag,
            t_first: None,
            done: false,
        })
    }
}

/// An open frame on a [`Publisher`]. Each write blocks until downstream has
/// accepted it. Dropping the writer before [`FrameWriter::finish`] aborts the
/// frame; subscribers never see it.
pub struct FrameWriter<'a> {
    publisher: &'a mut Publisher,
    tag: FrameTag,
    t_first: Option<u64>,
    done: bool,
}

impl FrameWriter<'_> {
    /// Writes whole words; `data.len()` must be a multiple of 4.
    pub fn write(&mut self, data: impl Into<Bytes>) -> Result<(), PortError> {
        self.put(data.into(), None)
    }

    fn put(&mut self, data: Bytes, end: Option<FrameTag>) -> Result<(), PortError> {
        if data.len() % 4 != 0 {
            return Err(PortError::Unaligned(data.len()));
        }
        let shared = &self.publisher.ctx.shared;
        self.t_first.get_or_insert_with(|| shared.now_ns());
        self.publisher.ctx.channel.write(data, end)
    }

    /// Writes the final words together with the end marker.
    pub fn finish_with(mut self, data: impl Into<Bytes>) -> Result<SendTiming, PortError> {
        let tag = self.tag;
        self.put(data.into(), Some(tag))?;
        self.done = true;
        let now = self.publisher.ctx.shared.now_ns();
        let t_first = self.t_first.unwrap_or(now);
        let timing = SendTiming {
            origin: tag.origin,
            seq: tag.seq,
            t_encode_start: t_first,
            t_first_sent: t_first,
            t_last_sent: now,
        };
        self.publisher.record(timing);
        Ok(timing)
    }

    pub fn finish(self) -> Result<SendTiming, PortError> {
        self.finish_with(Bytes::new())
    }
}

impl Drop for FrameWriter<'_> {
    fn drop(&mut self) {
        if !self.done && self.t_first.is_some() {
            self.publisher.ctx.channel.abort_frame(self.tag);
        }
    }
}

/// Result of one [`FrameReader::read`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadStatus {
    /// This many bytes were appended to the buffer.
    Data(usize),
    /// The frame is complete.
    End(RecvTiming),
}

#[derive(Debug)]
pub enum Chunk {
    Data(Bytes),
    End(RecvTiming),
}

impl Subscriber {
    pub(crate) fn new(ctx: PortCtx) -> Self {
        Subscriber {
            ctx,
            last: None,
            skip_rest: false,
        }
    }

    pub fn topic(&self) -> &str {
        &self.ctx.topic
    }

    pub fn node(&self) -> &str {
        &self.ctx.node
    }

    pub fn port(&self) -> &str {
        &self.ctx.port
    }

    pub fn plan(&self) -> &SerializationPlan {
        &self.ctx.plan
    }

    pub fn last_timing(&self) -> Option<RecvTiming> {
        self.last
    }

    fn record(&mut self, timing: RecvTiming) {
        self.last = Some(timing);
        if let Some(trace) = &self.ctx.trace {
            trace.record_recv(RecvRecord {
                topic: Arc::clone(&self.ctx.topic),
                subscriber: Arc::clone(&self.ctx.label),
                timing,
            });
        }
    }

    fn skip_partial(&mut self) -> Result<(), PortError> {
        while self.skip_rest {
            if let Step::End(_) = self.ctx.channel.step(usize::MAX)? {
                self.skip_rest = false;
            }
        }
        Ok(())
    }

    /// Reads one complete, non-aborted frame. With `blocking` false the
    /// caller has checked that a frame marker is present.
    /// A frame delivered as one piece is returned without copying.
    fn read_frame(&mut self, blocking: bool) -> Result<Option<(Bytes, FrameTag, u64, u64)>, PortError> {
        let mut single: Option<Bytes> = None;
        let mut buf: Vec<u8> = Vec::new();
        let mut t_first = None;
        loop {
            let step = if blocking {
                self.ctx.channel.step(usize::MAX)?
            } else {
                match self.ctx.channel.try_step(usize::MAX)? {
                    Some(s) => s,
                    None => return Ok(None),
                }
            };
            match step {
                Step::Data(d) => {
                    t_first.get_or_insert_with(|| self.ctx.shared.now_ns());
                    if single.is_none() && buf.is_empty() {
                        single = Some(d);
                    } else {
                        if let Some(first) = single.take() {
                            let cap = self.ctx.plan.fixed_size_bytes().map_or(0, |b| b.next_multiple_of(4));
                            buf.reserve(cap.max(first.len() + d.len()));
                            buf.extend_from_slice(&first);
                        }
                        buf.extend_from_slice(&d);
                    }
                }
                Step::End(tag) if tag.aborted => {
                    single = None;
                    buf.clear();
                    t_first = None;
                    if !blocking && !self.ctx.channel.has_frame() {
                        return Ok(None);
                    }
                }
                Step::End(tag) => {
                    let t_last = self.ctx.shared.now_ns();
                    let bytes = single.unwrap_or_else(|| Bytes::from(buf));
                    return Ok(Some((bytes, tag, t_first.unwrap_or(t_last), t_last)));
                }
            }
        }
    }

    fn finish_take(&mut self, raw: (Bytes, FrameTag, u64, u64)) -> Result<MessageValue, PortError> {
        let (buf, tag, t_first_recv, t_last_recv) = raw;
        let value = decode_payload(&buf, &self.ctx.plan)?;
        let t_decode_end = self.ctx.shared.now_ns();
        self.record(RecvTiming {
            origin: tag.origin,
            seq: tag.seq,
            t_first_recv,
            t_last_recv,
            t_decode_end,
        });
        Ok(value)
    }

    /// Blocks until a complete message is available and returns the oldest.
    pub fn take_blocking(&mut self) -> Result<MessageValue, PortError> {
        self.skip_partial()?;
        let raw = self.read_frame(true)?.expect("blocking read yields a frame");
        self.finish_take(raw)
    }

    /// Returns the oldest complete message, or `None` if no complete message
    /// is buffered; a frame still arriving is left alone.
    pub fn take_try(&mut self) -> Result<Option<MessageValue>, PortError> {
        if self.ctx.shared.is_shut_down() {
            return Err(PortError::Shutdown);
        }
        if self.skip_rest && !self.ctx.channel.has_frame() {
            return Ok(None);
        }
        self.skip_partial()?;
        if !self.ctx.channel.has_frame() {
            return Ok(None);
        }
        match self.read_frame(false)? {
            Some(raw) => self.finish_take(raw).map(Some),
            None => Ok(None),
        }
    }

    /// Blocking take of the raw frame, without decoding.
    pub fn take_frame_blocking(&mut self) -> Result<Frame, PortError> {
        self.skip_partial()?;
        let (buf, tag, t_first_recv, t_last_recv) = self.read_frame(true)?.expect("blocking read yields a frame");
        self.record(RecvTiming {
            origin: tag.origin,
            seq: tag.seq,
            t_first_recv,
            t_last_recv,
            t_decode_end: t_last_recv,
        });
        Ok(Frame::from_bytes(Vec::from(buf))?)
    }

    /// Starts reading the next frame piecewise, for dataflow kernels.
    pub fn begin_take(&mut self) -> Result<FrameReader<'_>, PortError> {
        self.skip_partial()?;
        Ok(FrameReader {
            subscriber: self,
            t_first: None,
            done: false,
        })
    }
}

/// An open incoming frame. Dropping it early discards the rest of the frame.
pub struct FrameReader<'a> {
    subscriber: &'a mut Subscriber,
    t_first: Option<u64>,
    done: bool,
}

impl FrameReader<'_> {
    /// Appends up to `max_bytes` (at least one word) of the frame to `buf`,
    /// blocking until some data or the end of the frame is available.
    pub fn read(&mut self, buf: &mut Vec<u8>, max_bytes: usize) -> Result<ReadStatus, PortError> {
        match self.read_chunk(max_bytes)? {
            Chunk::Data(d) => {
                buf.extend_from_slice(&d);
                Ok(ReadStatus::Data(d.len()))
            }
            Chunk::End(timing) => Ok(ReadStatus::End(timing)),
        }
    }

    /// Like [`read`](Self::read), but hands over the received bytes without
    /// copying them.
    pub fn read_chunk(&mut self, max_bytes: usize) -> Result<Chunk, PortError> {
        if self.done {
            return Err(PortError::FrameFinished);
        }
        let sub = &mut *self.subscriber;
        match sub.ctx.channel.step(max_bytes)? {
            Step::Data(d) => {
                self.t_first.get_or_insert_with(|| sub.ctx.shared.now_ns());
                Ok(Chunk::Data(d))
            }
            Step::End(tag) => {
                self.done = true;
                if tag.aborted {
                    return Err(PortError::FrameAborted);
                }
                let t_last = sub.ctx.shared.now_ns();
                let timing = RecvTiming {
                    origin: tag.origin,
                    seq: tag.seq,
                    t_first_recv: self.t_first.unwrap_or(t_last),
                    t_last_recv: t_last,
                    t_decode_end: t_last,
                };
                sub.record(timing);
                Ok(Chunk::End(timing))
            }
        }
    }

    /// Reads the rest of the frame into `buf`.
    pub fn read_to_end(&mut self, buf: &mut Vec<u8>) -> Result<RecvTiming, PortError> {
        loop {
            if let ReadStatus::End(t) = self.read(buf, usize::MAX)? {
                return Ok(t);
            }
        }
    }
}

impl Drop for FrameReader<'_> {
    fn drop(&mut self) {
        if !self.done && self.t_first.is_some() {
            self.subscriber.skip_rest = true;
        }
    }
}
