use std::collections::VecDeque;
use std::sync::{Arc, Mutex, MutexGuard};

use bytes::Bytes;

use super::signal::{Shared, Signal};
use super::PortError;

/// Identity carried by an end-of-frame marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameTag {
    /// Publisher index within its topic.
    pub origin: u32,
    pub seq: u64,
    /// Set when the producer gave up mid-frame; such frames are discarded.
    pub aborted: bool,
}

#[derive(Debug, Clone, Copy)]
struct Boundary {
    /// Absolute stream offset just past the frame's last byte.
    end: u64,
    tag: FrameTag,
}

/// What a consumer gets from one step.
#[derive(Debug)]
pub(crate) enum Step {
    Data(Bytes),
    End(FrameTag),
}

/// Buffered words plus the producer's not-yet-accepted remainder.
///
/// Bytes that do not fit into the buffer stay with the producer as an
/// offer; the producer blocks until the consumer has drained it, so an
/// unbuffered link behaves as a rendezvous and the consumer reads straight
/// from the producer's frame.
struct State {
    buffered: VecDeque<Bytes>,
    buffered_bytes: usize,
    offer: Option<Bytes>,
    bounds: VecDeque<Boundary>,
    produced: u64,
    consumed: u64,
    high_water: usize,
}

pub(crate) struct Channel {
    state: Mutex<State>,
    capacity_bytes: usize,
    frame_capacity: usize,
    producer: Arc<Signal>,
    consumer: Arc<Signal>,
    shared: Arc<Shared>,
    pub(crate) label: String,
}

/// Snapshot of a channel's buffer use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelStats {
    pub label: String,
    pub capacity_words: usize,
    pub buffered_words: usize,
    pub high_water_words: usize,
}

impl Channel {
    pub(crate) fn new(
        label: String,
        capacity_words: usize,
        frame_capacity: usize,
        producer: Arc<Signal>,
        consumer: Arc<Signal>,
        shared: Arc<Shared>,
    ) -> Arc<Self> {
        Arc::new(Channel {
            state: Mutex::new(State {
                buffered: VecDeque::new(),
                buffered_bytes: 0,
                offer: None,
                bounds: VecDeque::new(),
                produced: 0,
                consumed: 0,
                high_water: 0,
            }),
            capacity_bytes: capacity_words * 4,
            frame_capacity: frame_capacity.max(1),
            producer,
            consumer,
            shared,
            label,
        })
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub(crate) fn stats(&self) -> ChannelStats {
        let st = self.lock();
        ChannelStats {
            label: self.label.clone(),
            capacity_words: self.capacity_bytes / 4,
            buffered_words: st.buffered_bytes / 4,
            high_water_words: st.high_water / 4,
        }
    }

    fn free(&self, st: &State) -> usize {
        self.capacity_bytes.saturating_sub(st.buffered_bytes)
    }

    fn push_buffered(st: &mut State, data: Bytes) {
        st.buffered_bytes += data.len();
        st.high_water = st.high_water.max(st.buffered_bytes);
        st.buffered.push_back(data);
    }

    fn accept(&self, st: &mut State, mut data: Bytes, end: Option<FrameTag>) {
        st.produced += data.len() as u64;
        let n = self.free(st).min(data.len());
        if n > 0 {
            Self::push_buffered(st, data.split_to(n));
        }
        if !data.is_empty() {
            st.offer = Some(data);
        }
        if let Some(tag) = end {
            st.bounds.push_back(Boundary { end: st.produced, tag });
        }
    }

    /// Writes `data` (and, with `end`, the frame marker), blocking until
    /// every byte is buffered or taken by the consumer.
    pub(crate) fn write(&self, data: Bytes, end: Option<FrameTag>) -> Result<(), PortError> {
        let mut data = Some(data);
        loop {
            let seen = self.producer.epoch();
            {
                let mut st = self.lock();
                if self.shared.is_shut_down() {
                    return Err(PortError::Shutdown);
                }
                if st.offer.is_none() && (end.is_none() || st.bounds.len() < self.frame_capacity) {
                    self.accept(&mut st, data.take().expect("data accepted once"), end);
                    drop(st);
                    self.consumer.notify();
                    break;
                }
            }
            self.producer.wait(seen, &self.shared);
        }
        self.wait_drained()
    }

    fn wait_drained(&self) -> Result<(), PortError> {
        loop {
            let seen = self.producer.epoch();
            {
                let st = self.lock();
                if st.offer.is_none() {
                    return Ok(());
                }
                if self.shared.is_shut_down() {
                    return Err(PortError::Shutdown);
                }
            }
            self.producer.wait(seen, &self.shared);
        }
    }

    /// All-or-nothing: enqueues the whole frame only if it fits the buffer.
    pub(crate) fn try_write_frame(&self, data: Bytes, tag: FrameTag) -> Result<bool, PortError> {
        let mut st = self.lock();
        if self.shared.is_shut_down() {
            return Err(PortError::Shutdown);
        }
        if st.offer.is_some() || st.bounds.len() >= self.frame_capacity || self.free(&st) < data.len() {
            return Ok(false);
        }
        self.accept(&mut st, data, Some(tag));
        drop(st);
        self.consumer.notify();
        Ok(true)
    }

    /// Marks the current frame aborted without blocking; used when a writer
    /// is dropped mid-frame.
    pub(crate) fn abort_frame(&self, tag: FrameTag) {
        let mut st = self.lock();
        st.offer = None;
        let end = st.consumed + st.buffered_bytes as u64;
        st.produced = end;
        st.bounds.push_back(Boundary {
            end,
            tag: FrameTag { aborted: true, ..tag },
        });
        drop(st);
        self.consumer.notify();
    }

    /// True if the output could take a chunk of `len` bytes right now without
    /// parking it behind data that is already waiting.
    pub(crate) fn ready_for(&self, len: usize, eof: bool) -> bool {
        let st = self.lock();
        st.offer.is_none()
            && (st.buffered_bytes == 0 || self.free(&st) >= len)
            && (!eof || st.bounds.len() < self.frame_capacity)
    }

    /// Hands a chunk to the channel without waiting for it to drain.
    /// Callers must have checked [`Channel::ready_for`].
    pub(crate) fn put(&self, data: Bytes, end: Option<FrameTag>) {
        let mut st = self.lock();
        self.accept(&mut st, data, end);
        drop(st);
        self.consumer.notify();
    }

    pub(crate) fn drained(&self) -> bool {
        self.lock().offer.is_none()
    }

    /// Anything for the consumer: data or a frame marker.
    pub(crate) fn has_pending(&self) -> bool {
        let st = self.lock();
        st.buffered_bytes > 0 || st.offer.is_some() || !st.bounds.is_empty()
    }

    /// A complete frame is available.
    pub(crate) fn has_frame(&self) -> bool {
        !self.lock().bounds.is_empty()
    }

    /// Size of the next chunk a consumer step would return and whether the
    /// frame ends right after it; `None` if nothing is pending.
    pub(crate) fn peek(&self) -> Option<(usize, bool)> {
        let st = self.lock();
        let to_end = st.bounds.front().map(|b| (b.end - st.consumed) as usize);
        if to_end == Some(0) {
            return Some((0, true));
        }
        let next = st
            .buffered
            .front()
            .map(Bytes::len)
            .or_else(|| st.offer.as_ref().map(Bytes::len))?;
        match to_end {
            Some(rest) if rest <= next => Some((rest, true)),
            _ => Some((next, false)),
        }
    }

    /// Pops the frame marker if the consumer stands right at it.
    pub(crate) fn try_end(&self) -> Option<FrameTag> {
        let mut st = self.lock();
        let b = st.bounds.front().copied().filter(|b| b.end == st.consumed)?;
        st.bounds.pop_front();
        drop(st);
        self.producer.notify();
        Some(b.tag)
    }

    fn poll_step(&self, st: &mut State, max: usize) -> Option<Step> {
        if let Some(b) = st.bounds.front() {
            if b.end == st.consumed {
                let tag = b.tag;
                st.bounds.pop_front();
                return Some(Step::End(tag));
            }
        }
        let limit = st
            .bounds
            .front()
            .map_or(usize::MAX, |b| (b.end - st.consumed) as usize)
            .min(max.max(4));
        let chunk = if let Some(front) = st.buffered.front_mut() {
            let n = limit.min(front.len());
            let c = front.split_to(n);
            if front.is_empty() {
                st.buffered.pop_front();
            }
            st.buffered_bytes -= n;
            c
        } else if let Some(offer) = st.offer.as_mut() {
            let n = limit.min(offer.len());
            let c = offer.split_to(n);
            if offer.is_empty() {
                st.offer = None;
            }
            c
        } else {
            return None;
        };
        st.consumed += chunk.len() as u64;
        // Let a blocked producer finish once its remainder fits.
        if let Some(offer) = st.offer.take() {
            if self.free(st) >= offer.len() {
                Self::push_buffered(st, offer);
            } else {
                st.offer = Some(offer);
            }
        }
        Some(Step::Data(chunk))
    }

    pub(crate) fn try_step(&self, max: usize) -> Result<Option<Step>, PortError> {
        let mut st = self.lock();
        if self.shared.is_shut_down() {
            return Err(PortError::Shutdown);
        }
        let step = self.poll_step(&mut st, max);
        drop(st);
        if step.is_some() {
            self.producer.notify();
        }
        Ok(step)
    }

    /// Blocks until data or a frame marker is available. Data never crosses
    /// a frame boundary and is at most `max` bytes (rounded up to a word).
    pub(crate) fn step(&self, max: usize) -> Result<Step, PortError> {
        loop {
            let seen = self.consumer.epoch();
            if let Some(step) = self.try_step(max)? {
                return Ok(step);
            }
            self.consumer.wait(seen, &self.shared);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    fn tag(seq: u64) -> FrameTag {
        FrameTag {
            origin: 0,
            seq,
            aborted: false,
        }
    }

    fn chan(words: usize, frames: usize) -> Arc<Channel> {
        let shared = Shared::new(100);
        Channel::new("t".into(), words, frames, shared.signal(), shared.signal(), shared)
    }

    fn read_frame(c: &Channel) -> (Vec<u8>, FrameTag) {
        let mut out = Vec::new();
        loop {
            match c.step(usize::MAX).unwrap() {
                Step::Data(d) => out.extend_from_slice(&d),
                Step::End(t) => return (out, t),
            }
        }
    }

    #[test]
    fn buffered_frames_fit_without_consumer() {
        let c = chan(4, 2);
        assert!(c.try_write_frame(Bytes::from(vec![1u8; 8]), tag(0)).unwrap());
        assert!(c.try_write_frame(Bytes::from(vec![2u8; 8]), tag(1)).unwrap());
        assert!(!c.try_write_frame(Bytes::from(vec![3u8; 4]), tag(2)).unwrap());
        assert_eq!(c.stats().buffered_words, 4);
        assert_eq!(read_frame(&c), (vec![1u8; 8], tag(0)));
        assert_eq!(read_frame(&c), (vec![2u8; 8], tag(1)));
    }

    #[test]
    fn half_capacity_rejects_whole_frame() {
        let c = chan(2, 4);
        assert!(!c.try_write_frame(Bytes::from(vec![0u8; 16]), tag(0)).unwrap());
        assert_eq!(c.stats().buffered_words, 0);
        assert!(!c.has_pending());
    }

    #[test]
    fn rendezvous_link_moves_large_frames() {
        let c = chan(1, 1);
        let c2 = Arc::clone(&c);
        let data: Vec<u8> = (0..4000u32).map(|i| i as u8).collect();
        let expect = data.clone();
        let h = thread::spawn(move || {
            for s in 0..5 {
                c2.write(Bytes::from(data.clone()), Some(tag(s))).unwrap();
            }
        });
        for s in 0..5 {
            assert_eq!(read_frame(&c), (expect.clone(), tag(s)));
        }
        h.join().unwrap();
        assert!(c.stats().high_water_words <= 1);
    }

    #[test]
    fn aborted_frame_marker() {
        let c = chan(8, 2);
        c.write(Bytes::from(vec![1u8; 8]), None).unwrap();
        c.abort_frame(tag(0));
        let (data, t) = read_frame(&c);
        assert_eq!(data.len(), 8);
        assert!(t.aborted);
    }

    #[test]
    fn shutdown_fails_writer() {
        let c = chan(1, 1);
        let c2 = Arc::clone(&c);
        let h = thread::spawn(move || c2.write(Bytes::from(vec![0u8; 64]), Some(tag(0))));
        thread::sleep(std::time::Duration::from_millis(20));
        c.shared.shut_down();
        assert!(matches!(h.join().unwrap(), Err(PortError::Shutdown)));
    }
}
