use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use crate::codec::{deserialize, serialize, Frame, MessageValue};
use crate::msgdef::SerializationPlan;
use crate::runtime::{PortError, RecvTiming, SendTiming};

use super::now_ns;

/// A conventional shared-memory DDS stand-in for one topic.
///
/// A publisher serializes and copies the frame into a shared pool; every
/// reader copies it back out and deserializes. Readers block on a condition
/// variable. Each payload therefore moves twice between publisher and
/// subscriber.
pub struct BaselineDds {
    plan: Arc<SerializationPlan>,
    readers: usize,
    history: usize,
    pool: Mutex<Pool>,
    cv: Condvar,
}

struct Pool {
    entries: VecDeque<Entry>,
    /// Retired sample buffers, reused by later publishes.
    free: Vec<Vec<u8>>,
    next_seq: u64,
    attached: usize,
    shutdown: bool,
}

struct Entry {
    seq: u64,
    data: Vec<u8>,
    remaining: usize,
}

impl BaselineDds {
    /// `readers` is the number of readers every sample waits for; at most
    /// `history` samples are held before publishers block.
    pub fn new(plan: SerializationPlan, readers: usize, history: usize) -> Arc<Self> {
        Arc::new(BaselineDds {
            plan: Arc::new(plan),
            readers,
            history: history.max(1),
            pool: Mutex::new(Pool {
                entries: VecDeque::new(),
                free: Vec::new(),
                next_seq: 0,
                attached: 0,
                shutdown: false,
            }),
            cv: Condvar::new(),
        })
    }

    pub fn writer(self: &Arc<Self>) -> BaselineWriter {
        BaselineWriter { dds: Arc::clone(self) }
    }

    /// Attaches the next reader. Panics if more than `readers` are attached.
    pub fn reader(self: &Arc<Self>) -> BaselineReader {
        let mut pool = self.lock();
        assert!(pool.attached < self.readers, "all {} readers already attached", self.readers);
        pool.attached += 1;
        BaselineReader {
            dds: Arc::clone(self),
            next: pool.next_seq,
        }
    }

    pub fn shutdown(&self) {
        self.lock().shutdown = true;
        self.cv.notify_all();
    }

    fn lock(&self) -> MutexGuard<'_, Pool> {
        self.pool.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct BaselineWriter {
    dds: Arc<BaselineDds>,
}

impl BaselineWriter {
    pub fn publish(&mut self, value: &MessageValue) -> Result<SendTiming, PortError> {
        let t_encode_start = now_ns();
        let frame = serialize(value, &self.dds.plan)?;
        let t_first_sent = now_ns();
        let dds = &*self.dds;
        let mut pool = dds.lock();
        while !pool.shutdown && pool.entries.len() >= dds.history {
            pool = dds.cv.wait(pool).unwrap_or_else(|e| e.into_inner());
        }
        if pool.shutdown {
            return Err(PortError::Shutdown);
        }
        let seq = pool.next_seq;
        pool.next_seq += 1;
        let mut data = pool.free.pop().unwrap_or_default();
        data.clear();
        data.extend_from_slice(frame.as_bytes());
        pool.entries.push_back(Entry {
            seq,
            data,
            remaining: dds.readers,
        });
        drop(pool);
        dds.cv.notify_all();
        Ok(SendTiming {
            origin: 0,
            seq,
            t_encode_start,
            t_first_sent,
            t_last_sent: now_ns(),
        })
    }
}

pub struct BaselineReader {
    dds: Arc<BaselineDds>,
    next: u64,
}

impl BaselineReader {
    pub fn take(&mut self) -> Result<(MessageValue, RecvTiming), PortError> {
        let dds = &*self.dds;
        let mut data = Vec::with_capacity(dds.plan.fixed_size_bytes().map_or(0, |b| b.next_multiple_of(4)));
        let mut pool = dds.lock();
        let idx = loop {
            if pool.shutdown {
                return Err(PortError::Shutdown);
            }
            if let Some(i) = pool.entries.iter().position(|e| e.seq == self.next) {
                break i;
            }
            pool = dds.cv.wait(pool).unwrap_or_else(|e| e.into_inner());
        };
        let t_first_recv = now_ns();
        let entry = &mut pool.entries[idx];
        data.extend_from_slice(&entry.data);
        entry.remaining -= 1;
        let seq = entry.seq;
        let mut freed = false;
        while pool.entries.front().is_some_and(|e| e.remaining == 0) {
            let retired = pool.entries.pop_front().expect("front exists").data;
            pool.free.push(retired);
            freed = true;
        }
        drop(pool);
        if freed {
            dds.cv.notify_all();
        }
        let t_last_recv = now_ns();
        self.next += 1;
        let value = deserialize(&Frame::from_bytes(data)?, &dds.plan)?;
        Ok((
            value,
            RecvTiming {
                origin: 0,
                seq,
                t_first_recv,
                t_last_recv,
                t_decode_end: now_ns(),
            },
        ))
    }
}
