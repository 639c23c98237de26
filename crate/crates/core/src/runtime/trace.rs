use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use serde::Serialize;

/// Publisher-side timestamps of one frame, in nanoseconds of the instance
/// clock. `t_encode_start` equals `t_first_sent` for raw frame writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SendTiming {
    pub origin: u32,
    pub seq: u64,
    pub t_encode_start: u64,
    pub t_first_sent: u64,
    pub t_last_sent: u64,
}

/// Subscriber-side timestamps of one frame. `t_decode_end` equals
/// `t_last_recv` for raw frame reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RecvTiming {
    pub origin: u32,
    pub seq: u64,
    pub t_first_recv: u64,
    pub t_last_recv: u64,
    pub t_decode_end: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SendRecord {
    pub topic: Arc<str>,
    pub publisher: Arc<str>,
    pub timing: SendTiming,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecvRecord {
    pub topic: Arc<str>,
    pub subscriber: Arc<str>,
    pub timing: RecvTiming,
}

/// Per-frame event log shared by all ports of an instance.
#[derive(Debug, Default)]
pub(crate) struct Trace {
    sends: Mutex<Vec<SendRecord>>,
    recvs: Mutex<Vec<RecvRecord>>,
}

impl Trace {
    pub(crate) fn record_send(&self, r: SendRecord) {
        self.sends.lock().unwrap_or_else(|e| e.into_inner()).push(r);
    }

    pub(crate) fn record_recv(&self, r: RecvRecord) {
        self.recvs.lock().unwrap_or_else(|e| e.into_inner()).push(r);
    }

    pub(crate) fn sends(&self) -> Vec<SendRecord> {
        self.sends.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub(crate) fn recvs(&self) -> Vec<RecvRecord> {
        self.recvs.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

/// One CSV row per published frame; receive columns take the earliest first
/// word and the latest last word over all subscribers, and are empty if no
/// subscriber took the frame.
pub fn trace_csv(sends: &[SendRecord], recvs: &[RecvRecord]) -> String {
    let mut recv_span: BTreeMap<(&str, u32, u64), (u64, u64)> = BTreeMap::new();
    for r in recvs {
        let t = &r.timing;
        recv_span
            .entry((&r.topic, t.origin, t.seq))
            .and_modify(|(first, last)| {
                *first = (*first).min(t.t_first_recv);
                *last = (*last).max(t.t_last_recv);
            })
            .or_insert((t.t_first_recv, t.t_last_recv));
    }
    let mut rows: Vec<&SendRecord> = sends.iter().collect();
    rows.sort_by_key(|s| (s.timing.t_first_sent, s.timing.origin, s.timing.seq));

    let mut out = String::from("topic,publisher,frame_seq,t_first_sent,t_last_sent,t_first_recv,t_last_recv\n");
    for s in rows {
        let t = &s.timing;
        let (first, last) = match recv_span.get(&(&*s.topic, t.origin, t.seq)) {
            Some((f, l)) => (f.to_string(), l.to_string()),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{first},{last}",
            s.topic, s.publisher, t.seq, t.t_first_sent, t.t_last_sent
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_aggregates_subscribers() {
        let send = |seq, t| SendRecord {
            topic: "A".into(),
            publisher: "n1".into(),
            timing: SendTiming {
                origin: 0,
                seq,
                t_encode_start: t,
                t_first_sent: t,
                t_last_sent: t + 1,
            },
        };
        let recv = |sub: &str, seq, a, b| RecvRecord {
            topic: "A".into(),
            subscriber: sub.into(),
            timing: RecvTiming {
                origin: 0,
                seq,
                t_first_recv: a,
                t_last_recv: b,
                t_decode_end: b,
            },
        };
        let csv = trace_csv(
            &[send(1, 20), send(0, 10)],
            &[recv("x", 0, 12, 15), recv("y", 0, 11, 18)],
        );
        assert_eq!(
            csv,
            "topic,publisher,frame_seq,t_first_sent,t_last_sent,t_first_recv,t_last_recv\n\
             A,n1,0,10,11,11,18\n\
             A,n1,1,20,21,,\n"
        );
    }
}
