use std::sync::Arc;

use super::channel::{Channel, FrameTag, Step};
use super::signal::{Shared, Signal};
use super::PortError;

/// Waits on `signal` until `cond` holds; fails on shutdown.
fn wait_until(signal: &Signal, shared: &Shared, mut cond: impl FnMut() -> bool) -> Result<(), PortError> {
    loop {
        let seen = signal.epoch();
        if shared.is_shut_down() {
            return Err(PortError::Shutdown);
        }
        if cond() {
            return Ok(());
        }
        signal.wait(seen, shared);
    }
}

/// Moves the next chunk of `input` to every output once all of them can
/// take it, then waits until each has drained it. Returns the frame tag if
/// the chunk closed a frame.
fn forward_chunk(input: &Channel, outputs: &[Arc<Channel>], signal: &Signal, shared: &Shared) -> Result<Option<FrameTag>, PortError> {
    let mut next = None;
    wait_until(signal, shared, || {
        next = input.peek();
        next.is_some()
    })?;
    let (len, eof) = next.expect("peeked");
    wait_until(signal, shared, || outputs.iter().all(|o| o.ready_for(len, eof)))?;

    let (data, end) = match input.try_step(usize::MAX)? {
        Some(Step::Data(d)) => {
            let end = input.try_end();
            (d, end)
        }
        Some(Step::End(tag)) => (bytes::Bytes::new(), Some(tag)),
        None => return Ok(None),
    };
    for o in outputs {
        o.put(data.clone(), end);
    }
    wait_until(signal, shared, || outputs.iter().all(|o| o.drained()))?;
    Ok(end)
}

/// Merges frames from `inputs` into `output`, one whole frame at a time.
///
/// Inputs with pending data are served round-robin starting after the last
/// served one; once a frame starts, its input is served until the frame's
/// end marker.
pub(crate) fn run_arbiter(inputs: &[Arc<Channel>], output: &Arc<Channel>, signal: &Signal, shared: &Shared) {
    let n = inputs.len();
    let mut last = n.saturating_sub(1);
    let outputs = std::slice::from_ref(output);
    loop {
        let mut pick = None;
        let ready = wait_until(signal, shared, || {
            pick = (1..=n).map(|k| (last + k) % n).find(|&i| inputs[i].has_pending());
            pick.is_some()
        });
        if ready.is_err() {
            return;
        }
        let i = pick.expect("picked");
        last = i;
        loop {
            match forward_chunk(&inputs[i], outputs, signal, shared) {
                Ok(Some(_)) => break,
                Ok(None) => {}
                Err(_) => return,
            }
        }
    }
}

/// Copies every frame of `input` to all `outputs`, advancing only when the
/// slowest output can accept the next chunk.
pub(crate) fn run_broadcaster(input: &Arc<Channel>, outputs: &[Arc<Channel>], signal: &Signal, shared: &Shared) {
    while forward_chunk(input, outputs, signal, shared).is_ok() {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use bytes::Bytes;
    use std::thread;

    fn tag(origin: u32, seq: u64) -> FrameTag {
        FrameTag {
            origin,
            seq,
            aborted: false,
        }
    }

    fn read_frame(c: &Channel) -> Result<(Vec<u8>, FrameTag), PortError> {
        let mut out = Vec::new();
        loop {
            match c.step(usize::MAX)? {
                Step::Data(d) => out.extend_from_slice(&d),
                Step::End(t) => return Ok((out, t)),
            }
        }
    }

    #[test]
    fn arbiter_alternates_between_permanently_ready_inputs() {
        const PER_INPUT: u64 = 5_000;
        let shared = Shared::new(50);
        let infra = shared.signal();
        let sink = shared.signal();
        let inputs: Vec<_> = (0..2)
            .map(|_| Channel::new("in".into(), 4 * PER_INPUT as usize, PER_INPUT as usize, shared.signal(), Arc::clone(&infra), Arc::clone(&shared)))
            .collect();
        for (o, c) in inputs.iter().enumerate() {
            for s in 0..PER_INPUT {
                assert!(c.try_write_frame(Bytes::from(vec![o as u8; 4]), tag(o as u32, s)).unwrap());
            }
        }
        let output = Channel::new("out".into(), 1, 1, Arc::clone(&infra), Arc::clone(&sink), Arc::clone(&shared));
        let h = {
            let (inputs, output, shared) = (inputs.clone(), Arc::clone(&output), Arc::clone(&shared));
            thread::spawn(move || run_arbiter(&inputs, &output, &infra, &shared))
        };
        let mut counts = [0i64; 2];
        for _ in 0..2 * PER_INPUT {
            let (data, t) = read_frame(&output).unwrap();
            assert_eq!(data, vec![t.origin as u8; 4]);
            counts[t.origin as usize] += 1;
            assert!((counts[0] - counts[1]).abs() <= 1, "{counts:?}");
        }
        shared.shut_down();
        h.join().unwrap();
    }

    #[test]
    fn broadcaster_waits_for_slowest_output() {
        let shared = Shared::new(50);
        let infra = shared.signal();
        let input = Channel::new("in".into(), 16, 4, shared.signal(), Arc::clone(&infra), Arc::clone(&shared));
        // Output 0 holds one 4-word frame, output 1 is unbuffered.
        let slow = Channel::new("s1".into(), 4, 1, Arc::clone(&infra), shared.signal(), Arc::clone(&shared));
        let fast = Channel::new("s2".into(), 1, 1, Arc::clone(&infra), shared.signal(), Arc::clone(&shared));
        for s in 0..3 {
            assert!(input.try_write_frame(Bytes::from(vec![s as u8; 16]), tag(0, s)).unwrap());
        }
        let h = {
            let (input, outs, shared) = (Arc::clone(&input), vec![Arc::clone(&slow), Arc::clone(&fast)], Arc::clone(&shared));
            thread::spawn(move || run_broadcaster(&input, &outs, &infra, &shared))
        };
        assert_eq!(read_frame(&fast).unwrap().1.seq, 0);
        // The slow side is full with frame 0, so frame 1 must not reach the fast side.
        thread::sleep(std::time::Duration::from_millis(50));
        assert!(!fast.has_pending());
        assert_eq!(read_frame(&slow).unwrap().1.seq, 0);
        assert_eq!(read_frame(&fast).unwrap().1.seq, 1);
        assert_eq!(read_frame(&slow).unwrap().1.seq, 1);
        assert_eq!(read_frame(&fast).unwrap().1.seq, 2);
        assert_eq!(read_frame(&slow).unwrap().1.seq, 2);
        shared.shut_down();
        h.join().unwrap();
    }
}
