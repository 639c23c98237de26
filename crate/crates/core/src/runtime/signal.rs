use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering::SeqCst};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

/// Longest single park; bounds how late a missed shutdown can be noticed.
const PARK_SLICE: Duration = Duration::from_millis(5);

/// Wake-up counter owned by one execution context.
///
/// A waiter samples [`Signal::epoch`] before checking its condition and then
/// calls [`Signal::wait`] with that sample; any [`Signal::notify`] in between
/// makes the wait return immediately.
pub(crate) struct Signal {
    epoch: AtomicU64,
    parked: AtomicUsize,
    lock: Mutex<()>,
    cv: Condvar,
}

impl Signal {
    pub(crate) fn new() -> Arc<Self> {
        Arc::new(Signal {
            epoch: AtomicU64::new(0),
            parked: AtomicUsize::new(0),
            lock: Mutex::new(()),
            cv: Condvar::new(),
        })
    }

    pub(crate) fn epoch(&self) -> u64 {
        self.epoch.load(SeqCst)
    }

    pub(crate) fn notify(&self) {
        self.epoch.fetch_add(1, SeqCst);
        if self.parked.load(SeqCst) > 0 {
            let _g = self.lock.lock().unwrap_or_else(|e| e.into_inner());
            self.cv.notify_all();
        }
    }

    /// Yields for up to `poll_budget` rounds, then parks until notified or
    /// shut down.
    pub(crate) fn wait(&self, seen: u64, shared: &Shared) {
        for _ in 0..shared.poll_budget {
            if self.epoch.load(SeqCst) != seen || shared.is_shut_down() {
                return;
            }
            thread::yield_now();
        }
        self.parked.fetch_add(1, SeqCst);
        let mut g = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        while self.epoch.load(SeqCst) == seen && !shared.is_shut_down() {
            g = self
                .cv
                .wait_timeout(g, PARK_SLICE)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
        drop(g);
        self.parked.fetch_sub(1, SeqCst);
    }
}

/// State common to every context of one runtime instance.
pub(crate) struct Shared {
    shutdown: AtomicBool,
    signals: Mutex<Vec<Arc<Signal>>>,
    pub(crate) poll_budget: u32,
    epoch: Instant,
}

impl Shared {
    pub(crate) fn new(poll_budget: u32) -> Arc<Self> {
        Arc::new(Shared {
            shutdown: AtomicBool::new(false),
            signals: Mutex::new(Vec::new()),
            poll_budget,
            epoch: Instant::now(),
        })
    }

    pub(crate) fn signal(&self) -> Arc<Signal> {
        let s = Signal::new();
        self.signals
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(Arc::clone(&s));
        s
    }

    pub(crate) fn is_shut_down(&self) -> bool {
        self.shutdown.load(SeqCst)
    }

    pub(crate) fn shut_down(&self) {
        self.shutdown.store(true, SeqCst);
        for s in self.signals.lock().unwrap_or_else(|e| e.into_inner()).iter() {
            s.notify();
        }
    }

    /// Monotonic nanoseconds since the instance was created.
    pub(crate) fn now_ns(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn notify_before_wait_returns_immediately() {
        let shared = Shared::new(0);
        let s = shared.signal();
        let seen = s.epoch();
        s.notify();
        let t = Instant::now();
        s.wait(seen, &shared);
        assert!(t.elapsed() < PARK_SLICE);
    }

    #[test]
    fn parked_waiter_is_woken() {
        let shared = Shared::new(0);
        let s = shared.signal();
        let seen = s.epoch();
        let s2 = Arc::clone(&s);
        let h = thread::spawn(move || {
            thread::sleep(Duration::from_millis(20));
            s2.notify();
        });
        s.wait(seen, &shared);
        assert_ne!(s.epoch(), seen);
        h.join().unwrap();
    }

    #[test]
    fn shutdown_releases_waiters() {
        let shared = Shared::new(10);
        let s = shared.signal();
        let seen = s.epoch();
        let sh = Arc::clone(&shared);
        let h = thread::spawn(move || {
            thread::sleep(Duration::from_millis(20));
            sh.shut_down();
        });
        s.wait(seen, &shared);
        assert!(shared.is_shut_down());
        h.join().unwrap();
    }
}
