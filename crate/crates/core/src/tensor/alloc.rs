//! Float-element allocation accounting for tensors.
//!
//! Each thread has a *current* counter (a process-wide default unless a
//! scope installs its own). A tensor charges the counter that was current
//! when it was allocated and refunds that same counter on drop, even when
//! dropped on another thread, so concurrently running measurements do not
//! see each other's allocations.

use std::cell::RefCell;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

#[derive(Debug, Default)]
pub struct AllocCounter {
    live: AtomicUsize,
    peak: AtomicUsize,
    largest: AtomicUsize,
    watch_threshold: AtomicUsize,
    watched: AtomicUsize,
}

fn global() -> &'static Arc<AllocCounter> {
    static GLOBAL: OnceLock<Arc<AllocCounter>> = OnceLock::new();
    GLOBAL.get_or_init(|| Arc::new(AllocCounter::default()))
}

thread_local! {
    static CURRENT: RefCell<Arc<AllocCounter>> = RefCell::new(global().clone());
}

impl AllocCounter {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// The counter charged by allocations on this thread.
    pub fn current() -> Arc<Self> {
        CURRENT.with(|c| c.borrow().clone())
    }

    /// Makes `self` the current counter on this thread until the guard drops.
    pub fn install(self: &Arc<Self>) -> CounterScope {
        let prev = CURRENT.with(|c| std::mem::replace(&mut *c.borrow_mut(), self.clone()));
        CounterScope { prev: Some(prev), _not_send: std::marker::PhantomData }
    }

    pub fn live_floats(&self) -> usize {
        self.live.load(Ordering::SeqCst)
    }

    pub fn peak_floats(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    /// Largest single allocation since the last reset.
    pub fn largest_alloc(&self) -> usize {
        self.largest.load(Ordering::SeqCst)
    }

    /// Count allocations of at least `threshold` floats from now on
    /// (0 disables). Does not reset the count.
    pub fn watch_at_least(&self, threshold: usize) {
        self.watch_threshold.store(threshold, Ordering::SeqCst);
    }

    pub fn watched_allocs(&self) -> usize {
        self.watched.load(Ordering::SeqCst)
    }

    /// Peak becomes the live count; largest/watched statistics restart.
    pub fn reset(&self) {
        self.peak.store(self.live_floats(), Ordering::SeqCst);
        self.largest.store(0, Ordering::SeqCst);
        self.watched.store(0, Ordering::SeqCst);
    }

    pub(crate) fn charge(&self, floats: usize) {
        let live = self.live.fetch_add(floats, Ordering::SeqCst) + floats;
        self.peak.fetch_max(live, Ordering::SeqCst);
        self.largest.fetch_max(floats, Ordering::SeqCst);
        let threshold = self.watch_threshold.load(Ordering::SeqCst);
        if threshold > 0 && floats >= threshold {
            self.watched.fetch_add(1, Ordering::SeqCst);
        }
    }

    pub(crate) fn refund(&self, floats: usize) {
        self.live.fetch_sub(floats, Ordering::SeqCst);
    }
}

/// Restores the previously current counter on drop.
pub struct CounterScope {
    prev: Option<Arc<AllocCounter>>,
    _not_send: std::marker::PhantomData<*const ()>,
}

impl Drop for CounterScope {
    fn drop(&mut self) {
        if let Some(prev) = self.prev.take() {
            CURRENT.with(|c| *c.borrow_mut() = prev);
        }
    }
}
