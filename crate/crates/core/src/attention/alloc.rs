//! Heap accounting for memory-scaling checks.
//!
//! Install [`CountingAllocator`] as the global allocator of a binary or test
//! target, then wrap a computation in [`measure`]. Counts are per thread.

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;

pub struct CountingAllocator;

thread_local! {
    static ACTIVE: Cell<bool> = const { Cell::new(false) };
    static LIVE: Cell<isize> = const { Cell::new(0) };
    static PEAK: Cell<isize> = const { Cell::new(0) };
    static LARGEST: Cell<usize> = const { Cell::new(0) };
}

fn record_alloc(size: usize) {
    let _ = ACTIVE.try_with(|active| {
        if !active.get() {
            return;
        }
        LIVE.with(|live| {
            let now = live.get() + size as isize;
            live.set(now);
            PEAK.with(|p| p.set(p.get().max(now)));
        });
        LARGEST.with(|l| l.set(l.get().max(size)));
    });
}

fn record_dealloc(size: usize) {
    let _ = ACTIVE.try_with(|active| {
        if active.get() {
            LIVE.with(|live| live.set(live.get() - size as isize));
        }
    });
}

unsafe impl GlobalAlloc for CountingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        record_alloc(layout.size());
        System.alloc(layout)
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        record_alloc(layout.size());
        System.alloc_zeroed(layout)
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        record_dealloc(layout.size());
        System.dealloc(ptr, layout)
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        record_dealloc(layout.size());
        record_alloc(new_size);
        System.realloc(ptr, layout, new_size)
    }
}

/// Heap usage of one measured closure, in bytes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AllocStats {
    /// Highest live total above the level at entry.
    pub peak_bytes: usize,
    /// Largest single allocation.
    pub largest_bytes: usize,
}

impl AllocStats {
    pub fn peak_words(&self) -> usize {
        self.peak_bytes / std::mem::size_of::<f64>()
    }

    pub fn largest_words(&self) -> usize {
        self.largest_bytes / std::mem::size_of::<f64>()
    }
}

/// Runs `f` with counting enabled on this thread. Without
/// [`CountingAllocator`] installed, the stats are all zero.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, AllocStats) {
    LIVE.with(|c| c.set(0));
    PEAK.with(|c| c.set(0));
    LARGEST.with(|c| c.set(0));
    ACTIVE.with(|a| a.set(true));
    let out = f();
    ACTIVE.with(|a| a.set(false));
    let stats = AllocStats {
        peak_bytes: PEAK.with(Cell::get).max(0) as usize,
        largest_bytes: LARGEST.with(Cell::get),
    };
    (out, stats)
}
