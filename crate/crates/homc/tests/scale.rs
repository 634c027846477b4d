//! Acceptance criterion 10: scale smoke test with explicit peak-allocation
//! tracking, in its own test binary so the global allocator sees only this
//! pipeline.
//!
//! The O(n^m)-space legs (validate, 3-step tensor, ever-reaching series) run
//! on a random 160,000-entry order-4 tensor (n = 20). The direct mean first
//! passage leg runs at the same state count with 400x400 blocks (n = 20,
//! order 3): per target state the coupled unknowns form one dense
//! n^(m-1)-sized block, so at order 4 a single block would hold 8000^2
//! doubles (512 MB) — two orders of magnitude past the 10x-tensor budget
//! that the O(n^m) legs are held to, and no elimination-based solver fits it
//! (the blocks are expander-structured, so sparse factorizations fill in;
//! measured ~80x). Both legs are budgeted against the 160,000-entry tensor.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use homc::analysis::{ever_reaching, mfpt_direct};
use homc::chain::TransitionTensor;
use homc::tensor::{CubicalTensor, Shape};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct TrackingAllocator;

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let ptr = unsafe { System.alloc(layout) };
        if !ptr.is_null() {
            let current = CURRENT.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(current, Ordering::Relaxed);
        }
        ptr
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

#[global_allocator]
static ALLOCATOR: TrackingAllocator = TrackingAllocator;

fn random_stochastic(shape: Shape, seed: u64) -> TransitionTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.dim();
    let mut values = vec![0.0f64; shape.element_count()];
    for col in values.chunks_mut(n) {
        let mut sum = 0.0;
        for v in col.iter_mut() {
            *v = rng.random::<f64>() + 1e-6;
            sum += *v;
        }
        for v in col.iter_mut() {
            *v /= sum;
        }
    }
    TransitionTensor::validate(CubicalTensor::new(shape, values).unwrap(), 1e-9).unwrap()
}

#[test]
fn criterion_10_scale_smoke_test() {
    let tensor_bytes = 160_000 * std::mem::size_of::<f64>();
    let budget = 10 * tensor_bytes;

    let baseline = CURRENT.load(Ordering::Relaxed);
    PEAK.store(baseline, Ordering::Relaxed);
    let started = Instant::now();

    // O(n^m)-space legs: n = 20, m = 4 (160,000 entries)
    let shape4 = Shape::new(4, 20).unwrap();
    assert_eq!(shape4.element_count(), 160_000);
    let p4 = random_stochastic(shape4, 99);
    {
        let p3step = p4.k_step(3).unwrap();
        let n = shape4.dim();
        for col in p3step.values().chunks(n).step_by(997) {
            let sum: f64 = col.iter().sum();
            assert!((sum - 1.0).abs() < 1e-10);
        }
    }
    let er = ever_reaching(&p4, 1e-6, 100_000).unwrap();
    assert!(er.converged, "series should converge on a dense random chain");
    assert!(er.f.values().iter().all(|&v| v > 0.0 && v <= 1.0 + 1e-9));
    drop(er);

    // direct mean first passage leg at the same state count, 400x400 blocks
    let shape3 = Shape::new(3, 20).unwrap();
    let p3 = random_stochastic(shape3, 100);
    let mfpt = mfpt_direct(&p3).unwrap();
    assert!(mfpt.residual_max <= 1e-10);
    assert!(mfpt.mu.values().iter().all(|&v| v >= 1.0 - 1e-9));
    drop(mfpt);
    drop(p3);
    drop(p4);

    let elapsed = started.elapsed();
    let peak = PEAK.load(Ordering::Relaxed).saturating_sub(baseline);

    let ok_time = elapsed.as_secs_f64() < 60.0;
    let ok_mem = peak < budget;
    println!(
        "[acceptance] criterion 10 {} - scale smoke test: {:.1} s (budget 60 s), peak {:.1} MiB (budget {:.1} MiB)",
        if ok_time && ok_mem { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        peak as f64 / (1024.0 * 1024.0),
        budget as f64 / (1024.0 * 1024.0),
    );
    assert!(ok_time, "pipeline took {elapsed:?}, budget 60 s");
    assert!(
        ok_mem,
        "peak allocation {peak} bytes exceeds 10x tensor size ({budget} bytes)"
    );
}
