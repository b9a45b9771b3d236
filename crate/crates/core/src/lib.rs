//! Benchmark harness for spider-robot locomotion controllers.
//!
//! The crate trains two controller families for a fixed 8-hinge quadruped
//! ("spider") morphology and analyses the outcome:
//!
//! - [`cpg`]: networks of paired oscillators with neighbourhood coupling,
//!   trained gradient-free with [`cmaes`];
//! - [`mlp`]: feed-forward networks, trained either with [`cmaes`] (plain
//!   deterministic variant) or with [`ppo`] (actor-critic variant).
//!
//! Controllers drive the reduced-order simulator in [`mod@env`] at 20 Hz for
//! 10 s episodes and are scored by one of three reward functions in
//! [`rewards`]. Post-training analytics (parameter impact, cross-reward
//! performance, sinusoid gait descriptors, PCA diversity projection) live
//! in [`analysis`]. Training runs persist as [`record::RunRecord`] JSON
//! files plus per-generation CSV statistics.

#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod cmaes;
pub mod controller;
pub mod cpg;
pub mod env;
mod error;
pub mod mlp;
pub mod morphology;
pub mod ppo;
pub mod record;
pub mod rewards;
pub mod train;

pub use error::{Error, Result};

/// Joint-space vector: one entry per hinge, leg-major order.
pub type HingeVector = [f64; morphology::HINGE_COUNT];

/// Runs `f` inside a worker pool of the requested size.
///
/// `None` uses the global default (all cores). Results must not depend on
/// the pool size; every consumer in this crate restores candidate order by
/// index after a parallel map.
#[cfg(feature = "parallel")]
pub fn with_worker_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("failed to build worker pool")
            .install(f),
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_worker_pool<T: Send>(_workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    f()
}

/// Maps `items` through `f`, in parallel when the `parallel` feature is on.
/// Output order always matches input order.
pub(crate) fn ordered_map<T: Sync, U: Send>(
    items: &[T],
    f: impl Fn(&T) -> U + Sync + Send,
) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Wall-clock seconds since an arbitrary epoch; zero where no monotonic
/// clock exists (wasm).
pub(crate) fn wall_clock() -> f64 {
    #[cfg(not(target_arch = "wasm32"))]
    {
        use std::time::{SystemTime, UNIX_EPOCH};
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0)
    }
    #[cfg(target_arch = "wasm32")]
    {
        0.0
    }
}
