//! Replicate execution.
//!
//! Replicate `i` always draws from its own ChaCha8 stream `i` under the master
//! seed, and results come back in replicate order, so any downstream
//! reduction is bit-identical whatever the worker count. Without the
//! `parallel` feature every policy runs sequentially.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

pub type ReplicateRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Execution {
    workers: usize,
}

impl Default for Execution {
    fn default() -> Self {
        Execution::sequential()
    }
}

impl Execution {
    pub fn sequential() -> Self {
        Execution { workers: 1 }
    }

    /// `workers == 0` means one worker per available core.
    pub fn parallel(workers: usize) -> Self {
        Execution { workers }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && self.workers != 1
    }
}

pub fn replicate_rng(seed: u64, index: u64) -> ReplicateRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `f` once per replicate index and returns the results in index order.
pub fn run_replicates<T, F>(replicates: u64, seed: u64, exec: &Execution, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ReplicateRng, u64) -> Result<T> + Sync + Send,
{
    let job = |i: u64| {
        let mut rng = replicate_rng(seed, i);
        f(&mut rng, i)
    };
    map_indices(replicates, exec, job)
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_indices<T, F>(n: u64, exec: &Execution, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(exec.workers())
            .build()
            .map_err(|e| crate::error::Error::Pool(e.to_string()))?;
        return pool.install(|| (0..n).into_par_iter().map(&f).collect());
    }
    let _ = exec;
    (0..n).map(f).collect()
}
