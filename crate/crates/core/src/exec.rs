//! Phase executors: sequential, thread-pool parallel, and a seeded shuffling
//! executor that runs items in a random order on one thread.

use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    #[default]
    Sequential,
    Parallel,
}

#[derive(Clone)]
enum Kind {
    Sequential,
    Parallel(Arc<rayon::ThreadPool>),
    Shuffled(Arc<Mutex<ChaCha8Rng>>),
}

/// Runs the data-parallel phases. Results always come back in item order;
/// only the order of side effects differs between executors.
#[derive(Clone)]
pub struct Executor {
    kind: Kind,
    threads: usize,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self.kind {
            Kind::Sequential => "sequential",
            Kind::Parallel(_) => "parallel",
            Kind::Shuffled(_) => "shuffled",
        };
        f.debug_struct("Executor").field("kind", &name).field("threads", &self.threads).finish()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Executor::sequential()
    }
}

const PAR_MIN_LEN: usize = 256;

impl Executor {
    pub fn sequential() -> Self {
        Executor { kind: Kind::Sequential, threads: 1 }
    }

    pub fn parallel(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let threads = threads.max(1);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Executor { kind: Kind::Parallel(Arc::new(pool)), threads })
    }

    /// Single-threaded, but every phase visits its items in a fresh random
    /// order drawn from `seed`.
    pub fn shuffled(seed: u64) -> Self {
        Executor { kind: Kind::Shuffled(Arc::new(Mutex::new(ChaCha8Rng::seed_from_u64(seed)))), threads: 1 }
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn is_parallel(&self) -> bool {
        matches!(self.kind, Kind::Parallel(_))
    }

    fn permutation(&self, n: usize) -> Option<Vec<usize>> {
        match &self.kind {
            Kind::Shuffled(rng) => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut *rng.lock().unwrap());
                Some(order)
            }
            _ => None,
        }
    }

    /// `f(i)` for `i in 0..n`, results in index order.
    pub fn map<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match &self.kind {
            Kind::Sequential => (0..n).map(f).collect(),
            Kind::Parallel(pool) => pool.install(|| (0..n).into_par_iter().with_min_len(PAR_MIN_LEN).map(f).collect()),
            Kind::Shuffled(_) => {
                let order = self.permutation(n).unwrap();
                let mut out: Vec<Option<R>> = (0..n).map(|_| None).collect();
                for i in order {
                    out[i] = Some(f(i));
                }
                out.into_iter().map(Option::unwrap).collect()
            }
        }
    }

    pub fn for_each<F>(&self, n: usize, f: F)
    where
        F: Fn(usize) + Sync + Send,
    {
        match &self.kind {
            Kind::Sequential => (0..n).for_each(f),
            Kind::Parallel(pool) => pool.install(|| (0..n).into_par_iter().with_min_len(PAR_MIN_LEN).for_each(f)),
            Kind::Shuffled(_) => self.permutation(n).unwrap().into_iter().for_each(f),
        }
    }
}
