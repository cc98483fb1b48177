//! Worker pools and the wall-clock budget guard.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use pathmeasure_core::mc::{Executor, Serial};
use rayon::prelude::*;

/// Panic payload raised when a run is projected to exceed its budget.
#[derive(Clone, Debug)]
pub struct BudgetExceeded {
    pub projected: Duration,
    pub budget: Duration,
}

impl std::fmt::Display for BudgetExceeded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "projected runtime {:.1} s exceeds the budget of {:.1} s; raise budget_seconds or shrink the run",
            self.projected.as_secs_f64(),
            self.budget.as_secs_f64()
        )
    }
}

enum Pool {
    Serial,
    Rayon(rayon::ThreadPool),
}

/// Executor owned by the runner. One thread means [`Serial`]; any thread
/// count yields identical numbers because blocks are reduced in order.
pub struct Runner {
    pool: Pool,
    threads: usize,
    start: Instant,
    budget: Option<Duration>,
}

impl Runner {
    /// `threads == 0` uses every available core.
    pub fn new(threads: usize) -> anyhow::Result<Self> {
        let threads = if threads == 0 {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        } else {
            threads
        };
        let pool = if threads == 1 {
            Pool::Serial
        } else {
            Pool::Rayon(rayon::ThreadPoolBuilder::new().num_threads(threads).build()?)
        };
        Ok(Runner { pool, threads, start: Instant::now(), budget: None })
    }

    pub fn serial() -> Self {
        Runner { pool: Pool::Serial, threads: 1, start: Instant::now(), budget: None }
    }

    /// Starts the clock; later calls to `map_blocks` abort with
    /// [`BudgetExceeded`] once the projected total passes `budget`.
    pub fn with_budget(mut self, budget: Option<Duration>) -> Self {
        self.budget = budget;
        self.start = Instant::now();
        self
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn elapsed(&self) -> Duration {
        self.start.elapsed()
    }

    fn check(&self, call_start: Instant, done: usize, total: usize) {
        let Some(budget) = self.budget else { return };
        let call = call_start.elapsed();
        if call < Duration::from_millis(500) {
            return;
        }
        let before = call_start.duration_since(self.start);
        let projected = before + call.mul_f64(total as f64 / done as f64);
        if projected > budget {
            std::panic::panic_any(BudgetExceeded { projected, budget });
        }
    }
}

impl Executor for Runner {
    fn map_blocks<T, F>(&self, n_blocks: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let call_start = Instant::now();
        let done = AtomicUsize::new(0);
        let g = |b: usize| {
            let out = f(b);
            let k = done.fetch_add(1, Ordering::Relaxed) + 1;
            self.check(call_start, k, n_blocks);
            out
        };
        match &self.pool {
            Pool::Serial => Serial.map_blocks(n_blocks, g),
            Pool::Rayon(pool) => pool.install(|| (0..n_blocks).into_par_iter().map(g).collect()),
        }
    }
}
