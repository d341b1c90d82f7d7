//! Order-preserving map over independent jobs.
//!
//! With the `parallel` feature, [`ExecMode::Parallel`] runs jobs on a rayon
//! pool sized by `jobs`. Without it every mode runs sequentially. Results come
//! back in input order either way, so outputs never depend on scheduling.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Executor {
    pub mode: ExecMode,
    /// Worker count; `None` uses one per available core.
    pub jobs: Option<usize>,
}

impl Executor {
    pub fn sequential() -> Self {
        Self { mode: ExecMode::Sequential, jobs: None }
    }

    pub fn parallel(jobs: Option<usize>) -> Self {
        Self { mode: ExecMode::Parallel, jobs }
    }

    /// Whether jobs actually run concurrently in this build.
    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && self.mode == ExecMode::Parallel && self.jobs != Some(1)
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        if !self.is_parallel() {
            return items.iter().map(f).collect();
        }
        self.map_parallel(items, f)
    }

    #[cfg(feature = "parallel")]
    fn map_parallel<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        use rayon::prelude::*;
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.jobs {
            builder = builder.num_threads(n);
        }
        match builder.build() {
            Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            Err(_) => items.iter().map(f).collect(),
        }
    }

    #[cfg(not(feature = "parallel"))]
    fn map_parallel<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        items.iter().map(f).collect()
    }
}
