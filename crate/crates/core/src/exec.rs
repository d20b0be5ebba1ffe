//! Replicate-level execution.
//!
//! Replicates are mapped to results in index order and reduced sequentially,
//! so output is identical for every thread count and for the sequential
//! fallback.

use serde::Serialize;

use crate::rng::replicate_seed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Execution {
    Sequential,
    /// Uses the current rayon pool when built with the `parallel` feature,
    /// otherwise runs sequentially.
    #[default]
    Parallel,
}

/// A batch of i.i.d. replicates derived from one root seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Replicates {
    pub n: u64,
    pub seed_root: u64,
    pub execution: Execution,
}

impl Replicates {
    pub fn new(n: u64, seed_root: u64) -> Self {
        Self {
            n,
            seed_root,
            execution: Execution::default(),
        }
    }

    pub fn sequential(self) -> Self {
        Self {
            execution: Execution::Sequential,
            ..self
        }
    }

    /// Same replicate count under an independent root.
    pub fn fork(self, salt: u64) -> Self {
        Self {
            seed_root: replicate_seed(self.seed_root, u64::MAX - salt),
            ..self
        }
    }

    pub fn seed(&self, index: u64) -> u64 {
        replicate_seed(self.seed_root, index)
    }

    /// `f(index, seed)` for every replicate, in index order.
    pub fn map<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64, u64) -> T + Sync + Send,
    {
        let root = self.seed_root;
        match self.execution {
            Execution::Sequential => (0..self.n).map(|i| f(i, replicate_seed(root, i))).collect(),
            Execution::Parallel => parallel_map(self.n, root, f),
        }
    }

    /// Fallible variant of [`Replicates::map`]; the first error by index wins.
    pub fn try_map<T, E, F>(&self, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(u64, u64) -> Result<T, E> + Sync + Send,
    {
        self.map(f).into_iter().collect()
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: u64, root: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n)
        .into_par_iter()
        .map(|i| f(i, replicate_seed(root, i)))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: u64, root: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync + Send,
{
    (0..n).map(|i| f(i, replicate_seed(root, i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let r = Replicates::new(1000, 42);
        let a = r.map(|i, s| s.wrapping_mul(i + 1));
        let b = r.sequential().map(|i, s| s.wrapping_mul(i + 1));
        assert_eq!(a, b);
    }

    #[test]
    fn forks_are_distinct() {
        let r = Replicates::new(1, 42);
        assert_ne!(r.fork(0).seed(0), r.seed(0));
        assert_ne!(r.fork(0).seed(0), r.fork(1).seed(0));
    }
}
