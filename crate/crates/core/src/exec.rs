//! Serial/parallel execution switch.
//!
//! Every parallel path in the crate computes exactly what the serial path
//! computes: maps preserve index order and reductions are over integers or
//! other order-independent operations. Without the `parallel` feature,
//! `Exec::Parallel` silently runs serially.

use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Serial,
    #[default]
    Parallel,
}

/// Work below this many items is never split.
#[cfg_attr(not(feature = "parallel"), allow(dead_code))]
const MIN_PARALLEL_LEN: usize = 1024;

impl Exec {
    /// Whether this setting actually fans out in the current build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// `(0..n).map(f).collect()`, in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Send + Sync,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && n >= MIN_PARALLEL_LEN {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Like `map` but for coarse tasks where any `n > 1` is worth splitting.
    pub fn map_tasks<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Send + Sync,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && n > 1 {
            use rayon::prelude::*;
            return (0..n).into_par_iter().with_max_len(1).map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Folds contiguous index ranges covering `0..n` and combines the partial
    /// results. `combine` must be associative and commutative for the result
    /// to be independent of the split.
    pub fn fold_ranges<A, I, F, C>(self, n: usize, identity: I, fold: F, combine: C) -> A
    where
        A: Send,
        I: Fn() -> A + Send + Sync,
        F: Fn(A, Range<usize>) -> A + Send + Sync,
        C: Fn(A, A) -> A + Send + Sync,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && n >= MIN_PARALLEL_LEN {
            use rayon::prelude::*;
            let chunk = (n / (4 * rayon::current_num_threads())).max(MIN_PARALLEL_LEN / 4);
            let starts: Vec<usize> = (0..n).step_by(chunk).collect();
            return starts
                .into_par_iter()
                .map(|s| fold(identity(), s..(s + chunk).min(n)))
                .reduce(&identity, &combine);
        }
        let _ = &combine;
        fold(identity(), 0..n)
    }
}
