//! Node-parallel map with a sequential fallback.
//!
//! With the `parallel` feature, [`Execution::Parallel`] maps over rayon's
//! global pool. Without it every call runs sequentially. Results are
//! collected in index order either way, so outputs do not depend on the
//! thread count.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// `(0..n).map(f)` collected in order.
pub fn map_range<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().with_min_len(64).map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Like [`map_range`] for fallible work; returns the error with the lowest
/// index so failures are reported deterministically.
pub fn try_map_range<T, E, F>(exec: Execution, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => map_range(exec, n, f).into_iter().collect(),
        _ => (0..n).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let a = map_range(Execution::Sequential, 1000, |i| i * i);
        let b = map_range(Execution::Parallel, 1000, |i| i * i);
        assert_eq!(a, b);
    }

    #[test]
    fn first_error_wins() {
        let r: Result<Vec<usize>, usize> =
            try_map_range(Execution::Parallel, 500, |i| if i % 97 == 13 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(13));
    }
}
