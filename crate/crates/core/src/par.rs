//! Index-ordered parallel map; serial when the `parallel` feature is off.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `(0..n).map(f)` evaluated across the current worker pool. Results are
/// returned in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
