//! Order-preserving parallel maps; sequential without the `parallel` feature.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn map_indices<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indices<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map<S: Sync, T: Send, F: Fn(&S) -> T + Sync + Send>(items: &[S], f: F) -> Vec<T> {
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<S: Sync, T: Send, F: Fn(&S) -> T + Sync + Send>(items: &[S], f: F) -> Vec<T> {
    items.iter().map(f).collect()
}
