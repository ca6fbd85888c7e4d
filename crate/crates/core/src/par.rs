//! Per-particle map that runs on the rayon pool when the `parallel` feature
//! is on. Results come back in index order either way, and the first error by
//! index wins, so output does not depend on scheduling.

use crate::error::Result;

#[cfg(feature = "parallel")]
pub fn map_mut<T, U, F>(items: &mut [T], f: F) -> Result<Vec<U>>
where
    T: Send,
    U: Send,
    F: Fn(usize, &mut T) -> Result<U> + Sync + Send,
{
    use rayon::prelude::*;
    let out: Vec<Result<U>> = items.par_iter_mut().enumerate().map(|(i, x)| f(i, x)).collect();
    out.into_iter().collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_mut<T, U, F>(items: &mut [T], f: F) -> Result<Vec<U>>
where
    T: Send,
    U: Send,
    F: Fn(usize, &mut T) -> Result<U> + Sync + Send,
{
    items.iter_mut().enumerate().map(|(i, x)| f(i, x)).collect()
}
