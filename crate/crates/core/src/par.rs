//! Row-parallel execution over per-PEV work.
//!
//! With the `parallel` feature the per-PEV gradient assembly and projection
//! inside one iteration fan out over rayon; without it every helper here is a
//! plain loop. Each row is computed from an immutable snapshot, so the two
//! paths produce bitwise-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How an optimizer iteration schedules its per-PEV work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Falls back to [`Execution::Sequential`] when built without `parallel`.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

// Rows are cheap (T ~ 24 slots); batching keeps rayon's split overhead down.
#[cfg(feature = "parallel")]
const MIN_ROWS_PER_TASK: usize = 8;

/// Applies `f(row_index, row)` to every `width`-long row of `data`.
pub fn try_for_each_row<E, F>(
    execution: Execution,
    data: &mut [f64],
    width: usize,
    f: F,
) -> Result<(), E>
where
    E: Send,
    F: Fn(usize, &mut [f64]) -> Result<(), E> + Sync + Send,
{
    if width == 0 {
        return Ok(());
    }
    #[cfg(feature = "parallel")]
    if execution.is_parallel() {
        return data
            .par_chunks_mut(width)
            .with_min_len(MIN_ROWS_PER_TASK)
            .enumerate()
            .try_for_each(|(k, row)| f(k, row));
    }
    let _ = execution;
    data.chunks_mut(width)
        .enumerate()
        .try_for_each(|(k, row)| f(k, row))
}

/// Maps `f` over `0..n`, collecting results in index order.
pub fn map_indices<T, F>(execution: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if execution.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = execution;
    (0..n).map(f).collect()
}

/// Runs two closures, concurrently when parallel execution is available.
pub fn join<A, B, RA, RB>(execution: Execution, a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    if execution.is_parallel() {
        return rayon::join(a, b);
    }
    let _ = execution;
    (a(), b())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_parallel_rows_agree() {
        let mut a = vec![0.0; 40 * 7];
        let mut b = a.clone();
        let f = |k: usize, row: &mut [f64]| -> Result<(), ()> {
            for (t, x) in row.iter_mut().enumerate() {
                *x = (k * 31 + t) as f64 * 0.1;
            }
            Ok(())
        };
        try_for_each_row(Execution::Sequential, &mut a, 7, f).unwrap();
        try_for_each_row(Execution::Parallel, &mut b, 7, f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors_propagate() {
        let mut a = vec![0.0; 10];
        let r = try_for_each_row(Execution::Parallel, &mut a, 2, |k, _| {
            if k == 3 {
                Err(k)
            } else {
                Ok(())
            }
        });
        assert_eq!(r, Err(3));
    }

    #[test]
    fn map_preserves_order() {
        let v = map_indices(Execution::Parallel, 100, |i| i * i);
        assert_eq!(v[99], 99 * 99);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
    }
}
