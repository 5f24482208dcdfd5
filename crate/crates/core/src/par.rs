//! Data-parallel helpers with a sequential fallback.
//!
//! Results always come back in input order, and chunk boundaries are fixed by
//! the caller rather than by the thread pool, so a reduction over the returned
//! vector gives bitwise-identical results in either mode.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Parallel when the `parallel` feature is on, sequential otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

impl Execution {
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => items.par_iter().map(f).collect(),
        }
    }

    /// Applies `f(chunk_index, chunk)` to consecutive chunks of `chunk_len`
    /// items.
    pub fn map_chunks<T, U, F>(self, items: &[T], chunk_len: usize, f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(usize, &[T]) -> U + Sync + Send,
    {
        let chunk_len = chunk_len.max(1);
        match self {
            Execution::Sequential => items
                .chunks(chunk_len)
                .enumerate()
                .map(|(i, c)| f(i, c))
                .collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => items
                .par_chunks(chunk_len)
                .enumerate()
                .map(|(i, c)| f(i, c))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let xs: Vec<u32> = (0..1000).collect();
        let seq = Execution::Sequential.map(&xs, |x| x * 3);
        assert_eq!(seq, Execution::default().map(&xs, |x| x * 3));
        let sums = Execution::default().map_chunks(&xs, 7, |i, c| (i, c.iter().sum::<u32>()));
        assert_eq!(sums.len(), 143);
        assert!(sums.iter().enumerate().all(|(i, (j, _))| i == *j));
        assert_eq!(sums.iter().map(|s| s.1).sum::<u32>(), xs.iter().sum::<u32>());
    }
}
