use std::ops::Range;

use fastslow_core::exec::{chunk_ranges, ChunkExecutor};
use rayon::prelude::*;

/// Runs chunks on the rayon pool; results keep chunk order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rayon;

impl ChunkExecutor for Rayon {
    fn map_chunks<T, F>(&self, len: usize, chunk: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(Range<usize>) -> T + Sync + Send,
    {
        let ranges: Vec<Range<usize>> = chunk_ranges(len, chunk).collect();
        ranges.into_par_iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fastslow_core::exec::Sequential;

    #[test]
    fn same_chunks_as_sequential() {
        let f = |r: Range<usize>| r.map(|i| i * i).sum::<usize>();
        assert_eq!(Rayon.map_chunks(103, 8, f), Sequential.map_chunks(103, 8, f));
    }
}
