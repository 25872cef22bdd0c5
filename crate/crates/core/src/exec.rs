//! Chunked work distribution with a deterministic reduction order.

use alloc::vec::Vec;
use core::ops::Range;

/// Runs `f` over consecutive index chunks and returns the results in chunk
/// order, so reductions over them do not depend on scheduling.
pub trait ChunkExecutor {
    fn map_chunks<T, F>(&self, len: usize, chunk: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(Range<usize>) -> T + Sync + Send;
}

/// Runs every chunk on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

pub fn chunk_ranges(len: usize, chunk: usize) -> impl Iterator<Item = Range<usize>> {
    let chunk = chunk.max(1);
    (0..len.div_ceil(chunk)).map(move |c| c * chunk..((c + 1) * chunk).min(len))
}

impl ChunkExecutor for Sequential {
    fn map_chunks<T, F>(&self, len: usize, chunk: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(Range<usize>) -> T + Sync + Send,
    {
        chunk_ranges(len, chunk).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_range_in_order() {
        let got = Sequential.map_chunks(10, 4, |r| r);
        assert_eq!(got, [0..4, 4..8, 8..10]);
        assert!(Sequential.map_chunks(0, 4, |r| r).is_empty());
    }
}
