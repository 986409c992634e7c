//! Data-parallel helpers. With the `parallel` feature (default) the maps run
//! on rayon; without it they fall back to a sequential loop with identical
//! output ordering, so results never depend on the feature or thread count.

/// Maps `f` over `0..count`, collecting results in index order.
pub fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// Maps `f` over the chunks of a slice (fixed chunk size), collecting the
/// per-chunk results in chunk order so any later fold is deterministic.
pub fn map_chunks<T, U, F>(items: &[T], chunk_size: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&[T]) -> U + Sync + Send,
{
    assert!(chunk_size > 0);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_chunks(chunk_size).map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.chunks(chunk_size).map(f).collect()
    }
}

/// Sequential reference for [`map_indexed`], available regardless of the
/// `parallel` feature so the bench suite can compare both on one build.
pub fn map_indexed_seq<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}

/// Sequential reference for [`map_chunks`].
pub fn map_chunks_seq<T, U, F>(items: &[T], chunk_size: usize, f: F) -> Vec<U>
where
    F: Fn(&[T]) -> U,
{
    assert!(chunk_size > 0);
    items.chunks(chunk_size).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_indexed_preserves_order() {
        let out = map_indexed(100, |i| i * i);
        assert_eq!(out[7], 49);
        assert_eq!(out.len(), 100);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let items: Vec<u64> = (0..500).collect();
        assert_eq!(
            map_chunks(&items, 7, |c| c.iter().sum::<u64>()),
            map_chunks_seq(&items, 7, |c| c.iter().sum::<u64>())
        );
        assert_eq!(map_indexed(50, |i| i * 3), map_indexed_seq(50, |i| i * 3));
    }

    #[test]
    fn map_chunks_covers_all_items() {
        let items: Vec<u64> = (0..1000).collect();
        let partials = map_chunks(&items, 64, |c| c.iter().sum::<u64>());
        assert_eq!(partials.iter().sum::<u64>(), 1000 * 999 / 2);
    }
}
