//! Execution strategy for the data-parallel inner loops.
//!
//! With the `parallel` feature the loops run on a private rayon pool whose
//! size is capped by the `EQUIBURST_THREADS` environment variable. Without
//! it they run sequentially. Every helper assigns each output element to a
//! fixed index and keeps all reductions inside one element, so results are
//! bit-identical across thread counts.

#[cfg(feature = "parallel")]
mod imp {
    use once_cell::sync::Lazy;
    use rayon::prelude::*;

    static POOL: Lazy<rayon::ThreadPool> = Lazy::new(|| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = std::env::var("EQUIBURST_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0)
        {
            builder = builder.num_threads(n);
        }
        builder.build().expect("failed to build worker pool")
    });

    /// Map `0..n` to a vector, preserving index order.
    pub fn map_indexed<T: Send, F>(n: usize, f: F) -> Vec<T>
    where
        F: Fn(usize) -> T + Sync + Send,
    {
        POOL.install(|| (0..n).into_par_iter().map(f).collect())
    }

    /// Fill `buf` in chunks of `chunk_len`; `f(chunk_index, chunk)` writes one chunk.
    pub fn fill_chunks<F>(buf: &mut [f64], chunk_len: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        POOL.install(|| {
            buf.par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, chunk)| f(i, chunk))
        })
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
    where
        F: Fn(usize) -> T,
    {
        (0..n).map(f).collect()
    }

    pub fn fill_chunks<F>(buf: &mut [f64], chunk_len: usize, f: F)
    where
        F: Fn(usize, &mut [f64]),
    {
        for (i, chunk) in buf.chunks_mut(chunk_len).enumerate() {
            f(i, chunk)
        }
    }
}

pub use imp::{fill_chunks, map_indexed};
