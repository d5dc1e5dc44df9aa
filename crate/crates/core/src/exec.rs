//! Execution helpers shared by the Monte Carlo and permutation code.
//!
//! Every randomized unit of work (a simulation replication, a permutation
//! draw) gets its own generator derived from `(seed, index)`, so results do
//! not depend on how the work is scheduled. With the `parallel` feature the
//! maps below run on the current rayon pool; without it they run in order on
//! the calling thread. Output order is the index order in both cases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for the `index`-th independent stream under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Apply `f` to `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Apply `f` to each element of `items`, collecting results in order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
