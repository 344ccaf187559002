//! Seeded random streams. Every parallel chunk gets its own ChaCha stream so
//! results do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Uniform direction on the unit sphere of ℝ^d.
pub fn direction<R: Rng>(r: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn normal<R: Rng>(r: &mut R) -> f64 {
    r.sample(StandardNormal)
}

/// Random sign ±1.
pub fn sign<R: Rng>(r: &mut R) -> f64 {
    if r.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Split `n` items into `chunks` contiguous ranges.
pub fn chunk_ranges(n: usize, chunk: usize) -> Vec<std::ops::Range<usize>> {
    (0..n.div_ceil(chunk)).map(|c| c * chunk..((c + 1) * chunk).min(n)).collect()
}

/// Σ f(k) for k < n with a fixed reduction tree: parallel over fixed chunks, then in order.
pub fn par_sum(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    use rayon::prelude::*;
    let parts: Vec<f64> = chunk_ranges(n, 4096).into_par_iter().map(|r| r.map(&f).sum::<f64>()).collect();
    parts.iter().sum()
}
