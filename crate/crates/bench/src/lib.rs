//! Shared fixtures for the benchmarks.

use randlora::rng::Stream;
use randlora::{BasisConfig, BasisSet, Distribution, Matrix, RandLoraAdapter};

pub fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut s = Stream::new(seed);
    Matrix::from_fn(rows, cols, |_, _| s.next_normal())
}

/// A full-rank RandLoRA adapter on a `big_d × d` layer with random diagonals.
pub fn adapter(dist: Distribution, big_d: usize, d: usize, r: usize) -> (BasisSet, RandLoraAdapter) {
    let n = big_d.min(d).div_ceil(r);
    let set = BasisSet::generate(BasisConfig::new(1, dist, n, r, big_d, d)).expect("valid config");
    let slice = set.slice_for_layer("bench", big_d, d).expect("layer fits");
    let mut ad = RandLoraAdapter::new(slice, 1.0 / r as f64);
    let mut s = Stream::new(2);
    let p: Vec<f64> = (0..ad.param_count()).map(|_| s.next_normal()).collect();
    ad.set_params(&p).expect("sized params");
    (set, ad)
}
