#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_auc::dataio::{Dataset, SparseVec};
use sparse_auc::kernel::{KernelCache, KernelSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `p` positives then `n` negatives, dense features uniform on [-1, 1].
pub fn random_dataset(rng: &mut ChaCha8Rng, p: usize, n: usize, dim: usize) -> Dataset {
    let rows = (0..p + n)
        .map(|_| {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            SparseVec::from_dense(&x)
        })
        .collect();
    let labels = (0..p + n).map(|i| if i < p { 1 } else { -1 }).collect();
    Dataset::new(rows, labels).unwrap()
}

pub fn random_spec(rng: &mut ChaCha8Rng) -> KernelSpec {
    if rng.gen_bool(0.5) {
        KernelSpec::gaussian(rng.gen_range(0.3..2.0)).unwrap()
    } else {
        KernelSpec::Linear
    }
}

/// Cache over `d` distinct random basis rows.
pub fn random_cache(rng: &mut ChaCha8Rng, ds: &Dataset, spec: KernelSpec, d: usize) -> KernelCache {
    let picks = rand::seq::index::sample(rng, ds.len(), d.min(ds.len()));
    let mut cache = KernelCache::new(spec, ds.len(), d);
    for q in picks.into_iter() {
        cache.append_column(ds, q).unwrap();
    }
    cache
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = a.iter().chain(b).fold(1.0f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}
