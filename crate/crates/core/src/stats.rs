//! Monte Carlo estimates with a parallel reduction whose result does not
//! depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Replicates per work unit. Fixed so the merge tree never changes.
pub const BLOCK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevenueEstimate {
    pub mean: f64,
    #[serde(rename = "se")]
    pub std_error: f64,
    pub n: u64,
    pub seed: u64,
}

impl RevenueEstimate {
    /// Exact value, reported with zero standard error.
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            std_error: 0.0,
            n: 0,
            seed: 0,
        }
    }

    /// Whether `target` lies within `k` standard errors of the mean.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        self.mean += d * w;
        self.m2 += other.m2 + d * d * self.n as f64 * w;
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self, seed: u64) -> RevenueEstimate {
        RevenueEstimate {
            mean: self.mean,
            std_error: if self.n == 0 {
                0.0
            } else {
                (self.variance() / self.n as f64).sqrt()
            },
            n: self.n,
            seed,
        }
    }
}

/// Runs `kernel(j)` for `j in 0..n` and accumulates the `K` outputs.
///
/// Blocks of [`BLOCK`] replicates run on the current rayon pool; block
/// summaries are merged in index order, so results are bit-identical for any
/// thread count.
pub fn accumulate<const K: usize, F>(n: u64, kernel: F) -> [Moments; K]
where
    F: Fn(u64) -> [f64; K] + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let partial: Vec<[Moments; K]> = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let mut acc = [Moments::default(); K];
            for j in blk * BLOCK..((blk + 1) * BLOCK).min(n) {
                let xs = kernel(j);
                for (a, x) in acc.iter_mut().zip(xs) {
                    a.push(x);
                }
            }
            acc
        })
        .collect();
    let mut total = [Moments::default(); K];
    for p in &partial {
        for (t, m) in total.iter_mut().zip(p) {
            t.merge(m);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|x| whole.push(*x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..313].iter().for_each(|x| a.push(*x));
        xs[313..].iter().for_each(|x| b.push(*x));
        a.merge(&b);
        assert!((a.mean - whole.mean).abs() < 1e-12);
        assert!((a.variance() - whole.variance()).abs() < 1e-9);
        assert_eq!(a.n, 1000);
    }

    #[test]
    fn standard_error_uses_sample_variance() {
        let mut m = Moments::default();
        for x in [1.0, 2.0, 3.0, 4.0] {
            m.push(x);
        }
        let e = m.estimate(9);
        assert_eq!(e.mean, 2.5);
        assert!((e.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(e.seed, 9);
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let kernel = |j: u64| [crate::rng::uniform(5, j), (j as f64).sqrt()];
        let n = 3 * BLOCK + 17;
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| accumulate(n, kernel));
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap()
            .install(|| accumulate(n, kernel));
        for (a, b) in one.iter().zip(&many) {
            assert_eq!(a.mean.to_bits(), b.mean.to_bits());
            assert_eq!(a.m2.to_bits(), b.m2.to_bits());
        }
    }
}
