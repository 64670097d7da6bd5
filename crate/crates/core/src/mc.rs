//! Monte-Carlo plumbing shared by the oracles.
//!
//! Samples are split into [`CHUNKS`] fixed chunks, each with its own stream, so an
//! estimate depends only on `(seed, n_samples)` and never on the thread count.

use serde::Serialize;

use crate::par;
use crate::rng::{tag, StreamRng};

pub const CHUNKS: usize = 80;
/// Batches used for the jackknife; `CHUNKS` is a multiple of this.
pub const BATCHES: usize = 10;

/// A Monte-Carlo value with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

impl McEstimate {
    /// Is `|value - target| ≤ k · stderr`?
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }
}

/// Running first and second moments.
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    pub count: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn merge(mut self, other: &Moments) -> Moments {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn estimate(&self) -> McEstimate {
        let n = self.count.max(1) as f64;
        let mean = self.sum / n;
        let var = if self.count > 1 {
            ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        McEstimate {
            value: mean,
            stderr: (var / n).sqrt(),
            n_samples: self.count,
        }
    }
}

/// Sizes of the chunks for `n_samples` draws.
pub fn chunk_sizes(n_samples: usize) -> Vec<usize> {
    (0..CHUNKS)
        .map(|c| n_samples / CHUNKS + usize::from(c < n_samples % CHUNKS))
        .collect()
}

/// Runs `f(rng, count)` on every chunk, chunk `c` drawing from stream
/// `(seed, MONTE_CARLO, [purpose, c])`. Results are in chunk order.
pub fn run_chunks<A, F>(n_samples: usize, seed: u64, purpose: u64, f: F) -> Vec<A>
where
    A: Send,
    F: Fn(&mut StreamRng, usize) -> A + Sync + Send,
{
    let sizes = chunk_sizes(n_samples);
    par::map_range(CHUNKS, |c| {
        let mut rng = StreamRng::derive(seed, tag::MONTE_CARLO, &[purpose, c as u64]);
        f(&mut rng, sizes[c])
    })
}

/// Mean of a scalar functional of the stream.
pub fn scalar_mean<F>(n_samples: usize, seed: u64, purpose: u64, draw: F) -> McEstimate
where
    F: Fn(&mut StreamRng) -> f64 + Sync + Send,
{
    run_chunks(n_samples, seed, purpose, |rng, count| {
        let mut m = Moments::default();
        for _ in 0..count {
            m.push(draw(rng));
        }
        m
    })
    .iter()
    .fold(Moments::default(), |acc, m| acc.merge(m))
    .estimate()
}
