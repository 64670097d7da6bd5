//! Reproducible random streams.
//!
//! Every random quantity in the crate is drawn from a [`StreamRng`], a ChaCha8
//! generator keyed by a 64-bit seed together with a 64-bit stream id. ChaCha is
//! counter based, so distinct `(seed, stream)` pairs give independent streams and
//! the draws of one stream never depend on how many values were consumed from
//! another. Stream ids are derived from a purpose tag and a list of indices
//! (`m`, trial, signal, restart, chunk, ...) with [`stream_id`], which is what lets
//! parallel loops stay bit-identical to their sequential counterparts.
//!
//! Conversions, documented so that ports can reproduce the distributions:
//! * uniform: `(next_u64() >> 11) * 2^-53`, a double in `[0, 1)`;
//! * Gaussian: Box–Muller on two uniforms, `u1` mapped to `(0, 1]` as `1 - u`,
//!   returning `r cos θ` and caching `r sin θ` for the next call.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Purpose tags mixed into stream ids.
pub mod tag {
    pub const SENSING_MATRIX: u64 = 0x01;
    pub const DITHER: u64 = 0x02;
    pub const OBS_NOISE: u64 = 0x03;
    pub const LINK_NOISE: u64 = 0x04;
    pub const GENERATOR: u64 = 0x05;
    pub const RESTART: u64 = 0x06;
    pub const SIGNALS: u64 = 0x07;
    pub const MONTE_CARLO: u64 = 0x08;
    pub const ENSEMBLE_SEED: u64 = 0x09;
    pub const SOLVER_SEED: u64 = 0x0a;
    pub const LATENT_PAIRS: u64 = 0x0b;
    pub const PROCESS_TRIAL: u64 = 0x0c;
    pub const PROCESS_REFERENCE: u64 = 0x0d;
    pub const POWER_ITERATION: u64 = 0x0e;
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Folds a purpose tag and indices into one stream id.
pub fn stream_id(tag: u64, indices: &[u64]) -> u64 {
    indices
        .iter()
        .fold(splitmix64(tag), |acc, &i| splitmix64(acc ^ splitmix64(i)))
}

/// Derives a child seed, used where an API takes a plain `u64` seed.
pub fn derive_seed(seed: u64, tag: u64, indices: &[u64]) -> u64 {
    splitmix64(seed ^ stream_id(tag, indices))
}

#[derive(Clone, Debug)]
pub struct StreamRng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl StreamRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner, spare: None }
    }

    pub fn derive(seed: u64, tag: u64, indices: &[u64]) -> Self {
        Self::new(seed, stream_id(tag, indices))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi]`.
    #[inline]
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box–Muller.
    #[inline]
    pub fn gaussian(&mut self) -> f64 {
        if let Some(g) = self.spare.take() {
            return g;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(radius * s);
        radius * c
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.gaussian();
        }
    }

    pub fn gaussian_vec(&mut self, len: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        self.fill_gaussian(&mut v);
        v
    }

    /// Uniform draw from the Euclidean ball of the given radius in `dim` dimensions.
    pub fn uniform_in_ball(&mut self, dim: usize, radius: f64) -> Vec<f64> {
        let mut v = self.gaussian_vec(dim);
        let norm = crate::linalg::norm(&v);
        let scale = if norm > 0.0 {
            radius * self.uniform().powf(1.0 / dim as f64) / norm
        } else {
            0.0
        };
        v.iter_mut().for_each(|x| *x *= scale);
        v
    }
}
