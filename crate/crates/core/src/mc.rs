//! Seeded, chunked Monte Carlo with Welford accumulation.
//!
//! Work is cut into fixed-size chunks. Chunk `c` draws from a ChaCha20 stream
//! selected by `(seed, c)`, so results depend only on `(seed, samples)` and
//! not on the number of threads.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

pub const CHUNK: u64 = 1 << 14;

/// Running mean and variance.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. parallel merge.
    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            return f64::INFINITY;
        }
        (self.variance() / self.n as f64).sqrt()
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            mean: self.mean(),
            std_err: self.std_err(),
            samples: self.n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            std_err: 0.0,
            samples: 0,
        }
    }
}

/// Generator for chunk `chunk` of the run seeded by `seed`.
pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Runs `body(rng, acc, count)` over `samples` draws split into chunks and
/// merges `width` parallel accumulators.
pub fn chunked<F>(samples: u64, seed: u64, width: usize, body: F) -> Vec<Welford>
where
    F: Fn(&mut ChaCha20Rng, &mut [Welford], u64) + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<Vec<Welford>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = CHUNK.min(samples - c * CHUNK);
            let mut rng = chunk_rng(seed, c);
            let mut acc = vec![Welford::new(); width];
            body(&mut rng, &mut acc, count);
            acc
        })
        .collect();
    let mut total = vec![Welford::new(); width];
    for part in &parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    total
}

/// Scalar convenience wrapper around [`chunked`].
pub fn estimate<F>(samples: u64, seed: u64, draw: F) -> Estimate
where
    F: Fn(&mut ChaCha20Rng) -> f64 + Sync,
{
    chunked(samples, seed, 1, |rng, acc, count| {
        for _ in 0..count {
            acc[0].push(draw(rng));
        }
    })[0]
        .estimate()
}
