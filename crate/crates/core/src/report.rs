//! Seeded random streams and Monte-Carlo summaries.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const RNG_ALGORITHM: &str = "ChaCha8";

/// Identifies one reproducible random stream: same spec, same numbers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub algorithm: String,
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self { algorithm: RNG_ALGORITHM.to_string(), seed, stream: 0 }
    }

    pub fn with_stream(&self, stream: u64) -> Self {
        Self { stream, ..self.clone() }
    }

    /// A child stream keyed by `tag`; distinct tags give independent streams.
    pub fn child(&self, tag: u64) -> Self {
        self.with_stream(splitmix64(self.stream ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d))))
    }

    /// Stream driving the regime chain of path `k`.
    pub fn chain_stream(&self, k: u64) -> Self {
        self.child(2 * k)
    }

    /// Stream driving the Brownian increments of path `k`, independent of the chain.
    pub fn brownian_stream(&self, k: u64) -> Self {
        self.child(2 * k + 1)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub estimate: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub rng: RngSpec,
    pub target: Option<f64>,
    pub z_score: Option<f64>,
}

impl McReport {
    pub fn from_samples(samples: &[f64], rng: RngSpec) -> Self {
        let stats = SampleStats::from_slice(samples);
        Self {
            estimate: stats.mean,
            std_error: stats.std_error(),
            n_paths: samples.len(),
            rng,
            target: None,
            z_score: None,
        }
    }

    /// Attaches a comparison target; a zero-variance exact hit scores 0.
    pub fn against(mut self, target: f64) -> Self {
        let diff = self.estimate - target;
        let z = if diff == 0.0 { 0.0 } else { diff / self.std_error };
        self.target = Some(target);
        self.z_score = Some(z);
        self
    }

    pub fn within_sigmas(&self, k: f64) -> bool {
        self.z_score.is_some_and(|z| z.abs() <= k)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Running mean and variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SampleStats {
    pub n: usize,
    pub mean: f64,
    m2: f64,
}

impl SampleStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = (self.n + other.n) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n;
        self.m2 += other.m2 + d * d * self.n as f64 * other.n as f64 / n;
        self.n += other.n;
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut s = Self::default();
        xs.iter().for_each(|&x| s.push(x));
        s
    }

    /// Sample variance with the `n - 1` denominator.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}
