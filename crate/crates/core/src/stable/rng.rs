use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A reproducible random stream: a master seed plus a stream index.
///
/// Backed by ChaCha8, whose 64-bit stream parameter selects an independent
/// keystream, so `(seed, stream)` fully determines the sequence regardless of
/// which worker consumes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Deterministic child stream, e.g. one per replication.
    pub fn child(&self, index: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix(self.stream ^ splitmix(index.wrapping_add(0x5bd1_e995))),
        }
    }

    pub fn rng(&self) -> StreamRng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(self.stream);
        StreamRng { inner }
    }
}

/// Generator handed out by [`RngStream::rng`].
#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard exponential.
    #[inline]
    pub fn exponential(&mut self) -> f64 {
        -self.uniform().ln()
    }

    /// Poisson draw by inversion; adequate for the moderate means used here.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        if mean > 500.0 {
            // Inversion underflows exp(-mean) for large means.
            let half = self.poisson(mean / 2.0);
            return half + self.poisson(mean / 2.0);
        }
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        let u = self.uniform();
        while u > cdf {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
            if p < 1e-300 && cdf >= 1.0 - 1e-15 {
                break;
            }
        }
        k
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_same_sequence() {
        let a: Vec<u64> = {
            let mut r = RngStream::new(7, 3).rng();
            (0..16).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = RngStream::new(7, 3).rng();
            (0..16).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        let mut r = RngStream::new(7, 4).rng();
        let c: Vec<u64> = (0..16).map(|_| r.next_u64()).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn children_differ() {
        let s = RngStream::new(1, 0);
        assert_ne!(s.child(0), s.child(1));
        assert_eq!(s.child(5), s.child(5));
    }

    #[test]
    fn uniform_in_open_interval_and_poisson_mean() {
        let mut r = RngStream::new(11, 0).rng();
        let mut total = 0u64;
        for _ in 0..20_000 {
            let u = r.uniform();
            assert!(u > 0.0 && u < 1.0);
            total += r.poisson(3.0);
        }
        let mean = total as f64 / 20_000.0;
        assert!((mean - 3.0).abs() < 0.05, "{mean}");
    }
}
