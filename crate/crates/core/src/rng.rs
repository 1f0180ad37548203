//! Seeded, splittable random number generation.
//!
//! The generator is a counter RNG built on the splitmix64 finalizer: a stream
//! is identified by a 64-bit key derived from `(seed, stream)`, and the n-th
//! output is `mix64(key + n * GOLDEN)`. Outputs therefore depend only on the
//! seed, the stream index and the call sequence, never on platform or thread
//! interleaving, and any number of independent streams can be carved out of
//! one seed with [`Rng::split`].
//!
//! Gaussian variates use the Marsaglia polar method over the uniform
//! generator, with the spare variate cached, so the consumed uniform sequence
//! is itself reproducible.

/// Weyl increment, 2^64 / golden ratio.
const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream-key mixing constant (an odd constant from the splitmix64 family).
const STREAM_MUL: u64 = 0xD134_2543_DE82_EF95;

/// splitmix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    key: u64,
    counter: u64,
    spare_gauss: Option<f64>,
}

impl Rng {
    /// Stream 0 of the given seed.
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let key = mix64(seed ^ GOLDEN).wrapping_add(mix64(stream).wrapping_mul(STREAM_MUL));
        Rng {
            seed,
            stream,
            key,
            counter: 0,
            spare_gauss: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Derive an independent child stream. The child depends only on this
    /// generator's identity (not on how many values were drawn) and on
    /// `index`, so `split` is reproducible and distinct indices give
    /// distinct streams.
    pub fn split(&self, index: u64) -> Rng {
        let child_seed = self.key ^ mix64(index.wrapping_mul(GOLDEN) ^ STREAM_MUL);
        Rng::with_stream(child_seed, index)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / 9_007_199_254_740_992.0; // 2^-53
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform index in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let i = (self.uniform() * n as f64) as usize;
        i.min(n - 1)
    }

    /// Standard normal via the polar method; the second variate of each
    /// accepted pair is cached and returned by the following call.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(g) = self.spare_gauss.take() {
            return g;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = (-2.0 * s.ln() / s).sqrt();
                self.spare_gauss = Some(v * factor);
                return u * factor;
            }
        }
    }

    pub fn gaussian_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.gaussian()).collect()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = Rng::new(7);
        let mut b = Rng::new(7);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = Rng::with_stream(7, 0);
        let mut b = Rng::with_stream(7, 1);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xa, xb);
    }

    #[test]
    fn split_streams_differ_pairwise() {
        let base = Rng::new(42);
        let firsts: Vec<u64> = (0..1000).map(|i| base.split(i).next_u64()).collect();
        for i in 0..firsts.len() {
            for j in (i + 1)..firsts.len() {
                assert_ne!(firsts[i], firsts[j], "streams {i} and {j} collide");
            }
        }
    }

    #[test]
    fn split_is_reproducible_and_ignores_position() {
        let mut used = Rng::new(9);
        let fresh = Rng::new(9);
        for _ in 0..100 {
            used.next_u64();
        }
        let mut a = used.split(3);
        let mut b = fresh.split(3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn uniform_mean_near_half() {
        let mut rng = Rng::new(123);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| rng.uniform()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = Rng::new(5);
        for _ in 0..100_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = Rng::new(321);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = Rng::new(11);
        let mut xs: Vec<usize> = (0..50).collect();
        rng.shuffle(&mut xs);
        let mut sorted = xs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(xs, (0..50).collect::<Vec<_>>());
    }
}
