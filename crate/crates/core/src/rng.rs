//! Portable pseudo-random stream used for every seeded operation in the crate.
//!
//! The generator is SplitMix64. With state `s` (u64, wrapping arithmetic):
//!
//! ```text
//! s  = s + 0x9E3779B97F4A7C15
//! z  = s
//! z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! out = z ^ (z >> 31)
//! ```
//!
//! Derived quantities, all fixed so ports reproduce the same numbers:
//!
//! * `next_f64`: `(out >> 11) * 2^-53`, uniform on `[0, 1)`.
//! * `next_below(n)`: high 64 bits of the 128-bit product `out * n`.
//! * `next_gaussian`: Box–Muller on two uniforms `u1 = 1 - next_f64()`,
//!   `u2 = next_f64()`, returning `sqrt(-2 ln u1) * cos(2π u2)`. The sine
//!   branch is discarded so every normal draw consumes exactly two outputs.
//! * `derive(seed, tag)`: the first output of a generator seeded with
//!   `seed ^ mix(tag)`, used to fork independent sub-streams.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Independent stream for `(seed, tag)`.
    pub fn derive(seed: u64, tag: u64) -> Self {
        let mut base = Self::new(seed ^ mix(tag.wrapping_add(GAMMA)));
        Self::new(base.next_u64())
    }

    /// Same as `derive` for two-level tags such as `(group, row)`.
    pub fn derive2(seed: u64, tag_a: u64, tag_b: u64) -> Self {
        let inner = Self::derive(seed, tag_a).next_u64();
        Self::derive(inner, tag_b)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn next_below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    #[inline]
    pub fn next_sign(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Fisher–Yates, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// `count` distinct indices from `0..n` in draw order (partial Fisher–Yates).
    pub fn sample_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n, "cannot sample {count} of {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.next_below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }

    /// Uniform point on the probability simplex (normalized exponentials).
    pub fn simplex_point(&mut self, dim: usize) -> Vec<f64> {
        let e: Vec<f64> = (0..dim).map(|_| -(1.0 - self.next_f64()).ln()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_outputs() {
        // Published SplitMix64 reference values for seed 1234567.
        let mut rng = SplitMix64::new(1_234_567);
        let expected = [
            6_457_827_717_110_365_317u64,
            3_203_168_211_198_807_973,
            9_817_491_932_198_370_423,
            4_593_380_528_125_082_431,
            16_408_922_859_458_223_821,
        ];
        for e in expected {
            assert_eq!(rng.next_u64(), e);
        }
    }

    #[test]
    fn uniform_and_gaussian_moments() {
        let mut rng = SplitMix64::new(42);
        let n = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let g = rng.next_gaussian();
            s += g;
            s2 += g * g;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn sample_indices_distinct() {
        let mut rng = SplitMix64::new(3);
        let mut s = rng.sample_indices(100, 60);
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 60);
        assert!(s.iter().all(|&i| i < 100));
    }

    #[test]
    fn derived_streams_differ() {
        let a = SplitMix64::derive(7, 0).next_u64();
        let b = SplitMix64::derive(7, 1).next_u64();
        let c = SplitMix64::derive2(7, 1, 0).next_u64();
        assert_ne!(a, b);
        assert_ne!(b, c);
        assert_eq!(a, SplitMix64::derive(7, 0).next_u64());
    }

    #[test]
    fn simplex_point_sums_to_one() {
        let mut rng = SplitMix64::new(9);
        let p = rng.simplex_point(8);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0));
    }
}
