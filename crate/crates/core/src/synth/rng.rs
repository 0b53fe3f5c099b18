//! Portable random streams: xoshiro256++ seeded through SplitMix64.
//!
//! A 64-bit seed expands to the 256-bit xoshiro state by four successive
//! SplitMix64 outputs (little-endian words). Independent streams are keyed
//! by a path of integers hashed onto the root seed, so a generator's output
//! never depends on how work is split across threads.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::stats::qnorm;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const TWO_POW_M52: f64 = 1.0 / (1u64 << 52) as f64;

fn splitmix_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the sub-stream `path` under `seed`.
pub fn stream_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix_finalize(seed.wrapping_add(GOLDEN)), |h, &id| {
        splitmix_finalize(h ^ splitmix_finalize(id.wrapping_add(GOLDEN)).wrapping_add(GOLDEN))
    })
}

#[derive(Debug, Clone)]
pub struct SynthRng(Xoshiro256PlusPlus);

impl SynthRng {
    pub fn new(seed: u64) -> Self {
        let mut state = [0u8; 32];
        let mut x = seed;
        for word in state.chunks_exact_mut(8) {
            x = x.wrapping_add(GOLDEN);
            word.copy_from_slice(&splitmix_finalize(x).to_le_bytes());
        }
        Self(Xoshiro256PlusPlus::from_seed(state))
    }

    pub fn stream(seed: u64, path: &[u64]) -> Self {
        Self::new(stream_seed(seed, path))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform on the open interval (0, 1): `((x >> 12) + 0.5) * 2^-52`,
    /// exact in double precision, so never 0 or 1.
    pub fn uniform_open01(&mut self) -> f64 {
        ((self.next_u64() >> 12) as f64 + 0.5) * TWO_POW_M52
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform_open01()
    }

    /// Standard normal by inversion, `qnorm(u)`.
    pub fn standard_normal(&mut self) -> f64 {
        qnorm(self.uniform_open01()).expect("uniform_open01 lies strictly inside (0, 1)")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xoshiro_reference_outputs() {
        let mut state = [0u8; 32];
        for (i, w) in [1u64, 2, 3, 4].iter().enumerate() {
            state[8 * i..8 * i + 8].copy_from_slice(&w.to_le_bytes());
        }
        let mut rng = Xoshiro256PlusPlus::from_seed(state);
        let got: Vec<u64> = (0..6).map(|_| rng.next_u64()).collect();
        assert_eq!(
            got,
            [41943041, 58720359, 3588806011781223, 3591011842654386, 9228616714210784205, 9973669472204895162]
        );
    }

    #[test]
    fn splitmix_expansion_reference() {
        let mut rng = SynthRng::new(0);
        assert_eq!(
            [rng.next_u64(), rng.next_u64(), rng.next_u64()],
            [5987356902031041503, 7051070477665621255, 6633766593972829180]
        );
        let mut rng = SynthRng::new(42);
        assert_eq!(
            [rng.next_u64(), rng.next_u64(), rng.next_u64()],
            [15021278609987233951, 5881210131331364753, 18149643915985481100]
        );
    }

    #[test]
    fn uniform_bounds() {
        let lo = 0.5 * TWO_POW_M52;
        let hi = ((u64::MAX >> 12) as f64 + 0.5) * TWO_POW_M52;
        assert_eq!(lo, 2.0_f64.powi(-53));
        assert_eq!(hi, 1.0 - 2.0_f64.powi(-53));
        let mut rng = SynthRng::new(7);
        for _ in 0..10_000 {
            let u = rng.uniform_open01();
            assert!(u > 0.0 && u < 1.0);
            let v = rng.uniform(2.0, 3.0);
            assert!((2.0..3.0).contains(&v));
        }
    }

    #[test]
    fn streams_are_distinct_and_stable() {
        assert_ne!(stream_seed(1, &[0]), stream_seed(1, &[1]));
        assert_ne!(stream_seed(1, &[0, 1]), stream_seed(1, &[1, 0]));
        assert_ne!(stream_seed(1, &[0]), stream_seed(2, &[0]));
        assert_ne!(stream_seed(1, &[]), stream_seed(1, &[0]));
        let a: Vec<f64> = {
            let mut r = SynthRng::stream(9, &[3, 4]);
            (0..5).map(|_| r.standard_normal()).collect()
        };
        let b: Vec<f64> = {
            let mut r = SynthRng::stream(9, &[3, 4]);
            (0..5).map(|_| r.standard_normal()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn normal_moments() {
        let mut rng = SynthRng::new(2024);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
        // 5 standard errors
        assert!(m.abs() < 5.0 / (n as f64).sqrt());
        assert!((v - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt());
    }
}
