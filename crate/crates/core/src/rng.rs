//! Counter-based random streams.
//!
//! Every random draw in the solver comes from a ChaCha8 stream addressed by
//! `(seed, step, phase, chunk)`. A stream is a pure function of its address,
//! so results do not depend on how chunks are scheduled across threads, and
//! resuming at step `n` only needs the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::velocity::Velocity;

/// What a stream is used for; part of the stream address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Phase {
    Pairing = 0,
    Quadratic = 1,
    Bath = 2,
    Init = 3,
    Diagnostics = 4,
}

const CHUNK_BITS: u32 = 20;
const PHASE_BITS: u32 = 4;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key_from_seed(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut s = seed;
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    key
}

/// Open the stream at `(seed, step, phase, chunk)`.
pub fn stream(seed: u64, step: u64, phase: Phase, chunk: u64) -> ChaCha8Rng {
    debug_assert!(chunk < (1 << CHUNK_BITS));
    debug_assert!(step < (1 << (64 - CHUNK_BITS - PHASE_BITS)));
    let mut rng = ChaCha8Rng::from_seed(key_from_seed(seed));
    let id = (step << (CHUNK_BITS + PHASE_BITS)) | ((phase as u64) << CHUNK_BITS) | chunk;
    rng.set_stream(id);
    rng
}

/// Uniform direction on the unit sphere.
#[inline]
pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Velocity {
    let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
    let phi = std::f64::consts::TAU * rng.random::<f64>();
    let s = (1.0 - z * z).max(0.0).sqrt();
    Velocity::new(s * phi.cos(), s * phi.sin(), z)
}

/// Standard 3D Gaussian vector.
#[inline]
pub fn normal3<R: Rng + ?Sized>(rng: &mut R) -> Velocity {
    Velocity::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, 3, Phase::Bath, 2), |r, _| Some(r.random())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, 3, Phase::Bath, 2), |r, _| Some(r.random())).collect();
        assert_eq!(a, b);
        let c: u64 = stream(7, 3, Phase::Bath, 3).random();
        let d: u64 = stream(7, 4, Phase::Bath, 2).random();
        let e: u64 = stream(8, 3, Phase::Bath, 2).random();
        assert!(a[0] != c && a[0] != d && a[0] != e);
    }

    #[test]
    fn unit_vectors_have_unit_norm() {
        let mut r = stream(1, 0, Phase::Init, 0);
        for _ in 0..1000 {
            assert!((unit_vector(&mut r).norm() - 1.0).abs() < 1e-14);
        }
    }
}
