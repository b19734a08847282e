//! Counter-based Gaussian source.
//!
//! A ChaCha8 keystream is selected by `(seed, stream, channel)` and every lattice mode owns a
//! fixed four-word slot at its rank in the shell order, so a draw depends only on its key and
//! slot. Balls of different radii therefore see the same values on their common modes.
//! Normals come from Box-Muller with `libm`, which keeps the bits platform independent.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Words of keystream consumed per slot (two u64 per normal pair).
const WORDS_PER_SLOT: u128 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    /// `g_n`, Schrodinger field.
    Schrodinger = 1,
    /// `h_n`, wave position.
    WavePosition = 2,
    /// `l_n`, wave velocity.
    WaveVelocity = 3,
    /// Any other use (test vectors, random tensors).
    Aux = 4,
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GaussianSampler {
    pub seed: u64,
    pub stream: u64,
}

impl GaussianSampler {
    pub fn new(seed: u64, stream: u64) -> Self {
        GaussianSampler { seed, stream }
    }

    /// Independent child sampler, e.g. one per ensemble member.
    pub fn fork(&self, i: u64) -> Self {
        GaussianSampler { seed: self.seed, stream: splitmix64(self.stream ^ splitmix64(i.wrapping_add(0x5851_f42d))) }
    }

    pub fn normals(&self, channel: Channel) -> NormalStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(splitmix64(self.stream.rotate_left(8) ^ channel as u64));
        NormalStream { rng }
    }
}

pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    /// Jumps to the slot of the given rank.
    pub fn seek(&mut self, slot: u64) {
        self.rng.set_word_pos(slot as u128 * WORDS_PER_SLOT);
    }

    /// Two independent standard normals from the current slot.
    pub fn pair(&mut self) -> (f64, f64) {
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let (s, c) = libm::sincos(2.0 * std::f64::consts::PI * u2);
        (r * c, r * s)
    }

    /// Uniform on `[0, 1)` consuming a full slot.
    pub fn uniform(&mut self) -> f64 {
        let a = self.rng.next_u64();
        self.rng.next_u64();
        (a >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slots_are_order_independent() {
        let s = GaussianSampler::new(7, 3);
        let mut seq = s.normals(Channel::Schrodinger);
        let draws: Vec<_> = (0..20).map(|_| seq.pair()).collect();
        let mut jump = s.normals(Channel::Schrodinger);
        for k in (0..20).rev() {
            jump.seek(k);
            assert_eq!(jump.pair(), draws[k as usize]);
        }
    }

    #[test]
    fn streams_and_channels_differ() {
        let s = GaussianSampler::new(7, 3);
        let a = s.normals(Channel::Schrodinger).pair();
        assert_ne!(a, s.normals(Channel::WavePosition).pair());
        assert_ne!(a, s.fork(0).normals(Channel::Schrodinger).pair());
        assert_ne!(s.fork(0), s.fork(1));
        assert_eq!(a, GaussianSampler::new(7, 3).normals(Channel::Schrodinger).pair());
    }

    #[test]
    fn moments() {
        let mut st = GaussianSampler::new(1, 1).normals(Channel::Aux);
        let m = 200_000;
        let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
        for _ in 0..m / 2 {
            let (a, b) = st.pair();
            for z in [a, b] {
                s1 += z;
                s2 += z * z;
                s4 += z * z * z * z;
            }
        }
        let mf = m as f64;
        assert!((s1 / mf).abs() < 4.0 / mf.sqrt());
        assert!((s2 / mf - 1.0).abs() < 4.0 * (2.0 / mf).sqrt());
        assert!((s4 / mf - 3.0).abs() < 4.0 * (96.0 / mf).sqrt());
    }
}
