//! Counter-based random streams.
//!
//! Every random draw in the crate comes from Philox4x64-10 keyed by a
//! [`StreamKey`]. A stream is addressed by `(key, substream)` and the block
//! counter advances inside the substream, so the energy of any configuration
//! index can be regenerated without touching its neighbours, and two passes
//! over the same index range see identical values.

use rand::RngCore;
use serde::{Deserialize, Serialize};

const PHILOX_M0: u64 = 0xD2E7_470E_E14C_6C93;
const PHILOX_M1: u64 = 0xCA5A_8263_9512_1157;
const PHILOX_W0: u64 = 0x9E37_79B9_7F4A_7C15;
const PHILOX_W1: u64 = 0xBB67_AE85_84CA_A73B;
const PHILOX_ROUNDS: usize = 10;

/// Stream labels partition the key space of a replica by purpose.
pub mod label {
    /// Per-configuration energies of a replica.
    pub const ENERGY: u32 = 0;
    /// Poisson point process draws for the PD sampler.
    pub const PD_POISSON: u32 = 1;
    /// Stick-breaking draws for the PD oracle.
    pub const PD_STICK: u32 = 2;
    /// Synthetic samples used by calibration and goodness-of-fit checks.
    pub const CALIBRATION: u32 = 3;
}

/// Key of the Philox generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey(pub [u64; 2]);

impl StreamKey {
    pub fn words(&self) -> [u64; 2] {
        self.0
    }
}

/// SplitMix64 finalizer. A bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps `(master_seed, replica_id, stream_label)` to a generator key.
///
/// The layout is `[mix64(master_seed), replica_id << 32 | stream_label]`.
/// Both words are bijective in their inputs, so the mapping is injective.
/// This layout is frozen: changing it changes every simulated number.
pub fn seed_derivation(master_seed: u64, replica_id: u32, stream_label: u32) -> StreamKey {
    StreamKey([
        mix64(master_seed),
        (u64::from(replica_id) << 32) | u64::from(stream_label),
    ])
}

#[inline(always)]
fn mulhilo(a: u64, b: u64) -> (u64, u64) {
    let p = u128::from(a) * u128::from(b);
    ((p >> 64) as u64, p as u64)
}

/// The Philox4x64 bijection with 10 rounds.
#[inline]
pub fn philox4x64_10(ctr: [u64; 4], key: [u64; 2]) -> [u64; 4] {
    let mut c = ctr;
    let mut k = key;
    for round in 0..PHILOX_ROUNDS {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// A sequential view of one Philox substream.
///
/// The counter is `[block, substream, 0, 0]`; each block yields four words.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: [u64; 2],
    substream: u64,
    block: u64,
    buf: [u64; 4],
    pos: usize,
}

impl CounterRng {
    pub fn new(key: StreamKey, substream: u64) -> Self {
        Self {
            key: key.0,
            substream,
            block: 0,
            buf: [0; 4],
            pos: 4,
        }
    }

    /// Uniform draw on the open interval (0, 1) with 53 random bits.
    #[inline]
    pub fn open_unit(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    fn refill(&mut self) {
        self.buf = philox4x64_10([self.block, self.substream, 0, 0], self.key);
        self.block = self.block.wrapping_add(1);
        self.pos = 0;
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        if self.pos == 4 {
            self.refill();
        }
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
