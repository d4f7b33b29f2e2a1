//! Counter-based random streams.
//!
//! Every particle owns one independent stream per noise source. A stream is a
//! Philox-2x64-10 block cipher evaluated on `(draw index, stream id)` under the
//! run seed, so the numbers a particle sees depend only on
//! `(seed, particle, source)` and never on scheduling or thread count.

use rand::RngCore;

const PHILOX_M: u64 = 0xD2B7_4407_B1CE_6E93;
const PHILOX_W: u64 = 0x9E37_79B9_7F4A_7C15;

/// The Philox-2x64 bijection with 10 rounds.
pub fn philox2x64(counter: [u64; 2], key: u64) -> [u64; 2] {
    let mut ctr = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k = k.wrapping_add(PHILOX_W);
        }
        let prod = (PHILOX_M as u128) * (ctr[0] as u128);
        let hi = (prod >> 64) as u64;
        let lo = prod as u64;
        ctr = [hi ^ k ^ ctr[1], lo];
    }
    ctr
}

/// Noise sources; each gets a disjoint stream per particle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Source {
    Brownian = 0,
    JumpTimes = 1,
    Marks = 2,
    Thinning = 3,
    /// Fixed mark stencil used for compensator quadrature.
    Stencil = 4,
    /// Probes, optimizer starts, bootstrap resampling.
    Auxiliary = 5,
    /// Frozen fast process used for invariant-measure sampling.
    Frozen = 6,
}

const SOURCE_BITS: u32 = 4;

#[derive(Debug, Clone)]
pub struct NoiseStream {
    key: u64,
    stream: u64,
    counter: u64,
    spare: Option<u64>,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            key: seed,
            stream,
            counter: 0,
            spare: None,
        }
    }

    /// Stream for `(seed, particle, source)`.
    pub fn for_particle(seed: u64, particle: u64, source: Source) -> Self {
        debug_assert!(particle < (1 << (64 - SOURCE_BITS)));
        Self::new(seed, (particle << SOURCE_BITS) | source as u64)
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Number of Philox blocks consumed so far.
    pub fn position(&self) -> u64 {
        self.counter
    }
}

impl RngCore for NoiseStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let block = philox2x64([self.counter, self.stream], self.key);
        self.counter = self.counter.wrapping_add(1);
        self.spare = Some(block[1]);
        block[0]
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
