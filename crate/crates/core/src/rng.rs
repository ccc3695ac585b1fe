//! Seeded uniform streams.
//!
//! Every randomized operation in this crate consumes uniforms through
//! [`RandomStream`], and each operation documents how many it draws. That
//! makes a whole protocol run replayable from its seed.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A source of uniform variates on `[0, 1)`.
pub trait RandomStream {
    fn next_uniform(&mut self) -> f64;
}

impl<S: RandomStream + ?Sized> RandomStream for &mut S {
    fn next_uniform(&mut self) -> f64 {
        (**self).next_uniform()
    }
}

/// ChaCha8-backed stream. Uniforms use the top 53 bits of each `u64`.
#[derive(Debug, Clone)]
pub struct SeededStream {
    inner: ChaCha8Rng,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Counter-based derivation: the stream depends only on `seed` and the
    /// key words, never on how many other streams were derived before it.
    pub fn derive(seed: u64, key: &[u64]) -> Self {
        let mut state = splitmix64(seed ^ 0x6c64_705f_6d69_6e00);
        for &word in key {
            state = splitmix64(state ^ splitmix64(word));
        }
        let mut bytes = [0u8; 32];
        for chunk in bytes.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        Self {
            inner: ChaCha8Rng::from_seed(bytes),
        }
    }
}

impl RandomStream for SeededStream {
    fn next_uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Replays a fixed list of uniforms, cycling when exhausted. Useful for
/// forcing a particular branch of a sampler.
#[derive(Debug, Clone)]
pub struct ScriptedStream {
    values: Vec<f64>,
    pos: usize,
    drawn: usize,
}

impl ScriptedStream {
    pub fn new(values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "scripted stream needs at least one value");
        Self {
            values,
            pos: 0,
            drawn: 0,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(vec![value])
    }

    /// Total number of uniforms handed out so far.
    pub fn drawn(&self) -> usize {
        self.drawn
    }
}

impl RandomStream for ScriptedStream {
    fn next_uniform(&mut self) -> f64 {
        let v = self.values[self.pos];
        self.pos = (self.pos + 1) % self.values.len();
        self.drawn += 1;
        v
    }
}

/// Wraps a stream and counts draws.
#[derive(Debug)]
pub struct CountingStream<S> {
    inner: S,
    count: usize,
}

impl<S: RandomStream> CountingStream<S> {
    pub fn new(inner: S) -> Self {
        Self { inner, count: 0 }
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

impl<S: RandomStream> RandomStream for CountingStream<S> {
    fn next_uniform(&mut self) -> f64 {
        self.count += 1;
        self.inner.next_uniform()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
