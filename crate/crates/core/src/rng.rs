//! Seeded random streams.
//!
//! Every run has one root seed. Each consumer of randomness (a particle at a
//! given step, a resampling event, a replicate) derives its own ChaCha8
//! stream from the root seed and a key `(replicate, step, purpose, round,
//! index)`. Keys are folded with SplitMix64 finalizers, so the derived seed
//! depends only on the key and never on the order in which streams are
//! created. Serial and parallel executions therefore consume identical
//! randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StreamRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `root`, one SplitMix64 round per part.
pub fn fold_key(root: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(root ^ GOLDEN_GAMMA), |acc, &p| {
        mix64(acc ^ mix64(p.wrapping_add(GOLDEN_GAMMA)))
    })
}

/// Expands a folded key into a 32-byte ChaCha seed.
pub fn seed_bytes(key: u64) -> [u8; 32] {
    let mut out = [0u8; 32];
    let mut state = key;
    for chunk in out.chunks_exact_mut(8) {
        state = state.wrapping_add(GOLDEN_GAMMA);
        chunk.copy_from_slice(&mix64(state).to_le_bytes());
    }
    out
}

pub fn stream_from_key(key: u64) -> StreamRng {
    StreamRng::from_seed(seed_bytes(key))
}

/// What a derived stream is used for. The discriminant is part of the key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Reweight = 2,
    Resample = 3,
    Move = 4,
    Data = 5,
    Replicate = 6,
}

/// Root of the stream tree for one replicate of one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Streams {
    pub root: u64,
    pub replicate: u64,
}

impl Streams {
    pub fn new(root: u64, replicate: u64) -> Self {
        Self { root, replicate }
    }

    pub fn key(&self, step: u64, purpose: Purpose, round: u64, index: u64) -> u64 {
        fold_key(
            self.root,
            &[self.replicate, step, purpose as u64, round, index],
        )
    }

    pub fn rng(&self, step: u64, purpose: Purpose, round: u64, index: u64) -> StreamRng {
        stream_from_key(self.key(step, purpose, round, index))
    }

    /// Seed of replicate `r` under the same root: used by the harness so that
    /// replicate seeds are distinct yet reproducible.
    pub fn replicate_seed(root: u64, replicate: u64) -> u64 {
        fold_key(root, &[Purpose::Replicate as u64, replicate])
    }
}

/// A flat sequence of unit-interval draws, addressed by position.
///
/// `Keyed(k)` is the infinite counter-based stream whose draw at position `i`
/// is the top 53 bits of `mix64(k + (i + 1) * GOLDEN_GAMMA)` scaled to
/// `(0, 1)`: the SplitMix64 sequence started at `k`, with random access.
/// `Recorded` is an explicit finite list; reading past its end is an error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum UnitStream {
    Keyed(u64),
    Recorded(Vec<f64>),
}

impl UnitStream {
    pub fn empty() -> Self {
        UnitStream::Recorded(Vec::new())
    }

    #[inline]
    pub fn at(&self, position: usize) -> Result<f64> {
        match self {
            UnitStream::Keyed(key) => {
                let bits = mix64(key.wrapping_add((position as u64 + 1).wrapping_mul(GOLDEN_GAMMA)));
                // 53 random bits mapped to the open interval (0, 1).
                Ok(((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64))
            }
            UnitStream::Recorded(values) => {
                values
                    .get(position)
                    .copied()
                    .ok_or(Error::StreamExhausted {
                        position,
                        len: values.len(),
                    })
            }
        }
    }

    /// Sequential reader over the stream.
    pub fn reader(&self) -> StreamReader<'_> {
        StreamReader {
            stream: self,
            position: 0,
        }
    }

    pub fn recorded_len(&self) -> Option<usize> {
        match self {
            UnitStream::Keyed(_) => None,
            UnitStream::Recorded(v) => Some(v.len()),
        }
    }
}

pub struct StreamReader<'a> {
    stream: &'a UnitStream,
    position: usize,
}

impl StreamReader<'_> {
    #[inline]
    pub fn next_unit(&mut self) -> Result<f64> {
        let value = self.stream.at(self.position)?;
        self.position += 1;
        Ok(value)
    }

    pub fn consumed(&self) -> usize {
        self.position
    }
}
