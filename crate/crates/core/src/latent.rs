//! Latent randomness `u = (u_s, u_r)` and its canonical byte layout.
//!
//! Layout (all integers little-endian):
//!
//! * `Vec<f64>` block: `u64` element count, then each value as `f64` bits.
//! * [`UnitStream`]: tag byte `0` followed by the `u64` key, or tag byte `1`
//!   followed by a `Vec<f64>` block.
//! * [`LatentRandomness`]: the moved block in its own layout, then the fixed
//!   stream.
//!
//! Seed graphs define their own moved-block layout (see `models::graph`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::UnitStream;

/// Latent randomness of one simulation. `moved` is the fixed-shape block
/// that inner MCMC updates; `fixed` is never moved and is read positionally.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentRandomness<S> {
    pub moved: S,
    pub fixed: UnitStream,
}

pub trait CanonicalBytes: Sized {
    fn write_canonical(&self, out: &mut Vec<u8>);
    fn read_canonical(input: &mut &[u8]) -> Result<Self>;

    fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_canonical(&mut out);
        out
    }

    fn from_canonical_bytes(mut bytes: &[u8]) -> Result<Self> {
        let value = Self::read_canonical(&mut bytes)?;
        if !bytes.is_empty() {
            return Err(Error::Parse(format!("{} trailing bytes", bytes.len())));
        }
        Ok(value)
    }
}

pub(crate) fn take<'a>(input: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if input.len() < n {
        return Err(Error::Parse(format!(
            "need {n} bytes, {} remain",
            input.len()
        )));
    }
    let (head, tail) = input.split_at(n);
    *input = tail;
    Ok(head)
}

pub(crate) fn read_u64(input: &mut &[u8]) -> Result<u64> {
    let bytes = take(input, 8)?;
    Ok(u64::from_le_bytes(bytes.try_into().expect("8 bytes")))
}

impl CanonicalBytes for Vec<f64> {
    fn write_canonical(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for v in self {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }

    fn read_canonical(input: &mut &[u8]) -> Result<Self> {
        let n = read_u64(input)? as usize;
        if n > input.len() / 8 {
            return Err(Error::Parse(format!("vector length {n} exceeds input")));
        }
        (0..n)
            .map(|_| read_u64(input).map(f64::from_bits))
            .collect()
    }
}

impl CanonicalBytes for UnitStream {
    fn write_canonical(&self, out: &mut Vec<u8>) {
        match self {
            UnitStream::Keyed(key) => {
                out.push(0);
                out.extend_from_slice(&key.to_le_bytes());
            }
            UnitStream::Recorded(values) => {
                out.push(1);
                values.write_canonical(out);
            }
        }
    }

    fn read_canonical(input: &mut &[u8]) -> Result<Self> {
        match take(input, 1)?[0] {
            0 => Ok(UnitStream::Keyed(read_u64(input)?)),
            1 => Ok(UnitStream::Recorded(Vec::<f64>::read_canonical(input)?)),
            tag => Err(Error::Parse(format!("unknown stream tag {tag}"))),
        }
    }
}

impl<S: CanonicalBytes> CanonicalBytes for LatentRandomness<S> {
    fn write_canonical(&self, out: &mut Vec<u8>) {
        self.moved.write_canonical(out);
        self.fixed.write_canonical(out);
    }

    fn read_canonical(input: &mut &[u8]) -> Result<Self> {
        let moved = S::read_canonical(input)?;
        let fixed = UnitStream::read_canonical(input)?;
        Ok(Self { moved, fixed })
    }
}
