//! Binary parameter container.
//!
//! Layout (little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 8     | magic `DIMEXNET` |
//! | 4     | format version (u32) |
//! | 4     | scalar width in bytes (u32, 4 or 8) |
//! | 8 x 3 | `d`, `layers`, `width` (u64) |
//! | 8     | timestep index `k` (u64) |
//! | 8     | time `t_k` (f64) |
//! | 8     | parameter count (u64) |
//! | rest  | parameters in [`Layout`](super::Layout) block order |

use std::path::Path;

use super::network::{NetworkParams, NetworkShape};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: [u8; 8] = *b"DIMEXNET";
pub const VERSION: u32 = 1;
const HEADER: usize = 8 + 4 + 4 + 24 + 8 + 8 + 8;

/// One snapshot `(k, t_k, theta^k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub k: usize,
    pub t: f64,
    pub params: NetworkParams<T>,
}

impl<T: Real> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let s = self.params.shape;
        let mut out = Vec::with_capacity(HEADER + self.params.len() * T::BYTES);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(T::BYTES as u32).to_le_bytes());
        for v in [s.d, s.layers, s.width, self.k] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.t.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for &v in &self.params.values {
            v.write_le(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::decode(bytes, false)
    }

    /// Like [`from_bytes`](Self::from_bytes) but accepts either stored width
    /// and converts the parameters to `T`.
    pub fn from_bytes_converting(bytes: &[u8]) -> Result<Self> {
        Self::decode(bytes, true)
    }

    fn decode(bytes: &[u8], convert: bool) -> Result<Self> {
        if bytes.len() < HEADER {
            return Err(Error::Checkpoint(format!("truncated header ({} bytes)", bytes.len())));
        }
        if bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()) as usize;
        let version = u32_at(8);
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let width_bytes = u32_at(12) as usize;
        if !convert && width_bytes != T::BYTES {
            return Err(Error::Checkpoint(format!(
                "stored scalars are {width_bytes} bytes, expected {} ({})",
                T::BYTES,
                T::DTYPE
            )));
        }
        let shape = NetworkShape::new(u64_at(16), u64_at(24), u64_at(32))?;
        let k = u64_at(40);
        let t = f64::from_le_bytes(bytes[48..56].try_into().unwrap());
        let count = u64_at(56);
        if count != shape.param_count() {
            return Err(Error::ParamCount { expected: shape.param_count(), found: count });
        }
        let body = &bytes[HEADER..];
        if body.len() != count * width_bytes {
            return Err(Error::Checkpoint(format!("body has {} bytes, expected {}", body.len(), count * width_bytes)));
        }
        let values = match width_bytes {
            w if w == T::BYTES => body.chunks_exact(w).map(T::read_le).collect(),
            4 => body.chunks_exact(4).map(|c| T::of(f32::read_le(c) as f64)).collect(),
            8 => body.chunks_exact(8).map(|c| T::of(f64::read_le(c))).collect(),
            w => return Err(Error::Checkpoint(format!("unsupported scalar width {w}"))),
        };
        Ok(Self { k, t, params: NetworkParams::from_values(shape, values)? })
    }

    /// Loads a checkpoint of either precision, converting to `T`.
    pub fn load_converting(path: &Path) -> Result<Self> {
        Self::from_bytes_converting(&std::fs::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample<T: Real>() -> Checkpoint<T> {
        let shape = NetworkShape::new(3, 2, 5).unwrap();
        Checkpoint { k: 7, t: 0.14, params: NetworkParams::xavier(shape, 21) }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c64 = sample::<f64>();
        assert_eq!(Checkpoint::from_bytes(&c64.to_bytes()).unwrap(), c64);
        let c32 = sample::<f32>();
        let back = Checkpoint::<f32>::from_bytes(&c32.to_bytes()).unwrap();
        assert!(back.params.values.iter().zip(&c32.params.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn single_precision_widens_exactly() {
        let c32 = sample::<f32>();
        let wide = Checkpoint::<f64>::from_bytes_converting(&c32.to_bytes()).unwrap();
        assert_eq!((wide.k, wide.t), (c32.k, c32.t));
        assert!(wide.params.values.iter().zip(&c32.params.values).all(|(a, b)| *a == *b as f64));
        let c64 = sample::<f64>();
        assert_eq!(Checkpoint::<f64>::from_bytes_converting(&c64.to_bytes()).unwrap(), c64);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("step.bin");
        let c = sample::<f64>();
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = sample::<f64>().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::<f64>::from_bytes(&bad).is_err());
        assert!(Checkpoint::<f64>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::<f32>::from_bytes(&bytes).is_err());
        let mut wrong_count = bytes.clone();
        wrong_count[56] ^= 1;
        assert!(matches!(Checkpoint::<f64>::from_bytes(&wrong_count), Err(Error::ParamCount { .. })));
        let mut nan = bytes;
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(Checkpoint::<f64>::from_bytes(&nan).is_err());
    }
}
