//! Base-2 Sobol sequence with optional hash-based nested uniform (Owen)
//! scrambling.

use super::sobol_table::{DIMS, POLY, VINIT};
use crate::ann::Mat;
use crate::error::{Error, Result};
use crate::rng::{derive, mix64};

const BITS: usize = 32;

#[derive(Debug, Clone)]
pub struct Sobol {
    d: usize,
    /// Direction numbers `v[dim][bit]`, left-aligned in 32 bits.
    v: Vec<[u32; BITS]>,
    /// Per-dimension scramble keys.
    keys: Option<Vec<u32>>,
}

impl Sobol {
    pub fn new(d: usize, scramble: Option<u64>) -> Result<Self> {
        if d == 0 || d > DIMS {
            return Err(Error::Unsupported(format!("Sobol dimension {d} (table holds 1..={DIMS})")));
        }
        let v = (0..d).map(direction_numbers).collect();
        let keys = scramble.map(|s| (0..d as u64).map(|j| derive(s, &[j]) as u32).collect());
        Ok(Self { d, v, keys })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Raw 32-bit coordinates of point `i` (Gray-code order).
    pub fn point_bits(&self, i: u64, out: &mut [u32]) {
        let g = i ^ (i >> 1);
        for (j, o) in out.iter_mut().enumerate().take(self.d) {
            let mut x = 0u32;
            let mut bits = g;
            let mut b = 0;
            while bits != 0 {
                if bits & 1 == 1 {
                    x ^= self.v[j][b];
                }
                bits >>= 1;
                b += 1;
            }
            *o = match &self.keys {
                Some(k) => owen_scramble(x, k[j]),
                None => x,
            };
        }
    }

    /// Points `start .. start + n` in `[0, 1)^d`, row-major. Scrambled points
    /// are shifted by half a cell so they never touch the boundary.
    pub fn unit(&self, start: u64, n: usize) -> Vec<f64> {
        let scale = 1.0 / (1u64 << BITS) as f64;
        let shift = if self.keys.is_some() { 0.5 } else { 0.0 };
        let mut out = Vec::with_capacity(n * self.d);
        let mut buf = vec![0u32; self.d];
        for i in 0..n as u64 {
            self.point_bits(start + i, &mut buf);
            out.extend(buf.iter().map(|&x| (x as f64 + shift) * scale));
        }
        out
    }
}

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut m = [0u32; BITS];
    if dim == 0 {
        m = [1; BITS];
    } else {
        let p = POLY[dim];
        let s = (32 - p.leading_zeros() - 1) as usize;
        m[..s].copy_from_slice(&VINIT[dim][..s]);
        for j in s..BITS {
            let mut next = m[j - s];
            for k in 0..s {
                if (p >> (s - 1 - k)) & 1 == 1 {
                    next ^= m[j - k - 1] << (k + 1);
                }
            }
            m[j] = next;
        }
    }
    let mut v = [0u32; BITS];
    for j in 0..BITS {
        v[j] = m[j] << (BITS - 1 - j);
    }
    v
}

/// Nested uniform scramble by a Laine–Karras style hash on the bit-reversed value.
#[inline]
fn owen_scramble(x: u32, key: u32) -> u32 {
    let mut v = x.reverse_bits();
    v ^= v.wrapping_mul(0x3d20_adea);
    v = v.wrapping_add(key);
    v = v.wrapping_mul((key >> 16) | 1);
    v ^= v.wrapping_mul(0x0552_6c56);
    v ^= v.wrapping_mul(0x53a2_2864);
    v.reverse_bits()
}

/// First `n` points of the (optionally scrambled) sequence scaled to `[0, x_max]^d`.
pub fn sobol_samples(n: usize, d: usize, x_max: f64, seed: u64, scramble: bool) -> Result<Mat<f64>> {
    if n == 0 {
        return Err(Error::config("training.samples", "must be at least 1"));
    }
    let s = Sobol::new(d, scramble.then(|| mix64(seed)))?;
    Ok(Mat::from_vec(n, d, s.unit(0, n).into_iter().map(|u| u * x_max).collect()))
}
