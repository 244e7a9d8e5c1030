//! `.ht` binary tensor files.
//!
//! Layout, all little-endian: magic `HTNS`, `u8` version (1), `u8` rank,
//! `rank × u32` dims, `6 × f64` affine transform (row-major 2×3), then the
//! `f32` values in row-major order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::AffineTransform;
use crate::heatmap::Heatmap;

pub const MAGIC: &[u8; 4] = b"HTNS";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub transform: AffineTransform,
    pub values: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, transform: AffineTransform, values: Vec<f32>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if dims.is_empty() || dims.len() > u8::MAX as usize {
            return Err(Error::invalid(format!("unsupported tensor rank {}", dims.len())));
        }
        if expected != values.len() {
            return Err(Error::invalid(format!(
                "tensor dims {dims:?} need {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Tensor {
            dims,
            transform,
            values,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 4 * self.dims.len() + 48 + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in self.transform.to_row_major() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::invalid("not a tensor file: bad magic"));
        }
        let version = cur.take(1)?[0];
        if version != VERSION {
            return Err(Error::invalid(format!("unsupported tensor file version {version}")));
        }
        let rank = cur.take(1)?[0] as usize;
        if rank == 0 {
            return Err(Error::invalid("tensor rank must be at least 1"));
        }
        let dims = (0..rank)
            .map(|_| Ok(u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut coeffs = [0.0; 6];
        for c in coeffs.iter_mut() {
            *c = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
        }
        let transform = AffineTransform::from_row_major(coeffs)?;
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::invalid("tensor dims overflow"))?;
        let payload = cur.take(count.checked_mul(4).ok_or_else(|| Error::invalid("tensor too large"))?)?;
        if cur.pos != bytes.len() {
            return Err(Error::invalid(format!(
                "{} trailing bytes after tensor payload",
                bytes.len() - cur.pos
            )));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(dims, transform, values)
    }

    /// Heatmaps held by a rank-3 (`J×H×W`) or rank-4 (`N×J×H×W`) tensor.
    pub fn heatmaps(&self) -> Result<Vec<Heatmap>> {
        let (n, j, h, w) = match self.dims[..] {
            [j, h, w] => (1, j, h, w),
            [n, j, h, w] => (n, j, h, w),
            _ => {
                return Err(Error::invalid(format!(
                    "heatmap tensors have rank 3 or 4, got dims {:?}",
                    self.dims
                )))
            }
        };
        let plane = j * h * w;
        (0..n)
            .map(|i| {
                let vals = self.values[i * plane..(i + 1) * plane]
                    .iter()
                    .map(|&v| v as f64)
                    .collect();
                Heatmap::new(j, h, w, vals, self.transform)
            })
            .collect()
    }

    /// Packs heatmaps sharing one transform; a single map is stored as rank 3.
    pub fn from_heatmaps(maps: &[Heatmap]) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::invalid("no heatmaps to store"))?;
        let (j, h, w) = (first.joints(), first.height(), first.width());
        let mut values = Vec::with_capacity(maps.len() * j * h * w);
        for m in maps {
            if (m.joints(), m.height(), m.width()) != (j, h, w) || m.transform() != first.transform() {
                return Err(Error::invalid("heatmaps in one file must share shape and transform"));
            }
            values.extend(m.values().iter().map(|&v| v as f32));
        }
        let dims = if maps.len() == 1 {
            vec![j, h, w]
        } else {
            vec![maps.len(), j, h, w]
        };
        Tensor::new(dims, *first.transform(), values)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::invalid("tensor file is truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes).map_err(|e| match e {
        Error::InvalidInput(m) => Error::InvalidInput(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    fs::write(path, tensor.to_bytes()).map_err(|e| Error::io(path, e))
}
