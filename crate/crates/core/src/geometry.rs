//! Planar affine transforms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2×3 affine map `p' = A p + t`, stored row-major as
/// `[[a00, a01, tx], [a10, a11, ty]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    m: [[f64; 3]; 2],
}

impl AffineTransform {
    pub fn new(m: [[f64; 3]; 2]) -> Result<Self> {
        let t = AffineTransform { m };
        if !m.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::invalid("affine transform has non-finite entries"));
        }
        if t.determinant().abs() < 1e-12 {
            return Err(Error::invalid("affine transform is not invertible"));
        }
        Ok(t)
    }

    /// Builds from the 6 row-major coefficients used in tensor files.
    pub fn from_row_major(v: [f64; 6]) -> Result<Self> {
        Self::new([[v[0], v[1], v[2]], [v[3], v[4], v[5]]])
    }

    pub fn identity() -> Self {
        AffineTransform {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        }
    }

    /// Axis-aligned scale followed by translation.
    pub fn scale_translate(sx: f64, sy: f64, tx: f64, ty: f64) -> Result<Self> {
        Self::new([[sx, 0.0, tx], [0.0, sy, ty]])
    }

    pub fn matrix(&self) -> [[f64; 3]; 2] {
        self.m
    }

    pub fn to_row_major(&self) -> [f64; 6] {
        let m = self.m;
        [m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2]]
    }

    pub fn determinant(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        (
            m[0][0] * x + m[0][1] * y + m[0][2],
            m[1][0] * x + m[1][1] * y + m[1][2],
        )
    }

    pub fn inverse(&self) -> AffineTransform {
        let m = &self.m;
        let det = self.determinant();
        let a = m[1][1] / det;
        let b = -m[0][1] / det;
        let c = -m[1][0] / det;
        let d = m[0][0] / det;
        AffineTransform {
            m: [
                [a, b, -(a * m[0][2] + b * m[1][2])],
                [c, d, -(c * m[0][2] + d * m[1][2])],
            ],
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &AffineTransform) -> AffineTransform {
        let a = &self.m;
        let b = &other.m;
        let mut m = [[0.0; 3]; 2];
        for (r, row) in m.iter_mut().enumerate() {
            row[0] = a[r][0] * b[0][0] + a[r][1] * b[1][0];
            row[1] = a[r][0] * b[0][1] + a[r][1] * b[1][1];
            row[2] = a[r][0] * b[0][2] + a[r][1] * b[1][2] + a[r][2];
        }
        AffineTransform { m }
    }

    /// Same map followed by a translation of `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> AffineTransform {
        let mut m = self.m;
        m[0][2] += dx;
        m[1][2] += dy;
        AffineTransform { m }
    }

    pub fn approx_eq(&self, other: &AffineTransform, tol: f64) -> bool {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .all(|(a, b)| (a - b).abs() <= tol)
    }
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::identity()
    }
}
