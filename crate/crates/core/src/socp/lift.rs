//! Complex-to-real lifting. A complex vector `z = a + jb` is represented by
//! the stacked real vector `[a; b]`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{LinExpr, SocpError};
use crate::{CMatrix, CVector};

pub fn lift_complex(z: &CVector) -> DVector<f64> {
    let n = z.len();
    DVector::from_fn(2 * n, |i, _| if i < n { z[i].re } else { z[i - n].im })
}

pub fn unlift_complex(v: &[f64]) -> CVector {
    assert!(v.len().is_multiple_of(2), "lifted vector must have even length");
    let n = v.len() / 2;
    DVector::from_fn(n, |i, _| Complex64::new(v[i], v[n + i]))
}

/// `[[Re Q, -Im Q], [Im Q, Re Q]]`, so that `z^H Q z = zhat^T Qhat zhat`.
pub fn lift_hermitian_quadratic(q: &CMatrix) -> Result<DMatrix<f64>, SocpError> {
    if !q.is_square() {
        return Err(SocpError::Malformed("quadratic form must be square".into()));
    }
    let norm = q.norm();
    let asymmetry = (q - q.adjoint()).norm();
    if asymmetry > 1e-10 * norm {
        return Err(SocpError::NotHermitian { asymmetry, norm });
    }
    let n = q.nrows();
    Ok(DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let (i, j) = (r % n, c % n);
        match (r < n, c < n) {
            (true, true) | (false, false) => q[(i, j)].re,
            (true, false) => -q[(i, j)].im,
            (false, true) => q[(i, j)].im,
        }
    }))
}

/// Location of a complex decision vector inside the real variable vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexBlock {
    pub re_offset: usize,
    pub im_offset: usize,
    pub len: usize,
}

impl ComplexBlock {
    /// Real parts at `offset..offset+len`, imaginary parts right after.
    pub fn contiguous(offset: usize, len: usize) -> Self {
        Self {
            re_offset: offset,
            im_offset: offset + len,
            len,
        }
    }

    /// Entries `start..start+len` of this block.
    pub fn sub(&self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.len);
        Self {
            re_offset: self.re_offset + start,
            im_offset: self.im_offset + start,
            len,
        }
    }

    pub fn end(&self) -> usize {
        self.re_offset.max(self.im_offset) + self.len
    }

    pub fn re(&self, i: usize) -> usize {
        self.re_offset + i
    }

    pub fn im(&self, i: usize) -> usize {
        self.im_offset + i
    }

    /// Real and imaginary parts of `c^T z + constant` (no conjugation).
    pub fn product_rows(&self, coeffs: &[Complex64], constant: Complex64) -> (LinExpr, LinExpr) {
        assert_eq!(coeffs.len(), self.len);
        let mut re = LinExpr::constant(constant.re);
        let mut im = LinExpr::constant(constant.im);
        for (i, c) in coeffs.iter().enumerate() {
            if c.re != 0.0 {
                re.terms.push((self.re(i), c.re));
                im.terms.push((self.im(i), c.re));
            }
            if c.im != 0.0 {
                re.terms.push((self.im(i), -c.im));
                im.terms.push((self.re(i), c.im));
            }
        }
        (re, im)
    }

    /// `Re{g^H z}`.
    pub fn real_inner(&self, g: &[Complex64]) -> LinExpr {
        assert_eq!(g.len(), self.len);
        let mut e = LinExpr::default();
        for (i, c) in g.iter().enumerate() {
            if c.re != 0.0 {
                e.terms.push((self.re(i), c.re));
            }
            if c.im != 0.0 {
                e.terms.push((self.im(i), c.im));
            }
        }
        e
    }

    /// The real and imaginary parts of a single entry as plain variables.
    pub fn entry_rows(&self, i: usize, scale: f64) -> (LinExpr, LinExpr) {
        (LinExpr::var(self.re(i), scale), LinExpr::var(self.im(i), scale))
    }

    pub fn extract(&self, x: &[f64]) -> CVector {
        DVector::from_fn(self.len, |i, _| Complex64::new(x[self.re(i)], x[self.im(i)]))
    }

    pub fn write(&self, z: &CVector, x: &mut [f64]) {
        for i in 0..self.len {
            x[self.re(i)] = z[i].re;
            x[self.im(i)] = z[i].im;
        }
    }
}
