use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config_err, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(config_err!(
                "tensor data length {} does not match shape {}x{}",
                data.len(),
                rows,
                cols
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// One-row tensor.
    pub fn row_vector(data: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Rows of `self` followed by the rows of `other`, column-wise: `[self | other]`.
    pub fn hconcat(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.rows != other.rows {
            return Err(config_err!(
                "cannot concatenate {} rows with {} rows",
                self.rows,
                other.rows
            ));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Tensor2 {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Select rows by index.
    pub fn gather_rows(&self, idx: &[usize]) -> Tensor2 {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Tensor2 {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

/// `out = input · weight + bias` for a batch of row vectors.
pub(crate) fn affine(input: &Tensor2, weight: &Tensor2, bias: &Tensor2) -> Tensor2 {
    debug_assert_eq!(input.cols(), weight.rows());
    affine_raw(input.data(), input.rows(), weight.data(), weight.cols(), bias.data())
}

/// [`affine`] over raw row-major buffers; `weight` holds `input.len() /
/// rows` rows of `n_out` entries and `bias` has `n_out` entries.
pub(crate) fn affine_raw(input: &[f64], rows: usize, weight: &[f64], n_out: usize, bias: &[f64]) -> Tensor2 {
    let n_in = if rows == 0 { 0 } else { input.len() / rows };
    assert_eq!(input.len(), rows * n_in);
    assert_eq!(weight.len(), n_in * n_out);
    assert_eq!(bias.len(), n_out);
    let mut out = Tensor2::zeros(rows, n_out);
    for b in 0..rows {
        out.row_mut(b).copy_from_slice(bias);
    }
    if rows > 0 && n_in > 0 && n_out > 0 {
        // SAFETY: every stride/extent pair below addresses only elements
        // inside the three row-major buffers, whose lengths were asserted.
        unsafe {
            matrixmultiply::dgemm(
                rows,
                n_in,
                n_out,
                1.0,
                input.as_ptr(),
                n_in as isize,
                1,
                weight.as_ptr(),
                n_out as isize,
                1,
                1.0,
                out.data_mut().as_mut_ptr(),
                n_out as isize,
                1,
            );
        }
    }
    out
}

/// `acc += aᵀ · b` where `a` is `n × p` and `b` is `n × q`.
pub(crate) fn add_at_b(a: &Tensor2, b: &Tensor2, acc: &mut Tensor2) {
    let (n, p) = a.shape();
    let q = b.cols();
    assert_eq!(b.rows(), n);
    assert_eq!(acc.shape(), (p, q));
    if n == 0 || p == 0 || q == 0 {
        return;
    }
    // SAFETY: `a` is read transposed through swapped strides; all extents
    // match the asserted shapes.
    unsafe {
        matrixmultiply::dgemm(
            p,
            n,
            q,
            1.0,
            a.data().as_ptr(),
            1,
            p as isize,
            b.data().as_ptr(),
            q as isize,
            1,
            1.0,
            acc.data_mut().as_mut_ptr(),
            q as isize,
            1,
        );
    }
}

/// `a · bᵀ` where `a` is `n × q` and `b` is `p × q`.
pub(crate) fn mul_a_bt(a: &Tensor2, b: &Tensor2) -> Tensor2 {
    let (n, q) = a.shape();
    let p = b.rows();
    assert_eq!(b.cols(), q);
    let mut out = Tensor2::zeros(n, p);
    if n == 0 || p == 0 || q == 0 {
        return out;
    }
    // SAFETY: `b` is read transposed through swapped strides.
    unsafe {
        matrixmultiply::dgemm(
            n,
            q,
            p,
            1.0,
            a.data().as_ptr(),
            q as isize,
            1,
            b.data().as_ptr(),
            1,
            q as isize,
            0.0,
            out.data_mut().as_mut_ptr(),
            p as isize,
            1,
        );
    }
    out
}

/// `y += a * x`
#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
