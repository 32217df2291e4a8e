//! Dense tensors and the multilinear operators built on them.
//!
//! Storage is row-major: the last index varies fastest. Modes are indexed
//! from zero. The mode-`m` unfolding is the `I_m x prod_{l != m} I_l` matrix
//! whose columns enumerate the remaining indices with the lower-numbered mode
//! varying fastest.

use num_complex::Complex64;

use crate::error::{Result, TopaError};
use crate::matrix::DenseMatrix;
use crate::scalar::Scalar;

/// Largest supported tensor order.
pub const MAX_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor<S> {
    dims: Vec<usize>,
    data: Vec<S>,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.len() > MAX_ORDER {
        return Err(TopaError::ShapeMismatch(format!(
            "tensor order must be in 1..={MAX_ORDER}, got {}",
            dims.len()
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(TopaError::ShapeMismatch(format!(
            "dimensions must be positive, got {dims:?}"
        )));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| TopaError::ShapeMismatch(format!("dimension overflow for {dims:?}")))
}

/// Splits `dims` around mode `m` into (product before, I_m, product after).
#[inline]
fn split_at_mode(dims: &[usize], m: usize) -> (usize, usize, usize) {
    let left = dims[..m].iter().product();
    let right = dims[m + 1..].iter().product();
    (left, dims[m], right)
}

impl<S: Scalar> DenseTensor<S> {
    pub fn new(dims: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let n = check_dims(&dims)?;
        if data.len() != n {
            return Err(TopaError::ShapeMismatch(format!(
                "dims {dims:?} need {n} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let n = check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![S::zero(); n],
        })
    }

    /// Fills entries in storage order; `f` receives the multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> S) -> Result<Self> {
        let n = check_dims(dims)?;
        let mut idx = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            increment(&mut idx, dims);
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        idx.iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn get(&self, idx: &[usize]) -> S {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: S) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    fn check_mode(&self, m: usize) -> Result<()> {
        if m >= self.order() {
            return Err(TopaError::ModeOutOfRange {
                mode: m,
                order: self.order(),
            });
        }
        Ok(())
    }

    fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(TopaError::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// Mode-`m` unfolding.
    pub fn unfold(&self, m: usize) -> Result<DenseMatrix<S>> {
        self.check_mode(m)?;
        let rows = self.dims[m];
        let cols = self.len() / rows;
        let strides = unfold_col_strides(&self.dims, m);
        let mut out = vec![S::zero(); rows * cols];
        let mut idx = vec![0usize; self.order()];
        for &v in &self.data {
            let col: usize = idx.iter().zip(&strides).map(|(&i, &s)| i * s).sum();
            out[idx[m] * cols + col] = v;
            increment(&mut idx, &self.dims);
        }
        DenseMatrix::new(rows, cols, out)
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn fold(mat: &DenseMatrix<S>, m: usize, dims: &[usize]) -> Result<Self> {
        let n = check_dims(dims)?;
        if m >= dims.len() {
            return Err(TopaError::ModeOutOfRange {
                mode: m,
                order: dims.len(),
            });
        }
        if mat.rows() != dims[m] || mat.rows() * mat.cols() != n {
            return Err(TopaError::ShapeMismatch(format!(
                "{}x{} matrix cannot fold into {dims:?} along mode {m}",
                mat.rows(),
                mat.cols()
            )));
        }
        let strides = unfold_col_strides(dims, m);
        let cols = mat.cols();
        let mut idx = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let col: usize = idx.iter().zip(&strides).map(|(&i, &s)| i * s).sum();
            data.push(mat.data()[idx[m] * cols + col]);
            increment(&mut idx, dims);
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// `X x_m U`: replaces `I_m` by `U.rows()`.
    pub fn mode_product(&self, u: &DenseMatrix<S>, m: usize) -> Result<Self> {
        self.check_mode(m)?;
        if u.cols() != self.dims[m] {
            return Err(TopaError::ShapeMismatch(format!(
                "mode-{m} product needs {} columns, matrix is {}x{}",
                self.dims[m],
                u.rows(),
                u.cols()
            )));
        }
        let cols = u.cols();
        let ud = u.data();
        Ok(self.apply_mode(m, u.rows(), |j, i| ud[j * cols + i]))
    }

    /// `X x_m U^H`: replaces `I_m` by `U.cols()`.
    pub fn mode_product_adjoint(&self, u: &DenseMatrix<S>, m: usize) -> Result<Self> {
        self.check_mode(m)?;
        if u.rows() != self.dims[m] {
            return Err(TopaError::ShapeMismatch(format!(
                "mode-{m} adjoint product needs {} rows, matrix is {}x{}",
                self.dims[m],
                u.rows(),
                u.cols()
            )));
        }
        let cols = u.cols();
        let ud = u.data();
        Ok(self.apply_mode(m, cols, |j, i| ud[i * cols + j].conj()))
    }

    /// Shared kernel: `out[l, j, r] = sum_i coef(j, i) * x[l, i, r]`, summing `i` ascending.
    fn apply_mode(&self, m: usize, out_dim: usize, coef: impl Fn(usize, usize) -> S) -> Self {
        let (left, n, right) = split_at_mode(&self.dims, m);
        let mut out = vec![S::zero(); left * out_dim * right];
        if right == 1 {
            // Last mode: contiguous dot products, same summation order.
            let cm: Vec<S> = (0..out_dim * n).map(|k| coef(k / n, k % n)).collect();
            for (xb, ob) in self.data.chunks_exact(n).zip(out.chunks_exact_mut(out_dim)) {
                for (o, crow) in ob.iter_mut().zip(cm.chunks_exact(n)) {
                    let mut s = S::zero();
                    for (&c, &v) in crow.iter().zip(xb) {
                        s += c * v;
                    }
                    *o = s;
                }
            }
            let mut dims = self.dims.clone();
            dims[m] = out_dim;
            return Self { dims, data: out };
        }
        for l in 0..left {
            let xb = &self.data[l * n * right..(l + 1) * n * right];
            let ob = &mut out[l * out_dim * right..(l + 1) * out_dim * right];
            for j in 0..out_dim {
                let orow = &mut ob[j * right..(j + 1) * right];
                for i in 0..n {
                    let c = coef(j, i);
                    let xrow = &xb[i * right..(i + 1) * right];
                    for (o, &v) in orow.iter_mut().zip(xrow) {
                        *o += c * v;
                    }
                }
            }
        }
        let mut dims = self.dims.clone();
        dims[m] = out_dim;
        Self { dims, data: out }
    }

    /// Sequential mode products over all modes in ascending order. With
    /// `conjugate` each factor enters as `U_m^H` (projection onto the core
    /// space); otherwise as `U_m` (reconstruction).
    pub fn multi_project(&self, us: &[DenseMatrix<S>], conjugate: bool) -> Result<Self> {
        if us.len() != self.order() {
            return Err(TopaError::ShapeMismatch(format!(
                "{} factors for an order-{} tensor",
                us.len(),
                self.order()
            )));
        }
        let mut cur = self.clone();
        for (m, u) in us.iter().enumerate() {
            cur = if conjugate {
                cur.mode_product_adjoint(u, m)?
            } else {
                cur.mode_product(u, m)?
            };
        }
        Ok(cur)
    }

    /// `A_(m) B_(m)^H` for tensors that agree on every mode except `m`.
    pub fn mode_gram(&self, other: &Self, m: usize) -> Result<DenseMatrix<S>> {
        self.check_mode(m)?;
        if self.order() != other.order()
            || self
                .dims
                .iter()
                .zip(&other.dims)
                .enumerate()
                .any(|(l, (a, b))| l != m && a != b)
        {
            return Err(TopaError::ShapeMismatch(format!(
                "mode-{m} gram of {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        let (left, na, right) = split_at_mode(&self.dims, m);
        let nb = other.dims[m];
        let mut out = DenseMatrix::zeros(na, nb);
        for l in 0..left {
            let ab = &self.data[l * na * right..(l + 1) * na * right];
            let bb = &other.data[l * nb * right..(l + 1) * nb * right];
            for i in 0..na {
                let arow = &ab[i * right..(i + 1) * right];
                for r in 0..nb {
                    let brow = &bb[r * right..(r + 1) * right];
                    let s: S = arow.iter().zip(brow).map(|(&a, &b)| a * b.conj()).sum();
                    out[(i, r)] += s;
                }
            }
        }
        Ok(out)
    }

    /// `<X, Y> = sum x * conj(y)`.
    pub fn inner(&self, other: &Self) -> Result<S> {
        self.check_same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b.conj())
            .sum())
    }

    pub fn frob_norm_sq(&self) -> f64 {
        self.data.iter().map(|a| a.abs2()).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_norm_sq().sqrt()
    }

    /// `||self - other||_F^2`.
    pub fn dist_sq(&self, other: &Self) -> Result<f64> {
        self.check_same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs2())
            .sum())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self {
            dims: self.dims.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self {
            dims: self.dims.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        })
    }

    pub fn scale(&self, k: S) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&a| a * k).collect(),
        }
    }

    /// `self += k * other`.
    pub fn axpy(&mut self, k: S, other: &Self) -> Result<()> {
        self.check_same_dims(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Widens to the complex field.
    pub fn to_complex(&self) -> DenseTensor<Complex64> {
        DenseTensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| v.to_complex()).collect(),
        }
    }
}

/// Frobenius norm of a tuple of tensors.
pub fn tuple_frob_norm<S: Scalar>(xs: &[DenseTensor<S>]) -> f64 {
    xs.iter().map(|x| x.frob_norm_sq()).sum::<f64>().sqrt()
}

/// Advances a row-major multi-index.
fn increment(idx: &mut [usize], dims: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < dims[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// Column stride of each index in the mode-`m` unfolding (zero for `m` itself).
fn unfold_col_strides(dims: &[usize], m: usize) -> Vec<usize> {
    let mut strides = vec![0usize; dims.len()];
    let mut acc = 1;
    for (l, &d) in dims.iter().enumerate() {
        if l != m {
            strides[l] = acc;
            acc *= d;
        }
    }
    strides
}
