//! Dense third-order tensors and the matrix algebra around them.
//!
//! Storage is column-major with the first index varying fastest, so the
//! flat buffer of a [`Tensor3`] is exactly the column-major buffer of its
//! mode-1 unfolding. Unfoldings order the remaining modes ascending with the
//! earlier mode varying fastest, which makes
//! `unfold(⟦G; U1, U2, U3⟧, 1) = U1 · unfold(G, 1) · (U3 ⊗ U2)ᵀ`.
//!
//! The first-difference operators are applied as stencils and never
//! materialized.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// One of the three tensor modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    First,
    Second,
    Third,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::First, Mode::Second, Mode::Third];

    /// Zero-based axis index.
    pub fn axis(self) -> usize {
        match self {
            Mode::First => 0,
            Mode::Second => 1,
            Mode::Third => 2,
        }
    }

    /// Parses a one-based mode number.
    pub fn from_number(k: usize) -> Result<Self> {
        match k {
            1 => Ok(Mode::First),
            2 => Ok(Mode::Second),
            3 => Ok(Mode::Third),
            _ => Err(Error::InvalidMode(k)),
        }
    }

    pub fn number(self) -> usize {
        self.axis() + 1
    }

    /// The two other modes in ascending order.
    pub fn others(self) -> (Mode, Mode) {
        match self {
            Mode::First => (Mode::Second, Mode::Third),
            Mode::Second => (Mode::First, Mode::Third),
            Mode::Third => (Mode::First, Mode::Second),
        }
    }
}

/// Uniform access to the flat value buffer of tensors and matrices.
pub trait Entries {
    fn entries(&self) -> &[f64];
    fn entries_mut(&mut self) -> &mut [f64];
}

impl Entries for Matrix {
    fn entries(&self) -> &[f64] {
        self.as_slice()
    }

    fn entries_mut(&mut self) -> &mut [f64] {
        self.as_mut_slice()
    }
}

/// Dense real tensor of order three.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Entries for Tensor3 {
    fn entries(&self) -> &[f64] {
        &self.data
    }

    fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

fn check_dims(dims: [usize; 3]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::dims(format!("tensor dims must be positive, got {dims:?}")));
    }
    Ok(())
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self { dims, data: vec![0.0; dims.iter().product()] })
    }

    pub fn from_elem(dims: [usize; 3], value: f64) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self { dims, data: vec![value; dims.iter().product()] })
    }

    /// Builds a tensor from `f(i1, i2, i3)` with zero-based indices.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        check_dims(dims)?;
        let mut data = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f(i, j, k));
                }
            }
        }
        Ok(Self { dims, data })
    }

    /// Wraps a buffer in storage order (first index fastest).
    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::dims(format!("expected {n} values for dims {dims:?}, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn dim(&self, mode: Mode) -> usize {
        self.dims[mode.axis()]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    pub fn inner(&self, other: &Tensor3) -> Result<f64> {
        self.same_dims(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn same_dims(&self, other: &Tensor3) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::dims(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3 { dims: self.dims, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor3, f: impl Fn(f64, f64) -> f64) -> Result<Tensor3> {
        self.same_dims(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor3 { dims: self.dims, data })
    }

    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Tensor3 {
        self.map(|v| c * v)
    }

    /// `self += c · other`.
    pub fn axpy(&mut self, c: f64, other: &Tensor3) -> Result<()> {
        self.same_dims(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    /// Mode-k unfolding, a `D_k × ∏_{l≠k} D_l` matrix.
    pub fn unfold(&self, mode: Mode) -> Matrix {
        let [d0, d1, d2] = self.dims;
        match mode {
            Mode::First => Matrix::from_column_slice(d0, d1 * d2, &self.data),
            Mode::Second => {
                let mut m = Matrix::zeros(d1, d0 * d2);
                for k in 0..d2 {
                    for j in 0..d1 {
                        for i in 0..d0 {
                            m[(j, i + d0 * k)] = self.get(i, j, k);
                        }
                    }
                }
                m
            }
            Mode::Third => DMatrixView::from_slice(&self.data, d0 * d1, d2).transpose(),
        }
    }

    /// Inverse of [`Tensor3::unfold`].
    pub fn fold(m: &Matrix, mode: Mode, dims: [usize; 3]) -> Result<Tensor3> {
        check_dims(dims)?;
        let [d0, d1, d2] = dims;
        let expected = match mode {
            Mode::First => (d0, d1 * d2),
            Mode::Second => (d1, d0 * d2),
            Mode::Third => (d2, d0 * d1),
        };
        if m.shape() != expected {
            return Err(Error::dims(format!(
                "cannot fold {:?} matrix along mode {} into {dims:?}",
                m.shape(),
                mode.number()
            )));
        }
        Ok(match mode {
            Mode::First => Tensor3 { dims, data: m.as_slice().to_vec() },
            Mode::Second => {
                let mut t = Tensor3 { dims, data: vec![0.0; d0 * d1 * d2] };
                for k in 0..d2 {
                    for j in 0..d1 {
                        for i in 0..d0 {
                            t.set(i, j, k, m[(j, i + d0 * k)]);
                        }
                    }
                }
                t
            }
            Mode::Third => Tensor3 { dims, data: m.transpose().as_slice().to_vec() },
        })
    }

    /// Mode-n product `self ×_n a`, with `a` of shape `m × D_n`.
    pub fn mode_product(&self, a: &Matrix, mode: Mode) -> Result<Tensor3> {
        let [d0, d1, d2] = self.dims;
        let dn = self.dims[mode.axis()];
        if a.ncols() != dn || a.nrows() == 0 {
            return Err(Error::dims(format!(
                "mode-{} product needs a matrix with {dn} columns, got {:?}",
                mode.number(),
                a.shape()
            )));
        }
        let m = a.nrows();
        let mut dims = self.dims;
        dims[mode.axis()] = m;
        let mut out = vec![0.0; dims.iter().product()];
        match mode {
            Mode::First => {
                let x = DMatrixView::from_slice(&self.data, d0, d1 * d2);
                DMatrixViewMut::from_slice(&mut out, m, d1 * d2).gemm(1.0, a, &x, 0.0);
            }
            Mode::Second => {
                let at = a.transpose();
                let (src, dst) = (d0 * d1, d0 * m);
                for k in 0..d2 {
                    let x = DMatrixView::from_slice(&self.data[k * src..(k + 1) * src], d0, d1);
                    DMatrixViewMut::from_slice(&mut out[k * dst..(k + 1) * dst], d0, m).gemm(1.0, &x, &at, 0.0);
                }
            }
            Mode::Third => {
                let x = DMatrixView::from_slice(&self.data, d0 * d1, d2);
                DMatrixViewMut::from_slice(&mut out, d0 * d1, m).gemm(1.0, &x, &a.transpose(), 0.0);
            }
        }
        Ok(Tensor3 { dims, data: out })
    }

    /// Mode-n product with the transpose of `a`, i.e. `self ×_n aᵀ`.
    pub fn mode_product_transposed(&self, a: &Matrix, mode: Mode) -> Result<Tensor3> {
        self.mode_product(&a.transpose(), mode)
    }
}

pub fn frobenius_norm<E: Entries + ?Sized>(x: &E) -> f64 {
    x.entries().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Number of nonzero entries.
pub fn l0_count<E: Entries + ?Sized>(x: &E) -> usize {
    x.entries().iter().filter(|v| **v != 0.0).count()
}

/// Number of nonzero rows.
pub fn l20_count(m: &Matrix) -> usize {
    m.row_iter().filter(|row| row.iter().any(|v| *v != 0.0)).count()
}

pub fn kronecker(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// `⟦G; U1, U2, U3⟧ = G ×1 U1 ×2 U2 ×3 U3`.
pub fn tucker_reconstruct(core: &Tensor3, factors: [&Matrix; 3]) -> Result<Tensor3> {
    for mode in Mode::ALL {
        let u = factors[mode.axis()];
        if u.ncols() != core.dim(mode) {
            return Err(Error::dims(format!(
                "factor {} has {} columns but core mode size is {}",
                mode.number(),
                u.ncols(),
                core.dim(mode)
            )));
        }
    }
    core.mode_product(factors[0], Mode::First)?
        .mode_product(factors[1], Mode::Second)?
        .mode_product(factors[2], Mode::Third)
}

/// `X ×1 U1ᵀ ×2 U2ᵀ ×3 U3ᵀ`, the core of `X` in the given bases.
pub fn project_onto_factors(x: &Tensor3, factors: [&Matrix; 3]) -> Result<Tensor3> {
    x.mode_product_transposed(factors[0], Mode::First)?
        .mode_product_transposed(factors[1], Mode::Second)?
        .mode_product_transposed(factors[2], Mode::Third)
}

/// Index set of observed entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationMask {
    dims: [usize; 3],
    observed: Vec<bool>,
}

impl ObservationMask {
    pub fn full(dims: [usize; 3]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self { dims, observed: vec![true; dims.iter().product()] })
    }

    pub fn empty(dims: [usize; 3]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self { dims, observed: vec![false; dims.iter().product()] })
    }

    /// Membership flags in tensor storage order.
    pub fn from_flags(dims: [usize; 3], observed: Vec<bool>) -> Result<Self> {
        check_dims(dims)?;
        if observed.len() != dims.iter().product::<usize>() {
            return Err(Error::dims(format!("mask length {} for dims {dims:?}", observed.len())));
        }
        Ok(Self { dims, observed })
    }

    pub fn from_fn(dims: [usize; 3], f: impl Fn(usize, usize, usize) -> bool) -> Result<Self> {
        let t = Tensor3::from_fn(dims, |i, j, k| if f(i, j, k) { 1.0 } else { 0.0 })?;
        Ok(Self::from_nonzero(&t))
    }

    /// Zero-based index triples.
    pub fn from_triples(dims: [usize; 3], triples: impl IntoIterator<Item = (usize, usize, usize)>) -> Result<Self> {
        let mut mask = Self::empty(dims)?;
        for (i, j, k) in triples {
            if i >= dims[0] || j >= dims[1] || k >= dims[2] {
                return Err(Error::dims(format!("index ({i},{j},{k}) outside {dims:?}")));
            }
            mask.observed[i + dims[0] * (j + dims[1] * k)] = true;
        }
        Ok(mask)
    }

    /// Entries where `t` is nonzero.
    pub fn from_nonzero(t: &Tensor3) -> Self {
        Self { dims: t.dims(), observed: t.as_slice().iter().map(|v| *v != 0.0).collect() }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn flags(&self) -> &[bool] {
        &self.observed
    }

    pub fn contains(&self, i: usize, j: usize, k: usize) -> bool {
        self.observed[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    pub fn count(&self) -> usize {
        self.observed.iter().filter(|b| **b).count()
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.observed.len() as f64
    }

    pub fn complement(&self) -> Self {
        Self { dims: self.dims, observed: self.observed.iter().map(|b| !b).collect() }
    }

    pub fn intersect(&self, other: &ObservationMask) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::dims(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        let observed = self.observed.iter().zip(&other.observed).map(|(a, b)| *a && *b).collect();
        Ok(Self { dims: self.dims, observed })
    }

    /// 0/1 indicator tensor.
    pub fn to_tensor(&self) -> Tensor3 {
        let data = self.observed.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
        Tensor3 { dims: self.dims, data }
    }
}

/// `(X)_Ω`: keeps observed entries, zeroes the rest.
pub fn project_observed(x: &Tensor3, mask: &ObservationMask) -> Result<Tensor3> {
    if x.dims() != mask.dims() {
        return Err(Error::dims(format!("tensor {:?} vs mask {:?}", x.dims(), mask.dims())));
    }
    let data = x.data.iter().zip(&mask.observed).map(|(v, o)| if *o { *v } else { 0.0 }).collect();
    Ok(Tensor3 { dims: x.dims, data })
}

/// `T·M` for the `(n−1)×n` first-difference matrix `T` with rows `[.. 1, −1 ..]`.
pub fn toeplitz_diff(m: &Matrix) -> Result<Matrix> {
    let n = m.nrows();
    if n < 2 {
        return Err(Error::arg(format!("first difference needs at least 2 rows, got {n}")));
    }
    Ok(Matrix::from_fn(n - 1, m.ncols(), |r, c| m[(r, c)] - m[(r + 1, c)]))
}

/// `Tᵀ·M` for an `(n−1)×c` input, giving `n×c`.
pub fn toeplitz_diff_adjoint(m: &Matrix) -> Matrix {
    let n = m.nrows() + 1;
    Matrix::from_fn(n, m.ncols(), |r, c| {
        let head = if r < n - 1 { m[(r, c)] } else { 0.0 };
        let tail = if r > 0 { m[(r - 1, c)] } else { 0.0 };
        head - tail
    })
}

/// `T_l · R_[1] · T_rᵀ`, the mixed first difference of the mode-1 unfolding.
pub fn mixed_difference(r: &Tensor3) -> Result<Matrix> {
    let [d0, d1, d2] = r.dims();
    let cols = d1 * d2;
    if d0 < 2 || cols < 2 {
        return Err(Error::arg(format!("mixed difference needs a 2×2 unfolding at least, dims {:?}", r.dims())));
    }
    let x = r.as_slice();
    let mut z = Matrix::zeros(d0 - 1, cols - 1);
    for c in 0..cols - 1 {
        let (left, right) = (&x[c * d0..(c + 1) * d0], &x[(c + 1) * d0..(c + 2) * d0]);
        let out = z.column_mut(c);
        for (row, o) in out.into_iter().enumerate() {
            *o = left[row] - left[row + 1] - right[row] + right[row + 1];
        }
    }
    Ok(z)
}

/// `fold₁(T_lᵀ · W · T_r)`, the adjoint of [`mixed_difference`].
pub fn mixed_difference_adjoint(w: &Matrix, dims: [usize; 3]) -> Result<Tensor3> {
    check_dims(dims)?;
    let [d0, d1, d2] = dims;
    let cols = d1 * d2;
    if w.shape() != (d0.saturating_sub(1), cols.saturating_sub(1)) || d0 < 2 || cols < 2 {
        return Err(Error::dims(format!("difference matrix {:?} does not match dims {dims:?}", w.shape())));
    }
    // Row adjoint: B = T_lᵀ W is d0 × (cols−1).
    let b = toeplitz_diff_adjoint(w);
    let mut out = vec![0.0; d0 * cols];
    for c in 0..cols {
        let dst = &mut out[c * d0..(c + 1) * d0];
        if c < cols - 1 {
            for (o, v) in dst.iter_mut().zip(b.column(c).iter()) {
                *o += v;
            }
        }
        if c > 0 {
            for (o, v) in dst.iter_mut().zip(b.column(c - 1).iter()) {
                *o -= v;
            }
        }
    }
    Tensor3::from_vec(dims, out)
}
