//! Dense cubical tensors and their algebra.
//!
//! An order-`m`, dimension-`n` cubical tensor is stored as a flat vector of
//! `n^m` entries in linear-index order: the first index varies fastest, the
//! last slowest, so entry `(i1, ..., im)` (1-based) lives at offset
//! `(i1-1) + (i2-1)*n + ... + (im-1)*n^(m-1)`.
//!
//! The central operation is the box product
//!
//! ```text
//! c[i1, i2, ..., im] = sum_j a[i1, j, i2, ..., i(m-1)] * b[j, i2, ..., im]
//! ```
//!
//! which reduces to ordinary matrix multiplication for `m = 2` and is *not*
//! associative for `m >= 3`. All kernels compute multi-indices arithmetically
//! on the fly; no index table is ever materialized by the numerical paths.

use rayon::prelude::*;

use crate::error::{HomcError, Result};

/// Entry count below which kernels stay single-threaded.
const PAR_THRESHOLD: usize = 1 << 14;

// ---------------------------------------------------------------------------
// Shape
// ---------------------------------------------------------------------------

/// Order (number of indices) and dimension (state count per index) of a
/// cubical tensor. Both must be at least 2, and `dim^order` must be
/// addressable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    order: usize,
    dim: usize,
}

impl Shape {
    pub fn new(order: usize, dim: usize) -> Result<Self> {
        if order < 2 {
            return Err(HomcError::InvalidShape(format!(
                "order must be at least 2, got {order}"
            )));
        }
        if dim < 2 {
            return Err(HomcError::InvalidShape(format!(
                "dimension must be at least 2, got {dim}"
            )));
        }
        let exp = u32::try_from(order)
            .map_err(|_| HomcError::InvalidShape(format!("order {order} too large")))?;
        // isize::MAX is the allocation limit for a byte slice; stay well below.
        match dim.checked_pow(exp) {
            Some(count) if count <= (isize::MAX as usize) / std::mem::size_of::<f64>() => Ok(()),
            _ => Err(HomcError::InvalidShape(format!(
                "element count {dim}^{order} exceeds addressable range"
            ))),
        }?;
        Ok(Shape { order, dim })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total entry count `n^m`.
    pub fn element_count(&self) -> usize {
        self.dim.pow(self.order as u32)
    }

    /// Number of trailing index tuples `(i2, ..., im)`, i.e. `n^(m-1)`.
    pub fn trailing_count(&self) -> usize {
        self.dim.pow(self.order as u32 - 1)
    }

    /// Number of context tuples `(i3, ..., im)`, i.e. `n^(m-2)`.
    pub fn context_count(&self) -> usize {
        self.dim.pow(self.order as u32 - 2)
    }
}

// ---------------------------------------------------------------------------
// Index tuples and linear indexing
// ---------------------------------------------------------------------------

/// A tuple of 1-based state indices, each in `1..=dim`.
///
/// Full tuples have length `order`; the trailing contexts used by the chain
/// simulator have length `order - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexTuple {
    components: Vec<usize>,
}

impl IndexTuple {
    pub fn new(components: Vec<usize>, dim: usize) -> Result<Self> {
        if components.is_empty() {
            return Err(HomcError::InvalidIndex("empty index tuple".into()));
        }
        for (pos, &c) in components.iter().enumerate() {
            if c < 1 || c > dim {
                return Err(HomcError::InvalidIndex(format!(
                    "component {} at position {} outside 1..={}",
                    c,
                    pos + 1,
                    dim
                )));
            }
        }
        Ok(IndexTuple { components })
    }

    pub fn components(&self) -> &[usize] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Zero-based offset of a full index tuple under linear indexing
/// (first index fastest).
pub fn linear_offset(idx: &IndexTuple, shape: &Shape) -> Result<usize> {
    if idx.len() != shape.order() {
        return Err(HomcError::InvalidIndex(format!(
            "tuple length {} does not match order {}",
            idx.len(),
            shape.order()
        )));
    }
    let n = shape.dim();
    let mut offset = 0usize;
    let mut stride = 1usize;
    for (pos, &c) in idx.components().iter().enumerate() {
        if c < 1 || c > n {
            return Err(HomcError::InvalidIndex(format!(
                "component {} at position {} outside 1..={}",
                c,
                pos + 1,
                n
            )));
        }
        offset += (c - 1) * stride;
        stride *= n;
    }
    Ok(offset)
}

/// Inverse of [`linear_offset`].
pub fn multi_index(offset: usize, shape: &Shape) -> Result<IndexTuple> {
    if offset >= shape.element_count() {
        return Err(HomcError::InvalidIndex(format!(
            "offset {} outside 0..{}",
            offset,
            shape.element_count()
        )));
    }
    let n = shape.dim();
    let mut rem = offset;
    let mut components = Vec::with_capacity(shape.order());
    for _ in 0..shape.order() {
        components.push(rem % n + 1);
        rem /= n;
    }
    Ok(IndexTuple { components })
}

/// Full enumeration of all `n^m` index tuples.
///
/// Forward order runs the first index fastest; reversed order runs the last
/// index fastest (each forward row with its components flipped). This exists
/// for inspection and tests; it costs O(m * n^m) memory and is never called
/// by the numerical kernels, which generate indices on the fly.
pub fn index_table(shape: &Shape, reversed: bool) -> Vec<IndexTuple> {
    let count = shape.element_count();
    let mut table = Vec::with_capacity(count);
    for offset in 0..count {
        let mut idx = multi_index(offset, shape).expect("offset in range");
        if reversed {
            idx.components.reverse();
        }
        table.push(idx);
    }
    table
}

/// Zero-based offset of a trailing tuple `(i2, ..., im)` in the reversed
/// order used to expose the block structure of the mean first passage time
/// system: the last index varies fastest, so the first trailing component is
/// the most significant digit.
pub(crate) fn reverse_digits(mut forward: usize, digits: usize, base: usize) -> usize {
    let mut rev = 0usize;
    for _ in 0..digits {
        rev = rev * base + forward % base;
        forward /= base;
    }
    rev
}

// ---------------------------------------------------------------------------
// CubicalTensor
// ---------------------------------------------------------------------------

/// Dense order-`m`, dimension-`n` real tensor in linear-index layout.
/// Every entry is finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicalTensor {
    shape: Shape,
    values: Vec<f64>,
}

impl CubicalTensor {
    pub fn new(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.element_count() {
            return Err(HomcError::ShapeMismatch(format!(
                "expected {} values for order {} dim {}, got {}",
                shape.element_count(),
                shape.order(),
                shape.dim(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(HomcError::InvalidArgument(format!(
                "non-finite entry {} at offset {}",
                values[pos], pos
            )));
        }
        Ok(CubicalTensor { shape, values })
    }

    pub(crate) fn zeros(shape: Shape) -> Self {
        CubicalTensor {
            shape,
            values: vec![0.0; shape.element_count()],
        }
    }

    /// The identity tensor: 1 where `i1 == i2`, else 0. Neutral on the left
    /// of the box product (`I box A == A`), but not on the right for m >= 3.
    pub fn identity(shape: Shape) -> Self {
        let mut t = CubicalTensor::zeros(shape);
        let n = shape.dim();
        let contexts = shape.element_count() / (n * n);
        for ctx in 0..contexts {
            let base = ctx * n * n;
            for i in 0..n {
                t.values[base + i + i * n] = 1.0;
            }
        }
        t
    }

    /// Tensor with every entry equal to 1.
    pub fn ones(shape: Shape) -> Self {
        CubicalTensor {
            shape,
            values: vec![1.0; shape.element_count()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn entry(&self, idx: &IndexTuple) -> Result<f64> {
        Ok(self.values[linear_offset(idx, &self.shape)?])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Copy of the tensor with every off-diagonal entry (`i1 != i2`) zeroed.
    /// Idempotent.
    pub fn diagonal_part(&self) -> Self {
        let n = self.shape.dim();
        let mut out = CubicalTensor::zeros(self.shape);
        let contexts = self.shape.element_count() / (n * n);
        for ctx in 0..contexts {
            let base = ctx * n * n;
            for i in 0..n {
                let o = base + i + i * n;
                out.values[o] = self.values[o];
            }
        }
        out
    }

    /// Box product `self box rhs`. Shapes must agree. For `m = 2` this is the
    /// ordinary matrix product. O(n^(m+1)) multiply-adds, O(1) auxiliary
    /// memory per output entry.
    pub fn box_product(&self, rhs: &CubicalTensor) -> Result<CubicalTensor> {
        if self.shape != rhs.shape {
            return Err(HomcError::ShapeMismatch(format!(
                "box product operands differ: order {} dim {} vs order {} dim {}",
                self.shape.order(),
                self.shape.dim(),
                rhs.shape.order(),
                rhs.shape.dim()
            )));
        }
        let mut out = CubicalTensor::zeros(self.shape);
        box_product_into(self, rhs, false, out.values_mut());
        Ok(out)
    }

    /// `k`-th box power by strict left-fold accumulation
    /// `((A box A) box A) ...` with one reusable scratch tensor. The box
    /// product is not associative, so repeated squaring would be wrong.
    /// `k = 0` yields the identity tensor.
    pub fn box_power(&self, k: usize) -> CubicalTensor {
        if k == 0 {
            return CubicalTensor::identity(self.shape);
        }
        let mut current = self.clone();
        if k == 1 {
            return current;
        }
        let mut scratch = CubicalTensor::zeros(self.shape);
        for _ in 1..k {
            box_product_into(&current, self, false, scratch.values_mut());
            std::mem::swap(&mut current, &mut scratch);
        }
        current
    }

    /// Mode-`k` matricization: the `n x n^(m-1)` matrix whose column `j` is
    /// the mode-`k` fiber `A(i1, ..., i(k-1), 1..n, i(k+1), ..., im)`, with
    /// `j` enumerating the remaining indices in forward linear order.
    pub fn matricize(&self, mode: usize) -> Result<Matrix> {
        let m = self.shape.order();
        let n = self.shape.dim();
        if mode < 1 || mode > m {
            return Err(HomcError::ModeOutOfRange { mode, order: m });
        }
        let cols = self.shape.element_count() / n;
        let mut out = Matrix::zeros(n, cols);
        let low_stride = n.pow(mode as u32 - 1);
        let high_stride = low_stride * n;
        for j in 0..cols {
            let low = j % low_stride;
            let high = j / low_stride;
            let base = low + high * high_stride;
            for r in 0..n {
                out.values[j * n + r] = self.values[base + r * low_stride];
            }
        }
        Ok(out)
    }
}

/// Shared box-product kernel. With `skip_diagonal` the inner sum omits
/// `j == i1`, computing `(A - A_d) box B` without materializing `A - A_d`;
/// the ever-reaching and mean first passage recurrences are built on this.
///
/// Entries are independent and the per-entry `j`-sum is evaluated in a fixed
/// ascending order, so the parallel and sequential paths are bit-identical.
pub(crate) fn box_product_into(
    a: &CubicalTensor,
    b: &CubicalTensor,
    skip_diagonal: bool,
    out: &mut [f64],
) {
    debug_assert_eq!(a.shape, b.shape);
    debug_assert_eq!(out.len(), a.shape.element_count());
    let n = a.shape.dim();
    let head = a.shape.context_count(); // n^(m-2)
    let av = &a.values;
    let bv = &b.values;

    let entry = |o: usize| -> f64 {
        let i1 = o % n;
        let trail = o / n; // forward offset of (i2, ..., im)
        let prefix = trail % head; // forward offset of (i2, ..., i(m-1))
        let a_base = i1 + prefix * n * n;
        let b_base = trail * n;
        let mut sum = 0.0;
        for j in 0..n {
            if skip_diagonal && j == i1 {
                continue;
            }
            sum += av[a_base + j * n] * bv[b_base + j];
        }
        sum
    };

    if out.len() >= PAR_THRESHOLD {
        out.par_iter_mut()
            .enumerate()
            .for_each(|(o, slot)| *slot = entry(o));
    } else {
        for (o, slot) in out.iter_mut().enumerate() {
            *slot = entry(o);
        }
    }
}

/// Boolean positivity-pattern counterpart of the box product: an output
/// entry is true iff some `j` has both factors true. Valid as the pattern of
/// the numeric product because transition entries are nonnegative, so no
/// cancellation can occur.
pub(crate) fn bool_box_product_into(
    a: &[bool],
    b: &[bool],
    shape: &Shape,
    out: &mut [bool],
) {
    let n = shape.dim();
    let head = shape.context_count();
    for (o, slot) in out.iter_mut().enumerate() {
        let i1 = o % n;
        let trail = o / n;
        let prefix = trail % head;
        let a_base = i1 + prefix * n * n;
        let b_base = trail * n;
        let mut any = false;
        for j in 0..n {
            if a[a_base + j * n] && b[b_base + j] {
                any = true;
                break;
            }
        }
        *slot = any;
    }
}

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

/// Dense column-major matrix of finite reals. Used for matricizations, the
/// Khatri-Rao product, and the reduced-chain transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(HomcError::InvalidShape(
                "matrix dimensions must be positive".into(),
            ));
        }
        if values.len() != rows * cols {
            return Err(HomcError::ShapeMismatch(format!(
                "expected {} values for {}x{} matrix, got {}",
                rows * cols,
                rows,
                cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(HomcError::InvalidArgument(format!(
                "non-finite entry {} at offset {}",
                values[pos], pos
            )));
        }
        Ok(Matrix { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Zero-based access.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.rows && col < self.cols);
        self.values[col * self.rows + row]
    }

    pub(crate) fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[col * self.rows + row] = value;
    }

    /// `self * x` with sequential per-row accumulation.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(HomcError::ShapeMismatch(format!(
                "matvec: {} columns vs vector length {}",
                self.cols,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.rows];
        for (c, &xc) in x.iter().enumerate() {
            if xc == 0.0 {
                continue;
            }
            let col = &self.values[c * self.rows..(c + 1) * self.rows];
            for (r, v) in col.iter().enumerate() {
                y[r] += v * xc;
            }
        }
        Ok(y)
    }

    /// Columnwise Khatri-Rao product: column `j` of the result is the
    /// Kronecker product of column `j` of `a` with column `j` of `b`.
    pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
        if a.cols != b.cols {
            return Err(HomcError::ShapeMismatch(format!(
                "khatri-rao: column counts differ ({} vs {})",
                a.cols, b.cols
            )));
        }
        let rows = a.rows * b.rows;
        let mut out = Matrix::zeros(rows, a.cols);
        for j in 0..a.cols {
            for p in 0..a.rows {
                let ap = a.get(p, j);
                if ap == 0.0 {
                    continue;
                }
                for q in 0..b.rows {
                    out.values[j * rows + p * b.rows + q] = ap * b.get(q, j);
                }
            }
        }
        Ok(out)
    }

    /// Mode-`k` tensorization, the exact inverse of
    /// [`CubicalTensor::matricize`]. The order is inferred from the column
    /// count, which must be an exact power of the row count.
    pub fn tensorize(&self, mode: usize) -> Result<CubicalTensor> {
        let n = self.rows;
        if n < 2 {
            return Err(HomcError::InvalidShape(format!(
                "tensorize: row count {n} must be at least 2"
            )));
        }
        let mut order = 1usize;
        let mut rem = self.cols;
        while rem > 1 {
            if rem % n != 0 {
                return Err(HomcError::ShapeMismatch(format!(
                    "tensorize: column count {} is not a power of row count {}",
                    self.cols, n
                )));
            }
            rem /= n;
            order += 1;
        }
        if order < 2 {
            return Err(HomcError::InvalidShape(format!(
                "tensorize: {}x{} matrix implies order {order} < 2",
                self.rows, self.cols
            )));
        }
        if mode < 1 || mode > order {
            return Err(HomcError::ModeOutOfRange { mode, order });
        }
        let shape = Shape::new(order, n)?;
        let mut out = CubicalTensor::zeros(shape);
        let low_stride = n.pow(mode as u32 - 1);
        let high_stride = low_stride * n;
        for o in 0..shape.element_count() {
            let low = o % low_stride;
            let r = (o / low_stride) % n;
            let high = o / high_stride;
            out.values[o] = self.values[(low + high * low_stride) * n + r];
        }
        Ok(out)
    }
}
