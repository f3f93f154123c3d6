//! Dense real tensors and the multilinear algebra built on them.
//!
//! Storage is a flat `Vec<f64>` in last-mode-fastest order (the row-major
//! generalisation): for shape `(I_1, .., I_N)` the element at zero-based
//! index `(i_1, .., i_N)` lives at `((i_1 * I_2 + i_2) * I_3 + ..) * I_N + i_N`.
//! `vectorize`, `matricize` and the CSV layout in the harness all follow this
//! order, so round trips are bit-exact.
//!
//! Mode numbers in the public API are 1-based, matching the usual notation
//! `A ×_n B`. Everything below the API boundary is 0-based.

use std::fmt;

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum TensorError {
    #[error("mode {mode} out of range for order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    #[error("mode {0} given more than once")]
    DuplicateMode(usize),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Mode sizes of a tensor. An empty shape is an order-0 scalar.
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(TensorError::InvalidShape(format!(
                "mode {} has size 0 (all sizes must be >= 1)",
                pos + 1
            )));
        }
        Ok(Shape(dims))
    }

    pub fn scalar() -> Self {
        Shape(Vec::new())
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Size of 1-based mode `n`.
    pub fn dim(&self, n: usize) -> Result<usize> {
        let m = ModeIndex::new(n, self.order())?;
        Ok(self.0[m.zero_based()])
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for k in (0..self.0.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.0[k + 1];
        }
        strides
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = TensorError;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Shape::new(v)
    }
}

impl From<Shape> for Vec<usize> {
    fn from(s: Shape) -> Self {
        s.0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "()");
        }
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join("×"))
    }
}

/// A validated 1-based mode number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeIndex(usize);

impl ModeIndex {
    pub fn new(mode: usize, order: usize) -> Result<Self> {
        if mode == 0 || mode > order {
            return Err(TensorError::ModeOutOfRange { mode, order });
        }
        Ok(ModeIndex(mode))
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn zero_based(self) -> usize {
        self.0 - 1
    }
}

/// Order-N array of `f64` with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl DenseTensor {
    /// Builds a tensor, rejecting length mismatches and non-finite entries.
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        Self::from_shape(shape, data)
    }

    pub fn from_shape(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(TensorError::InvalidShape(format!(
                "shape {} needs {} values, got {}",
                shape,
                shape.numel(),
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(pos));
        }
        Ok(DenseTensor { shape, data })
    }

    /// Internal constructor for results of finite arithmetic on valid tensors.
    pub(crate) fn from_parts(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.numel(), data.len());
        DenseTensor { shape, data }
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let n = shape.numel();
        Ok(DenseTensor {
            shape,
            data: vec![0.0; n],
        })
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::from_shape(Shape::scalar(), vec![value])
    }

    pub fn vector(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(vec![n], values)
    }

    /// Builds a matrix from rows. All rows must have equal length.
    pub fn matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(TensorError::InvalidShape("ragged matrix rows".into()));
        }
        Self::new(vec![r, c], rows.concat())
    }

    /// Entries drawn uniformly from `[lo, hi)`.
    pub fn random_uniform<R: rand::Rng + ?Sized>(dims: Vec<usize>, lo: f64, hi: f64, rng: &mut R) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let data = (0..shape.numel()).map(|_| rng.gen_range(lo..hi)).collect();
        Ok(DenseTensor { shape, data })
    }

    /// Entries drawn from a standard normal distribution.
    pub fn random_normal<R: rand::Rng + ?Sized>(dims: Vec<usize>, rng: &mut R) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let data = (0..shape.numel())
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        Ok(DenseTensor { shape, data })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut t = Self::zeros(vec![n, n])?;
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        Ok(t)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn order(&self) -> usize {
        self.shape.order()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Element at a zero-based multi-index.
    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub(crate) fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.order());
        index
            .iter()
            .zip(self.dims())
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    /// Matrix entry `(row, col)`, zero-based. Only meaningful for order 2.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dims()[1] + col]
    }

    pub fn rows(&self) -> usize {
        self.dims()[0]
    }

    pub fn cols(&self) -> usize {
        self.dims()[1]
    }

    /// Same values, new shape with the same element count.
    pub fn reshape(&self, dims: Vec<usize>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.numel() {
            return Err(TensorError::InvalidShape(format!(
                "cannot reshape {} into {}",
                self.shape, shape
            )));
        }
        Ok(DenseTensor {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        DenseTensor::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.require_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(DenseTensor::from_parts(self.shape.clone(), data))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn require_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(TensorError::DimensionMismatch(format!(
                "shapes {} and {} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute elementwise difference. Shapes must agree.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.require_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Matrix transpose (order 2 only).
    pub fn transpose(&self) -> Result<Self> {
        self.require_order(2, "transpose")?;
        permute(self, &[1, 0])
    }

    /// Plain matrix product of two order-2 tensors.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.require_order(2, "matmul")?;
        other.require_order(2, "matmul")?;
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(TensorError::DimensionMismatch(format!(
                "matmul {}×{} by {}×{}",
                m, k, k2, n
            )));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(DenseTensor::from_parts(Shape(vec![m, n]), out))
    }

    pub(crate) fn require_order(&self, order: usize, what: &str) -> Result<()> {
        if self.order() != order {
            return Err(TensorError::DimensionMismatch(format!(
                "{what} needs an order-{order} tensor, got shape {}",
                self.shape
            )));
        }
        Ok(())
    }
}

/// Flattens to an order-1 tensor in last-mode-fastest order.
pub fn vectorize(t: &DenseTensor) -> DenseTensor {
    DenseTensor::from_parts(Shape(vec![t.numel()]), t.data.clone())
}

/// Inverse of [`vectorize`].
pub fn tensorize(v: &DenseTensor, shape: &Shape) -> Result<DenseTensor> {
    if v.order() != 1 {
        return Err(TensorError::DimensionMismatch(format!(
            "tensorize expects an order-1 tensor, got {}",
            v.shape
        )));
    }
    if v.numel() != shape.numel() {
        return Err(TensorError::InvalidShape(format!(
            "vector of length {} cannot fill shape {}",
            v.numel(),
            shape
        )));
    }
    Ok(DenseTensor::from_parts(shape.clone(), v.data.clone()))
}

/// Reorders modes: output mode `k` is input mode `perm[k]` (zero-based).
pub fn permute(t: &DenseTensor, perm: &[usize]) -> Result<DenseTensor> {
    let order = t.order();
    if perm.len() != order {
        return Err(TensorError::DimensionMismatch(format!(
            "permutation of length {} for order-{order} tensor",
            perm.len()
        )));
    }
    let mut seen = vec![false; order];
    for &p in perm {
        if p >= order || seen[p] {
            return Err(TensorError::DimensionMismatch(format!(
                "{perm:?} is not a permutation of 0..{order}"
            )));
        }
        seen[p] = true;
    }
    let in_dims = t.dims();
    let in_strides = t.shape.strides();
    let out_dims: Vec<usize> = perm.iter().map(|&p| in_dims[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(t.numel());
    let mut idx = vec![0usize; order];
    let mut src = 0usize;
    for _ in 0..t.numel() {
        out.push(t.data[src]);
        // odometer increment over the output index
        for k in (0..order).rev() {
            idx[k] += 1;
            src += strides[k];
            if idx[k] < out_dims[k] {
                break;
            }
            src -= strides[k] * out_dims[k];
            idx[k] = 0;
        }
    }
    Ok(DenseTensor::from_parts(Shape(out_dims), out))
}

/// Mode-`n` unfolding: rows indexed by mode `n`, columns by the remaining
/// modes in their original order (last fastest).
pub fn matricize(t: &DenseTensor, n: usize) -> Result<DenseTensor> {
    let mode = ModeIndex::new(n, t.order())?.zero_based();
    let mut perm = vec![mode];
    perm.extend((0..t.order()).filter(|&k| k != mode));
    let p = permute(t, &perm)?;
    let rows = t.dims()[mode];
    let cols = t.numel() / rows;
    Ok(DenseTensor::from_parts(Shape(vec![rows, cols]), p.data))
}

/// Inverse of [`matricize`] for a target `shape`.
pub fn dematricize(m: &DenseTensor, n: usize, shape: &Shape) -> Result<DenseTensor> {
    let mode = ModeIndex::new(n, shape.order())?.zero_based();
    m.require_order(2, "dematricize")?;
    let dims = shape.dims();
    let rest: usize = dims
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != mode)
        .map(|(_, &d)| d)
        .product();
    if m.rows() != dims[mode] || m.cols() != rest {
        return Err(TensorError::DimensionMismatch(format!(
            "{} matrix cannot be folded into {} along mode {n}",
            m.shape, shape
        )));
    }
    let mut permuted_dims = vec![dims[mode]];
    permuted_dims.extend(
        dims.iter()
            .enumerate()
            .filter(|&(k, _)| k != mode)
            .map(|(_, &d)| d),
    );
    let folded = DenseTensor::from_parts(Shape(permuted_dims), m.data.clone());
    // inverse of the matricize permutation: mode 0 goes back to `mode`
    let mut inv = Vec::with_capacity(shape.order());
    for k in 0..shape.order() {
        inv.push(match k.cmp(&mode) {
            std::cmp::Ordering::Less => k + 1,
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Greater => k,
        });
    }
    permute(&folded, &inv)
}

/// Left Kronecker product of two matrices: block `(i, j)` is `a_ij · B`.
pub fn kronecker(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    a.require_order(2, "kronecker")?;
    b.require_order(2, "kronecker")?;
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    let (rows, cols) = (ar * br, ac * bc);
    let mut out = vec![0.0; rows * cols];
    for i1 in 0..ar {
        for i2 in 0..ac {
            let s = a.at(i1, i2);
            for j1 in 0..br {
                let row = i1 * br + j1;
                for j2 in 0..bc {
                    out[row * cols + i2 * bc + j2] = s * b.at(j1, j2);
                }
            }
        }
    }
    Ok(DenseTensor::from_parts(Shape(vec![rows, cols]), out))
}

/// `(n, m)`-contraction `A ×_n^m B`: sums mode `n` of `A` against mode `m`
/// of `B`. Output modes are A's surviving modes followed by B's.
pub fn contract(a: &DenseTensor, n: usize, b: &DenseTensor, m: usize) -> Result<DenseTensor> {
    let an = ModeIndex::new(n, a.order())?.zero_based();
    let bm = ModeIndex::new(m, b.order())?.zero_based();
    let k = a.dims()[an];
    if b.dims()[bm] != k {
        return Err(TensorError::DimensionMismatch(format!(
            "mode {n} of {} (size {k}) vs mode {m} of {} (size {})",
            a.shape,
            b.shape,
            b.dims()[bm]
        )));
    }
    // A as (rest × k), B as (k × rest): contraction is then a matrix product
    let mut a_perm: Vec<usize> = (0..a.order()).filter(|&x| x != an).collect();
    a_perm.push(an);
    let mut b_perm = vec![bm];
    b_perm.extend((0..b.order()).filter(|&x| x != bm));
    let ap = permute(a, &a_perm)?;
    let bp = permute(b, &b_perm)?;
    let a_rest = a.numel() / k;
    let b_rest = b.numel() / k;
    let am = DenseTensor::from_parts(Shape(vec![a_rest, k]), ap.data);
    let bmat = DenseTensor::from_parts(Shape(vec![k, b_rest]), bp.data);
    let prod = am.matmul(&bmat)?;
    let mut out_dims: Vec<usize> = a_perm[..a_perm.len() - 1]
        .iter()
        .map(|&x| a.dims()[x])
        .collect();
    out_dims.extend(b_perm[1..].iter().map(|&x| b.dims()[x]));
    Ok(DenseTensor::from_parts(Shape(out_dims), prod.data))
}

/// Mode-`n` product `A ×_n B` with `B` of shape `J × I_n`; mode `n` of the
/// result has size `J`. Equivalent to `B · A_{(n)}` refolded.
pub fn mode_n_product(a: &DenseTensor, n: usize, b: &DenseTensor) -> Result<DenseTensor> {
    let mode = ModeIndex::new(n, a.order())?.zero_based();
    b.require_order(2, "mode-n product factor")?;
    let dims = a.dims();
    let i_n = dims[mode];
    if b.cols() != i_n {
        return Err(TensorError::DimensionMismatch(format!(
            "factor {} does not act on mode {n} of size {i_n}",
            b.shape
        )));
    }
    let j = b.rows();
    let pre: usize = dims[..mode].iter().product();
    let post: usize = dims[mode + 1..].iter().product();
    let mut out = vec![0.0; pre * j * post];
    for p in 0..pre {
        let src = &a.data[p * i_n * post..(p + 1) * i_n * post];
        let dst = &mut out[p * j * post..(p + 1) * j * post];
        for jj in 0..j {
            let d = &mut dst[jj * post..(jj + 1) * post];
            for ii in 0..i_n {
                let w = b.data[jj * i_n + ii];
                let s = &src[ii * post..(ii + 1) * post];
                for (o, &x) in d.iter_mut().zip(s) {
                    *o += w * x;
                }
            }
        }
    }
    let mut out_dims = dims.to_vec();
    out_dims[mode] = j;
    Ok(DenseTensor::from_parts(Shape(out_dims), out))
}

/// Tucker product: one mode-`n` product per listed `(mode, factor)` pair,
/// applied in the given order. Modes must be distinct.
pub fn tucker_product(a: &DenseTensor, factors: &[(usize, &DenseTensor)]) -> Result<DenseTensor> {
    let mut seen = vec![false; a.order()];
    for &(n, f) in factors {
        let mode = ModeIndex::new(n, a.order())?.zero_based();
        if seen[mode] {
            return Err(TensorError::DuplicateMode(n));
        }
        seen[mode] = true;
        f.require_order(2, "Tucker factor")?;
        if f.cols() != a.dims()[mode] {
            return Err(TensorError::DimensionMismatch(format!(
                "factor {} for mode {n} of size {}",
                f.shape,
                a.dims()[mode]
            )));
        }
    }
    let mut out = a.clone();
    for &(n, f) in factors {
        out = mode_n_product(&out, n, f)?;
    }
    Ok(out)
}
