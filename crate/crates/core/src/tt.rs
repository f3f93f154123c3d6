//! Tensor-train (matrix product operator) weights.
//!
//! A `K × J` matrix with `K = ∏ K_n`, `J = ∏ J_n` is viewed as an order-2N
//! tensor with mode pairs `(K_n, J_n)` and stored as N cores of shape
//! `R_{n-1} × K_n × J_n × R_n` with `R_0 = R_N = 1`.
//!
//! Row index `k` of the matrix maps to `(k_1, .., k_N)` and column index `j`
//! to `(j_1, .., j_N)`, both last-factor-fastest, consistent with
//! [`crate::tensor`].

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::tensor::{self, DenseTensor, Shape, TensorError};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum TtError {
    #[error("invalid tensorization plan: {0}")]
    InvalidPlan(String),

    #[error("invalid TT cores: {0}")]
    InvalidCores(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid ranks: {0}")]
    InvalidRanks(String),

    #[error("convolution tensor needs I > P >= 1, got I={size}, P={kernel}")]
    KernelTooLong { size: usize, kernel: usize },

    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, TtError>;

/// How a `K × J` matrix is split into N mode pairs.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TensorizationPlan {
    row_factors: Vec<usize>,
    col_factors: Vec<usize>,
}

impl TensorizationPlan {
    pub fn new(row_factors: Vec<usize>, col_factors: Vec<usize>) -> Result<Self> {
        if row_factors.is_empty() {
            return Err(TtError::InvalidPlan("at least one mode pair is needed".into()));
        }
        if row_factors.len() != col_factors.len() {
            return Err(TtError::InvalidPlan(format!(
                "{} row factors but {} column factors",
                row_factors.len(),
                col_factors.len()
            )));
        }
        if row_factors.iter().chain(&col_factors).any(|&f| f == 0) {
            return Err(TtError::InvalidPlan("factors must be >= 1".into()));
        }
        Ok(TensorizationPlan {
            row_factors,
            col_factors,
        })
    }

    /// Checks the plan against a target matrix size.
    pub fn for_matrix(rows: usize, cols: usize, row_factors: Vec<usize>, col_factors: Vec<usize>) -> Result<Self> {
        let plan = Self::new(row_factors, col_factors)?;
        if plan.rows() != rows || plan.cols() != cols {
            return Err(TtError::InvalidPlan(format!(
                "factors give a {}×{} matrix, expected {rows}×{cols}",
                plan.rows(),
                plan.cols()
            )));
        }
        Ok(plan)
    }

    pub fn row_factors(&self) -> &[usize] {
        &self.row_factors
    }

    pub fn col_factors(&self) -> &[usize] {
        &self.col_factors
    }

    pub fn num_cores(&self) -> usize {
        self.row_factors.len()
    }

    /// `K = ∏ K_n`.
    pub fn rows(&self) -> usize {
        self.row_factors.iter().product()
    }

    /// `J = ∏ J_n`.
    pub fn cols(&self) -> usize {
        self.col_factors.iter().product()
    }

    /// Largest useful rank at each interior bond: `min(∏_{k≤n} K_kJ_k, ∏_{k>n} K_kJ_k)`.
    pub fn max_ranks(&self) -> Vec<usize> {
        let pair: Vec<usize> = self
            .row_factors
            .iter()
            .zip(&self.col_factors)
            .map(|(k, j)| k * j)
            .collect();
        let n = pair.len();
        (1..n)
            .map(|cut| {
                let left: usize = pair[..cut].iter().product();
                let right: usize = pair[cut..].iter().product();
                left.min(right)
            })
            .collect()
    }
}

/// Rank selection for [`tt_from_matrix`].
#[derive(Debug, Clone, PartialEq)]
pub enum Truncation {
    /// Keep every singular value above roundoff (numerical rank).
    Full,
    /// Hard caps on the N-1 interior ranks.
    MaxRanks(Vec<usize>),
    /// Relative Frobenius error budget ε; each of the N-1 sweeps may discard
    /// at most `ε‖W‖_F / sqrt(N-1)`.
    Tolerance(f64),
}

/// A matrix in tensor-train / MPO form.
#[derive(Debug, Clone, PartialEq)]
pub struct TtOperator {
    cores: Vec<DenseTensor>,
}

impl TtOperator {
    pub fn new(cores: Vec<DenseTensor>) -> Result<Self> {
        if cores.is_empty() {
            return Err(TtError::InvalidCores("no cores".into()));
        }
        for (n, c) in cores.iter().enumerate() {
            if c.order() != 4 {
                return Err(TtError::InvalidCores(format!(
                    "core {} has shape {}, expected order 4",
                    n + 1,
                    c.shape()
                )));
            }
        }
        if cores[0].dims()[0] != 1 || cores[cores.len() - 1].dims()[3] != 1 {
            return Err(TtError::InvalidCores("boundary ranks must be 1".into()));
        }
        for n in 1..cores.len() {
            if cores[n - 1].dims()[3] != cores[n].dims()[0] {
                return Err(TtError::InvalidCores(format!(
                    "rank mismatch between cores {} and {}",
                    n,
                    n + 1
                )));
            }
        }
        Ok(TtOperator { cores })
    }

    /// Rank-1 operator whose every core is an identity slice.
    pub fn identity(dims: &[usize]) -> Result<Self> {
        let cores = dims
            .iter()
            .map(|&d| {
                let mut c = DenseTensor::zeros(vec![1, d, d, 1])?;
                for i in 0..d {
                    c.data_mut()[i * d + i] = 1.0;
                }
                Ok(c)
            })
            .collect::<std::result::Result<Vec<_>, TensorError>>()?;
        Self::new(cores)
    }

    pub fn cores(&self) -> &[DenseTensor] {
        &self.cores
    }

    pub fn into_cores(self) -> Vec<DenseTensor> {
        self.cores
    }

    pub fn num_cores(&self) -> usize {
        self.cores.len()
    }

    /// `(K_1, .., K_N)`.
    pub fn output_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dims()[1]).collect()
    }

    /// `(J_1, .., J_N)`.
    pub fn input_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dims()[2]).collect()
    }

    /// `(R_0, .., R_N)`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![1];
        r.extend(self.cores.iter().map(|c| c.dims()[3]));
        r
    }

    pub fn plan(&self) -> TensorizationPlan {
        TensorizationPlan {
            row_factors: self.output_dims(),
            col_factors: self.input_dims(),
        }
    }
}

/// Result of a TT fit with its achieved reconstruction error.
#[derive(Debug, Clone)]
pub struct TtFit {
    pub op: TtOperator,
    /// `‖W − reconstruct(op)‖_F`.
    pub frobenius_error: f64,
    /// Frobenius error divided by `‖W‖_F` (0 when W is zero).
    pub relative_error: f64,
}

/// Sequential-SVD (TT-SVD) decomposition of a matrix into MPO cores.
pub fn tt_from_matrix(w: &DenseTensor, plan: &TensorizationPlan, truncation: &Truncation) -> Result<TtFit> {
    if w.order() != 2 || w.rows() != plan.rows() || w.cols() != plan.cols() {
        return Err(TtError::ShapeMismatch(format!(
            "matrix {} does not match plan {}×{}",
            w.shape(),
            plan.rows(),
            plan.cols()
        )));
    }
    let n = plan.num_cores();
    let caps: Option<&[usize]> = match truncation {
        Truncation::MaxRanks(r) => {
            if r.len() != n - 1 {
                return Err(TtError::InvalidRanks(format!(
                    "{} interior ranks given for {} cores",
                    r.len(),
                    n
                )));
            }
            if r.contains(&0) {
                return Err(TtError::InvalidRanks("ranks must be >= 1".into()));
            }
            Some(r)
        }
        Truncation::Tolerance(eps) if !(*eps >= 0.0 && eps.is_finite()) => {
            return Err(TtError::InvalidRanks(format!("tolerance {eps} must be finite and >= 0")));
        }
        _ => None,
    };
    let delta = match truncation {
        Truncation::Tolerance(eps) if n > 1 => eps * w.frobenius_norm() / ((n - 1) as f64).sqrt(),
        _ => 0.0,
    };

    let rf = plan.row_factors();
    let cf = plan.col_factors();
    // (K_1..K_N, J_1..J_N) -> (K_1, J_1, .., K_N, J_N)
    let mut split = rf.to_vec();
    split.extend_from_slice(cf);
    let t = w.reshape(split)?;
    let perm: Vec<usize> = (0..n).flat_map(|k| [k, n + k]).collect();
    let interleaved = tensor::permute(&t, &perm)?;

    let mut rest = interleaved.into_data();
    let mut r_prev = 1usize;
    let mut cores = Vec::with_capacity(n);
    for k in 0..n - 1 {
        let rows = r_prev * rf[k] * cf[k];
        let cols = rest.len() / rows;
        let svd = ThinSvd::new(rows, cols, &rest);
        // numerical rank: drop values at roundoff level relative to the largest
        let cutoff = svd.values.first().copied().unwrap_or(0.0) * f64::EPSILON * rows.max(cols) as f64;
        let full = svd.values.iter().filter(|&&s| s > cutoff).count().max(1);
        let r = match truncation {
            Truncation::Full => full,
            Truncation::MaxRanks(_) => caps.unwrap()[k].min(svd.values.len()),
            Truncation::Tolerance(_) => {
                // smallest r whose discarded tail energy stays within delta
                let mut tail = 0.0;
                let mut r = svd.values.len();
                while r > 1 {
                    let next = tail + svd.values[r - 1].powi(2);
                    if next.sqrt() > delta {
                        break;
                    }
                    tail = next;
                    r -= 1;
                }
                r
            }
        };
        let mut core = Vec::with_capacity(rows * r);
        for row in 0..rows {
            core.extend((0..r).map(|c| svd.u[row * svd.rank + c]));
        }
        cores.push(DenseTensor::from_shape(Shape::new(vec![r_prev, rf[k], cf[k], r])?, core)?);
        let mut next = Vec::with_capacity(r * cols);
        for c in 0..r {
            let s = svd.values[c];
            next.extend((0..cols).map(|j| s * svd.vt[c * cols + j]));
        }
        rest = next;
        r_prev = r;
    }
    cores.push(DenseTensor::from_shape(
        Shape::new(vec![r_prev, rf[n - 1], cf[n - 1], 1])?,
        rest,
    )?);
    let op = TtOperator::new(cores)?;
    let approx = tt_reconstruct(&op)?;
    let frobenius_error = approx.sub(w)?.frobenius_norm();
    let norm = w.frobenius_norm();
    Ok(TtFit {
        op,
        frobenius_error,
        relative_error: if norm > 0.0 { frobenius_error / norm } else { 0.0 },
    })
}

/// Contracts the core chain `G1 ×_4^1 G2 ×_4^1 .. ×_4^1 GN` and folds it back
/// into the `K × J` matrix.
pub fn tt_reconstruct(op: &TtOperator) -> Result<DenseTensor> {
    let cores = op.cores();
    let mut acc = cores[0].clone();
    for core in &cores[1..] {
        let last = acc.order();
        acc = tensor::contract(&acc, last, core, 1)?;
    }
    // acc: (1, K_1, J_1, .., K_N, J_N, 1)
    let n = cores.len();
    let pairs: Vec<usize> = acc.dims()[1..acc.order() - 1].to_vec();
    let acc = acc.reshape(pairs)?;
    let mut perm: Vec<usize> = (0..n).map(|k| 2 * k).collect();
    perm.extend((0..n).map(|k| 2 * k + 1));
    let grouped = tensor::permute(&acc, &perm)?;
    let plan = op.plan();
    Ok(grouped.reshape(vec![plan.rows(), plan.cols()])?)
}

/// Intermediate states of the core-by-core sweep in [`tt_apply`].
///
/// State `n` has shape `(K_1..K_n flattened) × R_n × (J_{n+1}..J_N flattened)`.
#[derive(Debug, Clone)]
pub struct TtSweep {
    pub states: Vec<DenseTensor>,
}

fn check_input(op: &TtOperator, x: &DenseTensor) -> Result<()> {
    let j = op.plan().cols();
    let ok = x.dims() == op.input_dims().as_slice() || (x.order() == 1 && x.numel() == j);
    if !ok {
        return Err(TtError::ShapeMismatch(format!(
            "input {} does not match TT input dims {:?}",
            x.shape(),
            op.input_dims()
        )));
    }
    Ok(())
}

/// Applies the operator to `x` without forming the dense matrix.
///
/// `x` is either shaped `(J_1, .., J_N)` (output shaped `(K_1, .., K_N)`) or
/// an order-1 vector of length `J` (output a vector of length `K`).
pub fn tt_apply(op: &TtOperator, x: &DenseTensor) -> Result<DenseTensor> {
    let sweep = tt_apply_traced(op, x)?;
    let last = sweep.states.last().expect("sweep has at least one state");
    shape_output(op, x, last)
}

fn shape_output(op: &TtOperator, x: &DenseTensor, last: &DenseTensor) -> Result<DenseTensor> {
    if x.dims() == op.input_dims().as_slice() {
        Ok(last.reshape(op.output_dims())?)
    } else {
        Ok(last.reshape(vec![op.plan().rows()])?)
    }
}

/// [`tt_apply`] keeping every sweep state for the backward pass.
pub fn tt_apply_traced(op: &TtOperator, x: &DenseTensor) -> Result<TtSweep> {
    check_input(op, x)?;
    let jdims = op.input_dims();
    let mut states = Vec::with_capacity(op.num_cores() + 1);
    states.push(x.reshape(vec![1, 1, x.numel()])?);
    let mut a = 1usize;
    for (n, core) in op.cores().iter().enumerate() {
        let prev = states.last().unwrap();
        let d = core.dims();
        let (rp, kn, jn, rn) = (d[0], d[1], d[2], d[3]);
        let b: usize = jdims[n + 1..].iter().product();
        let s = prev.data();
        let g = core.data();
        let mut out = vec![0.0; a * kn * rn * b];
        for ai in 0..a {
            for r0 in 0..rp {
                for j in 0..jn {
                    let src = &s[((ai * rp + r0) * jn + j) * b..][..b];
                    for i in 0..kn {
                        for r1 in 0..rn {
                            let w = g[((r0 * kn + i) * jn + j) * rn + r1];
                            let dst = &mut out[((ai * kn + i) * rn + r1) * b..][..b];
                            for (o, &v) in dst.iter_mut().zip(src) {
                                *o += w * v;
                            }
                        }
                    }
                }
            }
        }
        a *= kn;
        states.push(DenseTensor::from_parts(Shape::new(vec![a, rn, b])?, out));
    }
    Ok(TtSweep { states })
}

/// Adjoint of [`tt_apply`]: given the sweep and `dL/dY`, returns `dL/dG_n`
/// for every core and `dL/dx` (shaped like `x`).
pub fn tt_apply_backward(
    op: &TtOperator,
    x: &DenseTensor,
    sweep: &TtSweep,
    d_out: &DenseTensor,
) -> Result<(Vec<DenseTensor>, DenseTensor)> {
    let k = op.plan().rows();
    if d_out.numel() != k {
        return Err(TtError::ShapeMismatch(format!(
            "output gradient {} for TT output of size {k}",
            d_out.shape()
        )));
    }
    let jdims = op.input_dims();
    let n_cores = op.num_cores();
    let mut grads = vec![None; n_cores];
    let mut d_state = d_out.data().to_vec();
    let mut a: usize = k;
    for n in (0..n_cores).rev() {
        let core = &op.cores()[n];
        let d = core.dims();
        let (rp, kn, jn, rn) = (d[0], d[1], d[2], d[3]);
        let b: usize = jdims[n + 1..].iter().product();
        a /= kn;
        let s = sweep.states[n].data();
        let g = core.data();
        let mut dg = vec![0.0; core.numel()];
        let mut ds = vec![0.0; a * rp * jn * b];
        for ai in 0..a {
            for r0 in 0..rp {
                for j in 0..jn {
                    let off = ((ai * rp + r0) * jn + j) * b;
                    let src = &s[off..off + b];
                    for i in 0..kn {
                        for r1 in 0..rn {
                            let gi = ((r0 * kn + i) * jn + j) * rn + r1;
                            let up = &d_state[((ai * kn + i) * rn + r1) * b..][..b];
                            let mut acc = 0.0;
                            for (&u, &v) in up.iter().zip(src) {
                                acc += u * v;
                            }
                            dg[gi] += acc;
                            let w = g[gi];
                            for (o, &u) in ds[off..off + b].iter_mut().zip(up) {
                                *o += w * u;
                            }
                        }
                    }
                }
            }
        }
        grads[n] = Some(DenseTensor::from_parts(core.shape().clone(), dg));
        d_state = ds;
    }
    let dx = DenseTensor::from_parts(x.shape().clone(), d_state);
    Ok((grads.into_iter().map(Option::unwrap).collect(), dx))
}

/// `Σ R_{n-1} K_n J_n R_n`, the number of stored TT entries.
pub fn tt_param_count(op: &TtOperator) -> usize {
    op.cores().iter().map(DenseTensor::numel).sum()
}

/// TT parameter count for a plan and interior ranks without building cores.
pub fn tt_param_count_for(plan: &TensorizationPlan, interior_ranks: &[usize]) -> Result<usize> {
    let n = plan.num_cores();
    if interior_ranks.len() != n - 1 {
        return Err(TtError::InvalidRanks(format!(
            "{} interior ranks given for {} cores",
            interior_ranks.len(),
            n
        )));
    }
    let mut ranks = vec![1];
    ranks.extend_from_slice(interior_ranks);
    ranks.push(1);
    Ok((0..n)
        .map(|k| ranks[k] * plan.row_factors()[k] * plan.col_factors()[k] * ranks[k + 1])
        .sum())
}

/// `K · J`, the dense parameter count of the matrix a plan factorizes.
pub fn dense_param_count(plan: &TensorizationPlan) -> usize {
    plan.rows() * plan.cols()
}

/// Order-3 convolution tensor of shape `I × I × P`: entry `(i, j, p)` is 1
/// exactly when `j ≡ i + p (mod I)` (zero-based), i.e. the 1-based rule
/// `t_{i,(i+p-1)%I,p} = 1` with a zero remainder wrapping to `I`.
pub fn convolution_tensor(size: usize, kernel: usize) -> Result<DenseTensor> {
    if kernel == 0 || size <= kernel {
        return Err(TtError::KernelTooLong { size, kernel });
    }
    let mut t = DenseTensor::zeros(vec![size, size, kernel])?;
    let data = t.data_mut();
    for i in 0..size {
        for p in 0..kernel {
            let j = (i + p) % size;
            data[(i * size + j) * kernel + p] = 1.0;
        }
    }
    Ok(t)
}

/// The convolution tensor laid out as a matrix in binary (quantized) form.
///
/// Requires `I = 2^d` and `P = 2^e` with `e < d`. Core `k` (most significant
/// bit first) carries bit `k` of the row index `i` and, as its column
/// factor, bit `k` of `j` together with the matching bit of `p` for the
/// lowest `e` positions. Returns the matrix and its plan; its TT ranks are
/// at most 2 because `j = i + p mod 2^d` only passes a carry bit between
/// positions.
pub fn quantized_convolution(size: usize, kernel: usize) -> Result<(DenseTensor, TensorizationPlan)> {
    if kernel == 0 || size <= kernel {
        return Err(TtError::KernelTooLong { size, kernel });
    }
    if !size.is_power_of_two() || !kernel.is_power_of_two() {
        return Err(TtError::InvalidPlan(format!(
            "quantized layout needs powers of two, got I={size}, P={kernel}"
        )));
    }
    let d = size.trailing_zeros() as usize;
    let e = kernel.trailing_zeros() as usize;
    let row_factors = vec![2; d];
    let col_factors: Vec<usize> = (0..d).map(|k| if k < d - e { 2 } else { 4 }).collect();
    let plan = TensorizationPlan::for_matrix(size, size * kernel, row_factors, col_factors.clone())?;
    let cols = plan.cols();
    let mut m = DenseTensor::zeros(vec![size, cols])?;
    let data = m.data_mut();
    for i in 0..size {
        for p in 0..kernel {
            let j = (i + p) % size;
            let mut col = 0usize;
            for (k, &f) in col_factors.iter().enumerate() {
                let bit = d - 1 - k;
                let jb = (j >> bit) & 1;
                let digit = if f == 4 { jb * 2 + ((p >> bit) & 1) } else { jb };
                col = col * f + digit;
            }
            data[i * cols + col] = 1.0;
        }
    }
    Ok((m, plan))
}

/// Thin SVD of a row-major matrix, singular values descending, each singular
/// vector pair signed so the largest-magnitude entry of `u` is positive.
struct ThinSvd {
    rank: usize,
    /// rows × rank, row-major
    u: Vec<f64>,
    values: Vec<f64>,
    /// rank × cols, row-major
    vt: Vec<f64>,
}

type SvdFactors = (DMatrix<f64>, DVector<f64>, DMatrix<f64>);

/// SVD that checks `U·diag(s)·Vᵀ` against the input. The default
/// convergence test of nalgebra can stop early on exactly rank-deficient
/// matrices with repeated singular values, so on a bad residual this retries
/// on the transpose and then with a looser threshold.
fn checked_svd(m: &DMatrix<f64>) -> SvdFactors {
    let tol = 1e-10 * m.norm().max(1.0);
    let residual = |u: &DMatrix<f64>, s: &DVector<f64>, vt: &DMatrix<f64>| (u * DMatrix::from_diagonal(s) * vt - m).norm();
    let mut best: Option<(f64, SvdFactors)> = None;
    let attempts: [&dyn Fn() -> Option<SvdFactors>; 3] = [
        &|| {
            let svd = m.clone().svd(true, true);
            Some((svd.u?, svd.singular_values, svd.v_t?))
        },
        &|| {
            let svd = m.transpose().svd(true, true);
            Some((svd.v_t?.transpose(), svd.singular_values, svd.u?.transpose()))
        },
        &|| {
            let svd = m.clone().try_svd(true, true, 1e-12, 0)?;
            Some((svd.u?, svd.singular_values, svd.v_t?))
        },
    ];
    for attempt in attempts {
        if let Some((u, s, vt)) = attempt() {
            let r = residual(&u, &s, &vt);
            if r <= tol {
                return (u, s, vt);
            }
            if best.as_ref().is_none_or(|(b, _)| r < *b) {
                best = Some((r, (u, s, vt)));
            }
        }
    }
    best.expect("at least one SVD attempt returns factors").1
}

impl ThinSvd {
    fn new(rows: usize, cols: usize, data: &[f64]) -> Self {
        let m = DMatrix::from_row_slice(rows, cols, data);
        let (u, singular_values, vt) = checked_svd(&m);
        let rank = singular_values.len();
        let mut order: Vec<usize> = (0..rank).collect();
        order.sort_by(|&a, &b| singular_values[b].total_cmp(&singular_values[a]));
        let mut out_u = vec![0.0; rows * rank];
        let mut out_vt = vec![0.0; rank * cols];
        let mut values = Vec::with_capacity(rank);
        for (c, &src) in order.iter().enumerate() {
            values.push(singular_values[src]);
            let mut pivot = 0;
            for r in 0..rows {
                if u[(r, src)].abs() > u[(pivot, src)].abs() {
                    pivot = r;
                }
            }
            let sign = if u[(pivot, src)] < 0.0 { -1.0 } else { 1.0 };
            for r in 0..rows {
                out_u[r * rank + c] = sign * u[(r, src)];
            }
            for j in 0..cols {
                out_vt[c * cols + j] = sign * vt[(src, j)];
            }
        }
        ThinSvd {
            rank,
            u: out_u,
            values,
            vt: out_vt,
        }
    }
}
