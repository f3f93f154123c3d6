//! Classical layers written out directly, next to their GTN special cases.
//!
//! The `*_forward` functions evaluate each architecture with explicit loops;
//! the `*_as_gtn` functions build the matching GTN layer and run
//! [`gtn_forward`]. The two paths share no arithmetic code.

use crate::graphs::{self, GraphShiftOperator};
use crate::tensor::DenseTensor;
use crate::tt::{self, TtOperator};

use super::layer::{gtn_forward, ActivationKind, DataTensorMeta, GtnLayerSpec};
use super::{GtnError, Result};

/// Gate for `W · W = W` in [`rnn_closed_form`].
pub const IDEMPOTENCY_TOLERANCE: f64 = 1e-10;

fn require_matrix(t: &DenseTensor, what: &str) -> Result<()> {
    if t.order() != 2 {
        return Err(GtnError::ShapeMismatch(format!("{what} must be a matrix, got {}", t.shape())));
    }
    Ok(())
}

/// Row-major triple loop, sums in ascending inner index.
fn naive_matmul(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    if b.rows() != k {
        return Err(GtnError::ShapeMismatch(format!("{} times {}", a.shape(), b.shape())));
    }
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a.at(i, p) * b.at(p, j);
            }
            out.push(s);
        }
    }
    Ok(DenseTensor::new(vec![m, n], out)?)
}

/// Dense layer `y = W x`.
pub fn dnn_forward(x: &DenseTensor, w: &DenseTensor) -> Result<DenseTensor> {
    require_matrix(w, "W")?;
    if x.order() != 1 || x.numel() != w.cols() {
        return Err(GtnError::ShapeMismatch(format!("W {} against x {}", w.shape(), x.shape())));
    }
    let y = (0..w.rows())
        .map(|k| {
            let mut s = 0.0;
            for j in 0..w.cols() {
                s += w.at(k, j) * x.data()[j];
            }
            s
        })
        .collect();
    Ok(DenseTensor::vector(y)?)
}

/// Dense layer as a GTN with no domain modes and one feature mode.
pub fn dnn_as_gtn(x: &DenseTensor, w: &DenseTensor) -> Result<DenseTensor> {
    let meta = DataTensorMeta::new(vec![], x.dims().to_vec())?;
    gtn_forward(x, &meta, &GtnLayerSpec::new(vec![], vec![w.clone()]))
}

/// GCN layer `Y = S X W` with `S` the renormalised adjacency and `W` of
/// shape `J × K`.
pub fn gcn_forward(x: &DenseTensor, adjacency: &DenseTensor, w: &DenseTensor) -> Result<DenseTensor> {
    require_matrix(x, "X")?;
    require_matrix(w, "W")?;
    let s = graphs::gso_gcn(adjacency)?;
    naive_matmul(&naive_matmul(s.matrix(), x)?, w)
}

/// GCN as `⟦X; S, Wᵀ⟧`.
pub fn gcn_as_gtn(x: &DenseTensor, adjacency: &DenseTensor, w: &DenseTensor) -> Result<DenseTensor> {
    require_matrix(x, "X")?;
    require_matrix(w, "W")?;
    let s = graphs::gso_gcn(adjacency)?;
    let meta = DataTensorMeta::new(vec![x.rows()], vec![x.cols()])?;
    gtn_forward(x, &meta, &GtnLayerSpec::new(vec![s], vec![w.transpose()?]))
}

/// Circular convolution `y_i = Σ_p k_p x_{(i+p) mod I}` (zero-based).
pub fn cnn_forward(x: &DenseTensor, k: &DenseTensor) -> Result<DenseTensor> {
    if x.order() != 1 || k.order() != 1 {
        return Err(GtnError::ShapeMismatch("x and k must be vectors".into()));
    }
    let (i_len, p_len) = (x.numel(), k.numel());
    if i_len <= p_len {
        return Err(GtnError::KernelTooLong { size: i_len, kernel: p_len });
    }
    let y = (0..i_len)
        .map(|i| {
            let mut s = 0.0;
            for p in 0..p_len {
                s += k.data()[p] * x.data()[(i + p) % i_len];
            }
            s
        })
        .collect();
    Ok(DenseTensor::vector(y)?)
}

/// Convolution as `⟦x; S⟧` with the circulant GSO of the kernel.
pub fn cnn_as_gtn(x: &DenseTensor, k: &DenseTensor) -> Result<DenseTensor> {
    if x.order() != 1 {
        return Err(GtnError::ShapeMismatch("x must be a vector".into()));
    }
    let s = graphs::gso_circulant(k, x.numel())?;
    let meta = DataTensorMeta::new(vec![x.numel()], vec![])?;
    gtn_forward(x, &meta, &GtnLayerSpec::new(vec![s], vec![]))
}

fn check_attention(x: &DenseTensor, wq: &DenseTensor, wk: &DenseTensor, wv: &DenseTensor, d_k: f64) -> Result<()> {
    for (t, name) in [(x, "X"), (wq, "Wq"), (wk, "Wk"), (wv, "Wv")] {
        require_matrix(t, name)?;
    }
    if wq.dims() != wk.dims() || wq.dims() != wv.dims() || wq.rows() != x.cols() {
        return Err(GtnError::ShapeMismatch(format!(
            "X {} with Wq {}, Wk {}, Wv {}",
            x.shape(),
            wq.shape(),
            wk.shape(),
            wv.shape()
        )));
    }
    if !(d_k > 0.0 && d_k.is_finite()) {
        return Err(GtnError::InvalidParameter(format!("d_k must be positive, got {d_k}")));
    }
    Ok(())
}

/// Dot-product attention `softmax((X Wq)(X Wk)ᵀ / sqrt(d_k)) X Wv`, softmax
/// taken along each row.
pub fn attention_forward(
    x: &DenseTensor,
    wq: &DenseTensor,
    wk: &DenseTensor,
    wv: &DenseTensor,
    d_k: f64,
) -> Result<DenseTensor> {
    check_attention(x, wq, wk, wv, d_k)?;
    let q = naive_matmul(x, wq)?;
    let k = naive_matmul(x, wk)?;
    let v = naive_matmul(x, wv)?;
    let n = x.rows();
    let scale = d_k.sqrt();
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        let logits: Vec<f64> = (0..n)
            .map(|j| {
                let mut s = 0.0;
                for c in 0..q.cols() {
                    s += q.at(i, c) * k.at(j, c);
                }
                s / scale
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        weights.extend(exps.iter().map(|e| e / total));
    }
    naive_matmul(&DenseTensor::new(vec![n, n], weights)?, &v)
}

/// Attention as `⟦X; S, Wvᵀ⟧` with the attention GSO.
pub fn attention_as_gtn(
    x: &DenseTensor,
    wq: &DenseTensor,
    wk: &DenseTensor,
    wv: &DenseTensor,
    d_k: f64,
) -> Result<DenseTensor> {
    check_attention(x, wq, wk, wv, d_k)?;
    let s = graphs::gso_attention(x, wq, wk, d_k)?;
    let meta = DataTensorMeta::new(vec![x.rows()], vec![x.cols()])?;
    gtn_forward(x, &meta, &GtnLayerSpec::new(vec![s], vec![wv.transpose()?]))
}

/// Linear recurrence `y_i = Wr y_{i-1} + Wx x_i` with `y_0 = 0`; rows of
/// `x` (`I × J`) are time steps, rows of the result (`I × K`) hidden states.
pub fn rnn_unrolled(x: &DenseTensor, wr: &DenseTensor, wx: &DenseTensor) -> Result<DenseTensor> {
    require_matrix(x, "X")?;
    require_matrix(wr, "Wr")?;
    require_matrix(wx, "Wx")?;
    let k = wr.rows();
    if wr.cols() != k || wx.rows() != k || wx.cols() != x.cols() {
        return Err(GtnError::ShapeMismatch(format!(
            "X {} with Wr {} and Wx {}",
            x.shape(),
            wr.shape(),
            wx.shape()
        )));
    }
    let mut prev = vec![0.0; k];
    let mut out = Vec::with_capacity(x.rows() * k);
    for i in 0..x.rows() {
        let next: Vec<f64> = (0..k)
            .map(|a| {
                let mut s = 0.0;
                for b in 0..k {
                    s += wr.at(a, b) * prev[b];
                }
                let mut t = 0.0;
                for j in 0..x.cols() {
                    t += wx.at(a, j) * x.at(i, j);
                }
                s + t
            })
            .collect();
        out.extend_from_slice(&next);
        prev = next;
    }
    Ok(DenseTensor::new(vec![x.rows(), k], out)?)
}

/// Closed-form linear RNN with recurrent weight `c · W1`, `W1` idempotent:
/// `Y = ⟦X̃; S, W1⟧ + X̃` where `X̃ = X Wxᵀ` (time-major) and `S` is the
/// time-decay GSO with coefficient `c`.
pub fn rnn_closed_form(x: &DenseTensor, w1: &DenseTensor, wx: &DenseTensor, c: f64) -> Result<DenseTensor> {
    require_matrix(x, "X")?;
    require_matrix(w1, "W1")?;
    require_matrix(wx, "Wx")?;
    let k = w1.rows();
    if w1.cols() != k || wx.rows() != k || wx.cols() != x.cols() {
        return Err(GtnError::ShapeMismatch(format!(
            "X {} with W1 {} and Wx {}",
            x.shape(),
            w1.shape(),
            wx.shape()
        )));
    }
    let residual = w1.matmul(w1)?.max_abs_diff(w1)?;
    if residual >= IDEMPOTENCY_TOLERANCE {
        return Err(GtnError::NotIdempotent(residual));
    }
    let s = graphs::gso_time_decay(x.rows(), c)?;
    let x_tilde = x.matmul(&wx.transpose()?)?;
    let meta = DataTensorMeta::new(vec![x.rows()], vec![k])?;
    let y = gtn_forward(&x_tilde, &meta, &GtnLayerSpec::new(vec![s], vec![w1.clone()]))?;
    Ok(y.add(&x_tilde)?)
}

/// `σ(tt_apply(op, x) + b)`.
pub fn tt_dense_layer(
    x: &DenseTensor,
    op: &TtOperator,
    bias: Option<&DenseTensor>,
    activation: ActivationKind,
) -> Result<DenseTensor> {
    let mut z = tt::tt_apply(op, x)?;
    if let Some(b) = bias {
        if b.numel() != z.numel() {
            return Err(GtnError::ShapeMismatch(format!(
                "bias {} for output {}",
                b.shape(),
                z.shape()
            )));
        }
        z = z.add(&b.reshape(z.dims().to_vec())?)?;
    }
    Ok(activation.apply(&z))
}

/// `σ(W x + b)` for a vector `x`.
pub fn dense_layer(
    x: &DenseTensor,
    w: &DenseTensor,
    bias: Option<&DenseTensor>,
    activation: ActivationKind,
) -> Result<DenseTensor> {
    let mut z = dnn_forward(x, w)?;
    if let Some(b) = bias {
        z = z.add(b)?;
    }
    Ok(activation.apply(&z))
}

/// `Y = (I + S) X̃`, the closed form with `W1 = I`, evaluated directly.
pub fn unnormalized_gcn(s: &GraphShiftOperator, x_tilde: &DenseTensor) -> Result<DenseTensor> {
    let n = s.size();
    let mut a = s.matrix().clone();
    for i in 0..n {
        a.data_mut()[i * n + i] += 1.0;
    }
    naive_matmul(&a, x_tilde)
}
