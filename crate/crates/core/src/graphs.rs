//! Graph shift operators (GSOs) and graph signal shifting.

use thiserror::Error;

use crate::tensor::{DenseTensor, Shape, TensorError};
use crate::tt;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GraphError {
    #[error("matrix must be square, got {0}")]
    NotSquare(String),

    #[error("adjacency has a negative entry at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize },

    #[error("kernel of length {kernel} is too long for a graph of {size} nodes")]
    KernelTooLong { size: usize, kernel: usize },

    #[error("decay coefficient must lie in (0, 1], got {0}")]
    InvalidDecay(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("graph inference needs at least one feature vector")]
    EmptyFeatures,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Construction recipe a GSO came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GsoKind {
    Adjacency,
    GcnNormalized,
    Circulant,
    TimeDecay,
    Attention,
    Inferred,
    Custom,
}

/// A square matrix acting on one domain mode.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphShiftOperator {
    matrix: DenseTensor,
    kind: GsoKind,
}

impl GraphShiftOperator {
    pub fn new(matrix: DenseTensor, kind: GsoKind) -> Result<Self> {
        require_square(&matrix)?;
        Ok(GraphShiftOperator { matrix, kind })
    }

    pub fn adjacency(matrix: DenseTensor) -> Result<Self> {
        Self::new(matrix, GsoKind::Adjacency)
    }

    pub fn custom(matrix: DenseTensor) -> Result<Self> {
        Self::new(matrix, GsoKind::Custom)
    }

    pub fn identity(size: usize) -> Result<Self> {
        Self::new(DenseTensor::identity(size)?, GsoKind::Custom)
    }

    pub fn matrix(&self) -> &DenseTensor {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseTensor {
        self.matrix
    }

    pub fn kind(&self) -> GsoKind {
        self.kind
    }

    /// Number of vertices.
    pub fn size(&self) -> usize {
        self.matrix.rows()
    }
}

fn require_square(m: &DenseTensor) -> Result<()> {
    if m.order() != 2 || m.rows() != m.cols() {
        return Err(GraphError::NotSquare(m.shape().to_string()));
    }
    Ok(())
}

/// Renormalised GCN operator `D̃^{-1/2} (I + A) D̃^{-1/2}` with
/// `D̃ = diag(row sums of I + A)`.
pub fn gso_gcn(adjacency: &DenseTensor) -> Result<GraphShiftOperator> {
    require_square(adjacency)?;
    let n = adjacency.rows();
    for r in 0..n {
        for c in 0..n {
            if adjacency.at(r, c) < 0.0 {
                return Err(GraphError::NegativeEntry { row: r, col: c });
            }
        }
    }
    // Ã = I + A has degree >= 1 everywhere
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|r| {
            let deg = 1.0 + (0..n).map(|c| adjacency.at(r, c)).sum::<f64>();
            1.0 / deg.sqrt()
        })
        .collect();
    let mut data = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            let a = adjacency.at(r, c) + if r == c { 1.0 } else { 0.0 };
            data[r * n + c] = inv_sqrt[r] * a * inv_sqrt[c];
        }
    }
    GraphShiftOperator::new(DenseTensor::new(vec![n, n], data)?, GsoKind::GcnNormalized)
}

/// Circulant operator `S = C ×_3^1 k` built from the convolution tensor, so
/// that `S x` is the circular convolution of `x` with kernel `k`.
pub fn gso_circulant(kernel: &DenseTensor, size: usize) -> Result<GraphShiftOperator> {
    if kernel.order() != 1 {
        return Err(GraphError::DimensionMismatch(format!(
            "kernel must be a vector, got {}",
            kernel.shape()
        )));
    }
    let p = kernel.numel();
    let c = tt::convolution_tensor(size, p).map_err(|e| match e {
        tt::TtError::KernelTooLong { size, kernel } => GraphError::KernelTooLong { size, kernel },
        other => GraphError::InvalidParameter(other.to_string()),
    })?;
    let s = crate::tensor::contract(&c, 3, kernel, 1)?;
    GraphShiftOperator::new(s, GsoKind::Circulant)
}

/// Directed time graph: `s_{i,j} = c^{i-j}` for `i > j`, zero otherwise.
pub fn gso_time_decay(size: usize, c: f64) -> Result<GraphShiftOperator> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(GraphError::InvalidDecay(c));
    }
    let mut data = vec![0.0; size * size];
    for i in 0..size {
        for j in 0..i {
            data[i * size + j] = c.powi((i - j) as i32);
        }
    }
    GraphShiftOperator::new(DenseTensor::new(vec![size, size], data)?, GsoKind::TimeDecay)
}

/// Row-wise softmax with max subtraction.
pub(crate) fn softmax_rows(m: &DenseTensor) -> DenseTensor {
    let (rows, cols) = (m.rows(), m.cols());
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &m.data()[r * cols..(r + 1) * cols];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (o, &v) in out[r * cols..(r + 1) * cols].iter_mut().zip(row) {
            *o = (v - max).exp();
            sum += *o;
        }
        for o in &mut out[r * cols..(r + 1) * cols] {
            *o /= sum;
        }
    }
    DenseTensor::from_parts(m.shape().clone(), out)
}

/// Input-dependent attention graph `softmax_rows((X Wq)(X Wk)ᵀ / sqrt(d_k))`.
///
/// `x` is `I × J`; `wq` and `wk` are `J × K`.
pub fn gso_attention(
    x: &DenseTensor,
    wq: &DenseTensor,
    wk: &DenseTensor,
    d_k: f64,
) -> Result<GraphShiftOperator> {
    if !(d_k > 0.0 && d_k.is_finite()) {
        return Err(GraphError::InvalidParameter(format!("d_k must be positive, got {d_k}")));
    }
    if x.order() != 2 || wq.order() != 2 || wk.order() != 2 {
        return Err(GraphError::DimensionMismatch("attention inputs must be matrices".into()));
    }
    if wq.dims() != wk.dims() || wq.rows() != x.cols() {
        return Err(GraphError::DimensionMismatch(format!(
            "X {} with Wq {} and Wk {}",
            x.shape(),
            wq.shape(),
            wk.shape()
        )));
    }
    let q = x.matmul(wq)?;
    let k = x.matmul(wk)?;
    let logits = q.matmul(&k.transpose()?)?.scale(1.0 / d_k.sqrt());
    GraphShiftOperator::new(softmax_rows(&logits), GsoKind::Attention)
}

/// Pairwise similarity used for graph inference.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityFunction {
    /// `exp(-‖a − b‖² / (2σ²))`
    Gaussian { sigma: f64 },
    /// `max(0, cos(a, b))`; zero vectors have similarity 0.
    CosineClamped,
}

impl SimilarityFunction {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            SimilarityFunction::Gaussian { sigma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
            SimilarityFunction::CosineClamped => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    0.0
                } else {
                    (dot / (na * nb)).max(0.0)
                }
            }
        }
    }
}

/// Edge selection after computing similarities.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sparsify {
    /// Keep each vertex's `k` strongest neighbours (ties to the lower
    /// index), then symmetrise with `max(S, Sᵀ)`.
    TopK(usize),
    /// Keep similarities `>= threshold`.
    Threshold(f64),
}

impl Default for Sparsify {
    fn default() -> Self {
        Sparsify::TopK(4)
    }
}

/// Dense similarity matrix `s_{i,j} = f(x_i, x_j)`, diagonal included.
pub fn similarity_matrix(features: &[Vec<f64>], f: SimilarityFunction) -> Result<DenseTensor> {
    if features.is_empty() {
        return Err(GraphError::EmptyFeatures);
    }
    let dim = features[0].len();
    if features.iter().any(|v| v.len() != dim) {
        return Err(GraphError::DimensionMismatch(
            "feature vectors have different lengths".into(),
        ));
    }
    if let SimilarityFunction::Gaussian { sigma } = f {
        if !(sigma > 0.0) {
            return Err(GraphError::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
    }
    let n = features.len();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            data[i * n + j] = f.eval(&features[i], &features[j]);
        }
    }
    Ok(DenseTensor::new(vec![n, n], data)?)
}

/// Infers a graph from per-vertex features.
pub fn gso_infer(
    features: &[Vec<f64>],
    f: SimilarityFunction,
    sparsify: Sparsify,
) -> Result<GraphShiftOperator> {
    let sim = similarity_matrix(features, f)?;
    let n = sim.rows();
    let mut keep = vec![0.0; n * n];
    match sparsify {
        Sparsify::TopK(k) => {
            if k == 0 {
                return Err(GraphError::InvalidParameter("top-k needs k >= 1".into()));
            }
            for i in 0..n {
                let mut cand: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                cand.sort_by(|&a, &b| sim.at(i, b).total_cmp(&sim.at(i, a)).then(a.cmp(&b)));
                for &j in cand.iter().take(k) {
                    keep[i * n + j] = sim.at(i, j);
                }
            }
            for i in 0..n {
                for j in 0..i {
                    let m = keep[i * n + j].max(keep[j * n + i]);
                    keep[i * n + j] = m;
                    keep[j * n + i] = m;
                }
            }
        }
        Sparsify::Threshold(t) => {
            if t.is_nan() || t < 0.0 {
                return Err(GraphError::InvalidParameter(format!("threshold must be >= 0, got {t}")));
            }
            for i in 0..n {
                for j in 0..n {
                    if i != j && sim.at(i, j) >= t {
                        keep[i * n + j] = sim.at(i, j);
                    }
                }
            }
        }
    }
    GraphShiftOperator::new(DenseTensor::new(vec![n, n], keep)?, GsoKind::Inferred)
}

/// Neighbourhood aggregation `Y = S X` along the first mode of `x`.
///
/// `x` may have any order ≥ 1; trailing modes are treated as signal columns.
pub fn graph_shift(s: &GraphShiftOperator, x: &DenseTensor) -> Result<DenseTensor> {
    if x.order() == 0 || x.dims()[0] != s.size() {
        return Err(GraphError::DimensionMismatch(format!(
            "GSO of size {} against signal {}",
            s.size(),
            x.shape()
        )));
    }
    let n = s.size();
    let cols = x.numel() / n;
    let mut out = vec![0.0; n * cols];
    for i in 0..n {
        let dst = &mut out[i * cols..(i + 1) * cols];
        for k in 0..n {
            let w = s.matrix().at(i, k);
            for (o, &v) in dst.iter_mut().zip(&x.data()[k * cols..(k + 1) * cols]) {
                *o += w * v;
            }
        }
    }
    Ok(DenseTensor::from_parts(Shape::new(x.dims().to_vec())?, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> DenseTensor {
        DenseTensor::matrix(rows).unwrap()
    }

    #[test]
    fn gcn_single_edge() {
        let s = gso_gcn(&m(&[vec![0.0, 1.0], vec![1.0, 0.0]])).unwrap();
        assert_eq!(s.kind(), GsoKind::GcnNormalized);
        for v in s.matrix().data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn gcn_no_edges_is_identity() {
        let s = gso_gcn(&DenseTensor::zeros(vec![3, 3]).unwrap()).unwrap();
        assert_eq!(s.matrix(), &DenseTensor::identity(3).unwrap());
    }

    #[test]
    fn gcn_errors() {
        assert!(matches!(
            gso_gcn(&DenseTensor::zeros(vec![2, 3]).unwrap()),
            Err(GraphError::NotSquare(_))
        ));
        assert_eq!(
            gso_gcn(&m(&[vec![0.0, -1.0], vec![1.0, 0.0]])),
            Err(GraphError::NegativeEntry { row: 0, col: 1 })
        );
    }

    #[test]
    fn circulant_identity_kernel() {
        let k = DenseTensor::vector(vec![1.0]).unwrap();
        let s = gso_circulant(&k, 5).unwrap();
        assert_eq!(s.matrix(), &DenseTensor::identity(5).unwrap());
        assert_eq!(
            gso_circulant(&DenseTensor::vector(vec![1.0, 2.0]).unwrap(), 2),
            Err(GraphError::KernelTooLong { size: 2, kernel: 2 })
        );
    }

    #[test]
    fn circulant_rows_shift_right() {
        let k = DenseTensor::vector(vec![1.0, 2.0, 3.0]).unwrap();
        let s = gso_circulant(&k, 6).unwrap();
        let n = 6;
        for r in 1..n {
            for c in 0..n {
                assert_eq!(s.matrix().at(r, c), s.matrix().at(r - 1, (c + n - 1) % n));
            }
        }
    }

    #[test]
    fn time_decay_values() {
        let s = gso_time_decay(3, 0.5).unwrap();
        let expect = m(&[
            vec![0.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.0],
            vec![0.25, 0.5, 0.0],
        ]);
        assert_eq!(s.matrix(), &expect);
        let ones = gso_time_decay(4, 1.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let v = ones.matrix().at(i, j);
                assert_eq!(v, if i > j { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(gso_time_decay(3, 0.0), Err(GraphError::InvalidDecay(0.0)));
        assert_eq!(gso_time_decay(3, -0.5), Err(GraphError::InvalidDecay(-0.5)));
    }

    #[test]
    fn attention_zero_query_is_uniform() {
        let x = m(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![3.0, 1.0]]);
        let wq = DenseTensor::zeros(vec![2, 2]).unwrap();
        let wk = m(&[vec![1.0, 0.3], vec![0.2, -1.0]]);
        let s = gso_attention(&x, &wq, &wk, 2.0).unwrap();
        for v in s.matrix().data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(gso_attention(&x, &DenseTensor::zeros(vec![3, 2]).unwrap(), &wk, 2.0).is_err());
    }

    #[test]
    fn attention_depends_on_scale() {
        let x = m(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![3.0, 1.0]]);
        let wq = m(&[vec![0.4, -0.1], vec![0.3, 0.8]]);
        let wk = m(&[vec![1.0, 0.3], vec![0.2, -1.0]]);
        let a = gso_attention(&x, &wq, &wk, 2.0).unwrap();
        let b = gso_attention(&x.scale(2.0), &wq, &wk, 2.0).unwrap();
        assert!(a.matrix().max_abs_diff(b.matrix()).unwrap() > 1e-3);
        for r in 0..3 {
            let sum: f64 = (0..3).map(|c| a.matrix().at(r, c)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn infer_identical_features() {
        let feats = vec![vec![1.0, 2.0]; 4];
        let sim = similarity_matrix(&feats, SimilarityFunction::Gaussian { sigma: 1.0 }).unwrap();
        assert!(sim.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn infer_two_clusters_top1() {
        let feats = vec![
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![0.0, 0.1],
            vec![10.0, 10.0],
            vec![10.1, 10.0],
            vec![10.0, 10.1],
        ];
        let g = gso_infer(&feats, SimilarityFunction::Gaussian { sigma: 0.5 }, Sparsify::TopK(1)).unwrap();
        let s = g.matrix();
        for i in 0..6 {
            assert_eq!(s.at(i, i), 0.0);
            for j in 0..6 {
                if (i < 3) != (j < 3) {
                    assert_eq!(s.at(i, j), 0.0, "cross-cluster edge {i}-{j}");
                }
                assert_eq!(s.at(i, j), s.at(j, i));
            }
            assert!((0..6).any(|j| s.at(i, j) > 0.0));
        }
    }

    #[test]
    fn infer_infinite_threshold_is_empty() {
        let feats = vec![vec![1.0], vec![1.0], vec![2.0]];
        let g = gso_infer(
            &feats,
            SimilarityFunction::CosineClamped,
            Sparsify::Threshold(f64::INFINITY),
        )
        .unwrap();
        assert!(g.matrix().data().iter().all(|&v| v == 0.0));
        assert_eq!(
            gso_infer(&[], SimilarityFunction::CosineClamped, Sparsify::TopK(1)),
            Err(GraphError::EmptyFeatures)
        );
    }

    #[test]
    fn shift_path_graph_neighbours() {
        let a = m(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ]);
        let s = GraphShiftOperator::adjacency(a).unwrap();
        let hot = DenseTensor::new(vec![3, 1], vec![0.0, 1.0, 0.0]).unwrap();
        let y = graph_shift(&s, &hot).unwrap();
        assert_eq!(y.data(), &[1.0, 0.0, 1.0]);
        let x = DenseTensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let id = GraphShiftOperator::identity(3).unwrap();
        assert_eq!(graph_shift(&id, &x).unwrap(), x);
        assert!(graph_shift(&s, &DenseTensor::zeros(vec![2, 2]).unwrap()).is_err());
    }
}
