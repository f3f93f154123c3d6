use crate::graphs::GraphShiftOperator;
use crate::tensor::{self, DenseTensor, Shape};

use super::{GtnError, Result};

/// Output nonlinearity of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    #[default]
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    /// Softmax over each fibre of the last mode.
    SoftmaxLastMode,
}

impl ActivationKind {
    pub fn apply(self, z: &DenseTensor) -> DenseTensor {
        match self {
            ActivationKind::Identity => z.clone(),
            ActivationKind::Relu => z.map(|v| v.max(0.0)),
            ActivationKind::Tanh => z.map(f64::tanh),
            ActivationKind::Sigmoid => z.map(sigmoid),
            ActivationKind::SoftmaxLastMode => {
                let last = z.dims().last().copied().unwrap_or(1);
                let rows = z.numel() / last;
                let m = DenseTensor::from_parts(Shape::new(vec![rows, last]).expect("non-zero dims"), z.data().to_vec());
                let s = crate::graphs::softmax_rows(&m);
                DenseTensor::from_parts(z.shape().clone(), s.into_data())
            }
        }
    }

    /// Pulls `dL/dy` back through the activation. `z` is the pre-activation
    /// and `y = self.apply(z)`.
    pub fn backward(self, z: &DenseTensor, y: &DenseTensor, dy: &DenseTensor) -> DenseTensor {
        let data: Vec<f64> = match self {
            ActivationKind::Identity => dy.data().to_vec(),
            ActivationKind::Relu => z
                .data()
                .iter()
                .zip(dy.data())
                .map(|(&zv, &g)| if zv > 0.0 { g } else { 0.0 })
                .collect(),
            ActivationKind::Tanh => y
                .data()
                .iter()
                .zip(dy.data())
                .map(|(&yv, &g)| g * (1.0 - yv * yv))
                .collect(),
            ActivationKind::Sigmoid => y
                .data()
                .iter()
                .zip(dy.data())
                .map(|(&yv, &g)| g * yv * (1.0 - yv))
                .collect(),
            ActivationKind::SoftmaxLastMode => {
                let last = z.dims().last().copied().unwrap_or(1);
                let mut out = vec![0.0; z.numel()];
                for (f, o) in out.chunks_mut(last).enumerate() {
                    let yf = &y.data()[f * last..(f + 1) * last];
                    let gf = &dy.data()[f * last..(f + 1) * last];
                    let dot: f64 = yf.iter().zip(gf).map(|(a, b)| a * b).sum();
                    for ((o, &yv), &g) in o.iter_mut().zip(yf).zip(gf) {
                        *o = yv * (g - dot);
                    }
                }
                out
            }
        };
        DenseTensor::from_parts(z.shape().clone(), data)
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Split of a data tensor's modes into N domain modes followed by M feature
/// modes.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DataTensorMeta {
    domain_dims: Vec<usize>,
    feature_dims: Vec<usize>,
}

impl DataTensorMeta {
    pub fn new(domain_dims: Vec<usize>, feature_dims: Vec<usize>) -> Result<Self> {
        if domain_dims.iter().chain(&feature_dims).any(|&d| d == 0) {
            return Err(GtnError::ShapeMismatch("mode sizes must be >= 1".into()));
        }
        Ok(DataTensorMeta {
            domain_dims,
            feature_dims,
        })
    }

    pub fn n_domain_modes(&self) -> usize {
        self.domain_dims.len()
    }

    pub fn m_feature_modes(&self) -> usize {
        self.feature_dims.len()
    }

    pub fn domain_dims(&self) -> &[usize] {
        &self.domain_dims
    }

    pub fn feature_dims(&self) -> &[usize] {
        &self.feature_dims
    }

    /// All mode sizes, domain modes first.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = self.domain_dims.clone();
        d.extend_from_slice(&self.feature_dims);
        d
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.dims()).expect("validated in new")
    }
}

/// One GTN layer: a GSO per domain mode, a `K_m × J_m` weight per feature
/// mode, an optional bias over the output shape and an activation.
#[derive(Debug, Clone, PartialEq)]
pub struct GtnLayerSpec {
    pub domain_gsos: Vec<GraphShiftOperator>,
    pub feature_weights: Vec<DenseTensor>,
    pub bias: Option<DenseTensor>,
    pub activation: ActivationKind,
}

impl GtnLayerSpec {
    pub fn new(domain_gsos: Vec<GraphShiftOperator>, feature_weights: Vec<DenseTensor>) -> Self {
        GtnLayerSpec {
            domain_gsos,
            feature_weights,
            bias: None,
            activation: ActivationKind::Identity,
        }
    }

    pub fn with_bias(mut self, bias: DenseTensor) -> Self {
        self.bias = Some(bias);
        self
    }

    pub fn with_activation(mut self, activation: ActivationKind) -> Self {
        self.activation = activation;
        self
    }

    /// `I_1 × .. × I_N × K_1 × .. × K_M`.
    pub fn output_dims(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.domain_gsos.iter().map(GraphShiftOperator::size).collect();
        d.extend(self.feature_weights.iter().map(DenseTensor::rows));
        d
    }

    /// Checks the layer against an input layout.
    pub fn validate(&self, meta: &DataTensorMeta) -> Result<()> {
        if self.domain_gsos.len() != meta.n_domain_modes() {
            return Err(GtnError::ShapeMismatch(format!(
                "{} GSOs for {} domain modes",
                self.domain_gsos.len(),
                meta.n_domain_modes()
            )));
        }
        if self.feature_weights.len() != meta.m_feature_modes() {
            return Err(GtnError::ShapeMismatch(format!(
                "{} weights for {} feature modes",
                self.feature_weights.len(),
                meta.m_feature_modes()
            )));
        }
        for (n, (s, &i)) in self.domain_gsos.iter().zip(meta.domain_dims()).enumerate() {
            if s.size() != i {
                return Err(GtnError::ShapeMismatch(format!(
                    "GSO {} has size {} but domain mode has size {i}",
                    n + 1,
                    s.size()
                )));
            }
        }
        for (m, (w, &j)) in self.feature_weights.iter().zip(meta.feature_dims()).enumerate() {
            if w.order() != 2 || w.cols() != j {
                return Err(GtnError::ShapeMismatch(format!(
                    "weight {} has shape {} but feature mode has size {j}",
                    m + 1,
                    w.shape()
                )));
            }
        }
        if let Some(b) = &self.bias {
            if b.dims() != self.output_dims().as_slice() {
                return Err(GtnError::ShapeMismatch(format!(
                    "bias {} does not match output {:?}",
                    b.shape(),
                    self.output_dims()
                )));
            }
        }
        Ok(())
    }
}

fn check_input(x: &DenseTensor, meta: &DataTensorMeta) -> Result<()> {
    if x.dims() != meta.dims().as_slice() {
        return Err(GtnError::ShapeMismatch(format!(
            "input {} does not match layout {:?}",
            x.shape(),
            meta.dims()
        )));
    }
    Ok(())
}

/// Tucker product part of the layer, before bias and activation.
pub fn gtn_tucker(x: &DenseTensor, meta: &DataTensorMeta, layer: &GtnLayerSpec) -> Result<DenseTensor> {
    check_input(x, meta)?;
    layer.validate(meta)?;
    let n = meta.n_domain_modes();
    let mut factors: Vec<(usize, &DenseTensor)> = Vec::with_capacity(x.order());
    for (k, s) in layer.domain_gsos.iter().enumerate() {
        factors.push((k + 1, s.matrix()));
    }
    for (k, w) in layer.feature_weights.iter().enumerate() {
        factors.push((n + k + 1, w));
    }
    Ok(tensor::tucker_product(x, &factors)?)
}

/// GTN forward pass `σ(⟦X; S⁽¹⁾..S⁽ᴺ⁾, W⁽¹⁾..W⁽ᴹ⁾⟧ + B)`.
pub fn gtn_forward(x: &DenseTensor, meta: &DataTensorMeta, layer: &GtnLayerSpec) -> Result<DenseTensor> {
    let mut z = gtn_tucker(x, meta, layer)?;
    if let Some(b) = &layer.bias {
        z = z.add(b)?;
    }
    Ok(layer.activation.apply(&z))
}
