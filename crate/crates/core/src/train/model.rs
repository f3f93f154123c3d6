//! Layer graph, traced forward pass and hand-written adjoints.

use rand::Rng;

use crate::graphs::{self, GraphShiftOperator};
use crate::gtn::ActivationKind;
use crate::par::{self, Exec};
use crate::tensor::{self, DenseTensor, Shape};
use crate::tt::{self, TtOperator, TtSweep};

use super::init;
use super::loss::{loss, LossKind};
use super::params::{Gradients, ParameterSet};
use super::{Result, TrainError};

/// Operator applied along one domain mode of a GTN layer.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainOp {
    /// Constant GSO.
    Fixed(GraphShiftOperator),
    /// `softmax_rows((X₍ₙ₎ Wq)(X₍ₙ₎ Wk)ᵀ / sqrt(d_k))` with trainable `Wq`, `Wk`.
    Attention { wq: usize, wk: usize, d_k: f64 },
    /// Circulant GSO built from a trainable kernel.
    Circulant { kernel: usize },
}

/// Layers refer to parameters by slot in the model's [`ParameterSet`].
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Gtn {
        domain: Vec<DomainOp>,
        weights: Vec<usize>,
        bias: Option<usize>,
        activation: ActivationKind,
    },
    TtDense {
        cores: Vec<usize>,
        bias: Option<usize>,
        activation: ActivationKind,
    },
    Dense {
        weight: usize,
        bias: Option<usize>,
        activation: ActivationKind,
    },
    /// Linear recurrence over the rows of an `I × J` input:
    /// `h_i = Wr h_{i-1} + Wx x_i + b`.
    Rnn {
        wr: usize,
        wx: usize,
        bias: Option<usize>,
    },
    Activation(ActivationKind),
    Vectorize,
    Matricize {
        mode: usize,
    },
}

#[derive(Debug, Clone)]
struct AttentionCache {
    xn: DenseTensor,
    q: DenseTensor,
    k: DenseTensor,
    s: DenseTensor,
}

#[derive(Debug, Clone)]
enum Extra {
    None,
    Gtn {
        factors: Vec<DenseTensor>,
        attention: Vec<Option<AttentionCache>>,
    },
    Tt {
        op: TtOperator,
        x: DenseTensor,
        sweep: TtSweep,
    },
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: DenseTensor,
    pre: DenseTensor,
    output: DenseTensor,
    extra: Extra,
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    caches: Vec<LayerCache>,
}

impl Trace {
    pub fn output(&self) -> &DenseTensor {
        &self.caches.last().expect("model has layers").output
    }

    /// Output of layer `i` (zero-based).
    pub fn layer_output(&self, i: usize) -> Option<&DenseTensor> {
        self.caches.get(i).map(|c| &c.output)
    }
}

/// An input / target pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: DenseTensor,
    pub t: DenseTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    input_dims: Vec<usize>,
    output_dims: Vec<usize>,
    layers: Vec<Layer>,
    pub params: ParameterSet,
}

fn shape_err(msg: String) -> TrainError {
    TrainError::ShapeMismatch(msg)
}

fn add_bias(z: DenseTensor, bias: Option<usize>, params: &ParameterSet) -> Result<DenseTensor> {
    match bias {
        None => Ok(z),
        Some(slot) => {
            let b = params.get(slot);
            if b.numel() != z.numel() {
                return Err(shape_err(format!("bias {} for output {}", b.shape(), z.shape())));
            }
            Ok(z.add(&b.reshape(z.dims().to_vec())?)?)
        }
    }
}

fn tt_operator(cores: &[usize], params: &ParameterSet) -> Result<TtOperator> {
    Ok(TtOperator::new(cores.iter().map(|&c| params.get(c).clone()).collect())?)
}

fn forward_layer(layer: &Layer, params: &ParameterSet, x: &DenseTensor) -> Result<LayerCache> {
    let (pre, output, extra) = match layer {
        Layer::Gtn {
            domain,
            weights,
            bias,
            activation,
        } => {
            if x.order() != domain.len() + weights.len() {
                return Err(shape_err(format!(
                    "GTN layer with {} domain and {} feature modes got input {}",
                    domain.len(),
                    weights.len(),
                    x.shape()
                )));
            }
            let mut factors = Vec::with_capacity(x.order());
            let mut attention = Vec::with_capacity(domain.len());
            for (k, op) in domain.iter().enumerate() {
                let size = x.dims()[k];
                match op {
                    DomainOp::Fixed(s) => {
                        if s.size() != size {
                            return Err(shape_err(format!("GSO of size {} on mode {} of size {size}", s.size(), k + 1)));
                        }
                        factors.push(s.matrix().clone());
                        attention.push(None);
                    }
                    DomainOp::Circulant { kernel } => {
                        factors.push(graphs::gso_circulant(params.get(*kernel), size)?.into_matrix());
                        attention.push(None);
                    }
                    DomainOp::Attention { wq, wk, d_k } => {
                        let xn = tensor::matricize(x, k + 1)?;
                        let q = xn.matmul(params.get(*wq))?;
                        let kk = xn.matmul(params.get(*wk))?;
                        let s = graphs::softmax_rows(&q.matmul(&kk.transpose()?)?.scale(1.0 / d_k.sqrt()));
                        factors.push(s.clone());
                        attention.push(Some(AttentionCache { xn, q, k: kk, s }));
                    }
                }
            }
            for &w in weights {
                factors.push(params.get(w).clone());
            }
            let pairs: Vec<(usize, &DenseTensor)> = factors.iter().enumerate().map(|(k, f)| (k + 1, f)).collect();
            let z = add_bias(tensor::tucker_product(x, &pairs)?, *bias, params)?;
            let y = activation.apply(&z);
            (z, y, Extra::Gtn { factors, attention })
        }
        Layer::TtDense {
            cores,
            bias,
            activation,
        } => {
            let op = tt_operator(cores, params)?;
            let xr = x.reshape(op.input_dims()).map_err(|_| {
                shape_err(format!("TT layer with input dims {:?} got {}", op.input_dims(), x.shape()))
            })?;
            let sweep = tt::tt_apply_traced(&op, &xr)?;
            let z = sweep.states.last().unwrap().reshape(op.output_dims())?;
            let z = add_bias(z, *bias, params)?;
            let y = activation.apply(&z);
            (z, y, Extra::Tt { op, x: xr, sweep })
        }
        Layer::Dense {
            weight,
            bias,
            activation,
        } => {
            let w = params.get(*weight);
            if x.numel() != w.cols() {
                return Err(shape_err(format!("dense weight {} got input {}", w.shape(), x.shape())));
            }
            let z = w.matmul(&x.reshape(vec![x.numel(), 1])?)?.reshape(vec![w.rows()])?;
            let z = add_bias(z, *bias, params)?;
            let y = activation.apply(&z);
            (z, y, Extra::None)
        }
        Layer::Rnn { wr, wx, bias } => {
            let (wr, wx) = (params.get(*wr), params.get(*wx));
            let k = wr.rows();
            if x.order() != 2 || wx.cols() != x.cols() || wx.rows() != k {
                return Err(shape_err(format!("RNN Wx {} got input {}", wx.shape(), x.shape())));
            }
            let b = bias.map(|s| params.get(s));
            let mut out = Vec::with_capacity(x.rows() * k);
            let mut prev = vec![0.0; k];
            for i in 0..x.rows() {
                let mut h = vec![0.0; k];
                for (a, ha) in h.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for c in 0..k {
                        s += wr.at(a, c) * prev[c];
                    }
                    for j in 0..x.cols() {
                        s += wx.at(a, j) * x.at(i, j);
                    }
                    if let Some(b) = b {
                        s += b.data()[a];
                    }
                    *ha = s;
                }
                out.extend_from_slice(&h);
                prev = h;
            }
            let z = DenseTensor::new(vec![x.rows(), k], out)?;
            (z.clone(), z, Extra::None)
        }
        Layer::Activation(act) => (x.clone(), act.apply(x), Extra::None),
        Layer::Vectorize => {
            let y = tensor::vectorize(x);
            (y.clone(), y, Extra::None)
        }
        Layer::Matricize { mode } => {
            let y = tensor::matricize(x, *mode)?;
            (y.clone(), y, Extra::None)
        }
    };
    Ok(LayerCache {
        input: x.clone(),
        pre,
        output,
        extra,
    })
}

fn activation_of(layer: &Layer) -> ActivationKind {
    match layer {
        Layer::Gtn { activation, .. } | Layer::TtDense { activation, .. } | Layer::Dense { activation, .. } => {
            *activation
        }
        Layer::Activation(a) => *a,
        _ => ActivationKind::Identity,
    }
}

fn backward_layer(
    layer: &Layer,
    params: &ParameterSet,
    cache: &LayerCache,
    dy: &DenseTensor,
    grads: &mut Gradients,
) -> Result<DenseTensor> {
    if dy.dims() != cache.output.dims() {
        return Err(shape_err(format!("upstream gradient {} for output {}", dy.shape(), cache.output.shape())));
    }
    let dz = activation_of(layer).backward(&cache.pre, &cache.output, dy);
    let x = &cache.input;
    match (layer, &cache.extra) {
        (
            Layer::Gtn {
                domain, weights, bias, ..
            },
            Extra::Gtn { factors, attention },
        ) => {
            if let Some(b) = bias {
                grads.accumulate(*b, &dz)?;
            }
            let n_dom = domain.len();
            let mut dx_extra: Option<DenseTensor> = None;
            for k in 0..factors.len() {
                let trainable = k >= n_dom || !matches!(domain[k], DomainOp::Fixed(_));
                if !trainable {
                    continue;
                }
                let others: Vec<(usize, &DenseTensor)> = factors
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(j, f)| (j + 1, f))
                    .collect();
                let partial = tensor::tucker_product(x, &others)?;
                let d_factor = tensor::matricize(&dz, k + 1)?
                    .matmul(&tensor::matricize(&partial, k + 1)?.transpose()?)?;
                if k >= n_dom {
                    grads.accumulate(weights[k - n_dom], &d_factor)?;
                    continue;
                }
                match &domain[k] {
                    DomainOp::Fixed(_) => unreachable!(),
                    DomainOp::Circulant { kernel } => {
                        let size = d_factor.rows();
                        let p_len = params.get(*kernel).numel();
                        let dk: Vec<f64> = (0..p_len)
                            .map(|p| (0..size).map(|i| d_factor.at(i, (i + p) % size)).sum())
                            .collect();
                        grads.accumulate(*kernel, &DenseTensor::vector(dk)?)?;
                    }
                    DomainOp::Attention { wq, wk, d_k } => {
                        let c = attention[k].as_ref().expect("attention cache");
                        let n = c.s.rows();
                        let mut dl = vec![0.0; n * n];
                        for i in 0..n {
                            let mut dot = 0.0;
                            for j in 0..n {
                                dot += d_factor.at(i, j) * c.s.at(i, j);
                            }
                            for j in 0..n {
                                dl[i * n + j] = c.s.at(i, j) * (d_factor.at(i, j) - dot);
                            }
                        }
                        let dl = DenseTensor::new(vec![n, n], dl)?.scale(1.0 / d_k.sqrt());
                        let dq = dl.matmul(&c.k)?;
                        let dkk = dl.transpose()?.matmul(&c.q)?;
                        let xnt = c.xn.transpose()?;
                        grads.accumulate(*wq, &xnt.matmul(&dq)?)?;
                        grads.accumulate(*wk, &xnt.matmul(&dkk)?)?;
                        let dxn = dq
                            .matmul(&params.get(*wq).transpose()?)?
                            .add(&dkk.matmul(&params.get(*wk).transpose()?)?)?;
                        let d = tensor::dematricize(&dxn, k + 1, x.shape())?;
                        dx_extra = Some(match dx_extra {
                            None => d,
                            Some(acc) => acc.add(&d)?,
                        });
                    }
                }
            }
            let transposed: Vec<DenseTensor> = factors.iter().map(|f| f.transpose()).collect::<std::result::Result<_, _>>()?;
            let pairs: Vec<(usize, &DenseTensor)> = transposed.iter().enumerate().map(|(k, f)| (k + 1, f)).collect();
            let dx = tensor::tucker_product(&dz, &pairs)?;
            Ok(match dx_extra {
                None => dx,
                Some(e) => dx.add(&e)?,
            })
        }
        (Layer::TtDense { cores, bias, .. }, Extra::Tt { op, x: xr, sweep }) => {
            if let Some(b) = bias {
                grads.accumulate(*b, &dz)?;
            }
            let (dcores, dx) = tt::tt_apply_backward(op, xr, sweep, &dz)?;
            for (slot, g) in cores.iter().zip(&dcores) {
                grads.accumulate(*slot, g)?;
            }
            Ok(dx.reshape(x.dims().to_vec())?)
        }
        (Layer::Dense { weight, bias, .. }, _) => {
            if let Some(b) = bias {
                grads.accumulate(*b, &dz)?;
            }
            let col = dz.reshape(vec![dz.numel(), 1])?;
            let row = x.reshape(vec![1, x.numel()])?;
            grads.accumulate(*weight, &col.matmul(&row)?)?;
            let dx = params.get(*weight).transpose()?.matmul(&col)?;
            Ok(dx.reshape(x.dims().to_vec())?)
        }
        (Layer::Rnn { wr, wx, bias }, _) => {
            let (wr_t, wx_t) = (params.get(*wr), params.get(*wx));
            let (steps, k, j) = (x.rows(), wr_t.rows(), x.cols());
            let h = &cache.output;
            let mut dwr = vec![0.0; k * k];
            let mut dwx = vec![0.0; k * j];
            let mut db = vec![0.0; k];
            let mut dx = vec![0.0; steps * j];
            let mut carry = vec![0.0; k];
            for i in (0..steps).rev() {
                let g: Vec<f64> = (0..k).map(|a| dz.at(i, a) + carry[a]).collect();
                for a in 0..k {
                    db[a] += g[a];
                    if i > 0 {
                        for c in 0..k {
                            dwr[a * k + c] += g[a] * h.at(i - 1, c);
                        }
                    }
                    for jj in 0..j {
                        dwx[a * j + jj] += g[a] * x.at(i, jj);
                        dx[i * j + jj] += wx_t.at(a, jj) * g[a];
                    }
                }
                carry = (0..k).map(|c| (0..k).map(|a| wr_t.at(a, c) * g[a]).sum()).collect();
            }
            grads.accumulate(*wr, &DenseTensor::new(vec![k, k], dwr)?)?;
            grads.accumulate(*wx, &DenseTensor::new(vec![k, j], dwx)?)?;
            if let Some(b) = bias {
                grads.accumulate(*b, &DenseTensor::vector(db)?)?;
            }
            Ok(DenseTensor::new(vec![steps, j], dx)?)
        }
        (Layer::Activation(_), _) => Ok(dz),
        (Layer::Vectorize, _) => Ok(dz.reshape(x.dims().to_vec())?),
        (Layer::Matricize { mode }, _) => Ok(tensor::dematricize(&dz, *mode, x.shape())?),
        _ => Err(TrainError::MissingCache("layer cache kind does not match layer".into())),
    }
}

impl ModelSpec {
    /// Checks the layer chain by running it on a zero input.
    pub fn new(input_dims: Vec<usize>, layers: Vec<Layer>, params: ParameterSet) -> Result<Self> {
        if layers.is_empty() {
            return Err(TrainError::InvalidSetting("model has no layers".into()));
        }
        let mut model = ModelSpec {
            input_dims: input_dims.clone(),
            output_dims: vec![],
            layers,
            params,
        };
        let probe = DenseTensor::zeros(input_dims)?;
        let trace = model.forward_traced(&model.params, &probe)?;
        model.output_dims = trace.output().dims().to_vec();
        Ok(model)
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn output_dims(&self) -> &[usize] {
        &self.output_dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Number of trainable scalars; constant GSOs are not parameters.
    pub fn count_params(&self) -> usize {
        self.params.total_elements()
    }

    pub fn forward(&self, x: &DenseTensor) -> Result<DenseTensor> {
        Ok(self.forward_traced(&self.params, x)?.output().clone())
    }

    /// Forward pass with explicit parameter values, keeping intermediates.
    pub fn forward_traced(&self, params: &ParameterSet, x: &DenseTensor) -> Result<Trace> {
        if x.dims() != self.input_dims.as_slice() {
            return Err(shape_err(format!("model expects input {:?}, got {}", self.input_dims, x.shape())));
        }
        if params.len() != self.params.len() {
            return Err(shape_err(format!("{} parameters for a model with {}", params.len(), self.params.len())));
        }
        let mut caches: Vec<LayerCache> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = caches.last().map_or(x, |c| &c.output);
            let cache = forward_layer(layer, params, input)?;
            caches.push(cache);
        }
        Ok(Trace { caches })
    }

    /// Reverse pass: `dL/dθ` for every parameter and `dL/dx`.
    pub fn backward(&self, params: &ParameterSet, trace: &Trace, d_out: &DenseTensor) -> Result<(Gradients, DenseTensor)> {
        if trace.caches.len() != self.layers.len() {
            return Err(TrainError::MissingCache(format!(
                "{} cached layers for {} model layers",
                trace.caches.len(),
                self.layers.len()
            )));
        }
        let mut grads = Gradients::zeros_like(params);
        let mut d = d_out.clone();
        for (layer, cache) in self.layers.iter().zip(&trace.caches).rev() {
            d = backward_layer(layer, params, cache, &d, &mut grads)?;
        }
        Ok((grads, d))
    }
}

/// Mean per-sample loss.
pub fn batch_loss(model: &ModelSpec, params: &ParameterSet, batch: &[Sample], kind: LossKind, exec: Exec) -> Result<f64> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let losses = par::map_slice(exec, batch, |s| -> Result<f64> {
        let y = model.forward_traced(params, &s.x)?;
        Ok(loss(kind, y.output(), &s.t)?.0)
    });
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / batch.len() as f64)
}

/// Mean per-sample loss and its gradient. Per-sample results are summed in
/// batch order, so the outcome does not depend on `exec`.
pub fn batch_loss_and_grad(
    model: &ModelSpec,
    params: &ParameterSet,
    batch: &[Sample],
    kind: LossKind,
    exec: Exec,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let per_sample = par::map_slice(exec, batch, |s| -> Result<(f64, Gradients)> {
        let trace = model.forward_traced(params, &s.x)?;
        let (l, dy) = loss(kind, trace.output(), &s.t)?;
        let (g, _) = model.backward(params, &trace, &dy)?;
        Ok((l, g))
    });
    let mut total = 0.0;
    let mut grads = Gradients::zeros_like(params);
    for r in per_sample {
        let (l, g) = r?;
        total += l;
        grads.add_assign(&g)?;
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    Ok((total * inv, grads))
}

/// Domain-mode operator requested from [`ModelBuilder::gtn`].
#[derive(Debug, Clone, PartialEq)]
pub enum DomainInit {
    Fixed(GraphShiftOperator),
    Attention { d_k: usize },
    Circulant { kernel_len: usize },
}

/// Registers parameters with seeded initial values while layers are added.
pub struct ModelBuilder<'r, R: Rng + ?Sized> {
    input_dims: Vec<usize>,
    current: Vec<usize>,
    layers: Vec<Layer>,
    params: ParameterSet,
    rng: &'r mut R,
}

impl<'r, R: Rng + ?Sized> ModelBuilder<'r, R> {
    pub fn new(input_dims: Vec<usize>, rng: &'r mut R) -> Result<Self> {
        Shape::new(input_dims.clone())?;
        Ok(ModelBuilder {
            current: input_dims.clone(),
            input_dims,
            layers: Vec::new(),
            params: ParameterSet::new(),
            rng,
        })
    }

    /// Shape the next layer will receive.
    pub fn current_dims(&self) -> &[usize] {
        &self.current
    }

    fn bias(&mut self, name: &str, dims: Vec<usize>, enabled: bool) -> Result<Option<usize>> {
        if !enabled {
            return Ok(None);
        }
        Ok(Some(self.params.add(format!("{name}.bias"), DenseTensor::zeros(dims)?)?))
    }

    /// GTN layer over the current shape: one entry of `domain` per leading
    /// mode, one output size per remaining (feature) mode.
    pub fn gtn(
        &mut self,
        name: &str,
        domain: Vec<DomainInit>,
        out_features: &[usize],
        bias: bool,
        activation: ActivationKind,
    ) -> Result<&mut Self> {
        let dims = self.current.clone();
        if domain.len() + out_features.len() != dims.len() {
            return Err(shape_err(format!(
                "GTN layer `{name}` with {} domain and {} feature modes on input {:?}",
                domain.len(),
                out_features.len(),
                dims
            )));
        }
        let mut ops = Vec::with_capacity(domain.len());
        for (k, d) in domain.into_iter().enumerate() {
            ops.push(match d {
                DomainInit::Fixed(s) => DomainOp::Fixed(s),
                DomainInit::Attention { d_k } => {
                    let rest = dims.iter().product::<usize>() / dims[k];
                    let wq = init::glorot_uniform(rest, d_k, self.rng);
                    let wk = init::glorot_uniform(rest, d_k, self.rng);
                    DomainOp::Attention {
                        wq: self.params.add(format!("{name}.wq{}", k + 1), wq)?,
                        wk: self.params.add(format!("{name}.wk{}", k + 1), wk)?,
                        d_k: d_k as f64,
                    }
                }
                DomainInit::Circulant { kernel_len } => {
                    let a = (1.0 / kernel_len as f64).sqrt();
                    let kernel = DenseTensor::random_uniform(vec![kernel_len], -a, a, self.rng)?;
                    DomainOp::Circulant {
                        kernel: self.params.add(format!("{name}.kernel{}", k + 1), kernel)?,
                    }
                }
            });
        }
        let n_dom = ops.len();
        let mut weights = Vec::with_capacity(out_features.len());
        for (m, &k_out) in out_features.iter().enumerate() {
            let w = init::glorot_uniform(k_out, dims[n_dom + m], self.rng);
            weights.push(self.params.add(format!("{name}.w{}", m + 1), w)?);
        }
        let mut out_dims = dims[..n_dom].to_vec();
        out_dims.extend_from_slice(out_features);
        let bias = self.bias(name, out_dims.clone(), bias)?;
        self.layers.push(Layer::Gtn {
            domain: ops,
            weights,
            bias,
            activation,
        });
        self.current = out_dims;
        Ok(self)
    }

    /// TT layer mapping the flattened current shape, split as `in_factors`,
    /// to a tensor of shape `out_factors`. `interior_ranks` has one entry
    /// per bond.
    pub fn tt_dense(
        &mut self,
        name: &str,
        out_factors: &[usize],
        in_factors: &[usize],
        interior_ranks: &[usize],
        bias: bool,
        activation: ActivationKind,
    ) -> Result<&mut Self> {
        let plan = tt::TensorizationPlan::new(out_factors.to_vec(), in_factors.to_vec())?;
        if plan.cols() != self.current.iter().product::<usize>() {
            return Err(shape_err(format!(
                "TT layer `{name}` expects {} inputs, current shape is {:?}",
                plan.cols(),
                self.current
            )));
        }
        if interior_ranks.len() + 1 != plan.num_cores() || interior_ranks.contains(&0) {
            return Err(TrainError::InvalidSetting(format!(
                "TT layer `{name}` needs {} positive interior ranks, got {:?}",
                plan.num_cores() - 1,
                interior_ranks
            )));
        }
        let mut ranks = vec![1];
        ranks.extend_from_slice(interior_ranks);
        ranks.push(1);
        let cores = init::tt_cores(out_factors, in_factors, &ranks, self.rng);
        let mut slots = Vec::with_capacity(cores.len());
        for (n, c) in cores.into_iter().enumerate() {
            slots.push(self.params.add(format!("{name}.core{}", n + 1), c)?);
        }
        let bias = self.bias(name, out_factors.to_vec(), bias)?;
        self.layers.push(Layer::TtDense {
            cores: slots,
            bias,
            activation,
        });
        self.current = out_factors.to_vec();
        Ok(self)
    }

    pub fn dense(&mut self, name: &str, out: usize, bias: bool, activation: ActivationKind) -> Result<&mut Self> {
        let fan_in = self.current.iter().product();
        let w = init::glorot_uniform(out, fan_in, self.rng);
        let weight = self.params.add(format!("{name}.w"), w)?;
        let bias = self.bias(name, vec![out], bias)?;
        self.layers.push(Layer::Dense {
            weight,
            bias,
            activation,
        });
        self.current = vec![out];
        Ok(self)
    }

    /// Linear recurrence over the rows of the current `I × J` matrix.
    pub fn rnn(&mut self, name: &str, hidden: usize, bias: bool) -> Result<&mut Self> {
        if self.current.len() != 2 {
            return Err(shape_err(format!("RNN `{name}` needs a matrix input, got {:?}", self.current)));
        }
        let wr = init::glorot_uniform(hidden, hidden, self.rng);
        let wx = init::glorot_uniform(hidden, self.current[1], self.rng);
        let wr = self.params.add(format!("{name}.wr"), wr)?;
        let wx = self.params.add(format!("{name}.wx"), wx)?;
        let bias = self.bias(name, vec![hidden], bias)?;
        self.layers.push(Layer::Rnn { wr, wx, bias });
        self.current = vec![self.current[0], hidden];
        Ok(self)
    }

    pub fn activation(&mut self, activation: ActivationKind) -> &mut Self {
        self.layers.push(Layer::Activation(activation));
        self
    }

    pub fn vectorize(&mut self) -> &mut Self {
        self.layers.push(Layer::Vectorize);
        self.current = vec![self.current.iter().product()];
        self
    }

    pub fn matricize(&mut self, mode: usize) -> Result<&mut Self> {
        let shape = Shape::new(self.current.clone())?;
        let n = shape.dim(mode)?;
        self.layers.push(Layer::Matricize { mode });
        self.current = vec![n, shape.numel() / n];
        Ok(self)
    }

    pub fn finish(self) -> Result<ModelSpec> {
        ModelSpec::new(self.input_dims, self.layers, self.params)
    }
}
