use crate::engine::conv::{
    conv_backward_batch, conv_forward_batch, maxpool_backward, maxpool_forward,
};
use crate::engine::linalg::{gemm, Bias};
use crate::engine::{
    dropout_backward_inplace, dropout_inplace, relu_backward_inplace, relu_inplace, transpose_into,
    ConvGeometry, PoolGeometry, Rng, Tensor,
};
use crate::error::{Error, Result};
use crate::pruning::MaskedParam;

use super::spec::{InputShape, LayerKind, LayerSpec};

/// Resolved per-layer geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Geometry {
    Dense { fan_in: usize, fan_out: usize },
    Conv(ConvGeometry),
    Pool(PoolGeometry),
}

impl Geometry {
    fn output_len(&self) -> usize {
        match self {
            Geometry::Dense { fan_out, .. } => *fan_out,
            Geometry::Conv(g) => g.output_len(),
            Geometry::Pool(g) => g.output_len(),
        }
    }
}

/// Progress counters carried in checkpoints.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrainState {
    pub epochs: u32,
    pub lr: f32,
}

/// A feed-forward network: ordered layer specs plus one masked parameter set
/// per weighted layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    input: InputShape,
    specs: Vec<LayerSpec>,
    params: Vec<Option<MaskedParam>>,
    geometry: Vec<Geometry>,
    seed: u64,
    pub state: TrainState,
}

/// Per-layer values retained by a forward pass.
#[derive(Clone, Debug)]
pub struct LayerTrace {
    /// Post-activation output before dropout, `[batch × units]`.
    pub output: Tensor,
    pub(crate) dropout: Option<(Vec<f32>, f32)>,
    pub(crate) dropped: Option<Vec<f32>>,
    pub(crate) pool_argmax: Option<Vec<u32>>,
}

#[derive(Clone, Debug)]
pub struct ActivationRecord {
    pub input: Tensor,
    pub layers: Vec<LayerTrace>,
}

impl ActivationRecord {
    pub fn batch(&self) -> usize {
        self.input.shape()[0]
    }

    fn layer_input(&self, layer: usize) -> &[f32] {
        if layer == 0 {
            return self.input.data();
        }
        let prev = &self.layers[layer - 1];
        prev.dropped.as_deref().unwrap_or(prev.output.data())
    }
}

/// Forward pass mode. Training draws dropout masks from `rng` with the given
/// per-layer rates.
pub enum Mode<'a> {
    Train {
        rng: &'a mut Rng,
        dropout: &'a [f32],
    },
    Eval,
}

/// Gradient of one weighted layer.
#[derive(Clone, Debug)]
pub struct ParamGrad {
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

fn resolve(input: InputShape, specs: &[LayerSpec]) -> Result<Vec<Geometry>> {
    if specs.is_empty() {
        return Err(Error::invalid("a model needs at least one layer"));
    }
    let mut geo = Vec::with_capacity(specs.len());
    let (mut c, mut h, mut w) = (input.channels, input.height, input.width);
    let mut flat = false;
    for (i, spec) in specs.iter().enumerate() {
        if !(0.0..1.0).contains(&spec.dropout) {
            return Err(Error::invalid(format!(
                "{}: dropout {} outside [0, 1)",
                spec.name, spec.dropout
            )));
        }
        let last = i + 1 == specs.len();
        if spec.dropout > 0.0 && (!spec.kind.is_dense() || last) {
            return Err(Error::invalid(format!(
                "{}: dropout is only supported after hidden dense layers",
                spec.name
            )));
        }
        let g = match spec.kind {
            LayerKind::Dense { fan_in, fan_out } => {
                if fan_in == 0 || fan_out == 0 {
                    return Err(Error::invalid(format!("{}: zero-sized layer", spec.name)));
                }
                if fan_in != c * h * w {
                    return Err(Error::shape(format!(
                        "{}: fan_in {fan_in} but the incoming activation has {}",
                        spec.name,
                        c * h * w
                    )));
                }
                flat = true;
                (c, h, w) = (fan_out, 1, 1);
                Geometry::Dense { fan_in, fan_out }
            }
            LayerKind::Conv {
                in_channels,
                filters,
                kernel,
                stride,
            } => {
                if flat {
                    return Err(Error::invalid(format!(
                        "{}: convolution after a dense layer",
                        spec.name
                    )));
                }
                if in_channels != c || filters == 0 {
                    return Err(Error::shape(format!(
                        "{}: expects {in_channels} channels, gets {c}",
                        spec.name
                    )));
                }
                let g = ConvGeometry {
                    in_channels,
                    height: h,
                    width: w,
                    filters,
                    kernel,
                    stride,
                };
                let (oh, ow) = g.out_dims()?;
                (c, h, w) = (filters, oh, ow);
                Geometry::Conv(g)
            }
            LayerKind::MaxPool { size, stride } => {
                if flat {
                    return Err(Error::invalid(format!(
                        "{}: pooling after a dense layer",
                        spec.name
                    )));
                }
                if spec.relu {
                    return Err(Error::invalid(format!(
                        "{}: pooling has no activation",
                        spec.name
                    )));
                }
                let g = PoolGeometry {
                    channels: c,
                    height: h,
                    width: w,
                    size,
                    stride,
                };
                let (oh, ow) = g.out_dims()?;
                (h, w) = (oh, ow);
                Geometry::Pool(g)
            }
        };
        geo.push(g);
    }
    if !specs.last().is_some_and(|s| s.kind.is_dense()) {
        return Err(Error::invalid("the output layer must be dense"));
    }
    Ok(geo)
}

impl Model {
    /// Glorot-uniform weights, `a = sqrt(6 / (fan_in + fan_out))`, zero biases
    /// and all-ones masks. For convolutions `fan_in = C·k²`, `fan_out = F·k²`.
    pub fn init(input: InputShape, specs: Vec<LayerSpec>, seed: u64) -> Result<Model> {
        let geometry = resolve(input, &specs)?;
        let mut rng = Rng::new(seed);
        let params = specs
            .iter()
            .map(|spec| {
                let shape = spec.kind.weight_shape()?;
                let (fan_in, fan_out) = match spec.kind {
                    LayerKind::Dense { fan_in, fan_out } => (fan_in, fan_out),
                    LayerKind::Conv {
                        in_channels,
                        filters,
                        kernel,
                        ..
                    } => (in_channels * kernel * kernel, filters * kernel * kernel),
                    LayerKind::MaxPool { .. } => unreachable!(),
                };
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
                let w = Tensor::from_fn(shape, |_| rng.uniform_range(-a, a));
                Some(MaskedParam::new(w, Tensor::zeros(vec![spec.kind.units()])))
            })
            .collect();
        Ok(Model {
            input,
            specs,
            params,
            geometry,
            seed,
            state: TrainState::default(),
        })
    }

    /// Assembles a model from explicit parameters (used by deserialization).
    pub fn from_parts(
        input: InputShape,
        specs: Vec<LayerSpec>,
        params: Vec<Option<MaskedParam>>,
        seed: u64,
        state: TrainState,
    ) -> Result<Model> {
        let geometry = resolve(input, &specs)?;
        if params.len() != specs.len() {
            return Err(Error::invalid("one parameter slot per layer required"));
        }
        for (spec, p) in specs.iter().zip(&params) {
            match (spec.kind.weight_shape(), p) {
                (None, None) => {}
                (Some(shape), Some(p)) => {
                    if p.weights().shape() != &shape[..] || p.bias().len() != spec.kind.units() {
                        return Err(Error::shape(format!(
                            "{}: parameter shape {:?} does not match {:?}",
                            spec.name,
                            p.weights().shape(),
                            shape
                        )));
                    }
                }
                _ => {
                    return Err(Error::invalid(format!(
                        "{}: parameters present on an unweighted layer or missing",
                        spec.name
                    )))
                }
            }
        }
        Ok(Model {
            input,
            specs,
            params,
            geometry,
            seed,
            state,
        })
    }

    pub fn input(&self) -> InputShape {
        self.input
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_classes(&self) -> usize {
        self.specs.last().map_or(0, |s| s.kind.units())
    }

    pub fn param(&self, layer: usize) -> Option<&MaskedParam> {
        self.params.get(layer).and_then(|p| p.as_ref())
    }

    pub fn param_mut(&mut self, layer: usize) -> Option<&mut MaskedParam> {
        self.params.get_mut(layer).and_then(|p| p.as_mut())
    }

    pub fn params(&self) -> &[Option<MaskedParam>] {
        &self.params
    }

    /// Indices of layers that carry weights, in order.
    pub fn weighted_layers(&self) -> Vec<usize> {
        (0..self.specs.len())
            .filter(|&i| self.params[i].is_some())
            .collect()
    }

    pub fn layer_index(&self, name: &str) -> Result<usize> {
        self.specs
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::UnknownLayer(name.to_string()))
    }

    /// Next weighted layer after `layer`, skipping pooling.
    pub fn next_weighted(&self, layer: usize) -> Option<usize> {
        (layer + 1..self.specs.len()).find(|&i| self.params[i].is_some())
    }

    pub fn dropout_rates(&self) -> Vec<f32> {
        self.specs.iter().map(|s| s.dropout).collect()
    }

    /// Total weights (excluding biases) and live weights over all layers.
    pub fn weight_counts(&self) -> (usize, usize) {
        self.params
            .iter()
            .flatten()
            .fold((0, 0), |(t, l), p| (t + p.total(), l + p.live_count()))
    }

    pub fn param_count(&self) -> usize {
        self.params
            .iter()
            .flatten()
            .map(|p| p.total() + p.bias().len())
            .sum()
    }

    /// Per-sample activation length entering `layer`.
    pub(crate) fn input_len_of(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input.len()
        } else {
            self.geometry[layer - 1].output_len()
        }
    }

    /// Forward pass over a batch `[batch × …]` whose trailing dimensions hold
    /// one input sample. Masks are applied to the weights before use.
    pub fn forward(&self, batch: &Tensor, mode: Mode<'_>) -> Result<(Tensor, ActivationRecord)> {
        let n = batch.shape()[0];
        let per = batch.len() / n;
        if per != self.input.len() {
            return Err(Error::shape(format!(
                "batch samples have {per} values, model expects {}",
                self.input.len()
            )));
        }
        let input = Tensor::new(vec![n, per], batch.data().to_vec())?;
        let (mut rng, rates) = match mode {
            Mode::Train { rng, dropout } => {
                if dropout.len() != self.specs.len() {
                    return Err(Error::invalid("one dropout rate per layer required"));
                }
                (Some(rng), dropout)
            }
            Mode::Eval => (None, &[][..]),
        };
        let mut layers: Vec<LayerTrace> = Vec::with_capacity(self.specs.len());
        for (i, spec) in self.specs.iter().enumerate() {
            let x = match layers.last() {
                None => input.data(),
                Some(prev) => prev.dropped.as_deref().unwrap_or(prev.output.data()),
            };
            let mut pool_argmax = None;
            let mut out = match self.geometry[i] {
                Geometry::Dense { fan_in, fan_out } => {
                    let p = self.params[i].as_ref().expect("dense params");
                    let w = p.effective_weights();
                    let mut out = vec![0.0; n * fan_out];
                    gemm(
                        x,
                        &w,
                        n,
                        fan_in,
                        fan_out,
                        Bias::PerCol(p.bias().data()),
                        &mut out,
                    );
                    out
                }
                Geometry::Conv(g) => {
                    let p = self.params[i].as_ref().expect("conv params");
                    conv_forward_batch(&g, x, n, &p.effective_weights(), p.bias().data())
                }
                Geometry::Pool(g) => {
                    let (out, arg) = maxpool_forward(&g, x, n);
                    pool_argmax = Some(arg);
                    out
                }
            };
            if spec.relu {
                relu_inplace(&mut out);
            }
            let width = self.geometry[i].output_len();
            let mut trace = LayerTrace {
                output: Tensor::new(vec![n, width], out)?,
                dropout: None,
                dropped: None,
                pool_argmax,
            };
            if let Some(rng) = rng.as_deref_mut() {
                let rate = rates[i];
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::invalid(format!(
                        "dropout rate {rate} outside [0, 1)"
                    )));
                }
                if rate > 0.0 {
                    let mut dropped = trace.output.data().to_vec();
                    let mut mask = vec![0.0; dropped.len()];
                    dropout_inplace(&mut dropped, &mut mask, rate, rng);
                    trace.dropout = Some((mask, rate));
                    trace.dropped = Some(dropped);
                }
            }
            layers.push(trace);
        }
        let logits = layers.last().expect("non-empty").output.clone();
        Ok((logits, ActivationRecord { input, layers }))
    }

    /// Logits in eval mode.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(self.forward(batch, Mode::Eval)?.0)
    }

    /// Backpropagates `dlogits` through the recorded pass. Gradients are
    /// produced only for layers with `trainable[i]`; propagation stops below
    /// the lowest trainable layer.
    pub fn backward(
        &self,
        record: &ActivationRecord,
        dlogits: &Tensor,
        trainable: &[bool],
    ) -> Result<Vec<Option<ParamGrad>>> {
        let n = record.batch();
        let last = self.specs.len() - 1;
        if dlogits.shape() != record.layers[last].output.shape() {
            return Err(Error::shape("dlogits does not match the recorded output"));
        }
        let lowest = match (0..self.specs.len()).find(|&i| trainable[i] && self.params[i].is_some())
        {
            Some(l) => l,
            None => return Ok(vec![None; self.specs.len()]),
        };
        let mut grads: Vec<Option<ParamGrad>> = vec![None; self.specs.len()];
        let mut dy = dlogits.data().to_vec();
        for i in (lowest..=last).rev() {
            let trace = &record.layers[i];
            if let Some((mask, rate)) = &trace.dropout {
                dropout_backward_inplace(mask, *rate, &mut dy);
            }
            if self.specs[i].relu {
                relu_backward_inplace(trace.output.data(), &mut dy);
            }
            let x = record.layer_input(i);
            let need_dx = i > lowest;
            let want_w = trainable[i];
            match self.geometry[i] {
                Geometry::Dense { fan_in, fan_out } => {
                    let p = self.params[i].as_ref().expect("dense params");
                    if want_w {
                        let mut xt = vec![0.0; n * fan_in];
                        transpose_into(x, n, fan_in, &mut xt);
                        let mut dw = vec![0.0; fan_in * fan_out];
                        gemm(&xt, &dy, fan_in, n, fan_out, Bias::None, &mut dw);
                        let mut db = vec![0f64; fan_out];
                        for row in dy.chunks_exact(fan_out) {
                            for (s, &g) in db.iter_mut().zip(row) {
                                *s += g as f64;
                            }
                        }
                        grads[i] = Some(ParamGrad {
                            weights: dw,
                            bias: db.into_iter().map(|v| v as f32).collect(),
                        });
                    }
                    if need_dx {
                        let w = p.effective_weights();
                        let mut wt = vec![0.0; w.len()];
                        transpose_into(&w, fan_in, fan_out, &mut wt);
                        let mut dx = vec![0.0; n * fan_in];
                        gemm(&dy, &wt, n, fan_out, fan_in, Bias::None, &mut dx);
                        dy = dx;
                    }
                }
                Geometry::Conv(g) => {
                    let p = self.params[i].as_ref().expect("conv params");
                    let w = p.effective_weights();
                    let cg = conv_backward_batch(&g, x, n, &w, &dy, need_dx);
                    if want_w {
                        grads[i] = Some(ParamGrad {
                            weights: cg.kernels,
                            bias: cg.bias,
                        });
                    }
                    if let Some(dx) = cg.input {
                        dy = dx;
                    }
                }
                Geometry::Pool(g) => {
                    let arg = trace.pool_argmax.as_ref().expect("pool trace");
                    dy = maxpool_backward(&g, arg, &dy, n);
                }
            }
        }
        Ok(grads)
    }

    /// Order-sensitive FNV-1a digest of every parameter bit, for cheap
    /// equality checks in tests and logs.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |v: u32| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for p in self.params.iter().flatten() {
            p.weights().data().iter().for_each(|v| eat(v.to_bits()));
            p.mask().data().iter().for_each(|v| eat(v.to_bits()));
            p.bias().data().iter().for_each(|v| eat(v.to_bits()));
        }
        h
    }
}
