//! Parameter, FLOP and activation-sparsity accounting.

use crate::engine::{ConvGeometry, PoolGeometry, Tensor};
use crate::error::{Error, Result};
use crate::network::{Dataset, InputShape, LayerKind, LayerSpec, Mode, Model};

/// Static size of one weighted layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerCount {
    pub layer: String,
    /// Weights plus biases.
    pub params: usize,
    /// Two per multiply-accumulate.
    pub flops: usize,
}

/// Parameters and FLOPs of every weighted layer. Pooling layers are skipped.
pub fn count_layers(input: InputShape, specs: &[LayerSpec]) -> Result<Vec<LayerCount>> {
    let (mut c, mut h, mut w) = (input.channels, input.height, input.width);
    let mut out = Vec::new();
    for s in specs {
        match s.kind {
            LayerKind::Dense { fan_in, fan_out } => {
                if fan_in != c * h * w {
                    return Err(Error::shape(format!(
                        "{}: fan_in {fan_in} but input has {}",
                        s.name,
                        c * h * w
                    )));
                }
                out.push(LayerCount {
                    layer: s.name.clone(),
                    params: fan_in * fan_out + fan_out,
                    flops: 2 * fan_in * fan_out,
                });
                (c, h, w) = (fan_out, 1, 1);
            }
            LayerKind::Conv {
                in_channels,
                filters,
                kernel,
                stride,
            } => {
                let g = ConvGeometry {
                    in_channels,
                    height: h,
                    width: w,
                    filters,
                    kernel,
                    stride,
                };
                let (oh, ow) = g.out_dims()?;
                out.push(LayerCount {
                    layer: s.name.clone(),
                    params: filters * in_channels * kernel * kernel + filters,
                    flops: 2 * kernel * kernel * in_channels * oh * ow * filters,
                });
                (c, h, w) = (filters, oh, ow);
            }
            LayerKind::MaxPool { size, stride } => {
                let g = PoolGeometry {
                    channels: c,
                    height: h,
                    width: w,
                    size,
                    stride,
                };
                (h, w) = g.out_dims()?;
            }
        }
    }
    Ok(out)
}

/// Per-layer parameter counts and their total.
pub fn count_params(
    input: InputShape,
    specs: &[LayerSpec],
) -> Result<(Vec<(String, usize)>, usize)> {
    let rows: Vec<_> = count_layers(input, specs)?
        .into_iter()
        .map(|c| (c.layer, c.params))
        .collect();
    let total = rows.iter().map(|r| r.1).sum();
    Ok((rows, total))
}

/// Per-layer FLOP counts and their total.
pub fn count_flops(
    input: InputShape,
    specs: &[LayerSpec],
) -> Result<(Vec<(String, usize)>, usize)> {
    let rows: Vec<_> = count_layers(input, specs)?
        .into_iter()
        .map(|c| (c.layer, c.flops))
        .collect();
    let total = rows.iter().map(|r| r.1).sum();
    Ok((rows, total))
}

/// Thousands with truncation: `235500 → "235K"`, `520 → "0.5K"`.
pub fn format_k(n: usize) -> String {
    if n >= 1000 {
        format!("{}K", n / 1000)
    } else {
        format!("{}.{}K", n / 1000, (n % 1000) / 100)
    }
}

/// FLOP share left after pruning: weights kept times input density.
pub fn pruned_flop_pct(weights_pct: f64, input_act_pct: f64) -> f64 {
    weights_pct * input_act_pct / 100.0
}

/// Percentage of nonzero outputs of every layer (aligned with the specs),
/// over the first `n_samples` of `data`. The output layer reports 100.
pub fn measure_act_pct(model: &Model, data: &Dataset, n_samples: usize) -> Result<Vec<f64>> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let n = n_samples.min(data.len());
    let layers = model.specs().len();
    let mut nonzero = vec![0usize; layers];
    let mut total = vec![0usize; layers];
    for start in (0..n).step_by(250) {
        let idx: Vec<usize> = (start..(start + 250).min(n)).collect();
        let (x, _) = data.batch(&idx);
        let (_, rec) = model.forward(&x, Mode::Eval)?;
        for (l, t) in rec.layers.iter().enumerate() {
            nonzero[l] += t.output.data().iter().filter(|v| **v != 0.0).count();
            total[l] += t.output.len();
        }
    }
    Ok((0..layers)
        .map(|l| {
            if l + 1 == layers {
                100.0
            } else {
                100.0 * nonzero[l] as f64 / total[l] as f64
            }
        })
        .collect())
}

/// Density of the tensor entering each layer, given per-layer output
/// densities. The first layer sees its input as fully dense.
pub fn input_act_pct(act_pct: &[f64]) -> Vec<f64> {
    std::iter::once(100.0)
        .chain(act_pct.iter().copied())
        .take(act_pct.len())
        .collect()
}

/// One row of the compression table.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStats {
    pub layer: String,
    pub weights_total: usize,
    pub flops_total: usize,
    /// Nonzero share of the layer's own outputs.
    pub act_pct: f64,
    pub weights_pct: f64,
    pub flops_pct: f64,
    /// Number of output values per sample, used to weight the total Act%.
    pub outputs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatsTable {
    pub rows: Vec<LayerStats>,
    pub total: LayerStats,
}

fn tensor_len(t: &Tensor) -> usize {
    t.len() / t.shape()[0]
}

/// Builds the table for `model`, measuring activations on `n_samples` of
/// `data`. FLOP% of a layer uses the density of its actual input tensor.
pub fn layer_stats(model: &Model, data: &Dataset, n_samples: usize) -> Result<StatsTable> {
    let counts = count_layers(model.input(), model.specs())?;
    let act = measure_act_pct(model, data, n_samples)?;
    let input_act = input_act_pct(&act);
    let (x, _) = data.batch(&[0]);
    let (_, rec) = model.forward(&x, Mode::Eval)?;
    let mut rows = Vec::new();
    for (layer, c) in model.weighted_layers().into_iter().zip(counts) {
        let p = model.param(layer).expect("weighted");
        let weights_pct = 100.0 * p.live_fraction();
        rows.push(LayerStats {
            layer: c.layer,
            weights_total: c.params,
            flops_total: c.flops,
            act_pct: act[layer],
            weights_pct,
            flops_pct: pruned_flop_pct(weights_pct, input_act[layer]),
            outputs: tensor_len(&rec.layers[layer].output),
        });
    }
    let (w_total, w_live) = model.weight_counts();
    let flops: usize = rows.iter().map(|r| r.flops_total).sum();
    let outputs: usize = rows.iter().map(|r| r.outputs).sum();
    let total = LayerStats {
        layer: "total".into(),
        weights_total: rows.iter().map(|r| r.weights_total).sum(),
        flops_total: flops,
        act_pct: rows
            .iter()
            .map(|r| r.act_pct * r.outputs as f64)
            .sum::<f64>()
            / outputs as f64,
        weights_pct: 100.0 * w_live as f64 / w_total as f64,
        flops_pct: rows
            .iter()
            .map(|r| r.flops_pct * r.flops_total as f64)
            .sum::<f64>()
            / flops as f64,
        outputs,
    };
    Ok(StatsTable { rows, total })
}

impl StatsTable {
    /// Plain-text table with K-rounded counts and integer percentages.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<8}{:>9}{:>9}{:>7}{:>10}{:>8}\n",
            "Layer", "Weights", "FLOP", "Act%", "Weights%", "FLOP%"
        );
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            s += &format!(
                "{:<8}{:>9}{:>9}{:>6.0}%{:>9.0}%{:>7.0}%\n",
                if r.layer == "total" {
                    "Total"
                } else {
                    &r.layer
                },
                format_k(r.weights_total),
                format_k(r.flops_total),
                r.act_pct,
                r.weights_pct,
                r.flops_pct
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,weights,flops,act_pct,weights_pct,flops_pct\n");
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            s += &format!(
                "{},{},{},{},{},{}\n",
                r.layer, r.weights_total, r.flops_total, r.act_pct, r.weights_pct, r.flops_pct
            );
        }
        s
    }
}
