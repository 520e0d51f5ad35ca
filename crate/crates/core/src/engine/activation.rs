use super::rng::Rng;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// `dx = dy` where `x > 0`, else 0. The subgradient at exactly 0 is 0.
pub fn relu_grad(x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    x.zip_map(dy, |x, g| if x > 0.0 { g } else { 0.0 })
}

pub(crate) fn relu_inplace(x: &mut [f32]) {
    for v in x {
        *v = v.max(0.0);
    }
}

/// Zeroes `dy` wherever the post-activation output is not positive.
pub(crate) fn relu_backward_inplace(output: &[f32], dy: &mut [f32]) {
    for (g, &y) in dy.iter_mut().zip(output) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Mean softmax cross-entropy over a batch of logits `[n × classes]`.
///
/// Returns the loss and `dlogits = (softmax − onehot) / n`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f32, Tensor)> {
    let (n, classes) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::shape(format!(
            "{} labels for {n} rows of logits",
            labels.len()
        )));
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::LabelOutOfRange {
            index,
            label,
            classes,
        });
    }
    let mut grad = vec![0.0f32; n * classes];
    let mut total = 0f64;
    let mut probs = vec![0f64; classes];
    for (i, (row, &label)) in logits.data().chunks_exact(classes).zip(labels).enumerate() {
        let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
        let mut sum = 0f64;
        for (p, &v) in probs.iter_mut().zip(row) {
            *p = (v as f64 - max).exp();
            sum += *p;
        }
        total += sum.ln() - (row[label] as f64 - max);
        let g = &mut grad[i * classes..(i + 1) * classes];
        for (j, (g, &p)) in g.iter_mut().zip(&probs).enumerate() {
            let onehot = if j == label { 1.0 } else { 0.0 };
            *g = ((p / sum - onehot) / n as f64) as f32;
        }
    }
    Ok((
        (total / n as f64) as f32,
        Tensor::new(vec![n, classes], grad)?,
    ))
}

/// Inverted dropout: kept units are scaled by `1 / (1 − rate)` so inference
/// needs no rescaling. Returns the output and the `{0, 1}` keep mask.
pub fn dropout_forward(x: &Tensor, rate: f32, rng: &mut Rng) -> Result<(Tensor, Tensor)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    let mut y = x.clone();
    let mut mask = Tensor::ones(x.shape().to_vec());
    dropout_inplace(y.data_mut(), mask.data_mut(), rate, rng);
    Ok((y, mask))
}

pub(crate) fn dropout_inplace(x: &mut [f32], mask: &mut [f32], rate: f32, rng: &mut Rng) {
    if rate == 0.0 {
        mask.fill(1.0);
        return;
    }
    let scale = 1.0 / (1.0 - rate);
    for (v, m) in x.iter_mut().zip(mask.iter_mut()) {
        if rng.uniform_f32() < rate {
            *m = 0.0;
            *v = 0.0;
        } else {
            *m = 1.0;
            *v *= scale;
        }
    }
}

pub(crate) fn dropout_backward_inplace(mask: &[f32], rate: f32, dy: &mut [f32]) {
    if rate == 0.0 {
        return;
    }
    let scale = 1.0 / (1.0 - rate);
    for (g, &m) in dy.iter_mut().zip(mask) {
        *g = if m == 0.0 { 0.0 } else { *g * scale };
    }
}
