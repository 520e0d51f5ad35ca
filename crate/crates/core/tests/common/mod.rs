#![allow(dead_code)]

use std::path::{Path, PathBuf};

use prunenet::network::load_mnist_idx;
use prunenet::{Dataset, InputShape, LayerSpec, MaskedParam, Model, Rng, Tensor};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// The first 512 MNIST test images and labels.
pub fn mnist512() -> Dataset {
    let d = fixture_dir();
    load_mnist_idx(
        d.join("mnist512-images-idx3-ubyte"),
        d.join("mnist512-labels-idx1-ubyte"),
    )
    .unwrap()
}

/// Uniform inputs in [0, 1) shaped for `input`.
pub fn random_batch(input: InputShape, n: usize, seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    let mut shape = vec![n];
    shape.extend([input.channels, input.height, input.width]);
    Tensor::from_fn(shape, |_| rng.uniform_f32())
}

pub fn bits(t: &Tensor) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

/// `(fan_in, fan_out, weights, mask, bias)` of one dense layer.
pub type DenseLayer = (usize, usize, Vec<f32>, Vec<f32>, Vec<f32>);

/// A flat-input model from explicit dense layers; the last layer is linear.
pub fn dense_model(layers: Vec<DenseLayer>) -> Model {
    let n = layers.len();
    let input = InputShape {
        channels: 1,
        height: 1,
        width: layers[0].0,
    };
    let mut specs = Vec::new();
    let mut params = Vec::new();
    for (i, (fi, fo, w, m, b)) in layers.into_iter().enumerate() {
        let mut s = LayerSpec::dense(&format!("fc{}", i + 1), fi, fo);
        if i + 1 == n {
            s = s.linear();
        }
        specs.push(s);
        let p = MaskedParam::with_mask(
            Tensor::new([fi, fo], w).unwrap(),
            Tensor::new([fi, fo], m).unwrap(),
            Tensor::new([fo], b).unwrap(),
        )
        .unwrap();
        params.push(Some(p));
    }
    Model::from_parts(input, specs, params, 0, Default::default()).unwrap()
}

/// Masks a random `fraction` of every weighted layer.
pub fn random_prune(model: &mut Model, fraction: f64, seed: u64) {
    let mut rng = Rng::new(seed);
    for l in model.weighted_layers() {
        let n = model.param(l).unwrap().total();
        let victims: Vec<usize> = (0..n).filter(|_| rng.uniform_f64() < fraction).collect();
        model.param_mut(l).unwrap().remove(victims);
    }
}
