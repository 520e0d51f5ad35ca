use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use prunenet::engine::{conv2d_forward, matmul};
use prunenet::network::{init_model, Architecture};
use prunenet::pruning::prune_fraction_by_rank;
use prunenet::sparse::{decode_model, encode_model, Encoding};
use prunenet::{Model, Rng, Tensor};

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.uniform_range(-1.0, 1.0))
}

/// LeNet-300-100 with 92% of every layer's weights masked.
fn pruned_mlp() -> Model {
    let mut m = init_model(Architecture::Lenet300100, 1).unwrap();
    for l in m.weighted_layers() {
        prune_fraction_by_rank(&mut m, l, 0.92);
    }
    m
}

fn kernels(c: &mut Criterion) {
    let a = random(&[64, 784], 1);
    let b = random(&[784, 300], 2);
    c.bench_function("matmul 64x784x300", |bench| {
        bench.iter(|| matmul(black_box(&a), black_box(&b)).unwrap())
    });

    let image = random(&[20, 12, 12], 3);
    let kernels = random(&[50, 20, 5, 5], 4);
    let bias = vec![0.1; 50];
    c.bench_function("conv2d 20x12x12 -> 50x8x8", |bench| {
        bench.iter(|| conv2d_forward(black_box(&image), black_box(&kernels), &bias, 1).unwrap())
    });
}

fn forward(c: &mut Criterion) {
    for arch in [Architecture::Lenet300100, Architecture::Lenet5] {
        let m = init_model(arch, 1).unwrap();
        let i = m.input();
        let x = random(&[64, i.channels, i.height, i.width], 5);
        c.bench_function(&format!("predict {arch} batch 64"), |bench| {
            bench.iter(|| m.predict(black_box(&x)).unwrap())
        });
    }
}

fn format(c: &mut Criterion) {
    let m = pruned_mlp();
    c.bench_function("encode sparse lenet-300-100", |bench| {
        bench.iter(|| encode_model(black_box(&m), Encoding::SPARSE).unwrap())
    });
    let (bytes, _) = encode_model(&m, Encoding::SPARSE).unwrap();
    c.bench_function("decode sparse lenet-300-100", |bench| {
        bench.iter(|| decode_model(black_box(&bytes)).unwrap())
    });
    c.bench_function("rank prune fc1 to 10%", |bench| {
        bench.iter_batched(
            || init_model(Architecture::Lenet300100, 1).unwrap(),
            |mut m| prune_fraction_by_rank(&mut m, 0, 0.9),
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, kernels, forward, format);
criterion_main!(benches);
