mod common;

use common::{bits, random_batch};
use proptest::prelude::*;
use prunenet::engine::sgd_step;
use prunenet::pruning::{
    adjust_dropout, compute_threshold, masked_grad, prune_dead_neurons, prune_fraction_by_rank,
    prune_step, retrain, FreezePolicy, PruneConfig,
};
use prunenet::sparse::{decode_model, encode_model, Encoding};
use prunenet::{
    Dataset, DecayMode, InputShape, LayerSpec, LrSchedule, MaskedParam, Model, Rng, Tensor,
    TrainConfig,
};

fn param(weights: &[f32], mask: &[bool]) -> MaskedParam {
    let n = weights.len();
    MaskedParam::with_mask(
        Tensor::new([n], weights.to_vec()).unwrap(),
        Tensor::new(
            [n],
            mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        )
        .unwrap(),
        Tensor::zeros([1]),
    )
    .unwrap()
}

fn weights_and_mask() -> impl Strategy<Value = (Vec<f32>, Vec<bool>)> {
    (2usize..200).prop_flat_map(|n| {
        (
            prop::collection::vec(-3.0f32..3.0, n),
            prop::collection::vec(prop::bool::weighted(0.8), n),
        )
    })
}

/// Masked positions of every layer store +0.0.
fn quiescent(m: &Model) -> bool {
    m.weighted_layers().into_iter().all(|l| {
        let p = m.param(l).unwrap();
        p.weights()
            .data()
            .iter()
            .zip(p.mask().data())
            .all(|(w, &k)| k == 1.0 || w.to_bits() == 0)
    })
}

fn masks(m: &Model) -> Vec<Vec<f32>> {
    m.weighted_layers()
        .into_iter()
        .map(|l| m.param(l).unwrap().mask().data().to_vec())
        .collect()
}

/// No position goes from 0 to 1.
fn monotone(before: &[Vec<f32>], after: &[Vec<f32>]) -> bool {
    before
        .iter()
        .zip(after)
        .all(|(b, a)| b.iter().zip(a).all(|(&x, &y)| y <= x))
}

fn tiny_mlp(seed: u64) -> Model {
    let specs = vec![
        LayerSpec::dense("fc1", 16, 12).with_dropout(0.5),
        LayerSpec::dense("fc2", 12, 8).with_dropout(0.3),
        LayerSpec::dense("fc3", 8, 4).linear(),
    ];
    let input = InputShape {
        channels: 1,
        height: 4,
        width: 4,
    };
    Model::init(input, specs, seed).unwrap()
}

fn tiny_cnn(seed: u64) -> Model {
    let specs = vec![
        LayerSpec::conv("conv1", 1, 3, 3),
        LayerSpec::max_pool("pool1", 2),
        LayerSpec::conv("conv2", 3, 4, 2),
        LayerSpec::dense("fc1", 4, 6).with_dropout(0.5),
        LayerSpec::dense("fc2", 6, 4).linear(),
    ];
    let input = InputShape {
        channels: 1,
        height: 6,
        width: 6,
    };
    Model::init(input, specs, seed).unwrap()
}

fn tiny_data(input: InputShape, n: usize, seed: u64) -> Dataset {
    let mut rng = Rng::new(seed);
    let images = Tensor::from_fn([n, input.channels, input.height, input.width], |_| {
        rng.uniform_f32()
    });
    let labels = (0..n).map(|_| rng.below(4) as u8).collect();
    Dataset::new(images, labels).unwrap()
}

fn random_mask_prune(model: &mut Model, fraction: f64, seed: u64) {
    let mut rng = Rng::new(seed);
    for l in model.weighted_layers() {
        let n = model.param(l).unwrap().total();
        let v: Vec<usize> = (0..n).filter(|_| rng.uniform_f64() < fraction).collect();
        model.param_mut(l).unwrap().remove(v);
    }
}

/// 10,000 single-sample SGD steps with dropout and decay.
fn quiescence_run(mut model: Model, decay: DecayMode) {
    random_mask_prune(&mut model, 0.5, 3);
    let before = masks(&model);
    let data = tiny_data(model.input(), 100, 4);
    let cfg = TrainConfig {
        epochs: 100,
        batch_size: 1,
        lr: 0.05,
        schedule: LrSchedule::Fixed,
        decay,
        seed: 5,
    };
    let active = vec![true; model.specs().len()];
    let (out, log) = retrain(model, &data, &cfg, &active, true).unwrap();
    assert_eq!(log.len(), 100);
    assert_eq!(masks(&out), before);
    assert!(quiescent(&out));
}

#[test]
fn pruned_weights_stay_zero_over_ten_thousand_mlp_steps() {
    quiescence_run(tiny_mlp(1), DecayMode::L1(1e-3));
    quiescence_run(tiny_mlp(2), DecayMode::L2(1e-3));
}

#[test]
fn pruned_weights_stay_zero_over_ten_thousand_cnn_steps() {
    quiescence_run(tiny_cnn(1), DecayMode::L1(1e-3));
    quiescence_run(tiny_cnn(2), DecayMode::L2(1e-3));
}

#[derive(Clone, Debug)]
enum Op {
    Threshold(f64),
    Rank(f64),
    Retrain(u64),
    DeadUnits,
    Roundtrip,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0.0f64..1.5).prop_map(Op::Threshold),
        (0.0f64..0.5).prop_map(Op::Rank),
        (0u64..1000).prop_map(Op::Retrain),
        Just(Op::DeadUnits),
        Just(Op::Roundtrip),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn dropout_adjustment_is_homogeneous(
        d in 0.0f32..1.0,
        c_io in 1usize..1_000_000,
        r in 0.0f64..=1.0,
        k in 1usize..1000,
    ) {
        let c_ir = ((c_io as f64) * r).floor() as usize;
        let a = adjust_dropout(d, c_io, c_ir).unwrap();
        prop_assert_eq!(a, adjust_dropout(d, c_io * k, c_ir * k).unwrap());
        let expect = d as f64 * (c_ir as f64 / c_io as f64).sqrt();
        prop_assert!((a as f64 - expect).abs() <= expect * 1e-7);
        prop_assert!(a <= d);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn higher_quality_keeps_a_subset((w, m) in weights_and_mask(), q1 in 0.0f64..3.0, dq in 0.0f64..3.0) {
        let p = param(&w, &m);
        prop_assume!(p.live_count() > 0);
        let q2 = q1 + dq;
        let mut a = p.clone();
        let mut b = p.clone();
        a.prune_below(compute_threshold(&p, q1).unwrap());
        b.prune_below(compute_threshold(&p, q2).unwrap());
        for i in 0..p.total() {
            prop_assert!(!b.is_live(i) || a.is_live(i));
            prop_assert!(!a.is_live(i) || p.is_live(i));
        }
    }

    #[test]
    fn masked_gradient_steps_keep_zeros(
        (w, m) in weights_and_mask(),
        steps in 1usize..50,
        seed in 0u64..1000,
        l1 in any::<bool>(),
    ) {
        let mut p = param(&w, &m);
        let decay = if l1 { DecayMode::L1(1e-2) } else { DecayMode::L2(1e-2) };
        let mut rng = Rng::new(seed);
        for _ in 0..steps {
            let g = Tensor::from_fn([p.total()], |_| rng.uniform_range(-5.0, 5.0));
            let g = masked_grad(&g, p.mask()).unwrap();
            let mut t = p.weights().clone();
            sgd_step(&mut t, &g, 0.1, decay).unwrap();
            for (i, v) in t.data().iter().enumerate() {
                if !p.is_live(i) {
                    prop_assert_eq!(v.to_bits(), 0);
                }
            }
            p.weights_mut_unchecked().copy_from_slice(t.data());
        }
        prop_assert!(p.is_consistent());
    }

    #[test]
    fn masks_only_shrink_along_any_pipeline(seed in 0u64..1000, ops in prop::collection::vec(op(), 1..8)) {
        let mut model = if seed % 2 == 0 { tiny_mlp(seed) } else { tiny_cnn(seed) };
        let data = tiny_data(model.input(), 24, seed);
        let weighted = model.weighted_layers().len();
        for op in ops {
            let before = masks(&model);
            match op {
                Op::Threshold(q) => {
                    let cfg = PruneConfig {
                        quality: vec![q; weighted],
                        iterations: 1,
                        quality_growth: 1.0,
                        prune_fraction: None,
                        freeze: FreezePolicy::None,
                        retrain: TrainConfig::default(),
                        dropout_adjust: true,
                        tolerance: 0.0,
                    };
                    if model.weighted_layers().iter().all(|&l| model.param(l).unwrap().live_count() > 0) {
                        prune_step(&mut model, &cfg, 1).unwrap();
                    }
                }
                Op::Rank(f) => {
                    for l in model.weighted_layers() {
                        prune_fraction_by_rank(&mut model, l, f);
                    }
                }
                Op::Retrain(s) => {
                    let cfg = TrainConfig {
                        epochs: 1,
                        batch_size: 4,
                        lr: 0.1,
                        schedule: LrSchedule::Fixed,
                        decay: DecayMode::L1(1e-3),
                        seed: s,
                    };
                    let active = vec![true; model.specs().len()];
                    if let Ok((m, _)) = retrain(model.clone(), &data, &cfg, &active, true) {
                        model = m;
                    }
                }
                Op::DeadUnits => {
                    prune_dead_neurons(&mut model);
                }
                Op::Roundtrip => {
                    let (bytes, _) = encode_model(&model, Encoding::SPARSE).unwrap();
                    model = decode_model(&bytes).unwrap();
                }
            }
            prop_assert!(monotone(&before, &masks(&model)));
            prop_assert!(quiescent(&model));
        }
    }

    #[test]
    fn masked_storage_is_invisible(seed in 0u64..1000, fill in -100.0f32..100.0) {
        let mut model = if seed % 2 == 0 { tiny_mlp(seed) } else { tiny_cnn(seed) };
        random_mask_prune(&mut model, 0.5, seed);
        let x = random_batch(model.input(), 4, seed);
        let before = model.predict(&x).unwrap();
        for l in model.weighted_layers() {
            let p = model.param_mut(l).unwrap();
            let mask = p.mask().data().to_vec();
            for (w, k) in p.weights_mut_unchecked().iter_mut().zip(mask) {
                if k == 0.0 {
                    *w = fill;
                }
            }
        }
        prop_assert_eq!(bits(&before), bits(&model.predict(&x).unwrap()));
    }

    #[test]
    fn dead_unit_removal_preserves_logits(seed in 0u64..1000, fraction in 0.3f64..0.95) {
        let mut model = if seed % 2 == 0 { tiny_mlp(seed) } else { tiny_cnn(seed) };
        random_mask_prune(&mut model, fraction, seed);
        let mut rng = Rng::new(seed ^ 0xdead);
        for l in model.weighted_layers() {
            for b in model.param_mut(l).unwrap().bias_mut() {
                *b = match rng.below(3) {
                    0 => 0.0,
                    _ => rng.uniform_range(-0.3, 0.3),
                };
            }
        }
        let before = model.clone();
        prune_dead_neurons(&mut model);
        let x = random_batch(model.input(), 100, seed);
        prop_assert_eq!(bits(&before.predict(&x).unwrap()), bits(&model.predict(&x).unwrap()));
        prop_assert!(monotone(&masks(&before), &masks(&model)));
    }
}
