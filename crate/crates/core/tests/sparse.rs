mod common;

use common::{bits, random_batch, random_prune};
use prunenet::sparse::{
    decode_model, decode_relative, encode_dense, encode_model, encode_relative, max_gap,
    packed_len, Encoding,
};
use prunenet::{
    export_model, import_model, init_model, load_checkpoint, save_checkpoint, Architecture,
    InputShape, LayerSpec, MaskedParam, Model, Rng, Tensor,
};

/// Independent reference: every gap above `g` becomes `(g-1)/g` fillers
/// followed by the remainder.
fn oracle_gaps(positions: &[usize], bits: u8) -> (Vec<u32>, usize) {
    let g = (1usize << bits) - 1;
    let mut out = Vec::new();
    let mut fillers = 0;
    let mut prev = -1isize;
    for &p in positions {
        let gap = (p as isize - prev) as usize;
        let f = (gap - 1) / g;
        fillers += f;
        out.extend(std::iter::repeat_n(g as u32, f));
        out.push((gap - f * g) as u32);
        prev = p as isize;
    }
    (out, fillers)
}

fn random_sparse(rng: &mut Rng, len: usize, density: f64) -> Vec<f32> {
    (0..len)
        .map(|_| {
            if rng.uniform_f64() < density {
                let v = rng.uniform_range(-2.0, 2.0);
                if v == 0.0 {
                    1.0
                } else {
                    v
                }
            } else {
                0.0
            }
        })
        .collect()
}

#[test]
fn thousand_random_vectors_roundtrip_at_every_width() {
    let mut rng = Rng::new(2024);
    for bits in 1..=16u8 {
        let count = if bits == 5 || bits == 8 { 1000 } else { 100 };
        for _ in 0..count {
            let len = 1 + rng.below(3000) as usize;
            let density = [0.0, 0.001, 0.01, 0.1, 0.5, 1.0][rng.below(6) as usize];
            let dense = random_sparse(&mut rng, len, density);
            let positions: Vec<usize> = (0..len).filter(|&i| dense[i] != 0.0).collect();
            let (gaps, values) = encode_dense(&dense, bits).unwrap();
            let (expect, fillers) = oracle_gaps(&positions, bits);
            assert_eq!(gaps, expect);
            assert_eq!(values.len(), positions.len() + fillers);
            assert_eq!(values.iter().filter(|v| v.to_bits() == 0).count(), fillers);
            assert!(gaps.iter().all(|&g| g >= 1 && g as usize <= max_gap(bits)));
            let packed = prunenet::sparse::pack(&gaps, bits).unwrap();
            assert_eq!(packed.len(), (gaps.len() * bits as usize).div_ceil(8));
            let unpacked = prunenet::sparse::unpack(&packed, bits, gaps.len()).unwrap();
            let decoded = decode_relative(&unpacked, &values, len).unwrap();
            assert_eq!(
                decoded.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                dense.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}

#[test]
fn worked_example_positions_2_7_40() {
    let (gaps, values) = encode_relative(&[2, 7, 40], &[1.0, 2.0, 3.0], 5).unwrap();
    assert_eq!(gaps, [3, 5, 31, 2]);
    assert_eq!(values, [1.0, 2.0, 0.0, 3.0]);
    let d = decode_relative(&gaps, &values, 41).unwrap();
    assert_eq!(d[40], 3.0);
    assert_eq!(d.iter().filter(|v| **v != 0.0).count(), 3);
}

#[test]
fn single_entry_at_zero_and_empty_input() {
    let (g, v) = encode_relative(&[0], &[0.7], 5).unwrap();
    assert_eq!((g, v), (vec![1], vec![0.7]));
    let (g, v) = encode_relative(&[], &[], 5).unwrap();
    assert!(g.is_empty() && v.is_empty());
    assert_eq!(decode_relative(&[], &[], 4).unwrap(), [0.0; 4]);
}

#[test]
fn malformed_streams_are_rejected() {
    assert!(encode_relative(&[3, 3], &[1.0, 1.0], 5).is_err());
    assert!(encode_relative(&[4, 2], &[1.0, 1.0], 5).is_err());
    assert!(decode_relative(&[1, 2], &[1.0], 10).is_err());
    assert!(decode_relative(&[5, 6], &[1.0, 1.0], 10).is_err());
    assert!(decode_relative(&[0], &[1.0], 10).is_err());
}

#[test]
fn negative_zero_is_kept() {
    let dense = [0.0, -0.0, 1.0];
    let (g, v) = encode_dense(&dense, 5).unwrap();
    assert_eq!(g, [2, 1]);
    let d = decode_relative(&g, &v, 3).unwrap();
    assert_eq!(d[1].to_bits(), (-0.0f32).to_bits());
}

fn pruned(arch: Architecture, fraction: f64, seed: u64) -> Model {
    let mut m = init_model(arch, seed).unwrap();
    random_prune(&mut m, fraction, seed + 1);
    m
}

#[test]
fn exported_models_reproduce_logits_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for (arch, f) in [
        (Architecture::Lenet300100, 0.92),
        (Architecture::Lenet5, 0.7),
    ] {
        let m = pruned(arch, f, 3);
        let path = dir.path().join("m.spnn");
        export_model(&m, &path).unwrap();
        let back = import_model(&path).unwrap();
        let x = random_batch(InputShape::MNIST, 100, 4);
        assert_eq!(
            bits(&m.predict(&x).unwrap()),
            bits(&back.predict(&x).unwrap())
        );
        for l in m.weighted_layers() {
            assert_eq!(m.param(l).unwrap().mask(), back.param(l).unwrap().mask());
        }
    }
}

#[test]
fn checkpoints_roundtrip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = pruned(Architecture::Lenet5, 0.5, 8);
    // A live weight that is exactly zero keeps its mask bit in dense mode.
    let conv1 = m.param_mut(0).unwrap();
    let i = (0..conv1.total()).find(|&i| conv1.is_live(i)).unwrap();
    conv1.weights_mut_unchecked()[i] = 0.0;
    m.state.epochs = 7;
    m.state.lr = 0.025;
    let path = dir.path().join("c.ckpt");
    save_checkpoint(&m, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, m);
    assert!(back.param(0).unwrap().is_live(i));
}

#[test]
fn file_size_follows_the_layout() {
    let m = pruned(Architecture::Lenet300100, 0.9, 5);
    let (bytes, report) = encode_model(&m, Encoding::SPARSE).unwrap();
    assert_eq!(bytes.len(), report.file_bytes);
    let mut expected = 40 + 4;
    for (l, st) in m.weighted_layers().into_iter().zip(&report.layers) {
        let name = &m.specs()[l].name;
        // kind, flags, name, dropout, two dims, index bits, entry count
        let header = 3 + name.len() + 4 + 8 + 1 + 4;
        assert_eq!(st.header_bytes, header);
        assert_eq!(st.index_bits, 5);
        assert_eq!(st.index_bytes, packed_len(st.entries, 5));
        assert_eq!(st.index_bytes, (st.entries * 5).div_ceil(8));
        assert_eq!(st.value_bytes, 4 * st.entries);
        assert_eq!(st.entries - st.fillers, m.param(l).unwrap().live_count());
        expected += header + st.index_bytes + st.value_bytes + st.bias_bytes;
    }
    assert_eq!(bytes.len(), expected);
    assert_eq!(report.sparse_bytes(), report.file_bytes);
    assert!((report.index_overhead() - 5.0 / 32.0).abs() < 1e-12);
}

#[test]
fn conv_layers_default_to_eight_bits_and_can_be_overridden() {
    let m = pruned(Architecture::Lenet5, 0.8, 1);
    let (_, r) = encode_model(&m, Encoding::SPARSE).unwrap();
    let widths: Vec<u8> = r.layers.iter().map(|l| l.index_bits).collect();
    assert_eq!(widths, [8, 8, 5, 5]);
    let (bytes, r) = encode_model(
        &m,
        Encoding::Sparse {
            index_bits: Some(12),
        },
    )
    .unwrap();
    assert!(r.layers.iter().all(|l| l.index_bits == 12));
    let back = decode_model(&bytes).unwrap();
    let x = random_batch(InputShape::MNIST, 10, 2);
    assert_eq!(
        bits(&m.predict(&x).unwrap()),
        bits(&back.predict(&x).unwrap())
    );
}

#[test]
fn damaged_files_are_rejected() {
    let m = pruned(Architecture::Lenet300100, 0.9, 5);
    let (bytes, _) = encode_model(&m, Encoding::SPARSE).unwrap();
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(
        decode_model(&bad_magic),
        Err(prunenet::Error::BadMagic { .. })
    ));
    let mut bad_version = bytes.clone();
    bad_version[4] = 9;
    assert!(matches!(
        decode_model(&bad_version),
        Err(prunenet::Error::UnsupportedVersion(9))
    ));
    for pos in [10, 60, bytes.len() / 2, bytes.len() - 5, bytes.len() - 1] {
        let mut flipped = bytes.clone();
        flipped[pos] ^= 0x10;
        assert!(decode_model(&flipped).is_err(), "flip at {pos}");
    }
    for len in [0, 3, 20, bytes.len() / 3, bytes.len() - 1] {
        assert!(decode_model(&bytes[..len]).is_err(), "truncated to {len}");
    }
}

/// The committed example from the format documentation.
fn tiny_model() -> Model {
    let mut w1 = vec![0.0f32; 48];
    w1[2] = 0.5;
    w1[7] = -1.0;
    w1[40] = 2.0;
    let mut w2 = vec![0.0f32; 12];
    w2[0] = 1.0;
    w2[11] = -0.5;
    let mask = |w: &[f32]| {
        w.iter()
            .map(|v| (*v != 0.0) as u8 as f32)
            .collect::<Vec<f32>>()
    };
    let p1 = MaskedParam::with_mask(
        Tensor::new([8, 6], w1.clone()).unwrap(),
        Tensor::new([8, 6], mask(&w1)).unwrap(),
        Tensor::new([6], vec![0.0, 0.25, 0.0, 0.0, 0.0, 0.0]).unwrap(),
    )
    .unwrap();
    let p2 = MaskedParam::with_mask(
        Tensor::new([6, 2], w2.clone()).unwrap(),
        Tensor::new([6, 2], mask(&w2)).unwrap(),
        Tensor::new([2], vec![0.0, 1.0]).unwrap(),
    )
    .unwrap();
    Model::from_parts(
        InputShape {
            channels: 1,
            height: 1,
            width: 8,
        },
        vec![
            LayerSpec::dense("fc1", 8, 6),
            LayerSpec::dense("fc2", 6, 2).linear(),
        ],
        vec![Some(p1), Some(p2)],
        0,
        Default::default(),
    )
    .unwrap()
}

#[test]
fn committed_example_file_matches_the_encoder() {
    let fixture = std::fs::read(common::fixture_dir().join("tiny.spnn")).unwrap();
    let (bytes, report) = encode_model(&tiny_model(), Encoding::SPARSE).unwrap();
    assert_eq!(bytes, fixture);
    assert_eq!(bytes.len(), 151);
    assert_eq!(&bytes[63..66], &[0xa3, 0x7c, 0x01]);
    assert_eq!(report.layers[0].entries, 4);
    assert_eq!(report.layers[0].fillers, 1);
    assert_eq!(decode_model(&fixture).unwrap(), tiny_model());
}
