//! Mask images and the banding measure of the first layer's mask.

use std::path::Path;

use crate::error::{Error, Result};
use crate::pruning::MaskedParam;
use crate::sparse::write_atomic;

fn dims2(p: &MaskedParam) -> Result<(usize, usize)> {
    match p.mask().shape() {
        [rows, cols] => Ok((*rows, *cols)),
        other => Err(Error::shape(format!(
            "bitmap needs a 2-D weight matrix, got {other:?}"
        ))),
    }
}

/// Binary PGM (P5) of a `[fan_in × fan_out]` mask: one image row per output
/// unit, one column per input, 255 where the connection survives.
pub fn sparsity_pgm(p: &MaskedParam) -> Result<Vec<u8>> {
    let (fan_in, fan_out) = dims2(p)?;
    let mask = p.mask().data();
    let mut out = format!("P5\n{fan_in} {fan_out}\n255\n").into_bytes();
    out.reserve(fan_in * fan_out);
    for j in 0..fan_out {
        out.extend((0..fan_in).map(|i| {
            if mask[i * fan_out + j] != 0.0 {
                255u8
            } else {
                0
            }
        }));
    }
    Ok(out)
}

pub fn sparsity_bitmap(p: &MaskedParam, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &sparsity_pgm(p)?)
}

/// Banding of a mask whose inputs are image pixels in row-major order: the
/// inputs split into bands of `band` consecutive pixels (one image row
/// each), every band into thirds by column. Returns mean center-third
/// density over mean outer-thirds density, both averaged over the bands.
pub fn banding_ratio(p: &MaskedParam, band: usize) -> Result<f64> {
    let (fan_in, fan_out) = dims2(p)?;
    if band == 0 || fan_in % band != 0 {
        return Err(Error::invalid(format!(
            "fan_in {fan_in} is not a multiple of {band}"
        )));
    }
    let bands = fan_in / band;
    let mask = p.mask().data();
    let (mut center, mut outer) = (0.0, 0.0);
    for b in 0..bands {
        let (mut live, mut cells) = ([0usize; 2], [0usize; 2]);
        for col in 0..band {
            let third = col * 3 / band;
            let slot = (third == 1) as usize;
            let i = b * band + col;
            cells[slot] += fan_out;
            live[slot] += mask[i * fan_out..(i + 1) * fan_out]
                .iter()
                .filter(|m| **m != 0.0)
                .count();
        }
        outer += live[0] as f64 / cells[0] as f64;
        center += live[1] as f64 / cells[1] as f64;
    }
    if outer == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(center / outer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Tensor;

    #[test]
    fn all_ones_is_white_with_matrix_dims() {
        let p = MaskedParam::new(Tensor::ones(vec![6, 4]), Tensor::zeros(vec![4]));
        let img = sparsity_pgm(&p).unwrap();
        let header = b"P5\n6 4\n255\n";
        assert_eq!(&img[..header.len()], header);
        assert_eq!(img.len(), header.len() + 24);
        assert!(img[header.len()..].iter().all(|&v| v == 255));
    }

    #[test]
    fn rows_are_output_units() {
        // weight (input 2, output 1) masked → image row 1, column 2 black
        let mut mask = vec![1.0; 6];
        mask[2 * 2 + 1] = 0.0;
        let p = MaskedParam::with_mask(
            Tensor::ones(vec![3, 2]),
            Tensor::new(vec![3, 2], mask).unwrap(),
            Tensor::zeros(vec![2]),
        )
        .unwrap();
        let img = sparsity_pgm(&p).unwrap();
        let px = &img[img.len() - 6..];
        assert_eq!(px, &[255, 255, 255, 255, 255, 0]);
    }

    #[test]
    fn non_matrix_is_rejected() {
        let p = MaskedParam::new(Tensor::ones(vec![2, 1, 3, 3]), Tensor::zeros(vec![2]));
        assert!(sparsity_pgm(&p).is_err());
    }

    #[test]
    fn banding_of_centered_mask() {
        // 2 bands of 6 pixels: thirds are cols {0,1}, {2,3}, {4,5}
        let mask: Vec<f32> = (0..12)
            .map(|i| match i % 6 {
                0 | 2 | 3 => 1.0,
                _ => 0.0,
            })
            .collect();
        let p = MaskedParam::with_mask(
            Tensor::ones(vec![12, 1]),
            Tensor::new(vec![12, 1], mask).unwrap(),
            Tensor::zeros(vec![1]),
        )
        .unwrap();
        // center density 1, outer 1/4
        assert_eq!(banding_ratio(&p, 6).unwrap(), 4.0);
        let full = MaskedParam::new(Tensor::ones(vec![12, 1]), Tensor::zeros(vec![1]));
        assert_eq!(banding_ratio(&full, 6).unwrap(), 1.0);
        assert!(banding_ratio(&full, 5).is_err());
    }
}
