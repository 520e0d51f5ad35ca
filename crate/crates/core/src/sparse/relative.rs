//! Relative (gap) coding of sparse positions.
//!
//! Each stored entry records the distance from the previous stored position,
//! starting from −1, so position 0 has gap 1. A gap larger than the largest
//! representable value `2^bits − 1` is split by filler entries that advance
//! by the maximum and carry the value 0.0.

use crate::error::{Error, Result};

/// Largest gap representable with `bits` bits.
pub fn max_gap(bits: u8) -> usize {
    (1usize << bits) - 1
}

/// Encodes strictly increasing `positions` with their `values`.
pub fn encode_relative(
    positions: &[usize],
    values: &[f32],
    bits: u8,
) -> Result<(Vec<u32>, Vec<f32>)> {
    if !(1..=16).contains(&bits) {
        return Err(Error::invalid(format!("index width {bits} outside 1..=16")));
    }
    if positions.len() != values.len() {
        return Err(Error::invalid(format!(
            "{} positions but {} values",
            positions.len(),
            values.len()
        )));
    }
    let g_max = max_gap(bits);
    let mut gaps = Vec::with_capacity(positions.len());
    let mut vals = Vec::with_capacity(values.len());
    let mut prev: isize = -1;
    for (&pos, &v) in positions.iter().zip(values) {
        if !v.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite value at position {pos}"
            )));
        }
        if pos as isize <= prev {
            return Err(Error::invalid(format!(
                "positions must be strictly increasing ({pos} after {prev})"
            )));
        }
        let mut gap = (pos as isize - prev) as usize;
        while gap > g_max {
            gaps.push(g_max as u32);
            vals.push(0.0);
            gap -= g_max;
        }
        gaps.push(gap as u32);
        vals.push(v);
        prev = pos as isize;
    }
    Ok((gaps, vals))
}

/// Encodes the entries of `dense` whose bit pattern is nonzero (so `-0.0`
/// is kept as an entry).
pub fn encode_dense(dense: &[f32], bits: u8) -> Result<(Vec<u32>, Vec<f32>)> {
    let (positions, values): (Vec<usize>, Vec<f32>) = dense
        .iter()
        .enumerate()
        .filter(|(_, v)| v.to_bits() != 0)
        .map(|(i, &v)| (i, v))
        .unzip();
    encode_relative(&positions, &values, bits)
}

/// Rebuilds a dense vector of length `len`.
pub fn decode_relative(gaps: &[u32], values: &[f32], len: usize) -> Result<Vec<f32>> {
    if gaps.len() != values.len() {
        return Err(Error::CorruptStream(format!(
            "{} gaps but {} values",
            gaps.len(),
            values.len()
        )));
    }
    let mut out = vec![0.0f32; len];
    let mut pos: isize = -1;
    for (&g, &v) in gaps.iter().zip(values) {
        if g == 0 {
            return Err(Error::CorruptStream("zero gap".into()));
        }
        pos += g as isize;
        if pos as usize >= len {
            return Err(Error::CorruptStream(format!(
                "position {pos} beyond length {len}"
            )));
        }
        out[pos as usize] = v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_position_has_gap_one() {
        assert_eq!(
            encode_relative(&[0], &[2.5], 5).unwrap(),
            (vec![1], vec![2.5])
        );
    }

    #[test]
    fn long_gap_gets_a_filler() {
        let (g, v) = encode_relative(&[2, 7, 40], &[1.0, 2.0, 3.0], 5).unwrap();
        assert_eq!(g, vec![3, 5, 31, 2]);
        assert_eq!(v, vec![1.0, 2.0, 0.0, 3.0]);
        let d = decode_relative(&g, &v, 41).unwrap();
        assert_eq!(d[40], 3.0);
        assert_eq!(d.iter().filter(|x| **x != 0.0).count(), 3);
    }

    #[test]
    fn gap_equal_to_max_needs_no_filler() {
        let (g, _) = encode_relative(&[30], &[1.0], 5).unwrap();
        assert_eq!(g, vec![31]);
        let (g, _) = encode_relative(&[31], &[1.0], 5).unwrap();
        assert_eq!(g, vec![31, 1]);
    }

    #[test]
    fn empty_and_all_zero() {
        assert_eq!(encode_relative(&[], &[], 8).unwrap(), (vec![], vec![]));
        let (g, v) = encode_dense(&[0.0; 10], 8).unwrap();
        assert!(g.is_empty() && v.is_empty());
        assert_eq!(decode_relative(&g, &v, 10).unwrap(), vec![0.0; 10]);
    }

    #[test]
    fn errors() {
        assert!(encode_relative(&[3, 3], &[1.0, 1.0], 5).is_err());
        assert!(encode_relative(&[4, 2], &[1.0, 1.0], 5).is_err());
        assert!(encode_relative(&[1], &[f32::NAN], 5).is_err());
        assert!(encode_relative(&[1], &[], 5).is_err());
        assert!(matches!(
            decode_relative(&[1, 2], &[1.0], 5),
            Err(Error::CorruptStream(_))
        ));
        assert!(matches!(
            decode_relative(&[6], &[1.0], 5),
            Err(Error::CorruptStream(_))
        ));
    }
}
