use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Bias added to each output element before the final rounding.
#[derive(Clone, Copy)]
pub(crate) enum Bias<'a> {
    None,
    /// One value per output row (conv filters).
    PerRow(&'a [f32]),
    /// One value per output column (dense units).
    PerCol(&'a [f32]),
}

const ROW_BLOCK: usize = 4;

/// `out[i][j] = f32(Σ_p a[i][p]·b[p][j] + bias)`.
///
/// Products and sums are taken in `f64`, over `p` in ascending order starting
/// from `+0.0`, and rounded once at the store. Zero entries of `a` are skipped:
/// a running sum that starts at `+0.0` can never become `-0.0`, so adding a
/// signed zero never changes it and the skip is bit-exact.
pub(crate) fn gemm(
    a: &[f32],
    b: &[f32],
    m: usize,
    k: usize,
    n: usize,
    bias: Bias,
    out: &mut [f32],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let mut acc = vec![0f64; ROW_BLOCK * n];
    let mut i0 = 0;
    while i0 < m {
        let rows = ROW_BLOCK.min(m - i0);
        acc.fill(0.0);
        if rows == ROW_BLOCK {
            let (acc0, rest) = acc.split_at_mut(n);
            let (acc1, rest) = rest.split_at_mut(n);
            let (acc2, acc3) = rest.split_at_mut(n);
            for p in 0..k {
                let a0 = a[i0 * k + p];
                let a1 = a[(i0 + 1) * k + p];
                let a2 = a[(i0 + 2) * k + p];
                let a3 = a[(i0 + 3) * k + p];
                if a0 == 0.0 && a1 == 0.0 && a2 == 0.0 && a3 == 0.0 {
                    continue;
                }
                let (a0, a1, a2, a3) = (a0 as f64, a1 as f64, a2 as f64, a3 as f64);
                let brow = &b[p * n..(p + 1) * n];
                for ((((bv, s0), s1), s2), s3) in brow
                    .iter()
                    .zip(acc0.iter_mut())
                    .zip(acc1.iter_mut())
                    .zip(acc2.iter_mut())
                    .zip(acc3.iter_mut())
                {
                    let bv = *bv as f64;
                    *s0 += a0 * bv;
                    *s1 += a1 * bv;
                    *s2 += a2 * bv;
                    *s3 += a3 * bv;
                }
            }
        } else {
            for r in 0..rows {
                let s = &mut acc[r * n..(r + 1) * n];
                let arow = &a[(i0 + r) * k..(i0 + r + 1) * k];
                for (p, &av) in arow.iter().enumerate() {
                    if av == 0.0 {
                        continue;
                    }
                    let av = av as f64;
                    for (s, &bv) in s.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                        *s += av * bv as f64;
                    }
                }
            }
        }
        for r in 0..rows {
            let i = i0 + r;
            let s = &acc[r * n..(r + 1) * n];
            let o = &mut out[i * n..(i + 1) * n];
            match bias {
                Bias::None => {
                    for (o, &s) in o.iter_mut().zip(s) {
                        *o = s as f32;
                    }
                }
                Bias::PerRow(bias) => {
                    let bv = bias[i] as f64;
                    for (o, &s) in o.iter_mut().zip(s) {
                        *o = (s + bv) as f32;
                    }
                }
                Bias::PerCol(bias) => {
                    for ((o, &s), &bv) in o.iter_mut().zip(s).zip(bias) {
                        *o = (s + bv as f64) as f32;
                    }
                }
            }
        }
        i0 += rows;
    }
}

/// Matrix product of `a [m×k]` and `b [k×n]`.
///
/// Every output element is the `f64` sum of its `k` products taken in
/// ascending `k` order, rounded once to `f32`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::shape(format!(
            "matmul inner dimensions differ: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = vec![0.0; m * n];
    gemm(a.data(), b.data(), m, k, n, Bias::None, &mut out);
    Tensor::new(vec![m, n], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Rng;

    fn naive(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = a.dims2().unwrap();
        let (_, n) = b.dims2().unwrap();
        let mut out = Tensor::zeros(vec![m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut s = 0f64;
                for p in 0..k {
                    s += a.get2(i, p) as f64 * b.get2(p, j) as f64;
                }
                out.data_mut()[i * n + j] = s as f32;
            }
        }
        out
    }

    fn random(shape: [usize; 2], rng: &mut Rng, zero_frac: f32) -> Tensor {
        Tensor::from_fn(shape.to_vec(), |_| {
            if rng.uniform_f32() < zero_frac {
                0.0
            } else {
                rng.uniform_range(-2.0, 2.0)
            }
        })
    }

    fn bits(t: &Tensor) -> Vec<u32> {
        t.data().iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn identity() {
        let i2 = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let x = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&i2, &x).unwrap(), x);
    }

    #[test]
    fn row_times_column() {
        let a = Tensor::from_rows(&[&[1.0, 2.0]]).unwrap();
        let b = Tensor::from_rows(&[&[3.0], &[4.0]]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matches_triple_loop_bitwise() {
        let mut rng = Rng::new(11);
        let a = random([5, 7], &mut rng, 0.0);
        let b = random([7, 3], &mut rng, 0.0);
        assert_eq!(bits(&matmul(&a, &b).unwrap()), bits(&naive(&a, &b)));
        // Odd sizes and sparse lhs exercise both the blocked and tail paths.
        for (m, k, n) in [(9, 13, 17), (4, 1, 1), (1, 30, 2), (33, 64, 10)] {
            let a = random([m, k], &mut rng, 0.6);
            let b = random([k, n], &mut rng, 0.1);
            assert_eq!(bits(&matmul(&a, &b).unwrap()), bits(&naive(&a, &b)));
        }
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![2, 3]);
        assert!(matches!(matmul(&a, &b), Err(Error::Shape(_))));
    }
}
