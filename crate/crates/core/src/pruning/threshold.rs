use crate::engine::Tensor;
use crate::error::{Error, Result};

use super::masked::MaskedParam;

/// Population standard deviation of the unmasked weights (two-pass, `f64`).
pub fn layer_std(p: &MaskedParam) -> Result<f64> {
    let n = p.live_count();
    if n == 0 {
        return Err(Error::AllMasked("layer".into()));
    }
    let mean = p.live_weights().map(|w| w as f64).sum::<f64>() / n as f64;
    let var = p
        .live_weights()
        .map(|w| {
            let d = w as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n as f64;
    Ok(var.sqrt())
}

/// Pruning threshold: quality parameter times the layer's weight spread.
pub fn compute_threshold(p: &MaskedParam, quality: f64) -> Result<f64> {
    if !(quality >= 0.0 && quality.is_finite()) {
        return Err(Error::invalid(format!("quality {quality} must be >= 0")));
    }
    Ok(quality * layer_std(p)?)
}

/// Quality parameter whose threshold removes the `ceil(fraction · n)`
/// smallest-magnitude live weights (fewer when magnitudes tie at the cut).
pub fn quality_for_fraction(p: &MaskedParam, fraction: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "fraction {fraction} outside [0, 1]"
        )));
    }
    let std = layer_std(p)?;
    let mut mags: Vec<f32> = p.live_weights().map(f32::abs).collect();
    mags.sort_by(f32::total_cmp);
    let k = (fraction * mags.len() as f64).ceil() as usize;
    if k == 0 {
        return Ok(0.0);
    }
    if std == 0.0 {
        return Err(Error::invalid("live weights have zero spread"));
    }
    let cut = match mags.get(k) {
        Some(&m) => m as f64,
        None => 2.0 * mags[mags.len() - 1] as f64 + f64::MIN_POSITIVE,
    };
    Ok(cut / std)
}

/// Masks live weights with `|w| < threshold` (strict, so weights exactly at
/// the threshold survive). Survivors keep their values; masked entries are
/// never revived.
pub fn prune_layer(p: &MaskedParam, threshold: f64) -> Result<MaskedParam> {
    if !(threshold >= 0.0) {
        return Err(Error::invalid(format!(
            "threshold {threshold} must be >= 0"
        )));
    }
    let mut out = p.clone();
    out.prune_below(threshold);
    Ok(out)
}

/// `grad ⊙ mask`.
pub fn masked_grad(grad: &Tensor, mask: &Tensor) -> Result<Tensor> {
    grad.zip_map(mask, |g, m| if m != 0.0 { g } else { 0.0 })
}

pub(crate) fn mask_gradient(grad: &mut [f32], mask: &[f32]) {
    for (g, &m) in grad.iter_mut().zip(mask) {
        if m == 0.0 {
            *g = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Rng;

    fn param(w: &[f32], mask: &[f32]) -> MaskedParam {
        MaskedParam::with_mask(
            Tensor::new(vec![w.len()], w.to_vec()).unwrap(),
            Tensor::new(vec![mask.len()], mask.to_vec()).unwrap(),
            Tensor::zeros(vec![1]),
        )
        .unwrap()
    }

    #[test]
    fn std_of_alternating_ones() {
        let p = param(&[1.0, -1.0, 1.0, -1.0], &[1.0; 4]);
        assert_eq!(layer_std(&p).unwrap(), 1.0);
    }

    #[test]
    fn std_excludes_masked() {
        let p = param(&[1.0, -1.0, 5.0], &[1.0, 1.0, 0.0]);
        assert_eq!(layer_std(&p).unwrap(), 1.0);
    }

    #[test]
    fn std_all_masked_is_an_error() {
        let p = param(&[1.0, 2.0], &[0.0, 0.0]);
        assert!(matches!(layer_std(&p), Err(Error::AllMasked(_))));
    }

    #[test]
    fn std_matches_high_precision_oracle() {
        // Oracle: sum-of-squares form, accumulated with Kahan compensation.
        let mut rng = Rng::new(31);
        let n = 5000;
        let w: Vec<f32> = (0..n).map(|_| rng.uniform_range(-0.3, 0.5)).collect();
        let m: Vec<f32> = (0..n)
            .map(|_| if rng.uniform_f32() < 0.7 { 1.0 } else { 0.0 })
            .collect();
        let p = param(&w, &m);
        let live: Vec<f64> = w
            .iter()
            .zip(&m)
            .filter(|(_, &m)| m == 1.0)
            .map(|(&w, _)| w as f64)
            .collect();
        let kahan = |it: &mut dyn Iterator<Item = f64>| {
            let (mut s, mut c) = (0f64, 0f64);
            for v in it {
                let y = v - c;
                let t = s + y;
                c = (t - s) - y;
                s = t;
            }
            s
        };
        let k = live.len() as f64;
        let s1 = kahan(&mut live.iter().copied());
        let s2 = kahan(&mut live.iter().map(|v| v * v));
        let oracle = (s2 / k - (s1 / k).powi(2)).sqrt();
        assert!((layer_std(&p).unwrap() - oracle).abs() < 1e-6);
    }

    #[test]
    fn threshold_is_quality_times_std() {
        let p = param(&[1.0, -1.0, 1.0, -1.0], &[1.0; 4]);
        assert_eq!(compute_threshold(&p, 0.0).unwrap(), 0.0);
        assert!((compute_threshold(&p, 0.7).unwrap() - 0.7).abs() < 1e-12);
        assert!(compute_threshold(&p, -1.0).is_err());
    }

    #[test]
    fn prune_example() {
        let p = param(&[0.2, -0.05, 0.3], &[1.0; 3]);
        let q = prune_layer(&p, 0.1).unwrap();
        assert_eq!(q.mask().data(), &[1.0, 0.0, 1.0]);
        assert_eq!(q.weights().data(), &[0.2, 0.0, 0.3]);
    }

    #[test]
    fn weight_at_threshold_survives() {
        let p = param(&[0.5, -0.5, 0.25], &[1.0; 3]);
        let q = prune_layer(&p, 0.5).unwrap();
        assert_eq!(q.mask().data(), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn infinite_threshold_masks_everything() {
        let p = param(&[0.5, -7.0, 1e30], &[1.0; 3]);
        let q = prune_layer(&p, f64::INFINITY).unwrap();
        assert_eq!(q.live_count(), 0);
        assert!(q.weights().data().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn zero_threshold_is_a_noop() {
        let p = param(&[0.0, 0.1, -0.2], &[1.0; 3]);
        assert_eq!(prune_layer(&p, 0.0).unwrap(), p);
    }

    #[test]
    fn quality_for_fraction_hits_the_rank() {
        let w: Vec<f32> = (1..=10)
            .map(|i| i as f32 * if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let p = param(&w, &[1.0; 10]);
        for (f, kept) in [(0.0, 10), (0.25, 7), (0.5, 5), (0.95, 0), (1.0, 0)] {
            let q = quality_for_fraction(&p, f).unwrap();
            let t = compute_threshold(&p, q).unwrap();
            assert_eq!(
                prune_layer(&p, t).unwrap().live_count(),
                kept,
                "fraction {f}"
            );
        }
        assert!(quality_for_fraction(&p, 1.5).is_err());
    }

    #[test]
    fn masked_grad_identity_and_zero() {
        let g = Tensor::from_fn(vec![2, 3], |i| i as f32 - 2.5);
        assert_eq!(masked_grad(&g, &Tensor::ones(vec![2, 3])).unwrap(), g);
        let z = masked_grad(&g, &Tensor::zeros(vec![2, 3])).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert!(masked_grad(&g, &Tensor::ones(vec![3, 2])).is_err());
    }
}
