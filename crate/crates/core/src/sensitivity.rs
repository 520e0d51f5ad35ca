//! Per-layer pruning sensitivity: accuracy as a function of the fraction of
//! one layer's weights removed, without retraining.

use crate::error::{Error, Result};
use crate::network::{evaluate, Dataset, Model};
use crate::pruning::{prune_fraction_by_rank, quality_for_fraction};

/// Fractions swept by default.
pub const DEFAULT_FRACTIONS: [f64; 11] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99];

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityCurve {
    pub layer: String,
    /// Accuracy of the unpruned model.
    pub baseline_accuracy: f64,
    /// `(pruned_fraction, accuracy)`, fractions strictly increasing.
    pub points: Vec<(f64, f64)>,
}

impl SensitivityCurve {
    /// Largest pruned fraction whose accuracy drop stays within `budget`,
    /// interpolating linearly between samples. The curve is anchored at
    /// `(0, baseline_accuracy)`.
    pub fn max_fraction_within(&self, budget: f64) -> Result<f64> {
        if self.points.is_empty() {
            return Err(Error::invalid(format!(
                "{}: empty sensitivity curve",
                self.layer
            )));
        }
        if !(budget > 0.0) {
            return Err(Error::invalid("accuracy-drop budget must be positive"));
        }
        let mut pts = vec![(0.0, 0.0)];
        pts.extend(
            self.points
                .iter()
                .filter(|(f, _)| *f > 0.0)
                .map(|&(f, a)| (f, self.baseline_accuracy - a)),
        );
        let mut best = 0.0f64;
        for w in pts.windows(2) {
            let ((f0, d0), (f1, d1)) = (w[0], w[1]);
            if d1 <= budget {
                best = best.max(f1);
            } else if d0 <= budget {
                best = best.max(f0 + (budget - d0) / (d1 - d0) * (f1 - f0));
            }
        }
        Ok(best)
    }
}

/// Sweeps `fractions` on one layer. The model is cloned per point and never
/// modified.
pub fn sweep_layer(
    model: &Model,
    layer: &str,
    fractions: &[f64],
    eval: &Dataset,
) -> Result<SensitivityCurve> {
    let idx = model.layer_index(layer)?;
    if model.param(idx).is_none() {
        return Err(Error::invalid(format!("layer `{layer}` has no weights")));
    }
    if fractions.iter().any(|f| !(0.0..1.0).contains(f)) {
        return Err(Error::invalid("fractions must lie in [0, 1)"));
    }
    if fractions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("fractions must be strictly increasing"));
    }
    let baseline_accuracy = 1.0 - evaluate(model, eval)?;
    let points = fractions
        .iter()
        .map(|&f| {
            if f == 0.0 {
                return Ok((f, baseline_accuracy));
            }
            let mut m = model.clone();
            prune_fraction_by_rank(&mut m, idx, f);
            Ok((f, 1.0 - evaluate(&m, eval)?))
        })
        .collect::<Result<_>>()?;
    Ok(SensitivityCurve {
        layer: layer.to_string(),
        baseline_accuracy,
        points,
    })
}

/// Sweeps every weighted layer.
pub fn sweep_all(
    model: &Model,
    fractions: &[f64],
    eval: &Dataset,
) -> Result<Vec<SensitivityCurve>> {
    model
        .weighted_layers()
        .into_iter()
        .map(|i| sweep_layer(model, &model.specs()[i].name, fractions, eval))
        .collect()
}

/// Per-curve fraction allowed by `budget`.
pub fn suggest_fractions(curves: &[SensitivityCurve], budget: f64) -> Result<Vec<f64>> {
    curves
        .iter()
        .map(|c| c.max_fraction_within(budget))
        .collect()
}

/// Quality parameter per curve: the chosen fraction expressed as the layer's
/// magnitude quantile over its standard deviation.
pub fn suggest_qualities(
    model: &Model,
    curves: &[SensitivityCurve],
    budget: f64,
) -> Result<Vec<f64>> {
    let fractions = suggest_fractions(curves, budget)?;
    curves
        .iter()
        .zip(fractions)
        .map(|(c, f)| {
            let idx = model.layer_index(&c.layer)?;
            let p = model
                .param(idx)
                .ok_or_else(|| Error::invalid(format!("layer `{}` has no weights", c.layer)))?;
            quality_for_fraction(p, f)
        })
        .collect()
}

/// CSV with columns `layer,fraction,accuracy`; each curve starts with its
/// unpruned point.
pub fn curves_to_csv(curves: &[SensitivityCurve]) -> String {
    let mut s = String::from("layer,fraction,accuracy\n");
    for c in curves {
        if c.points.first().is_none_or(|p| p.0 > 0.0) {
            s += &format!("{},0,{}\n", c.layer, c.baseline_accuracy);
        }
        for (f, a) in &c.points {
            s += &format!("{},{},{}\n", c.layer, f, a);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: &[(f64, f64)]) -> SensitivityCurve {
        SensitivityCurve {
            layer: "x".into(),
            baseline_accuracy: 0.98,
            points: points.to_vec(),
        }
    }

    #[test]
    fn saturates_at_last_sample() {
        let c = curve(&[(0.5, 0.97), (0.9, 0.96)]);
        assert_eq!(c.max_fraction_within(0.5).unwrap(), 0.9);
    }

    #[test]
    fn flat_then_cliff_stops_just_before_the_cliff() {
        let c = curve(&[
            (0.2, 0.98),
            (0.4, 0.98),
            (0.6, 0.979),
            (0.7, 0.5),
            (0.8, 0.1),
        ]);
        let f = c.max_fraction_within(0.002).unwrap();
        assert!(f > 0.6 && f < 0.601, "{f}");
    }

    #[test]
    fn interpolates_inside_a_segment() {
        let c = curve(&[(0.5, 0.96)]);
        assert!((c.max_fraction_within(0.01).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(curve(&[]).max_fraction_within(0.01).is_err());
        assert!(curve(&[(0.5, 0.9)]).max_fraction_within(0.0).is_err());
    }

    #[test]
    fn csv_has_baseline_row() {
        let csv = curves_to_csv(&[curve(&[(0.5, 0.9)])]);
        assert_eq!(csv, "layer,fraction,accuracy\nx,0,0.98\nx,0.5,0.9\n");
    }
}
