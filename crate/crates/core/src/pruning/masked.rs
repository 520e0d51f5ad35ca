use crate::engine::Tensor;
use crate::error::{Error, Result};

/// A weight tensor with its binary pruning mask and an (unmasked) bias.
///
/// Invariants: `mask` has the weight shape and holds only 0.0 / 1.0, and every
/// masked position stores exactly 0.0.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedParam {
    weights: Tensor,
    mask: Tensor,
    bias: Tensor,
}

impl MaskedParam {
    /// Dense parameter: mask of all ones.
    pub fn new(weights: Tensor, bias: Tensor) -> Self {
        let mask = Tensor::ones(weights.shape().to_vec());
        MaskedParam {
            weights,
            mask,
            bias,
        }
    }

    /// Masked positions are zeroed on construction.
    pub fn with_mask(mut weights: Tensor, mask: Tensor, bias: Tensor) -> Result<Self> {
        weights.same_shape(&mask)?;
        if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::invalid("mask entries must be 0 or 1"));
        }
        for (w, &m) in weights.data_mut().iter_mut().zip(mask.data()) {
            if m == 0.0 {
                *w = 0.0;
            }
        }
        Ok(MaskedParam {
            weights,
            mask,
            bias,
        })
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn mask(&self) -> &Tensor {
        &self.mask
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f32] {
        self.bias.data_mut()
    }

    /// Writes to live positions only; masked entries stay at zero.
    pub fn set_weights(&mut self, weights: &[f32]) -> Result<()> {
        if weights.len() != self.weights.len() {
            return Err(Error::shape(format!(
                "{} weights for a tensor of {}",
                weights.len(),
                self.weights.len()
            )));
        }
        for ((w, &v), &m) in self
            .weights
            .data_mut()
            .iter_mut()
            .zip(weights)
            .zip(self.mask.data())
        {
            *w = if m == 0.0 { 0.0 } else { v };
        }
        Ok(())
    }

    /// Raw mutable access for tests that need to break the invariant.
    #[doc(hidden)]
    pub fn weights_mut_unchecked(&mut self) -> &mut [f32] {
        self.weights.data_mut()
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [f32], &[f32], &mut [f32]) {
        (
            self.weights.data_mut(),
            self.mask.data(),
            self.bias.data_mut(),
        )
    }

    pub fn total(&self) -> usize {
        self.weights.len()
    }

    pub fn live_count(&self) -> usize {
        self.mask.data().iter().filter(|&&m| m != 0.0).count()
    }

    pub fn live_fraction(&self) -> f64 {
        self.live_count() as f64 / self.total() as f64
    }

    pub fn is_live(&self, i: usize) -> bool {
        self.mask.data()[i] != 0.0
    }

    /// Values of the unmasked weights, in flat order.
    pub fn live_weights(&self) -> impl Iterator<Item = f32> + '_ {
        self.weights
            .data()
            .iter()
            .zip(self.mask.data())
            .filter(|(_, &m)| m != 0.0)
            .map(|(&w, _)| w)
    }

    /// Weights as seen by the forward pass: the stored value where the mask is
    /// set and 0.0 elsewhere, whatever the storage holds.
    pub fn effective_weights(&self) -> Vec<f32> {
        self.weights
            .data()
            .iter()
            .zip(self.mask.data())
            .map(|(&w, &m)| if m != 0.0 { w } else { 0.0 })
            .collect()
    }

    /// Masks and zeroes the given flat positions. Returns how many were live.
    pub fn remove(&mut self, positions: impl IntoIterator<Item = usize>) -> usize {
        let mut removed = 0;
        let (w, m) = (self.weights.data_mut(), self.mask.data_mut());
        for i in positions {
            if m[i] != 0.0 {
                removed += 1;
            }
            m[i] = 0.0;
            w[i] = 0.0;
        }
        removed
    }

    /// Masks every live weight with `|w| < threshold`. Returns the count.
    pub fn prune_below(&mut self, threshold: f64) -> usize {
        let mut removed = 0;
        let (w, m) = (self.weights.data_mut(), self.mask.data_mut());
        for (w, m) in w.iter_mut().zip(m.iter_mut()) {
            if *m != 0.0 && (w.abs() as f64) < threshold {
                *m = 0.0;
                *w = 0.0;
                removed += 1;
            }
        }
        removed
    }

    /// True when the mask/storage invariant holds.
    pub fn is_consistent(&self) -> bool {
        self.weights
            .data()
            .iter()
            .zip(self.mask.data())
            .all(|(&w, &m)| (m == 1.0) || (m == 0.0 && w.to_bits() == 0))
    }
}
