use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Weight decay applied inside the SGD update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecayMode {
    None,
    L1(f32),
    L2(f32),
}

impl DecayMode {
    pub fn coefficient(&self) -> f32 {
        match *self {
            DecayMode::None => 0.0,
            DecayMode::L1(c) | DecayMode::L2(c) => c,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            DecayMode::None => "none",
            DecayMode::L1(_) => "l1",
            DecayMode::L2(_) => "l2",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.coefficient();
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!(
                "decay coefficient {c} must be >= 0"
            )));
        }
        Ok(())
    }
}

/// One plain SGD update, in place.
///
/// * `none`: `w ← w − lr·g`
/// * `l2`:   `w ← w − lr·(g + λw)`
/// * `l1`:   `w ← w − lr·(g + λ·sign(w))`, `sign(0) = 0`; if the decay term
///   alone would carry the weight across zero it stops at exactly 0.
pub fn sgd_step(param: &mut Tensor, grad: &Tensor, lr: f32, decay: DecayMode) -> Result<()> {
    param.same_shape(grad)?;
    if !(lr > 0.0) {
        return Err(Error::invalid(format!("learning rate {lr} must be > 0")));
    }
    sgd_update(param.data_mut(), grad.data(), lr, decay);
    Ok(())
}

pub(crate) fn sgd_update(w: &mut [f32], g: &[f32], lr: f32, decay: DecayMode) {
    match decay {
        DecayMode::None => {
            for (w, &g) in w.iter_mut().zip(g) {
                *w -= lr * g;
            }
        }
        DecayMode::L2(lambda) => {
            for (w, &g) in w.iter_mut().zip(g) {
                *w -= lr * (g + lambda * *w);
            }
        }
        DecayMode::L1(lambda) => {
            let shrink = lr * lambda;
            for (w, &g) in w.iter_mut().zip(g) {
                let stepped = *w - lr * g;
                if *w == 0.0 {
                    *w = stepped;
                    continue;
                }
                let decayed = stepped - shrink * w.signum();
                // A sign change caused by the decay term is clamped to zero.
                *w = if stepped == 0.0 || (decayed != 0.0 && decayed.signum() != stepped.signum()) {
                    0.0
                } else {
                    decayed
                };
            }
        }
    }
}
