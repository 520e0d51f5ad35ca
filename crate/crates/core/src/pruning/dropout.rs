use crate::error::{Error, Result};
use crate::network::Model;

/// Retraining dropout rate `D_r = D_o · sqrt(C_ir / C_io)`, where `C_io` and
/// `C_ir` are the layer's connection counts before and after pruning.
pub fn adjust_dropout(d_o: f32, c_io: usize, c_ir: usize) -> Result<f32> {
    if c_io == 0 {
        return Err(Error::invalid("original connection count must be positive"));
    }
    if c_ir > c_io {
        return Err(Error::invalid(format!(
            "remaining connections {c_ir} exceed original {c_io}"
        )));
    }
    if !(0.0..1.0).contains(&d_o) {
        return Err(Error::invalid(format!("dropout rate {d_o} outside [0, 1)")));
    }
    Ok((d_o as f64 * (c_ir as f64 / c_io as f64).sqrt()) as f32)
}

/// Per-layer dropout rates for retraining. A dropout site after layer `l`
/// is scaled by the connection counts of the next weighted layer, whose
/// inputs it drops.
pub fn adjusted_dropout_rates(model: &Model) -> Result<Vec<f32>> {
    model
        .specs()
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            if spec.dropout == 0.0 {
                return Ok(0.0);
            }
            match model.next_weighted(i).and_then(|n| model.param(n)) {
                Some(p) => adjust_dropout(spec.dropout, p.total(), p.live_count()),
                None => Ok(spec.dropout),
            }
        })
        .collect()
}
