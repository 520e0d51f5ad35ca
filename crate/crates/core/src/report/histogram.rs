//! Distribution of surviving weights.

use crate::error::{Error, Result};
use crate::pruning::MaskedParam;

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// CSV with columns `bin_lo,bin_hi,count`.
    pub fn to_csv(&self) -> String {
        let w = self.bin_width();
        let mut s = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let lo = self.lo + i as f64 * w;
            s += &format!("{},{},{}\n", lo, lo + w, c);
        }
        s
    }
}

/// Histogram of the live weights over `[lo, hi)` in equal bins; values
/// outside the range land in the first or last bin.
pub fn weight_histogram(p: &MaskedParam, bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if bins == 0 {
        return Err(Error::invalid("bins must be at least 1"));
    }
    if !(lo < hi) {
        return Err(Error::invalid(format!("empty range [{lo}, {hi})")));
    }
    let mut counts = vec![0usize; bins];
    let scale = bins as f64 / (hi - lo);
    for w in p.live_weights() {
        let b = ((w as f64 - lo) * scale).floor();
        let b = if b < 0.0 {
            0
        } else {
            (b as usize).min(bins - 1)
        };
        counts[b] += 1;
    }
    Ok(Histogram { lo, hi, counts })
}

/// Live weights with `|w| < t`.
pub fn live_within(p: &MaskedParam, t: f64) -> usize {
    p.live_weights().filter(|w| (w.abs() as f64) < t).count()
}
