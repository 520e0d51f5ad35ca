//! Accuracy-versus-sparsity records.

/// One measured point of a trade-off curve.
#[derive(Clone, Debug, PartialEq)]
pub struct TradeoffPoint {
    pub variant: String,
    pub parameters_pruned_pct: f64,
    /// Accuracy minus the unpruned accuracy, in percentage points.
    pub accuracy_delta: f64,
}

/// CSV with columns `parameters_pruned_pct,accuracy_delta,variant`.
pub fn tradeoff_csv(points: &[TradeoffPoint]) -> String {
    let mut s = String::from("parameters_pruned_pct,accuracy_delta,variant\n");
    for p in points {
        s += &format!(
            "{},{},{}\n",
            p.parameters_pruned_pct, p.accuracy_delta, p.variant
        );
    }
    s
}
