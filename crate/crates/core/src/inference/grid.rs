//! Tensor grids in free hyperparameter coordinates and their quadrature.

/// Equally spaced offsets in units of sd, symmetric about zero.
pub fn offsets(points: usize, span_sd: f64) -> Vec<f64> {
    if points <= 1 {
        return vec![0.0];
    }
    (0..points)
        .map(|i| span_sd * (-1.0 + 2.0 * i as f64 / (points - 1) as f64))
        .collect()
}

/// Tensor grid centred on `center` with per-axis scale `sd`; the first axis
/// varies slowest. Returns the nodes and the per-axis spacing.
pub fn tensor(center: &[f64], sd: &[f64], offsets: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut nodes: Vec<Vec<f64>> = vec![vec![]];
    for (&c, &s) in center.iter().zip(sd) {
        nodes = nodes
            .into_iter()
            .flat_map(|prefix| {
                offsets.iter().map(move |o| {
                    let mut x = prefix.clone();
                    x.push(c + o * s);
                    x
                })
            })
            .collect();
    }
    let gap = if offsets.len() > 1 {
        offsets[1] - offsets[0]
    } else {
        0.0
    };
    (nodes, sd.iter().map(|s| gap * s).collect())
}

/// Normalized weights of `exp(log_values)` and the log of the Riemann sum
/// `Σ exp(log_value) · cell volume`.
pub fn integrate(log_values: &[f64], log_cell_volume: f64) -> (Vec<f64>, f64) {
    let top = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = log_values.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = scaled.iter().sum();
    (
        scaled.iter().map(|s| s / total).collect(),
        top + total.ln() + log_cell_volume,
    )
}
