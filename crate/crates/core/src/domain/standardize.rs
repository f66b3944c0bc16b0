use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Centering and scaling statistics of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    /// Sample standard deviation (n − 1 divisor); zero for constant columns.
    pub sd: f64,
}

impl ColumnStats {
    pub fn is_constant(&self) -> bool {
        self.sd == 0.0
    }

    pub fn apply(&self, value: f64) -> f64 {
        if self.is_constant() {
            0.0
        } else {
            (value - self.mean) / self.sd
        }
    }

    /// Inverse of [`ColumnStats::apply`]; constant columns map back to the mean.
    pub fn invert(&self, scaled: f64) -> f64 {
        self.mean + scaled * self.sd
    }
}

/// Centers and scales a column to mean 0, sd 1. Constant columns become all zeros.
pub fn standardize(values: &[f64]) -> Result<(Vec<f64>, ColumnStats)> {
    if values.is_empty() {
        return Err(Error::invalid("column", "cannot standardize an empty column"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid("column", format!("non-finite value {v}")));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let spread = values.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    let sd = if values.len() < 2 || spread <= 1e-14 * mean.abs().max(1.0) {
        0.0
    } else {
        (ss / (n - 1.0)).sqrt()
    };
    let stats = ColumnStats { mean, sd };
    Ok((values.iter().map(|&v| stats.apply(v)).collect(), stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_column() {
        let (z, s) = standardize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(z, vec![-1.0, 0.0, 1.0]);
        assert_eq!(s, ColumnStats { mean: 2.0, sd: 1.0 });
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let (z, s) = standardize(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(z, vec![0.0; 3]);
        assert!(s.is_constant());
    }

    #[test]
    fn empty_column_is_rejected() {
        assert!(standardize(&[]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_and_idempotence(xs in prop::collection::vec(-1e3..1e3f64, 2..50)) {
            let (z, s) = standardize(&xs).unwrap();
            if !s.is_constant() {
                for (orig, scaled) in xs.iter().zip(&z) {
                    prop_assert!((s.invert(*scaled) - orig).abs() < 1e-12 * orig.abs().max(1.0));
                }
                let (zz, s2) = standardize(&z).unwrap();
                prop_assert!(s2.mean.abs() < 1e-9);
                prop_assert!((s2.sd - 1.0).abs() < 1e-9);
                for (a, b) in z.iter().zip(&zz) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }
}
