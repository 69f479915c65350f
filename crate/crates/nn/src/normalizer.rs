//! Per-feature min/max normalization to [0, 1], fitted on the training set.

use nalgebra::DMatrix;

/// Features whose training range collapses below this are mapped to 0.
const FLAT_RANGE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub feat_min: Vec<f64>,
    pub feat_max: Vec<f64>,
    pub out_min: Vec<f64>,
    pub out_max: Vec<f64>,
}

impl Normalizer {
    /// Fit over per-trajectory feature/target matrices (rows = frames).
    pub fn fit(features: &[DMatrix<f64>], targets: &[DMatrix<f64>]) -> Self {
        let scan = |mats: &[DMatrix<f64>]| {
            let cols = mats[0].ncols();
            let mut min = vec![f64::INFINITY; cols];
            let mut max = vec![f64::NEG_INFINITY; cols];
            for m in mats {
                for r in 0..m.nrows() {
                    for c in 0..cols {
                        min[c] = min[c].min(m[(r, c)]);
                        max[c] = max[c].max(m[(r, c)]);
                    }
                }
            }
            (min, max)
        };
        let (feat_min, feat_max) = scan(features);
        let (out_min, out_max) = scan(targets);
        Self {
            feat_min,
            feat_max,
            out_min,
            out_max,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.feat_min.len()
    }

    fn scale(x: f64, min: f64, max: f64) -> f64 {
        if max - min > FLAT_RANGE {
            (x - min) / (max - min)
        } else {
            0.0
        }
    }

    pub fn normalize_features(&self, row: &mut [f64]) {
        debug_assert_eq!(row.len(), self.feat_min.len());
        for (i, v) in row.iter_mut().enumerate() {
            *v = Self::scale(*v, self.feat_min[i], self.feat_max[i]);
        }
    }

    pub fn normalize_target(&self, row: &mut [f64]) {
        debug_assert_eq!(row.len(), self.out_min.len());
        for (i, v) in row.iter_mut().enumerate() {
            *v = Self::scale(*v, self.out_min[i], self.out_max[i]);
        }
    }

    /// Invert the target normalization for a state prediction.
    pub fn denormalize_state(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(i, &v)| {
                if self.out_max[i] - self.out_min[i] > FLAT_RANGE {
                    self.out_min[i] + v * (self.out_max[i] - self.out_min[i])
                } else {
                    self.out_min[i]
                }
            })
            .collect()
    }

    /// The error head denormalizes by scale only (it is a magnitude).
    pub fn denormalize_error(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(i, &v)| {
                let range = self.out_max[i] - self.out_min[i];
                if range > FLAT_RANGE {
                    v * range
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture() -> Normalizer {
        let feats = vec![DMatrix::from_row_slice(
            2,
            3,
            &[0.0, -1.0, 5.0, 2.0, 3.0, 5.0],
        )];
        let outs = vec![DMatrix::from_row_slice(2, 2, &[10.0, 0.0, 30.0, 0.0])];
        Normalizer::fit(&feats, &outs)
    }

    #[test]
    fn train_extremes_map_to_unit_interval_ends() {
        let n = fixture();
        let mut row = [0.0, 3.0, 5.0];
        n.normalize_features(&mut row);
        assert_eq!(row[0], 0.0);
        assert_eq!(row[1], 1.0);
        // Constant feature maps to exactly 0.
        assert_eq!(row[2], 0.0);
    }

    #[test]
    fn state_round_trip() {
        let n = fixture();
        let mut t = [25.0, 0.0];
        n.normalize_target(&mut t);
        let back = n.denormalize_state(&t);
        assert!((back[0] - 25.0).abs() < 1e-12);
        assert_eq!(back[1], 0.0);
    }

    #[test]
    fn error_denormalization_is_scale_only() {
        let n = fixture();
        let mu = n.denormalize_error(&[0.5, 0.5]);
        assert!((mu[0] - 10.0).abs() < 1e-12);
        assert_eq!(mu[1], 0.0);
    }

    proptest! {
        #[test]
        fn round_trip_within_range(x in -5.0f64..45.0) {
            let n = fixture();
            let mut t = [x, 0.0];
            n.normalize_target(&mut t);
            let back = n.denormalize_state(&t);
            prop_assert!((back[0] - x).abs() < 1e-12);
        }
    }
}
