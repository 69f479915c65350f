//! Feature assembly for the correction network.
//!
//! Per frame the network sees, in column order:
//!
//! ```text
//! [ x̂ (12) | depth latent (d) | p (12) | ṗ (12) | a_imu (3) | α_imu (3) | f (12) ]
//! ```
//!
//! where x̂ is the Kalman output for that frame, p/ṗ are body-frame foot
//! positions/velocities from the encoders, and f are the controller forces.
//! Ablations zero-mask the x̂ or latent columns at both train and test time,
//! keeping the input width fixed.

use nalgebra::DMatrix;
use optistate_core::{
    leg::{foot_positions, foot_velocity},
    KalmanBelief, KalmanFilter, TrunkState,
};
use optistate_sim::Dataset;

use crate::error::NnError;
use crate::gru::{self, GruConfig, GruParams, GruTrainConfig, WindowSet};
use crate::normalizer::Normalizer;
use crate::vit::{encode, VitConfig, VitParams};

/// Fixed non-latent feature widths.
pub const STATE_COLS: usize = 12;
pub const FOOT_COLS: usize = 12;
pub const ACCEL_COLS: usize = 3;
pub const FORCE_COLS: usize = 12;

/// Input width for a given latent size.
pub fn input_dim(latent_dim: usize) -> usize {
    STATE_COLS + latent_dim + FOOT_COLS + FOOT_COLS + ACCEL_COLS + ACCEL_COLS + FORCE_COLS
}

/// Which input columns are zero-masked (trained-in ablations).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMask {
    Full,
    /// Zero the Kalman state columns.
    NoKalman,
    /// Zero the depth-latent columns.
    NoVision,
}

impl InputMask {
    pub fn name(&self) -> &'static str {
        match self {
            InputMask::Full => "full",
            InputMask::NoKalman => "no_kf",
            InputMask::NoVision => "no_vision",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, NnError> {
        match name {
            "full" => Ok(InputMask::Full),
            "no_kf" => Ok(InputMask::NoKalman),
            "no_vision" => Ok(InputMask::NoVision),
            other => Err(NnError::ConfigMismatch(format!("unknown mask `{other}`"))),
        }
    }

    pub fn apply(&self, row: &mut [f64], latent_dim: usize) {
        match self {
            InputMask::Full => {}
            InputMask::NoKalman => row[..STATE_COLS].fill(0.0),
            InputMask::NoVision => row[STATE_COLS..STATE_COLS + latent_dim].fill(0.0),
        }
    }
}

/// Raw (unnormalized) per-trajectory features and supervision targets.
#[derive(Debug, Clone)]
pub struct TrajectoryFeatures {
    /// frames × input_dim.
    pub features: DMatrix<f64>,
    /// frames × 12 mocap states.
    pub targets: DMatrix<f64>,
    /// frames × 12 Kalman estimates (kept for evaluation).
    pub kalman: DMatrix<f64>,
}

/// Runs the filter and the frozen encoder over datasets to produce the GRU
/// feature stream.
pub struct FeatureExtractor<'a> {
    pub kf: &'a KalmanFilter,
    pub vit: Option<(&'a VitConfig, &'a VitParams)>,
    pub mask: InputMask,
}

impl<'a> FeatureExtractor<'a> {
    pub fn latent_dim(&self) -> usize {
        self.vit.map_or(0, |(cfg, _)| cfg.latent_dim())
    }

    pub fn input_dim(&self) -> usize {
        input_dim(self.latent_dim())
    }

    /// Extract features for one trajectory, running the Kalman filter from
    /// the first ground-truth frame (training-tool initialization).
    pub fn extract(&self, dataset: &Dataset, trajectory: usize) -> Result<TrajectoryFeatures, NnError> {
        let latent_dim = self.latent_dim();
        let dim = self.input_dim();
        let n = dataset.len();
        let mut features = DMatrix::zeros(n, dim);
        let mut targets = DMatrix::zeros(n, gru::STATE_DIM);
        let mut kalman = DMatrix::zeros(n, gru::STATE_DIM);

        let first_truth = dataset
            .frames
            .first()
            .and_then(|f| f.truth)
            .ok_or(NnError::MissingTruth {
                trajectory,
                frame: 0,
            })?;
        let mut belief = KalmanBelief::new(first_truth, 1e-2);

        let mut latent = vec![0.0; latent_dim];
        let mut latent_seq: Option<u64> = None;

        for (frame_idx, frame) in dataset.frames.iter().enumerate() {
            let truth = frame.truth.ok_or(NnError::MissingTruth {
                trajectory,
                frame: frame_idx,
            })?;
            self.kf.step(&mut belief, frame)?;

            // Refresh the latent only when a new depth sample arrives, and
            // skip encoding entirely when vision is masked out.
            if self.mask != InputMask::NoVision {
                if let (Some((cfg, params)), Some(depth)) = (self.vit, frame.depth.as_ref()) {
                    if latent_seq != Some(depth.seq) {
                        let (_, l) = encode(&depth.image, params, cfg)?;
                        latent = l;
                        latent_seq = Some(depth.seq);
                    }
                }
            }

            let row = build_feature_row(
                &belief.state,
                &latent,
                latent_dim,
                frame,
                self.kf,
                self.mask,
            );
            features.row_mut(frame_idx).copy_from_slice(&row);
            for j in 0..gru::STATE_DIM {
                targets[(frame_idx, j)] = truth.vector()[j];
                kalman[(frame_idx, j)] = belief.state.vector()[j];
            }
        }
        Ok(TrajectoryFeatures {
            features,
            targets,
            kalman,
        })
    }
}

/// One raw feature row in the documented column order.
pub fn build_feature_row(
    kf_state: &TrunkState,
    latent: &[f64],
    latent_dim: usize,
    frame: &optistate_core::SensorFrame,
    kf: &KalmanFilter,
    mask: InputMask,
) -> Vec<f64> {
    let mut row = Vec::with_capacity(input_dim(latent_dim));
    row.extend(kf_state.vector().iter());
    row.extend(latent.iter().take(latent_dim));
    row.extend(std::iter::repeat(0.0).take(latent_dim.saturating_sub(latent.len())));
    let feet = foot_positions(&frame.joints, &kf.geometry);
    for p in &feet.feet {
        row.extend([p.x, p.y, p.z]);
    }
    let rates = foot_velocity(&frame.joints, &kf.geometry);
    row.extend(rates.iter());
    row.extend(frame.imu.accel.iter());
    row.extend(frame.imu.ang_accel.iter());
    row.extend(frame.forces.vector().iter());
    debug_assert_eq!(row.len(), input_dim(latent_dim));
    mask.apply(&mut row, latent_dim);
    row
}

/// The full training operation: extract features from every dataset with
/// the frozen encoder, fit the normalizer, enumerate sliding windows, and
/// optimize. Returns parameters, normalizer, and the loss history.
pub fn train_gru(
    datasets: &[Dataset],
    kf: &KalmanFilter,
    vit: Option<(&VitConfig, &VitParams)>,
    mask: InputMask,
    gru_cfg: &GruConfig,
    tcfg: &GruTrainConfig,
) -> Result<(GruParams, Normalizer, Vec<f64>), NnError> {
    let extractor = FeatureExtractor { kf, vit, mask };
    if gru_cfg.input_dim != extractor.input_dim() {
        return Err(NnError::Shape(format!(
            "GRU input dim {} but features provide {}",
            gru_cfg.input_dim,
            extractor.input_dim()
        )));
    }
    let mut features = Vec::with_capacity(datasets.len());
    let mut targets = Vec::with_capacity(datasets.len());
    for (i, ds) in datasets.iter().enumerate() {
        let t = extractor.extract(ds, i)?;
        features.push(t.features);
        targets.push(t.targets);
    }
    let normalizer = Normalizer::fit(&features, &targets);
    for f in &mut features {
        for r in 0..f.nrows() {
            let mut row: Vec<f64> = f.row(r).iter().cloned().collect();
            normalizer.normalize_features(&mut row);
            f.row_mut(r).copy_from_slice(&row);
        }
    }
    for t in &mut targets {
        for r in 0..t.nrows() {
            let mut row: Vec<f64> = t.row(r).iter().cloned().collect();
            normalizer.normalize_target(&mut row);
            t.row_mut(r).copy_from_slice(&row);
        }
    }
    let windows = WindowSet::enumerate(features, targets, gru_cfg.horizon, tcfg.stride);
    let (params, losses) = gru::train_on_windows(&windows, gru_cfg, tcfg)?;
    Ok((params, normalizer, losses))
}
