//! Streaming estimator: Kalman step, latent refresh on new depth samples,
//! ring-buffered feature window, GRU correction.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SVector};
use optistate_core::{KalmanBelief, KalmanFilter, SensorFrame, TrunkState};

use crate::error::NnError;
use crate::features::{build_feature_row, InputMask};
use crate::gru::{forward_window, GruConfig, GruParams, STATE_DIM};
use crate::normalizer::Normalizer;
use crate::vit::{encode, VitConfig, VitParams};

/// Output of one pipeline step: the filter state and the corrected state
/// with its learned error estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineEstimate {
    pub kalman: TrunkState,
    pub corrected: TrunkState,
    /// Nonnegative per-component predicted |error|.
    pub uncertainty: SVector<f64, STATE_DIM>,
}

pub struct EstimatorPipeline {
    kf: KalmanFilter,
    belief: KalmanBelief,
    vit: Option<(VitConfig, VitParams)>,
    gru: GruParams,
    gru_cfg: GruConfig,
    normalizer: Normalizer,
    mask: InputMask,
    window: VecDeque<Vec<f64>>,
    latent: Vec<f64>,
    latent_seq: Option<u64>,
}

impl EstimatorPipeline {
    pub fn new(
        kf: KalmanFilter,
        initial_belief: KalmanBelief,
        vit: Option<(VitConfig, VitParams)>,
        gru: GruParams,
        gru_cfg: GruConfig,
        normalizer: Normalizer,
        mask: InputMask,
    ) -> Result<Self, NnError> {
        let latent_dim = vit.as_ref().map_or(0, |(c, _)| c.latent_dim());
        if crate::features::input_dim(latent_dim) != gru_cfg.input_dim {
            return Err(NnError::Shape(format!(
                "latent dim {latent_dim} implies input dim {}, GRU expects {}",
                crate::features::input_dim(latent_dim),
                gru_cfg.input_dim
            )));
        }
        if normalizer.input_dim() != gru_cfg.input_dim {
            return Err(NnError::ConfigMismatch(format!(
                "normalizer covers {} features, GRU expects {}",
                normalizer.input_dim(),
                gru_cfg.input_dim
            )));
        }
        Ok(Self {
            kf,
            belief: initial_belief,
            vit,
            gru,
            gru_cfg,
            normalizer,
            mask,
            window: VecDeque::new(),
            latent: vec![0.0; latent_dim],
            latent_seq: None,
        })
    }

    pub fn belief(&self) -> &KalmanBelief {
        &self.belief
    }

    /// Consume one sensor frame, producing both estimates.
    ///
    /// Startup: until `horizon` frames have arrived, the oldest frame is
    /// repeated to fill the window.
    pub fn step(&mut self, frame: &SensorFrame) -> Result<PipelineEstimate, NnError> {
        self.kf.step(&mut self.belief, frame)?;

        if self.mask != InputMask::NoVision {
            if let (Some((cfg, params)), Some(depth)) = (self.vit.as_ref(), frame.depth.as_ref())
            {
                if self.latent_seq != Some(depth.seq) {
                    let (_, latent) = encode(&depth.image, params, cfg)?;
                    self.latent = latent;
                    self.latent_seq = Some(depth.seq);
                }
            }
        }

        let latent_dim = self.latent.len();
        let mut row = build_feature_row(
            &self.belief.state,
            &self.latent,
            latent_dim,
            frame,
            &self.kf,
            self.mask,
        );
        self.normalizer.normalize_features(&mut row);
        self.window.push_back(row);
        while self.window.len() > self.gru_cfg.horizon {
            self.window.pop_front();
        }

        let horizon = self.gru_cfg.horizon;
        let mut matrix = DMatrix::zeros(horizon, self.gru_cfg.input_dim);
        for t in 0..horizon {
            // Repeat the oldest available row while warming up.
            let idx = (t + self.window.len()).saturating_sub(horizon).min(self.window.len() - 1);
            matrix
                .row_mut(t)
                .copy_from_slice(&self.window[idx]);
        }
        let (state_norm, error_norm) = forward_window(&self.gru, &self.gru_cfg, &matrix)?;

        let state = self.normalizer.denormalize_state(&state_norm);
        let error = self.normalizer.denormalize_error(&error_norm);
        let corrected = TrunkState::from_vector(SVector::from_iterator(state));
        let uncertainty = SVector::from_iterator(error);
        Ok(PipelineEstimate {
            kalman: self.belief.state,
            corrected,
            uncertainty,
        })
    }
}
