//! Streaming pipeline vs. batch feature extraction, and the feature-column
//! bookkeeping.

use nalgebra::DMatrix;
use optistate_core::{KalmanBelief, KalmanFilter, NoiseConfig};
use optistate_nn::features::{input_dim, FeatureExtractor, InputMask};
use optistate_nn::gru::{forward_window, GruConfig, GruParams};
use optistate_nn::normalizer::Normalizer;
use optistate_nn::pipeline::EstimatorPipeline;
use optistate_nn::vit::{VitConfig, VitParams};
use optistate_sim::{config::CommandProfile, simulate, SimConfig};

fn test_config() -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.duration = 2.0;
    cfg.seed = 21;
    cfg.camera.height = 16;
    cfg.camera.width = 16;
    cfg.camera.rate_hz = 20.0;
    cfg.command.profile = CommandProfile::StraightLine;
    cfg
}

fn tiny_vit() -> (VitConfig, VitParams) {
    let cfg = VitConfig {
        img_h: 16,
        img_w: 16,
        patch_size: 8,
        embed_dim: 8,
        depth: 1,
        mlp_ratio: 2,
        n_heads: 2,
    };
    let params = VitParams::init(&cfg, 77).unwrap();
    (cfg, params)
}

fn kf_for(cfg: &SimConfig) -> KalmanFilter {
    KalmanFilter::new(
        cfg.robot.physical().unwrap(),
        cfg.robot.geometry().unwrap(),
        NoiseConfig::default(),
        cfg.dt,
    )
}

#[test]
fn feature_columns_follow_the_documented_layout() {
    let sim_cfg = test_config();
    let ds = simulate(&sim_cfg).unwrap();
    let kf = kf_for(&sim_cfg);
    let (vit_cfg, vit_params) = tiny_vit();
    let latent = vit_cfg.latent_dim();
    let extractor = FeatureExtractor {
        kf: &kf,
        vit: Some((&vit_cfg, &vit_params)),
        mask: InputMask::Full,
    };
    assert_eq!(extractor.input_dim(), input_dim(latent));

    let traj = extractor.extract(&ds, 0).unwrap();
    let frame_idx = 50;
    let frame = &ds.frames[frame_idx];
    let row = traj.features.row(frame_idx);

    // Kalman block [0, 12): matches the recorded Kalman estimate.
    for j in 0..12 {
        assert_eq!(row[j], traj.kalman[(frame_idx, j)]);
    }
    // Foot positions [12+latent, 24+latent): forward kinematics of the
    // frame's encoders.
    let feet = optistate_core::leg::foot_positions(&frame.joints, &kf.geometry);
    for leg in 0..4 {
        for a in 0..3 {
            assert_eq!(row[12 + latent + 3 * leg + a], feet.feet[leg][a]);
        }
    }
    // IMU accelerations and forces at the tail.
    let accel_start = 12 + latent + 24;
    for a in 0..3 {
        assert_eq!(row[accel_start + a], frame.imu.accel[a]);
        assert_eq!(row[accel_start + 3 + a], frame.imu.ang_accel[a]);
    }
    let force_start = accel_start + 6;
    for j in 0..12 {
        assert_eq!(row[force_start + j], frame.forces.vector()[j]);
    }
}

#[test]
fn masks_zero_the_right_columns() {
    let latent = 8;
    let mut row: Vec<f64> = (0..input_dim(latent)).map(|i| i as f64 + 1.0).collect();
    InputMask::NoKalman.apply(&mut row, latent);
    assert!(row[..12].iter().all(|&v| v == 0.0));
    assert!(row[12..].iter().all(|&v| v != 0.0));

    let mut row: Vec<f64> = (0..input_dim(latent)).map(|i| i as f64 + 1.0).collect();
    InputMask::NoVision.apply(&mut row, latent);
    assert!(row[12..12 + latent].iter().all(|&v| v == 0.0));
    assert!(row[..12].iter().all(|&v| v != 0.0));
    assert!(row[12 + latent..].iter().all(|&v| v != 0.0));
}

#[test]
fn streaming_pipeline_replays_batch_extraction() {
    let sim_cfg = test_config();
    let ds = simulate(&sim_cfg).unwrap();
    let kf = kf_for(&sim_cfg);
    let (vit_cfg, vit_params) = tiny_vit();
    let latent = vit_cfg.latent_dim();

    let gru_cfg = GruConfig {
        input_dim: input_dim(latent),
        hidden_size: 8,
        n_layers: 2,
        horizon: 5,
    };
    let gru_params = GruParams::init(&gru_cfg, 5).unwrap();

    // Batch path: extract features, fit the normalizer, evaluate windows.
    let extractor = FeatureExtractor {
        kf: &kf,
        vit: Some((&vit_cfg, &vit_params)),
        mask: InputMask::Full,
    };
    let traj = extractor.extract(&ds, 0).unwrap();
    let normalizer = Normalizer::fit(
        &[traj.features.clone()],
        &[traj.targets.clone()],
    );

    // Streaming path.
    let belief = KalmanBelief::new(ds.frames[0].truth.unwrap(), 1e-2);
    let mut pipeline = EstimatorPipeline::new(
        kf.clone(),
        belief,
        Some((vit_cfg, vit_params.clone())),
        gru_params.clone(),
        gru_cfg,
        normalizer.clone(),
        InputMask::Full,
    )
    .unwrap();

    for (k, frame) in ds.frames.iter().enumerate() {
        let out = pipeline.step(frame).unwrap();
        // Kalman path must agree exactly with the batch extraction.
        for j in 0..12 {
            assert!(
                (out.kalman.vector()[j] - traj.kalman[(k, j)]).abs() < 1e-12,
                "kalman mismatch at frame {k} col {j}"
            );
        }
        if k + 1 >= gru_cfg.horizon {
            // Rebuild the same window from the batch features.
            let mut window = DMatrix::zeros(gru_cfg.horizon, gru_cfg.input_dim);
            for t in 0..gru_cfg.horizon {
                let frame_idx = k + 1 - gru_cfg.horizon + t;
                let mut row: Vec<f64> = traj.features.row(frame_idx).iter().cloned().collect();
                normalizer.normalize_features(&mut row);
                window.row_mut(t).copy_from_slice(&row);
            }
            let (state_norm, error_norm) =
                forward_window(&gru_params, &gru_cfg, &window).unwrap();
            let state = normalizer.denormalize_state(&state_norm);
            let error = normalizer.denormalize_error(&error_norm);
            for j in 0..12 {
                assert!(
                    (out.corrected.vector()[j] - state[j]).abs() < 1e-9,
                    "corrected mismatch at frame {k} col {j}"
                );
                assert!((out.uncertainty[j] - error[j]).abs() < 1e-9);
                assert!(out.uncertainty[j] >= 0.0, "uncertainty must be nonnegative");
            }
        }
    }
}

#[test]
fn uncertainty_is_nonnegative_for_random_parameters() {
    // Mapping guarantee, not a training outcome.
    let sim_cfg = test_config();
    let ds = simulate(&sim_cfg).unwrap();
    let kf = kf_for(&sim_cfg);
    for seed in 0..5 {
        let gru_cfg = GruConfig {
            input_dim: input_dim(0),
            hidden_size: 6,
            n_layers: 1,
            horizon: 4,
        };
        let gru_params = GruParams::init(&gru_cfg, seed).unwrap();
        let normalizer = Normalizer {
            feat_min: vec![-1.0; gru_cfg.input_dim],
            feat_max: vec![1.0; gru_cfg.input_dim],
            out_min: vec![-2.0; 12],
            out_max: vec![2.0; 12],
        };
        let belief = KalmanBelief::new(ds.frames[0].truth.unwrap(), 1e-2);
        let mut pipeline = EstimatorPipeline::new(
            kf.clone(),
            belief,
            None,
            gru_params,
            gru_cfg,
            normalizer,
            InputMask::NoVision,
        )
        .unwrap();
        for frame in ds.frames.iter().take(100) {
            let out = pipeline.step(frame).unwrap();
            assert!(out.uncertainty.iter().all(|&u| u >= 0.0));
        }
    }
}
