//! Evaluation machinery: per-component RMSE against ground truth, the
//! improvement table relative to the filter-only baseline, and the rank
//! correlation between predicted and realized error.

use nalgebra::SVector;
use optistate_core::{KalmanBelief, KalmanFilter};
use optistate_nn::features::InputMask;
use optistate_nn::gru::{GruConfig, GruParams};
use optistate_nn::normalizer::Normalizer;
use optistate_nn::pipeline::EstimatorPipeline;
use optistate_nn::vit::{VitConfig, VitParams};
use optistate_sim::Dataset;

use crate::error::CliError;

pub const COMPONENT_NAMES: [&str; 12] = [
    "theta_x", "theta_y", "theta_z", "r_x", "r_y", "r_z", "omega_x", "omega_y", "omega_z",
    "v_x", "v_y", "v_z",
];

/// Streaming sum-of-squares accumulator.
#[derive(Debug, Clone, Default)]
pub struct RmseAccumulator {
    sq: [f64; 12],
    n: usize,
}

impl RmseAccumulator {
    pub fn add(&mut self, estimate: &SVector<f64, 12>, truth: &SVector<f64, 12>) {
        for i in 0..12 {
            let d = estimate[i] - truth[i];
            self.sq[i] += d * d;
        }
        self.n += 1;
    }

    pub fn finish(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for i in 0..12 {
            out[i] = (self.sq[i] / self.n.max(1) as f64).sqrt();
        }
        out
    }
}

/// Reference implementation for cross-checks: two passes, no accumulation.
pub fn rmse_two_pass(pairs: &[(SVector<f64, 12>, SVector<f64, 12>)]) -> [f64; 12] {
    let mut out = [0.0; 12];
    for i in 0..12 {
        let diffs: Vec<f64> = pairs.iter().map(|(e, t)| e[i] - t[i]).collect();
        let mean_sq = diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len().max(1) as f64;
        out[i] = mean_sq.sqrt();
    }
    out
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut ranks = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                ranks[idx[k]] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for i in 0..xs.len() {
        cov += (rx[i] - mean) * (ry[i] - mean);
        var_x += (rx[i] - mean) * (rx[i] - mean);
        var_y += (ry[i] - mean) * (ry[i] - mean);
    }
    if var_x == 0.0 || var_y == 0.0 {
        return 0.0;
    }
    cov / (var_x * var_y).sqrt()
}

/// A trained GRU variant ready for evaluation.
pub struct GruModel {
    pub config: GruConfig,
    pub params: GruParams,
    pub normalizer: Normalizer,
    pub mask: InputMask,
}

/// Everything the evaluator may run.
pub struct ModelSet {
    pub vit: Option<(VitConfig, VitParams)>,
    pub variants: Vec<GruModel>,
}

#[derive(Debug, Clone)]
pub struct VariantEval {
    pub name: String,
    pub rmse: [f64; 12],
}

impl VariantEval {
    pub fn average(&self) -> f64 {
        self.rmse.iter().sum::<f64>() / 12.0
    }
}

/// Per-trajectory time series kept for report generation.
#[derive(Debug, Clone)]
pub struct TrajectoryTrace {
    pub name: String,
    pub t: Vec<f64>,
    pub truth: Vec<SVector<f64, 12>>,
    pub kalman: Vec<SVector<f64, 12>>,
    /// (variant name, corrected states, uncertainties) per learned variant.
    pub learned: Vec<(String, Vec<SVector<f64, 12>>, Vec<SVector<f64, 12>>)>,
}

pub struct Evaluation {
    /// First entry is always the `kf_only` baseline.
    pub variants: Vec<VariantEval>,
    pub traces: Vec<TrajectoryTrace>,
    /// Pooled (predicted error, realized error) over frames × components of
    /// the first learned variant.
    pub mu_pairs: Vec<(f64, f64)>,
}

impl Evaluation {
    pub fn spearman_mu_error(&self) -> Option<f64> {
        if self.mu_pairs.is_empty() {
            return None;
        }
        let xs: Vec<f64> = self.mu_pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = self.mu_pairs.iter().map(|p| p.1).collect();
        Some(spearman(&xs, &ys))
    }

    pub fn variant(&self, name: &str) -> Option<&VariantEval> {
        self.variants.iter().find(|v| v.name == name)
    }

    /// Percentage improvement of each variant over the baseline, per
    /// component plus the average column.
    pub fn improvement_table(&self) -> Vec<(String, [f64; 13])> {
        let baseline = &self.variants[0];
        self.variants
            .iter()
            .map(|v| {
                let mut row = [0.0; 13];
                for i in 0..12 {
                    row[i] = 100.0 * (1.0 - v.rmse[i] / baseline.rmse[i].max(1e-300));
                }
                row[12] = 100.0 * (1.0 - v.average() / baseline.average().max(1e-300));
                (v.name.clone(), row)
            })
            .collect()
    }
}

/// Run the filter-only baseline and every learned variant over the held-out
/// datasets, pooling RMSE across trajectories.
pub fn evaluate(
    datasets: &[(String, Dataset)],
    kf: &KalmanFilter,
    models: &ModelSet,
) -> Result<Evaluation, CliError> {
    if datasets.is_empty() {
        return Err(CliError::Config("no evaluation datasets".into()));
    }
    let mut kf_acc = RmseAccumulator::default();
    let mut variant_accs: Vec<RmseAccumulator> = models
        .variants
        .iter()
        .map(|_| RmseAccumulator::default())
        .collect();
    let mut traces = Vec::new();
    let mut mu_pairs = Vec::new();

    for (name, dataset) in datasets {
        let first_truth = dataset
            .frames
            .first()
            .and_then(|f| f.truth)
            .ok_or_else(|| CliError::Config(format!("{name}: missing ground truth")))?;

        // Filter-only pass.
        let mut belief = KalmanBelief::new(first_truth, 1e-2);
        let mut trace = TrajectoryTrace {
            name: name.clone(),
            t: Vec::with_capacity(dataset.len()),
            truth: Vec::with_capacity(dataset.len()),
            kalman: Vec::with_capacity(dataset.len()),
            learned: Vec::new(),
        };
        for frame in &dataset.frames {
            kf.step(&mut belief, frame)?;
            let truth = frame
                .truth
                .ok_or_else(|| CliError::Config(format!("{name}: frame without truth")))?;
            kf_acc.add(belief.state.vector(), truth.vector());
            trace.t.push(frame.t);
            trace.truth.push(*truth.vector());
            trace.kalman.push(*belief.state.vector());
        }

        // Learned variants. Dimension coherence between the ViT, the
        // normalizer, and the GRU is validated by the pipeline constructor.
        for (v_idx, model) in models.variants.iter().enumerate() {
            let mut pipeline = EstimatorPipeline::new(
                kf.clone(),
                KalmanBelief::new(first_truth, 1e-2),
                models.vit.clone(),
                model.params.clone(),
                model.config,
                model.normalizer.clone(),
                model.mask,
            )
            .map_err(CliError::from)?;
            let mut corrected = Vec::with_capacity(dataset.len());
            let mut uncertainty = Vec::with_capacity(dataset.len());
            for (frame, truth) in dataset.frames.iter().zip(trace.truth.iter()) {
                let out = pipeline.step(frame)?;
                variant_accs[v_idx].add(out.corrected.vector(), &SVector::from(*truth));
                if v_idx == 0 {
                    for i in 0..12 {
                        mu_pairs.push((
                            out.uncertainty[i],
                            (out.corrected.vector()[i] - truth[i]).abs(),
                        ));
                    }
                }
                corrected.push(*out.corrected.vector());
                uncertainty.push(out.uncertainty);
            }
            trace
                .learned
                .push((variant_label(model.mask).to_string(), corrected, uncertainty));
        }
        traces.push(trace);
    }

    let mut variants = vec![VariantEval {
        name: "kf_only".to_string(),
        rmse: kf_acc.finish(),
    }];
    for (model, acc) in models.variants.iter().zip(variant_accs.iter()) {
        variants.push(VariantEval {
            name: variant_label(model.mask).to_string(),
            rmse: acc.finish(),
        });
    }
    Ok(Evaluation {
        variants,
        traces,
        mu_pairs,
    })
}

pub fn variant_label(mask: InputMask) -> &'static str {
    match mask {
        InputMask::Full => "optistate",
        InputMask::NoKalman => "no_kf_input",
        InputMask::NoVision => "no_vision",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::SmallRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn incremental_rmse_matches_two_pass_oracle() {
        let mut rng = SmallRng::seed_from_u64(1);
        let pairs: Vec<(SVector<f64, 12>, SVector<f64, 12>)> = (0..500)
            .map(|_| {
                (
                    SVector::from_fn(|_, _| rng.random_range(-2.0..2.0)),
                    SVector::from_fn(|_, _| rng.random_range(-2.0..2.0)),
                )
            })
            .collect();
        let mut acc = RmseAccumulator::default();
        for (e, t) in &pairs {
            acc.add(e, t);
        }
        let fast = acc.finish();
        let slow = rmse_two_pass(&pairs);
        for i in 0..12 {
            assert!((fast[i] - slow[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_error_gives_zero_rmse() {
        let mut acc = RmseAccumulator::default();
        let x = SVector::<f64, 12>::from_fn(|i, _| i as f64);
        for _ in 0..10 {
            acc.add(&x, &x);
        }
        assert_eq!(acc.finish(), [0.0; 12]);
    }

    #[test]
    fn spearman_detects_monotone_relations() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert!((spearman(&xs, &ys) - 1.0).abs() < 1e-12);
        let ys_rev: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((spearman(&xs, &ys_rev) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_handles_ties() {
        let xs = [1.0, 1.0, 2.0, 3.0];
        let ys = [0.5, 0.5, 0.7, 0.9];
        let rho = spearman(&xs, &ys);
        assert!(rho > 0.9);
        let flat = [1.0, 1.0, 1.0, 1.0];
        assert_eq!(spearman(&flat, &ys), 0.0);
    }

    #[test]
    fn improvement_table_uses_first_row_as_baseline() {
        let eval = Evaluation {
            variants: vec![
                VariantEval {
                    name: "kf_only".into(),
                    rmse: [0.2; 12],
                },
                VariantEval {
                    name: "optistate".into(),
                    rmse: [0.1; 12],
                },
            ],
            traces: vec![],
            mu_pairs: vec![],
        };
        let table = eval.improvement_table();
        assert_eq!(table[0].0, "kf_only");
        assert!(table[0].1.iter().all(|&v| v.abs() < 1e-12));
        assert!(table[1].1.iter().all(|&v| (v - 50.0).abs() < 1e-9));
    }
}
