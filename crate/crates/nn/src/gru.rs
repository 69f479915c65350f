//! Stacked GRU correction network.
//!
//! Recurrence per layer (gates z, r logistic; candidate tanh; reset applied
//! to the recurrent contribution):
//!
//! ```text
//! z = σ(x Wz + h Uz + bz)
//! r = σ(x Wr + h Ur + br)
//! n = tanh(x Wn + bn + r ⊙ (h Un))
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```
//!
//! Hidden states start at zero per window; a linear head reads the top
//! layer's final hidden state into 24 outputs: 12 normalized state channels
//! and 12 error channels pushed through softplus so the uncertainty is
//! nonnegative by construction.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand::SeedableRng;

use crate::error::NnError;
use crate::optim::{AdamConfig, AdamState};
use crate::tensor::{add_row_broadcast, col_sums, sigmoid, softplus, trunc_normal};

/// State channels in the output head.
pub const STATE_DIM: usize = 12;
/// Total head outputs: state plus per-channel error.
pub const OUTPUT_DIM: usize = 2 * STATE_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruConfig {
    pub input_dim: usize,
    pub hidden_size: usize,
    pub n_layers: usize,
    /// Window length N.
    pub horizon: usize,
}

impl GruConfig {
    /// Full-size configuration: 182 inputs (12 + 128 + 12 + 12 + 3 + 3 + 12),
    /// four hidden layers of 128, ten-step window.
    pub fn paper() -> Self {
        Self {
            input_dim: 182,
            hidden_size: 128,
            n_layers: 4,
            horizon: 10,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 || self.hidden_size == 0 || self.n_layers == 0 || self.horizon == 0
        {
            return Err(NnError::Shape("all GRU dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// One layer's packed gate weights; columns are [z | r | n] blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer {
    pub w: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub layers: Vec<GruLayer>,
    pub head_w: DMatrix<f64>,
    pub head_b: DMatrix<f64>,
}

impl GruParams {
    pub fn init(cfg: &GruConfig, seed: u64) -> Result<Self, NnError> {
        cfg.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let h = cfg.hidden_size;
        let layers = (0..cfg.n_layers)
            .map(|l| {
                let input = if l == 0 { cfg.input_dim } else { h };
                GruLayer {
                    w: trunc_normal(input, 3 * h, 0.02, &mut rng),
                    u: trunc_normal(h, 3 * h, 0.02, &mut rng),
                    b: DMatrix::zeros(1, 3 * h),
                }
            })
            .collect();
        Ok(Self {
            layers,
            head_w: trunc_normal(h, OUTPUT_DIM, 0.02, &mut rng),
            head_b: DMatrix::zeros(1, OUTPUT_DIM),
        })
    }

    pub fn zeros(cfg: &GruConfig) -> Self {
        let h = cfg.hidden_size;
        Self {
            layers: (0..cfg.n_layers)
                .map(|l| {
                    let input = if l == 0 { cfg.input_dim } else { h };
                    GruLayer {
                        w: DMatrix::zeros(input, 3 * h),
                        u: DMatrix::zeros(h, 3 * h),
                        b: DMatrix::zeros(1, 3 * h),
                    }
                })
                .collect(),
            head_w: DMatrix::zeros(h, OUTPUT_DIM),
            head_b: DMatrix::zeros(1, OUTPUT_DIM),
        }
    }

    pub fn tensor_names(cfg: &GruConfig) -> Vec<String> {
        let mut names = Vec::new();
        for l in 0..cfg.n_layers {
            names.push(format!("layer.{l}.w"));
            names.push(format!("layer.{l}.u"));
            names.push(format!("layer.{l}.b"));
        }
        names.push("head.w".into());
        names.push("head.b".into());
        names
    }

    pub fn tensors(&self) -> Vec<&DMatrix<f64>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.push(&layer.w);
            out.push(&layer.u);
            out.push(&layer.b);
        }
        out.push(&self.head_w);
        out.push(&self.head_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        let mut out: Vec<&mut DMatrix<f64>> = Vec::new();
        for layer in &mut self.layers {
            out.push(&mut layer.w);
            out.push(&mut layer.u);
            out.push(&mut layer.b);
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }
}

struct StepCache {
    x: DMatrix<f64>,
    h_prev: DMatrix<f64>,
    z: DMatrix<f64>,
    r: DMatrix<f64>,
    n: DMatrix<f64>,
    /// Recurrent candidate contribution before the reset gate.
    gh_n: DMatrix<f64>,
}

struct ForwardCache {
    /// `steps × layers` step caches.
    steps: Vec<Vec<StepCache>>,
    /// Final hidden state of the top layer.
    top: DMatrix<f64>,
}

fn layer_step(layer: &GruLayer, x: &DMatrix<f64>, h_prev: &DMatrix<f64>) -> StepCache {
    let hidden = h_prev.ncols();
    let mut gx = x * &layer.w;
    add_row_broadcast(&mut gx, &layer.b);
    let gh = h_prev * &layer.u;

    let mut z = DMatrix::zeros(x.nrows(), hidden);
    let mut r = z.clone();
    let mut n = z.clone();
    let mut gh_n = z.clone();
    for i in 0..x.nrows() {
        for j in 0..hidden {
            z[(i, j)] = sigmoid(gx[(i, j)] + gh[(i, j)]);
            r[(i, j)] = sigmoid(gx[(i, j + hidden)] + gh[(i, j + hidden)]);
            gh_n[(i, j)] = gh[(i, j + 2 * hidden)];
            n[(i, j)] = (gx[(i, j + 2 * hidden)] + r[(i, j)] * gh_n[(i, j)]).tanh();
        }
    }
    StepCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        z,
        r,
        n,
        gh_n,
    }
}

fn step_output(cache: &StepCache) -> DMatrix<f64> {
    let mut h = cache.n.clone();
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            h[(i, j)] =
                (1.0 - cache.z[(i, j)]) * cache.n[(i, j)] + cache.z[(i, j)] * cache.h_prev[(i, j)];
        }
    }
    h
}

/// Run the stacked recurrence over `steps` (each B×input); hidden states
/// start at zero. Returns the raw head output (B×24) and caches.
fn forward_batch(
    params: &GruParams,
    cfg: &GruConfig,
    steps: &[DMatrix<f64>],
) -> Result<(DMatrix<f64>, ForwardCache), NnError> {
    let batch = steps
        .first()
        .ok_or_else(|| NnError::Shape("empty window".into()))?
        .nrows();
    for (t, x) in steps.iter().enumerate() {
        if x.ncols() != cfg.input_dim || x.nrows() != batch {
            return Err(NnError::Shape(format!(
                "step {t}: {}×{}, expected {batch}×{}",
                x.nrows(),
                x.ncols(),
                cfg.input_dim
            )));
        }
    }
    let mut hidden: Vec<DMatrix<f64>> = (0..cfg.n_layers)
        .map(|_| DMatrix::zeros(batch, cfg.hidden_size))
        .collect();
    let mut caches = Vec::with_capacity(steps.len());
    for x in steps {
        let mut layer_caches = Vec::with_capacity(cfg.n_layers);
        let mut input = x.clone();
        for (l, layer) in params.layers.iter().enumerate() {
            let cache = layer_step(layer, &input, &hidden[l]);
            let h = step_output(&cache);
            hidden[l] = h.clone();
            input = h;
            layer_caches.push(cache);
        }
        caches.push(layer_caches);
    }
    let top = hidden[cfg.n_layers - 1].clone();
    let mut y = &top * &params.head_w;
    add_row_broadcast(&mut y, &params.head_b);
    Ok((
        y,
        ForwardCache {
            steps: caches,
            top,
        },
    ))
}

/// Normalized-space outputs for one window: (state, error) with the error
/// channels already softplus-mapped.
pub fn forward_window(
    params: &GruParams,
    cfg: &GruConfig,
    window: &DMatrix<f64>,
) -> Result<([f64; STATE_DIM], [f64; STATE_DIM]), NnError> {
    if window.nrows() < cfg.horizon {
        return Err(NnError::Shape(format!(
            "window has {} rows, horizon is {}",
            window.nrows(),
            cfg.horizon
        )));
    }
    // Only the most recent `horizon` rows are consumed.
    let start = window.nrows() - cfg.horizon;
    let steps: Vec<DMatrix<f64>> = (start..window.nrows())
        .map(|t| window.rows(t, 1).into_owned())
        .collect();
    let (y, _) = forward_batch(params, cfg, &steps)?;
    let mut state = [0.0; STATE_DIM];
    let mut error = [0.0; STATE_DIM];
    for j in 0..STATE_DIM {
        state[j] = y[(0, j)];
        error[j] = softplus(y[(0, STATE_DIM + j)]);
    }
    Ok((state, error))
}

/// Raw head outputs (B×24) for a batch of step matrices; exposed for the
/// finite-difference oracle, which must rebuild the loss with the error
/// target frozen.
pub fn batch_outputs(
    params: &GruParams,
    cfg: &GruConfig,
    steps: &[DMatrix<f64>],
) -> Result<DMatrix<f64>, NnError> {
    forward_batch(params, cfg, steps).map(|(y, _)| y)
}

/// Loss of one batch plus parameter gradients (accumulated into `grads`).
///
/// Loss = MSE(state, target) + MSE(softplus(error), |state − target|) in
/// normalized space; the error target is detached.
pub fn batch_backward(
    params: &GruParams,
    cfg: &GruConfig,
    steps: &[DMatrix<f64>],
    targets: &DMatrix<f64>,
    grads: &mut GruParams,
) -> Result<f64, NnError> {
    let (y, cache) = forward_batch(params, cfg, steps)?;
    let batch = y.nrows();
    if targets.nrows() != batch || targets.ncols() != STATE_DIM {
        return Err(NnError::Shape(format!(
            "targets {}×{}, expected {batch}×{STATE_DIM}",
            targets.nrows(),
            targets.ncols()
        )));
    }
    let denom = (batch * STATE_DIM) as f64;
    let mut loss = 0.0;
    let mut dy = DMatrix::zeros(batch, OUTPUT_DIM);
    for i in 0..batch {
        for j in 0..STATE_DIM {
            let err = y[(i, j)] - targets[(i, j)];
            loss += err * err / denom;
            dy[(i, j)] = 2.0 * err / denom;

            let pre = y[(i, STATE_DIM + j)];
            let mu = softplus(pre);
            let mu_err = mu - err.abs(); // |err| detached
            loss += mu_err * mu_err / denom;
            dy[(i, STATE_DIM + j)] = 2.0 * mu_err * sigmoid(pre) / denom;
        }
    }

    // Head.
    grads.head_w += cache.top.transpose() * &dy;
    grads.head_b += col_sums(&dy);
    let dtop = &dy * params.head_w.transpose();

    // Backpropagation through time, top layer to bottom, last step first.
    let n_steps = steps.len();
    let mut carry: Vec<DMatrix<f64>> = (0..cfg.n_layers)
        .map(|_| DMatrix::zeros(batch, cfg.hidden_size))
        .collect();
    carry[cfg.n_layers - 1] = dtop;

    for t in (0..n_steps).rev() {
        let mut from_above: Option<DMatrix<f64>> = None;
        for l in (0..cfg.n_layers).rev() {
            let sc = &cache.steps[t][l];
            let mut dh = std::mem::replace(
                &mut carry[l],
                DMatrix::zeros(batch, cfg.hidden_size),
            );
            if let Some(dx_above) = from_above.take() {
                dh += dx_above;
            }

            let hidden = cfg.hidden_size;
            let mut dgx = DMatrix::zeros(batch, 3 * hidden);
            let mut dgh = DMatrix::zeros(batch, 3 * hidden);
            let mut dh_prev = DMatrix::zeros(batch, hidden);
            for i in 0..batch {
                for j in 0..hidden {
                    let (z, r, n) = (sc.z[(i, j)], sc.r[(i, j)], sc.n[(i, j)]);
                    let dz = dh[(i, j)] * (sc.h_prev[(i, j)] - n);
                    let dn = dh[(i, j)] * (1.0 - z);
                    dh_prev[(i, j)] = dh[(i, j)] * z;

                    let dn_pre = dn * (1.0 - n * n);
                    let dr = dn_pre * sc.gh_n[(i, j)];
                    let dz_pre = dz * z * (1.0 - z);
                    let dr_pre = dr * r * (1.0 - r);

                    dgx[(i, j)] = dz_pre;
                    dgx[(i, j + hidden)] = dr_pre;
                    dgx[(i, j + 2 * hidden)] = dn_pre;
                    dgh[(i, j)] = dz_pre;
                    dgh[(i, j + hidden)] = dr_pre;
                    dgh[(i, j + 2 * hidden)] = dn_pre * r;
                }
            }

            let layer = &params.layers[l];
            let glayer = &mut grads.layers[l];
            glayer.w += sc.x.transpose() * &dgx;
            glayer.u += sc.h_prev.transpose() * &dgh;
            glayer.b += col_sums(&dgx);

            dh_prev += &dgh * layer.u.transpose();
            carry[l] = dh_prev;
            if l > 0 {
                from_above = Some(&dgx * layer.w.transpose());
            }
        }
    }
    Ok(loss)
}

/// Write a `OSGR` checkpoint: config + mask echo, parameters, and the
/// fitted normalizer bounds (as tensors).
pub fn save_gru(
    path: &std::path::Path,
    cfg: &GruConfig,
    params: &GruParams,
    normalizer: &crate::normalizer::Normalizer,
    mask: crate::features::InputMask,
) -> Result<(), NnError> {
    let mut meta = std::collections::BTreeMap::new();
    meta.insert("input_dim".to_string(), cfg.input_dim.to_string());
    meta.insert("hidden_size".to_string(), cfg.hidden_size.to_string());
    meta.insert("n_layers".to_string(), cfg.n_layers.to_string());
    meta.insert("horizon".to_string(), cfg.horizon.to_string());
    meta.insert("mask".to_string(), mask.name().to_string());

    let names = GruParams::tensor_names(cfg);
    let tensors = params.tensors();
    let to_row = |v: &[f64]| DMatrix::from_row_slice(1, v.len(), v);
    let norm_tensors = [
        to_row(&normalizer.feat_min),
        to_row(&normalizer.feat_max),
        to_row(&normalizer.out_min),
        to_row(&normalizer.out_max),
    ];
    let mut pairs: Vec<(&str, &DMatrix<f64>)> = names
        .iter()
        .map(|n| n.as_str())
        .zip(tensors.into_iter())
        .collect();
    pairs.push(("norm.feat_min", &norm_tensors[0]));
    pairs.push(("norm.feat_max", &norm_tensors[1]));
    pairs.push(("norm.out_min", &norm_tensors[2]));
    pairs.push(("norm.out_max", &norm_tensors[3]));
    crate::checkpoint::write_checkpoint(path, crate::checkpoint::GRU_MAGIC, &meta, &pairs)
}

/// Load a `OSGR` checkpoint.
pub fn load_gru(
    path: &std::path::Path,
) -> Result<
    (
        GruConfig,
        GruParams,
        crate::normalizer::Normalizer,
        crate::features::InputMask,
    ),
    NnError,
> {
    let mut ck = crate::checkpoint::read_checkpoint(path, crate::checkpoint::GRU_MAGIC)?;
    let cfg = GruConfig {
        input_dim: ck.meta_usize("input_dim")?,
        hidden_size: ck.meta_usize("hidden_size")?,
        n_layers: ck.meta_usize("n_layers")?,
        horizon: ck.meta_usize("horizon")?,
    };
    cfg.validate()?;
    let mask = crate::features::InputMask::from_name(ck.meta_str("mask")?)?;
    let mut params = GruParams::zeros(&cfg);
    let names = GruParams::tensor_names(&cfg);
    {
        let tensors = params.tensors_mut();
        for (name, slot) in names.iter().zip(tensors.into_iter()) {
            *slot = ck.take(name, slot.nrows(), slot.ncols())?;
        }
    }
    let row = |m: DMatrix<f64>| m.iter().cloned().collect::<Vec<f64>>();
    let normalizer = crate::normalizer::Normalizer {
        feat_min: row(ck.take("norm.feat_min", 1, cfg.input_dim)?),
        feat_max: row(ck.take("norm.feat_max", 1, cfg.input_dim)?),
        out_min: row(ck.take("norm.out_min", 1, STATE_DIM)?),
        out_max: row(ck.take("norm.out_max", 1, STATE_DIM)?),
    };
    ck.finish()?;
    Ok((cfg, params, normalizer, mask))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GruTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    /// Sliding-window stride over the training trajectories.
    pub stride: usize,
}

impl Default for GruTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            lr: 1e-5,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
            stride: 1,
        }
    }
}

/// A set of training windows over normalized per-trajectory matrices.
#[derive(Debug, Clone)]
pub struct WindowSet {
    /// Per trajectory: frames × input_dim, already normalized and masked.
    pub features: Vec<DMatrix<f64>>,
    /// Per trajectory: frames × 12 normalized targets.
    pub targets: Vec<DMatrix<f64>>,
    /// (trajectory, end frame) of each window; windows never cross
    /// trajectory boundaries.
    pub windows: Vec<(usize, usize)>,
}

impl WindowSet {
    pub fn enumerate(
        features: Vec<DMatrix<f64>>,
        targets: Vec<DMatrix<f64>>,
        horizon: usize,
        stride: usize,
    ) -> Self {
        let mut windows = Vec::new();
        for (traj, f) in features.iter().enumerate() {
            let mut end = horizon - 1;
            while end < f.nrows() {
                windows.push((traj, end));
                end += stride.max(1);
            }
        }
        Self {
            features,
            targets,
            windows,
        }
    }

    /// Gather one batch of step matrices and targets.
    pub fn gather(&self, ids: &[usize], horizon: usize) -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
        let input_dim = self.features[0].ncols();
        let mut steps =
            vec![DMatrix::zeros(ids.len(), input_dim); horizon];
        let mut targets = DMatrix::zeros(ids.len(), STATE_DIM);
        for (row, &id) in ids.iter().enumerate() {
            let (traj, end) = self.windows[id];
            for (s, step) in steps.iter_mut().enumerate() {
                let frame = end + 1 - horizon + s;
                step.row_mut(row)
                    .copy_from(&self.features[traj].row(frame));
            }
            targets
                .row_mut(row)
                .copy_from(&self.targets[traj].row(end));
        }
        (steps, targets)
    }
}

/// Optimize GRU parameters over a window set; returns per-epoch mean loss.
pub fn train_on_windows(
    windows: &WindowSet,
    cfg: &GruConfig,
    tcfg: &GruTrainConfig,
) -> Result<(GruParams, Vec<f64>), NnError> {
    if windows.windows.is_empty() {
        return Err(NnError::Shape("no training windows".into()));
    }
    let mut params = GruParams::init(cfg, tcfg.seed)?;
    let shapes: Vec<(usize, usize)> = params
        .tensors()
        .iter()
        .map(|t| (t.nrows(), t.ncols()))
        .collect();
    let mut adam = AdamState::new(&shapes);
    let adam_cfg = AdamConfig {
        lr: tcfg.lr,
        beta1: tcfg.beta1,
        beta2: tcfg.beta2,
        eps: 1e-8,
        weight_decay: tcfg.weight_decay,
        decoupled: false,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(tcfg.seed ^ 0x4752_5531);
    let mut order: Vec<usize> = (0..windows.windows.len()).collect();
    let mut losses = Vec::with_capacity(tcfg.epochs);
    let mut step = 0usize;

    for _epoch in 0..tcfg.epochs {
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut count = 0usize;
        for ids in order.chunks(tcfg.batch_size.max(1)) {
            let (steps, targets) = windows.gather(ids, cfg.horizon);
            let mut grads = GruParams::zeros(cfg);
            let loss = batch_backward(&params, cfg, &steps, &targets, &mut grads)?;
            step += 1;
            if !loss.is_finite() {
                return Err(NnError::Diverged { step, loss });
            }
            let mut tensors = params.tensors_mut();
            adam.step(&mut tensors, &grads.tensors(), &adam_cfg);
            epoch_loss += loss * ids.len() as f64;
            count += ids.len();
        }
        losses.push(epoch_loss / count as f64);
    }
    Ok((params, losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::InputMask;
    use crate::normalizer::Normalizer;

    fn micro_config() -> GruConfig {
        GruConfig {
            input_dim: 3,
            hidden_size: 4,
            n_layers: 2,
            horizon: 3,
        }
    }

    #[test]
    fn zero_parameters_output_head_bias() {
        // All-zero weights: gates sit at 0.5, the candidate at 0, so the
        // hidden state never leaves 0 and the head emits its (zero) bias.
        let cfg = micro_config();
        let params = GruParams::zeros(&cfg);
        let window = DMatrix::from_element(3, 3, 0.7);
        let (state, error) = forward_window(&params, &cfg, &window).unwrap();
        for j in 0..STATE_DIM {
            assert_eq!(state[j], 0.0);
            // Softplus of the zero pre-activation.
            assert!((error[j] - std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_parameter_gates_sit_at_half() {
        let cfg = micro_config();
        let params = GruParams::zeros(&cfg);
        let x = DMatrix::from_element(1, 3, 0.3);
        let h = DMatrix::zeros(1, 4);
        let cache = layer_step(&params.layers[0], &x, &h);
        for j in 0..4 {
            assert_eq!(cache.z[(0, j)], 0.5);
            assert_eq!(cache.r[(0, j)], 0.5);
            assert_eq!(cache.n[(0, j)], 0.0);
        }
    }

    #[test]
    fn scalar_recurrence_matches_hand_computation() {
        // hidden 1, input 1, one layer, three steps, hand-set weights.
        let cfg = GruConfig {
            input_dim: 1,
            hidden_size: 1,
            n_layers: 1,
            horizon: 3,
        };
        let mut params = GruParams::zeros(&cfg);
        let (wz, wr, wn) = (0.4, -0.3, 0.8);
        let (uz, ur, un) = (0.2, 0.5, -0.6);
        let (bz, br, bn) = (0.1, -0.2, 0.05);
        params.layers[0].w = DMatrix::from_row_slice(1, 3, &[wz, wr, wn]);
        params.layers[0].u = DMatrix::from_row_slice(1, 3, &[uz, ur, un]);
        params.layers[0].b = DMatrix::from_row_slice(1, 3, &[bz, br, bn]);
        params.head_w = DMatrix::from_fn(1, OUTPUT_DIM, |_, j| 0.1 * (j as f64 + 1.0));

        let inputs = [0.3, -0.7, 1.1];
        let mut h = 0.0f64;
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        for &x in &inputs {
            let z = sig(wz * x + uz * h + bz);
            let r = sig(wr * x + ur * h + br);
            let n = (wn * x + bn + r * (un * h)).tanh();
            h = (1.0 - z) * n + z * h;
        }

        let window = DMatrix::from_column_slice(3, 1, &inputs);
        let (state, error) = forward_window(&params, &cfg, &window).unwrap();
        for j in 0..STATE_DIM {
            assert!(
                (state[j] - 0.1 * (j as f64 + 1.0) * h).abs() < 1e-12,
                "state {j}"
            );
            let pre = 0.1 * (STATE_DIM + j + 1) as f64 * h;
            assert!((error[j] - softplus(pre)).abs() < 1e-12);
        }
    }

    #[test]
    fn only_last_horizon_rows_are_consumed() {
        let cfg = micro_config();
        let params = GruParams::init(&cfg, 5).unwrap();
        let mut long = DMatrix::from_fn(8, 3, |r, c| (r * 3 + c) as f64 * 0.01);
        let base = forward_window(&params, &cfg, &long.clone()).unwrap();
        // Perturb a row outside the window: no effect.
        long[(0, 1)] = 99.0;
        long[(4, 2)] = -99.0;
        let same = forward_window(&params, &cfg, &long.clone()).unwrap();
        assert_eq!(base, same);
        // Perturb inside the window: output changes.
        long[(5, 0)] += 0.5;
        let changed = forward_window(&params, &cfg, &long).unwrap();
        assert_ne!(base.0, changed.0);
    }

    #[test]
    fn gates_bounded_and_hidden_state_in_unit_ball() {
        let cfg = GruConfig {
            input_dim: 6,
            hidden_size: 5,
            n_layers: 3,
            horizon: 4,
        };
        let params = GruParams::init(&cfg, 17).unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        for _ in 0..50 {
            let steps: Vec<DMatrix<f64>> = (0..cfg.horizon)
                .map(|_| DMatrix::from_fn(2, 6, |_, _| rng.random_range(-3.0..3.0)))
                .collect();
            let mut hidden: Vec<DMatrix<f64>> =
                (0..cfg.n_layers).map(|_| DMatrix::zeros(2, 5)).collect();
            for x in &steps {
                let mut input = x.clone();
                for (l, layer) in params.layers.iter().enumerate() {
                    let cache = layer_step(layer, &input, &hidden[l]);
                    for v in cache.z.iter().chain(cache.r.iter()) {
                        assert!(*v > 0.0 && *v < 1.0, "gate out of (0,1)");
                    }
                    let h = step_output(&cache);
                    for v in h.iter() {
                        assert!(v.abs() < 1.0, "hidden left the unit ball: {v}");
                    }
                    hidden[l] = h.clone();
                    input = h;
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_with_normalizer_and_mask() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gru.ckpt");
        let cfg = micro_config();
        let params = GruParams::init(&cfg, 23).unwrap();
        let normalizer = Normalizer {
            feat_min: vec![0.0, -1.0, 2.0],
            feat_max: vec![1.0, 3.0, 2.0],
            out_min: vec![-1.0; STATE_DIM],
            out_max: vec![4.0; STATE_DIM],
        };
        save_gru(&path, &cfg, &params, &normalizer, InputMask::NoVision).unwrap();
        let (cfg2, params2, norm2, mask2) = load_gru(&path).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(params, params2);
        assert_eq!(normalizer, norm2);
        assert_eq!(mask2, InputMask::NoVision);
    }

    #[test]
    fn overfits_a_small_window_set() {
        // 32 windows, micro net: loss must collapse quickly at a workable
        // learning rate.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        let cfg = GruConfig {
            input_dim: 6,
            hidden_size: 16,
            n_layers: 2,
            horizon: 4,
        };
        let frames = 64;
        let features = DMatrix::from_fn(frames, 6, |_, _| rng.random_range(0.0..1.0));
        let targets = DMatrix::from_fn(frames, STATE_DIM, |r, c| {
            0.5 + 0.3 * features[(r, c % 6)] - 0.2 * features[(r, (c + 1) % 6)]
        });
        let windows = WindowSet::enumerate(vec![features], vec![targets], cfg.horizon, 2);
        let tcfg = GruTrainConfig {
            epochs: 150,
            batch_size: 16,
            lr: 5e-3,
            weight_decay: 0.0,
            seed: 1,
            stride: 2,
            ..GruTrainConfig::default()
        };
        let (_, losses) = train_on_windows(&windows, &cfg, &tcfg).unwrap();
        let initial = losses[0];
        let last = *losses.last().unwrap();
        assert!(
            last < 0.05 * initial,
            "loss {last} did not collapse from {initial}"
        );
    }
}
