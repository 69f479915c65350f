//! Depth-image autoencoder: patch embedding, pre-norm transformer encoder
//! and decoder, and a linear reconstruction head back to patch pixels.
//!
//! The encoder's mean-pooled final tokens form the latent vector consumed by
//! the GRU. Training minimizes pixel MSE with AdamW; every gradient is
//! computed analytically (and checked against finite differences in tests).

use nalgebra::DMatrix;
use optistate_core::DepthImage;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand::SeedableRng;

use crate::augment::augment;
use crate::error::NnError;
use crate::optim::{AdamConfig, AdamState};
use crate::tensor::{add_row_broadcast, col_sums, gelu, gelu_grad, softmax_rows, trunc_normal};

const LN_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VitConfig {
    pub img_h: usize,
    pub img_w: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub mlp_ratio: usize,
    pub n_heads: usize,
}

impl VitConfig {
    /// Hyperparameters used on the full-size (224×224) images.
    pub fn paper() -> Self {
        Self {
            img_h: 224,
            img_w: 224,
            patch_size: 16,
            embed_dim: 128,
            depth: 4,
            mlp_ratio: 4,
            n_heads: 4,
        }
    }

    pub fn n_tokens(&self) -> usize {
        (self.img_h / self.patch_size) * (self.img_w / self.patch_size)
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn latent_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.img_h % self.patch_size != 0 || self.img_w % self.patch_size != 0 {
            return Err(NnError::Shape(format!(
                "image {}×{} not divisible by patch size {}",
                self.img_h, self.img_w, self.patch_size
            )));
        }
        if self.embed_dim % self.n_heads != 0 {
            return Err(NnError::Shape(format!(
                "embed dim {} not divisible by {} heads",
                self.embed_dim, self.n_heads
            )));
        }
        if self.depth == 0 || self.embed_dim == 0 {
            return Err(NnError::Shape("depth and embed dim must be positive".into()));
        }
        Ok(())
    }

    /// Closed-form parameter count:
    /// patch embed (p²·d + d), two positional tables (2·n·d), per block
    /// 12·d² + (13 + 4·ratio-adjusted)·d … spelled out below, and the
    /// pixel head (d·p² + p²). Asserted against the live tensors in tests.
    pub fn param_count(&self) -> usize {
        let d = self.embed_dim;
        let p2 = self.patch_dim();
        let n = self.n_tokens();
        let hidden = self.mlp_ratio * d;
        let block = 2 * d            // ln1
            + 4 * (d * d + d)        // q, k, v, o projections
            + 2 * d                  // ln2
            + (d * hidden + hidden)  // mlp in
            + (hidden * d + d); // mlp out
        (p2 * d + d)                 // patch embed
            + 2 * n * d              // positional tables
            + 2 * self.depth * block // encoder + decoder stacks
            + 2 * 2 * d              // final norms
            + (d * p2 + p2) // head
    }
}

/// Dense layer y = x·W + b over row-major token/batch matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl Linear {
    fn init(input: usize, output: usize, rng: &mut ChaCha12Rng) -> Self {
        Self {
            w: trunc_normal(input, output, 0.02, rng),
            b: DMatrix::zeros(1, output),
        }
    }

    fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: DMatrix::zeros(input, output),
            b: DMatrix::zeros(1, output),
        }
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x * &self.w;
        add_row_broadcast(&mut y, &self.b);
        y
    }

    /// Returns dx and accumulates parameter gradients.
    fn backward(&self, x: &DMatrix<f64>, dy: &DMatrix<f64>, grad: &mut Linear) -> DMatrix<f64> {
        grad.w += x.transpose() * dy;
        grad.b += col_sums(dy);
        dy * self.w.transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: DMatrix<f64>,
    pub beta: DMatrix<f64>,
}

struct LnCache {
    xhat: DMatrix<f64>,
    rstd: Vec<f64>,
}

impl LayerNorm {
    fn init(dim: usize) -> Self {
        Self {
            gamma: DMatrix::from_element(1, dim, 1.0),
            beta: DMatrix::zeros(1, dim),
        }
    }

    fn zeros(dim: usize) -> Self {
        Self {
            gamma: DMatrix::zeros(1, dim),
            beta: DMatrix::zeros(1, dim),
        }
    }

    fn forward(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, LnCache) {
        let d = x.ncols();
        let mut xhat = x.clone();
        let mut rstd = Vec::with_capacity(x.nrows());
        for mut row in xhat.row_iter_mut() {
            let mean = row.sum() / d as f64;
            let mut var = 0.0;
            for v in row.iter() {
                var += (v - mean) * (v - mean);
            }
            var /= d as f64;
            let r = 1.0 / (var + LN_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * r;
            }
            rstd.push(r);
        }
        let mut y = xhat.clone();
        for mut row in y.row_iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.gamma[(0, j)] + self.beta[(0, j)];
            }
        }
        (y, LnCache { xhat, rstd })
    }

    fn backward(&self, cache: &LnCache, dy: &DMatrix<f64>, grad: &mut LayerNorm) -> DMatrix<f64> {
        let d = dy.ncols() as f64;
        let mut dx = DMatrix::zeros(dy.nrows(), dy.ncols());
        for i in 0..dy.nrows() {
            let mut mean_dxhat = 0.0;
            let mut mean_dxhat_xhat = 0.0;
            for j in 0..dy.ncols() {
                let dxhat = dy[(i, j)] * self.gamma[(0, j)];
                mean_dxhat += dxhat;
                mean_dxhat_xhat += dxhat * cache.xhat[(i, j)];
                grad.gamma[(0, j)] += dy[(i, j)] * cache.xhat[(i, j)];
                grad.beta[(0, j)] += dy[(i, j)];
            }
            mean_dxhat /= d;
            mean_dxhat_xhat /= d;
            for j in 0..dy.ncols() {
                let dxhat = dy[(i, j)] * self.gamma[(0, j)];
                dx[(i, j)] =
                    cache.rstd[i] * (dxhat - mean_dxhat - cache.xhat[(i, j)] * mean_dxhat_xhat);
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    n_heads: usize,
}

struct AttnCache {
    x: DMatrix<f64>,
    q: DMatrix<f64>,
    k: DMatrix<f64>,
    v: DMatrix<f64>,
    /// Post-softmax attention per head.
    attn: Vec<DMatrix<f64>>,
    concat: DMatrix<f64>,
}

impl Attention {
    fn init(dim: usize, n_heads: usize, rng: &mut ChaCha12Rng) -> Self {
        Self {
            wq: Linear::init(dim, dim, rng),
            wk: Linear::init(dim, dim, rng),
            wv: Linear::init(dim, dim, rng),
            wo: Linear::init(dim, dim, rng),
            n_heads,
        }
    }

    fn zeros(dim: usize, n_heads: usize) -> Self {
        Self {
            wq: Linear::zeros(dim, dim),
            wk: Linear::zeros(dim, dim),
            wv: Linear::zeros(dim, dim),
            wo: Linear::zeros(dim, dim),
            n_heads,
        }
    }

    fn head_view(m: &DMatrix<f64>, head: usize, d_head: usize) -> DMatrix<f64> {
        m.columns(head * d_head, d_head).into_owned()
    }

    fn forward(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, AttnCache) {
        let d_head = x.ncols() / self.n_heads;
        let scale = 1.0 / (d_head as f64).sqrt();
        let q = self.wq.forward(x);
        let k = self.wk.forward(x);
        let v = self.wv.forward(x);
        let mut concat = DMatrix::zeros(x.nrows(), x.ncols());
        let mut attn = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let qh = Self::head_view(&q, h, d_head);
            let kh = Self::head_view(&k, h, d_head);
            let vh = Self::head_view(&v, h, d_head);
            let mut scores = &qh * kh.transpose() * scale;
            softmax_rows(&mut scores);
            let out = &scores * vh;
            concat
                .columns_mut(h * d_head, d_head)
                .copy_from(&out);
            attn.push(scores);
        }
        let y = self.wo.forward(&concat);
        (
            y,
            AttnCache {
                x: x.clone(),
                q,
                k,
                v,
                attn,
                concat,
            },
        )
    }

    fn backward(&self, cache: &AttnCache, dy: &DMatrix<f64>, grad: &mut Attention) -> DMatrix<f64> {
        let d_head = cache.x.ncols() / self.n_heads;
        let scale = 1.0 / (d_head as f64).sqrt();
        let dconcat = self.wo.backward(&cache.concat, dy, &mut grad.wo);

        let mut dq = DMatrix::zeros(cache.q.nrows(), cache.q.ncols());
        let mut dk = dq.clone();
        let mut dv = dq.clone();
        for h in 0..self.n_heads {
            let a = &cache.attn[h];
            let dout = dconcat.columns(h * d_head, d_head).into_owned();
            let vh = Self::head_view(&cache.v, h, d_head);
            let qh = Self::head_view(&cache.q, h, d_head);
            let kh = Self::head_view(&cache.k, h, d_head);

            let da = &dout * vh.transpose();
            dv.columns_mut(h * d_head, d_head)
                .copy_from(&(a.transpose() * &dout));
            // Softmax backward per row: ds = a ⊙ (da − rowsum(da ⊙ a)).
            let mut ds = DMatrix::zeros(a.nrows(), a.ncols());
            for i in 0..a.nrows() {
                let mut dot = 0.0;
                for j in 0..a.ncols() {
                    dot += da[(i, j)] * a[(i, j)];
                }
                for j in 0..a.ncols() {
                    ds[(i, j)] = a[(i, j)] * (da[(i, j)] - dot);
                }
            }
            dq.columns_mut(h * d_head, d_head)
                .copy_from(&(&ds * kh * scale));
            dk.columns_mut(h * d_head, d_head)
                .copy_from(&(ds.transpose() * qh * scale));
        }
        let mut dx = self.wq.backward(&cache.x, &dq, &mut grad.wq);
        dx += self.wk.backward(&cache.x, &dk, &mut grad.wk);
        dx += self.wv.backward(&cache.x, &dv, &mut grad.wv);
        dx
    }
}

/// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x)).
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ln1: LayerNorm,
    pub attn: Attention,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

struct BlockCache {
    ln1: LnCache,
    attn: AttnCache,
    ln2: LnCache,
    ln2_out: DMatrix<f64>,
    pre_act: DMatrix<f64>,
    act: DMatrix<f64>,
}

impl Block {
    fn init(cfg: &VitConfig, rng: &mut ChaCha12Rng) -> Self {
        let d = cfg.embed_dim;
        Self {
            ln1: LayerNorm::init(d),
            attn: Attention::init(d, cfg.n_heads, rng),
            ln2: LayerNorm::init(d),
            fc1: Linear::init(d, cfg.mlp_ratio * d, rng),
            fc2: Linear::init(cfg.mlp_ratio * d, d, rng),
        }
    }

    fn zeros(cfg: &VitConfig) -> Self {
        let d = cfg.embed_dim;
        Self {
            ln1: LayerNorm::zeros(d),
            attn: Attention::zeros(d, cfg.n_heads),
            ln2: LayerNorm::zeros(d),
            fc1: Linear::zeros(d, cfg.mlp_ratio * d),
            fc2: Linear::zeros(cfg.mlp_ratio * d, d),
        }
    }

    fn forward(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, BlockCache) {
        let (norm1, ln1_cache) = self.ln1.forward(x);
        let (attn_out, attn_cache) = self.attn.forward(&norm1);
        let x1 = x + attn_out;
        let (ln2_out, ln2_cache) = self.ln2.forward(&x1);
        let pre_act = self.fc1.forward(&ln2_out);
        let act = pre_act.map(gelu);
        let y = &x1 + self.fc2.forward(&act);
        (
            y,
            BlockCache {
                ln1: ln1_cache,
                attn: attn_cache,
                ln2: ln2_cache,
                ln2_out,
                pre_act,
                act,
            },
        )
    }

    fn backward(&self, cache: &BlockCache, dy: &DMatrix<f64>, grad: &mut Block) -> DMatrix<f64> {
        let dact = self.fc2.backward(&cache.act, dy, &mut grad.fc2);
        let dpre = dact.zip_map(&cache.pre_act, |d, x| d * gelu_grad(x));
        let dln2_out = self.fc1.backward(&cache.ln2_out, &dpre, &mut grad.fc1);
        let mut dx1 = self.ln2.backward(&cache.ln2, &dln2_out, &mut grad.ln2);
        dx1 += dy;
        let dnorm1 = self.attn.backward(&cache.attn, &dx1, &mut grad.attn);
        let mut dx = self.ln1.backward(&cache.ln1, &dnorm1, &mut grad.ln1);
        dx += dx1;
        dx
    }
}

/// All learned tensors of the autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct VitParams {
    pub patch_embed: Linear,
    pub pos_enc: DMatrix<f64>,
    pub enc_blocks: Vec<Block>,
    pub enc_norm: LayerNorm,
    pub pos_dec: DMatrix<f64>,
    pub dec_blocks: Vec<Block>,
    pub dec_norm: LayerNorm,
    pub head: Linear,
}

impl VitParams {
    pub fn init(cfg: &VitConfig, seed: u64) -> Result<Self, NnError> {
        cfg.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Ok(Self {
            patch_embed: Linear::init(cfg.patch_dim(), cfg.embed_dim, &mut rng),
            pos_enc: DMatrix::zeros(cfg.n_tokens(), cfg.embed_dim),
            enc_blocks: (0..cfg.depth).map(|_| Block::init(cfg, &mut rng)).collect(),
            enc_norm: LayerNorm::init(cfg.embed_dim),
            pos_dec: DMatrix::zeros(cfg.n_tokens(), cfg.embed_dim),
            dec_blocks: (0..cfg.depth).map(|_| Block::init(cfg, &mut rng)).collect(),
            dec_norm: LayerNorm::init(cfg.embed_dim),
            head: Linear::init(cfg.embed_dim, cfg.patch_dim(), &mut rng),
        })
    }

    pub fn zeros(cfg: &VitConfig) -> Self {
        Self {
            patch_embed: Linear::zeros(cfg.patch_dim(), cfg.embed_dim),
            pos_enc: DMatrix::zeros(cfg.n_tokens(), cfg.embed_dim),
            enc_blocks: (0..cfg.depth).map(|_| Block::zeros(cfg)).collect(),
            enc_norm: LayerNorm::zeros(cfg.embed_dim),
            pos_dec: DMatrix::zeros(cfg.n_tokens(), cfg.embed_dim),
            dec_blocks: (0..cfg.depth).map(|_| Block::zeros(cfg)).collect(),
            dec_norm: LayerNorm::zeros(cfg.embed_dim),
            head: Linear::zeros(cfg.embed_dim, cfg.patch_dim()),
        }
    }

    /// Stable tensor order shared by the optimizer and checkpoints.
    pub fn tensor_names(cfg: &VitConfig) -> Vec<String> {
        let mut names = vec!["patch_embed.w".into(), "patch_embed.b".into(), "pos_enc".into()];
        let block = |prefix: &str, names: &mut Vec<String>| {
            for suffix in [
                "ln1.gamma",
                "ln1.beta",
                "attn.wq.w",
                "attn.wq.b",
                "attn.wk.w",
                "attn.wk.b",
                "attn.wv.w",
                "attn.wv.b",
                "attn.wo.w",
                "attn.wo.b",
                "ln2.gamma",
                "ln2.beta",
                "fc1.w",
                "fc1.b",
                "fc2.w",
                "fc2.b",
            ] {
                names.push(format!("{prefix}.{suffix}"));
            }
        };
        for i in 0..cfg.depth {
            block(&format!("enc.{i}"), &mut names);
        }
        names.push("enc_norm.gamma".into());
        names.push("enc_norm.beta".into());
        names.push("pos_dec".into());
        for i in 0..cfg.depth {
            block(&format!("dec.{i}"), &mut names);
        }
        names.push("dec_norm.gamma".into());
        names.push("dec_norm.beta".into());
        names.push("head.w".into());
        names.push("head.b".into());
        names
    }

    pub fn tensors(&self) -> Vec<&DMatrix<f64>> {
        let mut out: Vec<&DMatrix<f64>> =
            vec![&self.patch_embed.w, &self.patch_embed.b, &self.pos_enc];
        // Order must match tensor_names.
        fn push_block<'a>(b: &'a Block, out: &mut Vec<&'a DMatrix<f64>>) {
            out.extend([
                &b.ln1.gamma,
                &b.ln1.beta,
                &b.attn.wq.w,
                &b.attn.wq.b,
                &b.attn.wk.w,
                &b.attn.wk.b,
                &b.attn.wv.w,
                &b.attn.wv.b,
                &b.attn.wo.w,
                &b.attn.wo.b,
                &b.ln2.gamma,
                &b.ln2.beta,
                &b.fc1.w,
                &b.fc1.b,
                &b.fc2.w,
                &b.fc2.b,
            ]);
        }
        for b in &self.enc_blocks {
            push_block(b, &mut out);
        }
        out.extend([&self.enc_norm.gamma, &self.enc_norm.beta, &self.pos_dec]);
        for b in &self.dec_blocks {
            push_block(b, &mut out);
        }
        out.extend([
            &self.dec_norm.gamma,
            &self.dec_norm.beta,
            &self.head.w,
            &self.head.b,
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        let mut out: Vec<&mut DMatrix<f64>> = vec![
            &mut self.patch_embed.w,
            &mut self.patch_embed.b,
            &mut self.pos_enc,
        ];
        fn push_block<'a>(b: &'a mut Block, out: &mut Vec<&'a mut DMatrix<f64>>) {
            out.extend([
                &mut b.ln1.gamma,
                &mut b.ln1.beta,
                &mut b.attn.wq.w,
                &mut b.attn.wq.b,
                &mut b.attn.wk.w,
                &mut b.attn.wk.b,
                &mut b.attn.wv.w,
                &mut b.attn.wv.b,
                &mut b.attn.wo.w,
                &mut b.attn.wo.b,
                &mut b.ln2.gamma,
                &mut b.ln2.beta,
                &mut b.fc1.w,
                &mut b.fc1.b,
                &mut b.fc2.w,
                &mut b.fc2.b,
            ]);
        }
        for b in &mut self.enc_blocks {
            push_block(b, &mut out);
        }
        out.push(&mut self.enc_norm.gamma);
        out.push(&mut self.enc_norm.beta);
        out.push(&mut self.pos_dec);
        for b in &mut self.dec_blocks {
            push_block(b, &mut out);
        }
        out.push(&mut self.dec_norm.gamma);
        out.push(&mut self.dec_norm.beta);
        out.push(&mut self.head.w);
        out.push(&mut self.head.b);
        out
    }

    pub fn total_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Image → token matrix of flattened patches, row-major patch order.
pub fn patchify(img: &DMatrix<f64>, patch_size: usize) -> Result<DMatrix<f64>, NnError> {
    let (h, w) = (img.nrows(), img.ncols());
    if h % patch_size != 0 || w % patch_size != 0 {
        return Err(NnError::Shape(format!(
            "{h}×{w} image not divisible by patch size {patch_size}"
        )));
    }
    let (ph, pw) = (h / patch_size, w / patch_size);
    let mut tokens = DMatrix::zeros(ph * pw, patch_size * patch_size);
    for pr in 0..ph {
        for pc in 0..pw {
            let token = pr * pw + pc;
            for r in 0..patch_size {
                for c in 0..patch_size {
                    tokens[(token, r * patch_size + c)] =
                        img[(pr * patch_size + r, pc * patch_size + c)];
                }
            }
        }
    }
    Ok(tokens)
}

/// Exact inverse of [`patchify`].
pub fn unpatchify(tokens: &DMatrix<f64>, cfg: &VitConfig) -> DMatrix<f64> {
    let ps = cfg.patch_size;
    let pw = cfg.img_w / ps;
    let mut img = DMatrix::zeros(cfg.img_h, cfg.img_w);
    for token in 0..tokens.nrows() {
        let (pr, pc) = (token / pw, token % pw);
        for r in 0..ps {
            for c in 0..ps {
                img[(pr * ps + r, pc * ps + c)] = tokens[(token, r * ps + c)];
            }
        }
    }
    img
}

pub fn image_to_matrix(img: &DepthImage) -> DMatrix<f64> {
    DMatrix::from_fn(img.height, img.width, |r, c| img.get(r, c) as f64)
}

struct EncodeCache {
    embedded: DMatrix<f64>,
    patches: DMatrix<f64>,
    blocks: Vec<BlockCache>,
    norm: LnCache,
}

fn encode_with_cache(
    img: &DMatrix<f64>,
    params: &VitParams,
    cfg: &VitConfig,
) -> Result<(DMatrix<f64>, EncodeCache), NnError> {
    let patches = patchify(img, cfg.patch_size)?;
    if patches.nrows() != cfg.n_tokens() {
        return Err(NnError::Shape(format!(
            "expected {} tokens, got {}",
            cfg.n_tokens(),
            patches.nrows()
        )));
    }
    let mut x = params.patch_embed.forward(&patches);
    x += &params.pos_enc;
    let embedded = x.clone();
    let mut blocks = Vec::with_capacity(cfg.depth);
    for block in &params.enc_blocks {
        let (y, cache) = block.forward(&x);
        x = y;
        blocks.push(cache);
    }
    let (out, norm) = params.enc_norm.forward(&x);
    Ok((
        out,
        EncodeCache {
            embedded,
            patches,
            blocks,
            norm,
        },
    ))
}

/// Encoder output tokens plus the mean-pooled latent vector.
pub fn encode(
    img: &DepthImage,
    params: &VitParams,
    cfg: &VitConfig,
) -> Result<(DMatrix<f64>, Vec<f64>), NnError> {
    let matrix = image_to_matrix(img);
    let (tokens, _) = encode_with_cache(&matrix, params, cfg)?;
    Ok((tokens.clone(), latent_from_tokens(&tokens)))
}

/// Mean over tokens, the 1×d latent.
pub fn latent_from_tokens(tokens: &DMatrix<f64>) -> Vec<f64> {
    let n = tokens.nrows() as f64;
    (0..tokens.ncols())
        .map(|c| tokens.column(c).sum() / n)
        .collect()
}

struct DecodeCache {
    dec_in: DMatrix<f64>,
    blocks: Vec<BlockCache>,
    norm: LnCache,
    norm_out: DMatrix<f64>,
}

fn decode_with_cache(
    tokens: &DMatrix<f64>,
    params: &VitParams,
    cfg: &VitConfig,
) -> Result<(DMatrix<f64>, DecodeCache), NnError> {
    if tokens.nrows() != cfg.n_tokens() || tokens.ncols() != cfg.embed_dim {
        return Err(NnError::Shape(format!(
            "decoder input {}×{}, expected {}×{}",
            tokens.nrows(),
            tokens.ncols(),
            cfg.n_tokens(),
            cfg.embed_dim
        )));
    }
    let mut x = tokens + &params.pos_dec;
    let dec_in = x.clone();
    let mut blocks = Vec::with_capacity(cfg.depth);
    for block in &params.dec_blocks {
        let (y, cache) = block.forward(&x);
        x = y;
        blocks.push(cache);
    }
    let (normed, norm) = params.dec_norm.forward(&x);
    let pixels = params.head.forward(&normed);
    Ok((
        unpatchify(&pixels, cfg),
        DecodeCache {
            dec_in,
            blocks,
            norm,
            norm_out: normed,
        },
    ))
}

/// Reconstruct an image from encoder tokens (clamped into [0, 1]).
pub fn decode(
    tokens: &DMatrix<f64>,
    params: &VitParams,
    cfg: &VitConfig,
) -> Result<DepthImage, NnError> {
    let (raw, _) = decode_with_cache(tokens, params, cfg)?;
    let pixels = raw.row_iter().flat_map(|r| r.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect::<Vec<_>>()).collect();
    Ok(DepthImage::new(cfg.img_h, cfg.img_w, pixels))
}

/// Full autoencoder pass returning MSE loss and raw reconstruction.
pub fn reconstruct(
    img: &DMatrix<f64>,
    params: &VitParams,
    cfg: &VitConfig,
) -> Result<(f64, DMatrix<f64>), NnError> {
    let (tokens, _) = encode_with_cache(img, params, cfg)?;
    let (rec, _) = decode_with_cache(&tokens, params, cfg)?;
    let n = (cfg.img_h * cfg.img_w) as f64;
    let loss = (&rec - img).map(|v| v * v).sum() / n;
    Ok((loss, rec))
}

/// Loss, plus gradients (accumulated into `grads`) for one image.
pub fn reconstruct_backward(
    img: &DMatrix<f64>,
    params: &VitParams,
    cfg: &VitConfig,
    grads: &mut VitParams,
) -> Result<f64, NnError> {
    let (tokens, enc_cache) = encode_with_cache(img, params, cfg)?;
    let (rec, dec_cache) = decode_with_cache(&tokens, params, cfg)?;
    let n = (cfg.img_h * cfg.img_w) as f64;
    let diff = &rec - img;
    let loss = diff.map(|v| v * v).sum() / n;

    // d(loss)/d(rec), routed back through the patch layout.
    let dimg = diff * (2.0 / n);
    let dpixels = patchify(&dimg, cfg.patch_size)?;
    let dnormed = params
        .head
        .backward(&dec_cache.norm_out, &dpixels, &mut grads.head);
    let mut dx = params
        .dec_norm
        .backward(&dec_cache.norm, &dnormed, &mut grads.dec_norm);
    for i in (0..cfg.depth).rev() {
        dx = params.dec_blocks[i].backward(&dec_cache.blocks[i], &dx, &mut grads.dec_blocks[i]);
    }
    let _ = &dec_cache.dec_in;
    grads.pos_dec += &dx;
    // Into the encoder output.
    let mut denc = params
        .enc_norm
        .backward(&enc_cache.norm, &dx, &mut grads.enc_norm);
    for i in (0..cfg.depth).rev() {
        denc = params.enc_blocks[i].backward(&enc_cache.blocks[i], &denc, &mut grads.enc_blocks[i]);
    }
    grads.pos_enc += &denc;
    let _ = &enc_cache.embedded;
    params
        .patch_embed
        .backward(&enc_cache.patches, &denc, &mut grads.patch_embed);
    Ok(loss)
}

/// Write a `OSVT` checkpoint: config echo plus every named tensor.
pub fn save_vit(
    path: &std::path::Path,
    cfg: &VitConfig,
    params: &VitParams,
) -> Result<(), NnError> {
    let mut meta = std::collections::BTreeMap::new();
    meta.insert("img_h".to_string(), cfg.img_h.to_string());
    meta.insert("img_w".to_string(), cfg.img_w.to_string());
    meta.insert("patch_size".to_string(), cfg.patch_size.to_string());
    meta.insert("embed_dim".to_string(), cfg.embed_dim.to_string());
    meta.insert("depth".to_string(), cfg.depth.to_string());
    meta.insert("mlp_ratio".to_string(), cfg.mlp_ratio.to_string());
    meta.insert("n_heads".to_string(), cfg.n_heads.to_string());
    let names = VitParams::tensor_names(cfg);
    let tensors = params.tensors();
    let pairs: Vec<(&str, &DMatrix<f64>)> = names
        .iter()
        .map(|n| n.as_str())
        .zip(tensors.into_iter())
        .collect();
    crate::checkpoint::write_checkpoint(path, crate::checkpoint::VIT_MAGIC, &meta, &pairs)
}

/// Load a `OSVT` checkpoint, validating shapes against its own config echo.
pub fn load_vit(path: &std::path::Path) -> Result<(VitConfig, VitParams), NnError> {
    let mut ck = crate::checkpoint::read_checkpoint(path, crate::checkpoint::VIT_MAGIC)?;
    let cfg = VitConfig {
        img_h: ck.meta_usize("img_h")?,
        img_w: ck.meta_usize("img_w")?,
        patch_size: ck.meta_usize("patch_size")?,
        embed_dim: ck.meta_usize("embed_dim")?,
        depth: ck.meta_usize("depth")?,
        mlp_ratio: ck.meta_usize("mlp_ratio")?,
        n_heads: ck.meta_usize("n_heads")?,
    };
    cfg.validate()?;
    let mut params = VitParams::zeros(&cfg);
    let names = VitParams::tensor_names(&cfg);
    {
        let tensors = params.tensors_mut();
        for (name, slot) in names.iter().zip(tensors.into_iter()) {
            *slot = ck.take(name, slot.nrows(), slot.ncols())?;
        }
    }
    ck.finish()?;
    Ok((cfg, params))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VitTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub augment: bool,
    pub seed: u64,
}

impl Default for VitTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            lr: 4e-4,
            weight_decay: 0.1,
            beta1: 0.90,
            beta2: 0.95,
            augment: true,
            seed: 0,
        }
    }
}

/// Train the autoencoder on a set of depth images; returns the parameters
/// and the per-epoch mean loss history.
pub fn train_vit(
    images: &[DepthImage],
    cfg: &VitConfig,
    tcfg: &VitTrainConfig,
) -> Result<(VitParams, Vec<f64>), NnError> {
    if images.is_empty() {
        return Err(NnError::Shape("empty training image set".into()));
    }
    let mut params = VitParams::init(cfg, tcfg.seed)?;
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
        decoupled: true,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(tcfg.seed ^ 0x5649_5452);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut losses = Vec::with_capacity(tcfg.epochs);
    let mut step = 0usize;

    for _epoch in 0..tcfg.epochs {
        // Fisher–Yates shuffle.
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut epoch_count = 0usize;
        for batch in order.chunks(tcfg.batch_size.max(1)) {
            let mut grads = VitParams::zeros(cfg);
            let mut batch_loss = 0.0;
            for &idx in batch {
                let img = if tcfg.augment {
                    augment(&images[idx], &mut rng)
                } else {
                    images[idx].clone()
                };
                let matrix = image_to_matrix(&img);
                batch_loss += reconstruct_backward(&matrix, &params, cfg, &mut grads)?;
            }
            let scale = 1.0 / batch.len() as f64;
            for g in grads.tensors_mut() {
                *g *= scale;
            }
            batch_loss *= scale;
            step += 1;
            if !batch_loss.is_finite() {
                return Err(NnError::Diverged {
                    step,
                    loss: batch_loss,
                });
            }
            let mut tensors = params.tensors_mut();
            adam.step(&mut tensors, &grads.tensors(), &adam_cfg);
            epoch_loss += batch_loss * batch.len() as f64;
            epoch_count += batch.len();
        }
        losses.push(epoch_loss / epoch_count as f64);
    }
    Ok((params, losses))
}
