//! Bidirectional transformer predicting the flow velocity `v_θ(z_t, t)`.
//!
//! Tokens are frames. The Multi-Mask channels are projected to the model
//! width, then the timestep and prompt embeddings are added to every token.
//! Each block is pre-norm attention with rotary queries/keys followed by a
//! pre-norm SiLU MLP, both residual. No causal mask is applied.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::multimask::ConditionedInput;
use crate::real::Real;
use crate::rng::{self, purpose};
use crate::temporal::{RopeParams, TemporalIndexPlan};
use crate::tensor::Tensor;

/// Diffusion time is multiplied by this before the sinusoidal features.
pub const TIME_SCALE: f64 = 100.0;
pub const MLP_RATIO: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub frame_dim: usize,
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub cond_dim: usize,
    pub max_t: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            frame_dim: 16,
            width: 64,
            layers: 4,
            heads: 4,
            cond_dim: 14,
            max_t: 256,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("frame_dim", self.frame_dim),
            ("width", self.width),
            ("layers", self.layers),
            ("heads", self.heads),
            ("cond_dim", self.cond_dim),
            ("max_t", self.max_t),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.width % self.heads != 0 {
            return Err(Error::config(format!(
                "width {} not divisible by heads {}",
                self.width, self.heads
            )));
        }
        if self.head_dim() % 2 != 0 {
            return Err(Error::config(format!(
                "head_dim {} must be even",
                self.head_dim()
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    /// Channels per frame token: noisy, condition and mask.
    pub fn input_dim(&self) -> usize {
        2 * self.frame_dim + 1
    }

    pub fn rope(&self) -> RopeParams {
        RopeParams {
            head_dim: self.head_dim(),
            theta_base: RopeParams::DEFAULT_THETA,
        }
    }

    /// Parameter names and shapes, in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (w, d, h) = (self.width, self.frame_dim, MLP_RATIO * self.width);
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        let mut push = |name: String, shape: &[usize]| out.push((name, shape.to_vec()));
        push("input.w".into(), &[self.input_dim(), w]);
        push("input.b".into(), &[w]);
        push("time.w1".into(), &[w, w]);
        push("time.b1".into(), &[w]);
        push("time.w2".into(), &[w, w]);
        push("time.b2".into(), &[w]);
        push("prompt.w".into(), &[self.cond_dim, w]);
        push("prompt.b".into(), &[w]);
        for l in 0..self.layers {
            push(format!("layer{l}.attn_norm"), &[w]);
            push(format!("layer{l}.wq"), &[w, w]);
            push(format!("layer{l}.wk"), &[w, w]);
            push(format!("layer{l}.wv"), &[w, w]);
            push(format!("layer{l}.wo"), &[w, w]);
            push(format!("layer{l}.mlp_norm"), &[w]);
            push(format!("layer{l}.w1"), &[w, h]);
            push(format!("layer{l}.b1"), &[h]);
            push(format!("layer{l}.w2"), &[h, w]);
            push(format!("layer{l}.b2"), &[w]);
        }
        push("final_norm".into(), &[w]);
        push("out.w".into(), &[w, d]);
        push("out.b".into(), &[d]);
        out
    }
}

const PRE_LAYER: usize = 8;
const PER_LAYER: usize = 10;

/// Model weights, stored in [`ModelConfig::param_shapes`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> ModelParams<T> {
    /// Weight matrices `N(0, 1/fan_in)`, biases zero, norm gains one.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng::stream(seed, &[purpose::INIT]);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, shape) in cfg.param_shapes() {
            let n: usize = shape.iter().product();
            let data: Vec<T> = if shape.len() == 2 {
                let normal = Normal::new(0.0, 1.0 / (shape[0] as f64).sqrt())
                    .map_err(|e| Error::config(format!("{e}")))?;
                (0..n).map(|_| T::from_f64(normal.sample(&mut rng))).collect()
            } else if name.ends_with("norm") {
                alloc::vec![T::one(); n]
            } else {
                alloc::vec![T::zero(); n]
            };
            names.push(name);
            tensors.push(Tensor::new(shape, data)?);
        }
        Ok(Self { names, tensors })
    }

    /// Rebuilds parameters from named tensors, checking them against `cfg`.
    pub fn from_named(cfg: &ModelConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        cfg.validate()?;
        let expected = cfg.param_shapes();
        if expected.len() != named.len() {
            return Err(Error::contract(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                named.len()
            )));
        }
        let mut names = Vec::with_capacity(named.len());
        let mut tensors = Vec::with_capacity(named.len());
        for ((en, es), (n, t)) in expected.into_iter().zip(named) {
            if en != n || es != t.shape() {
                return Err(Error::contract(format!(
                    "parameter {n} {:?} does not match expected {en} {es:?}",
                    t.shape()
                )));
            }
            if !t.all_finite() {
                return Err(Error::contract(format!("parameter {n} is not finite")));
            }
            names.push(n);
            tensors.push(t);
        }
        Ok(Self { names, tensors })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.all_finite())
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
        }
    }

    /// Records every tensor as a leaf on `tape`.
    pub fn load(&self, tape: &mut Tape<T>, requires_grad: bool) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| tape.leaf(t.clone(), requires_grad))
            .collect()
    }
}

/// Text-prompt stand-in: a fixed-length real vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PromptVector {
    pub values: Vec<f64>,
}

impl PromptVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("prompt values must be finite"));
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: alloc::vec![0.0; dim],
        }
    }
}

/// `[sin(τ·f_k)…, cos(τ·f_k)…]` with `τ = t·TIME_SCALE` and
/// `f_k = 10000^(−k/half)`.
pub fn timestep_features(t: f64, width: usize) -> Vec<f64> {
    let half = width / 2;
    let tau = t * TIME_SCALE;
    let mut out = alloc::vec![0.0; width];
    for k in 0..half {
        let f = Float::powf(10_000.0, -(k as f64) / half as f64);
        out[k] = Float::sin(tau * f);
        out[half + k] = Float::cos(tau * f);
    }
    out
}

struct Weights<'a> {
    v: &'a [Var],
}

impl Weights<'_> {
    fn layer(&self, l: usize, k: usize) -> Var {
        self.v[PRE_LAYER + l * PER_LAYER + k]
    }

    fn tail(&self, layers: usize, k: usize) -> Var {
        self.v[PRE_LAYER + layers * PER_LAYER + k]
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::contract(format!("timestep {t} outside [0, 1]")));
    }
    Ok(())
}

fn embed_timestep_on_tape<T: Real>(
    tape: &mut Tape<T>,
    w: &Weights<'_>,
    cfg: &ModelConfig,
    t: f64,
) -> Result<Var> {
    check_t(t)?;
    let feats: Vec<T> = timestep_features(t, cfg.width)
        .into_iter()
        .map(T::from_f64)
        .collect();
    let x = tape.constant(Tensor::matrix(1, cfg.width, feats)?);
    let h = tape.matmul(x, w.v[2])?;
    let h = tape.add_row(h, w.v[3])?;
    let h = tape.silu(h);
    let h = tape.matmul(h, w.v[4])?;
    tape.add_row(h, w.v[5])
}

/// Timestep embedding `[width]`: sinusoidal features through a two-layer MLP.
pub fn embed_timestep<T: Real>(params: &ModelParams<T>, cfg: &ModelConfig, t: f64) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let vars = params.load(&mut tape, false);
    let e = embed_timestep_on_tape(&mut tape, &Weights { v: &vars }, cfg, t)?;
    tape.value(e).clone().reshape(alloc::vec![cfg.width])
}

/// Velocity prediction recorded on `tape`, with parameters already loaded
/// as `vars` (see [`ModelParams::load`]). Returns a `[T × D]` value.
pub fn forward_on_tape<T: Real>(
    tape: &mut Tape<T>,
    vars: &[Var],
    cfg: &ModelConfig,
    channels: &ConditionedInput<T>,
    t: f64,
    prompt: &PromptVector,
    indices: &TemporalIndexPlan,
) -> Result<Var> {
    let frames = channels.frames();
    if frames == 0 || frames > cfg.max_t {
        return Err(Error::contract(format!(
            "sequence length {frames} outside 1..={}",
            cfg.max_t
        )));
    }
    if channels.channels.last_dim() != cfg.input_dim() {
        return Err(Error::Dimension {
            op: "forward",
            lhs: channels.channels.shape().to_vec(),
            rhs: alloc::vec![frames, cfg.input_dim()],
        });
    }
    if indices.len() != frames {
        return Err(Error::contract(format!(
            "index plan has {} entries for {frames} frames",
            indices.len()
        )));
    }
    if prompt.values.len() != cfg.cond_dim {
        return Err(Error::contract(format!(
            "prompt has {} values, model expects {}",
            prompt.values.len(),
            cfg.cond_dim
        )));
    }
    if vars.len() != cfg.param_shapes().len() {
        return Err(Error::contract("parameter count does not match config"));
    }
    let w = Weights { v: vars };
    let rope = cfg.rope();
    let hd = cfg.head_dim();

    let temb = embed_timestep_on_tape(tape, &w, cfg, t)?;
    let p: Vec<T> = prompt.values.iter().map(|&x| T::from_f64(x)).collect();
    let p = tape.constant(Tensor::matrix(1, cfg.cond_dim, p)?);
    let pemb = tape.matmul(p, w.v[6])?;
    let pemb = tape.add_row(pemb, w.v[7])?;
    let emb = tape.add(temb, pemb)?;

    let x = tape.constant(channels.channels.clone());
    let h = tape.matmul(x, w.v[0])?;
    let h = tape.add_row(h, w.v[1])?;
    let mut h = tape.add_row(h, emb)?;

    let scale = 1.0 / (hd as f64).sqrt();
    for l in 0..cfg.layers {
        let n = tape.rms_norm(h, w.layer(l, 0))?;
        let q = tape.matmul(n, w.layer(l, 1))?;
        let k = tape.matmul(n, w.layer(l, 2))?;
        let v = tape.matmul(n, w.layer(l, 3))?;
        let q = tape.rope(q, &indices.indices, &rope)?;
        let k = tape.rope(k, &indices.indices, &rope)?;
        let mut heads = Vec::with_capacity(cfg.heads);
        for head in 0..cfg.heads {
            let qh = tape.slice_cols(q, head * hd, hd)?;
            let kh = tape.slice_cols(k, head * hd, hd)?;
            let vh = tape.slice_cols(v, head * hd, hd)?;
            let kt = tape.transpose(kh)?;
            let s = tape.matmul(qh, kt)?;
            let s = tape.scale(s, scale);
            let a = tape.softmax_rows(s);
            heads.push(tape.matmul(a, vh)?);
        }
        let cat = tape.concat_cols(&heads)?;
        let o = tape.matmul(cat, w.layer(l, 4))?;
        h = tape.add(h, o)?;

        let n = tape.rms_norm(h, w.layer(l, 5))?;
        let m = tape.matmul(n, w.layer(l, 6))?;
        let m = tape.add_row(m, w.layer(l, 7))?;
        let m = tape.silu(m);
        let m = tape.matmul(m, w.layer(l, 8))?;
        let m = tape.add_row(m, w.layer(l, 9))?;
        h = tape.add(h, m)?;
    }
    let n = tape.rms_norm(h, w.tail(cfg.layers, 0))?;
    let out = tape.matmul(n, w.tail(cfg.layers, 1))?;
    tape.add_row(out, w.tail(cfg.layers, 2))
}

/// Predicted velocity per frame, `[T × D]`.
pub fn forward<T: Real>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    channels: &ConditionedInput<T>,
    t: f64,
    prompt: &PromptVector,
    indices: &TemporalIndexPlan,
) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let vars = params.load(&mut tape, false);
    let out = forward_on_tape(&mut tape, &vars, cfg, channels, t, prompt, indices)?;
    Ok(tape.value(out).clone())
}

/// Multiply-add counts of one forward pass, split by term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopBreakdown {
    /// `layers · 2 · T² · width` (scores and weighted values).
    pub attention: u64,
    /// Terms linear in `T`: projections, MLPs, output head.
    pub linear: u64,
    /// Timestep MLP and prompt projection, independent of `T`.
    pub constant: u64,
}

impl FlopBreakdown {
    pub fn total(&self) -> u64 {
        self.attention + self.linear + self.constant
    }
}

/// Closed form, with `w` = width, `d` = frame_dim, `L` = layers:
///
/// ```text
/// attention = L · heads · T² · head_dim · 2
/// linear    = T·(2d+1)·w + L·(4·T·w² + 2·T·w·4w) + T·w·d
/// constant  = 2·w² + cond_dim·w
/// ```
pub fn flops_breakdown(cfg: &ModelConfig, frames: usize) -> FlopBreakdown {
    let (t, w, d, l) = (
        frames as u64,
        cfg.width as u64,
        cfg.frame_dim as u64,
        cfg.layers as u64,
    );
    let h = MLP_RATIO as u64 * w;
    FlopBreakdown {
        attention: l * cfg.heads as u64 * t * t * cfg.head_dim() as u64 * 2,
        linear: t * (2 * d + 1) * w + l * (4 * t * w * w + 2 * t * w * h) + t * w * d,
        constant: 2 * w * w + cfg.cond_dim as u64 * w,
    }
}

pub fn flops_forward(cfg: &ModelConfig, frames: usize) -> u64 {
    flops_breakdown(cfg, frames).total()
}

/// Random parameters drawn from `rng` at the scale of [`ModelParams::init`],
/// including nonzero biases and gains; used to exercise every parameter.
pub fn random_params<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<ModelParams<f64>> {
    let named = cfg
        .param_shapes()
        .into_iter()
        .map(|(name, shape)| {
            let n: usize = shape.iter().product();
            let scale = if shape.len() == 2 {
                1.0 / (shape[0] as f64).sqrt()
            } else {
                0.3
            };
            let base = if name.ends_with("norm") { 1.0 } else { 0.0 };
            let data = (0..n)
                .map(|_| base + scale * rng.random_range(-1.0..1.0))
                .collect();
            Tensor::new(shape, data).map(|t| (name, t))
        })
        .collect::<Result<Vec<_>>>()?;
    ModelParams::from_named(cfg, named)
}
