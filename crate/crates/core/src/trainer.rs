//! Two-stage flow-matching training.
//!
//! Stage one trains on full-rate clips with random Multi-Mask conditions.
//! Stage two continues from those weights on level-homogeneous batches of
//! clips subsampled at a random rate level, with randomized index offsets
//! and shot-level condition dropping on multi-shot clips.
//!
//! All randomness for update `k` is drawn from streams keyed by
//! `(seed, stage, k, item)`, so a checkpoint only has to carry the seed and
//! step counter to resume bit-exactly.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::denoiser::{forward_on_tape, ModelConfig, ModelParams, PromptVector};
use crate::error::{Error, Result};
use crate::exec::{Executor, Sequential};
use crate::multimask::{build_conditioned_input, drop_shot_conditions, sample_training_condition, MultiMaskCondition};
use crate::real::Real;
use crate::rng::{self, purpose};
use crate::temporal::{assign_indices, default_t_max, sample_t_start, RateLevel, TemporalIndexPlan};
use crate::tensor::Tensor;
use crate::world::{render_times, SceneParams};

/// Keeps sampled timesteps strictly inside `(0, 1)`.
pub const T_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub m_loc: f64,
    pub s_scale: f64,
    pub sigma_shift: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            m_loc: 0.0,
            s_scale: 1.0,
            sigma_shift: 3.0,
        }
    }
}

impl NoiseSchedule {
    pub fn validate(&self) -> Result<()> {
        if !self.m_loc.is_finite() || !(self.s_scale > 0.0) || !(self.sigma_shift >= 1.0) {
            return Err(Error::config(format!(
                "noise schedule needs finite m, s > 0 and sigma_shift >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// `σt / (1 + (σ − 1)t)`.
    pub fn shift(&self, t: f64) -> f64 {
        let s = self.sigma_shift;
        s * t / (1.0 + (s - 1.0) * t)
    }

    /// `sigmoid(u)` with `u ~ N(m, s)`.
    pub fn sample_pre_shift<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        let u = self.m_loc + self.s_scale * z;
        1.0 / (1.0 + Float::exp(-u))
    }

    pub fn sample_t<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.shift(self.sample_pre_shift(rng)).clamp(T_EPS, 1.0 - T_EPS)
    }
}

/// Logit-normal density `1/(s√(2π)) · 1/(t(1−t)) · exp(−(logit t − m)²/(2s²))`.
pub fn logit_normal_pdf(t: f64, m: f64, s: f64) -> f64 {
    if !(t > 0.0 && t < 1.0) {
        return 0.0;
    }
    let l = Float::ln(t / (1.0 - t));
    let z = (l - m) / s;
    Float::exp(-0.5 * z * z) / (s * Float::sqrt(2.0 * core::f64::consts::PI) * t * (1.0 - t))
}

/// `(1 − t)·z0 + t·z1`.
pub fn interpolate<T: Real>(z0: &Tensor<T>, z1: &Tensor<T>, t: f64) -> Result<Tensor<T>> {
    if z0.shape() != z1.shape() {
        return Err(Error::contract(format!(
            "interpolate shapes {:?} and {:?} differ",
            z0.shape(),
            z1.shape()
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::contract(format!("interpolation time {t} outside [0, 1]")));
    }
    let (a, b) = (T::from_f64(1.0 - t), T::from_f64(t));
    let data = z0.data().iter().zip(z1.data()).map(|(&x, &y)| a * x + b * y).collect();
    Tensor::new(z0.shape().to_vec(), data)
}

/// One clean clip with its conditions and temporal indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingItem<T> {
    pub frames: Tensor<T>,
    pub cond: MultiMaskCondition<T>,
    pub prompt: PromptVector,
    pub indices: TemporalIndexPlan,
}

/// The per-item draws of the flow objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemNoise<T> {
    pub t: f64,
    pub z1: Tensor<T>,
}

impl<T: Real> ItemNoise<T> {
    pub fn draw<R: Rng + ?Sized>(schedule: &NoiseSchedule, shape: &[usize], rng: &mut R) -> Result<Self> {
        let t = schedule.sample_t(rng);
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| T::from_f64(StandardNormal.sample(rng)))
            .collect();
        Ok(Self {
            t,
            z1: Tensor::new(shape.to_vec(), data)?,
        })
    }
}

/// `‖v_θ(z_t, t) − (z1 − z0)‖²` averaged over frames and channels.
pub fn fm_item_on_tape<T: Real>(
    tape: &mut Tape<T>,
    vars: &[Var],
    cfg: &ModelConfig,
    item: &TrainingItem<T>,
    noise: &ItemNoise<T>,
) -> Result<Var> {
    let zt = interpolate(&item.frames, &noise.z1, noise.t)?;
    let channels = build_conditioned_input(&zt, &item.cond)?;
    let out = forward_on_tape(tape, vars, cfg, &channels, noise.t, &item.prompt, &item.indices)?;
    let target: Vec<T> = noise
        .z1
        .data()
        .iter()
        .zip(item.frames.data())
        .map(|(&a, &b)| a - b)
        .collect();
    let target = tape.constant(Tensor::new(item.frames.shape().to_vec(), target)?);
    tape.mse(out, target)
}

/// Flow-matching loss of a batch, drawing each item's `t` and `z1` from
/// `rng` in item order.
pub fn fm_loss_on_tape<T: Real, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    vars: &[Var],
    cfg: &ModelConfig,
    batch: &[TrainingItem<T>],
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<Var> {
    let first = batch.first().ok_or_else(|| Error::contract("empty batch"))?;
    let frames = first.frames.rows();
    let mut total: Option<Var> = None;
    for item in batch {
        if item.frames.rows() != frames {
            return Err(Error::contract("batch items must share their length"));
        }
        let noise = ItemNoise::draw(schedule, item.frames.shape(), rng)?;
        let l = fm_item_on_tape(tape, vars, cfg, item, &noise)?;
        total = Some(match total {
            None => l,
            Some(acc) => tape.add(acc, l)?,
        });
    }
    let total = total.expect("non-empty batch");
    Ok(tape.scale(total, 1.0 / batch.len() as f64))
}

pub fn fm_loss<T: Real, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    batch: &[TrainingItem<T>],
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<T> {
    let mut tape = Tape::new();
    let vars = params.load(&mut tape, false);
    let l = fm_loss_on_tape(&mut tape, &vars, cfg, batch, schedule, rng)?;
    Ok(tape.value(l).data()[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemOutcome<T> {
    pub loss: f64,
    pub grads: Vec<Vec<T>>,
}

pub fn item_gradient<T: Real>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    item: &TrainingItem<T>,
    noise: &ItemNoise<T>,
) -> Result<ItemOutcome<T>> {
    let mut tape = Tape::new();
    let vars = params.load(&mut tape, true);
    let loss = fm_item_on_tape(&mut tape, &vars, cfg, item, noise)?;
    tape.backward(loss)?;
    let value = tape.value(loss).data()[0].to_f64();
    let grads = vars
        .iter()
        .zip(params.tensors())
        .map(|(&v, p)| {
            tape.take_grad(v)
                .unwrap_or_else(|| alloc::vec![T::zero(); p.numel()])
        })
        .collect();
    Ok(ItemOutcome { loss: value, grads })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    SingleRate,
    MultiRate,
}

impl Stage {
    pub fn number(self) -> u32 {
        match self {
            Stage::SingleRate => 1,
            Stage::MultiRate => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: Stage,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub warmup_steps: u64,
    pub ema_decay: f64,
    /// Total updates of the stage; a resumed run stops at the same count.
    pub steps: u64,
    /// Rates sampled per batch, in fps of a `base_fps` full rate.
    pub rate_fps: Vec<f64>,
    pub base_fps: f64,
    /// Frames per training clip.
    pub window: usize,
    pub t_max: f64,
    pub schedule: NoiseSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Chance of adding every-`r`-th-frame conditions (`r ∈ {2, 4}`).
    pub anchor_prob: f64,
    /// Chance of conditioning on a clip prefix.
    pub prefix_prob: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Full-rate clips of 24 frames with random Multi-Mask conditions.
    pub fn stage1() -> Self {
        Self {
            stage: Stage::SingleRate,
            learning_rate: 5e-4,
            weight_decay: 1e-4,
            batch_size: 32,
            warmup_steps: 2000,
            ema_decay: 0.999,
            steps: 2000,
            rate_fps: alloc::vec![24.0],
            base_fps: 24.0,
            window: 24,
            t_max: default_t_max(24),
            schedule: NoiseSchedule::default(),
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            anchor_prob: 0.0,
            prefix_prob: 0.0,
            seed: 0,
        }
    }

    /// 16-frame clips at 6, 12 or 24 fps.
    pub fn stage2() -> Self {
        Self {
            stage: Stage::MultiRate,
            learning_rate: 2e-5,
            steps: 4000,
            rate_fps: alloc::vec![6.0, 12.0, 24.0],
            window: 16,
            t_max: default_t_max(16 * 4),
            anchor_prob: 0.5,
            prefix_prob: 0.5,
            ..Self::stage1()
        }
    }

    pub fn levels(&self) -> Result<Vec<RateLevel>> {
        self.rate_fps
            .iter()
            .map(|&f| RateLevel::from_fps(f, self.base_fps))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        let levels = self.levels()?;
        if levels.is_empty() || self.rate_fps.iter().any(|&f| !(f > 0.0)) {
            return Err(Error::config("rate set must hold positive rates"));
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return Err(Error::config(format!("ema_decay {} outside (0, 1)", self.ema_decay)));
        }
        if self.batch_size == 0 || self.window == 0 {
            return Err(Error::config("batch_size and window must be positive"));
        }
        if !(self.learning_rate >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::config("learning rate and weight decay must be >= 0"));
        }
        if self.stage == Stage::SingleRate && levels.iter().any(|l| *l != RateLevel::FULL) {
            return Err(Error::config("stage 1 trains on the full rate only"));
        }
        Ok(())
    }

    /// Learning rate of the `k`-th update (1-based): `lr·k/W` while `k < W`.
    pub fn learning_rate_at(&self, k: u64) -> f64 {
        if k < self.warmup_steps {
            self.learning_rate * k as f64 / self.warmup_steps as f64
        } else {
            self.learning_rate
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T = f32> {
    pub model: ModelConfig,
    pub params: ModelParams<T>,
    pub ema: ModelParams<T>,
    pub adam_m: Vec<Tensor<T>>,
    pub adam_v: Vec<Tensor<T>>,
    pub stage: Stage,
    /// Updates completed in the current stage.
    pub step: u64,
    /// Root of every random stream of the run.
    pub seed: u64,
}

impl<T: Real> Checkpoint<T> {
    pub fn fresh(model: ModelConfig, seed: u64) -> Result<Self> {
        let params = ModelParams::init(&model, seed)?;
        let zeros: Vec<Tensor<T>> = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        Ok(Self {
            model,
            ema: params.clone(),
            params,
            adam_m: zeros.clone(),
            adam_v: zeros,
            stage: Stage::SingleRate,
            step: 0,
            seed,
        })
    }

    /// Switches a stage-1 state to stage 2: weights and EMA carry over, the
    /// optimizer moments and step counter restart.
    pub fn begin_stage2(&mut self) -> Result<()> {
        if self.stage != Stage::SingleRate {
            return Err(Error::contract("stage 2 starts from a stage-1 checkpoint"));
        }
        self.stage = Stage::MultiRate;
        self.step = 0;
        for t in self.adam_m.iter_mut().chain(self.adam_v.iter_mut()) {
            t.data_mut().iter_mut().for_each(|x| *x = T::zero());
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = self.model.param_shapes();
        let ok = |set: &[Tensor<T>]| {
            set.len() == shapes.len() && set.iter().zip(&shapes).all(|(t, (_, s))| t.shape() == &s[..])
        };
        if !ok(self.params.tensors()) || !ok(self.ema.tensors()) || !ok(&self.adam_m) || !ok(&self.adam_v) {
            return Err(Error::contract("checkpoint tensors do not match the model config"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

fn training_error(step: u64, msg: impl Into<alloc::string::String>) -> Error {
    Error::Training {
        step,
        msg: msg.into(),
    }
}

/// Averages per-item gradients in item order and applies one AdamW update
/// plus the EMA update.
pub fn apply_outcomes<T: Real>(
    state: &mut Checkpoint<T>,
    outcomes: &[ItemOutcome<T>],
    cfg: &TrainConfig,
) -> Result<StepStats> {
    let k = state.step + 1;
    if outcomes.is_empty() {
        return Err(training_error(k, "empty batch"));
    }
    let n = outcomes.len() as f64;
    let loss = outcomes.iter().map(|o| o.loss).sum::<f64>() / n;
    let mut mean: Vec<Vec<f64>> = state
        .params
        .tensors()
        .iter()
        .map(|t| alloc::vec![0.0; t.numel()])
        .collect();
    for o in outcomes {
        for (acc, g) in mean.iter_mut().zip(&o.grads) {
            for (a, &x) in acc.iter_mut().zip(g) {
                *a += x.to_f64();
            }
        }
    }
    let mut sq = 0.0;
    for g in mean.iter_mut().flatten() {
        *g /= n;
        sq += *g * *g;
    }
    let grad_norm = Float::sqrt(sq);
    if !loss.is_finite() || !grad_norm.is_finite() {
        return Err(training_error(
            k,
            format!(
                "non-finite loss {loss} or gradient norm {grad_norm} (lr {}, batch {})",
                cfg.learning_rate_at(k),
                outcomes.len()
            ),
        ));
    }

    let lr = cfg.learning_rate_at(k);
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - Float::powi(b1, k.min(i32::MAX as u64) as i32);
    let c2 = 1.0 - Float::powi(b2, k.min(i32::MAX as u64) as i32);
    let d = cfg.ema_decay;
    for (i, g) in mean.iter().enumerate() {
        let p = state.params.tensors_mut()[i].data_mut();
        let m = state.adam_m[i].data_mut();
        let v = state.adam_v[i].data_mut();
        for j in 0..g.len() {
            let mj = b1 * m[j].to_f64() + (1.0 - b1) * g[j];
            let vj = b2 * v[j].to_f64() + (1.0 - b2) * g[j] * g[j];
            m[j] = T::from_f64(mj);
            v[j] = T::from_f64(vj);
            let pj = p[j].to_f64();
            let step = lr * (mj / c1) / (Float::sqrt(vj / c2) + cfg.adam_eps);
            p[j] = T::from_f64(pj - step - lr * cfg.weight_decay * pj);
        }
        let e = state.ema.tensors_mut()[i].data_mut();
        for j in 0..g.len() {
            e[j] = T::from_f64(d * e[j].to_f64() + (1.0 - d) * p[j].to_f64());
        }
    }
    if !state.params.all_finite() {
        return Err(training_error(k, "parameters became non-finite"));
    }
    state.step = k;
    Ok(StepStats {
        step: k,
        loss,
        lr,
        grad_norm,
    })
}

/// Noise stream of item `i` of update `k`.
pub fn item_noise_rng(seed: u64, stage: Stage, k: u64, i: usize) -> rng::StreamRng {
    rng::stream(seed, &[purpose::ITEM, stage.number() as u64, k, i as u64])
}

pub fn train_step_with<T: Real, E: Executor>(
    state: &mut Checkpoint<T>,
    batch: &[TrainingItem<T>],
    cfg: &TrainConfig,
    exec: &E,
) -> Result<StepStats> {
    if cfg.stage != state.stage {
        return Err(Error::contract(format!(
            "config stage {:?} does not match checkpoint stage {:?}",
            cfg.stage, state.stage
        )));
    }
    let k = state.step + 1;
    let (params, model) = (&state.params, &state.model);
    let results = exec.map(batch.len(), &|i| {
        let mut rng = item_noise_rng(state.seed, state.stage, k, i);
        let noise = ItemNoise::draw(&cfg.schedule, batch[i].frames.shape(), &mut rng)?;
        item_gradient(params, model, &batch[i], &noise)
    });
    let outcomes = results.into_iter().collect::<Result<Vec<_>>>()?;
    apply_outcomes(state, &outcomes, cfg)
}

pub fn train_step<T: Real>(
    state: &mut Checkpoint<T>,
    batch: &[TrainingItem<T>],
    cfg: &TrainConfig,
) -> Result<StepStats> {
    train_step_with(state, batch, cfg, &Sequential)
}

/// A batch with the bookkeeping needed for logs.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub items: Vec<TrainingItem<T>>,
    pub level: RateLevel,
    pub condition_fractions: Vec<f64>,
    /// Items whose shot-level condition dropping fired.
    pub shot_dropped: usize,
    /// Items cut to a shorter prefix because the scene was too short.
    pub recropped: usize,
}

/// Level shared by the whole batch of update `k`.
pub fn sample_level(cfg: &TrainConfig, seed: u64, k: u64) -> Result<RateLevel> {
    let levels = cfg.levels()?;
    let mut rng = rng::stream(seed, &[purpose::BATCH, cfg.stage.number() as u64, k]);
    Ok(levels[rng.random_range(0..levels.len())])
}

/// Stage-2 positions for every `r`-th frame and for a prefix, each added
/// with its configured probability.
fn structured_positions<R: Rng + ?Sized>(cfg: &TrainConfig, n: usize, rng: &mut R) -> Vec<usize> {
    let mut out = Vec::new();
    if rng.random::<f64>() < cfg.anchor_prob {
        let r = if rng.random::<bool>() { 2 } else { 4 };
        out.extend((0..n).filter(|j| (j + 1) % r == 0));
    }
    if rng.random::<f64>() < cfg.prefix_prob && n >= 2 {
        let k = rng.random_range(1..=n / 2);
        out.extend(0..k);
    }
    out
}

pub fn assemble_batch<T: Real>(
    scenes: &[SceneParams],
    cfg: &TrainConfig,
    seed: u64,
    k: u64,
) -> Result<Batch<T>> {
    if scenes.is_empty() {
        return Err(Error::contract("no training scenes"));
    }
    let level = sample_level(cfg, seed, k)?;
    let m = level.stride();
    let mut batch = Batch {
        items: Vec::with_capacity(cfg.batch_size),
        level,
        condition_fractions: Vec::with_capacity(cfg.batch_size),
        shot_dropped: 0,
        recropped: 0,
    };
    for i in 0..cfg.batch_size {
        let ids = [cfg.stage.number() as u64, k, i as u64];
        let mut rng = rng::stream(seed, &[purpose::BATCH, ids[0], ids[1], ids[2]]);
        let scene = &scenes[rng.random_range(0..scenes.len())];
        let mut n = cfg.window;
        if n * m > scene.duration_frames {
            n = scene.duration_frames / m;
            batch.recropped += 1;
            if n == 0 {
                return Err(Error::contract(format!(
                    "scene of {} frames is shorter than stride {m}",
                    scene.duration_frames
                )));
            }
        }
        let start = rng.random_range(0..=scene.duration_frames - n * m);
        let times: Vec<f64> = (0..n).map(|j| (start + j * m) as f64).collect();
        let frames: Tensor<T> = render_times(scene, &times)?.cast();

        let mut t_rng = rng::stream(seed, &[purpose::T_START, ids[0], ids[1], ids[2]]);
        let t_start = sample_t_start(cfg.t_max, &mut t_rng)?;
        let indices = assign_indices(n, level, t_start, cfg.t_max)?;

        let mut c_rng = rng::stream(seed, &[purpose::CONDITION, ids[0], ids[1], ids[2]]);
        let mut cond = sample_training_condition(&frames, &mut c_rng)?;
        for p in structured_positions(cfg, n, &mut c_rng) {
            cond.insert(p, frames.row(p).to_vec())?;
        }
        let layout = scene.layout_for(&times);
        if layout.shot_count() > 1 {
            let mut s_rng = rng::stream(seed, &[purpose::SHOT_DROP, ids[0], ids[1], ids[2]]);
            cond = drop_shot_conditions(&cond, &layout, &mut s_rng)?;
            batch.shot_dropped += 1;
        }
        batch.condition_fractions.push(cond.len() as f64 / n as f64);
        batch.items.push(TrainingItem {
            frames,
            cond,
            prompt: scene.prompt_at(times[0]),
            indices,
        });
    }
    Ok(batch)
}

/// What each update reports to the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub stage: Stage,
    pub stats: StepStats,
    pub level: RateLevel,
    pub condition_fractions: Vec<f64>,
    pub shot_dropped: usize,
    pub recropped: usize,
}

/// Runs updates until `cfg.steps` are done, calling `observe` after each.
pub fn run_stage<T: Real, E: Executor>(
    state: &mut Checkpoint<T>,
    scenes: &[SceneParams],
    cfg: &TrainConfig,
    exec: &E,
    observe: &mut dyn FnMut(&StepRecord, &Checkpoint<T>) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    state.validate()?;
    while state.step < cfg.steps {
        let k = state.step + 1;
        let batch = assemble_batch::<T>(scenes, cfg, state.seed, k)?;
        let stats = train_step_with(state, &batch.items, cfg, exec)?;
        let record = StepRecord {
            stage: cfg.stage,
            stats,
            level: batch.level,
            condition_fractions: batch.condition_fractions,
            shot_dropped: batch.shot_dropped,
            recropped: batch.recropped,
        };
        observe(&record, state)?;
    }
    Ok(())
}

/// Stage 1 on a fresh or partially trained stage-1 state.
pub fn run_stage1<T: Real, E: Executor>(
    state: &mut Checkpoint<T>,
    scenes: &[SceneParams],
    cfg: &TrainConfig,
    exec: &E,
    observe: &mut dyn FnMut(&StepRecord, &Checkpoint<T>) -> Result<()>,
) -> Result<()> {
    if state.stage != Stage::SingleRate || cfg.stage != Stage::SingleRate {
        return Err(Error::contract("stage 1 needs a stage-1 checkpoint and config"));
    }
    run_stage(state, scenes, cfg, exec, observe)
}

/// Stage 2, continuing a finished stage-1 state or resuming a stage-2 one.
pub fn run_stage2<T: Real, E: Executor>(
    state: &mut Checkpoint<T>,
    scenes: &[SceneParams],
    cfg: &TrainConfig,
    exec: &E,
    observe: &mut dyn FnMut(&StepRecord, &Checkpoint<T>) -> Result<()>,
) -> Result<()> {
    if cfg.stage != Stage::MultiRate {
        return Err(Error::contract("stage 2 needs a multi-rate config"));
    }
    if state.stage == Stage::SingleRate {
        state.begin_stage2()?;
    }
    run_stage(state, scenes, cfg, exec, observe)
}
