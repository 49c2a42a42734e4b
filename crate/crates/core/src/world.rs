//! Continuous-time synthetic scenes.
//!
//! A frame is a ring of `D` cells holding a smooth periodic bump whose
//! center follows `c(τ) = c0 + v·τ + A·sin(ωτ + φ)`, plus a faint travelling
//! harmonic. `τ` is measured in full-rate frames, so the ground truth is
//! exact at every frame rate and subsampling is bitwise.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::denoiser::PromptVector;
use crate::error::{Error, Result};
use crate::inference::PromptTrack;
use crate::multimask::ShotLayout;
use crate::rng::{self, purpose};
use crate::temporal::{RateLevel, TemporalIndexPlan};
use crate::tensor::Tensor;

pub const FRAME_DIM: usize = 16;
pub const BASE_FPS: f64 = 24.0;
pub const DEFAULT_DURATION: usize = 128;
pub const PROMPT_DIM: usize = 14;

/// Dynamics of one shot. Ranges are those drawn by [`ShotParams::sample`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotParams {
    /// Bump height, `[0.8, 1.2]`.
    pub amplitude: f64,
    /// Bump concentration, `[1.5, 3]`.
    pub kappa: f64,
    /// Center at `τ = 0`, in cells.
    pub c0: f64,
    /// Drift in cells per frame, `[-0.15, 0.15]`.
    pub velocity: f64,
    /// Oscillation amplitude in cells, `[0, 1.5]`.
    pub osc_amp: f64,
    /// Oscillation angular rate per frame, `[2π/48, 2π/16]`.
    pub osc_omega: f64,
    pub osc_phase: f64,
    /// Background harmonic amplitude, `[0, 0.1]`.
    pub bg_amp: f64,
    /// Background spatial frequency, one of 1, 2, 3.
    pub bg_freq: f64,
    /// Background angular rate per frame, `[-0.1, 0.1]`.
    pub bg_omega: f64,
}

impl ShotParams {
    pub const COUNT: usize = 10;

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            amplitude: rng.random_range(0.8..=1.2),
            kappa: rng.random_range(1.5..=3.0),
            c0: rng.random_range(0.0..FRAME_DIM as f64),
            velocity: rng.random_range(-0.15..=0.15),
            osc_amp: rng.random_range(0.0..=1.5),
            osc_omega: rng.random_range(2.0 * PI / 48.0..=2.0 * PI / 16.0),
            osc_phase: rng.random_range(0.0..2.0 * PI),
            bg_amp: rng.random_range(0.0..=0.1),
            bg_freq: rng.random_range(1..=3) as f64,
            bg_omega: rng.random_range(-0.1..=0.1),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        alloc::vec![
            self.amplitude,
            self.kappa,
            self.c0,
            self.velocity,
            self.osc_amp,
            self.osc_omega,
            self.osc_phase,
            self.bg_amp,
            self.bg_freq,
            self.bg_omega,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != Self::COUNT || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::contract(format!(
                "shot parameter vector needs {} finite values",
                Self::COUNT
            )));
        }
        Ok(Self {
            amplitude: v[0],
            kappa: v[1],
            c0: v[2],
            velocity: v[3],
            osc_amp: v[4],
            osc_omega: v[5],
            osc_phase: v[6],
            bg_amp: v[7],
            bg_freq: v[8],
            bg_omega: v[9],
        })
    }

    pub fn center(&self, tau: f64) -> f64 {
        self.c0 + self.velocity * tau + self.osc_amp * Float::sin(self.osc_omega * tau + self.osc_phase)
    }

    pub fn value(&self, cell: usize, tau: f64) -> f64 {
        let d = FRAME_DIM as f64;
        let k = cell as f64;
        let c = self.center(tau);
        let bump = self.amplitude * Float::exp(self.kappa * (Float::cos(2.0 * PI * (k - c) / d) - 1.0));
        let bg = self.bg_amp * Float::sin(2.0 * PI * self.bg_freq * k / d + self.bg_omega * tau);
        bump + bg
    }

    pub fn prompt(&self) -> PromptVector {
        self.prompt_at(0.0)
    }

    /// Parameters scaled to roughly `[-1, 1]`, with the drifting center,
    /// oscillation phase and background phase taken at time `tau` as
    /// points on the unit circle. The denoiser only sees relative
    /// positions, so the clip start has to come in through the prompt.
    pub fn prompt_at(&self, tau: f64) -> PromptVector {
        let d = FRAME_DIM as f64;
        let drift = 2.0 * PI * (self.c0 + self.velocity * tau) / d;
        let osc = self.osc_omega * tau + self.osc_phase;
        let bg = self.bg_omega * tau;
        let scale = |x: f64, lo: f64, hi: f64| 2.0 * (x - lo) / (hi - lo) - 1.0;
        PromptVector {
            values: alloc::vec![
                scale(self.amplitude, 0.8, 1.2),
                scale(self.kappa, 1.5, 3.0),
                scale(self.velocity, -0.15, 0.15),
                scale(self.osc_amp, 0.0, 1.5),
                scale(self.osc_omega, 2.0 * PI / 48.0, 2.0 * PI / 16.0),
                scale(self.bg_amp, 0.0, 0.1),
                scale(self.bg_freq, 1.0, 3.0),
                scale(self.bg_omega, -0.1, 0.1),
                Float::cos(drift),
                Float::sin(drift),
                Float::cos(osc),
                Float::sin(osc),
                Float::cos(bg),
                Float::sin(bg),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub shots: Vec<ShotParams>,
    /// Shot starts in full-rate frames.
    pub layout: ShotLayout,
    pub duration_frames: usize,
}

impl SceneParams {
    pub fn single(shot: ShotParams, duration_frames: usize) -> Self {
        Self {
            shots: alloc::vec![shot],
            layout: ShotLayout::single(),
            duration_frames,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate(self.duration_frames)?;
        if self.shots.len() != self.layout.shot_count() || self.duration_frames == 0 {
            return Err(Error::contract(format!(
                "scene has {} shot parameter sets for {} shots",
                self.shots.len(),
                self.layout.shot_count()
            )));
        }
        Ok(())
    }

    /// Draws a scene; multi-shot scenes get one or two boundaries at least
    /// 16 frames from either end and from each other.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, multi_shot: bool, duration_frames: usize) -> Self {
        let mut boundaries = Vec::new();
        if multi_shot && duration_frames >= 32 {
            let count = if duration_frames >= 64 { rng.random_range(1..=2) } else { 1 };
            while boundaries.len() < count {
                let b = rng.random_range(16..=duration_frames - 16);
                if boundaries.iter().all(|&x: &usize| x.abs_diff(b) >= 16) {
                    boundaries.push(b);
                }
            }
            boundaries.sort_unstable();
        }
        let shots = (0..=boundaries.len()).map(|_| ShotParams::sample(rng)).collect();
        Self {
            shots,
            layout: ShotLayout { boundaries },
            duration_frames,
        }
    }

    pub fn is_multi_shot(&self) -> bool {
        self.layout.shot_count() > 1
    }

    pub fn shot_at(&self, tau: f64) -> &ShotParams {
        let s = self
            .layout
            .boundaries
            .iter()
            .filter(|&&b| b as f64 <= tau)
            .count();
        &self.shots[s]
    }

    pub fn frame(&self, tau: f64) -> Vec<f64> {
        let shot = self.shot_at(tau);
        (0..FRAME_DIM).map(|k| shot.value(k, tau)).collect()
    }

    /// The first shot's prompt.
    pub fn prompt(&self) -> PromptVector {
        self.shots[0].prompt()
    }

    /// Prompt of the shot playing at `tau`, in that shot's state at `tau`.
    pub fn prompt_at(&self, tau: f64) -> PromptVector {
        self.shot_at(tau).prompt_at(tau)
    }

    /// Prompts for `n` full-rate frames starting at scene time `t0`.
    pub fn prompt_track(&self, t0: f64, n: usize) -> PromptTrack {
        PromptTrack::PerFrame((0..n).map(|p| self.prompt_at(t0 + p as f64)).collect())
    }

    /// Shot layout of the frames at the given full-rate times.
    pub fn layout_for(&self, times: &[f64]) -> ShotLayout {
        let mut boundaries = Vec::new();
        for j in 1..times.len() {
            let a = self.shot_index(times[j - 1]);
            if self.shot_index(times[j]) != a {
                boundaries.push(j);
            }
        }
        ShotLayout { boundaries }
    }

    fn shot_index(&self, tau: f64) -> usize {
        self.layout
            .boundaries
            .iter()
            .filter(|&&b| b as f64 <= tau)
            .count()
    }
}

/// Frames with their rate level and temporal indices.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    pub frames: Tensor<f32>,
    pub level: RateLevel,
    pub indices: TemporalIndexPlan,
    pub scene: Option<SceneParams>,
}

impl VideoSequence {
    pub fn new(frames: Tensor<f32>, level: RateLevel, indices: TemporalIndexPlan) -> Result<Self> {
        if frames.shape().len() != 2 || frames.rows() != indices.len() {
            return Err(Error::contract(format!(
                "{} frames with {} indices",
                frames.rows(),
                indices.len()
            )));
        }
        Ok(Self {
            frames,
            level,
            indices,
            scene: None,
        })
    }

    /// Level-0 sequence with indices `offset, offset + 1, …`.
    pub fn full_rate(frames: Tensor<f32>, offset: f64) -> Result<Self> {
        let n = frames.rows();
        let plan = TemporalIndexPlan {
            t_start: offset,
            level: RateLevel::FULL,
            t_max: offset.max(0.0),
            indices: (0..n).map(|j| offset + j as f64).collect(),
        };
        Self::new(frames, RateLevel::FULL, plan)
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }
}

/// Full-rate positions `(j + 1)·2^level − 1` of a level's frames.
pub fn level_positions(n_full: usize, level: RateLevel) -> Vec<usize> {
    let m = level.stride();
    (1..=n_full / m).map(|j| j * m - 1).collect()
}

/// Renders frames at the given full-rate times, computed in `f64` and
/// stored as `f32`.
pub fn render_times(scene: &SceneParams, times: &[f64]) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(times.len() * FRAME_DIM);
    for &tau in times {
        data.extend(scene.frame(tau).into_iter().map(|x| x as f32));
    }
    Tensor::matrix(times.len(), FRAME_DIM, data)
}

/// Every level frame over the scene duration, starting at time `t_start`.
/// Frame `j` sits at full-rate position `(j + 1)·2^level − 1` and time
/// `t_start` plus that position; its temporal index is that time.
pub fn render_scene(scene: &SceneParams, level: RateLevel, t_start: f64) -> Result<VideoSequence> {
    scene.validate()?;
    if scene.duration_frames % level.stride() != 0 {
        return Err(Error::contract(format!(
            "duration {} not divisible by stride {}",
            scene.duration_frames,
            level.stride()
        )));
    }
    render_level(scene, level, t_start, scene.duration_frames)
}

/// Like [`render_scene`] over `n_full` full-rate frames instead of the
/// scene duration.
pub fn render_level(
    scene: &SceneParams,
    level: RateLevel,
    t_start: f64,
    n_full: usize,
) -> Result<VideoSequence> {
    if n_full == 0 || n_full % level.stride() != 0 {
        return Err(Error::contract(format!(
            "{n_full} frames not divisible by stride {}",
            level.stride()
        )));
    }
    let times: Vec<f64> = level_positions(n_full, level)
        .into_iter()
        .map(|p| t_start + p as f64)
        .collect();
    let frames = render_times(scene, &times)?;
    let plan = TemporalIndexPlan {
        t_start: times[0],
        level,
        t_max: times[0].max(0.0),
        indices: times,
    };
    Ok(VideoSequence {
        frames,
        level,
        indices: plan,
        scene: Some(scene.clone()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub seed: u64,
    pub multi_shot_fraction: f64,
    pub scenes: Vec<SceneParams>,
}

/// Scene `k` is drawn from its own stream, so `(seed, k)` alone fixes it.
pub fn make_dataset(n_scenes: usize, multi_shot_fraction: f64, seed: u64) -> Result<Dataset> {
    make_dataset_with(n_scenes, multi_shot_fraction, seed, DEFAULT_DURATION)
}

pub fn make_dataset_with(
    n_scenes: usize,
    multi_shot_fraction: f64,
    seed: u64,
    duration_frames: usize,
) -> Result<Dataset> {
    if n_scenes == 0 {
        return Err(Error::contract("dataset needs at least one scene"));
    }
    if !(0.0..=1.0).contains(&multi_shot_fraction) {
        return Err(Error::contract(format!(
            "multi-shot fraction {multi_shot_fraction} outside [0, 1]"
        )));
    }
    let scenes = (0..n_scenes)
        .map(|k| {
            let mut rng = rng::stream(seed, &[purpose::DATASET, k as u64]);
            let multi = rng.random::<f64>() < multi_shot_fraction;
            SceneParams::sample(&mut rng, multi, duration_frames)
        })
        .collect();
    Ok(Dataset {
        seed,
        multi_shot_fraction,
        scenes,
    })
}

/// Single-shot scenes disjoint from any training stream.
pub fn held_out_scenes(n: usize, seed: u64, duration_frames: usize) -> Vec<SceneParams> {
    (0..n)
        .map(|k| {
            let mut rng = rng::stream(seed, &[purpose::HELD_OUT, k as u64]);
            SceneParams::single(ShotParams::sample(&mut rng), duration_frames)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_frame_mse: Vec<f64>,
    pub mean_mse: f64,
    /// Variance of the ground-truth values over all frames and cells.
    pub signal_variance: f64,
    pub drift_slope: f64,
    pub anchor_violations: usize,
}

/// Least-squares slope of `ys` against `0, 1, 2, …`.
pub fn least_squares_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Positions of `coarse` (a level sequence over the same full-rate span as
/// `fine`) whose frames differ bitwise from `fine` at the same times.
pub fn anchor_violations(fine: &VideoSequence, coarse: &VideoSequence) -> Result<usize> {
    let (lf, lc) = (fine.level.level(), coarse.level.level());
    if lc < lf {
        return Err(Error::contract("coarse sequence has a finer level"));
    }
    let ratio = 1usize << (lc - lf);
    let mut bad = 0;
    for j in 0..coarse.len() {
        let p = (j + 1) * ratio - 1;
        if p >= fine.len() || fine.frames.row(p) != coarse.frames.row(j) {
            bad += 1;
        }
    }
    Ok(bad)
}

/// Compares a level-0 sequence against the scene's ground truth at the
/// same times. `stages` are coarser outputs checked for anchor agreement.
pub fn evaluate(
    generated: &VideoSequence,
    scene: &SceneParams,
    stages: &[VideoSequence],
) -> Result<EvalReport> {
    if generated.level != RateLevel::FULL {
        return Err(Error::contract(format!(
            "evaluation needs a level-0 sequence, got level {}",
            generated.level.level()
        )));
    }
    let truth = render_times(scene, &generated.indices.indices)?;
    let d = generated.frames.last_dim();
    if d != FRAME_DIM {
        return Err(Error::Dimension {
            op: "evaluate",
            lhs: generated.frames.shape().to_vec(),
            rhs: alloc::vec![generated.len(), FRAME_DIM],
        });
    }
    let per_frame_mse: Vec<f64> = (0..generated.len())
        .map(|r| {
            generated
                .frames
                .row(r)
                .iter()
                .zip(truth.row(r))
                .map(|(&a, &b)| {
                    let e = a as f64 - b as f64;
                    e * e
                })
                .sum::<f64>()
                / d as f64
        })
        .collect();
    let mean_mse = per_frame_mse.iter().sum::<f64>() / per_frame_mse.len() as f64;
    let mut anchor = 0;
    for s in stages {
        anchor += anchor_violations(generated, s)?;
    }
    Ok(EvalReport {
        drift_slope: least_squares_slope(&per_frame_mse),
        mean_mse,
        signal_variance: variance(truth.data()),
        per_frame_mse,
        anchor_violations: anchor,
    })
}

pub fn variance(values: &[f32]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().map(|&x| x as f64).sum::<f64>() / n;
    values
        .iter()
        .map(|&x| {
            let e = x as f64 - mean;
            e * e
        })
        .sum::<f64>()
        / n
}
