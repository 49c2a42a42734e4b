//! Frame-rate levels, temporal index plans and rotary position embedding.
//!
//! Level `i` keeps every `2^i`-th frame of the full-rate sequence. Its frames
//! carry temporal indices spaced `2^i` apart, so a coarse sequence and the
//! full-rate sequence share one continuous timeline. Indices are real-valued
//! so a random continuous start offset can be applied during training.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// A frame-rate level: stride `2^level` relative to the full rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RateLevel(u32);

impl RateLevel {
    pub const FULL: RateLevel = RateLevel(0);

    pub fn new(level: u32) -> Result<Self> {
        if level > 30 {
            return Err(Error::config(format!("rate level {level} out of range")));
        }
        Ok(Self(level))
    }

    pub fn level(self) -> u32 {
        self.0
    }

    pub fn stride(self) -> usize {
        1usize << self.0
    }

    pub fn fps(self, base_fps: f64) -> f64 {
        base_fps / self.stride() as f64
    }

    /// Level whose rate is `fps`, given the full rate `base_fps`.
    pub fn from_fps(fps: f64, base_fps: f64) -> Result<Self> {
        let ratio = base_fps / fps;
        let r = ratio.round();
        if !(r >= 1.0) || (ratio - r).abs() > 1e-9 || !(r as u64).is_power_of_two() {
            return Err(Error::config(format!(
                "{fps} fps is not a power-of-two division of {base_fps} fps"
            )));
        }
        Self::new((r as u64).trailing_zeros())
    }
}

/// 1-based frame positions `(m, 2m, …, jm)` kept at `level`, with `m = 2^level`
/// and `j = T/m`.
pub fn subsample_indices(total: usize, level: RateLevel) -> Result<Vec<usize>> {
    let m = level.stride();
    if total == 0 || total % m != 0 {
        return Err(Error::contract(format!(
            "sequence length {total} is not divisible by stride {m}"
        )));
    }
    Ok((1..=total / m).map(|j| j * m).collect())
}

/// Temporal indices for one sequence: `t_j = t_start + j · 2^level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalIndexPlan {
    pub t_start: f64,
    pub level: RateLevel,
    pub t_max: f64,
    pub indices: Vec<f64>,
}

impl TemporalIndexPlan {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Index plan over explicit positions, for windows whose frames do not
    /// start on `t_start` (e.g. inference segments).
    pub fn from_positions(level: RateLevel, positions: Vec<f64>) -> Self {
        let t_start = positions.first().copied().unwrap_or(0.0);
        Self {
            t_start,
            level,
            t_max: t_start.max(0.0),
            indices: positions,
        }
    }

    /// True when every gap equals the level stride exactly.
    pub fn is_uniform(&self) -> bool {
        let s = self.level.stride() as f64;
        self.indices.windows(2).all(|w| w[1] - w[0] == s)
    }

    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            t_start: self.t_start + offset,
            level: self.level,
            t_max: self.t_max + offset.max(0.0),
            indices: self.indices.iter().map(|&t| t + offset).collect(),
        }
    }
}

pub fn assign_indices(
    n_frames: usize,
    level: RateLevel,
    t_start: f64,
    t_max: f64,
) -> Result<TemporalIndexPlan> {
    if n_frames == 0 {
        return Err(Error::contract("index plan needs at least one frame"));
    }
    if !(0.0..=t_max).contains(&t_start) {
        return Err(Error::contract(format!(
            "t_start {t_start} outside [0, {t_max}]"
        )));
    }
    let stride = level.stride();
    let indices = (0..n_frames)
        .map(|j| t_start + (j * stride) as f64)
        .collect();
    Ok(TemporalIndexPlan {
        t_start,
        level,
        t_max,
        indices,
    })
}

/// `4 ×` the longest index span seen in training.
pub fn default_t_max(longest_span: usize) -> f64 {
    4.0 * longest_span as f64
}

/// Uniform draw from `[0, t_max]`.
pub fn sample_t_start<R: Rng + ?Sized>(t_max: f64, rng: &mut R) -> Result<f64> {
    if !(t_max >= 0.0) || !t_max.is_finite() {
        return Err(Error::contract(format!("T_max must be >= 0, got {t_max}")));
    }
    if t_max == 0.0 {
        return Ok(0.0);
    }
    Ok(rng.random::<f64>() * t_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RopeParams {
    pub head_dim: usize,
    pub theta_base: f64,
}

impl RopeParams {
    pub const DEFAULT_THETA: f64 = 10_000.0;

    pub fn new(head_dim: usize) -> Result<Self> {
        let p = Self {
            head_dim,
            theta_base: Self::DEFAULT_THETA,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.head_dim == 0 || self.head_dim % 2 != 0 {
            return Err(Error::config(format!(
                "rotary head_dim must be even and positive, got {}",
                self.head_dim
            )));
        }
        if !(self.theta_base > 0.0) {
            return Err(Error::config("rotary theta_base must be positive"));
        }
        Ok(())
    }

    /// Angular frequency of coordinate pair `k`: `θ_base^(−2k/head_dim)`.
    pub fn frequency(&self, k: usize) -> f64 {
        Float::powf(self.theta_base, -2.0 * k as f64 / self.head_dim as f64)
    }
}

/// Rotates each pair `(v_{2k}, v_{2k+1})` by `index · θ_k`.
pub fn rope_apply<T: Real>(v: &Tensor<T>, index: f64, params: &RopeParams) -> Result<Tensor<T>> {
    params.validate()?;
    if v.numel() != params.head_dim {
        return Err(Error::Dimension {
            op: "rope_apply",
            lhs: v.shape().to_vec(),
            rhs: alloc::vec![params.head_dim],
        });
    }
    let mut out = v.clone();
    let d = out.data_mut();
    for k in 0..params.head_dim / 2 {
        let angle = index * params.frequency(k);
        let (c, s) = (T::from_f64(Float::cos(angle)), T::from_f64(Float::sin(angle)));
        let (x0, x1) = (d[2 * k], d[2 * k + 1]);
        d[2 * k] = x0 * c - x1 * s;
        d[2 * k + 1] = x0 * s + x1 * c;
    }
    Ok(out)
}
