//! Cost accounting for generation trees.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::ParallelConfig;
use super::plan::plan_tree;
use crate::denoiser::{flops_forward, ModelConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFlops {
    pub stage: usize,
    pub level: u32,
    pub nodes: usize,
    pub frames_per_node: usize,
    pub steps: usize,
    /// Multiply-adds of the stage: nodes · steps · forward(frames_per_node).
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopReport {
    pub config: String,
    pub n_frames: usize,
    pub stages: Vec<StageFlops>,
    pub total: u64,
    /// Uniform-tree bound, present when the config has a uniform `W`.
    pub analytic_bound: Option<f64>,
}

pub fn flop_count(model: &ModelConfig, cfg: &ParallelConfig, n_frames: usize) -> Result<FlopReport> {
    let tree = plan_tree(cfg, n_frames)?;
    let mut stages = Vec::with_capacity(tree.stage_count());
    for s in 0..tree.stage_count() {
        let nodes: Vec<_> = tree.stage_nodes(s).collect();
        let frames = nodes[0].window_len();
        if nodes.iter().any(|n| n.window_len() != frames) {
            return Err(Error::Plan(format!("stage {s} has unequal segments")));
        }
        let per_call = flops_forward(model, frames);
        stages.push(StageFlops {
            stage: s,
            level: tree.levels[s].level(),
            nodes: nodes.len(),
            frames_per_node: frames,
            steps: tree.steps[s],
            flops: nodes.len() as u64 * tree.steps[s] as u64 * per_call,
        });
    }
    let total = stages.iter().map(|s| s.flops).sum();
    let analytic = cfg
        .w
        .and_then(|w| analytic_bound(n_frames as u64, cfg.stage_count() as u32, w as u64, false).ok())
        .map(|b| b.value());
    Ok(FlopReport {
        config: format!("{cfg}"),
        n_frames,
        stages,
        total,
        analytic_bound: analytic,
    })
}

/// An exact non-negative rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u128,
    pub den: u128,
}

impl Ratio {
    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Squared-frame cost of a uniform `W`-way tree of `K` stages over `N`
/// frames:
///
/// ```text
/// N²/4^K · Σ_{i<K} (4/W)^i        (segments sequential)
/// N²/4^K · Σ_{i<K} (4/W²)^i       (segments in parallel)
/// ```
///
/// evaluated exactly as `N² · Σ 4^i·b^(K−1−i) / (4^K · b^(K−1))` with
/// `b = W` or `W²`.
pub fn analytic_bound(n: u64, k: u32, w: u64, intra_parallel: bool) -> Result<Ratio> {
    if n == 0 || k == 0 || w == 0 {
        return Err(Error::config("N, K and W must be positive"));
    }
    let overflow = || Error::config(format!("bound for N={n}, K={k}, W={w} overflows 128 bits"));
    let b: u128 = if intra_parallel { (w as u128) * (w as u128) } else { w as u128 };
    let mut sum: u128 = 0;
    for i in 0..k {
        let term = 4u128
            .checked_pow(i)
            .and_then(|a| b.checked_pow(k - 1 - i).and_then(|c| a.checked_mul(c)))
            .ok_or_else(overflow)?;
        sum = sum.checked_add(term).ok_or_else(overflow)?;
    }
    let n2 = (n as u128).checked_mul(n as u128).ok_or_else(overflow)?;
    let den = 4u128
        .checked_pow(k)
        .and_then(|a| b.checked_pow(k - 1).and_then(|c| a.checked_mul(c)))
        .ok_or_else(overflow)?;
    // reduce before multiplying by N² to stay in range
    let g = gcd(sum, den);
    let (sum, den) = (sum / g, den / g);
    let g = gcd(n2, den);
    let num = (n2 / g).checked_mul(sum).ok_or_else(overflow)?;
    Ok(Ratio { num, den: den / g })
}
