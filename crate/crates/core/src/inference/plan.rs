//! The multiway generation tree.
//!
//! Stage 0 is one root over the coarsest grid. Stage `s` cuts the full-rate
//! timeline `[0, N)` into `M_s` equal intervals; each node owns every
//! level-`s` grid position of its interval. Positions already on the
//! previous stage's grid are the node's anchors, the rest are new. Since
//! grids nest, the previous grid holds every coarser frame.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use super::config::ParallelConfig;
use crate::error::{Error, Result};
use crate::temporal::RateLevel;

/// True when 0-based full-rate position `p` is a level-`level` frame.
pub fn on_grid(p: usize, level: RateLevel) -> bool {
    (p + 1) % level.stride() == 0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub stage: usize,
    pub level: RateLevel,
    pub segment: usize,
    /// Full-rate interval `[a, b)`.
    pub interval: Range<usize>,
    /// Every grid position of the interval, ascending; the node's window.
    pub positions: Vec<usize>,
    pub anchors: Vec<usize>,
    pub new_positions: Vec<usize>,
    pub parents: Vec<usize>,
}

impl TreeNode {
    pub fn window_len(&self) -> usize {
        self.positions.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationTree {
    pub n_frames: usize,
    pub levels: Vec<RateLevel>,
    pub steps: Vec<usize>,
    pub nodes: Vec<TreeNode>,
    /// `(parent, child)` pairs.
    pub edges: Vec<(usize, usize)>,
}

impl GenerationTree {
    pub fn stage_count(&self) -> usize {
        self.levels.len()
    }

    pub fn stage_nodes(&self, stage: usize) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(move |n| n.stage == stage)
    }

    pub fn children(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.0 == id).map(|e| e.1)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Smallest `L` such that every multiple of `L` is a plannable length.
pub fn length_quantum(cfg: &ParallelConfig) -> usize {
    let strides = cfg.strides();
    let mut l = strides[0];
    for s in 1..strides.len() {
        let q = cfg.stage_segments[s] * strides[s - 1];
        l = l / gcd(l, q) * q;
    }
    l
}

pub fn plan_tree(cfg: &ParallelConfig, n_frames: usize) -> Result<GenerationTree> {
    cfg.validate()?;
    if cfg.stage_segments[0] != 1 {
        return Err(Error::Plan(format!(
            "the first stage must be a single root segment, got {}",
            cfg.stage_segments[0]
        )));
    }
    let q = length_quantum(cfg);
    if n_frames == 0 || n_frames % q != 0 {
        let below = (n_frames / q) * q;
        let mut valid: Vec<String> = Vec::new();
        if below > 0 {
            valid.push(format!("{below}"));
        }
        valid.push(format!("{}", below + q));
        valid.push(format!("{}", below + 2 * q));
        return Err(Error::Plan(format!(
            "{n_frames} frames cannot be planned for {cfg}: N must be a multiple of {q} (e.g. {})",
            valid.join(", ")
        )));
    }
    let levels = cfg.levels();
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut edges = Vec::new();
    let mut prev: Vec<usize> = Vec::new();
    for (s, &level) in levels.iter().enumerate() {
        let m_s = cfg.stage_segments[s];
        let len = n_frames / m_s;
        let mut current = Vec::with_capacity(m_s);
        for seg in 0..m_s {
            let interval = seg * len..(seg + 1) * len;
            let positions: Vec<usize> = interval.clone().filter(|&p| on_grid(p, level)).collect();
            let (anchors, new_positions) = if s == 0 {
                (Vec::new(), positions.clone())
            } else {
                positions.iter().partition(|&&p| on_grid(p, levels[s - 1]))
            };
            let parents: Vec<usize> = prev
                .iter()
                .copied()
                .filter(|&pid| {
                    let pi = &nodes[pid].interval;
                    pi.start < interval.end && interval.start < pi.end
                })
                .collect();
            let id = nodes.len();
            for &p in &parents {
                edges.push((p, id));
            }
            nodes.push(TreeNode {
                id,
                stage: s,
                level,
                segment: seg,
                interval,
                positions,
                anchors,
                new_positions,
                parents,
            });
            current.push(id);
        }
        prev = current;
    }
    Ok(GenerationTree {
        n_frames,
        levels,
        steps: cfg.denoise_steps.clone(),
        nodes,
        edges,
    })
}
