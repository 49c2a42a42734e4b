//! Flow ODE sampling and hierarchical generation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use super::config::ParallelConfig;
use super::plan::{plan_tree, GenerationTree, TreeNode};
use crate::denoiser::{forward, ModelConfig, ModelParams, PromptVector};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::multimask::{build_conditioned_input, overwrite_anchors, MultiMaskCondition};
use crate::real::Real;
use crate::rng::{self, purpose};
use crate::temporal::{RateLevel, TemporalIndexPlan};
use crate::tensor::Tensor;
use crate::trainer::NoiseSchedule;

/// Time grid `shift(1 − k/steps)` for `k = 0..=steps`, from 1 down to 0.
pub fn time_grid(schedule: &NoiseSchedule, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|k| schedule.shift(1.0 - k as f64 / steps as f64))
        .collect()
}

/// Explicit Euler from `z` at `grid[0]` to `grid[last]`:
/// `z ← z + (t_{k+1} − t_k)·v(z, t_k)`.
pub fn ode_integrate<T: Real>(
    mut z: Tensor<T>,
    grid: &[f64],
    mut velocity: impl FnMut(&Tensor<T>, f64) -> Result<Tensor<T>>,
) -> Result<Tensor<T>> {
    let steps = grid.len().saturating_sub(1);
    for k in 0..steps {
        let v = velocity(&z, grid[k])?;
        if v.shape() != z.shape() {
            return Err(Error::Dimension {
                op: "ode_integrate",
                lhs: z.shape().to_vec(),
                rhs: v.shape().to_vec(),
            });
        }
        let dt = T::from_f64(grid[k + 1] - grid[k]);
        for (x, &d) in z.data_mut().iter_mut().zip(v.data()) {
            *x += dt * d;
        }
        if !z.all_finite() {
            return Err(Error::Sampling { step: k, steps });
        }
    }
    Ok(z)
}

pub fn gaussian<T: Real>(rows: usize, cols: usize, seed: u64) -> Result<Tensor<T>> {
    let mut rng = rng::stream(seed, &[purpose::NODE_NOISE]);
    let data = (0..rows * cols)
        .map(|_| T::from_f64(StandardNormal.sample(&mut rng)))
        .collect();
    Tensor::matrix(rows, cols, data)
}

/// Integrates the learned field from Gaussian noise at `t = 1` to `t = 0`.
///
/// At conditioned positions the state is held on the straight path
/// `(1 − t)·c + t·z1` that training presents there, and the clean
/// conditions are written back at the end.
#[allow(clippy::too_many_arguments)]
pub fn ode_sample<T: Real>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    schedule: &NoiseSchedule,
    cond: &MultiMaskCondition<T>,
    prompt: &PromptVector,
    indices: &TemporalIndexPlan,
    steps: usize,
    seed: u64,
) -> Result<Tensor<T>> {
    if steps == 0 {
        return Err(Error::contract("ode_sample needs at least one step"));
    }
    let z1 = gaussian::<T>(cond.length(), cfg.frame_dim, seed)?;
    let grid = time_grid(schedule, steps);
    let pin = |z: &mut Tensor<T>, t: f64| {
        let (a, b) = (T::from_f64(1.0 - t), T::from_f64(t));
        for (&p, c) in cond.entries() {
            let noise = z1.row(p);
            for ((x, &cv), &n) in z.row_mut(p).iter_mut().zip(c).zip(noise) {
                *x = a * cv + b * n;
            }
        }
    };
    let z = ode_integrate(z1.clone(), &grid, |z, t| {
        let mut state = z.clone();
        pin(&mut state, t);
        let channels = build_conditioned_input(&state, cond)?;
        forward(params, cfg, &channels, t, prompt, indices)
    })?;
    overwrite_anchors(&z, cond)
}

/// Noise seed of a tree node.
pub fn node_seed(seed: u64, level: RateLevel, segment: usize) -> u64 {
    rng::derive_seed(seed, &[purpose::NODE_NOISE, level.level() as u64, segment as u64])
}

/// One stage's level sequence after its anchors were enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutput<T> {
    pub level: RateLevel,
    pub positions: Vec<usize>,
    pub frames: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation<T> {
    pub frames: Tensor<T>,
    pub stages: Vec<StageOutput<T>>,
    pub tree: GenerationTree,
}

/// Prompt of each node, looked up at the node's first full-rate position.
#[derive(Debug, Clone, PartialEq)]
pub enum PromptTrack {
    Fixed(PromptVector),
    /// One prompt per full-rate position of the generation.
    PerFrame(Vec<PromptVector>),
}

impl PromptTrack {
    pub fn at(&self, position: usize) -> Result<&PromptVector> {
        match self {
            PromptTrack::Fixed(p) => Ok(p),
            PromptTrack::PerFrame(v) => v
                .get(position)
                .ok_or_else(|| Error::contract(format!("no prompt for position {position} of {}", v.len()))),
        }
    }
}

/// Inputs shared by every node of a generation.
pub struct GenerationSpec<'a, T> {
    pub params: &'a ModelParams<T>,
    pub model: &'a ModelConfig,
    pub parallel: &'a ParallelConfig,
    pub schedule: &'a NoiseSchedule,
    pub prompt: &'a PromptTrack,
}

fn node_condition<T: Real>(
    node: &TreeNode,
    canvas: &BTreeMap<usize, Vec<T>>,
    initial: &MultiMaskCondition<T>,
    frame_dim: usize,
) -> Result<MultiMaskCondition<T>> {
    let mut cond = MultiMaskCondition::empty(node.positions.len(), frame_dim);
    for (j, p) in node.positions.iter().enumerate() {
        if let Some(f) = initial.get(*p) {
            cond.insert(j, f.to_vec())?;
        } else if node.anchors.binary_search(p).is_ok() {
            let f = canvas
                .get(p)
                .ok_or_else(|| Error::contract(format!("anchor {p} missing before stage {}", node.stage)))?;
            cond.insert(j, f.clone())?;
        }
    }
    Ok(cond)
}

/// Samples one tree node. `canvas` must hold every anchor of the node,
/// which its parents provide.
pub fn sample_node<T: Real>(
    spec: &GenerationSpec<'_, T>,
    node: &TreeNode,
    steps: usize,
    canvas: &BTreeMap<usize, Vec<T>>,
    initial_cond: &MultiMaskCondition<T>,
    seed: u64,
) -> Result<Tensor<T>> {
    if node.window_len() > spec.model.max_t {
        return Err(Error::Plan(format!(
            "segment of {} frames exceeds the model's max_t {}",
            node.window_len(),
            spec.model.max_t
        )));
    }
    let cond = node_condition(node, canvas, initial_cond, spec.model.frame_dim)?;
    let indices = TemporalIndexPlan::from_positions(
        node.level,
        node.positions.iter().map(|&p| p as f64).collect(),
    );
    ode_sample(
        spec.params,
        spec.model,
        spec.schedule,
        &cond,
        spec.prompt.at(node.positions[0])?,
        &indices,
        steps,
        node_seed(seed, node.level, node.segment),
    )
}

/// Plans the tree and checks the initial condition against it.
pub fn plan_generation<T: Real>(
    spec: &GenerationSpec<'_, T>,
    initial_cond: &MultiMaskCondition<T>,
    n_frames: usize,
) -> Result<GenerationTree> {
    let tree = plan_tree(spec.parallel, n_frames)?;
    let d = spec.model.frame_dim;
    if initial_cond.length() != n_frames || initial_cond.frame_dim() != d {
        return Err(Error::contract(format!(
            "initial condition covers {}×{}, generation is {n_frames}×{d}",
            initial_cond.length(),
            initial_cond.frame_dim()
        )));
    }
    Ok(tree)
}

/// Copies a node's output rows into the canvas at its positions.
pub fn merge_node<T: Real>(canvas: &mut BTreeMap<usize, Vec<T>>, node: &TreeNode, out: &Tensor<T>) {
    for (j, &p) in node.positions.iter().enumerate() {
        canvas.insert(p, out.row(j).to_vec());
    }
}

/// Reads each stage's level sequence off a finished canvas.
pub fn collect_generation<T: Real>(tree: GenerationTree, canvas: &BTreeMap<usize, Vec<T>>) -> Result<Generation<T>> {
    let mut stages = Vec::with_capacity(tree.stage_count());
    for &level in &tree.levels {
        let positions: Vec<usize> = (0..tree.n_frames).filter(|&p| super::plan::on_grid(p, level)).collect();
        let rows = positions
            .iter()
            .map(|p| {
                canvas
                    .get(p)
                    .map(Vec::as_slice)
                    .ok_or_else(|| Error::contract(format!("position {p} was never generated")))
            })
            .collect::<Result<Vec<&[T]>>>()?;
        stages.push(StageOutput {
            level,
            frames: Tensor::from_rows(&rows)?,
            positions,
        });
    }
    let frames = stages.last().expect("at least one stage").frames.clone();
    Ok(Generation {
        frames,
        stages,
        tree,
    })
}

/// Runs the stages coarse to fine. Nodes of one stage only read frames of
/// earlier stages, so `exec` may run them in any order or concurrently;
/// results are merged in node order after the stage completes.
pub fn generate<T: Real, E: Executor>(
    spec: &GenerationSpec<'_, T>,
    initial_cond: &MultiMaskCondition<T>,
    n_frames: usize,
    seed: u64,
    exec: &E,
) -> Result<Generation<T>> {
    let tree = plan_generation(spec, initial_cond, n_frames)?;
    let mut canvas: BTreeMap<usize, Vec<T>> = BTreeMap::new();
    for s in 0..tree.stage_count() {
        let nodes: Vec<&TreeNode> = tree.stage_nodes(s).collect();
        let canvas_ref = &canvas;
        let results = exec.map(nodes.len(), &|i| {
            sample_node(spec, nodes[i], tree.steps[s], canvas_ref, initial_cond, seed)
        });
        for (node, out) in nodes.iter().zip(results) {
            merge_node(&mut canvas, node, &out?);
        }
    }
    collect_generation(tree, &canvas)
}

/// Extends `previous` (full rate) by `n_new − overlap` frames. The new
/// window starts with the last `overlap` frames of `previous` as
/// conditions, which each stage sees on its own grid.
pub fn continue_video<T: Real, E: Executor>(
    spec: &GenerationSpec<'_, T>,
    previous: &Tensor<T>,
    overlap: usize,
    n_new: usize,
    seed: u64,
    exec: &E,
) -> Result<Tensor<T>> {
    let len = previous.rows();
    if overlap > len || overlap > n_new {
        return Err(Error::contract(format!(
            "overlap {overlap} exceeds the previous ({len}) or new ({n_new}) length"
        )));
    }
    let mut cond = MultiMaskCondition::empty(n_new, spec.model.frame_dim);
    for j in 0..overlap {
        cond.insert(j, previous.row(len - overlap + j).to_vec())?;
    }
    let generated = generate(spec, &cond, n_new, seed, exec)?;
    let mut rows: Vec<&[T]> = (0..len).map(|r| previous.row(r)).collect();
    rows.extend((overlap..n_new).map(|r| generated.frames.row(r)));
    Tensor::from_rows(&rows)
}
