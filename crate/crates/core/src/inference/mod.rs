//! Next-frame-rate generation: config grammar, the multiway generation
//! tree, the flow ODE sampler, hierarchical generation with continuation,
//! and cost accounting.

pub mod config;
pub mod cost;
pub mod plan;
pub mod sampler;

pub use config::{parse_config, ParallelConfig, DEFAULT_DENOISE_STEPS};
pub use cost::{analytic_bound, flop_count, FlopReport, Ratio, StageFlops};
pub use plan::{length_quantum, on_grid, plan_tree, GenerationTree, TreeNode};
pub use sampler::{
    collect_generation, continue_video, generate, merge_node, node_seed, ode_integrate, ode_sample,
    plan_generation, sample_node, time_grid, Generation, GenerationSpec, PromptTrack, StageOutput,
};
