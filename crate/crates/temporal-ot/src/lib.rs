//! Temporally-masked entropic optimal transport rewards for imitation
//! learning, with toy environments, a tabular TD agent, and an experiment
//! harness for baseline and ablation sweeps.

pub mod cost;
pub mod mask;
pub mod sinkhorn;
pub mod trajectory;

pub use cost::{context_cost_matrix, cosine_cost, pairwise_cost_matrix, CostMatrix};
pub use mask::{band_mask, causal_mask, dynamic_mask, ones_mask, Mask, MaskKind};
pub use sinkhorn::{
    marginal_violation, solve, transport_objective, Marginals, SinkhornConfig, TransportPlan,
};
pub use trajectory::{
    load_trajectory, save_trajectory, subsample_demo, DemoSet, FeatureVector, Trajectory,
    TrajectorySource,
};
