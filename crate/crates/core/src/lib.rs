//! Ranks the decisions of a black-box RL policy by their counterfactual
//! causal effect on reward (or by SBFL suspiciousness over mutant
//! executions), then measures how much reward pruned policies that keep only
//! the top-ranked decisions recover.

pub mod cli;
pub mod csvio;
pub mod evaluation;
pub mod gridworld;
pub mod policy;
pub mod ranking;
pub mod rollout;
pub mod seed;
pub mod stats;
pub mod training;

pub use evaluation::{batch_experiment, evaluate_curve, CurvePoint, ExperimentConfig, ExperimentReport, RecoveryCurve};
pub use gridworld::{generate_batch, parse_map, render_map, Action, Coord, GridWorld, Outcome, State, Terrain};
pub use policy::{abstraction, prune, uniform_random_policy, AbstractState, Policy, PrunedPolicy, TabularPolicy};
pub use ranking::{
    build_ranking, causal_scores, sbfl_score, spectrum_from_suite, Method, Ranking, Score, SpectrumVector,
};
pub use rollout::{counterfactual_branch, estimate_value, generate_test_suite, run_episode, TestSuite, Trajectory};
pub use training::{train, TrainingConfig, TrainingMethod};
