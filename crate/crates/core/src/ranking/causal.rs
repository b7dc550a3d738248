//! Counterfactual causal effect of each policy decision.
//!
//! For a state `s` first visited at step `t`, the effect is the discounted
//! return of the unperturbed episode minus the expected return when the
//! action at `t` is replaced by a uniform-random action and the policy takes
//! over again afterwards.

use rayon::prelude::*;

use super::{RankingError, Score};
use crate::gridworld::GridWorld;
use crate::policy::{AbstractState, Policy};
use crate::rollout::{counterfactual_all_actions, counterfactual_branch, run_episode, TestSuite};
use crate::seed;
use crate::stats::Summary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Expectation {
    /// Enumerate all four replacement actions. Needs a deterministic policy.
    Exact,
    /// Average over `k_branches` sampled replacement actions.
    Sampled,
}

impl Expectation {
    pub fn name(self) -> &'static str {
        match self {
            Expectation::Exact => "exact",
            Expectation::Sampled => "sampled",
        }
    }
}

/// Episode seed of branch `j`. Shared by every target state so all targets
/// are compared on common random numbers.
fn branch_episode_seed(seed: u64, j: usize) -> u64 {
    seed::derive(seed, &[0, j as u64])
}

fn branch_action_seed(seed: u64, target: AbstractState, j: usize) -> u64 {
    let p = target.position();
    seed::derive(seed, &[1, p.x as u64, p.y as u64, j as u64])
}

/// Causal score for every state in `suite.visited`. States the policy's own
/// episode never reaches score 0.
pub fn causal_scores(
    world: &GridWorld,
    policy: &dyn Policy,
    suite: &TestSuite,
    k_branches: usize,
    seed: u64,
    expectation: Expectation,
) -> Result<Vec<Score>, RankingError> {
    if k_branches == 0 {
        return Err(RankingError::NoBranches);
    }
    if expectation == Expectation::Exact {
        if k_branches < 4 {
            return Err(RankingError::ExactNeedsFourBranches(k_branches));
        }
        if !policy.is_deterministic() {
            return Err(RankingError::ExactNeedsDeterministicPolicy);
        }
    }
    let visits = suite.visit_counts();
    let targets: Vec<AbstractState> = suite.visited.iter().copied().collect();

    // With a deterministic policy the factual term does not depend on the
    // target, so it is computed once.
    let factual_once = (expectation == Expectation::Exact)
        .then(|| run_episode(world, policy, branch_episode_seed(seed, 0)).discounted_return(world.discount()));

    let scored = targets
        .par_iter()
        .map(|&target| {
            let (value, std_error) = match expectation {
                Expectation::Exact => {
                    let factual = factual_once.unwrap_or_default();
                    let (_, alternatives) =
                        counterfactual_all_actions(world, policy, target, branch_episode_seed(seed, 0));
                    match alternatives {
                        Some(returns) => (factual - returns.iter().sum::<f64>() / 4.0, 0.0),
                        None => (0.0, 0.0),
                    }
                }
                Expectation::Sampled => {
                    let diffs: Vec<f64> = (0..k_branches)
                        .map(|j| {
                            counterfactual_branch(
                                world,
                                policy,
                                target,
                                branch_episode_seed(seed, j),
                                branch_action_seed(seed, target, j),
                            )
                            .effect()
                        })
                        .collect();
                    let s = Summary::of(&diffs);
                    (s.mean, s.std_error.unwrap_or(0.0))
                }
            };
            Score {
                state: target,
                value,
                visits: visits.get(&target).copied().unwrap_or(0),
                std_error,
            }
        })
        .collect();
    Ok(scored)
}
