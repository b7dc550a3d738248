use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::{aggregate, evaluate_curve, AggregateCurve, EvalError, RecoveryCurve};
use crate::gridworld::GridWorld;
use crate::policy::{Policy, TabularPolicy};
use crate::ranking::{rank_states, Expectation, Method, RankConfig};
use crate::rollout::generate_test_suite;
use crate::seed;
use crate::training::{train, TrainingConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub training: TrainingConfig,
    pub suite_episodes: usize,
    pub mutation_rate: f64,
    pub k_branches: usize,
    pub expectation: Expectation,
    pub r_grid: Vec<f64>,
    pub eval_episodes: usize,
    /// Root of every per-world seed (training, suite, branches, ties, evaluation).
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            training: TrainingConfig::default(),
            suite_episodes: 1000,
            mutation_rate: 0.1,
            k_branches: 4,
            expectation: Expectation::Exact,
            r_grid: super::default_r_grid(),
            eval_episodes: 100,
            seed: 0,
        }
    }
}

/// Seeds used for one world, each derived from the experiment seed and the
/// world's position in the batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorldSeeds {
    pub train: u64,
    pub suite: u64,
    pub branch: u64,
    pub tie: u64,
    pub eval: u64,
}

impl WorldSeeds {
    pub fn for_world(experiment_seed: u64, index: usize) -> Self {
        let i = index as u64;
        Self {
            train: seed::derive(experiment_seed, &[1, i]),
            suite: seed::derive(experiment_seed, &[2, i]),
            branch: seed::derive(experiment_seed, &[3, i]),
            tie: seed::derive(experiment_seed, &[4, i]),
            eval: seed::derive(experiment_seed, &[5]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldFailure {
    pub world_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub curves: Vec<RecoveryCurve>,
    pub aggregates: Vec<AggregateCurve>,
    /// AUC per (world_id, method).
    pub world_aucs: BTreeMap<(String, Method), f64>,
    pub failures: Vec<WorldFailure>,
    /// True when at least one world failed and was left out of the aggregates.
    pub partial: bool,
}

impl ExperimentReport {
    pub fn aggregate_for(&self, method: Method) -> Option<&AggregateCurve> {
        self.aggregates.iter().find(|a| a.method == method)
    }

    /// Number of worlds where `method` has a strictly larger AUC than `other`.
    pub fn wins(&self, method: Method, other: Method) -> usize {
        self.world_aucs
            .iter()
            .filter(|((world, m), auc)| {
                *m == method && self.world_aucs.get(&(world.clone(), other)).is_some_and(|o| *auc > o)
            })
            .count()
    }
}

pub fn world_id(index: usize) -> String {
    format!("world_{index:03}")
}

fn run_world(
    world: &GridWorld,
    index: usize,
    methods: &[Method],
    config: &ExperimentConfig,
) -> Result<Vec<RecoveryCurve>, String> {
    let id = world_id(index);
    let seeds = WorldSeeds::for_world(config.seed, index);
    let training = TrainingConfig {
        train_seed: seeds.train,
        ..config.training.clone()
    };
    let tabular: TabularPolicy = train(world, &training).map_err(|e| e.to_string())?;
    let policy: Arc<dyn Policy> = Arc::new(tabular);
    let suite = generate_test_suite(
        world,
        policy.as_ref(),
        config.suite_episodes,
        config.mutation_rate,
        seeds.suite,
    )
    .map_err(|e| e.to_string())?;
    methods
        .iter()
        .map(|&method| {
            let rank_config = RankConfig {
                method,
                k_branches: config.k_branches,
                expectation: config.expectation,
                branch_seed: seeds.branch,
                tie_seed: seeds.tie,
            };
            let ranking = rank_states(world, policy.as_ref(), &suite, &rank_config).map_err(|e| e.to_string())?;
            evaluate_curve(
                world,
                &id,
                Arc::clone(&policy),
                &ranking,
                &config.r_grid,
                config.eval_episodes,
                seeds.eval,
            )
            .map_err(|e| e.to_string())
        })
        .collect()
}

/// Train, rank and evaluate every world with every method, then aggregate
/// per method across worlds. Worlds that fail are reported, not fatal.
pub fn batch_experiment(
    worlds: &[GridWorld],
    methods: &[Method],
    config: &ExperimentConfig,
) -> Result<ExperimentReport, EvalError> {
    if worlds.is_empty() || methods.is_empty() {
        return Err(EvalError::NoCurves);
    }
    let results: Vec<Result<Vec<RecoveryCurve>, String>> = worlds
        .par_iter()
        .enumerate()
        .map(|(i, w)| run_world(w, i, methods, config))
        .collect();

    let mut curves = Vec::new();
    let mut failures = Vec::new();
    for (i, result) in results.into_iter().enumerate() {
        match result {
            Ok(c) => curves.extend(c),
            Err(message) => failures.push(WorldFailure {
                world_id: world_id(i),
                message,
            }),
        }
    }
    let aggregates = if curves.is_empty() {
        Vec::new()
    } else {
        aggregate(&curves, &[])?
    };
    let world_aucs = curves
        .iter()
        .map(|c| ((c.world_id.clone(), c.method), c.auc()))
        .collect();
    Ok(ExperimentReport {
        partial: !failures.is_empty(),
        curves,
        aggregates,
        world_aucs,
        failures,
    })
}
