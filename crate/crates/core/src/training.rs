//! Produces the "original" tabular policies that the ranking pipeline
//! treats as black boxes.
//!
//! Planning runs on a position-only model of the world: reaching the goal
//! pays 1, lava pays 0, both are absorbing, and future value is discounted
//! by the planning discount. Because the true goal reward only shrinks with
//! the step count, the greedy policy of this model takes a shortest safe
//! path, which is also optimal for the real episodic reward.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::gridworld::{Action, Coord, GridWorld, Terrain};
use crate::policy::{AbstractState, TabularPolicy};
use crate::rollout::run_episode;
use crate::seed;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainingError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("no passing policy after {attempts} attempts")]
    NoPassingPolicy { attempts: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrainingMethod {
    ValueIteration,
    QLearning,
}

impl TrainingMethod {
    pub fn name(self) -> &'static str {
        match self {
            TrainingMethod::ValueIteration => "value-iteration",
            TrainingMethod::QLearning => "q-learning",
        }
    }
}

impl std::fmt::Display for TrainingMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TrainingMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "value-iteration" | "vi" => Ok(TrainingMethod::ValueIteration),
            "q-learning" | "q" | "qlearning" => Ok(TrainingMethod::QLearning),
            other => Err(format!(
                "unknown training method {other:?} (expected value-iteration or q-learning)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub method: TrainingMethod,
    /// Q-learning episodes for the first attempt; doubled on every retry.
    pub episodes: usize,
    pub learning_rate: f64,
    /// Exploration decays linearly from `epsilon_start` to `epsilon_end`.
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub convergence_tol: f64,
    pub train_seed: u64,
    /// Upper bound on the planning discount; the world's discount is used
    /// when smaller. Must be below 1 so that shorter paths are preferred.
    pub planning_discount: f64,
    /// Value-iteration only: choose uniformly among actions whose value is
    /// within this slack of the best one. Zero gives the plain greedy policy.
    pub near_optimal_slack: f64,
    pub max_attempts: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            method: TrainingMethod::ValueIteration,
            episodes: 2000,
            learning_rate: 0.5,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            convergence_tol: 1e-10,
            train_seed: 0,
            planning_discount: 0.99,
            near_optimal_slack: 0.0,
            max_attempts: 6,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let bad = |msg: String| Err(TrainingError::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate must lie in (0, 1], got {}", self.learning_rate));
        }
        for (name, eps) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&eps) {
                return bad(format!("{name} must lie in [0, 1], got {eps}"));
            }
        }
        if !(self.convergence_tol > 0.0) {
            return bad(format!(
                "convergence_tol must be positive, got {}",
                self.convergence_tol
            ));
        }
        if !(self.planning_discount > 0.0 && self.planning_discount < 1.0) {
            return bad(format!(
                "planning_discount must lie in (0, 1), got {}",
                self.planning_discount
            ));
        }
        if !(self.near_optimal_slack >= 0.0) {
            return bad(format!(
                "near_optimal_slack must be non-negative, got {}",
                self.near_optimal_slack
            ));
        }
        if self.episodes == 0 || self.max_attempts == 0 {
            return bad("episodes and max_attempts must be at least 1".into());
        }
        Ok(())
    }

    fn discount_for(&self, world: &GridWorld) -> f64 {
        world.discount().min(self.planning_discount)
    }
}

/// Open, non-terminal cells reachable from the start by any action sequence,
/// in BFS order.
pub fn reachable_states(world: &GridWorld) -> Vec<Coord> {
    let mut seen = vec![false; world.width() * world.height()];
    let mut order = Vec::new();
    let mut queue = VecDeque::from([world.start()]);
    seen[world.start().y * world.width() + world.start().x] = true;
    while let Some(c) = queue.pop_front() {
        order.push(c);
        for a in Action::ALL {
            let n = world.next_position(c, a);
            let i = n.y * world.width() + n.x;
            if !seen[i] && world.terrain(n) == Terrain::Empty {
                seen[i] = true;
                queue.push_back(n);
            }
        }
    }
    order
}

/// Converged state values of the planning model.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: BTreeMap<Coord, f64>,
    pub discount: f64,
    pub sweeps: usize,
}

impl ValueFunction {
    pub fn value(&self, c: Coord) -> f64 {
        self.values.get(&c).copied().unwrap_or(0.0)
    }

    pub fn q_value(&self, world: &GridWorld, c: Coord, a: Action) -> f64 {
        let n = world.next_position(c, a);
        match world.terrain(n) {
            Terrain::Goal => 1.0,
            Terrain::Lava | Terrain::Wall => 0.0,
            Terrain::Empty => self.discount * self.value(n),
        }
    }

    pub fn q_values(&self, world: &GridWorld, c: Coord) -> [f64; 4] {
        Action::ALL.map(|a| self.q_value(world, c, a))
    }
}

/// Synchronous value iteration until the largest update falls below `tol`.
pub fn value_iteration(world: &GridWorld, discount: f64, tol: f64) -> ValueFunction {
    let states = reachable_states(world);
    let mut vf = ValueFunction {
        values: states.iter().map(|&c| (c, 0.0)).collect(),
        discount,
        sweeps: 0,
    };
    loop {
        vf.sweeps += 1;
        let mut delta: f64 = 0.0;
        let next: BTreeMap<Coord, f64> = states
            .iter()
            .map(|&c| {
                let best = vf.q_values(world, c).into_iter().fold(f64::NEG_INFINITY, f64::max);
                delta = delta.max((best - vf.value(c)).abs());
                (c, best)
            })
            .collect();
        vf.values = next;
        if delta < tol {
            return vf;
        }
    }
}

fn argmax_lowest(q: &[f64; 4]) -> Action {
    let mut best = 0;
    for i in 1..4 {
        if q[i] > q[best] {
            best = i;
        }
    }
    Action::ALL[best]
}

fn greedy_table<F>(states: &[Coord], mut choose: F) -> TabularPolicy
where
    F: FnMut(Coord) -> Action,
{
    let table = states.iter().map(|&c| (AbstractState::at(c), choose(c))).collect();
    TabularPolicy::new(table, Action::North)
}

fn passes(world: &GridWorld, policy: &TabularPolicy) -> bool {
    run_episode(world, policy, 0).passed()
}

pub fn train(world: &GridWorld, config: &TrainingConfig) -> Result<TabularPolicy, TrainingError> {
    config.validate()?;
    match config.method {
        TrainingMethod::ValueIteration => train_value_iteration(world, config),
        TrainingMethod::QLearning => train_q_learning(world, config),
    }
}

fn train_value_iteration(world: &GridWorld, config: &TrainingConfig) -> Result<TabularPolicy, TrainingError> {
    let vf = value_iteration(world, config.discount_for(world), config.convergence_tol);
    let states = reachable_states(world);
    let mut slack = config.near_optimal_slack;
    for attempt in 0..config.max_attempts {
        let policy = if slack > 0.0 {
            let mut rng = seed::stream(seed::derive(config.train_seed, &[attempt as u64]));
            greedy_table(&states, |c| {
                let q = vf.q_values(world, c);
                let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let near: Vec<Action> = Action::ALL
                    .into_iter()
                    .filter(|a| q[a.index()] >= best - slack)
                    .collect();
                *near.choose(&mut rng).expect("the best action is always near-optimal")
            })
        } else {
            greedy_table(&states, |c| argmax_lowest(&vf.q_values(world, c)))
        };
        if passes(world, &policy) {
            return Ok(policy);
        }
        // Looping or lava-bound choices: tighten towards the greedy policy,
        // reaching it exactly on the last attempt.
        slack = if attempt + 2 >= config.max_attempts {
            0.0
        } else {
            slack / 2.0
        };
    }
    Err(TrainingError::NoPassingPolicy {
        attempts: config.max_attempts,
    })
}

fn train_q_learning(world: &GridWorld, config: &TrainingConfig) -> Result<TabularPolicy, TrainingError> {
    let gamma = config.discount_for(world);
    let states = reachable_states(world);
    let idx = |c: Coord| c.y * world.width() + c.x;
    let mut episodes = config.episodes;
    for attempt in 0..config.max_attempts {
        let mut rng = seed::stream(seed::derive(config.train_seed, &[attempt as u64]));
        let mut q = vec![[0.0f64; 4]; world.width() * world.height()];
        for ep in 0..episodes {
            let frac = if episodes > 1 {
                ep as f64 / (episodes - 1) as f64
            } else {
                1.0
            };
            let epsilon = config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac;
            let mut state = world.initial_state();
            loop {
                let qs = q[idx(state.position)];
                let action = if rng.random_bool(epsilon) {
                    Action::ALL[rng.random_range(0..4)]
                } else {
                    argmax_lowest(&qs)
                };
                let t = world
                    .step(&state, action)
                    .expect("training only steps non-terminal states");
                let bootstrap = if t.done {
                    0.0
                } else {
                    gamma
                        * q[idx(t.state.position)]
                            .iter()
                            .copied()
                            .fold(f64::NEG_INFINITY, f64::max)
                };
                let cell = &mut q[idx(state.position)][action.index()];
                *cell += config.learning_rate * (t.reward + bootstrap - *cell);
                if t.done {
                    break;
                }
                state = t.state;
            }
        }
        let policy = greedy_table(&states, |c| argmax_lowest(&q[idx(c)]));
        if passes(world, &policy) {
            return Ok(policy);
        }
        episodes = episodes.saturating_mul(2);
    }
    Err(TrainingError::NoPassingPolicy {
        attempts: config.max_attempts,
    })
}
