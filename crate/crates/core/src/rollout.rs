//! Episode execution: plain rollouts, Monte Carlo value estimates, mutant
//! test suites and counterfactual branches.
//!
//! Every episode is a pure function of the world, the policy and an explicit
//! seed. Batched work is fanned out with rayon and gathered in index order, so
//! results do not depend on the number of worker threads.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use crate::csvio::{parse_field, FormatError};
use crate::gridworld::{Action, GridWorld, Outcome, State, TerminalReason, WorldError};
use crate::policy::{uniform_action, AbstractState, Policy};
use crate::seed::{self, Stream};
use crate::stats;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RolloutError {
    #[error("episode count must be at least 1")]
    NoEpisodes,
    #[error("mutation rate must lie strictly between 0 and 1, got {0}")]
    InvalidMutationRate(f64),
    #[error("malformed suite file: {0}")]
    Format(#[from] FormatError),
    #[error("suite line {line} does not replay on this world: {reason}")]
    ReplayMismatch { line: usize, reason: String },
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub state: State,
    pub abstract_state: AbstractState,
    pub action: Action,
    /// The executed action was drawn from the uniform-random policy.
    pub mutated: bool,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
    pub episode_seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn passed(&self) -> bool {
        self.outcome.passed()
    }

    pub fn discounted_return(&self, discount: f64) -> f64 {
        let mut total = 0.0;
        let mut factor = 1.0;
        for s in &self.steps {
            total += factor * s.reward;
            factor *= discount;
        }
        total
    }

    /// Distinct abstract states visited, each paired with whether it was
    /// mutated in this episode.
    pub fn visited(&self) -> Vec<(AbstractState, bool)> {
        let mut seen: Vec<(AbstractState, bool)> = Vec::new();
        for s in &self.steps {
            match seen.iter_mut().find(|(k, _)| *k == s.abstract_state) {
                Some(entry) => entry.1 |= s.mutated,
                None => seen.push((s.abstract_state, s.mutated)),
            }
        }
        seen
    }

    pub fn original_steps(&self) -> usize {
        self.steps.iter().filter(|s| !s.mutated).count()
    }
}

/// Per-step hook deciding the executed action, letting one loop serve plain
/// rollouts and mutant executions.
fn roll<F>(world: &GridWorld, start: State, rng: &mut Stream, mut choose: F) -> (Vec<StepRecord>, Outcome)
where
    F: FnMut(&State, &mut Stream) -> (Action, bool),
{
    let mut state = start;
    let mut steps = Vec::new();
    loop {
        let (action, mutated) = choose(&state, rng);
        let t = world
            .step(&state, action)
            .expect("rollout only steps non-terminal states");
        steps.push(StepRecord {
            state,
            abstract_state: AbstractState::of(&state),
            action,
            mutated,
            reward: t.reward,
        });
        if let Some(outcome) = t.outcome {
            return (steps, outcome);
        }
        state = t.state;
    }
}

pub fn run_episode(world: &GridWorld, policy: &dyn Policy, episode_seed: u64) -> Trajectory {
    let mut rng = seed::stream(episode_seed);
    let (steps, outcome) = roll(world, world.initial_state(), &mut rng, |s, rng| {
        let d = policy.decide(s, rng);
        (d.action, d.random)
    });
    Trajectory {
        steps,
        outcome,
        episode_seed,
    }
}

/// Seed of episode `index` in a batch rooted at `seed`.
pub fn episode_seed(seed: u64, index: usize) -> u64 {
    seed::derive(seed, &[index as u64])
}

/// Runs `n` independent episodes with seeds `episode_seed(seed, i)`.
pub fn run_episodes(world: &GridWorld, policy: &dyn Policy, n: usize, seed: u64) -> Vec<Trajectory> {
    (0..n)
        .into_par_iter()
        .map(|i| run_episode(world, policy, episode_seed(seed, i)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_episodes: usize,
    /// False when a standard error cannot be formed (a single episode); the
    /// reported `std_error` is then 0.
    pub std_error_defined: bool,
}

/// Monte Carlo estimate of the discounted return from the start state.
pub fn estimate_value(
    world: &GridWorld,
    policy: &dyn Policy,
    n_episodes: usize,
    seed: u64,
) -> Result<ValueEstimate, RolloutError> {
    if n_episodes == 0 {
        return Err(RolloutError::NoEpisodes);
    }
    let returns: Vec<f64> = run_episodes(world, policy, n_episodes, seed)
        .iter()
        .map(|t| t.discounted_return(world.discount()))
        .collect();
    let summary = stats::Summary::of(&returns);
    Ok(ValueEstimate {
        mean: summary.mean,
        std_error: summary.std_error.unwrap_or(0.0),
        n_episodes,
        std_error_defined: summary.std_error.is_some(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSuite {
    pub trajectories: Vec<Trajectory>,
    pub mutation_rate: f64,
    pub suite_seed: u64,
    pub visited: BTreeSet<AbstractState>,
}

impl TestSuite {
    fn from_trajectories(trajectories: Vec<Trajectory>, mutation_rate: f64, suite_seed: u64) -> Self {
        let visited = trajectories
            .iter()
            .flat_map(|t| t.steps.iter().map(|s| s.abstract_state))
            .collect();
        Self {
            trajectories,
            mutation_rate,
            suite_seed,
            visited,
        }
    }

    /// Number of trajectories that visited each state.
    pub fn visit_counts(&self) -> HashMap<AbstractState, usize> {
        let mut counts = HashMap::new();
        for t in &self.trajectories {
            for (k, _) in t.visited() {
                *counts.entry(k).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Serialize to the line-oriented audit format: metadata rows, then one
    /// trajectory per line as `seed<TAB>outcome<TAB>x,y:A:m,x,y:A:m,...`.
    pub fn to_record_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# mutation_rate={}", self.mutation_rate);
        let _ = writeln!(out, "# suite_seed={}", self.suite_seed);
        let _ = writeln!(out, "# n_episodes={}", self.trajectories.len());
        for t in &self.trajectories {
            let _ = write!(out, "{}\t{}\t", t.episode_seed, t.outcome.terminal_reason.name());
            for (i, s) in t.steps.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}:{}:{}", s.abstract_state, s.action, u8::from(s.mutated));
            }
            out.push('\n');
        }
        out
    }

    /// Rebuild a suite from its record text by re-executing every recorded
    /// action sequence on `world`; any disagreement between the record and
    /// the replay is an error.
    pub fn replay_record_text(world: &GridWorld, text: &str) -> Result<TestSuite, RolloutError> {
        let mut mutation_rate = None;
        let mut suite_seed = None;
        let mut trajectories = Vec::new();
        for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    match k.trim() {
                        "mutation_rate" => mutation_rate = Some(parse_field::<f64>(v, "mutation_rate", lineno)?),
                        "suite_seed" => suite_seed = Some(parse_field::<u64>(v, "suite_seed", lineno)?),
                        _ => {}
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            trajectories.push(replay_line(world, line, lineno)?);
        }
        let mutation_rate = mutation_rate.ok_or_else(|| FormatError::new("missing `# mutation_rate=` row"))?;
        let suite_seed = suite_seed.ok_or_else(|| FormatError::new("missing `# suite_seed=` row"))?;
        Ok(TestSuite::from_trajectories(trajectories, mutation_rate, suite_seed))
    }
}

fn replay_line(world: &GridWorld, line: &str, lineno: usize) -> Result<Trajectory, RolloutError> {
    let mismatch = |reason: String| RolloutError::ReplayMismatch { line: lineno, reason };
    let mut fields = line.split('\t');
    let (Some(seed_field), Some(reason_field), Some(steps_field), None) =
        (fields.next(), fields.next(), fields.next(), fields.next())
    else {
        return Err(FormatError::new(format!("line {lineno}: expected 3 tab-separated fields")).into());
    };
    let episode_seed = parse_field::<u64>(seed_field, "episode seed", lineno)?;
    let recorded_reason = TerminalReason::from_name(reason_field.trim())
        .ok_or_else(|| FormatError::new(format!("line {lineno}: unknown outcome {reason_field:?}")))?;

    // Keys contain one comma, so triples span two comma-separated tokens.
    let tokens: Vec<&str> = steps_field.split(',').collect();
    if tokens.len() % 2 != 0 || tokens.is_empty() {
        return Err(FormatError::new(format!("line {lineno}: malformed step list")).into());
    }
    let mut state = world.initial_state();
    let mut steps = Vec::with_capacity(tokens.len() / 2);
    let mut outcome = None;
    for pair in tokens.chunks(2) {
        let triple = format!("{},{}", pair[0], pair[1]);
        let mut parts = triple.split(':');
        let (Some(key), Some(action), Some(flag), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(FormatError::new(format!("line {lineno}: bad step {triple:?}")).into());
        };
        let key = AbstractState::parse(key)?;
        let action = action.parse::<Action>().map_err(FormatError::new)?;
        let mutated = match flag {
            "0" => false,
            "1" => true,
            other => return Err(FormatError::new(format!("line {lineno}: bad mutation flag {other:?}")).into()),
        };
        if outcome.is_some() {
            return Err(mismatch("steps recorded after the episode ended".into()));
        }
        if AbstractState::of(&state) != key {
            return Err(mismatch(format!(
                "expected agent at {}, record says {key}",
                AbstractState::of(&state)
            )));
        }
        let t = world.step(&state, action)?;
        steps.push(StepRecord {
            state,
            abstract_state: key,
            action,
            mutated,
            reward: t.reward,
        });
        outcome = t.outcome;
        state = t.state;
    }
    let outcome = outcome.ok_or_else(|| mismatch("episode does not terminate".into()))?;
    if outcome.terminal_reason != recorded_reason {
        return Err(mismatch(format!(
            "replay ends with {}, record says {}",
            outcome.terminal_reason.name(),
            recorded_reason.name()
        )));
    }
    Ok(Trajectory {
        steps,
        outcome,
        episode_seed,
    })
}

/// One mutant execution. The first visit to each abstract state flips a
/// coin with probability `mutation_rate`; the result holds for every later
/// visit in the same episode. Mutated states act uniformly at random.
pub fn run_mutant_episode(world: &GridWorld, policy: &dyn Policy, mutation_rate: f64, episode_seed: u64) -> Trajectory {
    let mut rng = seed::stream(episode_seed);
    let mut decisions: HashMap<AbstractState, bool> = HashMap::new();
    let (steps, outcome) = roll(world, world.initial_state(), &mut rng, |s, rng| {
        let key = AbstractState::of(s);
        let mutated = match decisions.get(&key) {
            Some(&m) => m,
            None => {
                let m = rng.random_bool(mutation_rate);
                decisions.insert(key, m);
                m
            }
        };
        if mutated {
            (uniform_action(rng), true)
        } else {
            (policy.decide(s, rng).action, false)
        }
    });
    Trajectory {
        steps,
        outcome,
        episode_seed,
    }
}

pub fn generate_test_suite(
    world: &GridWorld,
    policy: &dyn Policy,
    n_episodes: usize,
    mutation_rate: f64,
    suite_seed: u64,
) -> Result<TestSuite, RolloutError> {
    if n_episodes == 0 {
        return Err(RolloutError::NoEpisodes);
    }
    if !(mutation_rate > 0.0 && mutation_rate < 1.0) {
        return Err(RolloutError::InvalidMutationRate(mutation_rate));
    }
    let trajectories = (0..n_episodes)
        .into_par_iter()
        .map(|i| run_mutant_episode(world, policy, mutation_rate, episode_seed(suite_seed, i)))
        .collect();
    Ok(TestSuite::from_trajectories(trajectories, mutation_rate, suite_seed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchResult {
    pub factual_return: f64,
    pub counterfactual_return: f64,
    pub visited: bool,
}

impl BranchResult {
    pub fn effect(&self) -> f64 {
        self.factual_return - self.counterfactual_return
    }
}

/// Where the replayed episode first reached the target, with enough context
/// to resume from that point.
struct BranchPoint {
    state: State,
    rng: Stream,
    return_so_far: f64,
    factor: f64,
}

fn factual_with_branch_point(
    world: &GridWorld,
    policy: &dyn Policy,
    target: AbstractState,
    episode_seed: u64,
) -> (f64, Option<BranchPoint>) {
    let gamma = world.discount();
    let mut rng = seed::stream(episode_seed);
    let mut state = world.initial_state();
    let mut total = 0.0;
    let mut factor = 1.0;
    let mut point = None;
    loop {
        if point.is_none() && AbstractState::of(&state) == target {
            point = Some(BranchPoint {
                state,
                rng: rng.clone(),
                return_so_far: total,
                factor,
            });
        }
        let action = policy.act(&state, &mut rng);
        let t = world
            .step(&state, action)
            .expect("rollout only steps non-terminal states");
        total += factor * t.reward;
        factor *= gamma;
        if t.done {
            return (total, point);
        }
        state = t.state;
    }
}

/// Resume from a branch point, executing `action` instead of the policy's
/// choice. The policy's own draw at the branch step is still consumed so
/// both branches stay aligned on the episode stream afterwards.
fn resume_with(world: &GridWorld, policy: &dyn Policy, point: &BranchPoint, action: Action) -> f64 {
    let gamma = world.discount();
    let mut rng = point.rng.clone();
    let _ = policy.act(&point.state, &mut rng);
    let mut total = point.return_so_far;
    let mut factor = point.factor;
    let mut state = point.state;
    let mut next = action;
    loop {
        let t = world
            .step(&state, next)
            .expect("rollout only steps non-terminal states");
        total += factor * t.reward;
        factor *= gamma;
        if t.done {
            return total;
        }
        state = t.state;
        next = policy.act(&state, &mut rng);
    }
}

/// Factual vs. counterfactual discounted return from the start state when
/// the action at the first visit to `target` is replaced by a uniform-random
/// draw from the `branch_seed` stream. Both branches share the episode
/// stream up to the branch step.
pub fn counterfactual_branch(
    world: &GridWorld,
    policy: &dyn Policy,
    target: AbstractState,
    episode_seed: u64,
    branch_seed: u64,
) -> BranchResult {
    let (factual, point) = factual_with_branch_point(world, policy, target, episode_seed);
    match point {
        None => BranchResult {
            factual_return: factual,
            counterfactual_return: factual,
            visited: false,
        },
        Some(p) => {
            let alt = uniform_action(&mut seed::stream(branch_seed));
            BranchResult {
                factual_return: factual,
                counterfactual_return: resume_with(world, policy, &p, alt),
                visited: true,
            }
        }
    }
}

/// Like [`counterfactual_branch`] but evaluates every alternative action.
/// Returns the factual return and, if the target was visited, the
/// counterfactual return for each action in `Action::ALL` order.
pub fn counterfactual_all_actions(
    world: &GridWorld,
    policy: &dyn Policy,
    target: AbstractState,
    episode_seed: u64,
) -> (f64, Option<[f64; 4]>) {
    let (factual, point) = factual_with_branch_point(world, policy, target, episode_seed);
    let returns = point.map(|p| Action::ALL.map(|a| resume_with(world, policy, &p, a)));
    (factual, returns)
}
