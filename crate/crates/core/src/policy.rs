//! Black-box policies.
//!
//! Callers that rank or evaluate a policy only ever use [`Policy::decide`]
//! (or [`Policy::act`]); the optional action distribution is there for the
//! exact oracles.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::csvio::{self, FormatError};
use crate::gridworld::{Action, Coord, GridWorld, State, Terrain};
use crate::ranking::Ranking;
use crate::seed::Stream;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("pruning fraction must lie in [0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("malformed policy file: {0}")]
    Format(#[from] FormatError),
    #[error("policy does not match world: {0}")]
    WorldMismatch(String),
}

/// Canonical key under which decisions are scored: the agent position.
/// The step counter is deliberately not part of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AbstractState(Coord);

impl AbstractState {
    pub fn of(state: &State) -> Self {
        Self(state.position)
    }

    pub fn at(position: Coord) -> Self {
        Self(position)
    }

    pub fn position(self) -> Coord {
        self.0
    }

    pub fn key(self) -> String {
        format!("{},{}", self.0.x, self.0.y)
    }

    pub fn parse(key: &str) -> Result<Self, FormatError> {
        let bad = || FormatError::new(format!("bad state key {key:?} (expected \"x,y\")"));
        let (x, y) = key.trim().split_once(',').ok_or_else(bad)?;
        Ok(Self(Coord::new(
            x.trim().parse().map_err(|_| bad())?,
            y.trim().parse().map_err(|_| bad())?,
        )))
    }
}

/// The abstraction map from concrete states to ranking keys.
pub fn abstraction(state: &State) -> AbstractState {
    AbstractState::of(state)
}

impl fmt::Display for AbstractState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.0.x, self.0.y)
    }
}

// Ordered by the textual key so that lexicographic tie-breaking and every
// sorted collection agree.
impl Ord for AbstractState {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for AbstractState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One action choice. `random` is set when the action was drawn from the
/// uniform-random policy rather than chosen by the base policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub action: Action,
    pub random: bool,
}

pub trait Policy: Send + Sync {
    fn decide(&self, state: &State, rng: &mut Stream) -> Decision;

    fn act(&self, state: &State, rng: &mut Stream) -> Action {
        self.decide(state, rng).action
    }

    /// Per-state action probabilities in `Action::ALL` order, when queryable.
    fn distribution(&self, _state: &State) -> Option<[f64; 4]> {
        None
    }

    fn supports_enumeration(&self) -> bool {
        false
    }

    /// True when `decide` never consumes randomness.
    fn is_deterministic(&self) -> bool {
        false
    }
}

pub fn uniform_action(rng: &mut Stream) -> Action {
    Action::ALL[rng.random_range(0..Action::COUNT)]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UniformRandomPolicy;

pub fn uniform_random_policy() -> UniformRandomPolicy {
    UniformRandomPolicy
}

impl Policy for UniformRandomPolicy {
    fn decide(&self, _state: &State, rng: &mut Stream) -> Decision {
        Decision {
            action: uniform_action(rng),
            random: true,
        }
    }

    fn distribution(&self, _state: &State) -> Option<[f64; 4]> {
        Some([0.25; 4])
    }

    fn supports_enumeration(&self) -> bool {
        true
    }
}

/// Deterministic lookup-table policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TabularPolicy {
    table: BTreeMap<AbstractState, Action>,
    default_action: Action,
}

impl TabularPolicy {
    pub fn new(table: BTreeMap<AbstractState, Action>, default_action: Action) -> Self {
        Self { table, default_action }
    }

    pub fn table(&self) -> &BTreeMap<AbstractState, Action> {
        &self.table
    }

    pub fn default_action(&self) -> Action {
        self.default_action
    }

    pub fn action_for(&self, key: AbstractState) -> Action {
        self.table.get(&key).copied().unwrap_or(self.default_action)
    }

    pub fn to_csv(&self) -> String {
        csvio::write_doc(
            &[("default_action".to_string(), self.default_action.to_string())],
            &["state_key", "action"],
            self.table.iter().map(|(k, a)| vec![k.key(), a.to_string()]),
        )
    }

    pub fn from_csv(text: &str) -> Result<Self, PolicyError> {
        let doc = csvio::read_doc(text)?;
        doc.expect_header(&["state_key", "action"])?;
        let default_action = doc
            .meta("default_action")
            .ok_or_else(|| FormatError::new("missing `# default_action=<A>` row"))?
            .parse::<Action>()
            .map_err(FormatError::new)?;
        let mut table = BTreeMap::new();
        for (i, row) in doc.rows.iter().enumerate() {
            let key = AbstractState::parse(&row[0])?;
            let action = row[1]
                .parse::<Action>()
                .map_err(|e| FormatError::new(format!("row {}: {e}", i + 1)))?;
            if table.insert(key, action).is_some() {
                return Err(FormatError::new(format!("duplicate state key {}", key)).into());
            }
        }
        Ok(Self { table, default_action })
    }

    /// Every table key must be a non-wall cell of `world`.
    pub fn check_world(&self, world: &GridWorld) -> Result<(), PolicyError> {
        for key in self.table.keys() {
            let p = key.position();
            if p.x >= world.width() || p.y >= world.height() || world.terrain(p) == Terrain::Wall {
                return Err(PolicyError::WorldMismatch(format!(
                    "state {key} is not an open cell of the {}x{} world",
                    world.width(),
                    world.height()
                )));
            }
        }
        Ok(())
    }
}

impl Policy for TabularPolicy {
    fn decide(&self, state: &State, _rng: &mut Stream) -> Decision {
        Decision {
            action: self.action_for(AbstractState::of(state)),
            random: false,
        }
    }

    fn distribution(&self, state: &State) -> Option<[f64; 4]> {
        let mut p = [0.0; 4];
        p[self.action_for(AbstractState::of(state)).index()] = 1.0;
        Some(p)
    }

    fn supports_enumeration(&self) -> bool {
        true
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Base policy restricted to a kept set of states; everywhere else the
/// action is drawn uniformly at random.
#[derive(Clone)]
pub struct PrunedPolicy {
    base: Arc<dyn Policy>,
    kept: BTreeSet<AbstractState>,
}

impl PrunedPolicy {
    pub fn new(base: Arc<dyn Policy>, kept: BTreeSet<AbstractState>) -> Self {
        Self { base, kept }
    }

    pub fn kept_states(&self) -> &BTreeSet<AbstractState> {
        &self.kept
    }

    pub fn keeps(&self, state: &State) -> bool {
        self.kept.contains(&AbstractState::of(state))
    }
}

impl fmt::Debug for PrunedPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrunedPolicy")
            .field("kept", &self.kept)
            .finish_non_exhaustive()
    }
}

impl Policy for PrunedPolicy {
    fn decide(&self, state: &State, rng: &mut Stream) -> Decision {
        if self.keeps(state) {
            self.base.decide(state, rng)
        } else {
            Decision {
                action: uniform_action(rng),
                random: true,
            }
        }
    }

    fn distribution(&self, state: &State) -> Option<[f64; 4]> {
        if self.keeps(state) {
            self.base.distribution(state)
        } else {
            Some([0.25; 4])
        }
    }

    fn supports_enumeration(&self) -> bool {
        self.base.supports_enumeration()
    }
}

/// Number of states kept at fraction `r` of `n` ranked states: `ceil(r * n)`,
/// with products that land within rounding noise of an integer snapped to it.
pub fn kept_count(r: f64, n: usize) -> usize {
    let x = r * n as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() < 1e-9 { nearest } else { x.ceil() };
    (k as usize).min(n)
}

/// Keep the top `ceil(r * n)` ranked states of `ranking`. States the ranking
/// never scored are never kept, not even at `r = 1`.
pub fn prune(base: Arc<dyn Policy>, ranking: &Ranking, r: f64) -> Result<PrunedPolicy, PolicyError> {
    if !(0.0..=1.0).contains(&r) {
        return Err(PolicyError::InvalidFraction(r));
    }
    let k = kept_count(r, ranking.len());
    let kept = ranking.ordered().iter().take(k).map(|s| s.state).collect();
    Ok(PrunedPolicy::new(base, kept))
}
