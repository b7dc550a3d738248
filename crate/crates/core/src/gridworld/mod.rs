//! Deterministic lava gridworld.
//!
//! The agent moves in four directions on a walled grid. Stepping into lava
//! ends the episode as a failure, stepping onto the goal ends it as a pass
//! with reward `1 - 0.9 * steps / max_steps`, and running out of steps is a
//! timeout failure. Bumping into a wall leaves the agent in place but still
//! consumes a step. There is no randomness in the environment itself.

mod generate;
mod map;

use std::collections::VecDeque;
use std::fmt;

pub use generate::{generate_batch, generate_batch_with, GeneratorConfig};
pub use map::{normalize_map_text, parse_map, render_map};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error("missing goal")]
    MissingGoal,
    #[error("multiple goals")]
    MultipleGoals,
    #[error("missing start")]
    MissingStart,
    #[error("multiple starts")]
    MultipleStarts,
    #[error("empty map")]
    EmptyMap,
    #[error("non-rectangular map: row {row} has width {found}, expected {expected}")]
    NonRectangular { row: usize, found: usize, expected: usize },
    #[error("unknown character {ch:?} at row {row}, column {col}")]
    UnknownChar { ch: char, row: usize, col: usize },
    #[error("open border at ({x},{y}): border cells must be walls")]
    OpenBorder { x: usize, y: usize },
    #[error("missing metadata line `@ max_steps=<int> discount=<float> seed=<int>`")]
    MissingMetadata,
    #[error("bad metadata: {0}")]
    BadMetadata(String),
    #[error("start cell must be empty terrain")]
    StartNotEmpty,
    #[error("max_steps must be at least 1")]
    InvalidMaxSteps,
    #[error("discount must lie in (0, 1], got {0}")]
    InvalidDiscount(f64),
    #[error("goal is unreachable from start without touching lava")]
    Unsolvable,
    #[error("cell ({x},{y}) lies outside the {width}x{height} grid")]
    OutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("cells vector has length {found}, expected {expected}")]
    CellCount { found: usize, expected: usize },
    #[error("step called on a terminal state at ({x},{y}) after {steps} steps")]
    TerminalState { x: usize, y: usize, steps: usize },
    #[error("invalid state: position ({x},{y}) is a wall or out of bounds")]
    InvalidState { x: usize, y: usize },
    #[error("grid size {0} is below the minimum of 5")]
    SizeTooSmall(usize),
    #[error("environment count must be at least 1")]
    ZeroCount,
    #[error("generator failed to place world {index} after {attempts} attempts")]
    GenerationFailed { index: usize, attempts: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Terrain {
    Empty,
    Wall,
    Lava,
    Goal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    pub x: usize,
    pub y: usize,
}

impl Coord {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Coord) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    North,
    East,
    South,
    West,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::North, Action::East, Action::South, Action::West];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn letter(self) -> char {
        match self {
            Action::North => 'N',
            Action::East => 'E',
            Action::South => 'S',
            Action::West => 'W',
        }
    }

    pub fn from_letter(c: char) -> Option<Action> {
        match c {
            'N' => Some(Action::North),
            'E' => Some(Action::East),
            'S' => Some(Action::South),
            'W' => Some(Action::West),
            _ => None,
        }
    }

    /// Target of a move from `from`. Moves never leave the grid because the
    /// border is always wall, so the caller only has to check terrain.
    fn apply(self, from: Coord) -> Coord {
        match self {
            Action::North => Coord::new(from.x, from.y.saturating_sub(1)),
            Action::East => Coord::new(from.x + 1, from.y),
            Action::South => Coord::new(from.x, from.y + 1),
            Action::West => Coord::new(from.x.saturating_sub(1), from.y),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl std::str::FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Action::from_letter(c.to_ascii_uppercase()),
            _ => None,
        }
        .ok_or_else(|| format!("unknown action {s:?} (expected N, E, S or W)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct State {
    pub position: Coord,
    pub steps_taken: usize,
}

impl State {
    pub fn new(position: Coord, steps_taken: usize) -> Self {
        Self { position, steps_taken }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TerminalReason {
    GoalReached,
    LavaDeath,
    Timeout,
}

impl TerminalReason {
    pub fn label(self) -> Label {
        match self {
            TerminalReason::GoalReached => Label::Pass,
            _ => Label::Fail,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TerminalReason::GoalReached => "GoalReached",
            TerminalReason::LavaDeath => "LavaDeath",
            TerminalReason::Timeout => "Timeout",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "GoalReached" => Some(TerminalReason::GoalReached),
            "LavaDeath" => Some(TerminalReason::LavaDeath),
            "Timeout" => Some(TerminalReason::Timeout),
            _ => None,
        }
    }
}

/// How an episode ended. The pass/fail label is derived from the reason, so
/// `label == Pass` iff the goal was reached iff `final_reward > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub terminal_reason: TerminalReason,
    pub final_reward: f64,
}

impl Outcome {
    pub fn label(&self) -> Label {
        self.terminal_reason.label()
    }

    pub fn passed(&self) -> bool {
        self.label() == Label::Pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: State,
    pub reward: f64,
    pub done: bool,
    pub outcome: Option<Outcome>,
}

/// Immutable lava gridworld description.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    width: usize,
    height: usize,
    cells: Vec<Terrain>,
    start: Coord,
    goal: Coord,
    max_steps: usize,
    discount: f64,
    seed: u64,
}

impl GridWorld {
    /// Validate and build a world. `cells` is row-major, `width * height` long.
    pub fn new(
        width: usize,
        height: usize,
        cells: Vec<Terrain>,
        start: Coord,
        max_steps: usize,
        discount: f64,
        seed: u64,
    ) -> Result<Self, WorldError> {
        if width == 0 || height == 0 {
            return Err(WorldError::EmptyMap);
        }
        if cells.len() != width * height {
            return Err(WorldError::CellCount {
                found: cells.len(),
                expected: width * height,
            });
        }
        if start.x >= width || start.y >= height {
            return Err(WorldError::OutOfBounds {
                x: start.x,
                y: start.y,
                width,
                height,
            });
        }
        if max_steps == 0 {
            return Err(WorldError::InvalidMaxSteps);
        }
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(WorldError::InvalidDiscount(discount));
        }
        for y in 0..height {
            for x in 0..width {
                let border = x == 0 || y == 0 || x + 1 == width || y + 1 == height;
                if border && cells[y * width + x] != Terrain::Wall {
                    return Err(WorldError::OpenBorder { x, y });
                }
            }
        }
        let mut goals = cells.iter().enumerate().filter(|(_, t)| **t == Terrain::Goal);
        let goal = match (goals.next(), goals.next()) {
            (None, _) => return Err(WorldError::MissingGoal),
            (Some(_), Some(_)) => return Err(WorldError::MultipleGoals),
            (Some((i, _)), None) => Coord::new(i % width, i / width),
        };
        if cells[start.y * width + start.x] != Terrain::Empty {
            return Err(WorldError::StartNotEmpty);
        }
        let world = Self {
            width,
            height,
            cells,
            start,
            goal,
            max_steps,
            discount,
            seed,
        };
        if world.shortest_safe_path().is_none() {
            return Err(WorldError::Unsolvable);
        }
        Ok(world)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> Coord {
        self.start
    }

    pub fn goal(&self) -> Coord {
        self.goal
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cells(&self) -> &[Terrain] {
        &self.cells
    }

    pub fn terrain(&self, c: Coord) -> Terrain {
        if c.x >= self.width || c.y >= self.height {
            return Terrain::Wall;
        }
        self.cells[c.y * self.width + c.x]
    }

    /// Copy of this world with a different step budget and discount.
    pub fn with_params(&self, max_steps: usize, discount: f64) -> Result<Self, WorldError> {
        Self::new(
            self.width,
            self.height,
            self.cells.clone(),
            self.start,
            max_steps,
            discount,
            self.seed,
        )
    }

    pub fn initial_state(&self) -> State {
        State::new(self.start, 0)
    }

    /// Positions the agent can legally occupy (anything that is not a wall).
    pub fn open_cells(&self) -> impl Iterator<Item = Coord> + '_ {
        (0..self.height)
            .flat_map(move |y| (0..self.width).map(move |x| Coord::new(x, y)))
            .filter(move |c| self.terrain(*c) != Terrain::Wall)
    }

    pub fn is_valid(&self, state: &State) -> bool {
        self.terrain(state.position) != Terrain::Wall && state.steps_taken <= self.max_steps
    }

    pub fn is_terminal(&self, state: &State) -> bool {
        matches!(self.terrain(state.position), Terrain::Lava | Terrain::Goal) || state.steps_taken >= self.max_steps
    }

    /// Position reached by taking `action` from `from`, ignoring step budget.
    pub fn next_position(&self, from: Coord, action: Action) -> Coord {
        let target = action.apply(from);
        if self.terrain(target) == Terrain::Wall {
            from
        } else {
            target
        }
    }

    pub fn goal_reward(&self, steps_taken: usize) -> f64 {
        1.0 - 0.9 * (steps_taken as f64 / self.max_steps as f64)
    }

    pub fn step(&self, state: &State, action: Action) -> Result<Transition, WorldError> {
        let Coord { x, y } = state.position;
        if self.terrain(state.position) == Terrain::Wall {
            return Err(WorldError::InvalidState { x, y });
        }
        if self.is_terminal(state) {
            return Err(WorldError::TerminalState {
                x,
                y,
                steps: state.steps_taken,
            });
        }
        let next = State::new(self.next_position(state.position, action), state.steps_taken + 1);
        let outcome = match self.terrain(next.position) {
            Terrain::Goal => Some(Outcome {
                terminal_reason: TerminalReason::GoalReached,
                final_reward: self.goal_reward(next.steps_taken),
            }),
            Terrain::Lava => Some(Outcome {
                terminal_reason: TerminalReason::LavaDeath,
                final_reward: 0.0,
            }),
            _ if next.steps_taken >= self.max_steps => Some(Outcome {
                terminal_reason: TerminalReason::Timeout,
                final_reward: 0.0,
            }),
            _ => None,
        };
        Ok(Transition {
            state: next,
            reward: outcome.map_or(0.0, |o| o.final_reward),
            done: outcome.is_some(),
            outcome,
        })
    }

    /// BFS distance (in moves) from every open cell to the goal, moving only
    /// through empty cells. Lava and wall cells get `None`.
    pub fn safe_distances_to_goal(&self) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.width * self.height];
        let idx = |c: Coord| c.y * self.width + c.x;
        dist[idx(self.goal)] = Some(0);
        let mut queue = VecDeque::from([self.goal]);
        while let Some(c) = queue.pop_front() {
            let d = dist[idx(c)].unwrap_or(0);
            for a in Action::ALL {
                let n = a.apply(c);
                if self.terrain(n) == Terrain::Empty && dist[idx(n)].is_none() {
                    dist[idx(n)] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// Length in moves of the shortest start-to-goal path avoiding lava.
    pub fn shortest_safe_path(&self) -> Option<usize> {
        self.safe_distances_to_goal()[self.start.y * self.width + self.start.x]
    }

    pub fn is_solvable(&self) -> bool {
        self.shortest_safe_path().is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_world(max_steps: usize) -> GridWorld {
        parse_map(&format!(
            "#######\n#S....#\n#.....#\n#..L..#\n#....G#\n#######\n@ max_steps={max_steps} discount=1 seed=0\n"
        ))
        .unwrap()
    }

    #[test]
    fn goal_reward_uses_post_step_count() {
        let w = open_world(100);
        let s = State::new(Coord::new(4, 4), 4);
        let t = w.step(&s, Action::East).unwrap();
        assert!(t.done);
        assert_eq!(t.outcome.unwrap().label(), Label::Pass);
        assert_eq!(t.state.steps_taken, 5);
        assert!((t.reward - 0.955).abs() < 1e-15);
        assert_eq!(t.reward, 1.0 - 0.9 * 5.0 / 100.0);
    }

    #[test]
    fn wall_bump_consumes_a_step() {
        let w = open_world(100);
        let s = State::new(Coord::new(1, 1), 3);
        let t = w.step(&s, Action::North).unwrap();
        assert_eq!(t.state, State::new(Coord::new(1, 1), 4));
        assert_eq!(t.reward, 0.0);
        assert!(!t.done);
        assert!(t.outcome.is_none());
    }

    #[test]
    fn lava_kills() {
        let w = open_world(100);
        let t = w.step(&State::new(Coord::new(2, 3), 0), Action::East).unwrap();
        assert!(t.done);
        let o = t.outcome.unwrap();
        assert_eq!(o.terminal_reason, TerminalReason::LavaDeath);
        assert_eq!(o.label(), Label::Fail);
        assert_eq!(t.reward, 0.0);
    }

    #[test]
    fn timeout_at_budget() {
        let w = open_world(3);
        let t = w.step(&State::new(Coord::new(1, 1), 2), Action::South).unwrap();
        assert!(t.done);
        assert_eq!(t.outcome.unwrap().terminal_reason, TerminalReason::Timeout);
        assert_eq!(t.reward, 0.0);
    }

    #[test]
    fn goal_on_last_step_still_passes() {
        let w = open_world(5);
        let t = w.step(&State::new(Coord::new(5, 3), 4), Action::South).unwrap();
        let o = t.outcome.unwrap();
        assert_eq!(o.label(), Label::Pass);
        assert!((o.final_reward - 0.1).abs() < 1e-15);
    }

    #[test]
    fn stepping_terminal_state_is_an_error() {
        let w = open_world(10);
        let on_lava = State::new(Coord::new(3, 3), 1);
        assert!(matches!(
            w.step(&on_lava, Action::North),
            Err(WorldError::TerminalState { .. })
        ));
        let out_of_time = State::new(Coord::new(1, 1), 10);
        assert!(matches!(
            w.step(&out_of_time, Action::East),
            Err(WorldError::TerminalState { .. })
        ));
        let in_wall = State::new(Coord::new(0, 0), 0);
        assert!(matches!(
            w.step(&in_wall, Action::East),
            Err(WorldError::InvalidState { .. })
        ));
    }

    #[test]
    fn step_is_deterministic() {
        let w = open_world(50);
        let s = State::new(Coord::new(2, 2), 7);
        for a in Action::ALL {
            assert_eq!(w.step(&s, a).unwrap(), w.step(&s, a).unwrap());
        }
    }

    #[test]
    fn bfs_distances() {
        let w = open_world(50);
        assert_eq!(w.shortest_safe_path(), Some(7));
        let d = w.safe_distances_to_goal();
        assert_eq!(d[3 * w.width() + 3], None);
    }

    #[test]
    fn constructor_rejects_bad_params() {
        let w = open_world(10);
        assert_eq!(w.with_params(0, 0.9), Err(WorldError::InvalidMaxSteps));
        assert_eq!(w.with_params(10, 0.0), Err(WorldError::InvalidDiscount(0.0)));
        assert_eq!(w.with_params(10, 1.5), Err(WorldError::InvalidDiscount(1.5)));
        assert!(w.with_params(10, 1.0).is_ok());
    }

    #[test]
    fn action_parsing() {
        assert_eq!("w".parse::<Action>(), Ok(Action::West));
        assert!("NE".parse::<Action>().is_err());
        for a in Action::ALL {
            assert_eq!(Action::from_index(a.index()), Some(a));
        }
    }
}
