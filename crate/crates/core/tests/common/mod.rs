//! Independent reference implementations used as test oracles. Nothing here
//! calls the library's simulator; maps are re-parsed from their text form.

#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

/// Hand-authored worlds, none larger than 6x6.
pub const HAND_WORLDS: [(&str, &str); 5] = [
    ("orientation", ORIENTATION_MAP),
    (
        "open-room",
        "######\n#S...#\n#....#\n#..L.#\n#...G#\n######\n@ max_steps=100 discount=0.99 seed=0\n",
    ),
    (
        "lava-bridge",
        "######\n#S.LL#\n#L...#\n#L.L.#\n#...G#\n######\n@ max_steps=100 discount=0.99 seed=0\n",
    ),
    (
        "small-square",
        "#####\n#S.L#\n#...#\n#L.G#\n#####\n@ max_steps=60 discount=0.95 seed=0\n",
    ),
    (
        "wide",
        "######\n#S..L#\n#.L..#\n#...G#\n######\n@ max_steps=80 discount=0.99 seed=0\n",
    ),
];

/// The start is hemmed in by lava on three sides (the critical state); the
/// cell next to the goal has only harmless alternatives (the indifferent
/// state). Lava touches no other open cell.
pub const ORIENTATION_MAP: &str =
    "######\n##L###\n#LSL##\n##.#.#\n#...G#\n######\n@ max_steps=144 discount=0.99 seed=0\n";
pub const CRITICAL: (usize, usize) = (2, 2);
pub const INDIFFERENT: (usize, usize) = (3, 4);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Wall,
    Open,
    Lava,
    Goal,
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Cell>,
    pub start: (usize, usize),
    pub max_steps: usize,
    pub gamma: f64,
}

/// N, E, S, W offsets.
const MOVES: [(i64, i64); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

impl Grid {
    pub fn parse(text: &str) -> Grid {
        let mut rows = Vec::new();
        let (mut max_steps, mut gamma) = (0, 0.0);
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with(';'))
        {
            if let Some(meta) = line.strip_prefix('@') {
                for kv in meta.split_whitespace() {
                    let (k, v) = kv.split_once('=').unwrap();
                    match k {
                        "max_steps" => max_steps = v.parse().unwrap(),
                        "discount" => gamma = v.parse().unwrap(),
                        _ => {}
                    }
                }
            } else {
                rows.push(line);
            }
        }
        let mut start = (0, 0);
        let mut cells = Vec::new();
        for (y, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                cells.push(match ch {
                    '#' => Cell::Wall,
                    'L' => Cell::Lava,
                    'G' => Cell::Goal,
                    'S' => {
                        start = (x, y);
                        Cell::Open
                    }
                    _ => Cell::Open,
                });
            }
        }
        Grid {
            width: rows[0].len(),
            height: rows.len(),
            cells,
            start,
            max_steps,
            gamma,
        }
    }

    pub fn cell(&self, p: (usize, usize)) -> Cell {
        self.cells[p.1 * self.width + p.0]
    }

    pub fn next(&self, p: (usize, usize), action: usize) -> (usize, usize) {
        let (dx, dy) = MOVES[action];
        let q = ((p.0 as i64 + dx) as usize, (p.1 as i64 + dy) as usize);
        if self.cell(q) == Cell::Wall {
            p
        } else {
            q
        }
    }

    pub fn goal_reward(&self, steps: usize) -> f64 {
        1.0 - 0.9 * (steps as f64 / self.max_steps as f64)
    }

    /// Safe (lava-free) BFS distance to the goal from every cell.
    pub fn safe_distances(&self) -> HashMap<(usize, usize), usize> {
        let goal = (0..self.cells.len())
            .find(|&i| self.cells[i] == Cell::Goal)
            .map(|i| (i % self.width, i / self.width))
            .unwrap();
        let mut dist = HashMap::from([(goal, 0)]);
        let mut queue = VecDeque::from([goal]);
        while let Some(p) = queue.pop_front() {
            for a in 0..4 {
                let q = self.next(p, a);
                if q != p && self.cell(q) == Cell::Open && !dist.contains_key(&q) {
                    dist.insert(q, dist[&p] + 1);
                    queue.push_back(q);
                }
            }
        }
        dist
    }
}

/// Deterministic tabular policy as plain data: `x,y -> action index`.
pub struct TablePolicy {
    pub table: HashMap<(usize, usize), usize>,
    pub default: usize,
}

impl TablePolicy {
    pub fn from_rows(rows: impl IntoIterator<Item = ((usize, usize), char)>, default: char) -> Self {
        let idx = |c: char| "NESW".find(c).unwrap();
        TablePolicy {
            table: rows.into_iter().map(|(p, c)| (p, idx(c))).collect(),
            default: idx(default),
        }
    }

    pub fn action(&self, p: (usize, usize)) -> usize {
        self.table.get(&p).copied().unwrap_or(self.default)
    }
}

/// Discounted return of the deterministic episode, with the action at step
/// `forced.0` replaced by `forced.1`. Also returns the visited positions.
pub fn replay(grid: &Grid, policy: &TablePolicy, forced: Option<(usize, usize)>) -> (f64, Vec<(usize, usize)>) {
    let mut pos = grid.start;
    let mut factor = 1.0;
    let mut visited = Vec::new();
    for step in 0..grid.max_steps {
        visited.push(pos);
        let action = match forced {
            Some((t, a)) if t == step => a,
            _ => policy.action(pos),
        };
        let next = grid.next(pos, action);
        let taken = step + 1;
        match grid.cell(next) {
            Cell::Goal => return (factor * grid.goal_reward(taken), visited),
            Cell::Lava => return (0.0, visited),
            _ => {}
        }
        pos = next;
        factor *= grid.gamma;
    }
    (0.0, visited)
}

/// Brute-force causal effect of the decision at the first visit to `target`:
/// factual return minus the mean over the four forced replacements.
pub fn brute_force_effect(grid: &Grid, policy: &TablePolicy, target: (usize, usize)) -> f64 {
    let (factual, visited) = replay(grid, policy, None);
    match visited.iter().position(|&p| p == target) {
        None => 0.0,
        Some(t) => {
            let alternatives: f64 = (0..4).map(|a| replay(grid, policy, Some((t, a))).0).sum();
            factual - alternatives / 4.0
        }
    }
}

/// Exact expected discounted return of the uniform-random policy from the
/// start, by backward induction over (step count, position).
pub fn uniform_random_value(grid: &Grid) -> f64 {
    let n = grid.cells.len();
    let mut next_v = vec![0.0; n];
    for t in (0..grid.max_steps).rev() {
        let mut v = vec![0.0; n];
        for (i, cell) in grid.cells.iter().enumerate() {
            if *cell != Cell::Open {
                continue;
            }
            let p = (i % grid.width, i / grid.width);
            let mut total = 0.0;
            for a in 0..4 {
                let q = grid.next(p, a);
                total += match grid.cell(q) {
                    Cell::Goal => grid.goal_reward(t + 1),
                    Cell::Lava => 0.0,
                    _ if t + 1 == grid.max_steps => 0.0,
                    _ => grid.gamma * next_v[q.1 * grid.width + q.0],
                };
            }
            v[i] = total / 4.0;
        }
        next_v = v;
    }
    next_v[grid.start.1 * grid.width + grid.start.0]
}
