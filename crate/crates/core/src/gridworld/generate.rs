use rand::Rng;

use super::{Coord, GridWorld, Terrain, WorldError};
use crate::seed;

const MIN_SIZE: usize = 5;
const MAX_ATTEMPTS: usize = 2000;
const BASE_DENSITY: f64 = 0.10;
const DENSITY_STEP: f64 = 0.02;
const MAX_DENSITY: f64 = 0.40;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub size: usize,
    /// Defaults to `4 * size * size` when unset.
    pub max_steps: Option<usize>,
    pub discount: f64,
}

impl GeneratorConfig {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            max_steps: None,
            discount: 0.99,
        }
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps.unwrap_or(4 * self.size * self.size)
    }
}

/// `count` distinct, solvable `size x size` lava worlds.
pub fn generate_batch(count: usize, size: usize, gen_seed: u64) -> Result<Vec<GridWorld>, WorldError> {
    generate_batch_with(count, &GeneratorConfig::new(size), gen_seed)
}

/// Each world `i` is drawn from its own stream seeded with
/// `derive(gen_seed, [i])`; that seed is recorded on the world. A candidate
/// is accepted when the goal is reachable without touching lava and the
/// shortest such path is strictly longer than the start-goal Manhattan
/// distance, i.e. lava blocks every direct route. Lava density ramps up
/// after each rejected candidate.
pub fn generate_batch_with(
    count: usize,
    config: &GeneratorConfig,
    gen_seed: u64,
) -> Result<Vec<GridWorld>, WorldError> {
    if count == 0 {
        return Err(WorldError::ZeroCount);
    }
    if config.size < MIN_SIZE {
        return Err(WorldError::SizeTooSmall(config.size));
    }
    let mut worlds: Vec<GridWorld> = Vec::with_capacity(count);
    for index in 0..count {
        let world_seed = seed::derive(gen_seed, &[index as u64]);
        let world = generate_one(config, world_seed, &worlds).ok_or(WorldError::GenerationFailed {
            index,
            attempts: MAX_ATTEMPTS,
        })?;
        worlds.push(world);
    }
    Ok(worlds)
}

fn generate_one(config: &GeneratorConfig, world_seed: u64, existing: &[GridWorld]) -> Option<GridWorld> {
    let size = config.size;
    let inner = size - 2;
    let min_separation = (inner - 1).max(2);
    let mut rng = seed::stream(world_seed);
    let mut density = BASE_DENSITY;

    for _ in 0..MAX_ATTEMPTS {
        let start = Coord::new(rng.random_range(1..=inner), rng.random_range(1..=inner));
        let goal = Coord::new(rng.random_range(1..=inner), rng.random_range(1..=inner));
        if start.manhattan(goal) < min_separation {
            continue;
        }
        let mut cells = vec![Terrain::Wall; size * size];
        for y in 1..=inner {
            for x in 1..=inner {
                let c = Coord::new(x, y);
                let lava = c != start && c != goal && rng.random_bool(density);
                cells[y * size + x] = if lava { Terrain::Lava } else { Terrain::Empty };
            }
        }
        cells[goal.y * size + goal.x] = Terrain::Goal;

        let candidate = GridWorld::new(
            size,
            size,
            cells,
            start,
            config.max_steps(),
            config.discount,
            world_seed,
        );
        let accepted = match &candidate {
            Ok(w) => {
                w.shortest_safe_path().is_some_and(|d| d > start.manhattan(goal))
                    && !existing
                        .iter()
                        .any(|e| e.cells() == w.cells() && e.start() == w.start())
            }
            Err(_) => false,
        };
        if accepted {
            return candidate.ok();
        }
        density = if density + DENSITY_STEP > MAX_DENSITY {
            BASE_DENSITY
        } else {
            density + DENSITY_STEP
        };
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_and_empty() {
        assert_eq!(generate_batch(2, 4, 3), Err(WorldError::SizeTooSmall(4)));
        assert_eq!(generate_batch(0, 9, 3), Err(WorldError::ZeroCount));
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate_batch(1, 5, 1).unwrap(), generate_batch(1, 5, 1).unwrap());
        assert_ne!(generate_batch(1, 9, 1).unwrap(), generate_batch(1, 9, 2).unwrap());
    }

    #[test]
    fn default_step_budget() {
        let w = &generate_batch(1, 7, 5).unwrap()[0];
        assert_eq!(w.max_steps(), 4 * 49);
        assert_eq!(w.discount(), 0.99);
    }
}
