//! Pruned-policy recovery curves: how much of the original policy's reward
//! comes back as more top-ranked states keep their original action.

mod batch;
mod render;

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

pub use batch::{batch_experiment, world_id, ExperimentConfig, ExperimentReport, WorldFailure, WorldSeeds};
pub use render::{render_chart_svg, render_trace_svg, render_trace_text};

use crate::csvio::{self, fmt_f64, parse_field, FormatError};
use crate::gridworld::GridWorld;
use crate::policy::{prune, Policy, PolicyError};
use crate::ranking::{Method, Ranking};
use crate::rollout::{run_episode, Trajectory};
use crate::seed;
use crate::stats::{self, Summary};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("invalid r grid: {0}")]
    InvalidGrid(String),
    #[error("episode count must be at least 1")]
    NoEpisodes,
    #[error("base policy has zero mean reward on {0}; the reward fraction is undefined")]
    ZeroBaseReward(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("malformed curve file: {0}")]
    Format(#[from] FormatError),
    #[error("r grid of {culprit} differs from {reference}; refusing to interpolate")]
    GridMismatch { culprit: String, reference: String },
    #[error("no curves to aggregate")]
    NoCurves,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub r: f64,
    /// Mean pruned return over mean original return, clipped below at 0.
    pub reward_fraction: f64,
    /// Share of executed steps whose action came from the base policy.
    pub original_step_fraction: f64,
    pub std_error: f64,
    pub n_episodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryCurve {
    pub points: Vec<CurvePoint>,
    pub method: Method,
    pub world_id: String,
    pub eval_seed: u64,
}

impl RecoveryCurve {
    pub fn rs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.r).collect()
    }

    pub fn reward_fractions(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.reward_fraction).collect()
    }

    /// Trapezoidal area under reward fraction over r.
    pub fn auc(&self) -> f64 {
        stats::trapezoid(&self.rs(), &self.reward_fractions())
    }

    pub fn spearman(&self) -> Option<f64> {
        stats::spearman(&self.rs(), &self.reward_fractions())
    }
}

pub const CURVE_HEADER: [&str; 7] = [
    "method",
    "world_id",
    "r",
    "reward_fraction",
    "original_step_fraction",
    "std_error",
    "n_episodes",
];

pub fn curves_to_csv(curves: &[RecoveryCurve]) -> String {
    let mut seeds: Vec<u64> = curves.iter().map(|c| c.eval_seed).collect();
    seeds.dedup();
    let meta = match seeds.as_slice() {
        [single] => vec![("eval_seed".to_string(), single.to_string())],
        _ => Vec::new(),
    };
    csvio::write_doc(
        &meta,
        &CURVE_HEADER,
        curves.iter().flat_map(|c| {
            c.points.iter().map(move |p| {
                vec![
                    c.method.name().to_string(),
                    c.world_id.clone(),
                    fmt_f64(p.r),
                    fmt_f64(p.reward_fraction),
                    fmt_f64(p.original_step_fraction),
                    fmt_f64(p.std_error),
                    p.n_episodes.to_string(),
                ]
            })
        }),
    )
}

/// Parses a curve file; rows are grouped into curves by (method, world_id)
/// in order of first appearance.
pub fn curves_from_csv(text: &str) -> Result<Vec<RecoveryCurve>, EvalError> {
    let doc = csvio::read_doc(text)?;
    doc.expect_header(&CURVE_HEADER)?;
    let eval_seed = match doc.meta("eval_seed") {
        Some(s) => parse_field(s, "eval_seed", 0)?,
        None => 0,
    };
    let mut curves: Vec<RecoveryCurve> = Vec::new();
    for (i, row) in doc.rows.iter().enumerate() {
        let line = i + 1;
        let method: Method = row[0]
            .parse()
            .map_err(|e: crate::ranking::RankingError| FormatError::new(e.to_string()))?;
        let point = CurvePoint {
            r: parse_field(&row[2], "r", line)?,
            reward_fraction: parse_field(&row[3], "reward_fraction", line)?,
            original_step_fraction: parse_field(&row[4], "original_step_fraction", line)?,
            std_error: parse_field(&row[5], "std_error", line)?,
            n_episodes: parse_field(&row[6], "n_episodes", line)?,
        };
        match curves.iter_mut().find(|c| c.method == method && c.world_id == row[1]) {
            Some(c) => c.points.push(point),
            None => curves.push(RecoveryCurve {
                points: vec![point],
                method,
                world_id: row[1].clone(),
                eval_seed,
            }),
        }
    }
    for c in &curves {
        check_grid(&c.rs()).map_err(|e| FormatError::new(format!("curve {}/{}: {e}", c.method, c.world_id)))?;
    }
    Ok(curves)
}

/// Default grid `0, 0.05, ..., 1`.
pub fn default_r_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

pub fn check_grid(r_grid: &[f64]) -> Result<(), EvalError> {
    if r_grid.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(EvalError::InvalidGrid("values must lie in [0, 1]".into()));
    }
    if r_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::InvalidGrid("values must be strictly increasing".into()));
    }
    if r_grid.first() != Some(&0.0) || r_grid.last() != Some(&1.0) {
        return Err(EvalError::InvalidGrid("grid must contain both 0 and 1".into()));
    }
    Ok(())
}

/// Sorts, deduplicates and adds the 0 and 1 endpoints if missing.
pub fn with_endpoints(mut r_grid: Vec<f64>) -> Vec<f64> {
    r_grid.push(0.0);
    r_grid.push(1.0);
    r_grid.sort_by(f64::total_cmp);
    r_grid.dedup();
    r_grid
}

/// Seed of episode `index` for one evaluation arm (a ranking method name or
/// `"base"`) at fraction `r` of world `world_id`.
pub fn eval_episode_seed(eval_seed: u64, world_id: &str, arm: &str, r: f64, index: usize) -> u64 {
    seed::derive(
        eval_seed,
        &[seed::tag(world_id), seed::tag(arm), r.to_bits(), index as u64],
    )
}

fn returns_of(world: &GridWorld, trajectories: &[Trajectory]) -> Vec<f64> {
    trajectories
        .iter()
        .map(|t| t.discounted_return(world.discount()))
        .collect()
}

/// Runs π^r for every r in `r_grid` (which must be strictly increasing and
/// contain 0 and 1) and compares its mean discounted return against the base
/// policy's.
pub fn evaluate_curve(
    world: &GridWorld,
    world_id: &str,
    base: Arc<dyn Policy>,
    ranking: &Ranking,
    r_grid: &[f64],
    n_episodes: usize,
    eval_seed: u64,
) -> Result<RecoveryCurve, EvalError> {
    check_grid(r_grid)?;
    if n_episodes == 0 {
        return Err(EvalError::NoEpisodes);
    }
    let method = ranking.method();
    let base_runs: Vec<Trajectory> = (0..n_episodes)
        .into_par_iter()
        .map(|i| {
            run_episode(
                world,
                base.as_ref(),
                eval_episode_seed(eval_seed, world_id, "base", 1.0, i),
            )
        })
        .collect();
    let base_mean = Summary::of(&returns_of(world, &base_runs)).mean;
    if !(base_mean > 0.0) {
        return Err(EvalError::ZeroBaseReward(world_id.to_string()));
    }

    let pruned = r_grid
        .iter()
        .map(|&r| prune(Arc::clone(&base), ranking, r).map(|p| (r, p)))
        .collect::<Result<Vec<_>, _>>()?;
    let points = pruned
        .par_iter()
        .map(|(r, policy)| {
            let runs: Vec<Trajectory> = (0..n_episodes)
                .into_par_iter()
                .map(|i| {
                    run_episode(
                        world,
                        policy,
                        eval_episode_seed(eval_seed, world_id, method.name(), *r, i),
                    )
                })
                .collect();
            let summary = Summary::of(&returns_of(world, &runs));
            let total_steps: usize = runs.iter().map(Trajectory::len).sum();
            let original_steps: usize = runs.iter().map(Trajectory::original_steps).sum();
            CurvePoint {
                r: *r,
                reward_fraction: (summary.mean / base_mean).max(0.0),
                original_step_fraction: original_steps as f64 / total_steps as f64,
                std_error: summary.std_error.unwrap_or(0.0) / base_mean,
                n_episodes,
            }
        })
        .collect();
    Ok(RecoveryCurve {
        points,
        method,
        world_id: world_id.to_string(),
        eval_seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatePoint {
    pub r: f64,
    pub mean_reward_fraction: f64,
    /// Standard error across worlds (0 for a single world).
    pub std_error: f64,
    pub mean_original_step_fraction: f64,
    pub n_worlds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCurve {
    pub method: Method,
    pub points: Vec<AggregatePoint>,
    /// Mean and standard error of the per-world AUCs.
    pub auc: f64,
    pub auc_std_error: f64,
}

impl AggregateCurve {
    pub fn rs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.r).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_reward_fraction).collect()
    }

    pub fn spearman(&self) -> Option<f64> {
        stats::spearman(&self.rs(), &self.means())
    }
}

/// Per-method mean and standard error across worlds at each r. Every curve
/// must share the first curve's r grid; `sources` names each curve's origin
/// for the mismatch error.
pub fn aggregate(curves: &[RecoveryCurve], sources: &[String]) -> Result<Vec<AggregateCurve>, EvalError> {
    let first = curves.first().ok_or(EvalError::NoCurves)?;
    let reference_grid = first.rs();
    let name = |i: usize| sources.get(i).cloned().unwrap_or_else(|| curves[i].world_id.clone());
    for (i, c) in curves.iter().enumerate() {
        if c.rs() != reference_grid {
            return Err(EvalError::GridMismatch {
                culprit: name(i),
                reference: name(0),
            });
        }
    }
    let mut by_method: BTreeMap<Method, Vec<&RecoveryCurve>> = BTreeMap::new();
    for c in curves {
        by_method.entry(c.method).or_default().push(c);
    }
    Ok(by_method
        .into_iter()
        .map(|(method, group)| {
            let points = reference_grid
                .iter()
                .enumerate()
                .map(|(j, &r)| {
                    let fractions: Vec<f64> = group.iter().map(|c| c.points[j].reward_fraction).collect();
                    let steps: Vec<f64> = group.iter().map(|c| c.points[j].original_step_fraction).collect();
                    let s = Summary::of(&fractions);
                    AggregatePoint {
                        r,
                        mean_reward_fraction: s.mean,
                        std_error: s.std_error.unwrap_or(0.0),
                        mean_original_step_fraction: Summary::of(&steps).mean,
                        n_worlds: group.len(),
                    }
                })
                .collect();
            let aucs: Vec<f64> = group.iter().map(|c| c.auc()).collect();
            let s = Summary::of(&aucs);
            AggregateCurve {
                method,
                points,
                auc: s.mean,
                auc_std_error: s.std_error.unwrap_or(0.0),
            }
        })
        .collect())
}

pub fn aggregate_to_csv(aggregates: &[AggregateCurve]) -> String {
    csvio::write_doc(
        &[],
        &[
            "method",
            "r",
            "mean_reward_fraction",
            "std_error",
            "mean_original_step_fraction",
            "n_worlds",
        ],
        aggregates.iter().flat_map(|a| {
            a.points.iter().map(move |p| {
                vec![
                    a.method.name().to_string(),
                    fmt_f64(p.r),
                    fmt_f64(p.mean_reward_fraction),
                    fmt_f64(p.std_error),
                    fmt_f64(p.mean_original_step_fraction),
                    p.n_worlds.to_string(),
                ]
            })
        }),
    )
}

pub fn auc_table_to_csv(aggregates: &[AggregateCurve]) -> String {
    csvio::write_doc(
        &[],
        &["method", "auc", "auc_std_error", "n_worlds"],
        aggregates.iter().map(|a| {
            vec![
                a.method.name().to_string(),
                fmt_f64(a.auc),
                fmt_f64(a.auc_std_error),
                a.points.first().map_or(0, |p| p.n_worlds).to_string(),
            ]
        }),
    )
}
