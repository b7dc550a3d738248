//! Python bindings for `polprune`.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use polprune::evaluation::{self, default_r_grid, with_endpoints, ExperimentConfig};
use polprune::gridworld::{self, GridWorld};
use polprune::policy as pol;
use polprune::ranking::{self, Expectation, Method, RankConfig, SpectrumVector};
use polprune::rollout;
use polprune::training::{self, TrainingConfig, TrainingMethod};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A lava gridworld.
#[pyclass(name = "World", module = "polprune_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyWorld {
    inner: GridWorld,
}

#[pymethods]
impl PyWorld {
    /// Parses a map text (`#`, `.`, `L`, `G`, `S` plus an `@ ...` metadata line).
    #[staticmethod]
    fn from_map(text: &str) -> PyResult<Self> {
        gridworld::parse_map(text)
            .map(|inner| Self { inner })
            .map_err(value_error)
    }

    /// Generates `count` distinct solvable worlds of side `size`.
    #[staticmethod]
    fn generate(count: usize, size: usize, seed: u64) -> PyResult<Vec<Self>> {
        gridworld::generate_batch(count, size, seed)
            .map(|ws| ws.into_iter().map(|inner| Self { inner }).collect())
            .map_err(value_error)
    }

    fn to_map(&self) -> String {
        gridworld::render_map(&self.inner)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn start(&self) -> (usize, usize) {
        (self.inner.start().x, self.inner.start().y)
    }

    #[getter]
    fn goal(&self) -> (usize, usize) {
        (self.inner.goal().x, self.inner.goal().y)
    }

    #[getter]
    fn max_steps(&self) -> usize {
        self.inner.max_steps()
    }

    #[getter]
    fn discount(&self) -> f64 {
        self.inner.discount()
    }

    /// Length of the shortest lava-free path from start to goal.
    fn shortest_safe_path(&self) -> Option<usize> {
        self.inner.shortest_safe_path()
    }

    fn __repr__(&self) -> String {
        format!(
            "World({}x{}, max_steps={})",
            self.inner.width(),
            self.inner.height(),
            self.inner.max_steps()
        )
    }
}

/// A policy: trained tabular, uniform random, or pruned.
#[pyclass(name = "Policy", module = "polprune_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPolicy {
    inner: Arc<dyn pol::Policy>,
    tabular: Option<pol::TabularPolicy>,
    kind: &'static str,
}

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    fn uniform_random() -> Self {
        Self {
            inner: Arc::new(pol::uniform_random_policy()),
            tabular: None,
            kind: "uniform-random",
        }
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        let t = pol::TabularPolicy::from_csv(text).map_err(value_error)?;
        Ok(Self::tabular(t))
    }

    fn to_csv(&self) -> PyResult<String> {
        self.tabular
            .as_ref()
            .map(pol::TabularPolicy::to_csv)
            .ok_or_else(|| value_error("only tabular policies serialize"))
    }

    /// Table entries as `(state_key, action)` pairs.
    fn table(&self) -> PyResult<Vec<(String, String)>> {
        let t = self
            .tabular
            .as_ref()
            .ok_or_else(|| value_error("not a tabular policy"))?;
        Ok(t.table().iter().map(|(k, a)| (k.key(), a.to_string())).collect())
    }

    /// Keeps the first ceil(r * n) ranked states; all others act randomly.
    fn prune(&self, ranking: &PyRanking, r: f64) -> PyResult<Self> {
        let p = pol::prune(Arc::clone(&self.inner), &ranking.inner, r).map_err(value_error)?;
        Ok(Self {
            inner: Arc::new(p),
            tabular: None,
            kind: "pruned",
        })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.kind
    }

    fn __repr__(&self) -> String {
        match &self.tabular {
            Some(t) => format!("Policy(tabular, {} states)", t.table().len()),
            None => format!("Policy({})", self.kind),
        }
    }
}

impl PyPolicy {
    fn tabular(t: pol::TabularPolicy) -> Self {
        Self {
            inner: Arc::new(t.clone()),
            tabular: Some(t),
            kind: "tabular",
        }
    }
}

/// An ordered list of scored states.
#[pyclass(name = "Ranking", module = "polprune_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyRanking {
    inner: ranking::Ranking,
}

#[pymethods]
impl PyRanking {
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        ranking::Ranking::from_csv(text)
            .map(|inner| Self { inner })
            .map_err(value_error)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method().name()
    }

    /// `(state_key, score, std_error, visits)` in rank order.
    fn entries(&self) -> Vec<(String, f64, f64, usize)> {
        self.inner
            .ordered()
            .iter()
            .map(|s| (s.state.key(), s.value, s.std_error, s.visits))
            .collect()
    }

    fn metadata(&self) -> Vec<(String, String)> {
        self.inner.metadata().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

fn parse_method(name: &str) -> PyResult<Method> {
    name.parse().map_err(value_error)
}

/// Trains a policy by value iteration (`"vi"`) or Q-learning (`"q"`).
#[pyfunction]
#[pyo3(signature = (world, seed, method = "vi", near_optimal_slack = 0.0, episodes = 2000))]
fn train(world: &PyWorld, seed: u64, method: &str, near_optimal_slack: f64, episodes: usize) -> PyResult<PyPolicy> {
    let config = TrainingConfig {
        method: method.parse::<TrainingMethod>().map_err(value_error)?,
        train_seed: seed,
        near_optimal_slack,
        episodes,
        ..TrainingConfig::default()
    };
    training::train(&world.inner, &config)
        .map(PyPolicy::tabular)
        .map_err(value_error)
}

/// Runs one episode and returns `(outcome, final_reward, steps, discounted_return, random_steps)`.
#[pyfunction]
fn run_episode(world: &PyWorld, policy: &PyPolicy, seed: u64) -> (String, f64, usize, f64, usize) {
    let t = rollout::run_episode(&world.inner, policy.inner.as_ref(), seed);
    (
        t.outcome.terminal_reason.name().to_string(),
        t.outcome.final_reward,
        t.len(),
        t.discounted_return(world.inner.discount()),
        t.len() - t.original_steps(),
    )
}

/// Monte Carlo value of the start state: `(mean, std_error)`.
#[pyfunction]
fn estimate_value(world: &PyWorld, policy: &PyPolicy, n_episodes: usize, seed: u64) -> PyResult<(f64, f64)> {
    rollout::estimate_value(&world.inner, policy.inner.as_ref(), n_episodes, seed)
        .map(|v| (v.mean, v.std_error))
        .map_err(value_error)
}

/// Builds a mutant test suite and ranks the visited states.
#[pyfunction]
#[pyo3(signature = (world, policy, method, seed, suite_episodes = 1000, mutation_rate = 0.1, branches = 4, exact = true, tie_seed = None))]
#[allow(clippy::too_many_arguments)]
fn rank(
    py: Python<'_>,
    world: &PyWorld,
    policy: &PyPolicy,
    method: &str,
    seed: u64,
    suite_episodes: usize,
    mutation_rate: f64,
    branches: usize,
    exact: bool,
    tie_seed: Option<u64>,
) -> PyResult<PyRanking> {
    let config = RankConfig {
        method: parse_method(method)?,
        k_branches: branches,
        expectation: if exact {
            Expectation::Exact
        } else {
            Expectation::Sampled
        },
        branch_seed: polprune::seed::derive(seed, &[polprune::seed::tag("branch")]),
        tie_seed: tie_seed.unwrap_or_else(|| polprune::seed::derive(seed, &[polprune::seed::tag("tie")])),
    };
    let (w, p) = (&world.inner, policy.inner.as_ref());
    py.detach(|| {
        let suite =
            rollout::generate_test_suite(w, p, suite_episodes, mutation_rate, seed).map_err(|e| e.to_string())?;
        ranking::rank_states(w, p, &suite, &config).map_err(|e| e.to_string())
    })
    .map(|inner| PyRanking { inner })
    .map_err(value_error)
}

/// SBFL importance score of a spectrum vector under `measure`.
#[pyfunction]
fn sbfl_score(a_ep: u64, a_ef: u64, a_np: u64, a_nf: u64, measure: &str) -> PyResult<f64> {
    let m = parse_method(measure)?
        .measure()
        .ok_or_else(|| value_error(format!("{measure} is not an SBFL measure")))?;
    let v = SpectrumVector { a_ep, a_ef, a_np, a_nf };
    ranking::sbfl_score(&v, m).map_err(value_error)
}

/// Recovery curve as a list of `(r, reward_fraction, original_step_fraction, std_error)`.
#[pyfunction]
#[pyo3(signature = (world, policy, ranking, seed, r_grid = None, episodes = 100, world_id = "world"))]
fn evaluate_curve(
    py: Python<'_>,
    world: &PyWorld,
    policy: &PyPolicy,
    ranking: &PyRanking,
    seed: u64,
    r_grid: Option<Vec<f64>>,
    episodes: usize,
    world_id: &str,
) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let grid = r_grid.map_or_else(default_r_grid, with_endpoints);
    let base = Arc::clone(&policy.inner);
    py.detach(|| evaluation::evaluate_curve(&world.inner, world_id, base, &ranking.inner, &grid, episodes, seed))
        .map(|c| {
            c.points
                .iter()
                .map(|p| (p.r, p.reward_fraction, p.original_step_fraction, p.std_error))
                .collect()
        })
        .map_err(value_error)
}

/// Runs the full train-rank-evaluate loop on each world and returns, per
/// method, `(aggregate_auc, auc_std_error, per_world_aucs)`.
#[pyfunction]
#[pyo3(signature = (worlds, methods, seed, suite_episodes = 1000, mutation_rate = 0.1, eval_episodes = 100))]
fn batch_experiment(
    py: Python<'_>,
    worlds: Vec<PyWorld>,
    methods: Vec<String>,
    seed: u64,
    suite_episodes: usize,
    mutation_rate: f64,
    eval_episodes: usize,
) -> PyResult<Vec<(String, f64, f64, Vec<f64>)>> {
    let methods = methods.iter().map(|m| parse_method(m)).collect::<PyResult<Vec<_>>>()?;
    let worlds: Vec<GridWorld> = worlds.into_iter().map(|w| w.inner).collect();
    let config = ExperimentConfig {
        seed,
        suite_episodes,
        mutation_rate,
        eval_episodes,
        ..ExperimentConfig::default()
    };
    let report = py
        .detach(|| evaluation::batch_experiment(&worlds, &methods, &config))
        .map_err(value_error)?;
    if let Some(f) = report.failures.first() {
        return Err(value_error(format!("{}: {}", f.world_id, f.message)));
    }
    Ok(report
        .aggregates
        .iter()
        .map(|a| {
            let per_world = report
                .curves
                .iter()
                .filter(|c| c.method == a.method)
                .map(|c| c.auc())
                .collect();
            (a.method.name().to_string(), a.auc, a.auc_std_error, per_world)
        })
        .collect())
}

#[pymodule]
fn polprune_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWorld>()?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyRanking>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_value, m)?)?;
    m.add_function(wrap_pyfunction!(rank, m)?)?;
    m.add_function(wrap_pyfunction!(sbfl_score, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_curve, m)?)?;
    m.add_function(wrap_pyfunction!(batch_experiment, m)?)?;
    Ok(())
}
