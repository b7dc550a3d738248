//! Command-line front end.
//!
//! Every parameter resolves from its flag, then from a flat `key=value`
//! config file (`<command>.<key>` beats a bare `<key>`), then from the
//! built-in default. Each run appends one JSON line to a manifest, and every
//! artifact it writes carries the run's config digest, which covers the
//! resolved parameters and the contents of the input files but not file
//! paths or the thread count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::evaluation::{
    aggregate, aggregate_to_csv, auc_table_to_csv, curves_from_csv, curves_to_csv, default_r_grid, eval_episode_seed,
    evaluate_curve, render_chart_svg, render_trace_svg, render_trace_text, with_endpoints, world_id,
};
use crate::gridworld::{generate_batch_with, parse_map, render_map, GeneratorConfig, GridWorld};
use crate::policy::{prune, Policy, TabularPolicy};
use crate::ranking::{rank_states, Expectation, Method, RankConfig, Ranking};
use crate::rollout::{generate_test_suite, run_episode, TestSuite};
use crate::seed;
use crate::training::{train, TrainingConfig, TrainingMethod};

pub const JOBS_ENV: &str = "POLPRUNE_JOBS";
const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Failed(String),
}

fn failed(context: impl Display, e: impl Display) -> CliError {
    CliError::Failed(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(
    name = "polprune",
    version,
    about = "Rank, prune and evaluate RL policy decisions on lava gridworlds"
)]
pub struct Cli {
    /// Flat key=value config file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (falls back to the config file, then POLPRUNE_JOBS).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Run manifest to append to (default: manifest.jsonl beside the outputs).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a batch of solvable lava worlds as map files.
    GenEnvs(GenEnvsArgs),
    /// Train a tabular policy on one world.
    Train(TrainArgs),
    /// Build a test suite and rank the policy's states.
    Rank(RankArgs),
    /// Evaluate pruned policies over a grid of kept fractions.
    PruneEval(PruneEvalArgs),
    /// Aggregate curve files into a report table and chart.
    Report(ReportArgs),
    /// Render one episode as text or SVG.
    Trace(TraceArgs),
}

#[derive(Debug, Args)]
pub struct GenEnvsArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(5..))]
    pub size: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub discount: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// value-iteration (vi) or q-learning (q).
    #[arg(long)]
    pub method: Option<TrainingMethod>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub planning_discount: Option<f64>,
    #[arg(long)]
    pub near_optimal_slack: Option<f64>,
    /// Output policy CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// causal, ochiai, tarantula, zoltar, wong2 or random.
    #[arg(long)]
    pub method: Option<Method>,
    /// Seeds the test suite; branch and tie seeds derive from it unless given.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub suite_episodes: Option<usize>,
    #[arg(long)]
    pub mutation_rate: Option<f64>,
    #[arg(long)]
    pub branches: Option<usize>,
    /// exact (default) or sampled.
    #[arg(long)]
    pub expectation: Option<String>,
    /// Shorthand for `--expectation exact`.
    #[arg(long, conflicts_with = "expectation")]
    pub exact_expectation: bool,
    #[arg(long)]
    pub branch_seed: Option<u64>,
    #[arg(long)]
    pub tie_seed: Option<u64>,
    /// Write the generated suite as a replayable record file.
    #[arg(long)]
    pub suite_out: Option<PathBuf>,
    /// Replay a recorded suite instead of generating one.
    #[arg(long)]
    pub suite_in: Option<PathBuf>,
    /// Output ranking CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PruneEvalArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long)]
    pub ranking: Option<PathBuf>,
    /// Evaluation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated kept fractions; 0 and 1 are added when missing.
    #[arg(long)]
    pub r_grid: Option<String>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Defaults to the env file name without extension.
    #[arg(long)]
    pub world_id: Option<String>,
    /// Directory for one trace SVG per r value.
    #[arg(long)]
    pub traces: Option<PathBuf>,
    /// Output curve CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Curve CSV files.
    #[arg(long, num_args = 1..)]
    pub curves: Vec<PathBuf>,
    /// Output directory for aggregate.csv, auc.csv and chart.svg.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Prune the policy with this ranking first.
    #[arg(long)]
    pub ranking: Option<PathBuf>,
    /// Kept fraction when a ranking is given.
    #[arg(long)]
    pub r: Option<f64>,
    /// Episode seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; `.svg` renders SVG, anything else text.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parsed flat config file.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl ConfigFile {
    /// Blank lines and lines starting with `#` are ignored; keys may use
    /// `_` or `-`.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value, got {line:?}", i + 1)))?;
            let key = normalize_key(k);
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!("config line {}: duplicate key {key:?}", i + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.values
            .get(&format!("{section}.{key}"))
            .or_else(|| self.values.get(key))
            .map(String::as_str)
    }
}

/// Resolves one command's parameters and records them.
struct Params<'a> {
    section: &'static str,
    config: &'a ConfigFile,
    /// Parameters that shape the outputs; hashed into the config digest.
    values: BTreeMap<String, String>,
    /// File locations; recorded in the manifest only.
    paths: BTreeMap<String, String>,
}

impl<'a> Params<'a> {
    fn new(section: &'static str, config: &'a ConfigFile) -> Self {
        Self {
            section,
            config,
            values: BTreeMap::new(),
            paths: BTreeMap::new(),
        }
    }

    fn lookup<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.config.get(self.section, key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key {key:?}: invalid value {raw:?}: {e}"))),
        }
    }

    fn opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = self.lookup(key, flag)?;
        if let Some(v) = &value {
            self.values.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    fn or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = self.lookup(key, flag)?.unwrap_or(default);
        self.values.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    fn req<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.opt(key, flag)?.ok_or_else(|| missing(key))
    }

    fn path_opt(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>, CliError> {
        let value = self.lookup(key, flag)?;
        if let Some(p) = &value {
            self.paths.insert(key.to_string(), p.display().to_string());
        }
        Ok(value)
    }

    fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        self.path_opt(key, flag)?.ok_or_else(|| missing(key))
    }
}

fn missing(key: &str) -> CliError {
    CliError::Usage(format!("missing --{key} (flag or config key `{key}`)"))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn unix_millis() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

#[derive(Debug, Serialize)]
struct ManifestRecord<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_digest: &'a str,
    params: &'a BTreeMap<String, String>,
    paths: &'a BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    jobs: usize,
    started_unix_ms: u128,
    finished_unix_ms: u128,
}

/// Bookkeeping for one command run: inputs read, outputs written, manifest.
struct Run<'a> {
    command: &'static str,
    params: Params<'a>,
    /// (role, path, sha256) in read order.
    inputs: Vec<(String, PathBuf, String)>,
    outputs: Vec<(PathBuf, String)>,
    started: u128,
}

impl<'a> Run<'a> {
    fn new(command: &'static str, config: &'a ConfigFile) -> Self {
        Self {
            command,
            params: Params::new(command, config),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: unix_millis(),
        }
    }

    fn read(&mut self, role: &str, path: &Path) -> Result<String, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.inputs
            .push((role.to_string(), path.to_path_buf(), sha256_hex(text.as_bytes())));
        Ok(text)
    }

    /// Digest of the command name, the resolved parameters and the input
    /// contents by role.
    fn digest(&self) -> String {
        let mut canon = format!("command={}\n", self.command);
        for (k, v) in &self.params.values {
            canon.push_str(&format!("{k}={v}\n"));
        }
        for (role, _, sha) in &self.inputs {
            canon.push_str(&format!("input.{role}={sha}\n"));
        }
        sha256_hex(canon.as_bytes())
    }

    fn write(&mut self, path: &Path, contents: &str) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|source| CliError::Io {
                path: dir.display().to_string(),
                source,
            })?;
        }
        fs::write(path, contents).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.outputs.push((path.to_path_buf(), sha256_hex(contents.as_bytes())));
        println!("wrote {}", path.display());
        Ok(())
    }

    fn finish(self, manifest: &Path, jobs: usize) -> Result<(), CliError> {
        let digest = self.digest();
        let record = ManifestRecord {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config_digest: &digest,
            params: &self.params.values,
            paths: &self.params.paths,
            inputs: self
                .inputs
                .iter()
                .map(|(_, p, sha)| (p.display().to_string(), sha.clone()))
                .collect(),
            outputs: self
                .outputs
                .iter()
                .map(|(p, sha)| (p.display().to_string(), sha.clone()))
                .collect(),
            jobs,
            started_unix_ms: self.started,
            finished_unix_ms: unix_millis(),
        };
        let line = serde_json::to_string(&record).map_err(|e| failed("manifest", e))?;
        if let Some(dir) = manifest.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|source| CliError::Io {
                path: dir.display().to_string(),
                source,
            })?;
        }
        use std::io::Write as _;
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(manifest)
            .map_err(|source| CliError::Io {
                path: manifest.display().to_string(),
                source,
            })?;
        writeln!(file, "{line}").map_err(|source| CliError::Io {
            path: manifest.display().to_string(),
            source,
        })
    }
}

fn stamp_csv(digest: &str, csv: &str) -> String {
    format!("# config_digest={digest}\n{csv}")
}

fn stamp_svg(digest: &str, svg: &str) -> String {
    match svg.split_once('\n') {
        Some((open, rest)) => format!("{open}\n<!-- config_digest={digest} -->\n{rest}"),
        None => svg.to_string(),
    }
}

fn load_world(run: &mut Run, path: &Path) -> Result<GridWorld, CliError> {
    let text = run.read("env", path)?;
    parse_map(&text).map_err(|e| failed(path.display(), e))
}

fn load_policy(run: &mut Run, path: &Path, world: &GridWorld) -> Result<TabularPolicy, CliError> {
    let text = run.read("policy", path)?;
    let policy = TabularPolicy::from_csv(&text).map_err(|e| failed(path.display(), e))?;
    policy.check_world(world).map_err(|e| failed(path.display(), e))?;
    Ok(policy)
}

fn load_ranking(run: &mut Run, path: &Path) -> Result<Ranking, CliError> {
    let text = run.read("ranking", path)?;
    Ranking::from_csv(&text).map_err(|e| failed(path.display(), e))
}

fn parse_r_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let values = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| CliError::Usage(format!("r grid value {s:?}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(CliError::Usage("r grid values must lie in [0, 1]".into()));
    }
    Ok(with_endpoints(values))
}

fn format_grid(grid: &[f64]) -> String {
    grid.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(",")
}

fn out_dir_of(path: &Path) -> PathBuf {
    path.parent()
        .filter(|d| !d.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn cmd_gen_envs(args: GenEnvsArgs, run: &mut Run) -> Result<PathBuf, CliError> {
    let p = &mut run.params;
    let count = p.or("count", args.count, 20)?;
    let size = p.or("size", args.size, 9)?;
    let gen_seed = p.req("seed", args.seed)?;
    let max_steps = p.opt("max-steps", args.max_steps)?;
    let discount = p.or("discount", args.discount, 0.99)?;
    let out = p.path("out", args.out)?;
    let config = GeneratorConfig {
        size: size as usize,
        max_steps,
        discount,
    };
    let worlds = generate_batch_with(count as usize, &config, gen_seed).map_err(|e| failed("gen-envs", e))?;
    let digest = run.digest();
    for (i, world) in worlds.iter().enumerate() {
        let text = format!("; config_digest={digest}\n{}", render_map(world));
        run.write(&out.join(format!("{}.map", world_id(i))), &text)?;
    }
    Ok(out)
}

fn cmd_train(args: TrainArgs, run: &mut Run) -> Result<PathBuf, CliError> {
    let defaults = TrainingConfig::default();
    let p = &mut run.params;
    let env = p.path("env", args.env)?;
    let out = p.path("out", args.out)?;
    let config = TrainingConfig {
        method: p.or("method", args.method, defaults.method)?,
        episodes: p.or("episodes", args.episodes, defaults.episodes)?,
        learning_rate: p.or("learning-rate", args.learning_rate, defaults.learning_rate)?,
        planning_discount: p.or("planning-discount", args.planning_discount, defaults.planning_discount)?,
        near_optimal_slack: p.or(
            "near-optimal-slack",
            args.near_optimal_slack,
            defaults.near_optimal_slack,
        )?,
        train_seed: p.req("seed", args.seed)?,
        ..defaults
    };
    let world = load_world(run, &env)?;
    let policy = train(&world, &config).map_err(|e| failed(env.display(), e))?;
    let digest = run.digest();
    run.write(&out, &stamp_csv(&digest, &policy.to_csv()))?;
    Ok(out_dir_of(&out))
}

fn cmd_rank(args: RankArgs, run: &mut Run) -> Result<PathBuf, CliError> {
    let p = &mut run.params;
    let env = p.path("env", args.env)?;
    let policy_path = p.path("policy", args.policy)?;
    let out = p.path("out", args.out)?;
    let suite_out = p.path_opt("suite-out", args.suite_out)?;
    let suite_in = p.path_opt("suite-in", args.suite_in)?;
    let method = p.or("method", args.method, Method::Causal)?;
    let root_seed: u64 = p.req("seed", args.seed)?;
    let exact_flag = args.exact_expectation.then(|| "exact".to_string());
    let expectation = match p
        .or("expectation", args.expectation.or(exact_flag), "exact".to_string())?
        .as_str()
    {
        "exact" => Expectation::Exact,
        "sampled" => Expectation::Sampled,
        other => {
            return Err(CliError::Usage(format!(
                "unknown expectation {other:?} (expected exact or sampled)"
            )))
        }
    };
    let config = RankConfig {
        method,
        k_branches: p.or("branches", args.branches, 4)?,
        expectation,
        branch_seed: p.or(
            "branch-seed",
            args.branch_seed,
            seed::derive(root_seed, &[seed::tag("branch")]),
        )?,
        tie_seed: p.or("tie-seed", args.tie_seed, seed::derive(root_seed, &[seed::tag("tie")]))?,
    };
    let (episodes, rate) = if suite_in.is_none() {
        (
            p.or("suite-episodes", args.suite_episodes, 1000)?,
            p.or("mutation-rate", args.mutation_rate, 0.1)?,
        )
    } else {
        (0, 0.0)
    };

    let world = load_world(run, &env)?;
    let policy = load_policy(run, &policy_path, &world)?;
    let suite = match &suite_in {
        Some(path) => {
            let text = run.read("suite", path)?;
            TestSuite::replay_record_text(&world, &text).map_err(|e| failed(path.display(), e))?
        }
        None => generate_test_suite(&world, &policy, episodes, rate, root_seed).map_err(|e| failed("rank", e))?,
    };
    let ranking = rank_states(&world, &policy, &suite, &config).map_err(|e| failed("rank", e))?;
    let digest = run.digest();
    if let Some(path) = &suite_out {
        run.write(path, &suite.to_record_text())?;
    }
    run.write(&out, &ranking.with_metadata("config_digest", &digest).to_csv())?;
    Ok(out_dir_of(&out))
}

fn cmd_prune_eval(args: PruneEvalArgs, run: &mut Run) -> Result<PathBuf, CliError> {
    let p = &mut run.params;
    let env = p.path("env", args.env)?;
    let policy_path = p.path("policy", args.policy)?;
    let ranking_path = p.path("ranking", args.ranking)?;
    let out = p.path("out", args.out)?;
    let traces = p.path_opt("traces", args.traces)?;
    let eval_seed: u64 = p.req("seed", args.seed)?;
    let grid_text = p.or("r-grid", args.r_grid, format_grid(&default_r_grid()))?;
    let r_grid = parse_r_grid(&grid_text)?;
    let episodes = p.or("episodes", args.episodes, 100)?;
    let default_id = env
        .file_stem()
        .map_or_else(|| "world".to_string(), |s| s.to_string_lossy().into_owned());
    let id = p.or("world-id", args.world_id, default_id)?;

    let world = load_world(run, &env)?;
    let base: Arc<dyn Policy> = Arc::new(load_policy(run, &policy_path, &world)?);
    let ranking = load_ranking(run, &ranking_path)?;
    let curve = evaluate_curve(&world, &id, Arc::clone(&base), &ranking, &r_grid, episodes, eval_seed)
        .map_err(|e| failed("prune-eval", e))?;
    let digest = run.digest();
    run.write(&out, &stamp_csv(&digest, &curves_to_csv(std::slice::from_ref(&curve))))?;
    if let Some(dir) = traces {
        let method = ranking.method().name();
        for &r in &r_grid {
            let pruned = prune(Arc::clone(&base), &ranking, r).map_err(|e| failed("prune-eval", e))?;
            let trajectory = run_episode(&world, &pruned, eval_episode_seed(eval_seed, &id, method, r, 0));
            let svg = render_trace_svg(&world, &trajectory, pruned.kept_states());
            run.write(&dir.join(format!("{id}_{method}_r{r}.svg")), &stamp_svg(&digest, &svg))?;
        }
    }
    Ok(out_dir_of(&out))
}

fn cmd_report(args: ReportArgs, run: &mut Run) -> Result<PathBuf, CliError> {
    let p = &mut run.params;
    let out = p.path("out", args.out)?;
    let files: Vec<PathBuf> = if args.curves.is_empty() {
        p.config
            .get(p.section, "curves")
            .map(|v| v.split_whitespace().map(PathBuf::from).collect())
            .unwrap_or_default()
    } else {
        args.curves
    };
    if files.is_empty() {
        return Err(missing("curves"));
    }
    p.paths.insert(
        "curves".into(),
        files
            .iter()
            .map(|f| f.display().to_string())
            .collect::<Vec<_>>()
            .join(" "),
    );

    let mut curves = Vec::new();
    let mut sources = Vec::new();
    for (i, file) in files.iter().enumerate() {
        let text = run.read(&format!("curves.{i}"), file)?;
        let parsed = curves_from_csv(&text).map_err(|e| failed(file.display(), e))?;
        sources.extend(std::iter::repeat_n(file.display().to_string(), parsed.len()));
        curves.extend(parsed);
    }
    let aggregates = aggregate(&curves, &sources).map_err(|e| failed("report", e))?;
    let digest = run.digest();
    run.write(
        &out.join("aggregate.csv"),
        &stamp_csv(&digest, &aggregate_to_csv(&aggregates)),
    )?;
    run.write(
        &out.join("auc.csv"),
        &stamp_csv(&digest, &auc_table_to_csv(&aggregates)),
    )?;
    run.write(
        &out.join("chart.svg"),
        &stamp_svg(&digest, &render_chart_svg(&aggregates)),
    )?;
    for a in &aggregates {
        println!("{}\tauc={:.4}\tse={:.4}", a.method, a.auc, a.auc_std_error);
    }
    Ok(out)
}

fn cmd_trace(args: TraceArgs, run: &mut Run) -> Result<PathBuf, CliError> {
    let p = &mut run.params;
    let env = p.path("env", args.env)?;
    let policy_path = p.path("policy", args.policy)?;
    let ranking_path = p.path_opt("ranking", args.ranking)?;
    let out = p.path("out", args.out)?;
    let episode_seed: u64 = p.req("seed", args.seed)?;
    let r = if ranking_path.is_some() {
        Some(p.or("r", args.r, 1.0)?)
    } else {
        None
    };

    let world = load_world(run, &env)?;
    let base: Arc<dyn Policy> = Arc::new(load_policy(run, &policy_path, &world)?);
    let (policy, kept): (Arc<dyn Policy>, BTreeSet<_>) = match (&ranking_path, r) {
        (Some(path), Some(r)) => {
            let ranking = load_ranking(run, path)?;
            let pruned = prune(Arc::clone(&base), &ranking, r).map_err(|e| failed("trace", e))?;
            let kept = pruned.kept_states().clone();
            (Arc::new(pruned), kept)
        }
        _ => (base, BTreeSet::new()),
    };
    let trajectory = run_episode(&world, policy.as_ref(), episode_seed);
    let digest = run.digest();
    let body = if out.extension().is_some_and(|e| e == "svg") {
        stamp_svg(&digest, &render_trace_svg(&world, &trajectory, &kept))
    } else {
        format!("; config_digest={digest}\n{}", render_trace_text(&world, &trajectory))
    };
    run.write(&out, &body)?;
    Ok(out_dir_of(&out))
}

fn resolve_jobs(flag: Option<usize>, config: &ConfigFile) -> Result<usize, CliError> {
    if let Some(n) = flag {
        return Ok(n);
    }
    let (source, raw) = match config.get("", "jobs") {
        Some(v) => ("config key jobs", v.to_string()),
        None => match std::env::var(JOBS_ENV) {
            Ok(v) => (JOBS_ENV, v),
            Err(_) => return Ok(0),
        },
    };
    raw.trim()
        .parse()
        .map_err(|e| CliError::Usage(format!("{source}: invalid value {raw:?}: {e}")))
}

/// Runs a parsed command line. `jobs = 0` lets rayon pick the thread count.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => ConfigFile::parse(&fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?)?,
        None => ConfigFile::default(),
    };
    let jobs = resolve_jobs(cli.jobs, &config)?;
    let manifest = cli
        .manifest
        .clone()
        .or_else(|| config.get("", "manifest").map(PathBuf::from));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| failed("thread pool", e))?;

    let name = match &cli.command {
        Command::GenEnvs(_) => "gen-envs",
        Command::Train(_) => "train",
        Command::Rank(_) => "rank",
        Command::PruneEval(_) => "prune-eval",
        Command::Report(_) => "report",
        Command::Trace(_) => "trace",
    };
    let mut run = Run::new(name, &config);
    let out_dir = pool.install(|| match cli.command {
        Command::GenEnvs(a) => cmd_gen_envs(a, &mut run),
        Command::Train(a) => cmd_train(a, &mut run),
        Command::Rank(a) => cmd_rank(a, &mut run),
        Command::PruneEval(a) => cmd_prune_eval(a, &mut run),
        Command::Report(a) => cmd_report(a, &mut run),
        Command::Trace(a) => cmd_trace(a, &mut run),
    })?;
    let manifest = manifest.unwrap_or_else(|| out_dir.join(MANIFEST_FILE));
    run.finish(&manifest, pool.current_num_threads())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_sections_override_bare_keys() {
        let c = ConfigFile::parse("# comment\nseed = 3\nrank.seed=9\nsuite_episodes=50\n").unwrap();
        assert_eq!(c.get("rank", "seed"), Some("9"));
        assert_eq!(c.get("train", "seed"), Some("3"));
        assert_eq!(c.get("rank", "suite-episodes"), Some("50"));
        assert!(ConfigFile::parse("seed 3").is_err());
        assert!(ConfigFile::parse("seed=1\nseed=2").is_err());
    }

    #[test]
    fn flags_beat_config_beat_defaults() {
        let c = ConfigFile::parse("episodes=7\n").unwrap();
        let mut p = Params::new("train", &c);
        assert_eq!(p.or("episodes", Some(3usize), 1).unwrap(), 3);
        assert_eq!(p.or("episodes", None::<usize>, 1).unwrap(), 7);
        assert_eq!(p.or("learning-rate", None, 0.5).unwrap(), 0.5);
        assert!(matches!(p.req::<u64>("seed", None), Err(CliError::Usage(_))));
    }

    #[test]
    fn r_grid_gains_endpoints() {
        assert_eq!(parse_r_grid("0.5").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_r_grid("0,0.5,1").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_r_grid("1.5").is_err());
        assert_eq!(parse_r_grid(&format_grid(&default_r_grid())).unwrap(), default_r_grid());
    }

    #[test]
    fn svg_stamp_follows_root_tag() {
        let s = stamp_svg("abc", "<svg>\n<rect/>\n</svg>\n");
        assert_eq!(s, "<svg>\n<!-- config_digest=abc -->\n<rect/>\n</svg>\n");
    }
}
