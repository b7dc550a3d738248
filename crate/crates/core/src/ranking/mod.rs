//! Importance scores for policy decisions and the total order built on them.

mod causal;
mod sbfl;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

pub use causal::{causal_scores, Expectation};
pub use sbfl::{sbfl_score, spectrum_from_suite, Measure, SpectrumVector};

use crate::csvio::{self, fmt_f64, parse_field, FormatError};
use crate::gridworld::GridWorld;
use crate::policy::{AbstractState, Policy};
use crate::rollout::TestSuite;
use crate::seed;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RankingError {
    #[error("spectrum vector has no nonzero counter")]
    EmptySpectrum,
    #[error("k_branches must be at least 1")]
    NoBranches,
    #[error("exact expectation enumerates four actions and needs k_branches >= 4, got {0}")]
    ExactNeedsFourBranches(usize),
    #[error("exact expectation requires a deterministic policy")]
    ExactNeedsDeterministicPolicy,
    #[error("score for state {0} is not finite")]
    NonFinite(AbstractState),
    #[error("state {0} is scored twice")]
    DuplicateState(AbstractState),
    #[error("unknown ranking method {0:?} (expected causal, ochiai, tarantula, zoltar, wong2 or random)")]
    UnknownMethod(String),
    #[error("malformed ranking file: {0}")]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Causal,
    Ochiai,
    Tarantula,
    Zoltar,
    Wong2,
    Random,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Causal,
        Method::Ochiai,
        Method::Tarantula,
        Method::Zoltar,
        Method::Wong2,
        Method::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Causal => "causal",
            Method::Ochiai => "ochiai",
            Method::Tarantula => "tarantula",
            Method::Zoltar => "zoltar",
            Method::Wong2 => "wong2",
            Method::Random => "random",
        }
    }

    pub fn measure(self) -> Option<Measure> {
        match self {
            Method::Ochiai => Some(Measure::Ochiai),
            Method::Tarantula => Some(Measure::Tarantula),
            Method::Zoltar => Some(Measure::Zoltar),
            Method::Wong2 => Some(Measure::Wong2),
            Method::Causal | Method::Random => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = RankingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| RankingError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub state: AbstractState,
    pub value: f64,
    pub visits: usize,
    /// Sampling error of the causal estimate; 0 for SBFL and exact mode.
    pub std_error: f64,
}

pub const TIE_RULE: &str = "value desc, visits desc, state_key asc";
pub const RANDOM_TIE_RULE: &str = "uniform permutation by tie_seed";

/// Scored states in rank order. States that are not listed rank below all
/// listed ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    ordered: Vec<Score>,
    method: Method,
    tie_rule: String,
    metadata: Vec<(String, String)>,
}

impl Ranking {
    pub fn ordered(&self) -> &[Score] {
        &self.ordered
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn tie_rule(&self) -> &str {
        &self.tie_rule
    }

    pub fn len(&self) -> usize {
        self.ordered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered.is_empty()
    }

    pub fn metadata(&self) -> &[(String, String)] {
        &self.metadata
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn with_metadata(mut self, key: &str, value: impl ToString) -> Self {
        let value = value.to_string();
        match self.metadata.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.metadata.push((key.to_string(), value)),
        }
        self
    }

    /// 1-based rank of `state`, `None` for unscored states.
    pub fn rank_of(&self, state: AbstractState) -> Option<usize> {
        self.ordered.iter().position(|s| s.state == state).map(|i| i + 1)
    }

    pub fn top(&self, k: usize) -> BTreeSet<AbstractState> {
        self.ordered.iter().take(k).map(|s| s.state).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut meta = self.metadata.clone();
        if !meta.iter().any(|(k, _)| k == "tie_rule") {
            meta.push(("tie_rule".into(), self.tie_rule.clone()));
        }
        csvio::write_doc(
            &meta,
            &["rank", "state_key", "score", "std_error", "visits", "method"],
            self.ordered.iter().enumerate().map(|(i, s)| {
                vec![
                    (i + 1).to_string(),
                    s.state.key(),
                    fmt_f64(s.value),
                    fmt_f64(s.std_error),
                    s.visits.to_string(),
                    self.method.name().to_string(),
                ]
            }),
        )
    }

    pub fn from_csv(text: &str) -> Result<Self, RankingError> {
        let doc = csvio::read_doc(text)?;
        doc.expect_header(&["rank", "state_key", "score", "std_error", "visits", "method"])?;
        let mut ordered = Vec::with_capacity(doc.rows.len());
        let mut method = None;
        let mut seen = BTreeSet::new();
        for (i, row) in doc.rows.iter().enumerate() {
            let line = i + 1;
            let rank: usize = parse_field(&row[0], "rank", line)?;
            if rank != line {
                return Err(FormatError::new(format!("row {line}: rank {rank} out of sequence")).into());
            }
            let state = AbstractState::parse(&row[1])?;
            if !seen.insert(state) {
                return Err(RankingError::DuplicateState(state));
            }
            let value: f64 = parse_field(&row[2], "score", line)?;
            if !value.is_finite() {
                return Err(RankingError::NonFinite(state));
            }
            let std_error = parse_field(&row[3], "std_error", line)?;
            let visits = parse_field(&row[4], "visits", line)?;
            let m: Method = row[5].parse()?;
            if *method.get_or_insert(m) != m {
                return Err(FormatError::new(format!("row {line}: mixed methods in one ranking")).into());
            }
            ordered.push(Score {
                state,
                value,
                visits,
                std_error,
            });
        }
        let method = match (method, doc.meta("method")) {
            (Some(m), _) => m,
            (None, Some(name)) => name.parse()?,
            (None, None) => return Err(FormatError::new("empty ranking without `# method=` row").into()),
        };
        let tie_rule = doc
            .meta("tie_rule")
            .map(str::to_string)
            .unwrap_or_else(|| default_tie_rule(method).into());
        Ok(Ranking {
            ordered,
            method,
            tie_rule,
            metadata: doc.meta,
        })
    }
}

fn default_tie_rule(method: Method) -> &'static str {
    if method == Method::Random {
        RANDOM_TIE_RULE
    } else {
        TIE_RULE
    }
}

fn by_importance(a: &Score, b: &Score) -> Ordering {
    b.value
        .total_cmp(&a.value)
        .then_with(|| b.visits.cmp(&a.visits))
        .then_with(|| a.state.key().cmp(&b.state.key()))
}

/// Sort scores into a strict total order: descending value, then more
/// visits, then ascending state key. `Method::Random` ignores the values and
/// applies a uniform permutation drawn from `tie_seed`.
pub fn build_ranking(mut scores: Vec<Score>, method: Method, tie_seed: u64) -> Result<Ranking, RankingError> {
    let mut seen = BTreeSet::new();
    for s in &scores {
        if !s.value.is_finite() {
            return Err(RankingError::NonFinite(s.state));
        }
        if !seen.insert(s.state) {
            return Err(RankingError::DuplicateState(s.state));
        }
    }
    if method == Method::Random {
        scores.sort_by(|a, b| a.state.cmp(&b.state));
        scores.shuffle(&mut seed::stream(tie_seed));
    } else {
        scores.sort_by(by_importance);
    }
    Ok(Ranking {
        ordered: scores,
        method,
        tie_rule: default_tie_rule(method).to_string(),
        metadata: vec![
            ("method".into(), method.name().into()),
            ("orientation".into(), "importance".into()),
        ],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankConfig {
    pub method: Method,
    pub k_branches: usize,
    pub expectation: Expectation,
    /// Seeds causal branch sampling.
    pub branch_seed: u64,
    pub tie_seed: u64,
}

impl RankConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            k_branches: 4,
            expectation: Expectation::Exact,
            branch_seed: 0,
            tie_seed: 0,
        }
    }
}

/// Scores every state the suite visited with the configured method and
/// returns the ranking, with the run parameters recorded as metadata.
pub fn rank_states(
    world: &GridWorld,
    policy: &dyn Policy,
    suite: &TestSuite,
    config: &RankConfig,
) -> Result<Ranking, RankingError> {
    let scores = match config.method {
        Method::Causal => causal_scores(
            world,
            policy,
            suite,
            config.k_branches,
            config.branch_seed,
            config.expectation,
        )?,
        Method::Random => {
            let visits = suite.visit_counts();
            suite
                .visited
                .iter()
                .map(|&state| Score {
                    state,
                    value: 0.0,
                    visits: visits[&state],
                    std_error: 0.0,
                })
                .collect()
        }
        m => {
            let measure = m.measure().expect("SBFL methods have a measure");
            spectrum_from_suite(suite)
                .into_iter()
                .map(|(state, v)| {
                    Ok(Score {
                        state,
                        value: sbfl_score(&v, measure)?,
                        visits: v.total() as usize,
                        std_error: 0.0,
                    })
                })
                .collect::<Result<Vec<_>, RankingError>>()?
        }
    };
    let mut ranking = build_ranking(scores, config.method, config.tie_seed)?
        .with_metadata("suite_seed", suite.suite_seed)
        .with_metadata("mutation_rate", suite.mutation_rate)
        .with_metadata("suite_episodes", suite.trajectories.len());
    if config.method == Method::Causal {
        ranking = ranking
            .with_metadata("k_branches", config.k_branches)
            .with_metadata("expectation", config.expectation.name())
            .with_metadata("branch_seed", config.branch_seed);
    }
    if config.method == Method::Random {
        ranking = ranking.with_metadata("tie_seed", config.tie_seed);
    }
    Ok(ranking)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::Coord;

    fn score(x: usize, value: f64, visits: usize) -> Score {
        Score {
            state: AbstractState::at(Coord::new(x, 1)),
            value,
            visits,
            std_error: 0.0,
        }
    }

    #[test]
    fn tie_rule_orders_by_visits() {
        let r = build_ranking(
            vec![score(1, 0.9, 10), score(2, 0.1, 5), score(3, 0.9, 3)],
            Method::Ochiai,
            0,
        )
        .unwrap();
        let order: Vec<_> = r.ordered().iter().map(|s| (s.value, s.visits)).collect();
        assert_eq!(order, vec![(0.9, 10), (0.9, 3), (0.1, 5)]);
    }

    #[test]
    fn all_equal_values_use_visits_then_keys() {
        let scores = vec![score(3, 0.0, 2), score(12, 0.0, 2), score(2, 0.0, 7)];
        let r = build_ranking(scores.clone(), Method::Causal, 0).unwrap();
        let keys: Vec<_> = r.ordered().iter().map(|s| s.state.key()).collect();
        assert_eq!(keys, vec!["2,1", "12,1", "3,1"]);
        let mut reversed = scores;
        reversed.reverse();
        assert_eq!(build_ranking(reversed, Method::Causal, 0).unwrap(), r);
    }

    #[test]
    fn random_is_a_seeded_permutation() {
        let scores: Vec<_> = (1..=12).map(|x| score(x, x as f64, 1)).collect();
        let a = build_ranking(scores.clone(), Method::Random, 3).unwrap();
        let mut shuffled_input = scores.clone();
        shuffled_input.reverse();
        assert_eq!(a, build_ranking(shuffled_input, Method::Random, 3).unwrap());
        assert_ne!(
            a.ordered(),
            build_ranking(scores.clone(), Method::Random, 4).unwrap().ordered()
        );
        let set: BTreeSet<_> = a.ordered().iter().map(|s| s.state).collect();
        assert_eq!(set.len(), 12);
    }

    #[test]
    fn rejects_non_finite_and_duplicates() {
        assert!(matches!(
            build_ranking(vec![score(1, f64::NAN, 1)], Method::Causal, 0),
            Err(RankingError::NonFinite(_))
        ));
        assert!(matches!(
            build_ranking(vec![score(1, 0.5, 1), score(1, 0.2, 1)], Method::Causal, 0),
            Err(RankingError::DuplicateState(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let r = build_ranking(vec![score(1, 0.25, 4), score(10, 1.0 / 3.0, 2)], Method::Causal, 0)
            .unwrap()
            .with_metadata("k_branches", 4);
        let text = r.to_csv();
        assert!(text.contains("# orientation=importance\n"));
        assert!(text.contains("rank,state_key,score,std_error,visits,method\n1,\"10,1\","));
        let back = Ranking::from_csv(&text).unwrap();
        assert_eq!(back.ordered(), r.ordered());
        assert_eq!(back.method(), Method::Causal);
        assert_eq!(back.meta("k_branches"), Some("4"));
        assert_eq!(back.to_csv(), text);
        assert!(Ranking::from_csv(&text.replace("\n2,", "\n3,")).is_err());
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!(matches!("bogus".parse::<Method>(), Err(RankingError::UnknownMethod(_))));
    }

    #[test]
    fn rank_of_and_top() {
        let r = build_ranking(vec![score(1, 0.1, 1), score(2, 0.2, 1)], Method::Wong2, 0).unwrap();
        assert_eq!(r.rank_of(AbstractState::at(Coord::new(2, 1))), Some(1));
        assert_eq!(r.rank_of(AbstractState::at(Coord::new(5, 5))), None);
        assert_eq!(r.top(1).len(), 1);
    }
}
