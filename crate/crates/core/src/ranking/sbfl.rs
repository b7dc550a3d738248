//! Spectrum-based fault localization measures, oriented towards importance.
//!
//! The classical measures score "executed on failing runs". Here a state is
//! important when keeping the original action goes with passing episodes,
//! so each formula is applied with executed -> unmutated and failing ->
//! passing.

use std::collections::BTreeMap;

use super::RankingError;
use crate::policy::AbstractState;
use crate::rollout::TestSuite;

const ZOLTAR_PENALTY: f64 = 10_000.0;

/// Per-state counters: unmutated/mutated x passing/failing executions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SpectrumVector {
    pub a_ep: u64,
    pub a_ef: u64,
    pub a_np: u64,
    pub a_nf: u64,
}

impl SpectrumVector {
    pub const fn new(a_ep: u64, a_ef: u64, a_np: u64, a_nf: u64) -> Self {
        Self { a_ep, a_ef, a_np, a_nf }
    }

    pub fn total(&self) -> u64 {
        self.a_ep + self.a_ef + self.a_np + self.a_nf
    }

    pub fn record(&mut self, mutated: bool, passed: bool) {
        match (mutated, passed) {
            (false, true) => self.a_ep += 1,
            (false, false) => self.a_ef += 1,
            (true, true) => self.a_np += 1,
            (true, false) => self.a_nf += 1,
        }
    }

    pub fn merge(&mut self, other: &SpectrumVector) {
        self.a_ep += other.a_ep;
        self.a_ef += other.a_ef;
        self.a_np += other.a_np;
        self.a_nf += other.a_nf;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    Ochiai,
    Tarantula,
    Zoltar,
    Wong2,
}

impl Measure {
    pub const ALL: [Measure; 4] = [Measure::Ochiai, Measure::Tarantula, Measure::Zoltar, Measure::Wong2];
}

/// One counter increment per (trajectory, visited state); states a
/// trajectory never visited are left untouched.
pub fn spectrum_from_suite(suite: &TestSuite) -> BTreeMap<AbstractState, SpectrumVector> {
    let mut spectra: BTreeMap<AbstractState, SpectrumVector> = BTreeMap::new();
    for t in &suite.trajectories {
        let passed = t.passed();
        for (state, mutated) in t.visited() {
            spectra.entry(state).or_default().record(mutated, passed);
        }
    }
    spectra
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

/// Any zero denominator makes the whole score 0.
pub fn sbfl_score(v: &SpectrumVector, measure: Measure) -> Result<f64, RankingError> {
    if v.total() == 0 {
        return Err(RankingError::EmptySpectrum);
    }
    let (ep, ef, np, nf) = (v.a_ep as f64, v.a_ef as f64, v.a_np as f64, v.a_nf as f64);
    let score = match measure {
        Measure::Ochiai => ratio(ep, ((ep + np) * (ep + ef)).sqrt()),
        Measure::Tarantula => match (ratio(ep, ep + np), ratio(ef, ef + nf)) {
            (Some(p), Some(f)) => ratio(p, p + f),
            _ => None,
        },
        // ep = 0 sends the penalty term to infinity (or 0/0); either way 0.
        Measure::Zoltar => ratio(ZOLTAR_PENALTY * np * ef, ep).and_then(|penalty| ratio(ep, ep + np + ef + penalty)),
        Measure::Wong2 => Some(ep - ef),
    };
    Ok(score.unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{Action, Coord, Outcome, State, TerminalReason};
    use crate::rollout::{StepRecord, Trajectory};
    use std::collections::BTreeSet;

    fn traj(visits: &[(usize, bool)], passed: bool) -> Trajectory {
        let steps = visits
            .iter()
            .enumerate()
            .map(|(i, &(x, mutated))| {
                let state = State::new(Coord::new(x, 1), i);
                StepRecord {
                    state,
                    abstract_state: AbstractState::of(&state),
                    action: Action::East,
                    mutated,
                    reward: 0.0,
                }
            })
            .collect();
        let outcome = if passed {
            Outcome {
                terminal_reason: TerminalReason::GoalReached,
                final_reward: 0.5,
            }
        } else {
            Outcome {
                terminal_reason: TerminalReason::LavaDeath,
                final_reward: 0.0,
            }
        };
        Trajectory {
            steps,
            outcome,
            episode_seed: 0,
        }
    }

    fn suite(trajectories: Vec<Trajectory>) -> TestSuite {
        let visited: BTreeSet<_> = trajectories
            .iter()
            .flat_map(|t| t.steps.iter().map(|s| s.abstract_state))
            .collect();
        TestSuite {
            trajectories,
            mutation_rate: 0.1,
            suite_seed: 0,
            visited,
        }
    }

    fn key(x: usize) -> AbstractState {
        AbstractState::at(Coord::new(x, 1))
    }

    #[test]
    fn single_passing_visit() {
        let s = spectrum_from_suite(&suite(vec![traj(&[(1, false)], true)]));
        assert_eq!(s[&key(1)], SpectrumVector::new(1, 0, 0, 0));
    }

    #[test]
    fn mixed_counts() {
        let mut ts = Vec::new();
        ts.extend((0..3).map(|_| traj(&[(2, true)], false)));
        ts.push(traj(&[(2, true)], true));
        ts.extend((0..6).map(|_| traj(&[(2, false)], true)));
        let s = spectrum_from_suite(&suite(ts));
        assert_eq!(s[&key(2)], SpectrumVector::new(6, 0, 1, 3));
        assert!(!s.contains_key(&key(1)));
    }

    #[test]
    fn revisits_count_once() {
        let s = spectrum_from_suite(&suite(vec![traj(&[(1, false), (2, false), (1, false)], true)]));
        assert_eq!(s[&key(1)].total(), 1);
    }

    #[test]
    fn empty_vector_is_rejected() {
        assert_eq!(
            sbfl_score(&SpectrumVector::default(), Measure::Ochiai),
            Err(RankingError::EmptySpectrum)
        );
    }
}
