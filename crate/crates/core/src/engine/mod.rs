//! Tuning runs: the loop of sampling, racing and elite selection, plus
//! run-directory persistence, validation and cross-run comparison.

pub mod compare;
pub mod scenario;
pub mod store;
pub mod validate;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diversity::{population_diversity, DiversityReport};
use crate::racer::{
    compute_schedule, EvalRecord, InstanceStream, RaceError, RaceInput, RaceSettings, RaceState, Racer, Schedule,
    ScheduleError,
};
use crate::sampler::{initial_sample, sample_offspring, update_model, SamplingModel};
use crate::seeds::{self, stream};
use crate::selector::{select, SearchMode};
use crate::space::{Configuration, ParameterSpace};
use crate::targets::{Evaluate, Instance, Target, TargetError};

pub use scenario::{InstanceSpec, Scenario, Selection};
pub use store::RunDir;
pub use validate::{validate, ValidationMatrix};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Race(#[from] RaceError),
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run state: {0}")]
    State(String),
}

impl EngineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        EngineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Everything needed to continue a run after a completed race.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    /// Races completed so far.
    pub iteration: usize,
    pub schedule: Schedule,
    /// Current elites, best first.
    pub elites: Vec<Configuration>,
    pub race: RaceState,
    pub model: SamplingModel,
    pub next_id: u64,
    pub sampling_rng: ChaCha8Rng,
    pub selection_rng: ChaCha8Rng,
    pub finished: bool,
}

/// Summary of one race and the selection after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub race_budget: u64,
    pub evaluations: u64,
    pub candidates: usize,
    pub survivors: usize,
    pub elites: Vec<u64>,
    pub mode: Option<SearchMode>,
    pub diversity: DiversityReport,
}

/// Receives a run's progress as it happens.
pub trait RunObserver {
    fn on_evaluations(&mut self, _records: &[EvalRecord]) -> std::io::Result<()> {
        Ok(())
    }

    fn on_iteration(&mut self, _report: &IterationReport, _state: &RunState) -> std::io::Result<()> {
        Ok(())
    }
}

/// Observer that keeps nothing.
pub struct NoObserver;

impl RunObserver for NoObserver {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TuneOptions {
    /// Parallel evaluations within an instance step.
    pub workers: usize,
    /// Pause after this many races (the state stays resumable).
    pub stop_after_iteration: Option<usize>,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            stop_after_iteration: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutput {
    pub elites: Vec<Configuration>,
    pub iterations: Vec<IterationReport>,
    pub state: RunState,
}

/// A scenario bound to its space, instances and target.
pub struct Tuner {
    pub scenario: Scenario,
    pub space: Arc<ParameterSpace>,
    pub instances: Vec<Instance>,
    pub target: Box<dyn Evaluate + Send>,
}

impl Tuner {
    pub fn new(scenario: Scenario) -> Result<Self, EngineError> {
        scenario.validate()?;
        let space = Arc::new(scenario.load_space()?);
        let instances = scenario.load_instances()?;
        let target = Target::build(&scenario.target, Arc::clone(&space))?;
        Ok(Self {
            scenario,
            space,
            instances,
            target: Box::new(target),
        })
    }

    /// Binds a scenario to an already built space, instance set and target.
    pub fn with_parts(
        scenario: Scenario,
        space: Arc<ParameterSpace>,
        instances: Vec<Instance>,
        target: Box<dyn Evaluate + Send>,
    ) -> Result<Self, EngineError> {
        scenario.validate()?;
        if instances.is_empty() {
            return Err(EngineError::Scenario("instance set is empty".into()));
        }
        Ok(Self {
            scenario,
            space,
            instances,
            target,
        })
    }

    pub fn schedule(&self) -> Result<Schedule, EngineError> {
        let schedule = compute_schedule(self.space.len(), self.scenario.budget)?;
        schedule.check_feasible(self.scenario.n_min, self.scenario.race.first_test)?;
        Ok(schedule)
    }

    pub fn initial_state(&self) -> Result<RunState, EngineError> {
        let schedule = self.schedule()?;
        let seed = self.scenario.seed;
        Ok(RunState {
            iteration: 0,
            schedule,
            elites: Vec::new(),
            race: RaceState::default(),
            model: SamplingModel::new(schedule.n_iter, &self.scenario.sampler),
            next_id: 1,
            sampling_rng: ChaCha8Rng::seed_from_u64(seeds::derive(seed, &[stream::SAMPLING])),
            selection_rng: ChaCha8Rng::seed_from_u64(seeds::derive(seed, &[stream::SELECTION])),
            finished: false,
        })
    }

    /// Number of configurations raced in race `j` with budget `b_j`.
    pub fn race_size(&self, j: usize, b_j: u64) -> usize {
        let per = (self.scenario.race.first_test + j.min(5)) as u64;
        ((b_j / per) as usize).max(self.scenario.n_min + 1)
    }

    /// Runs races until the budget is spent (or the requested stop).
    pub fn run(
        &self,
        mut state: RunState,
        opts: &TuneOptions,
        observer: &mut dyn RunObserver,
    ) -> Result<TuneOutput, EngineError> {
        let sc = &self.scenario;
        let space = &*self.space;
        let racer = Racer {
            target: &*self.target,
            instances: &self.instances,
            stream: InstanceStream::new(self.instances.len(), sc.seed),
            settings: RaceSettings {
                workers: opts.workers.max(1),
                ..sc.race
            },
        };
        let selection = sc.selection_settings();
        let mut iterations = Vec::new();

        while !state.finished {
            if opts.stop_after_iteration.is_some_and(|stop| state.iteration >= stop) {
                break;
            }
            let j = state.iteration + 1;
            if state.schedule.remaining() == 0 {
                state.finished = true;
                break;
            }
            let b_j = state.schedule.race_budget(j);
            let n_total = self.race_size(j, b_j);
            let candidates = if state.elites.is_empty() {
                initial_sample(space, n_total, state.next_id, sc.sampler.retry_limit, &mut state.sampling_rng)
            } else {
                let n_new = n_total.saturating_sub(state.elites.len()).max(1);
                sample_offspring(
                    &state.model,
                    &state.elites,
                    &state.elites,
                    space,
                    n_new,
                    state.next_id,
                    sc.sampler.retry_limit,
                    &mut state.sampling_rng,
                )
            };
            state.next_id += candidates.len() as u64;

            let input = RaceInput {
                race: j,
                elites: &state.elites,
                candidates: &candidates,
                budget: b_j,
                n_min: sc.n_min,
            };
            let outcome = racer.race(&input, &mut state.race, &mut |recs| observer.on_evaluations(recs))?;
            state.schedule.used += outcome.evaluations;

            let mode = if outcome.steps == 0 {
                if j >= state.schedule.n_iter {
                    state.finished = true;
                }
                None
            } else {
                let elite_set = select(&outcome.survivors, sc.n_min, &selection, space, &mut state.selection_rng);
                state.elites = elite_set.members;
                let keep: BTreeSet<u64> = state.elites.iter().map(|c| c.id).collect();
                state.race.results.retain(&keep);
                elite_set.mode
            };
            state.model = update_model(&state.model, &state.elites, j + 1, space);
            state.iteration = j;
            if state.schedule.remaining() == 0 {
                state.finished = true;
            }
            let report = IterationReport {
                iteration: j,
                race_budget: b_j,
                evaluations: outcome.evaluations,
                candidates: candidates.len(),
                survivors: if outcome.steps == 0 { 0 } else { outcome.survivors.len() },
                elites: state.elites.iter().map(|c| c.id).collect(),
                mode,
                diversity: population_diversity(&state.elites, space, &sc.entropy),
            };
            observer
                .on_iteration(&report, &state)
                .map_err(|e| EngineError::State(format!("recording iteration {j}: {e}")))?;
            iterations.push(report);
        }
        Ok(TuneOutput {
            elites: state.elites.clone(),
            iterations,
            state,
        })
    }

    /// Fresh run to completion, without persistence.
    pub fn tune(&self, opts: &TuneOptions) -> Result<TuneOutput, EngineError> {
        self.run(self.initial_state()?, opts, &mut NoObserver)
    }
}

/// `requested` (or the available parallelism) capped by `RACETUNE_WORKERS`.
pub fn worker_count(requested: Option<usize>) -> usize {
    let cap = std::env::var("RACETUNE_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0);
    let wanted = requested.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    cap.map_or(wanted, |c| wanted.min(c)).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::SyntheticTarget;

    fn scenario(strategy: &str, budget: u64, seed: u64) -> Scenario {
        let text = format!(
            r#"{{
            "space": "builtin:synthetic",
            "target": {{"kind": "synthetic"}},
            "instances": {{"kind": "synthetic", "count": 10, "family": 3}},
            "budget": {budget},
            "selection": {{"strategy": "{strategy}"}},
            "seed": {seed}
        }}"#
        );
        Scenario::from_json(&text, Path::new(".")).unwrap()
    }

    struct Counter(u64);

    impl RunObserver for Counter {
        fn on_evaluations(&mut self, records: &[EvalRecord]) -> std::io::Result<()> {
            self.0 += records.len() as u64;
            Ok(())
        }
    }

    #[test]
    fn budget_is_respected_and_elites_are_valid() {
        for strategy in ["greedy", "rand", "entropy", "gower"] {
            let tuner = Tuner::new(scenario(strategy, 600, 1)).unwrap();
            let mut counter = Counter(0);
            let out = tuner
                .run(tuner.initial_state().unwrap(), &TuneOptions::default(), &mut counter)
                .unwrap();
            assert!(counter.0 <= 600, "{strategy}: {}", counter.0);
            assert_eq!(counter.0, out.state.schedule.used);
            assert!(out.state.finished);
            assert!(!out.elites.is_empty() && out.elites.len() <= 5);
            for e in &out.elites {
                assert!(tuner.space.validate_configuration(e).is_empty());
            }
            let mut used = 0;
            for it in &out.iterations {
                used += it.evaluations;
                assert!(it.evaluations <= it.race_budget);
            }
            assert_eq!(used, counter.0);
        }
    }

    #[test]
    fn synthetic_tuning_gets_close() {
        let tuner = Tuner::new(scenario("greedy", 2000, 5)).unwrap();
        let out = tuner.tune(&TuneOptions::default()).unwrap();
        let t = SyntheticTarget::new(&tuner.space).unwrap();
        let cost = t.noiseless_cost(&out.elites[0], 3);
        assert!(cost < 1.0, "best elite cost {cost}");
    }

    #[test]
    fn infeasible_budget_is_rejected() {
        let tuner = Tuner::new(scenario("greedy", 40, 1)).unwrap();
        assert!(matches!(tuner.initial_state(), Err(EngineError::Schedule(_))));
    }

    #[test]
    fn pause_and_continue_matches_single_run() {
        let tuner = Tuner::new(scenario("entropy", 800, 2)).unwrap();
        let full = tuner.tune(&TuneOptions::default()).unwrap();
        let first = tuner
            .run(
                tuner.initial_state().unwrap(),
                &TuneOptions {
                    stop_after_iteration: Some(2),
                    ..TuneOptions::default()
                },
                &mut NoObserver,
            )
            .unwrap();
        assert_eq!(first.state.iteration, 2);
        let text = serde_json::to_string(&first.state).unwrap();
        let restored: RunState = serde_json::from_str(&text).unwrap();
        let rest = tuner.run(restored, &TuneOptions::default(), &mut NoObserver).unwrap();
        assert_eq!(rest.elites, full.elites);
        assert_eq!(rest.state, full.state);
    }
}
