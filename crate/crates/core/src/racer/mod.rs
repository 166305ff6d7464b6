//! Racing: sequential evaluation of configurations over an instance stream
//! with statistical elimination of the inferior ones.

pub mod stats;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds::{self, stream};
use crate::space::Configuration;
use crate::targets::{Evaluate, Instance, TargetError};

pub use stats::{eliminate, friedman_eliminate, rank_order, t_test_eliminate, TestKind, TestResult};

#[derive(Debug, Error)]
pub enum RaceError {
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error("non-finite cost {cost} for config {config} on instance {instance}")]
    NonFinite { config: u64, instance: String, cost: f64 },
    #[error("writing evaluation log: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("the space needs at least one parameter")]
    NoParameters,
    #[error("budget must be at least 1")]
    NoBudget,
    #[error("budget {budget} is infeasible: the first race gets {first} evaluations but needs at least {needed}")]
    Infeasible { budget: u64, first: u64, needed: u64 },
}

/// Budget split over races.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub n_iter: usize,
    pub budget: u64,
    pub used: u64,
}

impl Schedule {
    /// Remaining budget divided over the remaining planned races. Races
    /// past `n_iter` get everything that is left.
    pub fn race_budget(&self, j: usize) -> u64 {
        let remaining_races = (self.n_iter as i64 - j as i64 + 1).max(1) as u64;
        self.remaining() / remaining_races
    }

    pub fn remaining(&self) -> u64 {
        self.budget.saturating_sub(self.used)
    }

    /// Checks that the first race can evaluate `n_min + 1` configurations
    /// on `t_first` instances.
    pub fn check_feasible(&self, n_min: usize, t_first: usize) -> Result<(), ScheduleError> {
        let needed = (n_min as u64 + 1) * t_first.max(1) as u64;
        let first = self.race_budget(1);
        if first < needed {
            return Err(ScheduleError::Infeasible {
                budget: self.budget,
                first,
                needed,
            });
        }
        Ok(())
    }
}

/// `N_iter = floor(2 + log2(N_param))`.
pub fn compute_schedule(n_param: usize, budget: u64) -> Result<Schedule, ScheduleError> {
    if n_param == 0 {
        return Err(ScheduleError::NoParameters);
    }
    if budget == 0 {
        return Err(ScheduleError::NoBudget);
    }
    let n_iter = 2 + (usize::BITS - 1 - n_param.leading_zeros()) as usize;
    Ok(Schedule { n_iter, budget, used: 0 })
}

/// One position of the instance stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamEntry {
    pub pos: u64,
    pub instance: usize,
    pub seed: u64,
}

/// Endless instance stream: consecutive blocks, each a fresh shuffle of
/// all instances. Every position carries its own evaluation seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceStream {
    pub n_instances: usize,
    pub seed: u64,
}

impl InstanceStream {
    pub fn new(n_instances: usize, seed: u64) -> Self {
        assert!(n_instances > 0, "instance stream needs at least one instance");
        Self { n_instances, seed }
    }

    pub fn entry(&self, pos: u64) -> StreamEntry {
        let n = self.n_instances as u64;
        let block = pos / n;
        let mut order: Vec<usize> = (0..self.n_instances).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(self.seed, &[stream::INSTANCE_ORDER, block]));
        order.shuffle(&mut rng);
        StreamEntry {
            pos,
            instance: order[(pos % n) as usize],
            seed: seeds::derive(self.seed, &[stream::EVAL_SEED, pos]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub instance: usize,
    pub seed: u64,
    pub cost: f64,
    pub runtime_s: f64,
}

/// Cost records keyed by configuration id and stream position.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsMatrix {
    pub records: BTreeMap<u64, BTreeMap<u64, Record>>,
}

impl ResultsMatrix {
    pub fn get(&self, config: u64, pos: u64) -> Option<&Record> {
        self.records.get(&config).and_then(|m| m.get(&pos))
    }

    pub fn insert(&mut self, config: u64, pos: u64, record: Record) {
        self.records.entry(config).or_default().insert(pos, record);
    }

    pub fn positions(&self, config: u64) -> impl Iterator<Item = u64> + '_ {
        self.records.get(&config).into_iter().flat_map(|m| m.keys().copied())
    }

    /// Drops the records of every configuration not in `keep`.
    pub fn retain(&mut self, keep: &BTreeSet<u64>) {
        self.records.retain(|id, _| keep.contains(id));
    }

    /// Cost matrix with one row per position and one column per config.
    pub fn matrix(&self, configs: &[u64], positions: &[u64]) -> Vec<Vec<f64>> {
        positions
            .iter()
            .map(|&p| {
                configs
                    .iter()
                    .map(|&c| self.get(c, p).map_or(f64::NAN, |r| r.cost))
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RaceSettings {
    pub test: TestKind,
    pub alpha: f64,
    /// Instances evaluated before the first test.
    pub first_test: usize,
    /// Instances between later tests.
    pub each_test: usize,
    /// New instances an elite must see before it can be eliminated.
    pub elite_new_instances: usize,
    #[serde(skip)]
    pub workers: usize,
}

impl Default for RaceSettings {
    fn default() -> Self {
        Self {
            test: TestKind::Friedman,
            alpha: 0.05,
            first_test: 5,
            each_test: 1,
            elite_new_instances: 1,
            workers: 1,
        }
    }
}

/// One row of the evaluation log.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub race: usize,
    pub instance_pos: u64,
    pub instance_id: String,
    pub config_id: u64,
    pub seed: u64,
    pub cost: f64,
    pub runtime_s: f64,
}

impl EvalRecord {
    pub const CSV_HEADER: &'static str = "race,instance_pos,instance_id,config_id,seed,cost,runtime_s";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.race, self.instance_pos, self.instance_id, self.config_id, self.seed, self.cost, self.runtime_s
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elimination {
    pub config: u64,
    /// Number of instances of this race evaluated when the test ran.
    pub after_step: usize,
    pub statistic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaceOutcome {
    /// Surviving configurations, best first.
    pub survivors: Vec<Configuration>,
    pub eliminations: Vec<Elimination>,
    /// Instances evaluated in this race, replayed ones included.
    pub steps: usize,
    /// Target invocations spent.
    pub evaluations: u64,
    pub positions: Vec<u64>,
}

/// Mutable state carried from race to race.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RaceState {
    pub results: ResultsMatrix,
    /// First stream position never handed out.
    pub next_pos: u64,
}

pub struct RaceInput<'a> {
    pub race: usize,
    pub elites: &'a [Configuration],
    pub candidates: &'a [Configuration],
    pub budget: u64,
    pub n_min: usize,
}

pub struct Racer<'a> {
    pub target: &'a dyn Evaluate,
    pub instances: &'a [Instance],
    pub stream: InstanceStream,
    pub settings: RaceSettings,
}

struct Job<'c> {
    config: &'c Configuration,
    entry: StreamEntry,
}

impl Racer<'_> {
    fn run_jobs(&self, jobs: &[Job]) -> Vec<Result<crate::targets::EvalResult, TargetError>> {
        let eval = |job: &Job| {
            self.target
                .evaluate(job.config, &self.instances[job.entry.instance], job.entry.seed)
        };
        let workers = self.settings.workers.clamp(1, jobs.len().max(1));
        if workers == 1 {
            return jobs.iter().map(eval).collect();
        }
        let chunk = jobs.len().div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(eval).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("evaluation worker panicked"))
                .collect()
        })
    }

    /// Races `elites ∪ candidates` within `input.budget` evaluations.
    ///
    /// The stream replays every position an elite has already seen (at no
    /// cost for the elites) before drawing fresh positions. `on_step`
    /// receives the evaluations of each instance step in config-id order.
    pub fn race(
        &self,
        input: &RaceInput,
        state: &mut RaceState,
        on_step: &mut dyn FnMut(&[EvalRecord]) -> std::io::Result<()>,
    ) -> Result<RaceOutcome, RaceError> {
        let s = &self.settings;
        let elite_ids: BTreeSet<u64> = input.elites.iter().map(|c| c.id).collect();
        let mut alive: Vec<&Configuration> = input.elites.iter().chain(input.candidates).collect();
        alive.sort_by_key(|c| c.id);
        alive.dedup_by_key(|c| c.id);

        let replay: Vec<u64> = input
            .elites
            .iter()
            .flat_map(|e| state.results.positions(e.id).collect::<Vec<_>>())
            .collect::<BTreeSet<u64>>()
            .into_iter()
            .collect();
        let replay_set: BTreeSet<u64> = replay.iter().copied().collect();

        let mut positions: Vec<u64> = Vec::new();
        let mut eliminations = Vec::new();
        let mut evaluations = 0u64;
        let mut new_steps = 0usize;

        loop {
            let step = positions.len();
            let pos = match replay.get(step) {
                Some(&p) => p,
                None => state.next_pos,
            };
            let entry = self.stream.entry(pos);
            let jobs: Vec<Job> = alive
                .iter()
                .filter(|c| state.results.get(c.id, pos).is_none())
                .map(|&config| Job { config, entry })
                .collect();
            if evaluations + jobs.len() as u64 > input.budget {
                break;
            }
            let results = self.run_jobs(&jobs);
            let mut records = Vec::with_capacity(jobs.len());
            for (job, res) in jobs.iter().zip(results) {
                let res = res?;
                let instance = &self.instances[entry.instance];
                if !res.cost.is_finite() {
                    return Err(RaceError::NonFinite {
                        config: job.config.id,
                        instance: instance.id.clone(),
                        cost: res.cost,
                    });
                }
                state.results.insert(
                    job.config.id,
                    pos,
                    Record {
                        instance: entry.instance,
                        seed: entry.seed,
                        cost: res.cost,
                        runtime_s: res.runtime_s,
                    },
                );
                records.push(EvalRecord {
                    race: input.race,
                    instance_pos: pos,
                    instance_id: instance.id.clone(),
                    config_id: job.config.id,
                    seed: entry.seed,
                    cost: res.cost,
                    runtime_s: res.runtime_s,
                });
            }
            evaluations += jobs.len() as u64;
            on_step(&records)?;
            if step >= replay.len() {
                state.next_pos += 1;
            }
            if !replay_set.contains(&pos) {
                new_steps += 1;
            }
            positions.push(pos);

            let done = positions.len();
            if done >= s.first_test && (done - s.first_test) % s.each_test.max(1) == 0 && alive.len() >= 2 {
                let ids: Vec<u64> = alive.iter().map(|c| c.id).collect();
                let m = state.results.matrix(&ids, &positions);
                let test = eliminate(s.test, &m, s.alpha);
                let protected = |id: u64| elite_ids.contains(&id) && new_steps < s.elite_new_instances;
                let dropped: BTreeSet<u64> = test
                    .eliminated
                    .iter()
                    .map(|&(col, _)| ids[col])
                    .filter(|&id| !protected(id))
                    .collect();
                for &(col, stat) in &test.eliminated {
                    if dropped.contains(&ids[col]) {
                        eliminations.push(Elimination {
                            config: ids[col],
                            after_step: done,
                            statistic: stat,
                        });
                    }
                }
                alive.retain(|c| !dropped.contains(&c.id));
                if alive.len() <= input.n_min {
                    break;
                }
            }
        }

        let survivors: Vec<Configuration> = if positions.is_empty() {
            input.elites.iter().chain(input.candidates).cloned().collect()
        } else {
            let ids: Vec<u64> = alive.iter().map(|c| c.id).collect();
            let m = state.results.matrix(&ids, &positions);
            rank_order(&m, &ids).into_iter().map(|k| alive[k].clone()).collect()
        };
        Ok(RaceOutcome {
            survivors,
            eliminations,
            steps: positions.len(),
            evaluations,
            positions,
        })
    }
}
