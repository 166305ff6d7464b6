//! Browser bindings for three small racetune demos: a synthetic tuning
//! run, a single ACO solve drawn on a canvas, and the four elite
//! selection strategies applied to one random population.
//!
//! Every export returns a JSON string; the plain Rust functions behind
//! them are public so they can be tested natively.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use racetune::diversity::{population_diversity, EntropyOptions};
use racetune::engine::{IterationReport, RunObserver, RunState, Scenario, TuneOptions, Tuner};
use racetune::sampler::initial_sample;
use racetune::selector::{select, PoolFactor, SelectionSettings, Strategy};
use racetune::targets::{builtin_space, generate_tsp, run_aco, AcoParams, SyntheticTarget, Variant};
use racetune::Configuration;

#[derive(Debug, Serialize)]
pub struct RaceSummary {
    pub race: usize,
    pub candidates: usize,
    pub evaluations: u64,
    pub survivors: usize,
    pub diversity: f64,
    pub best_cost: f64,
}

#[derive(Debug, Serialize)]
pub struct TuneSummary {
    pub strategy: String,
    pub budget: u64,
    pub used: u64,
    pub races: Vec<RaceSummary>,
    /// Noise-free cost of each final elite, best first.
    pub elite_costs: Vec<f64>,
    pub best: Vec<(String, String)>,
}

fn describe(space: &racetune::ParameterSpace, c: &Configuration) -> Vec<(String, String)> {
    space
        .params()
        .iter()
        .enumerate()
        .map(|(i, p)| (p.name.clone(), space.format_slot(i, &c.values[i])))
        .collect()
}

struct Watcher<'a> {
    target: &'a SyntheticTarget,
    family: u64,
    races: Vec<RaceSummary>,
}

impl RunObserver for Watcher<'_> {
    fn on_iteration(&mut self, report: &IterationReport, state: &RunState) -> std::io::Result<()> {
        self.races.push(RaceSummary {
            race: report.iteration,
            candidates: report.candidates,
            evaluations: report.evaluations,
            survivors: report.survivors,
            diversity: report.diversity.diversity,
            best_cost: state
                .elites
                .first()
                .map_or(f64::NAN, |c| self.target.noiseless_cost(c, self.family)),
        });
        Ok(())
    }
}

/// Tunes the synthetic target on ten instances of one family.
pub fn synthetic_run(strategy: &str, budget: u64, seed: u64) -> Result<TuneSummary, String> {
    let strategy: Strategy = strategy.parse()?;
    let family = 1000 + seed;
    let text = format!(
        r#"{{"space": "builtin:synthetic", "target": {{"kind": "synthetic"}},
            "instances": {{"kind": "synthetic", "count": 10, "family": {family}}},
            "budget": {budget}, "selection": {{"strategy": "{strategy}"}}, "seed": {seed}}}"#
    );
    let scenario = Scenario::from_json(&text, Path::new(".")).map_err(|e| e.to_string())?;
    let tuner = Tuner::new(scenario).map_err(|e| e.to_string())?;
    let target = SyntheticTarget::new(&tuner.space).map_err(|e| e.to_string())?;
    let mut watcher = Watcher {
        target: &target,
        family,
        races: Vec::new(),
    };
    let state = tuner.initial_state().map_err(|e| e.to_string())?;
    let out = tuner
        .run(state, &TuneOptions::default(), &mut watcher)
        .map_err(|e| e.to_string())?;
    let races = watcher.races;
    let cost = |c: &Configuration| target.noiseless_cost(c, family);
    Ok(TuneSummary {
        strategy: strategy.name().into(),
        budget,
        used: out.state.schedule.used,
        races,
        elite_costs: out.elites.iter().map(cost).collect(),
        best: out.elites.first().map(|c| describe(&tuner.space, c)).unwrap_or_default(),
    })
}

#[derive(Debug, Serialize)]
pub struct TspSolution {
    pub coords: Vec<(f64, f64)>,
    pub tour: Vec<usize>,
    pub length: i64,
    pub history: Vec<i64>,
}

/// Solves one random instance with a mid-range parameter setting of the
/// chosen ACO variant.
pub fn tsp_solve(
    n_cities: usize,
    instance_seed: u64,
    algorithm: &str,
    local_search: bool,
    tour_budget: usize,
    seed: u64,
) -> Result<TspSolution, String> {
    let variant = Variant::from_label(algorithm).ok_or_else(|| format!("unknown algorithm '{algorithm}'"))?;
    let instance = generate_tsp(n_cities, instance_seed).map_err(|e| e.to_string())?;
    let params = AcoParams {
        variant,
        alpha: 1.0,
        beta: 3.0,
        rho: 0.2,
        ants: 20,
        nnls: 15,
        q0: 0.5,
        rasrank: 6,
        local_search,
        dlb: local_search,
    };
    let run = run_aco(&instance, &params, tour_budget.max(1), seed);
    Ok(TspSolution {
        coords: instance.coords.clone(),
        tour: run.best_tour,
        length: run.best_length,
        history: run.history,
    })
}

#[derive(Debug, Serialize)]
pub struct Point {
    pub id: u64,
    pub x1: f64,
    pub x2: f64,
    pub c1: String,
    pub cost: f64,
}

#[derive(Debug, Serialize)]
pub struct Selection {
    pub strategy: String,
    pub members: Vec<u64>,
    pub diversity: f64,
}

#[derive(Debug, Serialize)]
pub struct SelectionDemo {
    /// Ranked best first.
    pub population: Vec<Point>,
    pub selections: Vec<Selection>,
}

/// Ranks a uniform synthetic population by noise-free cost and applies
/// every selection strategy to it.
pub fn selection_demo(n_pop: usize, n_min: usize, seed: u64) -> Result<SelectionDemo, String> {
    let space = builtin_space("synthetic").ok_or("synthetic space missing")?;
    let target = SyntheticTarget::new(&space).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pop = initial_sample(&space, n_pop.max(1), 1, 10, &mut rng);
    pop.sort_by(|a, b| target.noiseless_cost(a, seed).total_cmp(&target.noiseless_cost(b, seed)));
    let idx = |n: &str| space.index_of(n).expect("synthetic parameter");
    let (x1, x2, c1) = (idx("x1"), idx("x2"), idx("c1"));
    let population = pop
        .iter()
        .map(|c| Point {
            id: c.id,
            x1: c.values[x1].map_or(0.0, |v| v.as_f64()),
            x2: c.values[x2].map_or(0.0, |v| v.as_f64()),
            c1: space.format_slot(c1, &c.values[c1]),
            cost: target.noiseless_cost(c, seed),
        })
        .collect();
    let selections = Strategy::ALL
        .into_iter()
        .map(|strategy| {
            let settings = SelectionSettings {
                strategy,
                pool_factor: PoolFactor(2.0),
                entropy: EntropyOptions::default(),
            };
            let elites = select(&pop, n_min.max(1), &settings, &space, &mut rng);
            Selection {
                strategy: strategy.name().into(),
                members: elites.members.iter().map(|c| c.id).collect(),
                diversity: population_diversity(&elites.members, &space, &settings.entropy).diversity,
            }
        })
        .collect();
    Ok(SelectionDemo { population, selections })
}

fn json<T: Serialize>(value: Result<T, String>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn tune_synthetic(strategy: &str, budget: u32, seed: u32) -> Result<String, JsError> {
    json(synthetic_run(strategy, budget as u64, seed as u64))
}

#[wasm_bindgen]
pub fn solve_tsp(
    n_cities: u32,
    instance_seed: u32,
    algorithm: &str,
    local_search: bool,
    tour_budget: u32,
    seed: u32,
) -> Result<String, JsError> {
    json(tsp_solve(
        n_cities as usize,
        instance_seed as u64,
        algorithm,
        local_search,
        tour_budget as usize,
        seed as u64,
    ))
}

#[wasm_bindgen]
pub fn compare_selections(n_pop: u32, n_min: u32, seed: u32) -> Result<String, JsError> {
    json(selection_demo(n_pop as usize, n_min as usize, seed as u64))
}

/// Space file of the built-in synthetic target, for display.
#[wasm_bindgen]
pub fn synthetic_space() -> String {
    racetune::targets::SYNTHETIC_SPACE.to_string()
}
