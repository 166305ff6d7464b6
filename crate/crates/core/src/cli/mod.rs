//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags or scenario
//! values), 2 when a run fails.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::diversity::{population_diversity, EntropyOptions};
use crate::engine::compare::{
    self, compare, param_distributions, param_distributions_csv, parallel_coordinates_csv, RunElites,
};
use crate::engine::store::{read_elites, RunDir, SCENARIO_FILE};
use crate::engine::{
    validate, worker_count, EngineError, InstanceSpec, IterationReport, RunObserver, RunState, Scenario, TuneOptions,
    Tuner,
};
use crate::racer::{EvalRecord, TestKind};
use crate::selector::{PoolFactor, Strategy};
use crate::space::{Configuration, Origin, ParameterSpace};
use crate::targets::tsp::{generate_tsp, instance_id};
use crate::targets::{Target, TargetSpec};

#[derive(Debug, Parser)]
#[command(name = "racetune", version, about = "Iterated racing with diversity-aware elite selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a tuning campaign and write a run directory.
    Tune(TuneArgs),
    /// Continue an interrupted run from its saved state.
    Resume(ResumeArgs),
    /// Re-evaluate a run's final elites on test instances.
    Validate(ValidateArgs),
    /// Compare the final elites of several runs on a shared test set.
    Compare(CompareArgs),
    /// Print the diversity report of a population CSV as JSON.
    Divcheck(DivcheckArgs),
    /// Generate random Euclidean TSP instances.
    GenInstances(GenArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub budget: Option<u64>,
    /// greedy, rand, entropy or gower.
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub n_min: Option<usize>,
    /// Elimination test: F (Friedman) or t (paired t-test).
    #[arg(long)]
    pub test: Option<TestKind>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Pool size factor of the rand strategy (> 1, or inf).
    #[arg(long)]
    pub pool_factor: Option<PoolFactor>,
}

impl Overrides {
    pub fn apply(&self, s: &mut Scenario) {
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.budget {
            s.budget = v;
        }
        if let Some(v) = self.strategy {
            s.selection.strategy = v;
        }
        if let Some(v) = self.n_min {
            s.n_min = v;
        }
        if let Some(v) = self.test {
            s.race.test = v;
        }
        if let Some(v) = self.alpha {
            s.race.alpha = v;
        }
        if let Some(v) = self.pool_factor {
            s.selection.pool_factor = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Run directory; defaults to the scenario's `output_dir`, else `racetune-run`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Parallel evaluations (capped by RACETUNE_WORKERS).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Stop after this many races; the run can be continued with `resume`.
    #[arg(long)]
    pub stop_after: Option<usize>,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct ResumeArgs {
    pub run: PathBuf,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub stop_after: Option<usize>,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub run: PathBuf,
    /// Instance list file, or a `.json` instance description.
    #[arg(long)]
    pub test_instances: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub repetitions: usize,
    /// Seed of the validation runs.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; defaults to `<run>/validation.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(required = true, num_args = 2..)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub test_instances: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for the report tables.
    #[arg(long, default_value = "comparison")]
    pub out: PathBuf,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DivcheckArgs {
    /// CSV with one configuration per row; empty fields are inactive.
    pub population: PathBuf,
    /// Parameter file, or `builtin:synthetic` / `builtin:acotsp`.
    #[arg(long)]
    pub space: String,
    /// Bin count for real parameters (default: population size).
    #[arg(long)]
    pub bins: Option<usize>,
    /// Leave inactive values out instead of counting them as a cell.
    #[arg(long)]
    pub skip_inactive: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Cities per instance.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "instances")]
    pub out: PathBuf,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Scenario(m) => Failure::Usage(m),
            EngineError::Schedule(e) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.into()),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Tune(a) => tune(a),
        Command::Resume(a) => resume(a),
        Command::Validate(a) => validate_run(a),
        Command::Compare(a) => compare_runs(a),
        Command::Divcheck(a) => divcheck(a),
        Command::GenInstances(a) => gen_instances(a),
    }
}

struct Progress<'a> {
    dir: &'a mut RunDir,
    quiet: bool,
}

impl RunObserver for Progress<'_> {
    fn on_evaluations(&mut self, records: &[EvalRecord]) -> io::Result<()> {
        self.dir.on_evaluations(records)
    }

    fn on_iteration(&mut self, report: &IterationReport, state: &RunState) -> io::Result<()> {
        self.dir.on_iteration(report, state)?;
        if !self.quiet {
            eprintln!(
                "race {:>3}: {:>4} candidates, {:>5} evaluations ({} of {} used), {} survivors, D = {:.3}",
                report.iteration,
                report.candidates,
                report.evaluations,
                state.schedule.used,
                state.schedule.budget,
                report.survivors,
                report.diversity.diversity
            );
        }
        Ok(())
    }
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::path::absolute(path).with_context(|| format!("resolving {}", path.display()))
}

fn tune(a: TuneArgs) -> Result<(), Failure> {
    let mut scenario = Scenario::load(&a.scenario)?;
    scenario.base_dir = absolute(&scenario.base_dir)?;
    a.overrides.apply(&mut scenario);
    scenario.validate()?;
    let out = match (&a.out, &scenario.output_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => scenario.base_dir.join(p),
        (None, None) => PathBuf::from("racetune-run"),
    };
    let tuner = Tuner::new(scenario)?;
    let state = tuner.initial_state()?;
    let mut dir = RunDir::create(&out, &tuner.scenario, &tuner.space)?;
    drive(&tuner, state, &mut dir, a.workers, a.stop_after, a.quiet)
}

fn resume(a: ResumeArgs) -> Result<(), Failure> {
    let (mut dir, scenario, state) = RunDir::resume(&a.run)?;
    let tuner = Tuner::new(scenario)?;
    if state.finished {
        eprintln!("{}: run already finished", a.run.display());
        return Ok(());
    }
    drive(&tuner, state, &mut dir, a.workers, a.stop_after, a.quiet)
}

fn drive(
    tuner: &Tuner,
    state: RunState,
    dir: &mut RunDir,
    workers: Option<usize>,
    stop_after: Option<usize>,
    quiet: bool,
) -> Result<(), Failure> {
    let opts = TuneOptions {
        workers: worker_count(workers),
        stop_after_iteration: stop_after,
    };
    let path = dir.path.clone();
    let out = tuner.run(state, &opts, &mut Progress { dir, quiet })?;
    if !quiet {
        let best = out
            .elites
            .first()
            .map(|c| describe(&tuner.space, c))
            .unwrap_or_default();
        eprintln!("best: {best}");
        eprintln!("run directory: {}", path.display());
    }
    Ok(())
}

fn describe(space: &ParameterSpace, c: &Configuration) -> String {
    let values: Vec<String> = space
        .params()
        .iter()
        .zip(&c.values)
        .filter_map(|(p, v)| v.as_ref().map(|v| format!("{}={}", p.name, p.format_value(v))))
        .collect();
    format!("#{} {}", c.id, values.join(" "))
}

struct LoadedRun {
    label: String,
    scenario: Scenario,
    space: Arc<ParameterSpace>,
    elites: Vec<Configuration>,
    variant: Strategy,
}

fn load_run(dir: &Path) -> Result<LoadedRun, Failure> {
    let scenario = Scenario::load(&dir.join(SCENARIO_FILE))?;
    let space = Arc::new(scenario.load_space()?);
    let file = read_elites(dir, &space)?;
    let label = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(LoadedRun {
        label,
        variant: file.strategy,
        scenario,
        space,
        elites: file.elites,
    })
}

fn test_instances(path: &Path, target: &TargetSpec) -> Result<Vec<crate::targets::Instance>, Failure> {
    let (spec, base) = InstanceSpec::from_argument(path)?;
    Ok(spec.load(&base, matches!(target, TargetSpec::AcoTsp { .. }))?)
}

fn validate_elites(
    run: &LoadedRun,
    instances: &[crate::targets::Instance],
    repetitions: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<crate::engine::ValidationMatrix, Failure> {
    let target = Target::build(&run.scenario.target, Arc::clone(&run.space)).map_err(EngineError::from)?;
    Ok(validate(
        &target,
        &run.elites,
        instances,
        repetitions,
        seed,
        worker_count(workers),
    )?)
}

fn validate_run(a: ValidateArgs) -> Result<(), Failure> {
    if a.repetitions == 0 {
        return Err(Failure::Usage("--repetitions must be at least 1".into()));
    }
    let run = load_run(&a.run)?;
    let instances = test_instances(&a.test_instances, &run.scenario.target)?;
    let matrix = validate_elites(&run, &instances, a.repetitions, a.seed, a.workers)?;
    let out = a.out.unwrap_or_else(|| a.run.join("validation.csv"));
    matrix.write(&out)?;
    for (id, mean) in matrix.config_ids.iter().zip(matrix.row_means()) {
        println!("{id}\t{mean}");
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn compare_runs(a: CompareArgs) -> Result<(), Failure> {
    if a.repetitions == 0 {
        return Err(Failure::Usage("--repetitions must be at least 1".into()));
    }
    let runs = a.runs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>, _>>()?;
    let first = &runs[0];
    for r in &runs[1..] {
        if r.space.params() != first.space.params() {
            return Err(Failure::Usage(format!(
                "runs '{}' and '{}' use different parameter spaces",
                first.label, r.label
            )));
        }
        if r.scenario.target != first.scenario.target {
            return Err(Failure::Usage(format!(
                "runs '{}' and '{}' tune different targets",
                first.label, r.label
            )));
        }
    }
    let instances = test_instances(&a.test_instances, &first.scenario.target)?;
    fs::create_dir_all(a.out.join("validation")).with_context(|| format!("creating {}", a.out.display()))?;
    let mut labels: Vec<String> = Vec::new();
    let mut compared = Vec::with_capacity(runs.len());
    for run in &runs {
        let mut label = run.label.clone();
        let mut k = 2;
        while labels.contains(&label) {
            label = format!("{}-{k}", run.label);
            k += 1;
        }
        labels.push(label.clone());
        let matrix = validate_elites(run, &instances, a.repetitions, a.seed, a.workers)?;
        matrix.write(&a.out.join("validation").join(format!("{label}.csv")))?;
        compared.push(RunElites {
            label,
            variant: run.variant.name().to_string(),
            elites: run.elites.clone(),
            validation: matrix,
        });
    }
    let cmp = compare(&compared)?;
    let all: Vec<Configuration> = compared.iter().flat_map(|r| r.elites.iter().cloned()).collect();
    write_file(&a.out.join(compare::DEVIATION_FILE), &cmp.deviation_csv())?;
    write_file(&a.out.join(compare::INSTANCE_DEVIATION_FILE), &cmp.instance_deviation_csv())?;
    write_file(&a.out.join(compare::BEST_COUNTS_FILE), &cmp.best_counts_csv())?;
    let hist = param_distributions(&all, &first.space, compare::HISTOGRAM_BINS);
    write_file(&a.out.join(compare::PARAM_DISTRIBUTIONS_FILE), &param_distributions_csv(&hist))?;
    write_file(
        &a.out.join(compare::PARALLEL_COORDINATES_FILE),
        &parallel_coordinates_csv(&compared, &first.space)?,
    )?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "variant\tconfigs\t# best").map_err(anyhow::Error::from)?;
    for b in &cmp.best_counts {
        writeln!(stdout, "{}\t{}\t{}", b.variant, b.n_configs, b.n_best).map_err(anyhow::Error::from)?;
    }
    Ok(())
}

/// Reads a population CSV: header of parameter names (any order), one
/// configuration per row, empty fields inactive.
pub fn read_population(text: &str, space: &ParameterSpace) -> Result<Vec<Configuration>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    let mut columns = Vec::with_capacity(space.len());
    for p in space.params() {
        let k = header
            .iter()
            .position(|h| *h == p.name)
            .ok_or_else(|| anyhow!("population lacks a column for '{}'", p.name))?;
        columns.push(k);
    }
    let mut pop = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let mut values = Vec::with_capacity(space.len());
        for (p, &k) in space.params().iter().zip(&columns) {
            let field = rec.get(k).unwrap_or("");
            if field.is_empty() || field == "INACTIVE" || field == "NA" {
                values.push(None);
            } else {
                let v = p
                    .parse_value(field)
                    .ok_or_else(|| anyhow!("row {}: bad value '{field}' for '{}'", row + 1, p.name))?;
                values.push(Some(v));
            }
        }
        pop.push(Configuration::new(row as u64 + 1, values, Origin::Initial));
    }
    Ok(pop)
}

fn divcheck(a: DivcheckArgs) -> Result<(), Failure> {
    if a.bins == Some(0) {
        return Err(Failure::Usage("--bins must be at least 1".into()));
    }
    let space = crate::engine::scenario::load_space(&a.space, Path::new("."))?;
    let text = fs::read_to_string(&a.population).with_context(|| format!("reading {}", a.population.display()))?;
    let pop = read_population(&text, &space)?;
    let opts = EntropyOptions {
        n_bins: a.bins,
        inactive_category: !a.skip_inactive,
        ..EntropyOptions::default()
    };
    let report = population_diversity(&pop, &space, &opts);
    println!("{}", serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?);
    Ok(())
}

fn gen_instances(a: GenArgs) -> Result<(), Failure> {
    if a.n < 3 {
        return Err(Failure::Usage("--n must be at least 3".into()));
    }
    if a.count == 0 {
        return Err(Failure::Usage("--count must be at least 1".into()));
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut list = String::new();
    for k in 0..a.count {
        let tsp = generate_tsp(a.n, crate::targets::tsp::instance_seed(a.seed, k)).map_err(EngineError::from)?;
        let name = format!("{}.tsp", instance_id(a.n, a.seed, k));
        let path = a.out.join(&name);
        tsp.write(&path).map_err(|e| EngineError::io(&path, e))?;
        list.push_str(&name);
        list.push('\n');
    }
    write_file(&a.out.join("instances.list"), &list)?;
    eprintln!("wrote {} instances to {}", a.count, a.out.display());
    Ok(())
}
