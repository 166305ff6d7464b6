//! Cross-run comparison and the plot-ready tables derived from it.

use std::collections::BTreeMap;

use super::validate::ValidationMatrix;
use super::EngineError;
use crate::space::{Configuration, Domain, ParameterSpace};

pub const DEVIATION_FILE: &str = "deviation.csv";
pub const INSTANCE_DEVIATION_FILE: &str = "instance_deviation.csv";
pub const BEST_COUNTS_FILE: &str = "best_counts.csv";
pub const PARAM_DISTRIBUTIONS_FILE: &str = "param_distributions.csv";
pub const PARALLEL_COORDINATES_FILE: &str = "parallel_coordinates.csv";

/// Number of equal-width bins in parameter histograms.
pub const HISTOGRAM_BINS: usize = 20;

/// The final elites of one run with their validation results.
#[derive(Debug, Clone, PartialEq)]
pub struct RunElites {
    pub label: String,
    pub variant: String,
    /// Best first.
    pub elites: Vec<Configuration>,
    pub validation: ValidationMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationRow {
    pub run: String,
    pub variant: String,
    pub config_id: u64,
    /// 1 for the run's best elite.
    pub elite_rank: usize,
    pub mean_cost: f64,
    pub deviation_abs: f64,
    pub deviation_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRow {
    pub run: String,
    pub variant: String,
    pub config_id: u64,
    pub instance_id: String,
    pub cost: f64,
    pub deviation_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestCount {
    pub variant: String,
    pub n_configs: usize,
    /// Test instances on which this variant produced the best configuration.
    pub n_best: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Best mean cost over all configurations of all runs.
    pub best_mean: f64,
    pub deviations: Vec<DeviationRow>,
    pub instances: Vec<InstanceRow>,
    pub best_counts: Vec<BestCount>,
}

/// Relative deviation in percent; zero when both costs are zero.
pub fn deviation_pct(f: f64, best: f64) -> f64 {
    if f == best {
        0.0
    } else {
        (f - best) / best.abs() * 100.0
    }
}

struct Entry<'a> {
    run: &'a RunElites,
    rank: usize,
    config: &'a Configuration,
    costs: &'a [f64],
    mean: f64,
}

fn entries(runs: &[RunElites]) -> Result<Vec<Entry<'_>>, EngineError> {
    let Some(first) = runs.first() else {
        return Err(EngineError::Scenario("nothing to compare".into()));
    };
    let mut out = Vec::new();
    for run in runs {
        if run.validation.instance_ids != first.validation.instance_ids {
            return Err(EngineError::Scenario(format!(
                "run '{}' was validated on a different test set than '{}'",
                run.label, first.label
            )));
        }
        for (rank, config) in run.elites.iter().enumerate() {
            let costs = run.validation.row(config.id).ok_or_else(|| {
                EngineError::Scenario(format!("run '{}' has no validation row for configuration {}", run.label, config.id))
            })?;
            out.push(Entry {
                run,
                rank: rank + 1,
                config,
                costs,
                mean: costs.iter().sum::<f64>() / costs.len().max(1) as f64,
            });
        }
    }
    Ok(out)
}

/// Deviation of every elite from the cross-run best, per-instance
/// deviations, and per-variant counts of instances won. Instance ties go
/// to the earliest run, then to the better elite rank.
pub fn compare(runs: &[RunElites]) -> Result<Comparison, EngineError> {
    if runs.len() < 2 {
        return Err(EngineError::Scenario("compare needs at least two runs".into()));
    }
    let entries = entries(runs)?;
    if entries.is_empty() {
        return Err(EngineError::Scenario("the runs have no elites".into()));
    }
    let best_mean = entries.iter().map(|e| e.mean).fold(f64::INFINITY, f64::min);
    let deviations = entries
        .iter()
        .map(|e| DeviationRow {
            run: e.run.label.clone(),
            variant: e.run.variant.clone(),
            config_id: e.config.id,
            elite_rank: e.rank,
            mean_cost: e.mean,
            deviation_abs: e.mean - best_mean,
            deviation_pct: deviation_pct(e.mean, best_mean),
        })
        .collect();

    let instance_ids = &runs[0].validation.instance_ids;
    let mut instances = Vec::new();
    let mut wins: BTreeMap<&str, usize> = BTreeMap::new();
    for (k, id) in instance_ids.iter().enumerate() {
        let mut winner = 0;
        for (i, e) in entries.iter().enumerate() {
            if e.costs[k] < entries[winner].costs[k] {
                winner = i;
            }
        }
        let best = entries[winner].costs[k];
        *wins.entry(entries[winner].run.variant.as_str()).or_default() += 1;
        for e in &entries {
            instances.push(InstanceRow {
                run: e.run.label.clone(),
                variant: e.run.variant.clone(),
                config_id: e.config.id,
                instance_id: id.clone(),
                cost: e.costs[k],
                deviation_pct: deviation_pct(e.costs[k], best),
            });
        }
    }

    let mut best_counts: Vec<BestCount> = Vec::new();
    for run in runs {
        match best_counts.iter_mut().find(|b| b.variant == run.variant) {
            Some(b) => b.n_configs += run.elites.len(),
            None => best_counts.push(BestCount {
                variant: run.variant.clone(),
                n_configs: run.elites.len(),
                n_best: wins.get(run.variant.as_str()).copied().unwrap_or(0),
            }),
        }
    }
    Ok(Comparison {
        best_mean,
        deviations,
        instances,
        best_counts,
    })
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

impl Comparison {
    pub fn deviation_csv(&self) -> String {
        table(
            &["run", "variant", "config_id", "elite_rank", "mean_cost", "deviation_abs", "deviation_pct"],
            self.deviations.iter().map(|r| {
                vec![
                    r.run.clone(),
                    r.variant.clone(),
                    r.config_id.to_string(),
                    r.elite_rank.to_string(),
                    r.mean_cost.to_string(),
                    r.deviation_abs.to_string(),
                    r.deviation_pct.to_string(),
                ]
            }),
        )
    }

    pub fn instance_deviation_csv(&self) -> String {
        table(
            &["run", "variant", "config_id", "instance_id", "cost", "deviation_pct"],
            self.instances.iter().map(|r| {
                vec![
                    r.run.clone(),
                    r.variant.clone(),
                    r.config_id.to_string(),
                    r.instance_id.clone(),
                    r.cost.to_string(),
                    r.deviation_pct.to_string(),
                ]
            }),
        )
    }

    pub fn best_counts_csv(&self) -> String {
        table(
            &["variant", "n_configs", "n_best"],
            self.best_counts
                .iter()
                .map(|b| vec![b.variant.clone(), b.n_configs.to_string(), b.n_best.to_string()]),
        )
    }
}

/// One histogram row. Categorical values carry their label in both bounds;
/// the inactive row has neither.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramRow {
    pub param: String,
    pub bin: Bin,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bin {
    Range(f64, f64),
    Label(String),
    Inactive,
}

/// Per-parameter histograms: `bins` equal-width bins over numeric domains,
/// one row per categorical value, and an inactive row for conditional
/// parameters.
pub fn param_distributions(configs: &[Configuration], space: &ParameterSpace, bins: usize) -> Vec<HistogramRow> {
    let bins = bins.max(1);
    let mut rows = Vec::new();
    for (i, spec) in space.params().iter().enumerate() {
        let inactive = configs.iter().filter(|c| c.values[i].is_none()).count();
        match &spec.domain {
            Domain::Numeric { lb, ub } => {
                let width = (ub - lb) / bins as f64;
                let mut counts = vec![0; bins];
                for c in configs {
                    if let Some(v) = c.values[i] {
                        let k = (((v.as_f64() - lb) / width).floor().max(0.0) as usize).min(bins - 1);
                        counts[k] += 1;
                    }
                }
                for (k, count) in counts.into_iter().enumerate() {
                    let lo = lb + k as f64 * width;
                    let hi = if k + 1 == bins { *ub } else { lb + (k + 1) as f64 * width };
                    rows.push(HistogramRow {
                        param: spec.name.clone(),
                        bin: Bin::Range(lo, hi),
                        count,
                    });
                }
            }
            Domain::Categorical(labels) => {
                for (k, label) in labels.iter().enumerate() {
                    let count = configs
                        .iter()
                        .filter(|c| matches!(c.values[i], Some(crate::space::Value::Cat(x)) if x == k))
                        .count();
                    rows.push(HistogramRow {
                        param: spec.name.clone(),
                        bin: Bin::Label(label.clone()),
                        count,
                    });
                }
            }
        }
        if spec.is_conditional() || inactive > 0 {
            rows.push(HistogramRow {
                param: spec.name.clone(),
                bin: Bin::Inactive,
                count: inactive,
            });
        }
    }
    rows
}

pub fn param_distributions_csv(rows: &[HistogramRow]) -> String {
    table(
        &["param", "bin_lo", "bin_hi", "count"],
        rows.iter().map(|r| {
            let (lo, hi) = match &r.bin {
                Bin::Range(lo, hi) => (lo.to_string(), hi.to_string()),
                Bin::Label(l) => (l.clone(), l.clone()),
                Bin::Inactive => ("NA".into(), "NA".into()),
            };
            vec![r.param.clone(), lo, hi, r.count.to_string()]
        }),
    )
}

/// Parallel-coordinates table over all runs' elites: parameter values
/// (inactive as 0) and the deviation of each configuration's mean cost.
pub fn parallel_coordinates_csv(runs: &[RunElites], space: &ParameterSpace) -> Result<String, EngineError> {
    let entries = entries(runs)?;
    let best = entries.iter().map(|e| e.mean).fold(f64::INFINITY, f64::min);
    let mut header = vec!["run", "variant", "config_id"];
    header.extend(space.params().iter().map(|p| p.name.as_str()));
    header.push("deviation_pct");
    let rows = entries.iter().map(|e| {
        let mut row = vec![e.run.label.clone(), e.run.variant.clone(), e.config.id.to_string()];
        for (i, v) in e.config.values.iter().enumerate() {
            row.push(match v {
                Some(v) => space.params()[i].format_value(v),
                None => "0".into(),
            });
        }
        row.push(deviation_pct(e.mean, best).to_string());
        row
    });
    Ok(table(&header, rows))
}

/// A CSV file read back as a header and string rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn parse(text: &str) -> Result<Self, EngineError> {
        let bad = |e: csv::Error| EngineError::State(format!("csv: {e}"));
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader.headers().map_err(bad)?.iter().map(String::from).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()
            .map_err(bad)?;
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k].as_str()).collect())
    }
}
