//! Re-evaluation of elites on test instances.

use std::fmt::Write as _;
use std::path::Path;

use super::EngineError;
use crate::seeds::{self, stream};
use crate::space::Configuration;
use crate::targets::{Evaluate, Instance};

/// Mean cost of each configuration (rows) on each instance (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationMatrix {
    pub config_ids: Vec<u64>,
    pub instance_ids: Vec<String>,
    pub means: Vec<Vec<f64>>,
}

impl ValidationMatrix {
    /// Mean over instances, per configuration.
    pub fn row_means(&self) -> Vec<f64> {
        self.means
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len().max(1) as f64)
            .collect()
    }

    pub fn row(&self, config_id: u64) -> Option<&[f64]> {
        self.config_ids
            .iter()
            .position(|&c| c == config_id)
            .map(|i| self.means[i].as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("config_id");
        for id in &self.instance_ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for (c, row) in self.config_ids.iter().zip(&self.means) {
            write!(out, "{c}").unwrap();
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, EngineError> {
        let bad = |m: String| EngineError::State(format!("validation table: {m}"));
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.get(0) != Some("config_id") {
            return Err(bad("first column must be config_id".into()));
        }
        let instance_ids: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let mut config_ids = Vec::new();
        let mut means = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let id = rec[0].parse().map_err(|_| bad(format!("bad config id '{}'", &rec[0])))?;
            let row = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad cost '{v}'"))))
                .collect::<Result<Vec<_>, _>>()?;
            config_ids.push(id);
            means.push(row);
        }
        Ok(Self {
            config_ids,
            instance_ids,
            means,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), EngineError> {
        std::fs::write(path, self.to_csv()).map_err(|e| EngineError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path).map_err(|e| EngineError::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Seed of repetition `rep` on `instance`; every configuration sees the
/// same seeds.
pub fn validation_seed(seed: u64, instance: &Instance, rep: usize) -> u64 {
    seeds::derive(seed, &[stream::VALIDATION, instance.key, rep as u64])
}

/// Evaluates every configuration `repetitions` times on every instance.
pub fn validate(
    target: &dyn Evaluate,
    configs: &[Configuration],
    instances: &[Instance],
    repetitions: usize,
    seed: u64,
    workers: usize,
) -> Result<ValidationMatrix, EngineError> {
    if repetitions == 0 {
        return Err(EngineError::Scenario("repetitions must be at least 1".into()));
    }
    let cells: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..instances.len()).map(move |i| (c, i)))
        .collect();
    let eval = |&(c, i): &(usize, usize)| -> Result<f64, EngineError> {
        let mut sum = 0.0;
        for rep in 0..repetitions {
            let s = validation_seed(seed, &instances[i], rep);
            sum += target.evaluate(&configs[c], &instances[i], s)?.cost;
        }
        Ok(sum / repetitions as f64)
    };
    let workers = workers.clamp(1, cells.len().max(1));
    let results: Vec<Result<f64, EngineError>> = if workers == 1 {
        cells.iter().map(eval).collect()
    } else {
        let chunk = cells.len().div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = cells
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(eval).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("validation worker panicked"))
                .collect()
        })
    };
    let flat = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(ValidationMatrix {
        config_ids: configs.iter().map(|c| c.id).collect(),
        instance_ids: instances.iter().map(|i| i.id.clone()).collect(),
        means: flat.chunks(instances.len().max(1)).map(<[f64]>::to_vec).collect(),
    })
}
