//! Run directories: incremental logs, the elite file and the resume blob.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

use super::{EngineError, IterationReport, RunObserver, RunState, Scenario};
use crate::racer::EvalRecord;
use crate::selector::Strategy;
use crate::space::{Configuration, Origin, ParamKind, ParameterSpace, Value};

pub const SCENARIO_FILE: &str = "scenario.json";
pub const EVALS_FILE: &str = "evals.csv";
pub const DIVERSITY_FILE: &str = "diversity.csv";
pub const RACES_FILE: &str = "races.csv";
pub const ELITES_FILE: &str = "elites.json";
pub const STATE_FILE: &str = "state.bin";

const STATE_MAGIC: &[u8; 4] = b"RTST";
pub const STATE_VERSION: u32 = 1;

/// Marker written for inactive parameters.
pub const INACTIVE: &str = "INACTIVE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
struct LogLengths {
    evals: u64,
    diversity: u64,
    races: u64,
}

#[derive(Serialize, Deserialize)]
struct Persisted {
    logs: LogLengths,
    state: RunState,
}

/// An open run directory that records a run as it progresses.
pub struct RunDir {
    pub path: PathBuf,
    space: ParameterSpace,
    strategy: Strategy,
    evals: File,
    diversity: File,
    races: File,
}

fn append(path: &Path) -> Result<File, EngineError> {
    OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| EngineError::io(path, e))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

fn truncate(path: &Path, len: u64) -> Result<(), EngineError> {
    let f = OpenOptions::new()
        .write(true)
        .open(path)
        .map_err(|e| EngineError::io(path, e))?;
    let actual = f.metadata().map_err(|e| EngineError::io(path, e))?.len();
    if actual < len {
        return Err(EngineError::State(format!(
            "{} is shorter ({actual} bytes) than the saved state expects ({len})",
            path.display()
        )));
    }
    f.set_len(len).map_err(|e| EngineError::io(path, e))
}

impl RunDir {
    /// Creates (or empties) a run directory and writes the scenario echo
    /// and log headers.
    pub fn create(path: &Path, scenario: &Scenario, space: &ParameterSpace) -> Result<Self, EngineError> {
        fs::create_dir_all(path).map_err(|e| EngineError::io(path, e))?;
        for stale in [ELITES_FILE, STATE_FILE] {
            let p = path.join(stale);
            if p.exists() {
                fs::remove_file(&p).map_err(|e| EngineError::io(&p, e))?;
            }
        }
        let write = |name: &str, text: String| {
            let p = path.join(name);
            fs::write(&p, text).map_err(|e| EngineError::io(&p, e))
        };
        write(SCENARIO_FILE, scenario.to_json() + "\n")?;
        write(EVALS_FILE, format!("{}\n", EvalRecord::CSV_HEADER))?;
        let mut div_header = String::from("iteration,D");
        for p in space.params() {
            div_header.push_str(",H_");
            div_header.push_str(&p.name);
        }
        write(DIVERSITY_FILE, div_header + "\n")?;
        write(
            RACES_FILE,
            "iteration,race_budget,evaluations,candidates,survivors,elites,selection_mode\n".into(),
        )?;
        Self::open_logs(path, space.clone(), scenario.selection.strategy)
    }

    fn open_logs(path: &Path, space: ParameterSpace, strategy: Strategy) -> Result<Self, EngineError> {
        Ok(Self {
            path: path.to_path_buf(),
            space,
            strategy,
            evals: append(&path.join(EVALS_FILE))?,
            diversity: append(&path.join(DIVERSITY_FILE))?,
            races: append(&path.join(RACES_FILE))?,
        })
    }

    /// Reopens a run directory at its last saved state, discarding log
    /// lines written after it.
    pub fn resume(path: &Path) -> Result<(Self, Scenario, RunState), EngineError> {
        let scenario = Scenario::load(&path.join(SCENARIO_FILE))?;
        let space = scenario.load_space()?;
        let (state, logs) = read_state(&path.join(STATE_FILE))?;
        truncate(&path.join(EVALS_FILE), logs.evals)?;
        truncate(&path.join(DIVERSITY_FILE), logs.diversity)?;
        truncate(&path.join(RACES_FILE), logs.races)?;
        let dir = Self::open_logs(path, space, scenario.selection.strategy)?;
        Ok((dir, scenario, state))
    }

    fn lengths(&self) -> io::Result<LogLengths> {
        Ok(LogLengths {
            evals: self.evals.metadata()?.len(),
            diversity: self.diversity.metadata()?.len(),
            races: self.races.metadata()?.len(),
        })
    }

    pub fn write_elites(&self, iteration: usize, elites: &[Configuration]) -> io::Result<()> {
        let text = elites_json(&self.space, self.strategy, iteration, elites);
        write_atomic(&self.path.join(ELITES_FILE), text.as_bytes())
    }

    pub fn write_state(&self, state: &RunState) -> io::Result<()> {
        let persisted = Persisted {
            logs: self.lengths()?,
            state: state.clone(),
        };
        let mut bytes = STATE_MAGIC.to_vec();
        bytes.extend_from_slice(&STATE_VERSION.to_le_bytes());
        bytes.extend(serde_json::to_vec(&persisted).map_err(io::Error::other)?);
        write_atomic(&self.path.join(STATE_FILE), &bytes)
    }
}

impl RunObserver for RunDir {
    fn on_evaluations(&mut self, records: &[EvalRecord]) -> io::Result<()> {
        let mut buf = String::new();
        for r in records {
            buf.push_str(&r.csv_line());
            buf.push('\n');
        }
        self.evals.write_all(buf.as_bytes())
    }

    fn on_iteration(&mut self, report: &IterationReport, state: &RunState) -> io::Result<()> {
        let mut row = format!("{},{}", report.iteration, report.diversity.diversity);
        for (_, h) in &report.diversity.entropy {
            row.push_str(&format!(",{h}"));
        }
        writeln!(self.diversity, "{row}")?;
        let ids: Vec<String> = report.elites.iter().map(u64::to_string).collect();
        let mode = report
            .mode
            .map(|m| serde_json::to_value(m).ok().and_then(|v| v.as_str().map(String::from)))
            .flatten()
            .unwrap_or_default();
        writeln!(
            self.races,
            "{},{},{},{},{},{},{}",
            report.iteration,
            report.race_budget,
            report.evaluations,
            report.candidates,
            report.survivors,
            ids.join(" "),
            mode
        )?;
        self.evals.sync_data()?;
        self.write_elites(report.iteration, &state.elites)?;
        self.write_state(state)
    }
}

fn read_state(path: &Path) -> Result<(RunState, LogLengths), EngineError> {
    let bytes = fs::read(path).map_err(|e| EngineError::io(path, e))?;
    if bytes.len() < 8 || &bytes[..4] != STATE_MAGIC {
        return Err(EngineError::State(format!("{} is not a run state file", path.display())));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("four bytes"));
    if version != STATE_VERSION {
        return Err(EngineError::State(format!(
            "unsupported state version {version} (expected {STATE_VERSION})"
        )));
    }
    let p: Persisted = serde_json::from_slice(&bytes[8..]).map_err(|e| EngineError::State(e.to_string()))?;
    Ok((p.state, p.logs))
}

/// Loads the resumable state of a run directory.
pub fn load_state(dir: &Path) -> Result<RunState, EngineError> {
    read_state(&dir.join(STATE_FILE)).map(|(s, _)| s)
}

fn value_json(space: &ParameterSpace, index: usize, value: &Option<Value>) -> Json {
    match value {
        None => Json::from(INACTIVE),
        Some(Value::Real(v)) => Json::from(*v),
        Some(Value::Int(v)) => Json::from(*v),
        Some(v @ Value::Cat(_)) => Json::from(space.params()[index].format_value(v)),
    }
}

/// The elite file: configurations best first, values in space order,
/// inactive parameters marked `INACTIVE`.
pub fn elites_json(space: &ParameterSpace, strategy: Strategy, iteration: usize, elites: &[Configuration]) -> String {
    let list: Vec<Json> = elites
        .iter()
        .enumerate()
        .map(|(rank, c)| {
            let values: Map<String, Json> = space
                .params()
                .iter()
                .enumerate()
                .map(|(i, p)| (p.name.clone(), value_json(space, i, &c.values[i])))
                .collect();
            let mut entry = Map::new();
            entry.insert("id".into(), c.id.into());
            entry.insert("rank".into(), (rank + 1).into());
            entry.insert("origin".into(), serde_json::to_value(c.origin).expect("origin serializes"));
            entry.insert("values".into(), Json::Object(values));
            Json::Object(entry)
        })
        .collect();
    let mut root = Map::new();
    root.insert("strategy".into(), strategy.name().into());
    root.insert("iteration".into(), iteration.into());
    root.insert("elites".into(), Json::Array(list));
    serde_json::to_string_pretty(&Json::Object(root)).expect("elites serialize") + "\n"
}

/// An elite file read back.
#[derive(Debug, Clone, PartialEq)]
pub struct EliteFile {
    pub strategy: Strategy,
    pub iteration: usize,
    pub elites: Vec<Configuration>,
}

fn parse_value(space: &ParameterSpace, index: usize, v: &Json) -> Result<Option<Value>, String> {
    let spec = &space.params()[index];
    let bad = || format!("bad value {v} for parameter '{}'", spec.name);
    match v {
        Json::String(s) if s == INACTIVE => Ok(None),
        Json::String(s) => spec.parse_value(s).map(Some).ok_or_else(bad),
        Json::Number(n) => match spec.kind {
            ParamKind::Integer => n.as_i64().map(|x| Some(Value::Int(x))).ok_or_else(bad),
            ParamKind::Real => n.as_f64().map(|x| Some(Value::Real(x))).ok_or_else(bad),
            ParamKind::Categorical => spec.parse_value(&n.to_string()).map(Some).ok_or_else(bad),
        },
        Json::Null => Ok(None),
        _ => Err(bad()),
    }
}

pub fn parse_elites(text: &str, space: &ParameterSpace) -> Result<EliteFile, EngineError> {
    let bad = |m: String| EngineError::State(format!("elite file: {m}"));
    let root: Json = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let strategy = root["strategy"]
        .as_str()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("missing strategy".into()))?;
    let iteration = root["iteration"].as_u64().unwrap_or(0) as usize;
    let list = root["elites"].as_array().ok_or_else(|| bad("missing elites".into()))?;
    let mut elites = Vec::with_capacity(list.len());
    for e in list {
        let id = e["id"].as_u64().ok_or_else(|| bad("elite without id".into()))?;
        let origin: Origin = serde_json::from_value(e["origin"].clone()).unwrap_or(Origin::Initial);
        let values = e["values"].as_object().ok_or_else(|| bad(format!("elite {id} has no values")))?;
        let mut slots = vec![None; space.len()];
        for (i, p) in space.params().iter().enumerate() {
            let v = values
                .get(&p.name)
                .ok_or_else(|| bad(format!("elite {id} lacks '{}'", p.name)))?;
            slots[i] = parse_value(space, i, v).map_err(bad)?;
        }
        elites.push(Configuration::new(id, slots, origin));
    }
    Ok(EliteFile {
        strategy,
        iteration,
        elites,
    })
}

/// Reads `elites.json` of a run directory.
pub fn read_elites(dir: &Path, space: &ParameterSpace) -> Result<EliteFile, EngineError> {
    let path = dir.join(ELITES_FILE);
    let text = fs::read_to_string(&path).map_err(|e| EngineError::io(&path, e))?;
    parse_elites(&text, space)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::builtin_space;

    #[test]
    fn elites_round_trip_with_inactive_values() {
        let space = builtin_space("acotsp").unwrap();
        let a = space
            .configuration_from_pairs(
                4,
                &[
                    ("algorithm", "ras"),
                    ("localsearch", "0"),
                    ("alpha", "1.5"),
                    ("beta", "3.25"),
                    ("rho", "0.5"),
                    ("ants", "20"),
                    ("nnls", "10"),
                    ("rasrank", "8"),
                ],
            )
            .unwrap();
        assert!(a.values.iter().any(Option::is_none));
        let text = elites_json(&space, Strategy::Gower, 3, std::slice::from_ref(&a));
        assert!(text.contains("\"INACTIVE\""));
        let back = parse_elites(&text, &space).unwrap();
        assert_eq!(back.strategy, Strategy::Gower);
        assert_eq!(back.iteration, 3);
        assert_eq!(back.elites, vec![a]);
        let first = text.find("\"algorithm\"").unwrap();
        let later = text.find("\"alpha\"").unwrap();
        assert!(first < later);
    }

    #[test]
    fn state_blob_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(STATE_FILE);
        fs::write(&p, b"nonsense").unwrap();
        assert!(matches!(read_state(&p), Err(EngineError::State(_))));
        let mut bytes = STATE_MAGIC.to_vec();
        bytes.extend_from_slice(&99u32.to_le_bytes());
        fs::write(&p, bytes).unwrap();
        assert!(read_state(&p).unwrap_err().to_string().contains("version 99"));
    }
}
