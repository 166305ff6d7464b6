//! Scenario files: everything that defines a tuning run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diversity::EntropyOptions;
use crate::racer::RaceSettings;
use crate::sampler::SamplerSettings;
use crate::seeds;
use crate::selector::{PoolFactor, SelectionSettings, Strategy};
use crate::space::{parse_parameter_file, ParameterSpace};
use crate::targets::tsp::{generate_tsp, instance_id, instance_seed};
use crate::targets::{builtin_space, Instance, TargetSpec, TspInstance};

use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Selection {
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default)]
    pub pool_factor: PoolFactor,
}

/// Where the instances of a run come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSpec {
    /// Synthetic instances sharing the optimum of `family`; they differ in
    /// their noise only. `offset` separates training from test sets.
    Synthetic {
        count: usize,
        family: u64,
        #[serde(default)]
        offset: usize,
    },
    /// Random Euclidean TSP instances.
    Tsp { count: usize, n_cities: usize, seed: u64 },
    /// Explicit instance files.
    Files { paths: Vec<PathBuf> },
    /// A text file listing one instance path per line.
    List { path: PathBuf },
}

impl InstanceSpec {
    /// Reads an instance set argument: a JSON description when the file
    /// ends in `.json`, otherwise a list of paths.
    pub fn from_argument(path: &Path) -> Result<(Self, PathBuf), EngineError> {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if path.extension().is_some_and(|e| e == "json") {
            let text = std::fs::read_to_string(path).map_err(|e| EngineError::io(path, e))?;
            let spec = serde_json::from_str(&text).map_err(|e| EngineError::Scenario(format!("{}: {e}", path.display())))?;
            Ok((spec, base))
        } else {
            Ok((
                InstanceSpec::List {
                    path: path.file_name().map(PathBuf::from).unwrap_or_else(|| path.to_path_buf()),
                },
                base,
            ))
        }
    }

    /// Builds the instances. Relative paths resolve against `base`; TSP
    /// files are parsed when `parse_tsp` is set.
    pub fn load(&self, base: &Path, parse_tsp: bool) -> Result<Vec<Instance>, EngineError> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let from_paths = |paths: Vec<PathBuf>| -> Result<Vec<Instance>, EngineError> {
            paths
                .into_iter()
                .enumerate()
                .map(|(k, p)| {
                    let id = p
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| format!("instance{k}"));
                    let key = seeds::derive(0, &[k as u64]);
                    let mut inst = Instance::named(&id, key, key);
                    if parse_tsp {
                        inst.tsp = Some(Arc::new(TspInstance::read(&p)?));
                    }
                    inst.path = Some(p);
                    Ok(inst)
                })
                .collect()
        };
        let out = match self {
            InstanceSpec::Synthetic { count, family, offset } => (0..*count)
                .map(|k| {
                    let n = (offset + k) as u64;
                    Instance::named(&format!("syn{family}-{n:04}"), seeds::derive(*family, &[n]), *family)
                })
                .collect(),
            InstanceSpec::Tsp { count, n_cities, seed } => (0..*count)
                .map(|k| {
                    let base_seed = instance_seed(*seed, k);
                    let tsp = generate_tsp(*n_cities, base_seed)?;
                    let mut inst = Instance::named(&instance_id(*n_cities, *seed, k), base_seed, base_seed);
                    inst.tsp = Some(Arc::new(tsp));
                    Ok(inst)
                })
                .collect::<Result<Vec<_>, EngineError>>()?,
            InstanceSpec::Files { paths } => from_paths(paths.iter().map(|p| resolve(p)).collect())?,
            InstanceSpec::List { path } => {
                let list = resolve(path);
                let text = std::fs::read_to_string(&list).map_err(|e| EngineError::io(&list, e))?;
                let list_dir = list.parent().map(Path::to_path_buf).unwrap_or_default();
                let paths = text
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                    .map(|l| {
                        let p = PathBuf::from(l);
                        if p.is_absolute() {
                            p
                        } else {
                            list_dir.join(p)
                        }
                    })
                    .collect();
                from_paths(paths)?
            }
        };
        if out.is_empty() {
            return Err(EngineError::Scenario("instance set is empty".into()));
        }
        let mut ids: Vec<&str> = out.iter().map(|i| i.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(EngineError::Scenario("instance ids are not unique".into()));
        }
        Ok(out)
    }
}

fn is_empty_path(p: &Path) -> bool {
    p.as_os_str().is_empty()
}

fn default_n_min() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Parameter file path, or `builtin:synthetic` / `builtin:acotsp`.
    pub space: String,
    pub target: TargetSpec,
    pub instances: InstanceSpec,
    pub budget: u64,
    #[serde(default = "default_n_min")]
    pub n_min: usize,
    #[serde(default)]
    pub selection: Selection,
    #[serde(default)]
    pub race: RaceSettings,
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub entropy: EntropyOptions,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Directory relative paths are resolved against; defaults to the
    /// directory of the scenario file.
    #[serde(default, skip_serializing_if = "is_empty_path")]
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, EngineError> {
        let mut s: Scenario = serde_json::from_str(text).map_err(|e| EngineError::Scenario(e.to_string()))?;
        s.base_dir = if is_empty_path(&s.base_dir) {
            base_dir.to_path_buf()
        } else {
            base_dir.join(&s.base_dir)
        };
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path).map_err(|e| EngineError::io(path, e))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Scenario(m));
        if self.n_min == 0 {
            return bad("n_min must be at least 1".into());
        }
        if self.budget == 0 {
            return bad("budget must be at least 1".into());
        }
        if !(self.race.alpha > 0.0 && self.race.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.race.alpha));
        }
        if self.race.first_test < 2 {
            return bad("race.first_test must be at least 2".into());
        }
        if self.race.each_test == 0 {
            return bad("race.each_test must be at least 1".into());
        }
        if !(self.sampler.decay_final_fraction > 0.0 && self.sampler.decay_final_fraction <= 1.0) {
            return bad("sampler.decay_final_fraction must lie in (0, 1]".into());
        }
        if self.selection.pool_factor.0.is_nan() || self.selection.pool_factor.0 <= 1.0 {
            return bad("selection.pool_factor must exceed 1".into());
        }
        Ok(())
    }

    pub fn load_space(&self) -> Result<ParameterSpace, EngineError> {
        load_space(&self.space, &self.base_dir)
    }

    pub fn load_instances(&self) -> Result<Vec<Instance>, EngineError> {
        self.instances
            .load(&self.base_dir, matches!(self.target, TargetSpec::AcoTsp { .. }))
    }

    pub fn selection_settings(&self) -> SelectionSettings {
        SelectionSettings {
            strategy: self.selection.strategy,
            pool_factor: self.selection.pool_factor,
            entropy: self.entropy,
        }
    }
}

/// Resolves a space argument: `builtin:<name>` or a parameter file path.
pub fn load_space(spec: &str, base_dir: &Path) -> Result<ParameterSpace, EngineError> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return builtin_space(name).ok_or_else(|| EngineError::Scenario(format!("unknown builtin space '{name}'")));
    }
    let path = if Path::new(spec).is_absolute() {
        PathBuf::from(spec)
    } else {
        base_dir.join(spec)
    };
    let text = std::fs::read_to_string(&path).map_err(|e| EngineError::io(&path, e))?;
    parse_parameter_file(&text).map_err(|e| EngineError::Scenario(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "space": "builtin:synthetic",
        "target": {"kind": "synthetic"},
        "instances": {"kind": "synthetic", "count": 4, "family": 9},
        "budget": 300
    }"#;

    #[test]
    fn defaults_fill_in() {
        let s = Scenario::from_json(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(s.n_min, 5);
        assert_eq!(s.selection.strategy, Strategy::Greedy);
        assert!(s.selection.pool_factor.0.is_infinite());
        assert_eq!(s.race.first_test, 5);
        assert_eq!(s.sampler.retry_limit, 10);
        s.validate().unwrap();
        let mut s = s;
        s.base_dir = PathBuf::from("/data/scenarios");
        let echo = Scenario::from_json(&s.to_json(), Path::new("/elsewhere")).unwrap();
        assert_eq!(echo, s);
    }

    #[test]
    fn synthetic_instances_share_the_family() {
        let s = Scenario::from_json(MINIMAL, Path::new(".")).unwrap();
        let inst = s.load_instances().unwrap();
        assert_eq!(inst.len(), 4);
        assert!(inst.iter().all(|i| i.base_seed == 9));
        assert_ne!(inst[0].key, inst[1].key);
    }

    #[test]
    fn rejects_bad_values() {
        let mut s = Scenario::from_json(MINIMAL, Path::new(".")).unwrap();
        s.n_min = 0;
        assert!(s.validate().is_err());
        let bad = MINIMAL.replace("\"budget\": 300", "\"budget\": 300, \"race\": {\"alpha\": 1.5}");
        assert!(Scenario::from_json(&bad, Path::new(".")).unwrap().validate().is_err());
        assert!(Scenario::from_json("{}", Path::new(".")).is_err());
    }

    #[test]
    fn tsp_instances_generate() {
        let spec = InstanceSpec::Tsp {
            count: 3,
            n_cities: 10,
            seed: 4,
        };
        let inst = spec.load(Path::new("."), true).unwrap();
        assert_eq!(inst.len(), 3);
        assert_eq!(inst[0].tsp.as_ref().unwrap().n_cities(), 10);
        assert_eq!(inst, spec.load(Path::new("."), true).unwrap());
    }
}
