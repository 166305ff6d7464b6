//! Candidate generation.
//!
//! The first race draws configurations uniformly from the space. Later
//! races sample around elites: numeric parameters from a normal centred on
//! the elite's value and truncated to the domain, categorical parameters
//! from a per-elite probability vector that drifts towards the elite's
//! choice. The normal's spread shrinks geometrically with the race index.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::space::{Configuration, Domain, Origin, ParamKind, ParameterSpace, ParameterSpec, Scale, Value};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerSettings {
    /// Base of the spread decay: spread at race `N_iter` is this fraction
    /// of the spread at race 1.
    pub decay_final_fraction: f64,
    /// Resampling attempts for an offspring identical to a known configuration.
    pub retry_limit: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            decay_final_fraction: 0.02,
            retry_limit: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParamModel {
    /// Standard deviation in domain units (log units for log-scale parameters).
    Numeric { spread: f64 },
    Categorical { probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliteModel {
    pub params: Vec<ParamModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingModel {
    pub n_iter: usize,
    pub iteration: usize,
    pub decay_final_fraction: f64,
    pub elites: BTreeMap<u64, EliteModel>,
}

fn sampling_width(spec: &ParameterSpec) -> f64 {
    match (&spec.domain, spec.scale) {
        (Domain::Numeric { lb, ub }, Scale::Log) => ub.ln() - lb.ln(),
        (Domain::Numeric { lb, ub }, Scale::Linear) => ub - lb,
        _ => 0.0,
    }
}

impl SamplingModel {
    pub fn new(n_iter: usize, settings: &SamplerSettings) -> Self {
        Self {
            n_iter: n_iter.max(2),
            iteration: 1,
            decay_final_fraction: settings.decay_final_fraction,
            elites: BTreeMap::new(),
        }
    }

    /// Per-race decay factor `f^(1/(N_iter-1))`.
    pub fn decay(&self) -> f64 {
        self.decay_final_fraction.powf(1.0 / (self.n_iter - 1) as f64)
    }

    /// Spread for race `j`: half the width times `decay^(j-1)`. Races past
    /// `N_iter` keep the final spread.
    pub fn spread(&self, spec: &ParameterSpec, j: usize) -> f64 {
        let exponent = j.clamp(1, self.n_iter) - 1;
        sampling_width(spec) * 0.5 * self.decay().powi(exponent as i32)
    }

    /// Mixing weight of the elite's choice into its categorical vector.
    pub fn mixing(&self, j: usize) -> f64 {
        (j as f64 / self.n_iter as f64).min(1.0)
    }

    fn fresh(&self, space: &ParameterSpace, j: usize) -> EliteModel {
        EliteModel {
            params: space
                .params()
                .iter()
                .map(|p| match p.kind {
                    ParamKind::Categorical => {
                        let k = p.cardinality().unwrap_or(1);
                        ParamModel::Categorical {
                            probs: vec![1.0 / k as f64; k],
                        }
                    }
                    _ => ParamModel::Numeric {
                        spread: self.spread(p, j),
                    },
                })
                .collect(),
        }
    }
}

/// Rebuilds the model around the new elite set for race `j`.
///
/// An elite keeps its own vectors from the previous model, or inherits its
/// parent's when it was sampled in the last race, or starts uniform.
pub fn update_model(model: &SamplingModel, elites: &[Configuration], j: usize, space: &ParameterSpace) -> SamplingModel {
    let alpha = model.mixing(j);
    let mut next = BTreeMap::new();
    for elite in elites {
        let mut m = model
            .elites
            .get(&elite.id)
            .or_else(|| match elite.origin {
                Origin::Sampled { parent, .. } => model.elites.get(&parent),
                Origin::Initial => None,
            })
            .cloned()
            .unwrap_or_else(|| model.fresh(space, j));
        for (i, spec) in space.params().iter().enumerate() {
            match &mut m.params[i] {
                ParamModel::Numeric { spread } => *spread = model.spread(spec, j),
                ParamModel::Categorical { probs } => {
                    if let Some(Value::Cat(k)) = elite.values[i] {
                        for (idx, p) in probs.iter_mut().enumerate() {
                            let hit = if idx == k { 1.0 } else { 0.0 };
                            *p = (1.0 - alpha) * *p + alpha * hit;
                        }
                        let total: f64 = probs.iter().sum();
                        probs.iter_mut().for_each(|p| *p /= total);
                    }
                }
            }
        }
        next.insert(elite.id, m);
    }
    SamplingModel {
        n_iter: model.n_iter,
        iteration: j,
        decay_final_fraction: model.decay_final_fraction,
        elites: next,
    }
}

/// Normal(mean, sd) truncated to `[lo, hi]`, by inversion.
pub fn truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    if !(sd > 0.0) || !sd.is_finite() {
        return mean.clamp(lo, hi);
    }
    let std = Normal::standard();
    let a = std.cdf((lo - mean) / sd);
    let b = std.cdf((hi - mean) / sd);
    if b - a <= f64::EPSILON {
        return mean.clamp(lo, hi);
    }
    let p = (a + u * (b - a)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
    (mean + sd * std.inverse_cdf(p)).clamp(lo, hi)
}

fn uniform_value<R: Rng + ?Sized>(spec: &ParameterSpec, rng: &mut R) -> Value {
    match (&spec.domain, spec.kind, spec.scale) {
        (Domain::Categorical(v), _, _) => Value::Cat(rng.random_range(0..v.len())),
        (Domain::Numeric { lb, ub }, ParamKind::Integer, Scale::Linear) => {
            Value::Int(rng.random_range(*lb as i64..=*ub as i64))
        }
        (Domain::Numeric { lb, ub }, kind, Scale::Log) => {
            let u: f64 = rng.random();
            let x = (lb.ln() + u * (ub.ln() - lb.ln())).exp().clamp(*lb, *ub);
            numeric_value(kind, x, *lb, *ub)
        }
        (Domain::Numeric { lb, ub }, _, Scale::Linear) => {
            let u: f64 = rng.random();
            Value::Real((lb + u * (ub - lb)).clamp(*lb, *ub))
        }
    }
}

fn numeric_value(kind: ParamKind, x: f64, lb: f64, ub: f64) -> Value {
    match kind {
        // f64::round rounds half away from zero.
        ParamKind::Integer => Value::Int(x.round().clamp(lb, ub) as i64),
        _ => Value::Real(x.clamp(lb, ub)),
    }
}

/// A full configuration drawn uniformly, respecting conditions.
fn draw_uniform<R: Rng + ?Sized>(space: &ParameterSpace, rng: &mut R) -> Vec<Option<Value>> {
    let mut values: Vec<Option<Value>> = vec![None; space.len()];
    for &i in space.order() {
        let spec = &space.params()[i];
        let active = spec.condition.as_ref().is_none_or(|c| c.evaluate(space, &values));
        if active {
            values[i] = Some(uniform_value(spec, rng));
        }
    }
    values
}

fn fingerprint(values: &[Option<Value>]) -> Vec<u64> {
    values
        .iter()
        .map(|v| match v {
            None => u64::MAX,
            Some(Value::Real(x)) => x.to_bits(),
            Some(Value::Int(x)) => *x as u64 ^ 0x5555_0000_0000_0000,
            Some(Value::Cat(k)) => *k as u64 ^ 0xAAAA_0000_0000_0000,
        })
        .collect()
}

/// `n` configurations drawn uniformly from the space. Conditional
/// parameters are drawn only when active.
pub fn initial_sample<R: Rng + ?Sized>(
    space: &ParameterSpace,
    n: usize,
    first_id: u64,
    retry_limit: usize,
    rng: &mut R,
) -> Vec<Configuration> {
    let mut seen = HashSet::new();
    (0..n)
        .map(|k| {
            let mut values = draw_uniform(space, rng);
            for _ in 0..retry_limit {
                if !seen.contains(&fingerprint(&values)) {
                    break;
                }
                values = draw_uniform(space, rng);
            }
            seen.insert(fingerprint(&values));
            Configuration::new(first_id + k as u64, values, Origin::Initial)
        })
        .collect()
}

/// One offspring of `elite` under the current model.
pub fn sample_from_elite<R: Rng + ?Sized>(
    model: &SamplingModel,
    elite: &Configuration,
    space: &ParameterSpace,
    id: u64,
    rng: &mut R,
) -> Configuration {
    let fallback;
    let em = match model.elites.get(&elite.id) {
        Some(m) => m,
        None => {
            fallback = model.fresh(space, model.iteration);
            &fallback
        }
    };
    let mut values: Vec<Option<Value>> = vec![None; space.len()];
    for (i, spec) in space.params().iter().enumerate() {
        values[i] = Some(match (&em.params[i], &spec.domain) {
            (ParamModel::Categorical { probs }, _) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = probs.len() - 1;
                for (k, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                Value::Cat(pick)
            }
            (ParamModel::Numeric { spread }, Domain::Numeric { lb, ub }) => match elite.values[i] {
                Some(v) => {
                    let x = if spec.scale == Scale::Log {
                        truncated_normal(v.as_f64().ln(), *spread, lb.ln(), ub.ln(), rng).exp()
                    } else {
                        truncated_normal(v.as_f64(), *spread, *lb, *ub, rng)
                    };
                    numeric_value(spec.kind, x, *lb, *ub)
                }
                None => uniform_value(spec, rng),
            },
            (ParamModel::Numeric { .. }, Domain::Categorical(_)) => uniform_value(spec, rng),
        });
    }
    space.apply_activation(&mut values);
    Configuration::new(
        id,
        values,
        Origin::Sampled {
            parent: elite.id,
            iteration: model.iteration,
        },
    )
}

/// `n` offspring with parents drawn uniformly among `elites`. Offspring
/// identical to `known` or to each other are resampled up to
/// `retry_limit` times and then kept.
pub fn sample_offspring<R: Rng + ?Sized>(
    model: &SamplingModel,
    elites: &[Configuration],
    known: &[Configuration],
    space: &ParameterSpace,
    n: usize,
    first_id: u64,
    retry_limit: usize,
    rng: &mut R,
) -> Vec<Configuration> {
    let mut seen: HashSet<Vec<u64>> = known.iter().map(|c| fingerprint(&c.values)).collect();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let id = first_id + k as u64;
        let mut child = None;
        for _ in 0..=retry_limit {
            let parent = &elites[rng.random_range(0..elites.len())];
            let c = sample_from_elite(model, parent, space, id, rng);
            let fresh = !seen.contains(&fingerprint(&c.values));
            child = Some(c);
            if fresh {
                break;
            }
        }
        let c = child.expect("at least one draw");
        seen.insert(fingerprint(&c.values));
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::parse_parameter_file;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ACO: &str = include_str!("../data/acotsp.params");

    #[test]
    fn uniform_real_mean() {
        let s = parse_parameter_file("p r (0, 1)").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pop = initial_sample(&s, 1000, 0, 10, &mut rng);
        let mean = pop.iter().map(|c| c.values[0].unwrap().as_f64()).sum::<f64>() / 1000.0;
        assert!((0.45..=0.55).contains(&mean), "{mean}");
    }

    #[test]
    fn uniform_categorical_frequencies() {
        let s = parse_parameter_file("c c {a, b, c}").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // Only three distinct configurations exist, so duplicates are kept
        // after the retry limit.
        let pop = initial_sample(&s, 3000, 0, 10, &mut rng);
        for k in 0..3 {
            let f = pop.iter().filter(|c| c.values[0] == Some(Value::Cat(k))).count() as f64 / 3000.0;
            assert!((0.28..=0.38).contains(&f), "{k}: {f}");
        }
    }

    #[test]
    fn conditional_parameter_only_when_active() {
        let s = parse_parameter_file(ACO).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let alg = s.index_of("algorithm").unwrap();
        let q0 = s.index_of("q0").unwrap();
        let acs = 2;
        let pop = initial_sample(&s, 500, 0, 10, &mut rng);
        for c in &pop {
            assert!(s.validate_configuration(c).is_empty());
            assert_eq!(c.values[q0].is_some(), c.values[alg] == Some(Value::Cat(acs)));
        }
    }

    #[test]
    fn spread_schedule() {
        let s = parse_parameter_file("beta r (0, 10)").unwrap();
        let m = SamplingModel::new(5, &SamplerSettings::default());
        assert!((m.spread(&s.params()[0], 5) - 0.1).abs() < 1e-12);
        assert!((m.spread(&s.params()[0], 1) - 5.0).abs() < 1e-12);
        for j in 1..8 {
            assert!(m.spread(&s.params()[0], j + 1) <= m.spread(&s.params()[0], j));
        }
    }

    #[test]
    fn categorical_update_mixes_towards_elite() {
        let s = parse_parameter_file("c c {a, b, c}").unwrap();
        let m = SamplingModel::new(4, &SamplerSettings::default());
        let elite = s.configuration_from_pairs(9, &[("c", "a")]).unwrap();
        // mixing(2) = 2/4 = 0.5
        let m = update_model(&m, &[elite], 2, &s);
        let ParamModel::Categorical { probs } = &m.elites[&9].params[0] else { panic!() };
        let want = [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0];
        for (p, w) in probs.iter().zip(want) {
            assert!((p - w).abs() < 1e-12);
        }
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn offspring_inherits_parent_vectors() {
        let s = parse_parameter_file("c c {a, b}").unwrap();
        let m0 = SamplingModel::new(4, &SamplerSettings::default());
        let parent = s.configuration_from_pairs(1, &[("c", "a")]).unwrap();
        let m1 = update_model(&m0, std::slice::from_ref(&parent), 2, &s);
        let mut child = s.configuration_from_pairs(2, &[("c", "b")]).unwrap();
        child.origin = Origin::Sampled { parent: 1, iteration: 2 };
        let m2 = update_model(&m1, &[child], 3, &s);
        let ParamModel::Categorical { probs } = &m2.elites[&2].params[0] else { panic!() };
        // Parent vector (0.75, 0.25), then mixed with weight 0.75 towards b.
        assert!((probs[0] - 0.1875).abs() < 1e-12);
        assert!((probs[1] - 0.8125).abs() < 1e-12);
    }

    #[test]
    fn zero_spread_returns_parent() {
        let s = parse_parameter_file("x r (0, 10)\nk i (0, 9)").unwrap();
        let parent = s.configuration_from_pairs(1, &[("x", "3.25"), ("k", "4")]).unwrap();
        let mut m = SamplingModel::new(3, &SamplerSettings::default());
        m = update_model(&m, std::slice::from_ref(&parent), 2, &s);
        for pm in m.elites.get_mut(&1).unwrap().params.iter_mut() {
            *pm = ParamModel::Numeric { spread: 0.0 };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = sample_from_elite(&m, &parent, &s, 5, &mut rng);
        assert_eq!(c.values, parent.values);
    }

    #[test]
    fn narrow_spread_concentrates_offspring() {
        let s = parse_parameter_file("beta r (0, 10)").unwrap();
        let parent = s.configuration_from_pairs(1, &[("beta", "5")]).unwrap();
        let mut m = update_model(&SamplingModel::new(5, &SamplerSettings::default()), std::slice::from_ref(&parent), 5, &s);
        assert!((m.spread(&s.params()[0], 5) - 0.1).abs() < 1e-12);
        m.iteration = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let inside = (0..1000)
            .filter(|k| {
                let v = sample_from_elite(&m, &parent, &s, *k, &mut rng).values[0].unwrap().as_f64();
                (4.6..=5.4).contains(&v)
            })
            .count();
        assert!(inside >= 990, "{inside}");
    }

    #[test]
    fn categorical_draw_follows_vector() {
        let s = parse_parameter_file(ACO).unwrap();
        let alg = s.index_of("algorithm").unwrap();
        let parent = s
            .configuration_from_pairs(
                1,
                &[
                    ("algorithm", "acs"),
                    ("localsearch", "0"),
                    ("alpha", "1"),
                    ("beta", "2"),
                    ("rho", "0.5"),
                    ("ants", "10"),
                    ("nnls", "10"),
                    ("q0", "0.5"),
                ],
            )
            .unwrap();
        let mut m = update_model(&SamplingModel::new(5, &SamplerSettings::default()), std::slice::from_ref(&parent), 2, &s);
        m.elites.get_mut(&1).unwrap().params[alg] = ParamModel::Categorical {
            probs: vec![0.03, 0.03, 0.9, 0.04],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let hits = (0..2000)
            .filter(|k| sample_from_elite(&m, &parent, &s, *k, &mut rng).values[alg] == Some(Value::Cat(2)))
            .count();
        let f = hits as f64 / 2000.0;
        assert!((0.85..=0.95).contains(&f), "{f}");
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let s = parse_parameter_file(ACO).unwrap();
        let a = initial_sample(&s, 50, 0, 10, &mut ChaCha8Rng::seed_from_u64(5));
        let b = initial_sample(&s, 50, 0, 10, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        let m = update_model(&SamplingModel::new(5, &SamplerSettings::default()), &a[..5], 2, &s);
        let x = sample_offspring(&m, &a[..5], &a, &s, 40, 100, 10, &mut ChaCha8Rng::seed_from_u64(6));
        let y = sample_offspring(&m, &a[..5], &a, &s, 40, 100, 10, &mut ChaCha8Rng::seed_from_u64(6));
        assert_eq!(x, y);
    }

    #[test]
    fn duplicates_are_avoided_when_possible() {
        let s = parse_parameter_file("c c {a, b, c, d}\nk i (0, 3)").unwrap();
        let pop = initial_sample(&s, 10, 0, 10, &mut ChaCha8Rng::seed_from_u64(2));
        let distinct: HashSet<Vec<u64>> = pop.iter().map(|c| fingerprint(&c.values)).collect();
        assert_eq!(distinct.len(), 10);
    }

    #[test]
    fn log_scale_samples_stay_in_domain() {
        let s = parse_parameter_file("lr r (0.0001, 1) log\nn i (1, 1000) log").unwrap();
        let pop = initial_sample(&s, 2000, 0, 10, &mut ChaCha8Rng::seed_from_u64(4));
        // Log-uniform: about half the mass below the geometric midpoint 0.01.
        let below = pop.iter().filter(|c| c.values[0].unwrap().as_f64() < 0.01).count() as f64 / 2000.0;
        assert!((0.45..=0.55).contains(&below), "{below}");
        let m = update_model(&SamplingModel::new(4, &SamplerSettings::default()), &pop[..3], 2, &s);
        let kids = sample_offspring(&m, &pop[..3], &pop, &s, 500, 5000, 10, &mut ChaCha8Rng::seed_from_u64(1));
        for c in &kids {
            assert!(s.validate_configuration(c).is_empty());
        }
    }

    proptest! {
        #[test]
        fn truncated_normal_stays_in_domain(
            lo in -1e3f64..1e3,
            width in 1e-6f64..1e3,
            t in 0.0f64..=1.0,
            sd in 0.0f64..1e4,
            seed in any::<u64>()
        ) {
            let hi = lo + width;
            let mean = lo + t * width;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..20 {
                let x = truncated_normal(mean, sd, lo, hi, &mut rng);
                prop_assert!(x >= lo && x <= hi);
            }
        }

        #[test]
        fn every_offspring_is_valid(seed in any::<u64>(), j in 2usize..8) {
            let s = parse_parameter_file(ACO).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pop = initial_sample(&s, 8, 0, 10, &mut rng);
            for c in &pop {
                prop_assert!(s.validate_configuration(c).is_empty());
            }
            let m = update_model(&SamplingModel::new(5, &SamplerSettings::default()), &pop[..4], j, &s);
            for pm in m.elites.values() {
                for p in &pm.params {
                    if let ParamModel::Categorical { probs } = p {
                        prop_assert!(probs.iter().all(|p| *p >= 0.0));
                        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    }
                }
            }
            let kids = sample_offspring(&m, &pop[..4], &pop, &s, 30, 100, 10, &mut rng);
            for c in &kids {
                prop_assert!(s.validate_configuration(c).is_empty(), "{:?}", s.validate_configuration(c));
            }
        }
    }
}
