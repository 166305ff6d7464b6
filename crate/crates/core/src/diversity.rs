//! Diversity of configuration populations.
//!
//! Two views are provided: the per-parameter normalized Shannon entropy
//! and its mean over all parameters, and Gower's mixed-type dissimilarity
//! between a configuration and the mean configuration of a population.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::space::{Configuration, Origin, ParamKind, ParameterSpace, ParameterSpec, Value};

/// Denominator used to scale entropy into [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// `ln` of the number of cells a value can fall into.
    #[default]
    Cells,
    /// `ln` of the number of observations.
    Observations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntropyOptions {
    pub normalization: Normalization,
    /// Bin count for real parameters; defaults to the number of observations.
    pub n_bins: Option<usize>,
    /// Count inactive values of conditional parameters as their own cell.
    pub inactive_category: bool,
}

impl Default for EntropyOptions {
    fn default() -> Self {
        Self {
            normalization: Normalization::Cells,
            n_bins: None,
            inactive_category: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    /// Normalized entropy per parameter, in space order.
    pub entropy: Vec<(String, f64)>,
    /// Mean of the per-parameter entropies.
    pub diversity: f64,
    pub n: usize,
    pub p: usize,
}

const INACTIVE_CELL: usize = usize::MAX;

/// Cell index of a value: category index, integer offset, or bin number.
pub(crate) fn cell_of(value: &Option<Value>, spec: &ParameterSpec, n_bins: usize) -> usize {
    let Some(v) = value else {
        return INACTIVE_CELL;
    };
    match (v, spec.kind) {
        (Value::Cat(k), _) => *k,
        (Value::Int(x), _) => {
            let (lb, _) = spec.bounds().unwrap_or((0.0, 0.0));
            (*x as f64 - lb).max(0.0) as usize
        }
        (Value::Real(x), _) => {
            let (lb, ub) = spec.bounds().unwrap_or((0.0, 1.0));
            let t = (x - lb) / (ub - lb) * n_bins as f64;
            if t <= 0.0 {
                0
            } else {
                (t.floor() as usize).min(n_bins.saturating_sub(1))
            }
        }
    }
}

/// Number of cells available to `n` observations of `spec`.
pub(crate) fn cell_count(spec: &ParameterSpec, n: usize, n_bins: usize, opts: &EntropyOptions) -> usize {
    let base = match spec.kind {
        ParamKind::Categorical => spec.cardinality().unwrap_or(1),
        ParamKind::Integer => spec.cardinality().unwrap_or(1).min(n),
        ParamKind::Real => n_bins,
    };
    base + usize::from(spec.is_conditional() && opts.inactive_category)
}

/// `-sum p ln p / ln(cells)` with `0 ln 0 = 0`; zero when fewer than two cells.
pub(crate) fn entropy_from_counts<I: IntoIterator<Item = usize>>(counts: I, n: usize, cells: usize) -> f64 {
    if n == 0 || cells <= 1 {
        return 0.0;
    }
    let n_f = n as f64;
    let h: f64 = counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n_f;
            p * (1.0 / p).ln()
        })
        .sum();
    (h / (cells as f64).ln()).clamp(0.0, 1.0)
}

/// Normalized Shannon entropy of one parameter's observed values.
pub fn normalized_entropy(values: &[Option<Value>], spec: &ParameterSpec, opts: &EntropyOptions) -> f64 {
    let observed: Vec<&Option<Value>> = values
        .iter()
        .filter(|v| v.is_some() || opts.inactive_category)
        .collect();
    let n = observed.len();
    if n == 0 {
        return 0.0;
    }
    let n_bins = opts.n_bins.unwrap_or(n).max(1);
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for v in observed {
        *counts.entry(cell_of(v, spec, n_bins)).or_default() += 1;
    }
    let cells = match opts.normalization {
        Normalization::Cells => cell_count(spec, n, n_bins, opts),
        Normalization::Observations => n,
    };
    entropy_from_counts(counts.into_values(), n, cells)
}

/// Mean normalized entropy across all parameters of the space.
pub fn population_diversity(pop: &[Configuration], space: &ParameterSpace, opts: &EntropyOptions) -> DiversityReport {
    let entropy: Vec<(String, f64)> = space
        .params()
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let column: Vec<Option<Value>> = pop.iter().map(|c| c.values[j]).collect();
            (spec.name.clone(), normalized_entropy(&column, spec, opts))
        })
        .collect();
    let p = entropy.len();
    let diversity = if p == 0 {
        0.0
    } else {
        entropy.iter().map(|(_, h)| h).sum::<f64>() / p as f64
    };
    DiversityReport {
        entropy,
        diversity,
        n: pop.len(),
        p,
    }
}

/// Population diversity of many subsets of one fixed population, with the
/// cell assignments precomputed. Gives the same value as
/// [`population_diversity`] on the selected members.
pub(crate) struct SubsetDiversity<'a> {
    space: &'a ParameterSpace,
    opts: EntropyOptions,
    active: Vec<Vec<bool>>,
    /// `cells[b][i][j]`: cell of member `i`, parameter `j`, with `b` bins.
    cells: Vec<Vec<Vec<usize>>>,
}

impl<'a> SubsetDiversity<'a> {
    /// Prepares subsets of up to `max_size` members.
    pub(crate) fn new(pop: &[Configuration], space: &'a ParameterSpace, opts: &EntropyOptions, max_size: usize) -> Self {
        let bin_counts: Vec<usize> = match opts.n_bins {
            Some(b) => vec![b.max(1)],
            None => (1..=max_size.max(1)).collect(),
        };
        let mut cells = vec![Vec::new(); max_size.max(1) + 1];
        for &b in &bin_counts {
            let slot = if opts.n_bins.is_some() { 0 } else { b };
            cells[slot] = pop
                .iter()
                .map(|c| {
                    space
                        .params()
                        .iter()
                        .enumerate()
                        .map(|(j, spec)| cell_of(&c.values[j], spec, b))
                        .collect()
                })
                .collect();
        }
        let active = pop.iter().map(|c| c.values.iter().map(Option::is_some).collect()).collect();
        Self {
            space,
            opts: *opts,
            active,
            cells,
        }
    }

    pub(crate) fn diversity(&self, members: &[usize]) -> f64 {
        let p = self.space.len();
        if p == 0 {
            return 0.0;
        }
        let mut counts: Vec<(usize, usize)> = Vec::with_capacity(members.len());
        let mut total = 0.0;
        for (j, spec) in self.space.params().iter().enumerate() {
            let observed: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&i| self.opts.inactive_category || self.active[i][j])
                .collect();
            let n = observed.len();
            if n == 0 {
                continue;
            }
            let n_bins = self.opts.n_bins.unwrap_or(n).max(1);
            let table = &self.cells[if self.opts.n_bins.is_some() { 0 } else { n_bins }];
            counts.clear();
            for &i in &observed {
                let cell = table[i][j];
                match counts.iter_mut().find(|(c, _)| *c == cell) {
                    Some((_, k)) => *k += 1,
                    None => counts.push((cell, 1)),
                }
            }
            let cells = match self.opts.normalization {
                Normalization::Cells => cell_count(spec, n, n_bins, &self.opts),
                Normalization::Observations => n,
            };
            total += entropy_from_counts(counts.iter().map(|&(_, k)| k), n, cells);
        }
        total / p as f64
    }
}

/// Gower dissimilarity over the parameters active in both configurations.
///
/// Categorical parameters contribute 0 on a match and 1 otherwise, numeric
/// parameters their absolute difference over the declared range. When no
/// parameter is comparable the distance is 1.
pub fn gower_distance(a: &Configuration, b: &Configuration, space: &ParameterSpace) -> f64 {
    let mut total = 0.0;
    let mut comparable = 0usize;
    for (j, spec) in space.params().iter().enumerate() {
        let (Some(x), Some(y)) = (&a.values[j], &b.values[j]) else {
            continue;
        };
        comparable += 1;
        total += match (x, y) {
            (Value::Cat(p), Value::Cat(q)) => f64::from(u8::from(p != q)),
            _ => {
                let r = spec.range().unwrap_or(1.0);
                ((x.as_f64() - y.as_f64()).abs() / r).min(1.0)
            }
        };
    }
    if comparable == 0 {
        1.0
    } else {
        total / comparable as f64
    }
}

/// Synthetic centre of a population: per-parameter mode for categorical
/// parameters (ties broken uniformly at random) and the mean of the active
/// values for numeric ones. Used only as a distance anchor.
pub fn mean_configuration<R: Rng + ?Sized>(pop: &[Configuration], space: &ParameterSpace, rng: &mut R) -> Configuration {
    let mut values: Vec<Option<Value>> = vec![None; space.len()];
    for (j, spec) in space.params().iter().enumerate() {
        let active: Vec<Value> = pop.iter().filter_map(|c| c.values[j]).collect();
        if active.is_empty() {
            continue;
        }
        values[j] = Some(match spec.kind {
            ParamKind::Categorical => {
                let k = spec.cardinality().unwrap_or(0);
                let mut counts = vec![0usize; k];
                for v in &active {
                    if let Value::Cat(i) = v {
                        counts[*i] += 1;
                    }
                }
                let top = counts.iter().copied().max().unwrap_or(0);
                let modes: Vec<usize> = (0..k).filter(|&i| counts[i] == top).collect();
                let pick = if modes.len() > 1 {
                    modes[rng.random_range(0..modes.len())]
                } else {
                    modes[0]
                };
                Value::Cat(pick)
            }
            ParamKind::Integer => {
                let mean = active.iter().map(Value::as_f64).sum::<f64>() / active.len() as f64;
                Value::Int(mean.round() as i64)
            }
            ParamKind::Real => Value::Real(active.iter().map(Value::as_f64).sum::<f64>() / active.len() as f64),
        });
    }
    space.apply_activation(&mut values);
    Configuration::new(u64::MAX, values, Origin::Initial)
}

/// Gower distance from the mean configuration of `pop` to `candidate`.
pub fn set_distance<R: Rng + ?Sized>(
    pop: &[Configuration],
    candidate: &Configuration,
    space: &ParameterSpace,
    rng: &mut R,
) -> f64 {
    let anchor = mean_configuration(pop, space, rng);
    gower_distance(&anchor, candidate, space)
}
