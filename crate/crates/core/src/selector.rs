//! Elite selection from ranked race survivors.
//!
//! Every strategy keeps the best-ranked survivor and returns
//! `min(N_min, N_surv)` distinct survivors, best-ranked first.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::diversity::{gower_distance, mean_configuration, EntropyOptions, SubsetDiversity};
use crate::space::{Configuration, ParameterSpace};

/// Above this many candidate subsets the entropy search turns greedy.
pub const EXHAUSTIVE_LIMIT: u128 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Greedy,
    Rand,
    Entropy,
    Gower,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Greedy, Strategy::Rand, Strategy::Entropy, Strategy::Gower];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Greedy => "greedy",
            Strategy::Rand => "rand",
            Strategy::Entropy => "entropy",
            Strategy::Gower => "gower",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown strategy '{s}' (expected greedy, rand, entropy or gower)"))
    }
}

/// Pool size factor `sigma` of the random strategy; may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolFactor(pub f64);

impl Default for PoolFactor {
    fn default() -> Self {
        PoolFactor(f64::INFINITY)
    }
}

impl FromStr for PoolFactor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v = match s.trim() {
            "inf" | "infinity" | "Inf" => f64::INFINITY,
            t => t.parse::<f64>().map_err(|e| format!("bad pool factor '{t}': {e}"))?,
        };
        if v.is_nan() || v <= 1.0 {
            return Err(format!("pool factor must exceed 1, got {s}"));
        }
        Ok(PoolFactor(v))
    }
}

impl fmt::Display for PoolFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for PoolFactor {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for PoolFactor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Num(v) => v.to_string(),
            Raw::Text(t) => t,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// How the entropy strategy searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    /// All survivors fit; no search.
    All,
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EliteSet {
    pub members: Vec<Configuration>,
    pub strategy: Strategy,
    pub mode: Option<SearchMode>,
}

pub fn select_greedy(ranked: &[Configuration], n_min: usize) -> Vec<Configuration> {
    ranked.iter().take(n_min.max(1)).cloned().collect()
}

/// Best survivor plus `N_min - 1` distinct uniform draws from the next
/// `ceil(sigma N_min) - 1` survivors.
pub fn select_rand<R: Rng + ?Sized>(
    ranked: &[Configuration],
    n_min: usize,
    pool_factor: PoolFactor,
    rng: &mut R,
) -> Vec<Configuration> {
    let n_min = n_min.max(1);
    if ranked.len() <= n_min {
        return ranked.to_vec();
    }
    let cap = (pool_factor.0 * n_min as f64).ceil();
    let pool = if cap.is_finite() {
        (cap as usize).clamp(n_min, ranked.len())
    } else {
        ranked.len()
    };
    let mut picks = rand::seq::index::sample(rng, pool - 1, n_min - 1).into_vec();
    picks.sort_unstable();
    std::iter::once(&ranked[0])
        .chain(picks.into_iter().map(|k| &ranked[k + 1]))
        .cloned()
        .collect()
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u128::MAX / 1024 {
            return u128::MAX;
        }
    }
    acc
}

/// Advances `idx` to the next `k`-combination of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for t in i + 1..k {
                idx[t] = idx[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Survivor set with maximal population diversity among those containing
/// the best survivor. Exhaustive when the number of subsets is at most
/// [`EXHAUSTIVE_LIMIT`], greedy forward selection otherwise; ties go to
/// better-ranked members.
pub fn select_entropy(
    ranked: &[Configuration],
    n_min: usize,
    space: &ParameterSpace,
    opts: &EntropyOptions,
) -> (Vec<Configuration>, SearchMode) {
    let n_min = n_min.max(1);
    if ranked.len() <= n_min {
        return (ranked.to_vec(), SearchMode::All);
    }
    let scorer = SubsetDiversity::new(ranked, space, opts, n_min);
    let rest = ranked.len() - 1;
    let k = n_min - 1;
    let chosen: Vec<usize> = if binomial(rest, k) <= EXHAUSTIVE_LIMIT {
        let mut idx: Vec<usize> = (0..k).collect();
        let mut members = vec![0; n_min];
        let mut best = Vec::new();
        let mut best_d = f64::NEG_INFINITY;
        loop {
            for (slot, &i) in members[1..].iter_mut().zip(&idx) {
                *slot = i + 1;
            }
            let d = scorer.diversity(&members);
            if d > best_d {
                best_d = d;
                best = members.clone();
            }
            if k == 0 || !next_combination(&mut idx, rest) {
                break;
            }
        }
        return (best.into_iter().map(|i| ranked[i].clone()).collect(), SearchMode::Exhaustive);
    } else {
        let mut members = vec![0];
        let mut taken = vec![false; ranked.len()];
        taken[0] = true;
        while members.len() < n_min {
            let mut best = None;
            let mut best_d = f64::NEG_INFINITY;
            for i in 1..ranked.len() {
                if taken[i] {
                    continue;
                }
                members.push(i);
                let d = scorer.diversity(&members);
                members.pop();
                if d > best_d {
                    best_d = d;
                    best = Some(i);
                }
            }
            let i = best.expect("enough survivors remain");
            taken[i] = true;
            members.push(i);
        }
        members.sort_unstable();
        members
    };
    (chosen.into_iter().map(|i| ranked[i].clone()).collect(), SearchMode::Greedy)
}

/// One step of the Gower strategy: the mean configuration of the elites
/// so far, every remaining survivor's distance to it, and the pick.
#[derive(Debug, Clone, PartialEq)]
pub struct GowerStep {
    pub anchor: Configuration,
    /// `(rank index, distance)` for each remaining survivor.
    pub scores: Vec<(usize, f64)>,
    pub picked: usize,
}

/// Gower strategy with a record of every step.
pub fn select_gower_traced<R: Rng + ?Sized>(
    ranked: &[Configuration],
    n_min: usize,
    space: &ParameterSpace,
    rng: &mut R,
) -> (Vec<Configuration>, Vec<GowerStep>) {
    let n_min = n_min.max(1);
    if ranked.len() <= n_min {
        return (ranked.to_vec(), Vec::new());
    }
    let mut chosen = vec![0usize];
    let mut taken = vec![false; ranked.len()];
    taken[0] = true;
    let mut trace = Vec::new();
    while chosen.len() < n_min {
        let elites: Vec<Configuration> = chosen.iter().map(|&i| ranked[i].clone()).collect();
        let anchor = mean_configuration(&elites, space, rng);
        let scores: Vec<(usize, f64)> = (0..ranked.len())
            .filter(|&i| !taken[i])
            .map(|i| (i, gower_distance(&anchor, &ranked[i], space)))
            .collect();
        let mut picked = scores[0].0;
        let mut best = scores[0].1;
        for &(i, d) in &scores[1..] {
            if d > best {
                best = d;
                picked = i;
            }
        }
        taken[picked] = true;
        chosen.push(picked);
        trace.push(GowerStep { anchor, scores, picked });
    }
    chosen.sort_unstable();
    (chosen.into_iter().map(|i| ranked[i].clone()).collect(), trace)
}

/// Greedily adds the survivor farthest (Gower) from the mean
/// configuration of the elites chosen so far.
pub fn select_gower<R: Rng + ?Sized>(
    ranked: &[Configuration],
    n_min: usize,
    space: &ParameterSpace,
    rng: &mut R,
) -> Vec<Configuration> {
    select_gower_traced(ranked, n_min, space, rng).0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionSettings {
    pub strategy: Strategy,
    pub pool_factor: PoolFactor,
    pub entropy: EntropyOptions,
}

pub fn select<R: Rng + ?Sized>(
    ranked: &[Configuration],
    n_min: usize,
    settings: &SelectionSettings,
    space: &ParameterSpace,
    rng: &mut R,
) -> EliteSet {
    let (members, mode) = match settings.strategy {
        Strategy::Greedy => (select_greedy(ranked, n_min), None),
        Strategy::Rand => (select_rand(ranked, n_min, settings.pool_factor, rng), None),
        Strategy::Entropy => {
            let (m, mode) = select_entropy(ranked, n_min, space, &settings.entropy);
            (m, Some(mode))
        }
        Strategy::Gower => (select_gower(ranked, n_min, space, rng), None),
    };
    EliteSet {
        members,
        strategy: settings.strategy,
        mode,
    }
}
