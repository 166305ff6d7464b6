//! Miniature ant colony optimization for the symmetric TSP.
//!
//! Four pheromone-update variants share one construction procedure that
//! walks nearest-neighbour candidate lists and falls back to the best
//! remaining city when a list is exhausted. Effort is counted in
//! constructed tours.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tsp::TspInstance;
use super::TargetError;
use crate::space::{Configuration, ParameterSpace, Value};

/// Pheromone persistence of the ACS local update.
const ACS_XI: f64 = 0.1;
/// MMAS deposits from the best-so-far tour every this many iterations.
const MMAS_GLOBAL_EVERY: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    AntSystem,
    MaxMin,
    ColonySystem,
    RankBased,
}

impl Variant {
    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "as" => Some(Variant::AntSystem),
            "mmas" => Some(Variant::MaxMin),
            "acs" => Some(Variant::ColonySystem),
            "ras" => Some(Variant::RankBased),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcoParams {
    pub variant: Variant,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub ants: usize,
    pub nnls: usize,
    pub q0: f64,
    pub rasrank: usize,
    pub local_search: bool,
    pub dlb: bool,
}

impl AcoParams {
    /// Reads the parameters named as in the built-in ACO space. Inactive
    /// conditional parameters fall back to neutral values.
    pub fn from_config(space: &ParameterSpace, config: &Configuration) -> Result<Self, TargetError> {
        let slot = |name: &str| -> Result<(usize, Option<Value>), TargetError> {
            let i = space
                .index_of(name)
                .ok_or_else(|| TargetError::Config(format!("ACO space lacks parameter '{name}'")))?;
            Ok((i, config.values.get(i).copied().flatten()))
        };
        let label = |name: &str| -> Result<Option<String>, TargetError> {
            let (i, v) = slot(name)?;
            Ok(v.map(|v| space.params()[i].format_value(&v)))
        };
        let num = |name: &str| -> Result<Option<f64>, TargetError> { Ok(slot(name)?.1.map(|v| v.as_f64())) };
        let need = |name: &str, v: Option<f64>| v.ok_or_else(|| TargetError::Config(format!("'{name}' is inactive")));

        let alg = label("algorithm")?.ok_or_else(|| TargetError::Config("'algorithm' is inactive".into()))?;
        let variant =
            Variant::from_label(&alg).ok_or_else(|| TargetError::Config(format!("unknown ACO algorithm '{alg}'")))?;
        Ok(Self {
            variant,
            alpha: need("alpha", num("alpha")?)?,
            beta: need("beta", num("beta")?)?,
            rho: need("rho", num("rho")?)?,
            ants: need("ants", num("ants")?)?.max(1.0) as usize,
            nnls: need("nnls", num("nnls")?)?.max(1.0) as usize,
            q0: num("q0")?.unwrap_or(0.0),
            rasrank: num("rasrank")?.unwrap_or(1.0).max(1.0) as usize,
            local_search: label("localsearch")?.as_deref() == Some("1"),
            dlb: label("dlb")?.as_deref() == Some("1"),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcoRun {
    pub best_length: i64,
    pub best_tour: Vec<usize>,
    /// Best-so-far length after each iteration.
    pub history: Vec<i64>,
    pub tours: usize,
}

struct Colony<'a> {
    n: usize,
    nn: Vec<Vec<usize>>,
    eta_beta: Vec<f64>,
    tau: Vec<f64>,
    total: Vec<f64>,
    p: &'a AcoParams,
    tau0: f64,
}

impl Colony<'_> {
    #[inline]
    fn heuristic(&self, a: usize, b: usize) -> f64 {
        let k = a * self.n + b;
        self.tau[k].powf(self.p.alpha) * self.eta_beta[k]
    }

    fn refresh_total(&mut self) {
        for a in 0..self.n {
            for idx in 0..self.nn[a].len() {
                let b = self.nn[a][idx];
                self.total[a * self.n + b] = self.heuristic(a, b);
            }
        }
    }

    fn set_edge(&mut self, a: usize, b: usize, value: f64) {
        let n = self.n;
        self.tau[a * n + b] = value;
        self.tau[b * n + a] = value;
        self.total[a * n + b] = self.heuristic(a, b);
        self.total[b * n + a] = self.heuristic(b, a);
    }

    fn best_remaining(&self, from: usize, visited: &[bool]) -> usize {
        let mut best = usize::MAX;
        let mut best_v = f64::NEG_INFINITY;
        for c in 0..self.n {
            if !visited[c] {
                let v = self.heuristic(from, c);
                if v > best_v {
                    best_v = v;
                    best = c;
                }
            }
        }
        best
    }

    fn best_candidate(&self, from: usize, visited: &[bool]) -> Option<usize> {
        let mut best = None;
        let mut best_v = f64::NEG_INFINITY;
        for &c in &self.nn[from] {
            let v = self.total[from * self.n + c];
            if !visited[c] && v > best_v {
                best_v = v;
                best = Some(c);
            }
        }
        best
    }

    fn next_city(&self, from: usize, visited: &[bool], rng: &mut ChaCha8Rng) -> usize {
        if self.p.variant == Variant::ColonySystem && rng.random::<f64>() < self.p.q0 {
            return self
                .best_candidate(from, visited)
                .unwrap_or_else(|| self.best_remaining(from, visited));
        }
        let row = &self.total[from * self.n..(from + 1) * self.n];
        let sum: f64 = self.nn[from].iter().filter(|&&c| !visited[c]).map(|&c| row[c]).sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return self
                .best_candidate(from, visited)
                .unwrap_or_else(|| self.best_remaining(from, visited));
        }
        let mut target = rng.random::<f64>() * sum;
        let mut last = None;
        for &c in &self.nn[from] {
            if visited[c] {
                continue;
            }
            last = Some(c);
            target -= row[c];
            if target <= 0.0 {
                return c;
            }
        }
        last.expect("sum > 0 implies an unvisited candidate")
    }

    fn construct(&mut self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let n = self.n;
        let mut visited = vec![false; n];
        let mut tour = Vec::with_capacity(n);
        let mut cur = rng.random_range(0..n);
        visited[cur] = true;
        tour.push(cur);
        for _ in 1..n {
            let next = self.next_city(cur, &visited, rng);
            visited[next] = true;
            tour.push(next);
            if self.p.variant == Variant::ColonySystem {
                let k = cur * n + next;
                let v = (1.0 - ACS_XI) * self.tau[k] + ACS_XI * self.tau0;
                self.set_edge(cur, next, v);
            }
            cur = next;
        }
        if self.p.variant == Variant::ColonySystem {
            let (a, b) = (tour[n - 1], tour[0]);
            let v = (1.0 - ACS_XI) * self.tau[a * n + b] + ACS_XI * self.tau0;
            self.set_edge(a, b, v);
        }
        tour
    }

    fn evaporate(&mut self) {
        let keep = 1.0 - self.p.rho;
        self.tau.iter_mut().for_each(|t| *t *= keep);
    }

    fn deposit(&mut self, tour: &[usize], amount: f64) {
        let n = self.n;
        for i in 0..n {
            let (a, b) = (tour[i], tour[(i + 1) % n]);
            self.tau[a * n + b] += amount;
            self.tau[b * n + a] += amount;
        }
    }
}

fn tour_length(dist: &[i64], n: usize, tour: &[usize]) -> i64 {
    (0..n).map(|i| dist[tour[i] * n + tour[(i + 1) % n]]).sum()
}

fn nearest_neighbour_length(dist: &[i64], n: usize) -> i64 {
    let mut visited = vec![false; n];
    let mut cur = 0;
    visited[0] = true;
    let mut len = 0;
    for _ in 1..n {
        let next = (0..n)
            .filter(|&c| !visited[c])
            .min_by_key(|&c| dist[cur * n + c])
            .expect("unvisited city");
        len += dist[cur * n + next];
        visited[next] = true;
        cur = next;
    }
    len + dist[cur * n]
}

/// Reverses the cyclic tour segment from position `i` forward to `j`.
fn reverse_segment(tour: &mut [usize], pos: &mut [usize], mut i: usize, mut j: usize) {
    let n = tour.len();
    let len = (j + n - i) % n + 1;
    for _ in 0..len / 2 {
        tour.swap(i, j);
        pos[tour[i]] = i;
        pos[tour[j]] = j;
        i = (i + 1) % n;
        j = (j + n - 1) % n;
    }
}

/// First-improvement 2-opt over neighbour lists, optionally with
/// don't-look bits. Returns the length reduction.
pub fn two_opt(tour: &mut [usize], dist: &[i64], nn: &[Vec<usize>], use_dlb: bool, rng: &mut impl Rng) -> i64 {
    let n = tour.len();
    if n < 4 {
        return 0;
    }
    let d = |a: usize, b: usize| dist[a * n + b];
    let mut pos = vec![0; n];
    for (i, &c) in tour.iter().enumerate() {
        pos[c] = i;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut dont_look = vec![false; n];
    let mut total_gain = 0;
    let mut improved = true;
    while improved {
        improved = false;
        for &c1 in &order {
            if use_dlb && dont_look[c1] {
                continue;
            }
            let mut mv = None;
            let s1 = tour[(pos[c1] + 1) % n];
            let radius = d(c1, s1);
            for &h in &nn[c1] {
                let d1h = d(c1, h);
                if d1h >= radius {
                    break;
                }
                let sh = tour[(pos[h] + 1) % n];
                if h == s1 || sh == c1 {
                    continue;
                }
                let gain = radius + d(h, sh) - d1h - d(s1, sh);
                if gain > 0 {
                    mv = Some((c1, h, gain));
                    break;
                }
            }
            if mv.is_none() {
                let p1 = tour[(pos[c1] + n - 1) % n];
                let radius = d(p1, c1);
                for &h in &nn[c1] {
                    let d1h = d(c1, h);
                    if d1h >= radius {
                        break;
                    }
                    let ph = tour[(pos[h] + n - 1) % n];
                    if h == p1 || ph == c1 {
                        continue;
                    }
                    let gain = radius + d(ph, h) - d1h - d(p1, ph);
                    if gain > 0 {
                        mv = Some((p1, ph, gain));
                        break;
                    }
                }
            }
            match mv {
                Some((a, b, gain)) => {
                    // Replace edges (a, a+) and (b, b+) by (a, b) and (a+, b+).
                    let a_next = tour[(pos[a] + 1) % n];
                    let b_next = tour[(pos[b] + 1) % n];
                    let inner = (pos[b] + n - pos[a_next]) % n + 1;
                    let (from, to) = if inner <= n / 2 {
                        (pos[a_next], pos[b])
                    } else {
                        (pos[b_next], pos[a])
                    };
                    reverse_segment(tour, &mut pos, from, to);
                    for c in [a, a_next, b, b_next] {
                        dont_look[c] = false;
                    }
                    total_gain += gain;
                    improved = true;
                }
                None => dont_look[c1] = true,
            }
        }
    }
    total_gain
}

/// Nearest-neighbour lists of length `k` (clamped to `n - 1`), ties by index.
pub fn neighbour_lists(dist: &[i64], n: usize, k: usize) -> Vec<Vec<usize>> {
    let k = k.clamp(1, n - 1);
    (0..n)
        .map(|a| {
            let mut others: Vec<usize> = (0..n).filter(|&b| b != a).collect();
            others.sort_by_key(|&b| (dist[a * n + b], b));
            others.truncate(k);
            others
        })
        .collect()
}

/// Runs the colony until `tour_budget` tours have been built.
pub fn run_aco(instance: &TspInstance, params: &AcoParams, tour_budget: usize, seed: u64) -> AcoRun {
    let n = instance.n_cities();
    let dist = instance.distance_matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nn = neighbour_lists(&dist, n, params.nnls);
    let ants = params.ants.max(1);
    let rasrank = params.rasrank.clamp(1, ants);
    let rho = params.rho.clamp(1e-6, 1.0);
    let c_nn = nearest_neighbour_length(&dist, n).max(1) as f64;
    let tau0 = match params.variant {
        Variant::AntSystem => ants as f64 / c_nn,
        Variant::MaxMin => 1.0 / (rho * c_nn),
        Variant::ColonySystem => 1.0 / (n as f64 * c_nn),
        Variant::RankBased => 0.5 * rasrank as f64 * (rasrank as f64 - 1.0).max(1.0) / (rho * c_nn),
    };
    let eta_beta = dist
        .iter()
        .map(|&d| (1.0 / (d as f64 + 0.1)).powf(params.beta))
        .collect();
    let mut colony = Colony {
        n,
        nn,
        eta_beta,
        tau: vec![tau0; n * n],
        total: vec![0.0; n * n],
        p: params,
        tau0,
    };
    colony.refresh_total();

    let mut best_tour: Vec<usize> = (0..n).collect();
    let mut best_length = i64::MAX;
    let mut history = Vec::new();
    let mut tours = 0;
    let mut iteration = 0;
    while tours < tour_budget.max(1) {
        iteration += 1;
        let m = ants.min(tour_budget.max(1) - tours);
        let mut colony_tours: Vec<(i64, Vec<usize>)> = Vec::with_capacity(m);
        for _ in 0..m {
            let mut tour = colony.construct(&mut rng);
            if params.local_search {
                two_opt(&mut tour, &dist, &colony.nn, params.dlb, &mut rng);
            }
            colony_tours.push((tour_length(&dist, n, &tour), tour));
        }
        tours += m;
        colony_tours.sort_by_key(|(len, _)| *len);
        if colony_tours[0].0 < best_length {
            best_length = colony_tours[0].0;
            best_tour = colony_tours[0].1.clone();
        }
        history.push(best_length);
        if tours >= tour_budget {
            break;
        }
        let lbs = best_length as f64;
        match params.variant {
            Variant::AntSystem => {
                colony.evaporate();
                for (len, tour) in &colony_tours {
                    colony.deposit(tour, 1.0 / *len as f64);
                }
            }
            Variant::RankBased => {
                colony.evaporate();
                for (r, (len, tour)) in colony_tours.iter().take(rasrank - 1).enumerate() {
                    colony.deposit(tour, (rasrank - 1 - r) as f64 / *len as f64);
                }
                colony.deposit(&best_tour, rasrank as f64 / lbs);
            }
            Variant::MaxMin => {
                colony.evaporate();
                if iteration % MMAS_GLOBAL_EVERY == 0 {
                    colony.deposit(&best_tour, 1.0 / lbs);
                } else {
                    let (len, tour) = &colony_tours[0];
                    colony.deposit(tour, 1.0 / *len as f64);
                }
                let tau_max = 1.0 / (rho * lbs);
                let tau_min = tau_max / (2.0 * n as f64);
                colony.tau.iter_mut().for_each(|t| *t = t.clamp(tau_min, tau_max));
            }
            Variant::ColonySystem => {
                for i in 0..n {
                    let (a, b) = (best_tour[i], best_tour[(i + 1) % n]);
                    let v = (1.0 - rho) * colony.tau[a * n + b] + rho / lbs;
                    colony.set_edge(a, b, v);
                }
            }
        }
        if params.variant != Variant::ColonySystem {
            colony.refresh_total();
        }
    }
    AcoRun {
        best_length,
        best_tour,
        history,
        tours,
    }
}
