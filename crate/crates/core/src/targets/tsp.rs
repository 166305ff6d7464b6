//! Euclidean TSP instances with rounded distances.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TargetError;
use crate::seeds::{self, stream};

/// Side of the square the cities are drawn from.
pub const COORD_MAX: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct TspInstance {
    pub coords: Vec<(f64, f64)>,
}

impl TspInstance {
    pub fn new(coords: Vec<(f64, f64)>) -> Result<Self, TargetError> {
        if coords.len() < 3 {
            return Err(TargetError::Instance(format!(
                "a TSP instance needs at least 3 cities, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(TargetError::Instance("non-finite coordinate".into()));
        }
        Ok(Self { coords })
    }

    pub fn n_cities(&self) -> usize {
        self.coords.len()
    }

    /// Rounded Euclidean distance.
    pub fn distance(&self, a: usize, b: usize) -> i64 {
        let (xa, ya) = self.coords[a];
        let (xb, yb) = self.coords[b];
        ((xa - xb).hypot(ya - yb) + 0.5).floor() as i64
    }

    /// Full symmetric distance matrix, row-major.
    pub fn distance_matrix(&self) -> Vec<i64> {
        let n = self.n_cities();
        let mut d = vec![0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = self.distance(i, j);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        d
    }

    pub fn tour_length(&self, tour: &[usize]) -> i64 {
        let n = tour.len();
        (0..n).map(|i| self.distance(tour[i], tour[(i + 1) % n])).sum()
    }

    /// File text: the city count, then one `x y` line per city.
    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.n_cities());
        for (x, y) in &self.coords {
            let _ = writeln!(s, "{x} {y}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, TargetError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let bad = |m: String| TargetError::Instance(m);
        let n: usize = lines
            .next()
            .ok_or_else(|| bad("empty instance file".into()))?
            .parse()
            .map_err(|e| bad(format!("bad city count: {e}")))?;
        let mut coords = Vec::with_capacity(n);
        for (k, line) in lines.enumerate() {
            let mut it = line.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) => coords.push((x, y)),
                _ => return Err(bad(format!("bad coordinate line {}: '{line}'", k + 2))),
            }
        }
        if coords.len() != n {
            return Err(bad(format!("expected {n} cities, found {}", coords.len())));
        }
        Self::new(coords)
    }

    pub fn read(path: &Path) -> Result<Self, TargetError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TargetError::Instance(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| TargetError::Instance(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }
}

/// Cities uniform on the square, fully determined by `base_seed`.
pub fn generate_tsp(n_cities: usize, base_seed: u64) -> Result<TspInstance, TargetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(base_seed, &[stream::TSP_COORDS]));
    let coords = (0..n_cities)
        .map(|_| (rng.random::<f64>() * COORD_MAX, rng.random::<f64>() * COORD_MAX))
        .collect();
    TspInstance::new(coords)
}

/// Identifier of the `k`-th generated instance of a family.
pub fn instance_id(n_cities: usize, family_seed: u64, k: usize) -> String {
    format!("tsp{n_cities}-s{family_seed}-{k:04}")
}

/// Base seed of the `k`-th generated instance of a family.
pub fn instance_seed(family_seed: u64, k: usize) -> u64 {
    seeds::derive(family_seed, &[stream::TSP_COORDS, k as u64])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_tsp(30, 5).unwrap();
        assert_eq!(a, generate_tsp(30, 5).unwrap());
        assert_ne!(a, generate_tsp(30, 6).unwrap());
        assert!(a.coords.iter().all(|&(x, y)| (0.0..COORD_MAX).contains(&x) && (0.0..COORD_MAX).contains(&y)));
    }

    #[test]
    fn ids_are_distinct() {
        let ids: HashSet<String> = (0..200).map(|k| instance_id(50, 3, k)).collect();
        assert_eq!(ids.len(), 200);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let a = generate_tsp(12, 1).unwrap();
        assert_eq!(TspInstance::parse(&a.to_text()).unwrap(), a);
    }

    #[test]
    fn distances_symmetric_and_nearly_metric() {
        let t = generate_tsp(25, 9).unwrap();
        for i in 0..25 {
            for j in 0..25 {
                assert_eq!(t.distance(i, j), t.distance(j, i));
                for k in 0..25 {
                    assert!(t.distance(i, k) <= t.distance(i, j) + t.distance(j, k) + 1);
                }
            }
        }
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(TspInstance::parse("2\n0 0\n1 1\n").is_err());
        assert!(TspInstance::parse("3\n0 0\n1 1\n").is_err());
        assert!(TspInstance::parse("3\n0 0\n1 x\n2 2\n").is_err());
    }
}
