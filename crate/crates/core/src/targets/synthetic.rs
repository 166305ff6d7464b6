//! Synthetic mixed-type target with a known optimum.
//!
//! cost = sum_k (x_k - t_k)^2 + (i1 - t_i)^2 + pen(c1) + g(y) + eps
//!
//! where `pen(a, b, c) = (0, 0.5, 1)`, `g(y) = (y - 0.5)^2` when `y` is
//! active and `0.25` otherwise, and `eps` is a uniform draw in `[0, 0.1)`
//! hashed from the instance and evaluation seed. The targets `t` depend
//! only on the family seed, so every instance of a family shares the
//! optimum `c1 = a, x = t, i1 = t_i, y = 0.5` with noiseless cost 0.

use super::{EvalResult, Instance, TargetError};
use crate::seeds::{self, stream};
use crate::space::{Configuration, ParameterSpace, Value};

pub const NOISE_SCALE: f64 = 0.1;
const PENALTY: [f64; 3] = [0.0, 0.5, 1.0];
const INACTIVE_Y: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimum {
    pub x: [f64; 3],
    pub i: i64,
}

/// Optimum of the family with the given base seed: reals on `[-4, 4]`,
/// the integer on `{-4, ..., 4}`.
pub fn optimum(base_seed: u64) -> Optimum {
    let u = |k: u64| seeds::unit_uniform(seeds::derive(base_seed, &[stream::SYNTHETIC_TARGET, k]));
    Optimum {
        x: [u(0) * 8.0 - 4.0, u(1) * 8.0 - 4.0, u(2) * 8.0 - 4.0],
        i: (u(3) * 9.0).floor() as i64 - 4,
    }
}

pub fn noise(instance_key: u64, seed: u64) -> f64 {
    NOISE_SCALE * seeds::unit_uniform(seeds::derive(instance_key, &[stream::SYNTHETIC_NOISE, seed]))
}

#[derive(Debug, Clone)]
pub struct SyntheticTarget {
    x: [usize; 3],
    i1: usize,
    c1: usize,
    y: usize,
}

impl SyntheticTarget {
    pub fn new(space: &ParameterSpace) -> Result<Self, TargetError> {
        let idx = |n: &str| {
            space
                .index_of(n)
                .ok_or_else(|| TargetError::Config(format!("synthetic space lacks parameter '{n}'")))
        };
        Ok(Self {
            x: [idx("x1")?, idx("x2")?, idx("x3")?],
            i1: idx("i1")?,
            c1: idx("c1")?,
            y: idx("y")?,
        })
    }

    /// Cost without the noise term.
    pub fn noiseless_cost(&self, config: &Configuration, base_seed: u64) -> f64 {
        let opt = optimum(base_seed);
        let val = |i: usize| config.values[i].map(|v| v.as_f64());
        let mut cost = 0.0;
        for (k, &i) in self.x.iter().enumerate() {
            cost += (val(i).unwrap_or(0.0) - opt.x[k]).powi(2);
        }
        cost += (val(self.i1).unwrap_or(0.0) - opt.i as f64).powi(2);
        if let Some(Value::Cat(c)) = config.values[self.c1] {
            cost += PENALTY.get(c).copied().unwrap_or(1.0);
        }
        cost += match val(self.y) {
            Some(y) => (y - 0.5).powi(2),
            None => INACTIVE_Y,
        };
        cost
    }

    pub fn evaluate(&self, config: &Configuration, instance: &Instance, seed: u64) -> EvalResult {
        let cost = self.noiseless_cost(config, instance.base_seed) + noise(instance.key, seed);
        EvalResult::ok(cost, 0.0)
    }

    /// The optimal configuration of a family, for tests and demos.
    pub fn optimal_configuration(&self, space: &ParameterSpace, base_seed: u64) -> Configuration {
        let opt = optimum(base_seed);
        let mut values = vec![None; space.len()];
        for (k, &i) in self.x.iter().enumerate() {
            values[i] = Some(Value::Real(opt.x[k]));
        }
        values[self.i1] = Some(Value::Int(opt.i));
        values[self.c1] = Some(Value::Cat(0));
        values[self.y] = Some(Value::Real(0.5));
        Configuration::new(0, values, crate::space::Origin::Initial)
    }
}
