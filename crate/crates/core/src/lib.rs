//! Iterated racing for automatic algorithm configuration.
//!
//! The crate samples candidate configurations from a mixed-type parameter
//! space, races them over a stream of problem instances with statistical
//! elimination, and keeps a small elite set between races. Elite selection
//! is pluggable: greedy truncation, best-plus-random, entropy maximization,
//! or Gower-distance spreading.

pub mod cli;
pub mod diversity;
pub mod engine;
pub mod racer;
pub mod sampler;
pub mod seeds;
pub mod selector;
pub mod space;
pub mod targets;

pub use engine::{Scenario, Tuner};
pub use selector::Strategy;
pub use space::{Configuration, Origin, ParameterSpace, ParameterSpec, Value};
