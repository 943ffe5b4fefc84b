//! Stochastic matching models on multigraphs.
//!
//! Items of classes `V` arrive one by one, i.i.d. with law `μ`, and are
//! matched on arrival with a stored compatible item chosen by a matching
//! policy, or stored otherwise. Compatibility is a connected multigraph; a
//! self-loop lets two items of the same class match.

pub mod chain;
pub mod detailed;
pub mod drift;
pub mod error;
pub mod exec;
pub mod measures;
pub mod multigraph;
pub mod policies;
pub mod stationary;

pub use chain::{ClassDetail, KernelRow, Model, QueueWord, SimConfig, SimulationResult};
pub use detailed::{DetailedLetter, DetailedWord, ForwardWord, NuBlock, Trajectory};
pub use drift::{DriftReport, IdentityChecker, LyapunovFn};
pub use error::{Error, Result};
pub use exec::Execution;
pub use measures::{NcondReport, ProbMeasure};
pub use multigraph::{BlowupMap, Multigraph, NodeSet};
pub use policies::{MatchDecision, Policy, PolicySpec};
pub use stationary::{FiniteStationary, ProductForm, TvReport};
