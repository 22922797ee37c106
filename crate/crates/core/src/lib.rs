//! Certified reach-avoid controller synthesis for discrete-time linear
//! stochastic systems with unknown noise distributions.
//!
//! The pipeline: partition a bounded portion of the state space into a
//! rectangular grid, abstract the closed-loop dynamics into a finite
//! interval MDP whose transition probability intervals are PAC bounds
//! computed from noise samples, solve the iMDP with robust value
//! iteration, and validate the synthesized controller by closed-loop
//! Monte Carlo simulation.
//!
//! Modules:
//! - [`linsys`]: linear dynamics, step grouping, feedback control law
//! - [`geometry`]: partitions, polytopes, backward reachable sets
//! - [`scenario`]: PAC probability intervals from sample counts
//! - [`abstraction`]: iMDP construction from samples
//! - [`imdp`]: the interval-MDP model, robust value iteration, export
//! - [`harness`]: planning/control loops, samplers, models, CLI plumbing

pub mod abstraction;
pub mod geometry;
pub mod harness;
pub mod imdp;
pub mod linsys;
pub mod scenario;

pub use abstraction::{build_imdp, build_states_actions, ConfidenceMode, ConfidenceReport};
pub use geometry::{Partition, Region, RegionId};
pub use imdp::{robust_value_iteration, BoundSide, Horizon, Imdp, TimeVaryingPolicy};
pub use linsys::{GroupedSystem, LinearSystem};
pub use scenario::{IntervalTable, ProbInterval};
