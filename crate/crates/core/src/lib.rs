//! Incentive-based opportunistic computation offloading among vehicles.
//!
//! A buyer vehicle splits its application between local execution and the
//! sellers it is in V2V contact with, paying each seller a per-megabit price.
//! [`solver::anneal`] picks the split and the prices jointly by minimizing a
//! weighted sum of completion time, total payment, and the distance between
//! awarded and satisfied prices, subject to idle-stock, contact-window,
//! budget, mass, sign and incentive constraints. [`baselines`] provides the
//! local-only and even-split schemes it is compared against, and
//! [`harness`] generates scenarios and runs the comparison sweeps.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod domain;
pub mod harness;
pub mod mobility;
pub mod objective;
pub mod seeding;
pub mod solver;

pub use domain::{
    validate_scenario, Buyer, Decision, GroupProblem, GroupSolution, Interval, Scenario,
    ScenarioConfig, Seller, VehicleId, Weights,
};
pub use harness::{Algorithm, SolveOptions, SweepResult};
pub use solver::{AnnealSchedule, ConvergenceTrace};
