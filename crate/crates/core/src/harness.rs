//! Scenario generation, per-group solving, seller-count sweeps and the
//! convergence experiment. Everything here is a pure function of the
//! configuration and seed; groups are solved in parallel but collected in
//! index order.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{average_offloading, local_computing, DEFAULT_MARKUP};
use crate::domain::{
    validate_scenario, Buyer, ConfigViolation, Scenario, ScenarioConfig, Seller, VehicleId,
};
use crate::mobility::{form_groups, place_vehicles, MobilityError};
use crate::objective::{check_feasibility, FeasibilityReport};
use crate::seeding::{mix, mix_all, rng_for, stream};
use crate::solver::{anneal, AnnealSchedule, ConvergenceTrace, SolverError, DEFAULT_PENALTY};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {}", join(.0))]
    Config(Vec<ConfigViolation>),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("group not found: {0}")]
    GroupNotFound(String),
    #[error("no seller counts to sweep")]
    EmptySweep,
    #[error("average-offloading markup must be positive, got {0}")]
    InvalidMarkup(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn join(violations: &[ConfigViolation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Local,
    Average,
    Proposed,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Local, Algorithm::Average, Algorithm::Proposed];

    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::Local => "local",
            Algorithm::Average => "average",
            Algorithm::Proposed => "proposed",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "local" => Ok(Algorithm::Local),
            "average" => Ok(Algorithm::Average),
            "proposed" => Ok(Algorithm::Proposed),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

/// Solver knobs that are not part of the scenario itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub schedule: AnnealSchedule,
    pub penalty: f64,
    pub markup: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            schedule: AnnealSchedule::default(),
            penalty: DEFAULT_PENALTY,
            markup: DEFAULT_MARKUP,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.markup > 0.0) {
            return Err(HarnessError::InvalidMarkup(self.markup));
        }
        self.schedule.validate()?;
        Ok(())
    }
}

/// Samples buyers and sellers, places every vehicle and forms the groups.
///
/// Buyer and seller attributes come from separate streams, so the buyers of
/// two scenarios that differ only in seller count are identical.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario, HarnessError> {
    let violations = validate_scenario(config);
    if !violations.is_empty() {
        return Err(HarnessError::Config(violations));
    }

    let mut rng = rng_for(config.rng_seed, &[stream::BUYERS]);
    let k = config.k_factor;
    let buyers: Vec<Buyer> = (0..config.buyer_count)
        .map(|i| {
            let data_size = rng.random_range(config.data_range.lo()..=config.data_range.hi());
            let local_rate =
                rng.random_range(config.local_rate_range.lo()..=config.local_rate_range.hi());
            let budget = rng.random_range(config.budget_range.lo()..=config.budget_range.hi());
            let factor = rng.random_range(
                config.deadline_factor_range.lo()..=config.deadline_factor_range.hi(),
            );
            let local_only = k * data_size / local_rate;
            Buyer {
                id: VehicleId(i),
                data_size,
                local_rate,
                deadline: (factor * local_only).max(local_only),
                budget,
            }
        })
        .collect();

    let mut rng = rng_for(config.rng_seed, &[stream::SELLERS]);
    let sellers: Vec<Seller> = (0..config.seller_count)
        .map(|j| {
            let compute_rate =
                rng.random_range(config.compute_rate_range.lo()..=config.compute_rate_range.hi());
            let idle_stock =
                rng.random_range(config.idle_stock_range.lo()..=config.idle_stock_range.hi());
            let unit_cost =
                rng.random_range(config.unit_cost_range.lo()..=config.unit_cost_range.hi());
            let satisfied = rng.random_range(
                config.satisfied_price_range.lo()..=config.satisfied_price_range.hi(),
            );
            Seller {
                id: VehicleId(config.buyer_count + j),
                compute_rate,
                idle_stock,
                unit_cost,
                satisfied_price: satisfied.max(unit_cost),
            }
        })
        .collect();

    let kinematics = place_vehicles(config);
    let groups = form_groups(&buyers, &sellers, &kinematics, config)?;
    Ok(Scenario {
        config: config.clone(),
        buyers,
        sellers,
        kinematics,
        groups: Some(groups),
    })
}

/// Result of one algorithm on one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupOutcome {
    pub group_index: usize,
    pub buyer_id: VehicleId,
    pub algorithm: Algorithm,
    pub m: usize,
    pub solution: crate::domain::GroupSolution,
    pub report: FeasibilityReport,
}

/// Per-group solver seed.
pub fn group_seed(scenario_seed: u64, group_index: usize) -> u64 {
    mix_all(scenario_seed, &[stream::GROUP_SOLVER, group_index as u64])
}

pub fn solve_group(
    scenario: &Scenario,
    group_index: usize,
    algorithm: Algorithm,
    options: &SolveOptions,
) -> Result<GroupOutcome, HarnessError> {
    let problem = scenario.group_problem(group_index);
    let weights = problem.weights;
    let solution = match algorithm {
        Algorithm::Local => local_computing(&problem, &weights),
        Algorithm::Average => average_offloading(&problem, &weights, options.markup),
        Algorithm::Proposed => {
            anneal(
                &problem,
                &weights,
                &options.schedule,
                options.penalty,
                group_seed(scenario.config.rng_seed, group_index),
            )?
            .0
        }
    };
    let report = check_feasibility(&problem, &solution.decision);
    Ok(GroupOutcome {
        group_index,
        buyer_id: problem.buyer.id,
        algorithm,
        m: problem.len(),
        solution,
        report,
    })
}

/// Every group under every algorithm, ordered by (group, algorithm).
pub fn solve_scenario(
    scenario: &Scenario,
    algorithms: &[Algorithm],
    options: &SolveOptions,
) -> Result<Vec<GroupOutcome>, HarnessError> {
    options.validate()?;
    let jobs: Vec<(usize, Algorithm)> = (0..scenario.group_count())
        .flat_map(|g| algorithms.iter().map(move |&a| (g, a)))
        .collect();
    jobs.par_iter()
        .map(|&(g, a)| solve_group(scenario, g, a, options))
        .collect()
}

pub const SOLUTIONS_CSV_HEADER: &str =
    "group_id,algorithm,m,completion_s,payment,objective,feasible";
pub const FEASIBILITY_CSV_HEADER: &str = "group_id,constraint,magnitude,ok";
pub const SWEEP_CSV_HEADER: &str =
    "seller_count,algorithm,mean_completion_s,mean_knockdown_price,mean_payment,feasible_fraction,replicate_count";

pub fn solutions_csv(outcomes: &[GroupOutcome]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SOLUTIONS_CSV_HEADER.split(','))?;
    for o in outcomes {
        w.write_record([
            o.group_index.to_string(),
            o.algorithm.to_string(),
            o.m.to_string(),
            o.solution.completion_time.to_string(),
            o.solution.payment.to_string(),
            o.solution.objective.to_string(),
            o.report.is_feasible().to_string(),
        ])?;
    }
    Ok(finish(w))
}

/// Run log of every constraint entry for the given outcomes. The constraint
/// column carries the label, suffixed with the seller index for per-seller
/// entries (e.g. `a[2]`).
pub fn feasibility_csv(outcomes: &[GroupOutcome]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(FEASIBILITY_CSV_HEADER.split(','))?;
    for o in outcomes {
        for s in &o.report.statuses {
            let label = match s.seller {
                Some(k) => format!("{}[{k}]", s.constraint),
                None => s.constraint.to_string(),
            };
            w.write_record([
                o.group_index.to_string(),
                label,
                s.magnitude.to_string(),
                s.ok.to_string(),
            ])?;
        }
    }
    Ok(finish(w))
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seller_count: u32,
    pub algorithm: Algorithm,
    pub mean_completion_s: f64,
    /// Mean price over (group, seller) pairs that received work; `None` if
    /// nobody offloaded.
    pub mean_knockdown_price: Option<f64>,
    pub mean_payment: f64,
    pub feasible_fraction: f64,
    pub replicate_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, seller_count: u32, algorithm: Algorithm) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.seller_count == seller_count && r.algorithm == algorithm)
    }

    pub fn series(&self, algorithm: Algorithm) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.algorithm == algorithm)
            .collect()
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SWEEP_CSV_HEADER.split(','))?;
        for r in &self.rows {
            w.write_record([
                r.seller_count.to_string(),
                r.algorithm.to_string(),
                r.mean_completion_s.to_string(),
                r.mean_knockdown_price
                    .map(|p| p.to_string())
                    .unwrap_or_default(),
                r.mean_payment.to_string(),
                r.feasible_fraction.to_string(),
                r.replicate_count.to_string(),
            ])?;
        }
        Ok(finish(w))
    }
}

/// Scenario seed for one replicate. Seller counts share replicate seeds, so
/// a replicate sees the same buyers at every point of the sweep.
pub fn replicate_seed(base_seed: u64, replicate: usize) -> u64 {
    mix(mix(base_seed, stream::REPLICATE), replicate as u64)
}

#[derive(Default)]
struct Accumulator {
    completion: f64,
    payment: f64,
    price_sum: f64,
    price_count: usize,
    feasible: usize,
    count: usize,
}

/// Generates `replicates` scenarios per seller count, solves every group
/// with every algorithm and averages per (seller count, algorithm).
pub fn run_sweep(
    base: &ScenarioConfig,
    seller_counts: &[u32],
    algorithms: &[Algorithm],
    replicates: usize,
    options: &SolveOptions,
) -> Result<SweepResult, HarnessError> {
    if seller_counts.is_empty() {
        return Err(HarnessError::EmptySweep);
    }
    options.validate()?;
    let mut rows = Vec::with_capacity(seller_counts.len() * algorithms.len());
    for &seller_count in seller_counts {
        let mut acc: Vec<Accumulator> = algorithms.iter().map(|_| Accumulator::default()).collect();
        for replicate in 0..replicates {
            let config = ScenarioConfig {
                seller_count,
                rng_seed: replicate_seed(base.rng_seed, replicate),
                ..base.clone()
            };
            let scenario = generate_scenario(&config)?;
            for outcome in solve_scenario(&scenario, algorithms, options)? {
                let slot = algorithms
                    .iter()
                    .position(|a| *a == outcome.algorithm)
                    .expect("requested algorithm");
                let a = &mut acc[slot];
                let d = &outcome.solution.decision;
                a.completion += outcome.solution.completion_time;
                a.payment += outcome.solution.payment;
                for (x, p) in d.offloaded.iter().zip(&d.prices) {
                    if *x > 0.0 {
                        a.price_sum += p;
                        a.price_count += 1;
                    }
                }
                a.feasible += usize::from(outcome.report.is_feasible());
                a.count += 1;
            }
        }
        for (algorithm, a) in algorithms.iter().zip(acc) {
            let n = a.count.max(1) as f64;
            rows.push(SweepRow {
                seller_count,
                algorithm: *algorithm,
                mean_completion_s: a.completion / n,
                mean_knockdown_price: (a.price_count > 0)
                    .then(|| a.price_sum / a.price_count as f64),
                mean_payment: a.payment / n,
                feasible_fraction: a.feasible as f64 / n,
                replicate_count: replicates,
            });
        }
    }
    Ok(SweepResult { rows })
}

/// Which group the convergence experiment anneals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupSelector {
    /// First group with at least one seller.
    FirstNonEmpty,
    Index(usize),
}

/// Anneals one group of a freshly generated scenario and returns its trace.
pub fn run_convergence(
    config: &ScenarioConfig,
    selector: GroupSelector,
    options: &SolveOptions,
) -> Result<ConvergenceTrace, HarnessError> {
    let scenario = generate_scenario(config)?;
    let groups = scenario
        .groups
        .as_ref()
        .expect("generated scenario has groups");
    let index = match selector {
        GroupSelector::FirstNonEmpty => groups
            .iter()
            .position(|g| !g.members.is_empty())
            .ok_or_else(|| HarnessError::GroupNotFound("no group has a seller".into()))?,
        GroupSelector::Index(i) => match groups.get(i) {
            Some(g) if !g.members.is_empty() => i,
            Some(_) => {
                return Err(HarnessError::GroupNotFound(format!(
                    "group {i} has no sellers"
                )))
            }
            None => {
                return Err(HarnessError::GroupNotFound(format!(
                    "group {i} (scenario has {})",
                    groups.len()
                )))
            }
        },
    };
    let problem = scenario.group_problem(index);
    let (_, trace) = anneal(
        &problem,
        &problem.weights,
        &options.schedule,
        options.penalty,
        group_seed(config.rng_seed, index),
    )?;
    Ok(trace)
}
