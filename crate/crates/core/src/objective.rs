//! Evaluation of the joint time/cost/incentive objective and its six
//! constraints for a single cooperative group.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Decision, GroupProblem, GroupSolution, Weights};

/// Absolute slack allowed on every constraint, in the constraint's own units.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("seller index {index} out of range for a group of {len}")]
pub struct IndexError {
    pub index: usize,
    pub len: usize,
}

/// Seconds seller `k` needs to receive and execute `workload` megabits.
pub fn per_seller_time(problem: &GroupProblem, workload: f64, k: usize) -> Result<f64, IndexError> {
    if k >= problem.len() {
        return Err(IndexError {
            index: k,
            len: problem.len(),
        });
    }
    if workload == 0.0 {
        return Ok(0.0);
    }
    let seller = &problem.sellers[k];
    Ok(workload / problem.rates[k] + problem.k_factor * workload / seller.compute_rate)
}

/// Seconds the buyer needs for `workload` megabits on its own hardware.
pub fn local_time(problem: &GroupProblem, workload: f64) -> f64 {
    problem.k_factor * workload / problem.buyer.local_rate
}

/// T_i: the slowest of all sub-applications, local slot included.
pub fn completion_time(problem: &GroupProblem, decision: &Decision) -> f64 {
    decision
        .offloaded
        .iter()
        .enumerate()
        .map(|(k, &x)| per_seller_time(problem, x, k).expect("allocation matches group"))
        .fold(local_time(problem, decision.local), f64::max)
}

/// Σ p_k·x_k over the sellers.
pub fn total_payment(offloaded: &[f64], prices: &[f64]) -> f64 {
    debug_assert_eq!(offloaded.len(), prices.len());
    offloaded.iter().zip(prices).map(|(x, p)| p * x).sum()
}

/// Euclidean distance between the awarded and the satisfied price vectors.
pub fn incentive_distance(prices: &[f64], satisfied: &[f64]) -> f64 {
    debug_assert_eq!(prices.len(), satisfied.len());
    prices
        .iter()
        .zip(satisfied)
        .map(|(p, s)| (p - s).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// The three raw terms of the objective, before weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub completion_time: f64,
    pub payment: f64,
    pub incentive_distance: f64,
}

impl ObjectiveTerms {
    pub fn of(problem: &GroupProblem, decision: &Decision) -> Self {
        let satisfied: Vec<f64> = problem.sellers.iter().map(|s| s.satisfied_price).collect();
        Self {
            completion_time: completion_time(problem, decision),
            payment: total_payment(&decision.offloaded, &decision.prices),
            incentive_distance: incentive_distance(&decision.prices, &satisfied),
        }
    }

    pub fn weighted(&self, weights: &Weights) -> f64 {
        weights.w1 * self.completion_time
            + weights.w2 * self.payment
            + weights.w3 * self.incentive_distance
    }

    /// Divides each term by its reference scale: the all-local completion
    /// time, the budget, and the norm of the satisfied prices. A zero
    /// reference leaves the term unscaled.
    pub fn normalized(&self, problem: &GroupProblem) -> Self {
        let scale = |v: f64, by: f64| if by > 0.0 { v / by } else { v };
        let satisfied_norm = problem
            .sellers
            .iter()
            .map(|s| s.satisfied_price.powi(2))
            .sum::<f64>()
            .sqrt();
        Self {
            completion_time: scale(
                self.completion_time,
                local_time(problem, problem.buyer.data_size),
            ),
            payment: scale(self.payment, problem.buyer.budget),
            incentive_distance: scale(self.incentive_distance, satisfied_norm),
        }
    }
}

/// w1·T + w2·payment + w3·distance, with the raw unit-mixed terms unless the
/// problem asks for normalized ones.
pub fn objective_value(problem: &GroupProblem, decision: &Decision, weights: &Weights) -> f64 {
    let terms = ObjectiveTerms::of(problem, decision);
    if problem.normalize_terms {
        terms.normalized(problem).weighted(weights)
    } else {
        terms.weighted(weights)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constraint {
    /// K·x_k ≤ CC_k
    A,
    /// t_k ≤ Δt_k
    B,
    /// payment ≤ budget
    C,
    /// x_B + Σ x_k = D
    D,
    /// x_k ≥ 0, p_k ≥ 0
    E,
    /// x_k > 0 requires p_k > c_k
    F,
}

impl Constraint {
    pub fn label(&self) -> &'static str {
        match self {
            Constraint::A => "a",
            Constraint::B => "b",
            Constraint::C => "c",
            Constraint::D => "d",
            Constraint::E => "e",
            Constraint::F => "f",
        }
    }
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Status of one constraint instance. `magnitude` is the signed violation in
/// the constraint's own units (positive means violated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintStatus {
    pub constraint: Constraint,
    /// Seller index for per-seller constraints.
    pub seller: Option<usize>,
    pub magnitude: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub statuses: Vec<ConstraintStatus>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.statuses.iter().all(|s| s.ok)
    }

    pub fn violations(&self) -> impl Iterator<Item = &ConstraintStatus> {
        self.statuses.iter().filter(|s| !s.ok)
    }

    /// Σ max(0, magnitude)² over violated entries.
    pub fn squared_violation(&self) -> f64 {
        self.violations()
            .map(|s| s.magnitude.max(0.0).powi(2))
            .sum()
    }

    pub fn find(&self, constraint: Constraint, seller: Option<usize>) -> Option<&ConstraintStatus> {
        self.statuses
            .iter()
            .find(|s| s.constraint == constraint && s.seller == seller)
    }
}

fn within(magnitude: f64) -> bool {
    magnitude <= FEASIBILITY_TOLERANCE
}

/// Checks constraints a)–f). Per-seller constraints (a, b, e, f) get one
/// entry per seller; c, d and the local half of e are group-wide.
///
/// Constraint f has no slack: a seller holding any work must be paid strictly
/// more than its unit cost. Its magnitude is the withheld workload x_k.
pub fn check_feasibility(problem: &GroupProblem, decision: &Decision) -> FeasibilityReport {
    let m = problem.len();
    assert_eq!(decision.offloaded.len(), m, "allocation length");
    assert_eq!(decision.prices.len(), m, "price length");

    let mut statuses = Vec::with_capacity(4 * m + 3);
    for k in 0..m {
        let x = decision.offloaded[k];
        let p = decision.prices[k];
        let seller = &problem.sellers[k];

        let a = problem.k_factor * x - seller.idle_stock;
        statuses.push(ConstraintStatus {
            constraint: Constraint::A,
            seller: Some(k),
            magnitude: a,
            ok: within(a),
        });

        let b = per_seller_time(problem, x.max(0.0), k).expect("k < m") - problem.contacts[k];
        statuses.push(ConstraintStatus {
            constraint: Constraint::B,
            seller: Some(k),
            magnitude: b,
            ok: within(b),
        });

        let e = 0.0 - x.min(p);
        statuses.push(ConstraintStatus {
            constraint: Constraint::E,
            seller: Some(k),
            magnitude: e,
            ok: within(e),
        });

        let withheld = x > 0.0 && p <= seller.unit_cost;
        statuses.push(ConstraintStatus {
            constraint: Constraint::F,
            seller: Some(k),
            magnitude: if withheld { x } else { 0.0 },
            ok: !withheld,
        });
    }

    let c = total_payment(&decision.offloaded, &decision.prices) - problem.buyer.budget;
    statuses.push(ConstraintStatus {
        constraint: Constraint::C,
        seller: None,
        magnitude: c,
        ok: within(c),
    });

    let d = (decision.total_workload() - problem.buyer.data_size).abs();
    statuses.push(ConstraintStatus {
        constraint: Constraint::D,
        seller: None,
        magnitude: d,
        ok: within(d),
    });

    let e_local = 0.0 - decision.local;
    statuses.push(ConstraintStatus {
        constraint: Constraint::E,
        seller: None,
        magnitude: e_local,
        ok: within(e_local),
    });

    FeasibilityReport { statuses }
}

/// Objective plus `coefficient` times the squared violations.
pub fn penalized_objective(
    problem: &GroupProblem,
    decision: &Decision,
    weights: &Weights,
    coefficient: f64,
) -> f64 {
    objective_value(problem, decision, weights)
        + coefficient * check_feasibility(problem, decision).squared_violation()
}

impl GroupSolution {
    /// Scores `decision` under `weights` and records its feasibility.
    pub fn evaluate(problem: &GroupProblem, decision: Decision, weights: &Weights) -> Self {
        let report = check_feasibility(problem, &decision);
        Self {
            objective: objective_value(problem, &decision, weights),
            completion_time: completion_time(problem, &decision),
            payment: total_payment(&decision.offloaded, &decision.prices),
            feasible: report.is_feasible(),
            violations: report.violations().cloned().collect(),
            decision,
        }
    }
}
