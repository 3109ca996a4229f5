//! Comparison schemes: run everything locally, or split the application
//! evenly across the group at cost-plus pricing.

use crate::domain::{Decision, GroupProblem, GroupSolution, Weights};

pub const DEFAULT_MARKUP: f64 = 0.05;

pub fn local_computing(problem: &GroupProblem, weights: &Weights) -> GroupSolution {
    let decision = Decision::all_local(problem.buyer.data_size, vec![0.0; problem.len()]);
    GroupSolution::evaluate(problem, decision, weights)
}

/// Largest workload seller `k` can take without breaking its idle-stock or
/// contact-window constraint.
pub fn seller_capacity(problem: &GroupProblem, k: usize) -> f64 {
    let by_stock = problem.sellers[k].idle_stock / problem.k_factor;
    let by_contact = problem.contacts[k] / problem.seller_time_coefficient(k);
    by_stock.min(by_contact)
}

/// Even split D/m per seller, each capped at its capacity, with the
/// remainder kept local. Every seller is quoted (1 + markup)·cost. If the
/// bill exceeds the budget, all seller shares shrink by the same factor and
/// the freed workload returns to the buyer.
pub fn average_offloading(problem: &GroupProblem, weights: &Weights, markup: f64) -> GroupSolution {
    assert!(markup > 0.0, "markup must be positive");
    let m = problem.len();
    if m == 0 {
        return local_computing(problem, weights);
    }
    let d = problem.buyer.data_size;
    let share = d / m as f64;
    let prices: Vec<f64> = problem
        .sellers
        .iter()
        .map(|s| (1.0 + markup) * s.unit_cost)
        .collect();
    let mut offloaded: Vec<f64> = (0..m)
        .map(|k| share.min(seller_capacity(problem, k)))
        .collect();

    let bill: f64 = offloaded.iter().zip(&prices).map(|(x, p)| x * p).sum();
    let budget = problem.buyer.budget;
    if bill > budget {
        let scale = budget / bill;
        for x in &mut offloaded {
            *x *= scale;
        }
    }
    let local = (d - offloaded.iter().sum::<f64>()).max(0.0);
    GroupSolution::evaluate(
        problem,
        Decision {
            offloaded,
            local,
            prices,
        },
        weights,
    )
}
