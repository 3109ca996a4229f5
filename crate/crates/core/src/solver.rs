//! Simulated annealing over the joint (allocation, price) state with a
//! Metropolis acceptance rule, plus an exhaustive grid oracle for small
//! groups.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Decision, GroupProblem, GroupSolution, Weights};
use crate::objective::{check_feasibility, objective_value, penalized_objective};
use crate::seeding::rng_for;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("brute-force oracle supports at most 3 sellers, group has {0}")]
    OracleTooLarge(usize),
    #[error("oracle grid resolutions must be at least 2")]
    GridTooCoarse,
    #[error("invalid annealing schedule: {0}")]
    BadSchedule(&'static str),
}

pub const DEFAULT_PENALTY: f64 = 1e3;

/// Annealing hyperparameters. `initial_temperature: None` picks T0 from the
/// spread of objective changes around the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub initial_temperature: Option<f64>,
    pub cooling_ratio: f64,
    pub iterations_per_temperature: usize,
    pub max_iterations: usize,
    pub plateau_window: usize,
    pub plateau_epsilon: f64,
    pub steps: StepSizes,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            initial_temperature: None,
            cooling_ratio: 0.85,
            iterations_per_temperature: 10,
            max_iterations: 2000,
            plateau_window: 200,
            plateau_epsilon: 1e-3,
            steps: StepSizes::default(),
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<(), SolverError> {
        if let Some(t0) = self.initial_temperature {
            if !(t0 > 0.0) {
                return Err(SolverError::BadSchedule("initial_temperature must be > 0"));
            }
        }
        if !(self.cooling_ratio > 0.0 && self.cooling_ratio < 1.0) {
            return Err(SolverError::BadSchedule("cooling_ratio must lie in (0, 1)"));
        }
        if self.iterations_per_temperature == 0
            || self.max_iterations == 0
            || self.plateau_window == 0
        {
            return Err(SolverError::BadSchedule("iteration counts must be >= 1"));
        }
        if !(self.plateau_epsilon >= 0.0) {
            return Err(SolverError::BadSchedule("plateau_epsilon must be >= 0"));
        }
        Ok(())
    }

    /// Runs every iteration; the plateau rule never fires.
    pub fn without_early_stop(mut self) -> Self {
        self.plateau_window = self.max_iterations;
        self.plateau_epsilon = 0.0;
        self
    }
}

/// Neighborhood step sizes. `transfer` is a fraction of D; `price` is an
/// absolute standard deviation, defaulting to a tenth of the group's mean
/// satisfied price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub transfer: f64,
    pub price: Option<f64>,
}

impl Default for StepSizes {
    fn default() -> Self {
        Self {
            transfer: 0.1,
            price: None,
        }
    }
}

impl StepSizes {
    fn price_sigma(&self, problem: &GroupProblem) -> f64 {
        self.price.unwrap_or_else(|| {
            let m = problem.len().max(1) as f64;
            0.1 * problem
                .sellers
                .iter()
                .map(|s| s.satisfied_price)
                .sum::<f64>()
                / m
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub temperature: f64,
    pub current_objective: f64,
    pub best_objective: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub points: Vec<TracePoint>,
}

impl ConvergenceTrace {
    pub const CSV_HEADER: &'static str = "iteration,temperature,current_objective,best_objective";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.iteration, p.temperature, p.current_objective, p.best_objective
            ));
        }
        out
    }

    /// Best objective recorded at or before `iteration`.
    pub fn best_at(&self, iteration: usize) -> Option<f64> {
        self.points
            .iter()
            .take_while(|p| p.iteration <= iteration)
            .last()
            .map(|p| p.best_objective)
    }

    pub fn final_best(&self) -> Option<f64> {
        self.points.last().map(|p| p.best_objective)
    }
}

/// Everything local, every seller quoted its satisfied price.
pub fn initial_state(problem: &GroupProblem) -> Decision {
    Decision::all_local(
        problem.buyer.data_size,
        problem.sellers.iter().map(|s| s.satisfied_price).collect(),
    )
}

/// Which move a proposal applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Move {
    /// Mass moved between slots; slot `m` is the local slot.
    Transfer {
        from: usize,
        to: usize,
        amount: f64,
    },
    Reprice {
        seller: usize,
        price: f64,
    },
    /// Nothing to change (empty group).
    Identity,
}

/// Draws a neighbor of `state`: with equal odds either shifts workload
/// between two distinct slots or perturbs one seller's price.
pub fn propose_neighbor(
    state: &Decision,
    problem: &GroupProblem,
    rng: &mut impl Rng,
    steps: &StepSizes,
) -> (Decision, Move) {
    let m = problem.len();
    if m == 0 {
        return (state.clone(), Move::Identity);
    }
    let mut next = state.clone();
    if rng.random_bool(0.5) {
        let slots = m + 1;
        let from = rng.random_range(0..slots);
        let to = (from + rng.random_range(1..slots)) % slots;
        let wanted = rng.random_range(0.0..=steps.transfer * problem.buyer.data_size);
        let amount = wanted.min(slot(&next, from));
        *slot_mut(&mut next, from) -= amount;
        *slot_mut(&mut next, to) += amount;
        (next, Move::Transfer { from, to, amount })
    } else {
        let seller = rng.random_range(0..m);
        let noise = Normal::new(0.0, steps.price_sigma(problem))
            .expect("finite price step")
            .sample(rng);
        let price = (next.prices[seller] + noise).max(0.0);
        next.prices[seller] = price;
        (next, Move::Reprice { seller, price })
    }
}

fn slot(d: &Decision, i: usize) -> f64 {
    if i == d.offloaded.len() {
        d.local
    } else {
        d.offloaded[i]
    }
}

fn slot_mut(d: &mut Decision, i: usize) -> &mut f64 {
    if i == d.offloaded.len() {
        &mut d.local
    } else {
        &mut d.offloaded[i]
    }
}

/// Metropolis rule: downhill always, uphill with probability exp(−Δ/T).
pub fn metropolis_accept(
    delta: f64,
    temperature: f64,
    rng: &mut impl Rng,
) -> Result<bool, SolverError> {
    if !(temperature > 0.0) {
        return Err(SolverError::NonPositiveTemperature(temperature));
    }
    if delta <= 0.0 {
        return Ok(true);
    }
    Ok(rng.random::<f64>() < (-delta / temperature).exp())
}

const CALIBRATION_SAMPLES: usize = 100;

/// Standard deviation of the objective over feasible random neighbors of
/// the initial state. Infeasible neighbors are skipped so that the penalty
/// scale does not leak into the temperature; 1.0 when nothing varies.
fn calibrate_temperature(
    problem: &GroupProblem,
    weights: &Weights,
    steps: &StepSizes,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let start = initial_state(problem);
    let values: Vec<f64> = (0..CALIBRATION_SAMPLES)
        .filter_map(|_| {
            let (n, _) = propose_neighbor(&start, problem, rng, steps);
            check_feasibility(problem, &n)
                .is_feasible()
                .then(|| objective_value(problem, &n, weights))
        })
        .collect();
    if values.len() < 2 {
        return 1.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    let sd = var.sqrt();
    if sd.is_finite() && sd > 0.0 {
        sd
    } else {
        1.0
    }
}

/// Anneals one group from the all-local state and returns the best feasible
/// decision seen together with the per-iteration trace.
pub fn anneal(
    problem: &GroupProblem,
    weights: &Weights,
    schedule: &AnnealSchedule,
    penalty: f64,
    seed: u64,
) -> Result<(GroupSolution, ConvergenceTrace), SolverError> {
    schedule.validate()?;
    let mut rng = rng_for(seed, &[]);
    let mut temperature = match schedule.initial_temperature {
        Some(t) => t,
        None => calibrate_temperature(problem, weights, &schedule.steps, &mut rng),
    };

    let mut current = initial_state(problem);
    let mut current_value = penalized_objective(problem, &current, weights, penalty);
    debug_assert!(check_feasibility(problem, &current).is_feasible());
    let mut best = current.clone();
    let mut best_value = objective_value(problem, &best, weights);

    let mut trace = ConvergenceTrace {
        points: Vec::with_capacity(schedule.max_iterations),
    };
    if problem.is_empty() {
        trace.points.push(TracePoint {
            iteration: 1,
            temperature,
            current_objective: current_value,
            best_objective: best_value,
        });
        return Ok((GroupSolution::evaluate(problem, best, weights), trace));
    }

    for iteration in 1..=schedule.max_iterations {
        let (candidate, _) = propose_neighbor(&current, problem, &mut rng, &schedule.steps);
        let report = check_feasibility(problem, &candidate);
        let objective = objective_value(problem, &candidate, weights);
        let value = objective + penalty * report.squared_violation();
        if metropolis_accept(value - current_value, temperature, &mut rng)? {
            if report.is_feasible() && objective < best_value {
                best = candidate.clone();
                best_value = objective;
            }
            current = candidate;
            current_value = value;
        }
        trace.points.push(TracePoint {
            iteration,
            temperature,
            current_objective: current_value,
            best_objective: best_value,
        });

        if iteration % schedule.iterations_per_temperature == 0 {
            temperature *= schedule.cooling_ratio;
        }
        if iteration >= schedule.plateau_window && iteration < schedule.max_iterations {
            let earlier = trace.points[iteration - schedule.plateau_window].best_objective;
            if earlier - best_value < schedule.plateau_epsilon * earlier.abs() {
                break;
            }
        }
    }

    Ok((GroupSolution::evaluate(problem, best, weights), trace))
}

/// Grid resolutions for [`brute_force_oracle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleGrid {
    /// Allocation step is D / `allocation_steps`.
    pub allocation_steps: usize,
    /// Candidate prices per allocated seller.
    pub price_levels: usize,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            allocation_steps: 50,
            price_levels: 30,
        }
    }
}

/// Price offset above cost used for the lowest candidate.
pub const ORACLE_PRICE_EPSILON: f64 = 1e-6;

/// Candidate prices for a seller that holds work: just above cost, then
/// evenly spaced up to twice the satisfied price.
fn oracle_price_levels(cost: f64, satisfied: f64, levels: usize) -> Vec<f64> {
    let top = 2.0 * satisfied;
    let mut out = vec![cost + ORACLE_PRICE_EPSILON];
    let span = top - cost;
    for j in 1..levels {
        out.push(cost + span * j as f64 / (levels - 1) as f64);
    }
    out
}

/// Exhaustive search over a simplex grid of allocations and a per-seller
/// price grid. A seller with no work is always quoted its satisfied price,
/// which minimizes its share of the objective exactly.
///
/// Returns the best feasible grid point and the number of points evaluated.
pub fn brute_force_oracle(
    problem: &GroupProblem,
    weights: &Weights,
    grid: OracleGrid,
) -> Result<(GroupSolution, usize), SolverError> {
    let m = problem.len();
    if m > 3 {
        return Err(SolverError::OracleTooLarge(m));
    }
    if grid.allocation_steps < 2 || grid.price_levels < 2 {
        return Err(SolverError::GridTooCoarse);
    }
    let d = problem.buyer.data_size;
    let n = grid.allocation_steps;
    let levels: Vec<Vec<f64>> = problem
        .sellers
        .iter()
        .map(|s| oracle_price_levels(s.unit_cost, s.satisfied_price, grid.price_levels))
        .collect();

    let mut best: Option<(f64, Decision)> = None;
    let mut evaluated = 0usize;
    let mut units = vec![0usize; m];
    loop {
        let used: usize = units.iter().sum();
        if used <= n {
            let offloaded: Vec<f64> = units.iter().map(|&u| d * u as f64 / n as f64).collect();
            let local = d * (n - used) as f64 / n as f64;
            let choices: Vec<Vec<f64>> = (0..m)
                .map(|k| {
                    if units[k] == 0 {
                        vec![problem.sellers[k].satisfied_price]
                    } else {
                        levels[k].clone()
                    }
                })
                .collect();
            let mut pick = vec![0usize; m];
            loop {
                let decision = Decision {
                    offloaded: offloaded.clone(),
                    local,
                    prices: (0..m).map(|k| choices[k][pick[k]]).collect(),
                };
                evaluated += 1;
                if check_feasibility(problem, &decision).is_feasible() {
                    let value = objective_value(problem, &decision, weights);
                    if best.as_ref().is_none_or(|(b, _)| value < *b) {
                        best = Some((value, decision));
                    }
                }
                if !advance(&mut pick, |k| choices[k].len()) {
                    break;
                }
            }
        }
        if !advance(&mut units, |_| n + 1) {
            break;
        }
    }

    let (_, decision) = best.expect("the all-local grid point is feasible");
    Ok((
        GroupSolution::evaluate(problem, decision, weights),
        evaluated,
    ))
}

/// Odometer increment; false once every digit has wrapped.
fn advance(digits: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for (k, digit) in digits.iter_mut().enumerate() {
        *digit += 1;
        if *digit < radix(k) {
            return true;
        }
        *digit = 0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Buyer, Seller, VehicleId};
    use crate::objective::local_time;

    fn seller(id: u32, compute_rate: f64, idle_stock: f64, cost: f64, sat: f64) -> Seller {
        Seller {
            id: VehicleId(id),
            compute_rate,
            idle_stock,
            unit_cost: cost,
            satisfied_price: sat,
        }
    }

    fn buyer(data_size: f64) -> Buyer {
        Buyer {
            id: VehicleId(0),
            data_size,
            local_rate: 15.0,
            deadline: 100.0,
            budget: 25.0,
        }
    }

    fn two_seller_problem() -> GroupProblem {
        GroupProblem::new(
            buyer(5.0),
            vec![
                seller(1, 40.0, 120.0, 1.2, 2.5),
                seller(2, 30.0, 80.0, 1.6, 3.0),
            ],
            vec![4.0, 5.0],
            vec![15.0, 8.0],
            20.0,
            Weights::equal(),
        )
        .unwrap()
    }

    fn empty_problem() -> GroupProblem {
        GroupProblem::new(buyer(5.0), vec![], vec![], vec![], 20.0, Weights::equal()).unwrap()
    }

    #[test]
    fn initial_state_examples() {
        let p = two_seller_problem();
        let s = initial_state(&p);
        assert_eq!(s.offloaded, [0.0, 0.0]);
        assert_eq!(s.local, 5.0);
        assert_eq!(s.prices, [2.5, 3.0]);
        assert!(check_feasibility(&p, &s).is_feasible());

        let e = initial_state(&empty_problem());
        assert!(e.offloaded.is_empty() && e.prices.is_empty());
        assert_eq!(e.local, 5.0);
    }

    #[test]
    fn empty_group_proposals_are_identity() {
        let p = empty_problem();
        let s = initial_state(&p);
        let mut rng = rng_for(1, &[]);
        let (n, mv) = propose_neighbor(&s, &p, &mut rng, &StepSizes::default());
        assert_eq!(n, s);
        assert_eq!(mv, Move::Identity);
    }

    #[test]
    fn proposals_conserve_mass_and_mix_evenly() {
        let p = two_seller_problem();
        let mut rng = rng_for(7, &[]);
        let mut state = initial_state(&p);
        let mut transfers = 0usize;
        let trials = 10_000;
        for _ in 0..trials {
            let (next, mv) = propose_neighbor(&state, &p, &mut rng, &StepSizes::default());
            assert!((next.total_workload() - 5.0).abs() <= 1e-9 * 5.0);
            assert!(next.offloaded.iter().all(|x| *x >= 0.0) && next.local >= 0.0);
            assert!(next.prices.iter().all(|x| *x >= 0.0));
            if matches!(mv, Move::Transfer { .. }) {
                transfers += 1;
            }
            state = next;
        }
        let share = transfers as f64 / trials as f64;
        assert!((share - 0.5).abs() <= 0.02, "transfer share {share}");
    }

    #[test]
    fn proposals_do_not_mutate_input() {
        let p = two_seller_problem();
        let s = initial_state(&p);
        let copy = s.clone();
        let mut rng = rng_for(3, &[]);
        for _ in 0..100 {
            let _ = propose_neighbor(&s, &p, &mut rng, &StepSizes::default());
        }
        assert_eq!(s, copy);
    }

    #[test]
    fn metropolis_rules() {
        let mut rng = rng_for(11, &[]);
        assert!(metropolis_accept(-1.0, 0.5, &mut rng).unwrap());
        assert!(metropolis_accept(0.0, 1e-300, &mut rng).unwrap());
        assert_eq!(
            metropolis_accept(1.0, 0.0, &mut rng),
            Err(SolverError::NonPositiveTemperature(0.0))
        );

        let t = 0.7;
        let n = 10_000;
        let half = (0..n)
            .filter(|_| metropolis_accept(t * 2f64.ln(), t, &mut rng).unwrap())
            .count() as f64
            / n as f64;
        assert!((half - 0.5).abs() <= 0.02, "rate {half}");
        let rare = (0..n)
            .filter(|_| metropolis_accept(1e6 * t, t, &mut rng).unwrap())
            .count() as f64
            / n as f64;
        assert!(rare < 1e-3);
    }

    #[test]
    fn metropolis_chain_matches_boltzmann_weights() {
        // Two states with energies 0 and 1; propose the other state each step.
        let t = 0.8;
        let energies = [0.0, 1.0];
        let mut rng = rng_for(2024, &[]);
        let steps = 100_000;
        let mut state = 0usize;
        let mut visits = [0usize; 2];
        for _ in 0..steps {
            let other = 1 - state;
            if metropolis_accept(energies[other] - energies[state], t, &mut rng).unwrap() {
                state = other;
            }
            visits[state] += 1;
        }
        let z = 1.0 + (-1.0 / t).exp();
        let expected = (-1.0 / t).exp() / z;
        let observed = visits[1] as f64 / steps as f64;
        // Successive states are correlated: scale the binomial variance by
        // (1 + λ)/(1 − λ), λ = −a the second eigenvalue of [[1 − a, a], [1, 0]].
        let accept_up = (-1.0f64 / t).exp();
        let lambda = -accept_up;
        let tau = (1.0 + lambda) / (1.0 - lambda);
        let sigma = (expected * (1.0 - expected) * tau / steps as f64).sqrt();
        assert!(
            (observed - expected).abs() <= 3.0 * sigma,
            "observed {observed}, expected {expected} ± {}",
            3.0 * sigma
        );
    }

    #[test]
    fn schedule_validation() {
        assert!(AnnealSchedule::default().validate().is_ok());
        let bad = AnnealSchedule {
            cooling_ratio: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = AnnealSchedule {
            initial_temperature: Some(0.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_group_anneals_to_local() {
        let p = empty_problem();
        let w = Weights::equal();
        let (sol, trace) = anneal(&p, &w, &AnnealSchedule::default(), DEFAULT_PENALTY, 1).unwrap();
        assert_eq!(sol.decision.local, 5.0);
        let expected = w.w1 * local_time(&p, 5.0);
        assert!((sol.objective - expected).abs() < 1e-12);
        assert_eq!(trace.final_best(), Some(sol.objective));
    }

    #[test]
    fn anneal_improves_and_stays_feasible() {
        let p = two_seller_problem();
        let w = Weights::equal();
        let start = objective_value(&p, &initial_state(&p), &w);
        let (sol, trace) = anneal(&p, &w, &AnnealSchedule::default(), DEFAULT_PENALTY, 9).unwrap();
        assert!(sol.feasible);
        assert!(check_feasibility(&p, &sol.decision).is_feasible());
        assert!(sol.objective <= start);
        assert_eq!(trace.final_best(), Some(sol.objective));
        assert!(
            trace
                .points
                .windows(2)
                .all(|w| w[1].best_objective <= w[0].best_objective
                    && w[1].iteration > w[0].iteration)
        );
    }

    #[test]
    fn anneal_is_deterministic() {
        let p = two_seller_problem();
        let w = Weights::equal();
        let a = anneal(&p, &w, &AnnealSchedule::default(), DEFAULT_PENALTY, 5).unwrap();
        let b = anneal(&p, &w, &AnnealSchedule::default(), DEFAULT_PENALTY, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oracle_rejects_large_or_coarse() {
        let mut p = two_seller_problem();
        for id in 3..5 {
            p.sellers.push(seller(id, 30.0, 80.0, 1.0, 2.0));
            p.rates.push(4.0);
            p.contacts.push(10.0);
        }
        assert_eq!(
            brute_force_oracle(&p, &Weights::equal(), OracleGrid::default()).unwrap_err(),
            SolverError::OracleTooLarge(4)
        );
        let grid = OracleGrid {
            allocation_steps: 1,
            price_levels: 5,
        };
        assert_eq!(
            brute_force_oracle(&two_seller_problem(), &Weights::equal(), grid).unwrap_err(),
            SolverError::GridTooCoarse
        );
    }

    #[test]
    fn oracle_on_empty_group_is_local() {
        let (sol, evaluated) =
            brute_force_oracle(&empty_problem(), &Weights::equal(), OracleGrid::default()).unwrap();
        assert_eq!(sol.decision.local, 5.0);
        assert_eq!(evaluated, 1);
    }

    #[test]
    fn oracle_point_count_on_tiny_grid() {
        let p = GroupProblem::new(
            buyer(5.0),
            vec![seller(1, 40.0, 200.0, 1.0, 2.0)],
            vec![4.0],
            vec![30.0],
            20.0,
            Weights::equal(),
        )
        .unwrap();
        let grid = OracleGrid {
            allocation_steps: 2,
            price_levels: 2,
        };
        // x1 ∈ {0, D/2, D}: one price when idle, two otherwise.
        let (_, evaluated) = brute_force_oracle(&p, &Weights::equal(), grid).unwrap();
        assert_eq!(evaluated, 5);
        assert!(evaluated <= 2 * (2 + 1));
    }

    #[test]
    fn oracle_balances_time_for_time_only_weights() {
        let w = Weights::new(1.0, 0.0, 0.0).unwrap();
        let p = GroupProblem::new(
            buyer(5.0),
            vec![seller(1, 50.0, 500.0, 1.0, 2.0)],
            vec![5.0],
            vec![60.0],
            20.0,
            w,
        )
        .unwrap();
        // x/5 + 20x/50 = 20(5 − x)/15  →  0.6x = (100 − 20x)/15  →  x = 100/29.
        let balanced = 100.0 / 29.0;
        let grid = OracleGrid {
            allocation_steps: 50,
            price_levels: 3,
        };
        let (sol, _) = brute_force_oracle(&p, &w, grid).unwrap();
        assert!((sol.decision.offloaded[0] - balanced).abs() <= 5.0 / 50.0);
        assert!(sol.feasible);
    }
}
