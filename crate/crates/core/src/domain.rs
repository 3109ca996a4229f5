//! Core value types shared by every other module: the buyer and seller
//! tetrads, objective weights, scenario configuration, and the per-group
//! problem/solution pair consumed by the solvers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier shared by buyers and sellers. Buyers occupy `0..B`, sellers
/// `B..B+S` in generated scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl std::fmt::Display for VehicleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A vehicle with a computation-intensive application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Buyer {
    pub id: VehicleId,
    /// Application size D in megabits.
    pub data_size: f64,
    /// Local compute rate C_B in resource blocks per second.
    pub local_rate: f64,
    /// Tolerated completion time T_max in seconds.
    pub deadline: f64,
    /// Budget P_B in currency units.
    pub budget: f64,
}

/// A vehicle lending idle compute for payment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seller {
    pub id: VehicleId,
    /// Compute rate C_S in resource blocks per second.
    pub compute_rate: f64,
    /// Idle resource stock CC_S in resource blocks.
    pub idle_stock: f64,
    /// Unit cost c, currency per megabit.
    pub unit_cost: f64,
    /// Satisfied unit price, currency per megabit.
    pub satisfied_price: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightsError {
    #[error("weights must be finite and non-negative, got ({0}, {1}, {2})")]
    Negative(f64, f64, f64),
    #[error("weights must have a positive sum")]
    ZeroSum,
}

/// Objective weights, always normalized to sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Weights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Weights {
    pub fn new(w1: f64, w2: f64, w3: f64) -> Result<Self, WeightsError> {
        let finite = [w1, w2, w3].iter().all(|w| w.is_finite() && *w >= 0.0);
        if !finite {
            return Err(WeightsError::Negative(w1, w2, w3));
        }
        let sum = w1 + w2 + w3;
        if sum <= 0.0 {
            return Err(WeightsError::ZeroSum);
        }
        Ok(Self {
            w1: w1 / sum,
            w2: w2 / sum,
            w3: w3 / sum,
        })
    }

    /// Equal emphasis on time, cost and incentive.
    pub fn equal() -> Self {
        Self {
            w1: 1.0 / 3.0,
            w2: 1.0 / 3.0,
            w3: 1.0 / 3.0,
        }
    }
}

impl Default for Weights {
    fn default() -> Self {
        Self::equal()
    }
}

impl<'de> Deserialize<'de> for Weights {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            w1: f64,
            w2: f64,
            w3: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        Weights::new(raw.w1, raw.w2, raw.w3).map_err(serde::de::Error::custom)
    }
}

impl std::str::FromStr for Weights {
    type Err = String;

    /// Parses `w1,w2,w3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad weight {p:?}: {e}"))
            })
            .collect::<Result<_, _>>()?;
        match parts.as_slice() {
            [a, b, c] => Weights::new(*a, *b, *c).map_err(|e| e.to_string()),
            _ => Err(format!("expected three comma-separated weights, got {s:?}")),
        }
    }
}

/// Closed sampling interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval(pub f64, pub f64);

impl Interval {
    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.0 && v <= self.1
    }

    fn is_valid(&self) -> bool {
        self.0.is_finite() && self.1.is_finite() && self.0 > 0.0 && self.0 <= self.1
    }
}

/// Everything needed to generate a scenario deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub buyer_count: u32,
    pub seller_count: u32,
    /// Vehicles per kilometer.
    pub density: f64,
    /// Transmission radius R in meters.
    pub radius: f64,
    /// Resource blocks per megabit.
    pub k_factor: f64,
    pub rate_range: Interval,
    pub data_range: Interval,
    pub speed_range: Interval,
    pub local_rate_range: Interval,
    pub compute_rate_range: Interval,
    pub idle_stock_range: Interval,
    pub unit_cost_range: Interval,
    pub satisfied_price_range: Interval,
    pub budget_range: Interval,
    /// Deadline as a multiple of the all-local completion time K·D/C_B.
    pub deadline_factor_range: Interval,
    /// Contact window assigned to pairs with zero relative velocity, seconds.
    pub contact_cap: f64,
    pub weights: Weights,
    /// Divide each objective term by a per-group reference scale (all-local
    /// time, budget, satisfied-price norm). On by default: with raw terms the
    /// payment dominates and buyers barely offload.
    #[serde(default)]
    pub normalize_terms: bool,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            buyer_count: 100,
            seller_count: 600,
            density: 10.0,
            radius: 250.0,
            k_factor: 20.0,
            rate_range: Interval(3.0, 6.0),
            data_range: Interval(5.0, 6.0),
            speed_range: Interval(10.0, 30.0),
            local_rate_range: Interval(10.0, 20.0),
            compute_rate_range: Interval(20.0, 50.0),
            idle_stock_range: Interval(50.0, 150.0),
            unit_cost_range: Interval(1.0, 2.0),
            satisfied_price_range: Interval(2.0, 4.0),
            budget_range: Interval(20.0, 40.0),
            deadline_factor_range: Interval(1.2, 1.2),
            contact_cap: 120.0,
            weights: Weights::equal(),
            normalize_terms: true,
            rng_seed: 42,
        }
    }
}

/// One violated configuration invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigViolation {
    pub field: &'static str,
    pub reason: String,
}

impl std::fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

/// Lists every violated invariant of `config`; empty means valid.
pub fn validate_scenario(config: &ScenarioConfig) -> Vec<ConfigViolation> {
    let mut report = Vec::new();
    let mut positive = |field: &'static str, v: f64| {
        if !(v.is_finite() && v > 0.0) {
            report.push(ConfigViolation {
                field,
                reason: format!("must be positive, got {v}"),
            });
        }
    };
    positive("density", config.density);
    positive("radius", config.radius);
    positive("k_factor", config.k_factor);
    positive("contact_cap", config.contact_cap);

    if config.buyer_count < 1 {
        report.push(ConfigViolation {
            field: "buyer_count",
            reason: "need at least one buyer".into(),
        });
    }
    if config.seller_count < 1 {
        report.push(ConfigViolation {
            field: "seller_count",
            reason: "need at least one seller".into(),
        });
    }

    let ranges = [
        ("rate_range", config.rate_range),
        ("data_range", config.data_range),
        ("speed_range", config.speed_range),
        ("local_rate_range", config.local_rate_range),
        ("compute_rate_range", config.compute_rate_range),
        ("idle_stock_range", config.idle_stock_range),
        ("unit_cost_range", config.unit_cost_range),
        ("satisfied_price_range", config.satisfied_price_range),
        ("budget_range", config.budget_range),
        ("deadline_factor_range", config.deadline_factor_range),
    ];
    for (field, range) in ranges {
        if !range.is_valid() {
            report.push(ConfigViolation {
                field,
                reason: format!(
                    "range [{}, {}] must be non-empty with a positive lower bound",
                    range.0, range.1
                ),
            });
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("group has {sellers} sellers but {rates} rates and {contacts} contact windows")]
    LengthMismatch {
        sellers: usize,
        rates: usize,
        contacts: usize,
    },
    #[error("link rate for seller {0} must be positive")]
    NonPositiveRate(usize),
    #[error("contact window for seller {0} must be positive")]
    NonPositiveContact(usize),
    #[error("k_factor must be positive")]
    NonPositiveK,
}

/// One buyer and its in-contact sellers, frozen at a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupProblem {
    pub buyer: Buyer,
    pub sellers: Vec<Seller>,
    /// Link rate r_k in Mb/s per seller.
    pub rates: Vec<f64>,
    /// Remaining contact window per seller, seconds.
    pub contacts: Vec<f64>,
    pub k_factor: f64,
    pub weights: Weights,
    #[serde(default)]
    pub normalize_terms: bool,
}

impl GroupProblem {
    pub fn new(
        buyer: Buyer,
        sellers: Vec<Seller>,
        rates: Vec<f64>,
        contacts: Vec<f64>,
        k_factor: f64,
        weights: Weights,
    ) -> Result<Self, ProblemError> {
        if sellers.len() != rates.len() || sellers.len() != contacts.len() {
            return Err(ProblemError::LengthMismatch {
                sellers: sellers.len(),
                rates: rates.len(),
                contacts: contacts.len(),
            });
        }
        if let Some(k) = rates.iter().position(|r| !(*r > 0.0)) {
            return Err(ProblemError::NonPositiveRate(k));
        }
        if let Some(k) = contacts.iter().position(|c| !(*c > 0.0)) {
            return Err(ProblemError::NonPositiveContact(k));
        }
        if !(k_factor > 0.0) {
            return Err(ProblemError::NonPositiveK);
        }
        Ok(Self {
            buyer,
            sellers,
            rates,
            contacts,
            k_factor,
            weights,
            normalize_terms: false,
        })
    }

    pub fn with_normalized_terms(mut self, on: bool) -> Self {
        self.normalize_terms = on;
        self
    }

    /// Number of sellers m.
    pub fn len(&self) -> usize {
        self.sellers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sellers.is_empty()
    }

    /// Seconds per megabit on seller `k`: 1/r_k + K/C_k.
    pub fn seller_time_coefficient(&self, k: usize) -> f64 {
        1.0 / self.rates[k] + self.k_factor / self.sellers[k].compute_rate
    }

    /// Seconds per megabit executed locally: K/C_B.
    pub fn local_time_coefficient(&self) -> f64 {
        self.k_factor / self.buyer.local_rate
    }
}

/// Joint decision: workload per seller, local workload, and per-seller price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// x_1..x_m in megabits.
    pub offloaded: Vec<f64>,
    /// x_B in megabits.
    pub local: f64,
    /// p_1..p_m, currency per megabit.
    pub prices: Vec<f64>,
}

impl Decision {
    /// Everything local, every price at the given level.
    pub fn all_local(data_size: f64, prices: Vec<f64>) -> Self {
        Self {
            offloaded: vec![0.0; prices.len()],
            local: data_size,
            prices,
        }
    }

    /// x_B + Σ x_k.
    pub fn total_workload(&self) -> f64 {
        self.local + self.offloaded.iter().sum::<f64>()
    }
}

/// Evaluated decision for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSolution {
    pub decision: Decision,
    pub objective: f64,
    /// T_i, seconds.
    pub completion_time: f64,
    pub payment: f64,
    pub feasible: bool,
    pub violations: Vec<crate::objective::ConstraintStatus>,
}

/// Contents of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub buyers: Vec<Buyer>,
    pub sellers: Vec<Seller>,
    pub kinematics: Vec<crate::mobility::VehicleKinematics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<crate::mobility::CooperativeGroup>>,
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Builds the solver input for the group at `index`.
    ///
    /// Panics if groups have not been formed or the ids do not resolve.
    pub fn group_problem(&self, index: usize) -> GroupProblem {
        let groups = self.groups.as_ref().expect("scenario has groups");
        let group = &groups[index];
        let buyer = self
            .buyers
            .iter()
            .find(|b| b.id == group.buyer_id)
            .expect("group buyer exists")
            .clone();
        let sellers = group
            .members
            .iter()
            .map(|m| {
                self.sellers
                    .iter()
                    .find(|s| s.id == m.seller_id)
                    .expect("group seller exists")
                    .clone()
            })
            .collect();
        let rates = group.members.iter().map(|m| m.rate).collect();
        let contacts = group.members.iter().map(|m| m.contact).collect();
        GroupProblem::new(
            buyer,
            sellers,
            rates,
            contacts,
            self.config.k_factor,
            self.config.weights,
        )
        .expect("formed groups satisfy problem invariants")
        .with_normalized_terms(self.config.normalize_terms)
    }

    pub fn group_count(&self) -> usize {
        self.groups.as_ref().map_or(0, Vec::len)
    }
}
