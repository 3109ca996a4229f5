//! Snapshot mobility: vehicle placement on a square road grid, pairwise
//! contact windows under uniform linear motion, and cooperative group
//! formation.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Buyer, ScenarioConfig, Seller, VehicleId};
use crate::seeding::{rng_for, stream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MobilityError {
    #[error("transmission radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("no kinematics for vehicle {0}")]
    MissingKinematics(VehicleId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleKinematics {
    pub id: VehicleId,
    /// Meters.
    pub position: [f64; 2],
    /// Meters per second; exactly one component is nonzero.
    pub velocity: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMember {
    pub seller_id: VehicleId,
    /// Mb/s.
    pub rate: f64,
    /// Remaining contact window, seconds.
    pub contact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooperativeGroup {
    pub buyer_id: VehicleId,
    pub members: Vec<GroupMember>,
}

/// Side of the square region in meters: sqrt((B+S)/μ) kilometers.
pub fn region_side(config: &ScenarioConfig) -> f64 {
    let vehicles = f64::from(config.buyer_count) + f64::from(config.seller_count);
    (vehicles / config.density).sqrt() * 1000.0
}

/// Places `B+S` vehicles uniformly over the region, each driving along one
/// axis at a uniformly drawn speed. Ids run `0..B+S`.
pub fn place_vehicles(config: &ScenarioConfig) -> Vec<VehicleKinematics> {
    let side = region_side(config);
    let total = config.buyer_count + config.seller_count;
    let mut rng = rng_for(config.rng_seed, &[stream::PLACEMENT]);
    let speed = config.speed_range;
    (0..total)
        .map(|id| {
            let position = [rng.random_range(0.0..=side), rng.random_range(0.0..=side)];
            let v = rng.random_range(speed.lo()..=speed.hi());
            let v = if rng.random_bool(0.5) { v } else { -v };
            let velocity = if rng.random_bool(0.5) {
                [v, 0.0]
            } else {
                [0.0, v]
            };
            VehicleKinematics {
                id: VehicleId(id),
                position,
                velocity,
            }
        })
        .collect()
}

/// Remaining time the pair stays within `radius` of each other, measured
/// from now. `None` when they are already out of range; `parallel_cap` when
/// they move in lockstep.
pub fn contact_duration(
    a: &VehicleKinematics,
    b: &VehicleKinematics,
    radius: f64,
    parallel_cap: f64,
) -> Result<Option<f64>, MobilityError> {
    if !(radius > 0.0) {
        return Err(MobilityError::NonPositiveRadius(radius));
    }
    let dp = [a.position[0] - b.position[0], a.position[1] - b.position[1]];
    let dv = [a.velocity[0] - b.velocity[0], a.velocity[1] - b.velocity[1]];
    let dist_sq = dp[0] * dp[0] + dp[1] * dp[1];
    let r_sq = radius * radius;
    if dist_sq > r_sq {
        return Ok(None);
    }
    let qa = dv[0] * dv[0] + dv[1] * dv[1];
    if qa == 0.0 {
        return Ok(Some(parallel_cap));
    }
    // |dp + dv t|² = R²  →  qa t² + qb t + qc = 0 with qc ≤ 0, so the larger
    // root is the exit time and is non-negative.
    let qb = 2.0 * (dp[0] * dv[0] + dp[1] * dv[1]);
    let qc = dist_sq - r_sq;
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
    let t = if qb <= 0.0 {
        (-qb + disc) / (2.0 * qa)
    } else {
        // Avoids cancellation when qb > 0.
        (2.0 * qc) / (-qb - disc)
    };
    Ok(Some(t.max(0.0)))
}

/// One group per buyer, holding every seller within range at the snapshot
/// that still has a positive contact window. Members are sorted by seller
/// id; each link rate is drawn from a stream keyed by the buyer/seller pair.
pub fn form_groups(
    buyers: &[Buyer],
    sellers: &[Seller],
    kinematics: &[VehicleKinematics],
    config: &ScenarioConfig,
) -> Result<Vec<CooperativeGroup>, MobilityError> {
    let by_id: HashMap<VehicleId, &VehicleKinematics> =
        kinematics.iter().map(|k| (k.id, k)).collect();
    let lookup = |id: VehicleId| {
        by_id
            .get(&id)
            .copied()
            .ok_or(MobilityError::MissingKinematics(id))
    };

    let mut sorted_sellers: Vec<&Seller> = sellers.iter().collect();
    sorted_sellers.sort_by_key(|s| s.id);
    let seller_kin = sorted_sellers
        .iter()
        .map(|s| lookup(s.id))
        .collect::<Result<Vec<_>, _>>()?;

    let rate = config.rate_range;
    buyers
        .iter()
        .map(|buyer| {
            let bk = lookup(buyer.id)?;
            let mut members = Vec::new();
            for (seller, sk) in sorted_sellers.iter().zip(&seller_kin) {
                let Some(contact) = contact_duration(bk, sk, config.radius, config.contact_cap)?
                else {
                    continue;
                };
                if contact <= 0.0 {
                    continue;
                }
                let mut rng = rng_for(
                    config.rng_seed,
                    &[
                        stream::LINK_RATE,
                        u64::from(buyer.id.0),
                        u64::from(seller.id.0),
                    ],
                );
                members.push(GroupMember {
                    seller_id: seller.id,
                    rate: rng.random_range(rate.lo()..=rate.hi()),
                    contact,
                });
            }
            Ok(CooperativeGroup {
                buyer_id: buyer.id,
                members,
            })
        })
        .collect()
}
