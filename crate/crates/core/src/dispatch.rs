//! Order-to-vehicle assignment: nearest available vehicle, or the best
//! distance-to-battery score among the `k` nearest.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::Order;
use crate::fleet::{Vehicle, VehicleId, VehicleSpec, VehicleState};
use crate::network::{DistanceCache, NodeId, RoadNetwork};

/// Network distances needed by dispatch and station selection.
pub trait DistanceQuery {
    fn distance_m(&mut self, from: NodeId, to: NodeId) -> f64;
    /// Distance from `from` to the closest charging station.
    fn nearest_station_m(&mut self, from: NodeId) -> f64;
}

/// [`DistanceQuery`] over a network and its memoized distance fields.
pub struct CachedDistances<'a> {
    pub net: &'a RoadNetwork,
    pub cache: &'a mut DistanceCache,
}

impl DistanceQuery for CachedDistances<'_> {
    fn distance_m(&mut self, from: NodeId, to: NodeId) -> f64 {
        self.cache.distance_m(self.net, from, to)
    }

    fn nearest_station_m(&mut self, from: NodeId) -> f64 {
        self.cache.nearest_station_m(self.net, from)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DispatchKind {
    Nearest,
    Strategic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchPolicy {
    pub kind: DispatchKind,
    pub candidate_count: usize,
    pub battery_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("candidate count must be at least 1")]
    CandidateCount,
    #[error("battery exponent must be positive, got {0}")]
    Exponent(f64),
}

impl DispatchPolicy {
    pub fn nearest() -> Self {
        Self { kind: DispatchKind::Nearest, candidate_count: 5, battery_exponent: 1.0 }
    }

    pub fn strategic(candidate_count: usize, battery_exponent: f64) -> Result<Self, PolicyError> {
        let p = Self { kind: DispatchKind::Strategic, candidate_count, battery_exponent };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.candidate_count == 0 {
            return Err(PolicyError::CandidateCount);
        }
        if !(self.battery_exponent > 0.0) || !self.battery_exponent.is_finite() {
            return Err(PolicyError::Exponent(self.battery_exponent));
        }
        Ok(())
    }
}

/// Total trip length in km: vehicle to restaurant, then to the destination.
pub fn trip_km<Q: DistanceQuery>(vehicle: &Vehicle, order: &Order, q: &mut Q) -> f64 {
    (q.distance_m(vehicle.node, order.restaurant) + q.distance_m(order.restaurant, order.destination)) / 1000.0
}

/// An idle vehicle can take an order if, after finishing it, it can still
/// reach the closest station from the destination.
pub fn feasible<Q: DistanceQuery>(vehicle: &Vehicle, order: &Order, q: &mut Q) -> bool {
    if vehicle.state != VehicleState::Idle {
        return false;
    }
    let after = vehicle.battery_km - trip_km(vehicle, order, q);
    after >= q.nearest_station_m(order.destination) / 1000.0
}

/// Idle, feasible vehicles with their pickup distance, sorted by
/// (distance, id).
fn candidates<'v, Q, I>(order: &Order, vehicles: I, q: &mut Q) -> Vec<(f64, &'v Vehicle)>
where
    Q: DistanceQuery,
    I: IntoIterator<Item = &'v Vehicle>,
{
    let mut out: Vec<(f64, &Vehicle)> = Vec::new();
    for v in vehicles {
        if v.state == VehicleState::Idle && feasible(v, order, q) {
            out.push((q.distance_m(v.node, order.restaurant), v));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
    out
}

pub fn assign_nearest<'v, Q, I>(order: &Order, vehicles: I, q: &mut Q) -> Option<VehicleId>
where
    Q: DistanceQuery,
    I: IntoIterator<Item = &'v Vehicle>,
{
    let mut best: Option<(f64, VehicleId)> = None;
    for v in vehicles {
        if v.state != VehicleState::Idle || !feasible(v, order, q) {
            continue;
        }
        let d = q.distance_m(v.node, order.restaurant);
        if best.is_none_or(|(bd, bid)| d < bd || (d == bd && v.id < bid)) {
            best = Some((d, v.id));
        }
    }
    best.map(|(_, id)| id)
}

/// Strategic score: pickup distance over battery fraction raised to `alpha`.
pub fn strategic_score(distance_m: f64, battery_frac: f64, alpha: f64) -> f64 {
    if battery_frac <= 0.0 {
        return f64::INFINITY;
    }
    distance_m / libm::pow(battery_frac, alpha)
}

pub fn assign_strategic<'v, Q, I>(
    order: &Order,
    vehicles: I,
    spec: &VehicleSpec,
    policy: &DispatchPolicy,
    q: &mut Q,
) -> Option<VehicleId>
where
    Q: DistanceQuery,
    I: IntoIterator<Item = &'v Vehicle>,
{
    candidates(order, vehicles, q)
        .into_iter()
        .take(policy.candidate_count)
        .map(|(d, v)| (strategic_score(d, v.battery_frac(spec), policy.battery_exponent), v.id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

/// Dispatches according to `policy.kind`.
pub fn assign<'v, Q, I>(
    order: &Order,
    vehicles: I,
    spec: &VehicleSpec,
    policy: &DispatchPolicy,
    q: &mut Q,
) -> Option<VehicleId>
where
    Q: DistanceQuery,
    I: IntoIterator<Item = &'v Vehicle>,
{
    match policy.kind {
        DispatchKind::Nearest => assign_nearest(order, vehicles, q),
        DispatchKind::Strategic => assign_strategic(order, vehicles, spec, policy, q),
    }
}
