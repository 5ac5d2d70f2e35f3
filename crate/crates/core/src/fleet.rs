//! Vehicles: the per-agent state machine, movement along routes, and
//! battery/fuel bookkeeping. Battery is tracked as remaining range in km.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{NodeId, Path, RoadNetwork};

/// Accumulated rounding allowed before a negative battery is treated as a bug.
pub const BATTERY_EPS_KM: f64 = 1e-9;

/// Distances this close to the route end count as arrived, absorbing rounding
/// in the per-tick distance sum.
pub const ARRIVAL_EPS_M: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl core::fmt::Display for VehicleId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChargeKind {
    Plug,
    Swap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VehicleClass {
    IceCar,
    BevCar,
    Slav,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub class: VehicleClass,
    pub speed_kmh: f64,
    pub range_km: f64,
    pub min_level_frac: f64,
    /// Plug time from empty to full; partial charges scale linearly.
    pub full_recharge_s: f64,
    /// Fixed battery-swap stop duration.
    pub swap_s: f64,
    pub charge_kind: ChargeKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("speed must be positive, got {0} km/h")]
    Speed(f64),
    #[error("range must be positive, got {0} km")]
    Range(f64),
    #[error("minimum battery fraction must lie in (0, 1), got {0}")]
    MinLevel(f64),
    #[error("charge durations must be non-negative")]
    ChargeTime,
}

impl VehicleSpec {
    /// Combustion car: 500 km tank, 3 min refuel, 15 % threshold, 30 km/h.
    pub fn ice() -> Self {
        Self {
            class: VehicleClass::IceCar,
            speed_kmh: 30.0,
            range_km: 500.0,
            min_level_frac: 0.15,
            full_recharge_s: 180.0,
            swap_s: 180.0,
            charge_kind: ChargeKind::Plug,
        }
    }

    /// Electric car: 342 km range, 30 min recharge, 15 % threshold, 30 km/h.
    pub fn bev() -> Self {
        Self {
            class: VehicleClass::BevCar,
            speed_kmh: 30.0,
            range_km: 342.0,
            min_level_frac: 0.15,
            full_recharge_s: 1800.0,
            swap_s: 1800.0,
            charge_kind: ChargeKind::Plug,
        }
    }

    /// Lightweight autonomous vehicle with a 25 % threshold, 4.5 h plug
    /// recharge and a 1.85 min swap.
    pub fn slav(range_km: f64, speed_kmh: f64, charge_kind: ChargeKind) -> Self {
        Self {
            class: VehicleClass::Slav,
            speed_kmh,
            range_km,
            min_level_frac: 0.25,
            full_recharge_s: 16_200.0,
            swap_s: 111.0,
            charge_kind,
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if !(self.speed_kmh > 0.0) || !self.speed_kmh.is_finite() {
            return Err(SpecError::Speed(self.speed_kmh));
        }
        if !(self.range_km > 0.0) || !self.range_km.is_finite() {
            return Err(SpecError::Range(self.range_km));
        }
        if !(self.min_level_frac > 0.0 && self.min_level_frac < 1.0) {
            return Err(SpecError::MinLevel(self.min_level_frac));
        }
        if !(self.full_recharge_s >= 0.0 && self.swap_s >= 0.0) {
            return Err(SpecError::ChargeTime);
        }
        Ok(())
    }

    pub fn min_level_km(&self) -> f64 {
        self.min_level_frac * self.range_km
    }

    /// Meters covered in `dt_s` seconds.
    pub fn meters_in(&self, dt_s: f64) -> f64 {
        self.speed_kmh * 1000.0 * dt_s / 3600.0
    }

    /// Seconds needed to cover `meters`.
    pub fn seconds_for(&self, meters: f64) -> f64 {
        meters * 3600.0 / (self.speed_kmh * 1000.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VehicleState {
    Idle,
    ToPickup,
    ToDelivery,
    ToCharge,
    Charging,
}

impl VehicleState {
    pub const ALL: [VehicleState; 5] = [
        VehicleState::Idle,
        VehicleState::ToPickup,
        VehicleState::ToDelivery,
        VehicleState::ToCharge,
        VehicleState::Charging,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            VehicleState::Idle => "Idle",
            VehicleState::ToPickup => "ToPickup",
            VehicleState::ToDelivery => "ToDelivery",
            VehicleState::ToCharge => "ToCharge",
            VehicleState::Charging => "Charging",
        }
    }

    pub fn is_moving(self) -> bool {
        matches!(self, VehicleState::ToPickup | VehicleState::ToDelivery | VehicleState::ToCharge)
    }
}

/// The allowed edges of the vehicle state machine.
pub fn can_transition(from: VehicleState, to: VehicleState) -> bool {
    use VehicleState::*;
    matches!(
        (from, to),
        (Idle, ToPickup)
            | (Idle, ToCharge)
            | (ToPickup, ToDelivery)
            | (ToDelivery, Idle)
            | (ToDelivery, ToCharge)
            | (ToCharge, Charging)
            | (Charging, Idle)
    )
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FleetError {
    #[error("vehicle {vehicle}: forbidden transition {from:?} -> {to:?}")]
    ForbiddenTransition { vehicle: VehicleId, from: VehicleState, to: VehicleState },
    #[error("vehicle {vehicle}: battery underflow ({battery_km} km)")]
    BatteryUnderflow { vehicle: VehicleId, battery_km: f64 },
    #[error("vehicle {vehicle} is not waiting at the station node")]
    NotAtStation { vehicle: VehicleId },
    #[error("time step must be positive")]
    NonPositiveStep,
}

/// A path being driven, with progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub path: Path,
    pub traveled_m: f64,
}

impl Route {
    pub fn new(path: Path) -> Self {
        Self { path, traveled_m: 0.0 }
    }

    pub fn remaining_m(&self) -> f64 {
        (self.path.total_length_m - self.traveled_m).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: VehicleId,
    /// Last node reached; the current location whenever no route is set.
    pub node: NodeId,
    pub battery_km: f64,
    pub state: VehicleState,
    pub route: Option<Route>,
    pub assigned_order: Option<crate::demand::OrderId>,
    pub charge_finish_at_s: Option<f64>,
    /// Time the vehicle reached a station and joined its queue.
    pub queued_since_s: Option<f64>,
    pub km_pickup: f64,
    pub km_delivery: f64,
    pub km_recharge: f64,
    /// Distance driven since entering the current state.
    pub leg_km: f64,
    pub trips_completed: u32,
    pub charges_completed: u32,
    pub last_night_charge_day: Option<u32>,
}

/// Something that happened to a vehicle during one `advance` call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VehicleEvent {
    /// Reached the end of the route at `at_s`, with `leftover_s` of the step unused.
    Arrived { at_s: f64, leftover_s: f64 },
    ChargeComplete { at_s: f64 },
}

/// Record of one state change, for the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub from: VehicleState,
    pub to: VehicleState,
    /// Distance driven while in `from`.
    pub km: f64,
}

impl Vehicle {
    pub fn new(id: VehicleId, node: NodeId, battery_km: f64) -> Self {
        Self {
            id,
            node,
            battery_km,
            state: VehicleState::Idle,
            route: None,
            assigned_order: None,
            charge_finish_at_s: None,
            queued_since_s: None,
            km_pickup: 0.0,
            km_delivery: 0.0,
            km_recharge: 0.0,
            leg_km: 0.0,
            trips_completed: 0,
            charges_completed: 0,
            last_night_charge_day: None,
        }
    }

    pub fn total_km(&self) -> f64 {
        self.km_pickup + self.km_delivery + self.km_recharge
    }

    pub fn battery_frac(&self, spec: &VehicleSpec) -> f64 {
        self.battery_km / spec.range_km
    }

    pub fn transition(&mut self, to: VehicleState) -> Result<Transition, FleetError> {
        let from = self.state;
        if !can_transition(from, to) {
            return Err(FleetError::ForbiddenTransition { vehicle: self.id, from, to });
        }
        self.state = to;
        let km = core::mem::replace(&mut self.leg_km, 0.0);
        Ok(Transition { from, to, km })
    }

    /// Starts driving `path` from the current node.
    pub fn set_route(&mut self, path: Path) {
        self.route = Some(Route::new(path));
    }

    /// Moves the vehicle for the step `[from_s, from_s + dt_s]`.
    ///
    /// A moving vehicle covers `speed · dt` along its route, clamped at the
    /// route end; the battery drops by exactly the distance covered. A charging
    /// vehicle reports completion once the step reaches its finish time. Idle
    /// and queued vehicles are untouched.
    pub fn advance(&mut self, from_s: f64, dt_s: f64, spec: &VehicleSpec) -> Result<Option<VehicleEvent>, FleetError> {
        if !(dt_s >= 0.0) {
            return Err(FleetError::NonPositiveStep);
        }
        match self.state {
            VehicleState::Charging => {
                let finish = self.charge_finish_at_s.unwrap_or(from_s);
                Ok((from_s + dt_s >= finish).then_some(VehicleEvent::ChargeComplete { at_s: finish }))
            }
            s if s.is_moving() => {
                let Some(route) = self.route.as_mut() else {
                    return Ok(None);
                };
                let remaining = route.remaining_m();
                let reach = spec.meters_in(dt_s);
                let arrived = reach >= remaining - ARRIVAL_EPS_M;
                let moved = if arrived { remaining } else { reach };
                route.traveled_m += moved;
                let moved_km = moved / 1000.0;
                self.battery_km -= moved_km;
                if self.battery_km < 0.0 {
                    if self.battery_km < -BATTERY_EPS_KM {
                        return Err(FleetError::BatteryUnderflow { vehicle: self.id, battery_km: self.battery_km });
                    }
                    self.battery_km = 0.0;
                }
                self.leg_km += moved_km;
                match s {
                    VehicleState::ToPickup => self.km_pickup += moved_km,
                    VehicleState::ToDelivery => self.km_delivery += moved_km,
                    _ => self.km_recharge += moved_km,
                }
                if !arrived {
                    return Ok(None);
                }
                let used_s = spec.seconds_for(moved).min(dt_s);
                let route = self.route.take().expect("route checked above");
                if let Some(&last) = route.path.nodes.last() {
                    self.node = last;
                }
                Ok(Some(VehicleEvent::Arrived { at_s: from_s + used_s, leftover_s: dt_s - used_s }))
            }
            _ => Ok(None),
        }
    }

    /// Planar position, interpolated along the current route.
    pub fn position(&self, net: &RoadNetwork) -> (f64, f64) {
        let here = net.node(self.node).map(|n| (n.x_m, n.y_m)).unwrap_or((0.0, 0.0));
        let Some(route) = &self.route else {
            return here;
        };
        let mut left = route.traveled_m;
        for (i, &len) in route.path.edge_lengths_m.iter().enumerate() {
            if left <= len {
                let a = net.node(route.path.nodes[i]);
                let b = net.node(route.path.nodes[i + 1]);
                if let (Some(a), Some(b)) = (a, b) {
                    let f = left / len;
                    return (a.x_m + f * (b.x_m - a.x_m), a.y_m + f * (b.y_m - a.y_m));
                }
            }
            left -= len;
        }
        route
            .path
            .nodes
            .last()
            .and_then(|&n| net.node(n))
            .map(|n| (n.x_m, n.y_m))
            .unwrap_or(here)
    }
}

pub fn needs_charge(vehicle: &Vehicle, spec: &VehicleSpec) -> bool {
    vehicle.battery_km < spec.min_level_km()
}

/// Seconds needed at a station of `station_kind` from the vehicle's current level.
pub fn charge_duration_s(battery_km: f64, spec: &VehicleSpec, station_kind: ChargeKind) -> f64 {
    match station_kind {
        ChargeKind::Plug => spec.full_recharge_s * (1.0 - battery_km / spec.range_km).clamp(0.0, 1.0),
        ChargeKind::Swap => spec.swap_s,
    }
}

/// Plugs in (or swaps) a vehicle that has reached `station_node`.
pub fn start_charge(
    vehicle: &mut Vehicle,
    spec: &VehicleSpec,
    station_kind: ChargeKind,
    station_node: NodeId,
    now_s: f64,
) -> Result<Transition, FleetError> {
    if vehicle.state != VehicleState::ToCharge || vehicle.route.is_some() || vehicle.node != station_node {
        return Err(FleetError::NotAtStation { vehicle: vehicle.id });
    }
    let t = vehicle.transition(VehicleState::Charging)?;
    vehicle.charge_finish_at_s = Some(now_s + charge_duration_s(vehicle.battery_km, spec, station_kind));
    vehicle.queued_since_s = None;
    Ok(t)
}

/// Ends a charging session: full battery, back to Idle.
pub fn complete_charge(vehicle: &mut Vehicle, spec: &VehicleSpec) -> Result<Transition, FleetError> {
    let t = vehicle.transition(VehicleState::Idle)?;
    vehicle.battery_km = spec.range_km;
    vehicle.charge_finish_at_s = None;
    vehicle.charges_completed += 1;
    Ok(t)
}

/// Places `n` Idle vehicles on uniformly random nodes with batteries uniform
/// between the low-battery threshold and full.
pub fn init_fleet(n: usize, spec: &VehicleSpec, net: &RoadNetwork, seed: u64) -> Vec<Vehicle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..n)
        .map(|i| random_vehicle(VehicleId(i as u32), spec, net, &mut rng))
        .collect()
}

pub(crate) fn random_vehicle<R: Rng>(id: VehicleId, spec: &VehicleSpec, net: &RoadNetwork, rng: &mut R) -> Vehicle {
    let node = net.node_at(rng.random_range(0..net.node_count())).id;
    let lo = spec.min_level_km();
    let battery = lo + rng.random::<f64>() * (spec.range_km - lo);
    Vehicle::new(id, node, battery)
}
