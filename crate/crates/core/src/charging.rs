//! Charging stations (slot capacity with a FIFO queue) and the charging
//! strategy layer.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::DistanceQuery;
use crate::fleet::{self, ChargeKind, FleetError, Transition, Vehicle, VehicleId, VehicleSpec, VehicleState};
use crate::network::NodeId;
use crate::DAY_S;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StationId(pub u32);

impl core::fmt::Display for StationId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: StationId,
    pub node: NodeId,
    pub capacity: usize,
    pub kind: ChargeKind,
    pub occupants: Vec<VehicleId>,
    pub queue: VecDeque<VehicleId>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChargingError {
    #[error("no charging stations configured")]
    NoStations,
    #[error("station {0} has zero capacity")]
    ZeroCapacity(StationId),
    #[error("duplicate station id {0}")]
    DuplicateStation(StationId),
    #[error("station {station} references unknown node {node}")]
    UnknownNode { station: StationId, node: NodeId },
    #[error("night window must satisfy 0 <= start < end <= 86400")]
    Window,
    #[error(transparent)]
    Fleet(#[from] FleetError),
}

impl Station {
    pub fn new(id: StationId, node: NodeId, capacity: usize, kind: ChargeKind) -> Self {
        Self { id, node, capacity, kind, occupants: Vec::new(), queue: VecDeque::new() }
    }

    pub fn has_free_slot(&self) -> bool {
        self.occupants.len() < self.capacity
    }

    pub fn occupancy(&self) -> usize {
        self.occupants.len()
    }

    /// Frees the slot held by `vehicle` and moves the queue head into it.
    /// Returns the admitted vehicle, which the caller must start charging.
    pub fn release(&mut self, vehicle: VehicleId) -> Option<VehicleId> {
        self.occupants.retain(|&v| v != vehicle);
        if self.has_free_slot() {
            let next = self.queue.pop_front()?;
            self.occupants.push(next);
            Some(next)
        } else {
            None
        }
    }
}

/// Outcome of a vehicle reaching a station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Admission {
    Charging(Transition),
    Queued { position: usize },
}

/// Picks the station a vehicle at `from` should drive to.
///
/// The closest station with a free slot wins, restricted to stations the
/// vehicle can reach on its remaining battery. If none qualifies, the closest
/// station overall is returned and the vehicle will queue there. Ties go to the
/// smallest station id.
pub fn select_station<Q: DistanceQuery>(
    from: NodeId,
    battery_km: f64,
    stations: &[Station],
    q: &mut Q,
) -> Result<StationId, ChargingError> {
    let mut free: Option<(f64, StationId)> = None;
    let mut any: Option<(f64, StationId)> = None;
    let better = |cur: Option<(f64, StationId)>, cand: (f64, StationId)| match cur {
        None => true,
        Some(c) => cand.0 < c.0 || (cand.0 == c.0 && cand.1 < c.1),
    };
    for s in stations {
        let d = q.distance_m(from, s.node);
        if better(any, (d, s.id)) {
            any = Some((d, s.id));
        }
        if s.has_free_slot() && d / 1000.0 <= battery_km && better(free, (d, s.id)) {
            free = Some((d, s.id));
        }
    }
    free.or(any).map(|(_, id)| id).ok_or(ChargingError::NoStations)
}

/// A vehicle in ToCharge has reached `station`: it takes a free slot and
/// starts charging, or joins the back of the queue.
pub fn arrive_at_station(
    vehicle: &mut Vehicle,
    station: &mut Station,
    spec: &VehicleSpec,
    now_s: f64,
) -> Result<Admission, ChargingError> {
    if vehicle.state != VehicleState::ToCharge || vehicle.route.is_some() || vehicle.node != station.node {
        return Err(FleetError::NotAtStation { vehicle: vehicle.id }.into());
    }
    if station.has_free_slot() && station.queue.is_empty() {
        station.occupants.push(vehicle.id);
        let t = fleet::start_charge(vehicle, spec, station.kind, station.node, now_s)?;
        Ok(Admission::Charging(t))
    } else {
        station.queue.push_back(vehicle.id);
        vehicle.queued_since_s = Some(now_s);
        Ok(Admission::Queued { position: station.queue.len() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrategyKind {
    /// Conventional plug-in charging.
    Cc,
    /// Conventional charging plus a night top-up window.
    Nc,
    /// Night charging with strategic dispatch.
    Sd,
    /// Battery swapping.
    Fc,
}

impl StrategyKind {
    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::Cc => "CC",
            StrategyKind::Nc => "NC",
            StrategyKind::Sd => "SD",
            StrategyKind::Fc => "FC",
        }
    }

    pub fn has_night_window(self) -> bool {
        matches!(self, StrategyKind::Nc | StrategyKind::Sd)
    }

    pub fn station_kind(self) -> ChargeKind {
        match self {
            StrategyKind::Fc => ChargeKind::Swap,
            _ => ChargeKind::Plug,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargingStrategy {
    pub kind: StrategyKind,
    /// Time-of-day window `[start, end)` in seconds after midnight.
    pub night_window_s: (f64, f64),
    pub night_trigger_frac: f64,
}

impl ChargingStrategy {
    pub fn new(kind: StrategyKind) -> Self {
        Self { kind, night_window_s: (2.0 * 3600.0, 5.0 * 3600.0), night_trigger_frac: 0.90 }
    }

    pub fn validate(&self) -> Result<(), ChargingError> {
        let (a, b) = self.night_window_s;
        if !(a >= 0.0 && a < b && b <= DAY_S) {
            return Err(ChargingError::Window);
        }
        Ok(())
    }

    pub fn in_night_window(&self, clock_s: f64) -> bool {
        let tod = crate::time_of_day(clock_s);
        self.kind.has_night_window() && tod >= self.night_window_s.0 && tod < self.night_window_s.1
    }
}

/// Idle vehicles to send for a night top-up at `clock_s`.
///
/// Inside the window, every idle vehicle under the trigger level that has
/// not yet been night-charged on this simulated day is selected, in id order.
pub fn night_charge_sweep<'v, I>(clock_s: f64, vehicles: I, spec: &VehicleSpec, strategy: &ChargingStrategy) -> Vec<VehicleId>
where
    I: IntoIterator<Item = &'v Vehicle>,
{
    if !strategy.in_night_window(clock_s) {
        return Vec::new();
    }
    let day = day_index(clock_s);
    let trigger = strategy.night_trigger_frac * spec.range_km;
    let mut out: Vec<VehicleId> = vehicles
        .into_iter()
        .filter(|v| v.state == VehicleState::Idle && v.battery_km < trigger && v.last_night_charge_day != Some(day))
        .map(|v| v.id)
        .collect();
    out.sort();
    out
}

pub fn day_index(clock_s: f64) -> u32 {
    libm::floor(clock_s / DAY_S).max(0.0) as u32
}
