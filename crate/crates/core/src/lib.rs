//! Allocation-only core of the delivery-fleet simulator.
//!
//! Everything in this crate is deterministic given its inputs and a seed:
//! road-graph routing, order generation, the vehicle state machine, the
//! dispatch policies, station capacity handling, the tick engine, metric
//! reduction, and life-cycle CO₂ arithmetic. File formats, the sweep driver,
//! the live session server, and the CLI live in the `fleetsim` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod charging;
pub mod demand;
pub mod desk;
pub mod dispatch;
pub mod engine;
pub mod fleet;
pub mod impact;
pub mod live;
pub mod metrics;
pub mod network;
pub mod trace;

pub use charging::{ChargingStrategy, Station, StationId, StrategyKind};
pub use demand::{DemandProfile, Order, OrderId, OrderState};
pub use dispatch::{DispatchKind, DispatchPolicy};
pub use engine::{EngineError, RunMode, RunOutput, ScenarioConfig, ScenarioKind, Simulation};
pub use fleet::{ChargeKind, Vehicle, VehicleClass, VehicleId, VehicleSpec, VehicleState};
pub use metrics::{compute_metrics, service_level_met, MetricsReport};
pub use network::{Edge, Node, NodeId, Path, RoadNetwork};
pub use trace::{Trace, TraceEvent, TraceRecord};

/// Seconds in one simulated day.
pub const DAY_S: f64 = 86_400.0;

/// Seconds since the most recent simulated midnight.
pub fn time_of_day(t_s: f64) -> f64 {
    t_s - libm::floor(t_s / DAY_S) * DAY_S
}

/// Order-to-delivery time below which a trip counts toward the service level.
pub const SERVICE_WAIT_LIMIT_S: f64 = 2_400.0;
