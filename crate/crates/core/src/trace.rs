//! Append-only event log of a run. Every metric and dashboard series is
//! derived from it.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::demand::{OrderId, OrderState};
use crate::fleet::{VehicleId, VehicleState};
use crate::network::NodeId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TraceEvent {
    VehicleAdded { vehicle: VehicleId, node: NodeId },
    VehicleRemoved { vehicle: VehicleId, state: VehicleState },
    /// A state change; `km` is the distance driven while in `from`.
    Vehicle { vehicle: VehicleId, from: VehicleState, to: VehicleState, km: f64 },
    /// The order became visible; the record time is its placement time.
    OrderPlaced { order: OrderId },
    Order { order: OrderId, from: OrderState, to: OrderState },
    /// Distance of a leg still open when the trace was closed.
    Odometer { vehicle: VehicleId, state: VehicleState, km: f64 },
    /// A live-session control took effect at this tick.
    Control { label: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Tick during which the record was produced.
    pub tick: u64,
    /// Event time in seconds; may fall inside the tick's step.
    pub t_s: f64,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub tick_s: f64,
    /// Last tick that was simulated.
    pub end_tick: u64,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(tick_s: f64) -> Self {
        Self { tick_s, end_tick: 0, records: Vec::new() }
    }

    pub fn push(&mut self, tick: u64, t_s: f64, event: TraceEvent) {
        self.records.push(TraceRecord { tick, t_s, event });
    }

    pub fn end_s(&self) -> f64 {
        self.end_tick as f64 * self.tick_s
    }

    /// All vehicle state changes, in log order.
    pub fn vehicle_transitions(&self) -> impl Iterator<Item = (VehicleId, VehicleState, VehicleState)> + '_ {
        self.records.iter().filter_map(|r| match r.event {
            TraceEvent::Vehicle { vehicle, from, to, .. } => Some((vehicle, from, to)),
            _ => None,
        })
    }

    /// Records produced up to and including `tick`.
    pub fn prefix(&self, tick: u64) -> &[TraceRecord] {
        let n = self.records.partition_point(|r| r.tick <= tick);
        &self.records[..n]
    }
}
