//! Reduction of a trace to the summary metrics of a run.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::demand::OrderState;
use crate::fleet::VehicleState;
use crate::trace::{Trace, TraceEvent, TraceRecord};
use crate::SERVICE_WAIT_LIMIT_S;

/// Required share of trips under the wait limit, in percent.
pub const SERVICE_LEVEL_PCT: f64 = 95.0;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub num_vehicles: usize,
    pub demand_count: usize,
    pub avg_trip_time_min: f64,
    pub pct_under_40min: f64,
    pub avg_trips_per_vehicle: f64,
    pub total_charges: usize,
    pub total_km: f64,
    pub pct_km_pickup: f64,
    pub pct_km_delivery: f64,
    pub pct_km_recharge: f64,
    pub avg_km_per_vehicle: f64,
    pub unserved_count: usize,
    pub delivered_count: usize,
    /// Vehicle counts per state (Idle, ToPickup, ToDelivery, ToCharge,
    /// Charging) at the end of every tick.
    pub state_timeseries: Vec<[u32; 5]>,
    /// `(delivery time s, wait min)` per delivered order.
    pub wait_timeseries: Vec<(f64, f64)>,
}

impl MetricsReport {
    pub const CSV_COLUMNS: [&'static str; 12] = [
        "num_vehicles",
        "demand_count",
        "avg_trip_time_min",
        "pct_under_40min",
        "avg_trips_per_vehicle",
        "total_charges",
        "total_km",
        "pct_km_pickup",
        "pct_km_delivery",
        "pct_km_recharge",
        "avg_km_per_vehicle",
        "unserved_count",
    ];

    /// Scalar fields in [`CSV_COLUMNS`](Self::CSV_COLUMNS) order.
    pub fn scalar_values(&self) -> [f64; 12] {
        [
            self.num_vehicles as f64,
            self.demand_count as f64,
            self.avg_trip_time_min,
            self.pct_under_40min,
            self.avg_trips_per_vehicle,
            self.total_charges as f64,
            self.total_km,
            self.pct_km_pickup,
            self.pct_km_delivery,
            self.pct_km_recharge,
            self.avg_km_per_vehicle,
            self.unserved_count as f64,
        ]
    }

    /// Largest number of vehicles simultaneously charging during ticks whose
    /// time of day lies in `[start_s, end_s)`.
    pub fn peak_charging_between(&self, tick_s: f64, start_s: f64, end_s: f64) -> u32 {
        self.state_timeseries
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let tod = crate::time_of_day(*k as f64 * tick_s);
                tod >= start_s && tod < end_s
            })
            .map(|(_, c)| c[VehicleState::Charging.index()])
            .max()
            .unwrap_or(0)
    }
}

/// Running per-state vehicle counts, updated from trace records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StateCounts(pub [u32; 5]);

impl StateCounts {
    pub fn apply(&mut self, event: &TraceEvent) {
        match *event {
            TraceEvent::VehicleAdded { .. } => self.0[VehicleState::Idle.index()] += 1,
            TraceEvent::VehicleRemoved { state, .. } => self.0[state.index()] -= 1,
            TraceEvent::Vehicle { from, to, .. } => {
                self.0[from.index()] -= 1;
                self.0[to.index()] += 1;
            }
            _ => {}
        }
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }
}

/// Summarizes a trace. Averages over trips use delivered orders only.
pub fn compute_metrics(trace: &Trace) -> MetricsReport {
    let mut placed_at = BTreeMap::new();
    let mut vehicles: isize = 0;
    let mut demand = 0usize;
    let mut dropped = 0usize;
    let mut charges = 0usize;
    let mut km = [0.0f64; 3];
    let mut waits = Vec::new();
    let mut counts = StateCounts::default();
    let mut series = Vec::with_capacity(trace.end_tick as usize + 1);

    let add_km = |state: VehicleState, d: f64, km: &mut [f64; 3]| match state {
        VehicleState::ToPickup => km[0] += d,
        VehicleState::ToDelivery => km[1] += d,
        VehicleState::ToCharge => km[2] += d,
        _ => {}
    };

    let mut records = trace.records.iter().peekable();
    for tick in 0..=trace.end_tick {
        while let Some(TraceRecord { tick: rt, t_s, event }) = records.peek() {
            if *rt > tick {
                break;
            }
            records.next();
            counts.apply(event);
            match event {
                TraceEvent::VehicleAdded { .. } => vehicles += 1,
                TraceEvent::VehicleRemoved { .. } => vehicles -= 1,
                TraceEvent::Vehicle { from, to, km: d, .. } => {
                    add_km(*from, *d, &mut km);
                    if *from == VehicleState::ToCharge && *to == VehicleState::Charging {
                        charges += 1;
                    }
                }
                TraceEvent::Odometer { state, km: d, .. } => add_km(*state, *d, &mut km),
                TraceEvent::OrderPlaced { order } => {
                    demand += 1;
                    placed_at.insert(*order, *t_s);
                }
                TraceEvent::Order { order, to, .. } => match to {
                    OrderState::Delivered => {
                        if let Some(p) = placed_at.remove(order) {
                            waits.push((*t_s, *t_s - p));
                        }
                    }
                    OrderState::Dropped => {
                        placed_at.remove(order);
                        dropped += 1;
                    }
                    _ => {}
                },
                TraceEvent::Control { .. } => {}
            }
        }
        series.push(counts.0);
    }

    let delivered = waits.len();
    let num_vehicles = vehicles.max(0) as usize;
    let total_km: f64 = km.iter().sum();
    let under = waits.iter().filter(|w| w.1 < SERVICE_WAIT_LIMIT_S).count();
    let pct_under = if delivered == 0 {
        if demand == 0 { 100.0 } else { 0.0 }
    } else {
        (under as f64 * 100.0) / delivered as f64
    };
    let pct = |x: f64| if total_km > 0.0 { 100.0 * x / total_km } else { 0.0 };
    let per_vehicle = |x: f64| if num_vehicles > 0 { x / num_vehicles as f64 } else { 0.0 };

    MetricsReport {
        num_vehicles,
        demand_count: demand,
        avg_trip_time_min: if delivered > 0 {
            waits.iter().map(|w| w.1).sum::<f64>() / delivered as f64 / 60.0
        } else {
            0.0
        },
        pct_under_40min: pct_under,
        avg_trips_per_vehicle: per_vehicle(delivered as f64),
        total_charges: charges,
        total_km,
        pct_km_pickup: pct(km[0]),
        pct_km_delivery: pct(km[1]),
        pct_km_recharge: pct(km[2]),
        avg_km_per_vehicle: per_vehicle(total_km),
        unserved_count: dropped,
        delivered_count: delivered,
        state_timeseries: series,
        wait_timeseries: waits.into_iter().map(|(t, w)| (t, w / 60.0)).collect(),
    }
}

/// All orders served and at least 95 % of them delivered in under 40 minutes.
pub fn service_level_met(report: &MetricsReport) -> bool {
    report.unserved_count == 0 && report.pct_under_40min >= SERVICE_LEVEL_PCT
}
