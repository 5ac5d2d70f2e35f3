//! Trailing-window indicators for live sessions.
//!
//! [`KpiWindows`] folds trace records tick by tick. Streaming it record by
//! record and recomputing it from a trace prefix give identical values, which
//! is what lets a dashboard be checked against the log.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::demand::{OrderId, OrderState};
use crate::metrics::StateCounts;
use crate::trace::{TraceEvent, TraceRecord};

/// Length of the trailing window, in simulated seconds.
pub const WINDOW_S: f64 = 43_200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub t_s: f64,
    /// Vehicles per state (Idle, ToPickup, ToDelivery, ToCharge, Charging).
    pub counts: [u32; 5],
    /// Mean wait of orders delivered since the previous sample, in minutes.
    pub avg_wait_min: Option<f64>,
    pub deliveries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiBlock {
    pub wait_window: Vec<(f64, Option<f64>)>,
    pub state_window: Vec<(f64, [u32; 5])>,
    /// Mean wait over all deliveries in the window, in minutes.
    pub window_avg_wait_min: Option<f64>,
    pub unserved_counter: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpiWindows {
    tick_s: f64,
    sample_every_ticks: u64,
    counts: StateCounts,
    placed: BTreeMap<OrderId, f64>,
    pending_wait_s: f64,
    pending_n: u32,
    unserved: u64,
    closed_km: f64,
    samples: VecDeque<WindowSample>,
    next_tick: u64,
}

impl KpiWindows {
    /// Takes one sample every `sample_every_ticks` ticks (at least 1).
    pub fn new(tick_s: f64, sample_every_ticks: u64) -> Self {
        Self {
            tick_s,
            sample_every_ticks: sample_every_ticks.max(1),
            counts: StateCounts::default(),
            placed: BTreeMap::new(),
            pending_wait_s: 0.0,
            pending_n: 0,
            unserved: 0,
            closed_km: 0.0,
            samples: VecDeque::new(),
            next_tick: 0,
        }
    }

    /// Recomputes the windows from scratch over a trace prefix ending at `tick`.
    pub fn replay(tick_s: f64, sample_every_ticks: u64, records: &[TraceRecord], tick: u64) -> Self {
        let mut k = Self::new(tick_s, sample_every_ticks);
        k.ingest(records, tick);
        k
    }

    /// Applies `records` (which must follow everything already ingested) and
    /// closes every tick up to and including `through_tick`. Records beyond
    /// that tick are ignored, so callers should pass them again later.
    pub fn ingest(&mut self, records: &[TraceRecord], through_tick: u64) -> usize {
        let mut used = 0;
        for r in records {
            if r.tick > through_tick {
                break;
            }
            while self.next_tick < r.tick {
                self.close_tick(self.next_tick);
            }
            self.apply(r);
            used += 1;
        }
        while self.next_tick <= through_tick {
            self.close_tick(self.next_tick);
        }
        used
    }

    fn apply(&mut self, r: &TraceRecord) {
        self.counts.apply(&r.event);
        match &r.event {
            TraceEvent::OrderPlaced { order } => {
                self.placed.insert(*order, r.t_s);
            }
            TraceEvent::Order { order, to: OrderState::Delivered, .. } => {
                if let Some(p) = self.placed.remove(order) {
                    self.pending_wait_s += r.t_s - p;
                    self.pending_n += 1;
                }
            }
            TraceEvent::Order { order, to: OrderState::Dropped, .. } => {
                self.placed.remove(order);
                self.unserved += 1;
            }
            TraceEvent::Vehicle { km, .. } => self.closed_km += km,
            TraceEvent::Control { .. } => {
                self.unserved = 0;
                self.samples.clear();
                self.pending_wait_s = 0.0;
                self.pending_n = 0;
            }
            _ => {}
        }
    }

    fn close_tick(&mut self, tick: u64) {
        self.next_tick = tick + 1;
        let t_s = tick as f64 * self.tick_s;
        if tick.is_multiple_of(self.sample_every_ticks) {
            let avg = (self.pending_n > 0).then(|| self.pending_wait_s / self.pending_n as f64 / 60.0);
            self.samples.push_back(WindowSample { t_s, counts: self.counts.0, avg_wait_min: avg, deliveries: self.pending_n });
            self.pending_wait_s = 0.0;
            self.pending_n = 0;
        }
        while self.samples.front().is_some_and(|s| s.t_s < t_s - WINDOW_S) {
            self.samples.pop_front();
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = &WindowSample> + '_ {
        self.samples.iter()
    }

    pub fn unserved_counter(&self) -> u64 {
        self.unserved
    }

    /// Distance of all legs closed so far, in km.
    pub fn closed_km(&self) -> f64 {
        self.closed_km
    }

    pub fn state_counts(&self) -> [u32; 5] {
        self.counts.0
    }

    pub fn block(&self) -> KpiBlock {
        let (sum, n) = self
            .samples
            .iter()
            .filter_map(|s| s.avg_wait_min.map(|w| (w * s.deliveries as f64, s.deliveries)))
            .fold((0.0, 0u32), |(a, b), (w, d)| (a + w, b + d));
        KpiBlock {
            wait_window: self.samples.iter().map(|s| (s.t_s, s.avg_wait_min)).collect(),
            state_window: self.samples.iter().map(|s| (s.t_s, s.counts)).collect(),
            window_avg_wait_min: (n > 0).then(|| sum / n as f64),
            unserved_counter: self.unserved,
        }
    }
}
