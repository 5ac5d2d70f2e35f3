//! The tick loop.
//!
//! Every tick runs the same fixed phases: advance vehicles (handling
//! arrivals as they happen), finish charges and admit station queues, night
//! top-ups, low-battery trips, order release and dispatch, then removal of
//! retiring vehicles. Event times inside a tick are exact; dispatch decisions
//! happen on tick boundaries.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charging::{self, Admission, ChargingError, ChargingStrategy, Station, StationId, StrategyKind};
use crate::demand::{self, DemandError, Order, OrderId, OrderState};
use crate::dispatch::{self, CachedDistances, DispatchKind, DispatchPolicy, PolicyError};
use crate::fleet::{
    self, ChargeKind, FleetError, SpecError, Transition, Vehicle, VehicleClass, VehicleEvent, VehicleId, VehicleSpec,
    VehicleState,
};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::network::{DistanceCache, NetworkError, RoadNetwork};
use crate::trace::{Trace, TraceEvent};
use crate::{DAY_S, SERVICE_WAIT_LIMIT_S};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioKind {
    Ice,
    Bev,
    Cc,
    Nc,
    Sd,
    Fc,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] =
        [ScenarioKind::Ice, ScenarioKind::Bev, ScenarioKind::Cc, ScenarioKind::Nc, ScenarioKind::Sd, ScenarioKind::Fc];

    pub fn label(self) -> &'static str {
        match self {
            ScenarioKind::Ice => "ICE",
            ScenarioKind::Bev => "BEV",
            ScenarioKind::Cc => "CC",
            ScenarioKind::Nc => "NC",
            ScenarioKind::Sd => "SD",
            ScenarioKind::Fc => "FC",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label().eq_ignore_ascii_case(s))
    }

    pub fn is_car(self) -> bool {
        matches!(self, ScenarioKind::Ice | ScenarioKind::Bev)
    }

    /// Charging strategy implied by the scenario; car baselines charge
    /// conventionally.
    pub fn strategy(self) -> StrategyKind {
        match self {
            ScenarioKind::Nc => StrategyKind::Nc,
            ScenarioKind::Sd => StrategyKind::Sd,
            ScenarioKind::Fc => StrategyKind::Fc,
            _ => StrategyKind::Cc,
        }
    }

    pub fn from_strategy(kind: StrategyKind) -> Self {
        match kind {
            StrategyKind::Cc => ScenarioKind::Cc,
            StrategyKind::Nc => ScenarioKind::Nc,
            StrategyKind::Sd => ScenarioKind::Sd,
            StrategyKind::Fc => ScenarioKind::Fc,
        }
    }

    /// Default vehicle for the scenario. Lightweight vehicles default to the
    /// middle battery (50 km) and speed (11 km/h) of the study grid.
    pub fn default_spec(self) -> VehicleSpec {
        match self {
            ScenarioKind::Ice => VehicleSpec::ice(),
            ScenarioKind::Bev => VehicleSpec::bev(),
            k => VehicleSpec::slav(50.0, 11.0, k.strategy().station_kind()),
        }
    }

    pub fn default_dispatch(self) -> DispatchPolicy {
        match self {
            ScenarioKind::Sd => DispatchPolicy { kind: DispatchKind::Strategic, candidate_count: 5, battery_exponent: 1.0 },
            _ => DispatchPolicy::nearest(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunMode {
    /// Serve every order, however long it waits.
    Batch,
    /// Run open-ended, dropping orders that wait too long.
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub fleet_size: usize,
    pub spec: VehicleSpec,
    pub dispatch: DispatchPolicy,
    pub strategy: ChargingStrategy,
    pub tick_s: f64,
    pub seed: u64,
    pub mode: RunMode,
    pub live_drop_after_s: f64,
    /// Batch runs still unfinished at this time fail with `Horizon`.
    pub max_sim_s: f64,
    /// Batch runs with no possible progress for this long fail with `Stalled`.
    pub stall_after_s: f64,
}

impl ScenarioConfig {
    pub fn new(scenario: ScenarioKind, fleet_size: usize) -> Self {
        Self {
            scenario,
            fleet_size,
            spec: scenario.default_spec(),
            dispatch: scenario.default_dispatch(),
            strategy: ChargingStrategy::new(scenario.strategy()),
            tick_s: 5.0,
            seed: 0,
            mode: RunMode::Batch,
            live_drop_after_s: SERVICE_WAIT_LIMIT_S,
            max_sim_s: 30.0 * DAY_S,
            stall_after_s: DAY_S,
        }
    }

    /// Lightweight-vehicle scenario with the given battery range and speed.
    pub fn slav(scenario: ScenarioKind, fleet_size: usize, range_km: f64, speed_kmh: f64) -> Self {
        let mut c = Self::new(scenario, fleet_size);
        c.spec.range_km = range_km;
        c.spec.speed_kmh = speed_kmh;
        c
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.fleet_size == 0 {
            return Err(EngineError::InvalidConfig("fleet size must be at least 1"));
        }
        if !(self.tick_s > 0.0) || !self.tick_s.is_finite() {
            return Err(EngineError::InvalidConfig("tick length must be positive"));
        }
        if !(self.live_drop_after_s > 0.0) {
            return Err(EngineError::InvalidConfig("drop delay must be positive"));
        }
        self.spec.validate()?;
        self.dispatch.validate()?;
        self.strategy.validate()?;
        if self.scenario.is_car() != (self.spec.class != VehicleClass::Slav) {
            return Err(EngineError::InvalidConfig("vehicle class does not match scenario"));
        }
        if self.strategy.kind != self.scenario.strategy() {
            return Err(EngineError::InvalidConfig("charging strategy does not match scenario"));
        }
        if self.spec.charge_kind != self.scenario.strategy().station_kind() {
            return Err(EngineError::InvalidConfig("vehicle charge kind does not match scenario"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Fleet(#[from] FleetError),
    #[error(transparent)]
    Charging(#[from] ChargingError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("station {station} is {actual:?} but the scenario needs {expected:?}")]
    StationKind { station: StationId, expected: ChargeKind, actual: ChargeKind },
    #[error("stalled at t={at_s} s with {waiting} orders waiting and no vehicle able to serve them")]
    Stalled { at_s: f64, waiting: usize },
    #[error("run exceeded the {at_s} s horizon with {undelivered} orders undelivered")]
    Horizon { at_s: f64, undelivered: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BatchOptions {
    /// Stop as soon as more than 5 % of orders are certain to miss the
    /// 40-minute limit.
    pub stop_when_failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub trace: Trace,
    pub vehicles: Vec<Vehicle>,
    /// The run was cut short because the service level could no longer be met.
    pub aborted: bool,
}

pub struct Simulation {
    config: ScenarioConfig,
    net: Arc<RoadNetwork>,
    stations: Vec<Station>,
    vehicles: Vec<Vehicle>,
    heading_to: BTreeMap<VehicleId, usize>,
    orders: Vec<Order>,
    order_index: BTreeMap<OrderId, usize>,
    template: Vec<Order>,
    replayed_days: u32,
    next_order: usize,
    first_open: usize,
    waiting: Vec<usize>,
    tick: u64,
    started: bool,
    cache: DistanceCache,
    trace: Trace,
    rng: ChaCha8Rng,
    next_vehicle_id: u32,
    retiring: BTreeSet<VehicleId>,
    delivered: usize,
    late: usize,
    stall_since: Option<f64>,
}

impl Simulation {
    /// Builds a run: validates inputs, places the fleet, and records the
    /// initial vehicles in the trace.
    pub fn new(
        config: ScenarioConfig,
        net: Arc<RoadNetwork>,
        stations: Vec<Station>,
        orders: Vec<Order>,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let vehicles = fleet::init_fleet(config.fleet_size, &config.spec, &net, config.seed);
        Self::with_fleet(config, net, stations, orders, vehicles)
    }

    /// Like [`new`](Self::new) but with an explicit starting fleet, which
    /// overrides `config.fleet_size`.
    pub fn with_fleet(
        mut config: ScenarioConfig,
        net: Arc<RoadNetwork>,
        mut stations: Vec<Station>,
        mut orders: Vec<Order>,
        mut vehicles: Vec<Vehicle>,
    ) -> Result<Self, EngineError> {
        config.fleet_size = vehicles.len();
        config.validate()?;
        vehicles.sort_by_key(|v| v.id);
        for (i, v) in vehicles.iter().enumerate() {
            if i > 0 && vehicles[i - 1].id == v.id {
                return Err(EngineError::InvalidConfig("duplicate vehicle id"));
            }
            if !net.contains(v.node) {
                return Err(EngineError::InvalidConfig("vehicle placed on an unknown node"));
            }
            if v.state != VehicleState::Idle || !(0.0..=config.spec.range_km).contains(&v.battery_km) {
                return Err(EngineError::InvalidConfig("vehicles must start idle with a battery within range"));
            }
        }
        if stations.is_empty() {
            return Err(ChargingError::NoStations.into());
        }
        stations.sort_by_key(|s| s.id);
        let expected = config.scenario.strategy().station_kind();
        for (i, s) in stations.iter().enumerate() {
            if i > 0 && stations[i - 1].id == s.id {
                return Err(ChargingError::DuplicateStation(s.id).into());
            }
            if s.capacity == 0 {
                return Err(ChargingError::ZeroCapacity(s.id).into());
            }
            if !net.contains(s.node) {
                return Err(ChargingError::UnknownNode { station: s.id, node: s.node }.into());
            }
            if s.kind != expected {
                return Err(EngineError::StationKind { station: s.id, expected, actual: s.kind });
            }
        }
        for (row, o) in orders.iter().enumerate() {
            for node in [o.restaurant, o.destination] {
                if !net.contains(node) {
                    return Err(DemandError::UnknownNode { row: row + 1, node }.into());
                }
            }
            if o.restaurant == o.destination {
                return Err(DemandError::SameOriginDestination { row: row + 1 }.into());
            }
        }
        demand::sort_orders(&mut orders);
        let mut order_index = BTreeMap::new();
        for (i, o) in orders.iter().enumerate() {
            if order_index.insert(o.id, i).is_some() {
                return Err(DemandError::DuplicateId { row: i + 1, id: o.id.0 }.into());
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(3);
        let mut trace = Trace::new(config.tick_s);
        for v in &vehicles {
            trace.push(0, 0.0, TraceEvent::VehicleAdded { vehicle: v.id, node: v.node });
        }
        let cache = DistanceCache::new(stations.iter().map(|s| s.node).collect());
        let template = if config.mode == RunMode::Live { orders.clone() } else { Vec::new() };
        Ok(Self {
            next_vehicle_id: vehicles.last().map_or(0, |v| v.id.0 + 1),
            config,
            net,
            stations,
            vehicles,
            heading_to: BTreeMap::new(),
            orders,
            order_index,
            template,
            replayed_days: 0,
            next_order: 0,
            first_open: 0,
            waiting: Vec::new(),
            tick: 0,
            started: false,
            cache,
            trace,
            rng,
            retiring: BTreeSet::new(),
            delivered: 0,
            late: 0,
            stall_since: None,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn network(&self) -> &Arc<RoadNetwork> {
        &self.net
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn orders(&self) -> &[Order] {
        &self.orders
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn now_s(&self) -> f64 {
        self.tick as f64 * self.config.tick_s
    }

    /// Orders placed and not yet assigned, in dispatch order.
    pub fn waiting_orders(&self) -> impl Iterator<Item = &Order> + '_ {
        self.waiting.iter().map(|&i| &self.orders[i])
    }

    pub fn state_counts(&self) -> [u32; 5] {
        let mut c = [0u32; 5];
        for v in &self.vehicles {
            c[v.state.index()] += 1;
        }
        c
    }

    /// Number of vehicles that will remain once pending removals complete.
    pub fn target_fleet_size(&self) -> usize {
        self.vehicles.len() - self.retiring.len()
    }

    pub fn all_delivered(&self) -> bool {
        self.delivered == self.orders.len()
    }

    /// Runs one tick. The first call only processes time zero.
    pub fn step(&mut self) -> Result<(), EngineError> {
        if self.started {
            self.tick += 1;
            let now = self.now_s();
            self.advance_vehicles(now - self.config.tick_s, self.config.tick_s)?;
        } else {
            self.started = true;
        }
        let now = self.now_s();
        self.night_sweep(now)?;
        self.low_battery_sweep(now)?;
        let assigned = self.release_and_dispatch(now)?;
        self.retire_idle(now);
        self.check_stall(now, assigned)?;
        Ok(())
    }

    /// Runs until every order is delivered.
    pub fn run_batch(self) -> Result<RunOutput, EngineError> {
        self.run_batch_with(BatchOptions::default())
    }

    pub fn run_batch_with(mut self, opts: BatchOptions) -> Result<RunOutput, EngineError> {
        let mut aborted = false;
        loop {
            self.step()?;
            if self.all_delivered() {
                break;
            }
            if opts.stop_when_failed && self.service_level_lost() {
                aborted = true;
                break;
            }
            if self.now_s() >= self.config.max_sim_s {
                return Err(EngineError::Horizon { at_s: self.now_s(), undelivered: self.orders.len() - self.delivered });
            }
        }
        Ok(self.finish(aborted))
    }

    /// Closes the trace and summarizes the run.
    pub fn finish(mut self, aborted: bool) -> RunOutput {
        self.flush_open_legs();
        let report = compute_metrics(&self.trace);
        RunOutput { report, trace: self.trace, vehicles: self.vehicles, aborted }
    }

    /// Metrics for the run so far, leaving the simulation untouched.
    pub fn current_report(&self) -> MetricsReport {
        let mut trace = self.trace.clone();
        Self::append_open_legs(&mut trace, &self.vehicles, self.tick);
        compute_metrics(&trace)
    }

    fn flush_open_legs(&mut self) {
        Self::append_open_legs(&mut self.trace, &self.vehicles, self.tick);
    }

    fn append_open_legs(trace: &mut Trace, vehicles: &[Vehicle], tick: u64) {
        trace.end_tick = tick;
        let t = tick as f64 * trace.tick_s;
        for v in vehicles {
            if v.leg_km > 0.0 {
                trace.push(tick, t, TraceEvent::Odometer { vehicle: v.id, state: v.state, km: v.leg_km });
            }
        }
    }

    /// More than 5 % of orders have already missed, or will miss, the limit.
    fn service_level_lost(&self) -> bool {
        let cutoff = self.now_s() - SERVICE_WAIT_LIMIT_S;
        let overdue = self.orders[self.first_open..self.next_order]
            .iter()
            .take_while(|o| o.placed_at_s <= cutoff)
            .filter(|o| o.state != OrderState::Delivered)
            .count();
        (self.late + overdue) * 20 > self.orders.len()
    }

    fn record_vehicle(&mut self, at_s: f64, vehicle: VehicleId, t: Transition) {
        self.trace.push(self.tick, at_s, TraceEvent::Vehicle { vehicle, from: t.from, to: t.to, km: t.km });
    }

    fn record_order(&mut self, at_s: f64, order: OrderId, from: OrderState, to: OrderState) {
        self.trace.push(self.tick, at_s, TraceEvent::Order { order, from, to });
    }

    fn advance_vehicles(&mut self, from_s: f64, dt_s: f64) -> Result<(), EngineError> {
        let mut completions: Vec<(f64, usize)> = Vec::new();
        for i in 0..self.vehicles.len() {
            let mut start = from_s;
            let mut span = dt_s;
            loop {
                match self.vehicles[i].advance(start, span, &self.config.spec)? {
                    None => break,
                    Some(VehicleEvent::ChargeComplete { at_s }) => {
                        completions.push((at_s, i));
                        break;
                    }
                    Some(VehicleEvent::Arrived { at_s, leftover_s }) => {
                        self.on_arrival(i, at_s)?;
                        if !self.vehicles[i].state.is_moving() || self.vehicles[i].route.is_none() {
                            break;
                        }
                        start = at_s;
                        span = leftover_s;
                    }
                }
            }
        }
        completions.sort_by(|a, b| a.0.total_cmp(&b.0).then(self.vehicles[a.1].id.cmp(&self.vehicles[b.1].id)));
        for (at_s, i) in completions {
            self.complete_charge(i, at_s)?;
        }
        Ok(())
    }

    fn on_arrival(&mut self, i: usize, at_s: f64) -> Result<(), EngineError> {
        match self.vehicles[i].state {
            VehicleState::ToPickup => {
                let oi = self.assigned_index(i);
                self.orders[oi].state = OrderState::InTransit;
                self.orders[oi].picked_up_at_s = Some(at_s);
                let (oid, dest) = (self.orders[oi].id, self.orders[oi].destination);
                self.record_order(at_s, oid, OrderState::Assigned, OrderState::InTransit);
                let t = self.vehicles[i].transition(VehicleState::ToDelivery)?;
                self.record_vehicle(at_s, self.vehicles[i].id, t);
                let path = self.cache.path(&self.net, self.vehicles[i].node, dest);
                self.vehicles[i].set_route(path);
            }
            VehicleState::ToDelivery => {
                let oi = self.assigned_index(i);
                let order = &mut self.orders[oi];
                order.state = OrderState::Delivered;
                order.delivered_at_s = Some(at_s);
                let oid = order.id;
                if at_s - order.placed_at_s >= SERVICE_WAIT_LIMIT_S {
                    self.late += 1;
                }
                self.delivered += 1;
                self.record_order(at_s, oid, OrderState::InTransit, OrderState::Delivered);
                while self.first_open < self.next_order
                    && matches!(self.orders[self.first_open].state, OrderState::Delivered | OrderState::Dropped)
                {
                    self.first_open += 1;
                }
                let v = &mut self.vehicles[i];
                v.assigned_order = None;
                v.trips_completed += 1;
                if !self.retiring.contains(&v.id) && fleet::needs_charge(v, &self.config.spec) {
                    self.send_to_station(i, at_s)?;
                } else {
                    let t = self.vehicles[i].transition(VehicleState::Idle)?;
                    self.record_vehicle(at_s, self.vehicles[i].id, t);
                }
            }
            VehicleState::ToCharge => {
                let si = self.heading_to[&self.vehicles[i].id];
                match charging::arrive_at_station(&mut self.vehicles[i], &mut self.stations[si], &self.config.spec, at_s)? {
                    Admission::Charging(t) => self.record_vehicle(at_s, self.vehicles[i].id, t),
                    Admission::Queued { .. } => {}
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn assigned_index(&self, i: usize) -> usize {
        let oid = self.vehicles[i].assigned_order.expect("busy vehicle carries an order");
        self.order_index[&oid]
    }

    fn complete_charge(&mut self, i: usize, at_s: f64) -> Result<(), EngineError> {
        let vid = self.vehicles[i].id;
        let t = fleet::complete_charge(&mut self.vehicles[i], &self.config.spec)?;
        self.record_vehicle(at_s, vid, t);
        let si = self.heading_to.remove(&vid).expect("charging vehicle has a station");
        if let Some(next) = self.stations[si].release(vid) {
            let ni = self.vehicle_index(next);
            let start = self.vehicles[ni].queued_since_s.map_or(at_s, |q| q.max(at_s));
            let (kind, node) = (self.stations[si].kind, self.stations[si].node);
            let t = fleet::start_charge(&mut self.vehicles[ni], &self.config.spec, kind, node, start)?;
            self.record_vehicle(start, next, t);
        }
        Ok(())
    }

    fn vehicle_index(&self, id: VehicleId) -> usize {
        self.vehicles.binary_search_by_key(&id, |v| v.id).expect("vehicle ids are kept sorted")
    }

    fn send_to_station(&mut self, i: usize, now: f64) -> Result<(), EngineError> {
        let v = &self.vehicles[i];
        let mut q = CachedDistances { net: &self.net, cache: &mut self.cache };
        let sid = charging::select_station(v.node, v.battery_km, &self.stations, &mut q)?;
        let si = self.stations.binary_search_by_key(&sid, |s| s.id).expect("selected station exists");
        let path = self.cache.path(&self.net, v.node, self.stations[si].node);
        let t = self.vehicles[i].transition(VehicleState::ToCharge)?;
        self.record_vehicle(now, self.vehicles[i].id, t);
        self.vehicles[i].set_route(path);
        self.heading_to.insert(self.vehicles[i].id, si);
        Ok(())
    }

    fn night_sweep(&mut self, now: f64) -> Result<(), EngineError> {
        let retiring = &self.retiring;
        let ids = charging::night_charge_sweep(
            now,
            self.vehicles.iter().filter(|v| !retiring.contains(&v.id)),
            &self.config.spec,
            &self.config.strategy,
        );
        let day = charging::day_index(now);
        for id in ids {
            let i = self.vehicle_index(id);
            self.vehicles[i].last_night_charge_day = Some(day);
            self.send_to_station(i, now)?;
        }
        Ok(())
    }

    fn low_battery_sweep(&mut self, now: f64) -> Result<(), EngineError> {
        for i in 0..self.vehicles.len() {
            let v = &self.vehicles[i];
            if v.state == VehicleState::Idle && !self.retiring.contains(&v.id) && fleet::needs_charge(v, &self.config.spec) {
                self.send_to_station(i, now)?;
            }
        }
        Ok(())
    }

    fn extend_live_orders(&mut self) {
        if self.config.mode != RunMode::Live || self.template.is_empty() {
            return;
        }
        self.replayed_days += 1;
        let shift = self.replayed_days as f64 * DAY_S;
        let base = self.orders.iter().map(|o| o.id.0).max().map_or(0, |m| m + 1);
        for (k, o) in self.template.iter().enumerate() {
            let id = OrderId(base + k as u32);
            self.order_index.insert(id, self.orders.len());
            self.orders.push(Order::new(id, o.placed_at_s + shift, o.restaurant, o.destination));
        }
    }

    fn release_and_dispatch(&mut self, now: f64) -> Result<usize, EngineError> {
        loop {
            if self.next_order == self.orders.len() {
                if self.config.mode == RunMode::Live {
                    let before = self.orders.len();
                    self.extend_live_orders();
                    if self.orders.len() == before {
                        break;
                    }
                    continue;
                }
                break;
            }
            let o = &self.orders[self.next_order];
            if o.placed_at_s > now {
                break;
            }
            let (id, t) = (o.id, o.placed_at_s);
            self.trace.push(self.tick, t, TraceEvent::OrderPlaced { order: id });
            self.waiting.push(self.next_order);
            self.next_order += 1;
        }

        if self.config.mode == RunMode::Live {
            let limit = self.config.live_drop_after_s;
            let mut dropped = Vec::new();
            let orders = &mut self.orders;
            self.waiting.retain(|&oi| {
                let o = &mut orders[oi];
                if now - o.placed_at_s >= limit {
                    o.state = OrderState::Dropped;
                    dropped.push(o.id);
                    false
                } else {
                    true
                }
            });
            for id in dropped {
                self.record_order(now, id, OrderState::Waiting, OrderState::Dropped);
            }
            while self.first_open < self.next_order
                && matches!(self.orders[self.first_open].state, OrderState::Delivered | OrderState::Dropped)
            {
                self.first_open += 1;
            }
        }

        let mut assigned = 0;
        let mut still_waiting = Vec::with_capacity(self.waiting.len());
        let waiting = core::mem::take(&mut self.waiting);
        for oi in waiting {
            let retiring = &self.retiring;
            let has_idle = self.vehicles.iter().any(|v| v.state == VehicleState::Idle && !retiring.contains(&v.id));
            let choice = if has_idle {
                let mut q = CachedDistances { net: &self.net, cache: &mut self.cache };
                dispatch::assign(
                    &self.orders[oi],
                    self.vehicles.iter().filter(|v| !retiring.contains(&v.id)),
                    &self.config.spec,
                    &self.config.dispatch,
                    &mut q,
                )
            } else {
                None
            };
            match choice {
                Some(vid) => {
                    self.assign(oi, vid, now)?;
                    assigned += 1;
                }
                None => still_waiting.push(oi),
            }
        }
        self.waiting = still_waiting;
        Ok(assigned)
    }

    fn assign(&mut self, oi: usize, vid: VehicleId, now: f64) -> Result<(), EngineError> {
        let order = &mut self.orders[oi];
        order.state = OrderState::Assigned;
        order.assigned_at_s = Some(now);
        order.vehicle = Some(vid);
        let (oid, restaurant) = (order.id, order.restaurant);
        self.record_order(now, oid, OrderState::Waiting, OrderState::Assigned);
        let i = self.vehicle_index(vid);
        let t = self.vehicles[i].transition(VehicleState::ToPickup)?;
        self.record_vehicle(now, vid, t);
        let path = self.cache.path(&self.net, self.vehicles[i].node, restaurant);
        self.vehicles[i].set_route(path);
        self.vehicles[i].assigned_order = Some(oid);
        Ok(())
    }

    fn retire_idle(&mut self, now: f64) {
        if self.retiring.is_empty() {
            return;
        }
        let mut gone = Vec::new();
        let retiring = &mut self.retiring;
        self.vehicles.retain(|v| {
            if v.state == VehicleState::Idle && retiring.remove(&v.id) {
                gone.push(v.id);
                false
            } else {
                true
            }
        });
        for id in gone {
            self.trace.push(self.tick, now, TraceEvent::VehicleRemoved { vehicle: id, state: VehicleState::Idle });
        }
    }

    fn check_stall(&mut self, now: f64, assigned: usize) -> Result<(), EngineError> {
        if self.config.mode != RunMode::Batch {
            return Ok(());
        }
        let stuck = assigned == 0
            && !self.waiting.is_empty()
            && self.next_order == self.orders.len()
            && self.vehicles.iter().all(|v| v.state == VehicleState::Idle);
        if !stuck {
            self.stall_since = None;
            return Ok(());
        }
        let since = *self.stall_since.get_or_insert(now);
        if now - since >= self.config.stall_after_s {
            return Err(EngineError::Stalled { at_s: now, waiting: self.waiting.len() });
        }
        Ok(())
    }

    // ---- live-session controls; callers apply these between ticks ----

    /// Logs a control in the trace at the next tick.
    pub fn record_control(&mut self, label: String) {
        let tick = if self.started { self.tick + 1 } else { 0 };
        let t = tick as f64 * self.config.tick_s;
        self.trace.push(tick, t, TraceEvent::Control { label });
    }

    /// Replaces the vehicle parameters. Batteries keep their charge fraction
    /// when the range changes.
    pub fn set_spec(&mut self, spec: VehicleSpec) -> Result<(), EngineError> {
        spec.validate()?;
        let scale = spec.range_km / self.config.spec.range_km;
        if scale != 1.0 {
            for v in &mut self.vehicles {
                v.battery_km = (v.battery_km * scale).min(spec.range_km);
            }
        }
        self.config.spec = spec;
        Ok(())
    }

    /// Switches scenario (vehicle class and charging strategy) in place.
    pub fn set_scenario(&mut self, scenario: ScenarioKind, spec: VehicleSpec) -> Result<(), EngineError> {
        let mut next = self.config.clone();
        next.scenario = scenario;
        next.spec = spec;
        next.strategy.kind = scenario.strategy();
        next.dispatch = scenario.default_dispatch();
        next.validate()?;
        self.set_spec(spec)?;
        let kind = scenario.strategy().station_kind();
        for s in &mut self.stations {
            s.kind = kind;
        }
        self.config.scenario = next.scenario;
        self.config.strategy = next.strategy;
        self.config.dispatch = next.dispatch;
        Ok(())
    }

    /// Grows or shrinks the fleet toward `n`. New vehicles appear at random
    /// nodes; idle vehicles leave first, then busy ones (lowest id first)
    /// once they next become idle.
    pub fn set_fleet_size(&mut self, n: usize) -> Result<(), EngineError> {
        if n == 0 {
            return Err(EngineError::InvalidConfig("fleet size must be at least 1"));
        }
        let now = self.now_s();
        let tick = if self.started { self.tick + 1 } else { 0 };
        let mut active = self.target_fleet_size();
        while active < n {
            if let Some(&id) = self.retiring.iter().next() {
                self.retiring.remove(&id);
            } else {
                let id = VehicleId(self.next_vehicle_id);
                self.next_vehicle_id += 1;
                let v = fleet::random_vehicle(id, &self.config.spec, &self.net, &mut self.rng);
                self.trace.push(tick, now, TraceEvent::VehicleAdded { vehicle: id, node: v.node });
                self.vehicles.push(v);
            }
            active += 1;
        }
        if active > n {
            let mut excess = active - n;
            let retiring = &self.retiring;
            let mut idle: Vec<VehicleId> = self
                .vehicles
                .iter()
                .filter(|v| v.state == VehicleState::Idle && !retiring.contains(&v.id))
                .map(|v| v.id)
                .collect();
            idle.truncate(excess);
            excess -= idle.len();
            let busy: Vec<VehicleId> = self
                .vehicles
                .iter()
                .filter(|v| v.state != VehicleState::Idle && !retiring.contains(&v.id))
                .map(|v| v.id)
                .take(excess)
                .collect();
            self.vehicles.retain(|v| !idle.contains(&v.id));
            for id in idle {
                self.trace.push(tick, now, TraceEvent::VehicleRemoved { vehicle: id, state: VehicleState::Idle });
            }
            self.retiring.extend(busy);
        }
        self.config.fleet_size = n;
        Ok(())
    }
}
