//! A live session: one open-ended simulation steered by control messages.
//!
//! [`Session`] is the synchronous core and the only place the simulation is
//! mutated. [`SessionHandle`] runs it on a dedicated thread at a wall-clock
//! pace and publishes snapshots (latest wins).

use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use fleetsim_core::impact::{self, Baseline, EmissionModel};
use fleetsim_core::live::{KpiBlock, KpiWindows};
use fleetsim_core::{
    EngineError, MetricsReport, OrderId, RunMode, ScenarioConfig, ScenarioKind, Simulation, StationId, VehicleSpec,
    VehicleState, DAY_S,
};
use serde::{Deserialize, Serialize};
use tokio::sync::{oneshot, watch};

use crate::config::Inputs;

pub const DEFAULT_TIME_SCALE: f64 = 60.0;
pub const FLEET_RANGE: (usize, usize) = (60, 300);
pub const SPEED_RANGE_KMH: (f64, f64) = (6.0, 20.0);
pub const TIME_SCALE_RANGE: (f64, f64) = (0.1, 1.0e6);
pub const SMALL_BATTERY_KM: f64 = 35.0;
pub const LARGE_BATTERY_KM: f64 = 65.0;
/// Simulated seconds between indicator samples.
pub const SAMPLE_INTERVAL_S: f64 = 60.0;
const MAX_TICKS_PER_FRAME: usize = 4_000;
const FRAME: Duration = Duration::from_millis(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Car fleet serving today's demand.
    Current,
    /// Lightweight autonomous fleet.
    Future,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatterySize {
    Small,
    Large,
}

impl BatterySize {
    pub fn range_km(self) -> f64 {
        match self {
            BatterySize::Small => SMALL_BATTERY_KM,
            BatterySize::Large => LARGE_BATTERY_KM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "CC")]
    Cc,
    #[serde(rename = "NC")]
    Nc,
    #[serde(rename = "SD")]
    Sd,
    #[serde(rename = "FC")]
    Fc,
}

impl Strategy {
    pub fn scenario(self) -> ScenarioKind {
        match self {
            Strategy::Cc => ScenarioKind::Cc,
            Strategy::Nc => ScenarioKind::Nc,
            Strategy::Sd => ScenarioKind::Sd,
            Strategy::Fc => ScenarioKind::Fc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ControlMessage {
    SetScenario { scenario: Phase },
    SetElectrified { electrified: bool },
    SetStrategy { strategy: Strategy },
    SetBattery { battery: BatterySize },
    SetFleetSize { fleet_size: i64 },
    SetSpeed { speed_kmh: f64 },
    Pause,
    Resume,
    SetTimeScale { time_scale: f64 },
}

impl ControlMessage {
    /// Whether the message changes the simulated system, as opposed to the
    /// session clock.
    pub fn is_model_change(&self) -> bool {
        !matches!(self, ControlMessage::Pause | ControlMessage::Resume | ControlMessage::SetTimeScale { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveConfig {
    pub phase: Phase,
    pub scenario: String,
    pub electrified: bool,
    pub strategy: Strategy,
    pub battery: BatterySize,
    pub battery_km: f64,
    pub fleet_size: usize,
    pub speed_kmh: f64,
    pub tick_s: f64,
    pub time_scale: f64,
    pub paused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub seq: Option<u64>,
    pub control: ControlMessage,
    pub applied: bool,
    pub warnings: Vec<String>,
    /// Tick at whose boundary the change takes effect.
    pub effective_tick: u64,
    pub effective: EffectiveConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleView {
    pub id: u32,
    pub x_m: f64,
    pub y_m: f64,
    pub state: VehicleState,
    pub carrying_order: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderView {
    pub id: OrderId,
    pub x_m: f64,
    pub y_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationView {
    pub id: StationId,
    pub node: u32,
    pub x_m: f64,
    pub y_m: f64,
    pub occupancy: usize,
    pub queued: usize,
    pub capacity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub ice_gco2_per_km: f64,
    pub bev_us_gco2_per_km: f64,
    pub bev_renewable_gco2_per_km: f64,
}

impl Default for Baselines {
    fn default() -> Self {
        Self {
            ice_gco2_per_km: Baseline::ICE.gco2_per_km,
            bev_us_gco2_per_km: Baseline::BEV_US.gco2_per_km,
            bev_renewable_gco2_per_km: Baseline::BEV_RENEWABLE.gco2_per_km,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kpi {
    pub gco2_per_km: Option<f64>,
    pub baselines: Baselines,
    #[serde(flatten)]
    pub window: KpiBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub sim_clock_s: f64,
    pub scenario: String,
    pub effective: EffectiveConfig,
    pub controls_applied: u64,
    pub vehicles: Vec<VehicleView>,
    pub waiting_orders: Vec<OrderView>,
    pub stations: Vec<StationView>,
    pub kpi: Kpi,
}

pub struct Session {
    sim: Simulation,
    kpi: KpiWindows,
    seen: usize,
    us: EmissionModel,
    phase: Phase,
    electrified: bool,
    strategy: Strategy,
    battery_km: f64,
    speed_kmh: f64,
    time_scale: f64,
    paused: bool,
    controls_applied: u64,
    pending_control: bool,
}

fn clamp_warn<T: PartialOrd + Copy + std::fmt::Display>(name: &str, v: T, (lo, hi): (T, T), warnings: &mut Vec<String>) -> T {
    let c = if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    };
    if c != v {
        warnings.push(format!("{name} {v} clamped to {c}"));
    }
    c
}

impl Session {
    /// Starts a session from a scenario. The run is forced into live mode.
    pub fn new(mut config: ScenarioConfig, inputs: &Inputs, us: EmissionModel) -> Result<Self, EngineError> {
        config.mode = RunMode::Live;
        let scenario = config.scenario;
        let spec = config.spec;
        let defaults = ScenarioKind::Cc.default_spec();
        let strategy = match scenario {
            ScenarioKind::Nc => Strategy::Nc,
            ScenarioKind::Sd => Strategy::Sd,
            ScenarioKind::Fc => Strategy::Fc,
            _ => Strategy::Cc,
        };
        let (battery_km, speed_kmh) =
            if scenario.is_car() { (defaults.range_km, defaults.speed_kmh) } else { (spec.range_km, spec.speed_kmh) };
        let tick_s = config.tick_s;
        let every = (SAMPLE_INTERVAL_S / tick_s).round().max(1.0) as u64;
        let sim = Simulation::new(config, inputs.network.clone(), inputs.stations_for(scenario), inputs.orders.clone())?;
        Ok(Self {
            sim,
            kpi: KpiWindows::new(tick_s, every),
            seen: 0,
            us,
            phase: if scenario.is_car() { Phase::Current } else { Phase::Future },
            electrified: scenario == ScenarioKind::Bev,
            strategy,
            battery_km,
            speed_kmh,
            time_scale: DEFAULT_TIME_SCALE,
            paused: false,
            controls_applied: 0,
            pending_control: false,
        })
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn kpi(&self) -> &KpiWindows {
        &self.kpi
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    pub fn tick_s(&self) -> f64 {
        self.sim.config().tick_s
    }

    /// Advances one tick and folds the new trace records into the windows.
    pub fn step(&mut self) -> Result<(), EngineError> {
        self.sim.step()?;
        let records = &self.sim.trace().records[self.seen..];
        self.seen += self.kpi.ingest(records, self.sim.tick_index());
        self.pending_control = false;
        Ok(())
    }

    pub fn effective(&self) -> EffectiveConfig {
        let c = self.sim.config();
        EffectiveConfig {
            phase: self.phase,
            scenario: c.scenario.label().into(),
            electrified: self.electrified,
            strategy: self.strategy,
            battery: if self.battery_km <= SMALL_BATTERY_KM { BatterySize::Small } else { BatterySize::Large },
            battery_km: self.battery_km,
            fleet_size: self.sim.target_fleet_size(),
            speed_kmh: self.speed_kmh,
            tick_s: c.tick_s,
            time_scale: self.time_scale,
            paused: self.paused,
        }
    }

    fn future_spec(&self) -> VehicleSpec {
        let kind = self.strategy.scenario();
        let mut s = kind.default_spec();
        s.range_km = self.battery_km;
        s.speed_kmh = self.speed_kmh;
        s
    }

    fn switch_to_current_model(&mut self) -> Result<(), EngineError> {
        let (kind, spec) = match self.phase {
            Phase::Current => {
                let k = if self.electrified { ScenarioKind::Bev } else { ScenarioKind::Ice };
                (k, k.default_spec())
            }
            Phase::Future => (self.strategy.scenario(), self.future_spec()),
        };
        self.sim.set_scenario(kind, spec)
    }

    /// Applies a control between ticks. Sliders are clamped into range with a
    /// warning; controls that do not apply to the current phase are
    /// acknowledged as not applied.
    pub fn apply(&mut self, msg: ControlMessage, seq: Option<u64>) -> Result<Ack, EngineError> {
        let mut warnings = Vec::new();
        let mut applied = true;
        let not_here = |what: &str, phase: &str, warnings: &mut Vec<String>| {
            warnings.push(format!("{what} only applies to the {phase} scenario"));
            false
        };
        match msg {
            ControlMessage::SetScenario { scenario } => {
                self.phase = scenario;
                self.switch_to_current_model()?;
            }
            ControlMessage::SetElectrified { electrified } => {
                if self.phase == Phase::Current {
                    self.electrified = electrified;
                    self.switch_to_current_model()?;
                } else {
                    applied = not_here("electrification", "Current", &mut warnings);
                }
            }
            ControlMessage::SetStrategy { strategy } => {
                if self.phase == Phase::Future {
                    self.strategy = strategy;
                    self.switch_to_current_model()?;
                } else {
                    applied = not_here("charging strategy", "Future", &mut warnings);
                }
            }
            ControlMessage::SetBattery { battery } => {
                if self.phase == Phase::Future {
                    self.battery_km = battery.range_km();
                    self.sim.set_spec(self.future_spec())?;
                } else {
                    applied = not_here("battery size", "Future", &mut warnings);
                }
            }
            ControlMessage::SetSpeed { speed_kmh } => {
                if !speed_kmh.is_finite() {
                    warnings.push("speed must be a number".into());
                    applied = false;
                } else if self.phase == Phase::Future {
                    self.speed_kmh = clamp_warn("speed", speed_kmh, SPEED_RANGE_KMH, &mut warnings);
                    self.sim.set_spec(self.future_spec())?;
                } else {
                    applied = not_here("speed", "Future", &mut warnings);
                }
            }
            ControlMessage::SetFleetSize { fleet_size } => {
                let range = (FLEET_RANGE.0 as i64, FLEET_RANGE.1 as i64);
                let n = clamp_warn("fleet size", fleet_size, range, &mut warnings);
                self.sim.set_fleet_size(n as usize)?;
            }
            ControlMessage::Pause => self.paused = true,
            ControlMessage::Resume => self.paused = false,
            ControlMessage::SetTimeScale { time_scale } => {
                if time_scale.is_finite() {
                    self.time_scale = clamp_warn("time scale", time_scale, TIME_SCALE_RANGE, &mut warnings);
                } else {
                    warnings.push("time scale must be a number".into());
                    applied = false;
                }
            }
        }
        if applied && msg.is_model_change() {
            self.sim.record_control(format!("{msg:?}"));
            self.controls_applied += 1;
            self.pending_control = true;
        }
        for w in &warnings {
            tracing::warn!("{w}");
        }
        let effective_tick = self.sim.tick_index() + 1;
        Ok(Ack { seq, control: msg, applied, warnings, effective_tick, effective: self.effective() })
    }

    /// Fleet intensity so far. Fixed daily emissions are prorated over the
    /// simulated time elapsed; car fleets report their baseline intensity.
    pub fn gco2_per_km(&self) -> Option<f64> {
        let c = self.sim.config();
        match c.scenario {
            ScenarioKind::Ice => return Some(Baseline::ICE.gco2_per_km),
            ScenarioKind::Bev => return Some(Baseline::BEV_US.gco2_per_km),
            _ => {}
        }
        let open: f64 = self.sim.vehicles().iter().map(|v| v.leg_km).sum();
        let km = self.kpi.closed_km() + open;
        let days = self.sim.now_s().max(c.tick_s) / DAY_S;
        let fleet = self.sim.vehicles().len();
        // fixed costs are per day, so compare against distance per day
        impact::gco2_per_km(&self.us, fleet, c.spec.range_km, c.spec.charge_kind, km / days).ok()
    }

    pub fn snapshot(&self) -> Snapshot {
        let net = self.sim.network();
        let pos = |n| net.node(n).map(|n| (n.x_m, n.y_m)).unwrap_or((0.0, 0.0));
        let vehicles = self
            .sim
            .vehicles()
            .iter()
            .map(|v| {
                let (x_m, y_m) = v.position(net);
                VehicleView { id: v.id.0, x_m, y_m, state: v.state, carrying_order: v.state == VehicleState::ToDelivery }
            })
            .collect();
        let waiting_orders = self
            .sim
            .waiting_orders()
            .map(|o| {
                let (x_m, y_m) = pos(o.restaurant);
                OrderView { id: o.id, x_m, y_m }
            })
            .collect();
        let stations = self
            .sim
            .stations()
            .iter()
            .map(|s| {
                let (x_m, y_m) = pos(s.node);
                StationView {
                    id: s.id,
                    node: s.node.0,
                    x_m,
                    y_m,
                    occupancy: s.occupancy(),
                    queued: s.queue.len(),
                    capacity: s.capacity,
                }
            })
            .collect();
        let mut window = self.kpi.block();
        if self.pending_control {
            // the control record sits at the next tick; show its reset now
            window = KpiBlock { wait_window: vec![], state_window: vec![], window_avg_wait_min: None, unserved_counter: 0 };
        }
        Snapshot {
            tick: self.sim.tick_index(),
            sim_clock_s: self.sim.now_s(),
            scenario: self.sim.config().scenario.label().into(),
            effective: self.effective(),
            controls_applied: self.controls_applied,
            vehicles,
            waiting_orders,
            stations,
            kpi: Kpi { gco2_per_km: self.gco2_per_km(), baselines: Baselines::default(), window },
        }
    }

    pub fn report(&self) -> MetricsReport {
        self.sim.current_report()
    }
}

enum Command {
    Control(ControlMessage, Option<u64>, oneshot::Sender<Result<Ack, String>>),
    Report(oneshot::Sender<MetricsReport>),
    Effective(oneshot::Sender<EffectiveConfig>),
}

#[derive(Debug, thiserror::Error)]
#[error("session closed")]
pub struct SessionClosed;

/// Cloneable handle to a session running on its own thread. The thread
/// stops when every handle is dropped.
#[derive(Clone)]
pub struct SessionHandle {
    tx: mpsc::Sender<Command>,
    snapshots: watch::Receiver<Arc<Snapshot>>,
    inputs: Arc<Inputs>,
}

impl SessionHandle {
    pub fn spawn(session: Session, inputs: Inputs) -> Self {
        let (tx, rx) = mpsc::channel();
        let (snap_tx, snapshots) = watch::channel(Arc::new(session.snapshot()));
        thread::Builder::new()
            .name("fleetsim-session".into())
            .spawn(move || run_session(session, rx, snap_tx))
            .expect("spawn session thread");
        Self { tx, snapshots, inputs: Arc::new(inputs) }
    }

    pub fn inputs(&self) -> &Inputs {
        &self.inputs
    }

    pub fn subscribe(&self) -> watch::Receiver<Arc<Snapshot>> {
        self.snapshots.clone()
    }

    pub fn latest(&self) -> Arc<Snapshot> {
        self.snapshots.borrow().clone()
    }

    pub async fn control(&self, msg: ControlMessage, seq: Option<u64>) -> Result<Result<Ack, String>, SessionClosed> {
        let (tx, rx) = oneshot::channel();
        self.tx.send(Command::Control(msg, seq, tx)).map_err(|_| SessionClosed)?;
        rx.await.map_err(|_| SessionClosed)
    }

    pub async fn report(&self) -> Result<MetricsReport, SessionClosed> {
        let (tx, rx) = oneshot::channel();
        self.tx.send(Command::Report(tx)).map_err(|_| SessionClosed)?;
        rx.await.map_err(|_| SessionClosed)
    }

    pub async fn effective(&self) -> Result<EffectiveConfig, SessionClosed> {
        let (tx, rx) = oneshot::channel();
        self.tx.send(Command::Effective(tx)).map_err(|_| SessionClosed)?;
        rx.await.map_err(|_| SessionClosed)
    }
}

fn run_session(mut session: Session, rx: mpsc::Receiver<Command>, snapshots: watch::Sender<Arc<Snapshot>>) {
    let mut owed_s = 0.0;
    let mut last = Instant::now();
    let mut failed = false;
    loop {
        let mut changed = false;
        let mut next = rx.recv_timeout(FRAME);
        loop {
            match next {
                Ok(Command::Control(msg, seq, reply)) => {
                    let r = session.apply(msg, seq).map_err(|e| e.to_string());
                    let _ = reply.send(r);
                    changed = true;
                }
                Ok(Command::Report(reply)) => {
                    let _ = reply.send(session.report());
                }
                Ok(Command::Effective(reply)) => {
                    let _ = reply.send(session.effective());
                }
                Err(RecvTimeoutError::Timeout) => break,
                Err(RecvTimeoutError::Disconnected) => return,
            }
            next = rx.try_recv().map_err(|e| match e {
                mpsc::TryRecvError::Empty => RecvTimeoutError::Timeout,
                mpsc::TryRecvError::Disconnected => RecvTimeoutError::Disconnected,
            });
        }
        let now = Instant::now();
        if !session.paused() && !failed {
            owed_s += now.duration_since(last).as_secs_f64() * session.time_scale();
            let tick_s = session.tick_s();
            let mut n = 0;
            while owed_s >= tick_s && n < MAX_TICKS_PER_FRAME {
                if let Err(e) = session.step() {
                    tracing::error!("session stopped: {e}");
                    failed = true;
                    break;
                }
                owed_s -= tick_s;
                n += 1;
            }
            if n == MAX_TICKS_PER_FRAME {
                owed_s = owed_s.min(tick_s);
            }
            changed |= n > 0;
        } else {
            owed_s = 0.0;
        }
        last = now;
        if changed {
            snapshots.send_replace(Arc::new(session.snapshot()));
        }
    }
}
