use std::sync::Arc;

use fleetsim_core::fleet::can_transition;
use fleetsim_core::live::KpiWindows;
use fleetsim_core::*;
use proptest::prelude::*;

fn line(lengths: &[f64]) -> Arc<RoadNetwork> {
    let nodes = (0..=lengths.len()).map(|i| Node { id: NodeId(i as u32 + 1), x_m: 0.0, y_m: 0.0 }).collect();
    let edges = lengths
        .iter()
        .enumerate()
        .map(|(i, &l)| Edge { id: i as u32, from: NodeId(i as u32 + 1), to: NodeId(i as u32 + 2), length_m: l, bidirectional: true })
        .collect();
    Arc::new(RoadNetwork::new(nodes, edges).unwrap())
}

fn order(id: u32, t: f64, r: u32, d: u32) -> Order {
    Order::new(OrderId(id), t, NodeId(r), NodeId(d))
}

fn station(node: u32, capacity: usize, kind: ChargeKind) -> Vec<Station> {
    vec![Station::new(StationId(1), NodeId(node), capacity, kind)]
}

fn order_times(trace: &Trace, id: OrderId) -> Vec<(OrderState, f64)> {
    trace
        .records
        .iter()
        .filter_map(|r| match r.event {
            TraceEvent::Order { order, to, .. } if order == id => Some((to, r.t_s)),
            _ => None,
        })
        .collect()
}

#[test]
fn hand_traced_single_delivery() {
    let net = line(&[1000.0, 1000.0]);
    let cfg = ScenarioConfig::new(ScenarioKind::Ice, 1);
    let v = Vehicle::new(VehicleId(0), NodeId(1), 500.0);
    let sim = Simulation::with_fleet(cfg, net, station(1, 1, ChargeKind::Plug), vec![order(0, 0.0, 2, 3)], vec![v]).unwrap();
    let out = sim.run_batch().unwrap();
    assert_eq!(
        order_times(&out.trace, OrderId(0)),
        vec![(OrderState::Assigned, 0.0), (OrderState::InTransit, 120.0), (OrderState::Delivered, 240.0)]
    );
    let r = &out.report;
    assert_eq!(r.avg_trip_time_min, 4.0);
    assert_eq!(r.pct_under_40min, 100.0);
    let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
    assert!(close(r.total_km, 2.0));
    assert!(close(r.pct_km_pickup, 50.0) && close(r.pct_km_delivery, 50.0) && r.pct_km_recharge == 0.0);
    assert_eq!((r.demand_count, r.delivered_count, r.total_charges), (1, 1, 0));
    assert!(close(out.vehicles[0].km_pickup, 1.0) && close(out.vehicles[0].km_delivery, 1.0));
    assert!(close(out.vehicles[0].battery_km, 498.0));
    assert_eq!(out.trace.end_s(), 240.0);
}

#[test]
fn zero_orders() {
    let net = Arc::new(desk::network());
    let cfg = ScenarioConfig::new(ScenarioKind::Cc, 4);
    let sim = Simulation::new(cfg, net, desk::stations(ChargeKind::Plug), vec![]).unwrap();
    let out = sim.run_batch().unwrap();
    let r = &out.report;
    assert_eq!((r.demand_count, r.total_km, r.num_vehicles), (0, 0.0, 4));
    assert!(r.state_timeseries.iter().all(|c| *c == [4, 0, 0, 0, 0]));
}

#[test]
fn release_precedes_admission() {
    let net = line(&[1000.0]);
    let cfg = ScenarioConfig::slav(ScenarioKind::Cc, 2, 35.0, 8.0);
    let fleet = vec![Vehicle::new(VehicleId(0), NodeId(1), 8.0), Vehicle::new(VehicleId(1), NodeId(1), 8.5)];
    let mut sim = Simulation::with_fleet(cfg, net, station(1, 1, ChargeKind::Plug), vec![], fleet).unwrap();
    let first_finish = 16_200.0 * (1.0 - 8.0 / 35.0);
    while sim.now_s() < first_finish + 10.0 {
        sim.step().unwrap();
    }
    let charging: Vec<_> = sim
        .trace()
        .records
        .iter()
        .filter_map(|r| match r.event {
            TraceEvent::Vehicle { vehicle, to: VehicleState::Charging, .. } => Some((vehicle, r.t_s, r.tick)),
            TraceEvent::Vehicle { vehicle, from: VehicleState::Charging, .. } => Some((vehicle, -r.t_s, r.tick)),
            _ => None,
        })
        .collect();
    let tick = (first_finish / 5.0).ceil() as u64;
    assert_eq!(
        charging,
        vec![(VehicleId(0), 0.0, 1), (VehicleId(0), -first_finish, tick), (VehicleId(1), first_finish, tick)]
    );
    assert_eq!(sim.stations()[0].occupants, vec![VehicleId(1)]);
}

#[test]
fn order_assigned_in_the_tick_it_appears() {
    let net = line(&[1000.0, 1000.0]);
    let cfg = ScenarioConfig::new(ScenarioKind::Ice, 1);
    let v = Vehicle::new(VehicleId(0), NodeId(1), 500.0);
    let sim = Simulation::with_fleet(cfg, net, station(1, 1, ChargeKind::Plug), vec![order(0, 7.0, 2, 3)], vec![v]).unwrap();
    let out = sim.run_batch().unwrap();
    let placed = out.trace.records.iter().find(|r| matches!(r.event, TraceEvent::OrderPlaced { .. })).unwrap();
    assert_eq!((placed.tick, placed.t_s), (2, 7.0));
    assert_eq!(order_times(&out.trace, OrderId(0))[0], (OrderState::Assigned, 10.0));
    assert_eq!(out.report.avg_trip_time_min, (250.0 - 7.0) / 60.0);
}

#[test]
fn busy_vehicle_night_charges_when_it_frees_up() {
    // 4 km blocks at 8 km/h: 1800 s per block
    let net = line(&[4000.0, 4000.0]);
    let cfg = ScenarioConfig::slav(ScenarioKind::Nc, 1, 35.0, 8.0);
    let v = Vehicle::new(VehicleId(0), NodeId(1), 32.5);
    let sim = Simulation::with_fleet(cfg, net, station(3, 1, ChargeKind::Plug), vec![order(0, 6000.0, 2, 3)], vec![v]).unwrap();
    let mut sim = sim;
    while sim.now_s() < 9700.0 {
        sim.step().unwrap();
    }
    let moves: Vec<_> = sim
        .trace()
        .records
        .iter()
        .filter_map(|r| match r.event {
            TraceEvent::Vehicle { from, to, .. } => Some((from, to, r.t_s)),
            _ => None,
        })
        .collect();
    let to_charge = moves.iter().find(|m| m.1 == VehicleState::ToCharge).unwrap();
    assert_eq!(to_charge.2, 9600.0);
    let idle = moves.iter().find(|m| m.0 == VehicleState::ToDelivery).unwrap();
    assert!((idle.2 - 9600.0).abs() < 1e-6);
    let v = &sim.vehicles()[0];
    assert_eq!(v.state, VehicleState::Charging);
    assert!((v.charge_finish_at_s.unwrap() - (9600.0 + 16_200.0 * 0.3)).abs() < 1e-6);
}

#[test]
fn live_drop_after_forty_minutes() {
    let net = line(&[1000.0, 1000.0]);
    let mut cfg = ScenarioConfig::slav(ScenarioKind::Cc, 1, 35.0, 8.0);
    cfg.mode = RunMode::Live;
    // the only vehicle is charging for hours
    let v = Vehicle::new(VehicleId(0), NodeId(1), 1.0);
    let mut sim = Simulation::with_fleet(cfg, net, station(1, 1, ChargeKind::Plug), vec![order(0, 0.0, 2, 3)], vec![v]).unwrap();
    let mut kpi = KpiWindows::new(5.0, 1);
    let mut seen = 0;
    while sim.now_s() < 2400.0 {
        sim.step().unwrap();
        seen += kpi.ingest(&sim.trace().records[seen..], sim.tick_index());
        if sim.now_s() < 2400.0 {
            assert_eq!(kpi.unserved_counter(), 0);
        }
    }
    assert_eq!(kpi.unserved_counter(), 1);
    assert_eq!(order_times(sim.trace(), OrderId(0)), vec![(OrderState::Dropped, 2400.0)]);
    sim.record_control("speed".into());
    sim.step().unwrap();
    kpi.ingest(&sim.trace().records[seen..], sim.tick_index());
    assert_eq!(kpi.unserved_counter(), 0);
}

#[test]
fn speed_change_applies_next_tick() {
    let net = line(&[5000.0]);
    let cfg = ScenarioConfig::slav(ScenarioKind::Cc, 1, 35.0, 8.0);
    let v = Vehicle::new(VehicleId(0), NodeId(2), 35.0);
    let mut sim = Simulation::with_fleet(cfg, net, station(2, 1, ChargeKind::Plug), vec![order(0, 0.0, 1, 2)], vec![v]).unwrap();
    sim.step().unwrap();
    sim.step().unwrap();
    let before = sim.vehicles()[0].km_pickup;
    let mut spec = sim.config().spec;
    spec.speed_kmh = 14.0;
    sim.set_spec(spec).unwrap();
    sim.step().unwrap();
    let moved_m = (sim.vehicles()[0].km_pickup - before) * 1000.0;
    assert!((moved_m - 14_000.0 * 5.0 / 3600.0).abs() < 1e-9);
}

#[test]
fn fleet_shrinks_monotonically_to_target() {
    let net = Arc::new(desk::network());
    let mut cfg = ScenarioConfig::slav(ScenarioKind::Cc, 5, 50.0, 8.0);
    cfg.mode = RunMode::Live;
    let fleet: Vec<Vehicle> = (0..5).map(|i| Vehicle::new(VehicleId(i), desk::node_id(0, i), 50.0)).collect();
    let orders: Vec<Order> = (0..5).map(|i| order(i, 0.0, desk::node_id(1, i).0, desk::node_id(9, 9 - i).0)).collect();
    let mut sim = Simulation::with_fleet(cfg, net, desk::stations(ChargeKind::Plug), orders, fleet).unwrap();
    sim.step().unwrap();
    assert!(sim.vehicles().iter().all(|v| v.state == VehicleState::ToPickup));
    sim.set_fleet_size(2).unwrap();
    assert_eq!(sim.vehicles().len(), 5);
    let mut sizes = vec![];
    for _ in 0..2000 {
        sim.step().unwrap();
        sizes.push(sim.vehicles().len());
    }
    assert!(sizes.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(*sizes.last().unwrap(), 2);
    let kept: Vec<u32> = sim.vehicles().iter().map(|v| v.id.0).collect();
    assert_eq!(kept, vec![3, 4]);
    let removed: Vec<_> = sim
        .trace()
        .records
        .iter()
        .filter(|r| matches!(r.event, TraceEvent::VehicleRemoved { .. }))
        .collect();
    assert_eq!(removed.len(), 3);
    // every removed vehicle delivered its order first
    assert!(sim.orders().iter().filter(|o| o.id.0 < 3).all(|o| o.state == OrderState::Delivered));

    sim.set_fleet_size(4).unwrap();
    sim.step().unwrap();
    assert_eq!(sim.vehicles().len(), 4);
    assert_eq!(sim.vehicles().iter().map(|v| v.id.0).collect::<Vec<_>>(), vec![3, 4, 5, 6]);
}

#[test]
fn growing_while_shrinking_cancels_removals() {
    let net = Arc::new(desk::network());
    let mut cfg = ScenarioConfig::slav(ScenarioKind::Cc, 3, 50.0, 8.0);
    cfg.mode = RunMode::Live;
    let fleet: Vec<Vehicle> = (0..3).map(|i| Vehicle::new(VehicleId(i), desk::node_id(0, i), 50.0)).collect();
    let orders: Vec<Order> = (0..3).map(|i| order(i, 0.0, desk::node_id(1, i).0, desk::node_id(9, 9 - i).0)).collect();
    let mut sim = Simulation::with_fleet(cfg, net, desk::stations(ChargeKind::Plug), orders, fleet).unwrap();
    sim.step().unwrap();
    sim.set_fleet_size(1).unwrap();
    sim.set_fleet_size(3).unwrap();
    for _ in 0..2000 {
        sim.step().unwrap();
    }
    assert_eq!(sim.vehicles().len(), 3);
    assert!(!sim.trace().records.iter().any(|r| matches!(r.event, TraceEvent::VehicleRemoved { .. })));
}

#[test]
fn halving_the_tick_barely_moves_waits() {
    let net = Arc::new(desk::network());
    let wait = |tick_s: f64| {
        let mut cfg = ScenarioConfig::slav(ScenarioKind::Cc, 30, 50.0, 11.0).with_seed(3);
        cfg.tick_s = tick_s;
        let sim = Simulation::new(cfg, net.clone(), desk::stations(ChargeKind::Plug), desk::orders()).unwrap();
        sim.run_batch().unwrap().report.avg_trip_time_min
    };
    let (a, b) = (wait(5.0), wait(2.5));
    assert!(((a - b) / a).abs() < 0.01, "{a} vs {b}");
}

#[test]
fn same_seed_same_trace() {
    let net = Arc::new(desk::network());
    let run = || {
        let cfg = ScenarioConfig::slav(ScenarioKind::Sd, 15, 35.0, 11.0).with_seed(42);
        Simulation::new(cfg, net.clone(), desk::stations(ChargeKind::Plug), desk::orders()).unwrap().run_batch().unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.report, b.report);
}

#[test]
fn stalls_are_reported() {
    // the only station is unreachable on the remaining battery of a vehicle
    // that is out of charge and has nowhere to go
    let net = line(&[1000.0, 1000.0]);
    let mut cfg = ScenarioConfig::slav(ScenarioKind::Cc, 1, 35.0, 8.0);
    cfg.stall_after_s = 600.0;
    let v = Vehicle::new(VehicleId(0), NodeId(1), 9.0);
    // trip of 2 km then 2 km back to the station: feasible; make it infeasible with a far destination
    let net2 = line(&[1000.0, 30_000.0]);
    let sim = Simulation::with_fleet(cfg, net2, station(1, 1, ChargeKind::Plug), vec![order(0, 0.0, 2, 3)], vec![v]).unwrap();
    let err = sim.run_batch().unwrap_err();
    assert!(matches!(err, EngineError::Stalled { waiting: 1, .. }), "{err:?}");
    drop(net);
}

#[test]
fn config_validation() {
    let net = line(&[1000.0]);
    let mk = |cfg: ScenarioConfig, st: Vec<Station>| Simulation::new(cfg, net.clone(), st, vec![]).err();
    let plug = station(1, 1, ChargeKind::Plug);
    assert!(matches!(mk(ScenarioConfig::new(ScenarioKind::Cc, 0), plug.clone()), Some(EngineError::InvalidConfig(_))));
    assert!(matches!(mk(ScenarioConfig::new(ScenarioKind::Fc, 1), plug.clone()), Some(EngineError::StationKind { .. })));
    let mut bad = ScenarioConfig::new(ScenarioKind::Cc, 1);
    bad.spec = VehicleSpec::ice();
    assert!(matches!(mk(bad, plug.clone()), Some(EngineError::InvalidConfig(_))));
    assert!(mk(ScenarioConfig::new(ScenarioKind::Cc, 1), vec![]).is_some());
    let mut zero_tick = ScenarioConfig::new(ScenarioKind::Cc, 1);
    zero_tick.tick_s = 0.0;
    assert!(mk(zero_tick, plug).is_some());
}

fn check_run(scenario: ScenarioKind, n: usize, range: f64, speed: f64, seed: u64) -> Result<(), TestCaseError> {
    let net = Arc::new(desk::network());
    let cfg = ScenarioConfig::slav(scenario, n, range, speed).with_seed(seed);
    let kind = scenario.strategy().station_kind();
    let mut sim = Simulation::new(cfg, net, desk::stations(kind), desk::orders()).unwrap();
    let mut tracked: std::collections::BTreeMap<VehicleId, VehicleState> =
        sim.vehicles().iter().map(|v| (v.id, VehicleState::Idle)).collect();
    let mut seen = 0;
    loop {
        sim.step().unwrap();
        for v in sim.vehicles() {
            prop_assert!(v.battery_km >= 0.0 && v.battery_km <= range, "battery {} of {:?}", v.battery_km, v.id);
            prop_assert_eq!(v.assigned_order.is_some(), matches!(v.state, VehicleState::ToPickup | VehicleState::ToDelivery));
        }
        prop_assert_eq!(sim.state_counts().iter().sum::<u32>() as usize, n);
        for r in &sim.trace().records[seen..] {
            if let TraceEvent::Vehicle { vehicle, from, to, km } = r.event {
                prop_assert!(can_transition(from, to), "{from:?} -> {to:?}");
                prop_assert_eq!(tracked.insert(vehicle, to), Some(from));
                prop_assert!(km >= 0.0);
            }
        }
        seen = sim.trace().records.len();
        if sim.all_delivered() {
            break;
        }
    }
    let out = sim.finish(false);
    let r = &out.report;
    prop_assert_eq!(r.delivered_count, desk::ORDER_COUNT);
    prop_assert_eq!(r.demand_count, r.delivered_count + r.unserved_count);
    prop_assert!((r.pct_km_pickup + r.pct_km_delivery + r.pct_km_recharge - 100.0).abs() <= 0.1);
    prop_assert!((r.avg_km_per_vehicle * r.num_vehicles as f64 - r.total_km).abs() <= 1e-3 * r.total_km);
    let odometer: f64 = out.vehicles.iter().map(|v| v.total_km()).sum();
    prop_assert!((odometer - r.total_km).abs() < 1e-6);
    for o in sim_orders_ok(&out) {
        prop_assert!(o);
    }
    Ok(())
}

fn sim_orders_ok(out: &RunOutput) -> Vec<bool> {
    let mut times: std::collections::BTreeMap<OrderId, Vec<f64>> = Default::default();
    for r in &out.trace.records {
        match r.event {
            TraceEvent::OrderPlaced { order } => times.entry(order).or_default().push(r.t_s),
            TraceEvent::Order { order, .. } => times.entry(order).or_default().push(r.t_s),
            _ => {}
        }
    }
    times.values().map(|t| t.len() == 4 && t.windows(2).all(|w| w[0] <= w[1])).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn desk_runs_keep_invariants(
        s in prop::sample::select(vec![ScenarioKind::Cc, ScenarioKind::Nc, ScenarioKind::Sd, ScenarioKind::Fc]),
        n in 8usize..40,
        range in prop::sample::select(vec![35.0, 50.0, 65.0]),
        speed in prop::sample::select(vec![8.0, 11.0, 14.0]),
        seed in 0u64..1000,
    ) {
        check_run(s, n, range, speed, seed)?;
    }
}
