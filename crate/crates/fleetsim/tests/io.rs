use std::sync::Arc;

use fleetsim::config::{self, ScenarioFile};
use fleetsim::io;
use fleetsim::sweep;
use fleetsim_core::*;
use proptest::prelude::*;

#[test]
fn stations_round_trip_and_take_kind_from_scenario() {
    let stations = desk::stations(ChargeKind::Plug);
    let text = io::write_stations(&stations).unwrap();
    assert!(text.starts_with("station_id,node,capacity\n"));
    let back = io::parse_stations(&text, ChargeKind::Swap).unwrap();
    assert_eq!(back.len(), stations.len());
    for (a, b) in back.iter().zip(&stations) {
        assert_eq!((a.id, a.node, a.capacity), (b.id, b.node, b.capacity));
        assert_eq!(a.kind, ChargeKind::Swap);
    }
}

#[test]
fn report_csv_has_one_header_and_one_row() {
    let out = sweep::run(&ScenarioConfig::new(ScenarioKind::Fc, 15).with_seed(3), &config::Inputs::desk()).unwrap();
    let text = io::report_csv(&out.report);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0].split(',').count(), 12);
    let values: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(values, out.report.scalar_values());
    let json: MetricsReport = serde_json::from_str(&io::report_json(&out.report).unwrap()).unwrap();
    assert_eq!(json, out.report);
}

#[test]
fn trace_csv_lists_every_non_odometer_record() {
    let out = sweep::run(&ScenarioConfig::new(ScenarioKind::Cc, 20).with_seed(1), &config::Inputs::desk()).unwrap();
    let mut buf = Vec::new();
    io::write_trace(&out.trace, &mut buf).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(rdr.headers().unwrap(), vec!["t_s", "entity", "from", "to"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let expected = out.trace.records.iter().filter(|r| !matches!(r.event, TraceEvent::Odometer { .. })).count();
    assert_eq!(rows.len(), expected);
    let delivered = rows.iter().filter(|r| r[1].starts_with("order:") && &r[3] == "Delivered").count();
    assert_eq!(delivered, 500);
    let mut last = f64::NEG_INFINITY;
    for r in &rows {
        let t: f64 = r[0].parse().unwrap();
        assert!(t >= last - out.trace.tick_s);
        last = last.max(t);
    }
}

#[test]
fn exported_desk_files_reload_to_the_same_run() {
    let dir = tempfile::tempdir().unwrap();
    config::export_desk(dir.path()).unwrap();
    let loaded = config::load(&dir.path().join("scenario.toml")).unwrap();
    assert_eq!(loaded.config.scenario, ScenarioKind::Cc);
    assert_eq!((loaded.config.fleet_size, loaded.config.seed), (20, 1));
    let desk = config::Inputs::desk();
    assert_eq!(loaded.inputs.orders, desk.orders);
    assert_eq!(loaded.inputs.network.nodes(), desk.network.nodes());
    let a = sweep::run(&loaded.config, &loaded.inputs).unwrap();
    let b = sweep::run(&loaded.config, &desk).unwrap();
    assert_eq!(a.trace, b.trace);
}

#[test]
fn profile_based_scenario_generates_orders() {
    let dir = tempfile::tempdir().unwrap();
    config::export_desk(dir.path()).unwrap();
    let path = dir.path().join("gen.toml");
    std::fs::write(&path, "scenario = \"FC\"\nprofile = \"profile.txt\"\norder_count = 120\ndemand_seed = 5\n").unwrap();
    let loaded = config::load(&path).unwrap();
    let mut p = desk::profile();
    p.total_orders = 120;
    assert_eq!(loaded.inputs.orders, demand::generate_synthetic(&p, 5).unwrap());
    assert_eq!(loaded.config.spec.charge_kind, ChargeKind::Swap);
}

#[test]
fn scenario_file_fields_map_onto_the_config() {
    let f = ScenarioFile::parse(
        "scenario = \"sd\"\nfleet_size = 42\nbattery_km = 65\nspeed_kmh = 14\nseed = 9\ntick_s = 2.5\n\
         mode = \"live\"\ncandidate_count = 3\nbattery_exponent = 0.5\nnight_trigger_frac = 0.8\n",
    )
    .unwrap();
    let c = f.to_config().unwrap();
    assert_eq!(c.scenario, ScenarioKind::Sd);
    assert_eq!((c.fleet_size, c.seed, c.tick_s), (42, 9, 2.5));
    assert_eq!((c.spec.range_km, c.spec.speed_kmh), (65.0, 14.0));
    assert_eq!(c.mode, RunMode::Live);
    assert_eq!((c.dispatch.kind, c.dispatch.candidate_count, c.dispatch.battery_exponent), (DispatchKind::Strategic, 3, 0.5));
    assert_eq!(c.strategy.night_trigger_frac, 0.8);

    assert!(ScenarioFile::parse("fleet = 3\n").is_err());
    assert!(ScenarioFile::parse("scenario = \"XX\"\n").unwrap().to_config().is_err());
    assert!(ScenarioFile::parse("fleet_size = 0\n").unwrap().to_config().is_err());
}

#[test]
fn missing_input_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    std::fs::write(&path, "network = \"nope.txt\"\n").unwrap();
    let err = config::load(&path).unwrap_err().to_string();
    assert!(err.contains("nope.txt"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn orders_csv_round_trips(rows in prop::collection::vec((0.0f64..86_400.0, 1u32..=100, 1u32..=100), 1..60)) {
        let net = Arc::new(desk::network());
        let raw: Vec<demand::OrderRow> = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.1 != r.2)
            .map(|(i, &(t, a, b))| demand::OrderRow { order_id: i as u32, placed_at_s: t, restaurant: NodeId(a), destination: NodeId(b) })
            .collect();
        let orders = demand::ingest_orders(&raw, &net).unwrap();
        let text = io::write_orders(&orders).unwrap();
        prop_assert_eq!(io::parse_orders(&text, &net).unwrap(), orders);
    }

    #[test]
    fn network_text_round_trips(n in 2usize..12, extra in prop::collection::vec((0usize..12, 0usize..12, 1.0f64..500.0, any::<bool>()), 0..10)) {
        let nodes: Vec<Node> = (0..n).map(|i| Node { id: NodeId(i as u32 + 1), x_m: i as f64 * 10.0, y_m: (i % 3) as f64 }).collect();
        let mut edges: Vec<Edge> = (1..n)
            .map(|i| Edge { id: i as u32, from: NodeId(i as u32), to: NodeId(i as u32 + 1), length_m: 10.0, bidirectional: true })
            .collect();
        for (k, &(a, b, len, bi)) in extra.iter().enumerate() {
            let (a, b) = (a % n, b % n);
            if a != b {
                edges.push(Edge { id: 1000 + k as u32, from: NodeId(a as u32 + 1), to: NodeId(b as u32 + 1), length_m: len, bidirectional: bi });
            }
        }
        let net = RoadNetwork::new(nodes, edges).unwrap();
        let back = io::parse_network(&io::write_network(&net)).unwrap();
        prop_assert_eq!(back.nodes(), net.nodes());
        prop_assert_eq!(back.edges(), net.edges());
    }
}
