use std::sync::Arc;

use fleetsim::config::Inputs;
use fleetsim::sweep::{self, SweepError};
use fleetsim_core::impact::EmissionModel;
use fleetsim_core::*;

fn desk() -> Inputs {
    Inputs::desk()
}

#[test]
fn one_vehicle_suffices_returns_the_lower_bound() {
    let mut inputs = desk();
    inputs.orders = vec![Order::new(OrderId(0), 600.0, desk::node_id(2, 3), desk::node_id(5, 5))];
    let cfg = ScenarioConfig::new(ScenarioKind::Cc, 1).with_seed(4);
    let found = sweep::find_min_fleet(&cfg, &inputs, 1, 50, 10).unwrap();
    assert_eq!(found.fleet_size, 1);
    assert_eq!(found.tried, vec![(1, 100.0)]);
}

#[test]
fn impossible_demand_is_not_found() {
    let nodes = vec![Node { id: NodeId(1), x_m: 0.0, y_m: 0.0 }, Node { id: NodeId(2), x_m: 100_000.0, y_m: 0.0 }];
    let edges = vec![Edge { id: 1, from: NodeId(1), to: NodeId(2), length_m: 100_000.0, bidirectional: true }];
    let inputs = Inputs {
        network: Arc::new(RoadNetwork::new(nodes, edges).unwrap()),
        stations: vec![Station::new(StationId(1), NodeId(1), 2, ChargeKind::Plug)],
        orders: (0..5).map(|i| Order::new(OrderId(i), 0.0, NodeId(1), NodeId(2))).collect(),
    };
    let cfg = ScenarioConfig::slav(ScenarioKind::Cc, 1, 35.0, 8.0);
    match sweep::find_min_fleet(&cfg, &inputs, 1, 5, 2) {
        Err(SweepError::NotFound { max: 5, best_pct, .. }) => assert!(best_pct < 95.0),
        other => panic!("expected NotFound, got {other:?}"),
    }
}

#[test]
fn bad_range_is_rejected() {
    let cfg = ScenarioConfig::new(ScenarioKind::Cc, 1);
    assert!(matches!(sweep::find_min_fleet(&cfg, &desk(), 10, 5, 1), Err(SweepError::InvalidRange { .. })));
    assert!(matches!(sweep::find_min_fleet(&cfg, &desk(), 1, 5, 0), Err(SweepError::InvalidRange { .. })));
}

/// The result meets the criterion and one step below does not, checked with
/// full runs that serve every order.
#[test]
fn min_fleet_is_confirmed_by_re_execution() {
    let inputs = desk();
    for (kind, step) in [(ScenarioKind::Fc, 2), (ScenarioKind::Cc, 3)] {
        let base = ScenarioConfig::slav(kind, 1, 50.0, 11.0).with_seed(2);
        let found = sweep::find_min_fleet(&base, &inputs, 4, 60, step).unwrap();
        let f = found.fleet_size;
        assert!(f > 4, "{kind:?} met the level at the lower bound");
        let full = |n: usize| {
            let mut c = base.clone();
            c.fleet_size = n;
            sweep::run(&c, &inputs).unwrap().report
        };
        assert!(service_level_met(&full(f)), "{kind:?} at {f}");
        assert!(!service_level_met(&full(f - step)), "{kind:?} at {}", f - step);
        assert_eq!(found.tried.last().unwrap().0, f);
        assert_eq!(found.tried.len(), (f - 4) / step + 1);
    }
}

#[test]
fn grid_rows_come_back_in_input_order_and_repeat_exactly() {
    let inputs = desk();
    let (us, ren) = (EmissionModel::us_average(), EmissionModel::renewable());
    let configs = sweep::study_grid(ScenarioKind::Cc, 30, &sweep::STUDY_BATTERIES_KM, &sweep::STUDY_SPEEDS_KMH, 1);
    assert_eq!(configs.len(), 9);
    let a = sweep::run_grid(&configs, &inputs, &us, &ren, Some(1)).unwrap();
    let b = sweep::run_grid(&configs, &inputs, &us, &ren, Some(4)).unwrap();
    assert_eq!(a, b);
    for (row, cfg) in a.iter().zip(&configs) {
        assert_eq!(&row.config, cfg);
        let (rep, _) = row.result.as_ref().unwrap();
        assert_eq!(*rep, sweep::run(cfg, &inputs).unwrap().report);
    }
    let csv = sweep::grid_csv(&a).unwrap();
    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    let header = rdr.headers().unwrap().clone();
    assert_eq!(header.len(), 5 + 12 + 3 + 1);
    assert_eq!(&header[header.len() - 1], "error");
    let rows: Vec<_> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 9);
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r[2].parse().unwrap(), r[3].parse().unwrap())).collect();
    let expected: Vec<(f64, f64)> =
        sweep::STUDY_BATTERIES_KM.iter().flat_map(|&b| sweep::STUDY_SPEEDS_KMH.iter().map(move |&s| (b, s))).collect();
    assert_eq!(pairs, expected);
}

#[test]
fn failing_row_fills_only_its_error_column() {
    let inputs = desk();
    let good = ScenarioConfig::new(ScenarioKind::Fc, 20);
    let mut bad = good.clone();
    bad.spec.speed_kmh = -1.0;
    let rows =
        sweep::run_grid(&[good.clone(), bad, good], &inputs, &EmissionModel::us_average(), &EmissionModel::renewable(), None)
            .unwrap();
    assert!(rows[0].result.is_ok() && rows[2].result.is_ok());
    assert!(rows[1].result.is_err());
    assert_eq!(rows[0], rows[2]);
    let csv = sweep::grid_csv(&rows).unwrap();
    let recs: Vec<_> = csv::Reader::from_reader(csv.as_bytes()).records().map(Result::unwrap).collect();
    assert!(recs[0].iter().next_back().unwrap().is_empty());
    assert!(!recs[1].iter().next_back().unwrap().is_empty());
    assert!(recs[1].iter().skip(5).take(15).all(str::is_empty));
}

#[test]
fn impact_columns_follow_the_reduction_formula() {
    let inputs = desk();
    let (us, ren) = (EmissionModel::us_average(), EmissionModel::renewable());
    for kind in [ScenarioKind::Cc, ScenarioKind::Fc, ScenarioKind::Ice] {
        let cfg = ScenarioConfig::new(kind, 25).with_seed(7);
        let rep = sweep::run(&cfg, &inputs).unwrap().report;
        let cols = sweep::impact_columns(&cfg, &rep, &us, &ren).unwrap();
        let km = rep.total_km;
        let (g_us, g_ren) = if kind == ScenarioKind::Ice {
            (161.97, 161.97)
        } else {
            let batteries = if kind == ScenarioKind::Fc { 2.0 } else { 1.0 };
            let g = |m: &EmissionModel| {
                (25.0 * (m.per_vehicle_day_g + batteries * m.per_battery_km_day_g * cfg.spec.range_km) + m.per_km_g * km) / km
            };
            (g(&us), g(&ren))
        };
        assert!((cols.gco2_per_km - g_us).abs() < 1e-9);
        assert!((cols.red_vs_ice_pct - 100.0 * (1.0 - g_us * km / (161.97 * 10_090.0))).abs() < 1e-9);
        assert!((cols.red_vs_bev_renewable_pct - 100.0 * (1.0 - g_ren * km / (53.85 * 8_682.0))).abs() < 1e-9);
    }
}

#[test]
fn strategy_deltas_match_recomputed_fleet_changes() {
    let inputs = desk();
    let mut fleets = Vec::new();
    for kind in [ScenarioKind::Cc, ScenarioKind::Nc, ScenarioKind::Sd, ScenarioKind::Fc] {
        let base = ScenarioConfig::slav(kind, 1, 35.0, 11.0).with_seed(1);
        fleets.push((kind, sweep::find_min_fleet(&base, &inputs, 2, 80, 2).unwrap().fleet_size));
    }
    let deltas = sweep::deltas_vs_cc(&fleets);
    let cc = fleets[0].1 as f64;
    assert_eq!(deltas[0], Some(0.0));
    for (d, &(_, f)) in deltas.iter().zip(&fleets) {
        assert!((d.unwrap() - (f as f64 / cc - 1.0) * 100.0).abs() < 1e-9);
    }
    assert!(sweep::deltas_vs_cc(&[(ScenarioKind::Fc, 10)]).iter().all(Option::is_none));
}
