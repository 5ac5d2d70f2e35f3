//! Emission arithmetic against the published per-scenario results bundled in
//! `data/reference_lca_rows.csv`.

use fleetsim_core::impact::{self, Baseline, EmissionModel};
use fleetsim_core::ChargeKind;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
struct Row {
    strategy: String,
    fleet_size: usize,
    battery_km: f64,
    speed_kmh: f64,
    #[allow(dead_code)]
    avg_km_per_vehicle: f64,
    total_km: f64,
    us_gco2_per_km: f64,
    us_red_vs_ice_pct: f64,
    renewable_gco2_per_km: f64,
    renewable_red_vs_bev_pct: f64,
}

fn rows() -> Vec<Row> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/reference_lca_rows.csv");
    csv::Reader::from_path(path).unwrap().deserialize().map(Result::unwrap).collect()
}

fn kind(r: &Row) -> ChargeKind {
    if r.strategy == "FC" {
        ChargeKind::Swap
    } else {
        ChargeKind::Plug
    }
}

#[test]
fn table_covers_four_strategies_on_the_study_grid() {
    let rows = rows();
    assert_eq!(rows.len(), 36);
    for s in ["CC", "NC", "SD", "FC"] {
        let mut cells: Vec<(f64, f64)> = rows.iter().filter(|r| r.strategy == s).map(|r| (r.battery_km, r.speed_kmh)).collect();
        cells.dedup();
        assert_eq!(cells.len(), 9, "{s}");
    }
}

#[test]
fn recomputed_reductions_match_published_columns() {
    let rows = rows();
    let mut ice_hits = 0;
    let mut misses = Vec::new();
    for r in &rows {
        let red = impact::reduction_vs(r.us_gco2_per_km, r.total_km, &Baseline::ICE).unwrap();
        if (red - r.us_red_vs_ice_pct).abs() <= 0.05 {
            ice_hits += 1;
        } else {
            misses.push((r.strategy.clone(), r.battery_km, r.speed_kmh, red, r.us_red_vs_ice_pct));
        }
    }
    println!("vs ICE: {ice_hits}/36 within 0.05 pp; misses {misses:?}");
    assert!(ice_hits >= 30);
    let ren_hits = rows
        .iter()
        .filter(|r| {
            let red = impact::reduction_vs(r.renewable_gco2_per_km, r.total_km, &Baseline::BEV_RENEWABLE).unwrap();
            (red - r.renewable_red_vs_bev_pct).abs() <= 0.05
        })
        .count();
    println!("vs renewable BEV: {ren_hits}/36");
    assert!(ren_hits >= 30);
}

/// Least-squares fit of `g = A * fleet / km + p` on the 35 km conventional
/// rows, used to predict the 50 km rows.
#[test]
fn two_parameter_fit_predicts_the_next_battery_within_fifteen_percent() {
    let rows = rows();
    let fit: Vec<&Row> = rows.iter().filter(|r| r.strategy == "CC" && r.battery_km == 35.0).collect();
    assert_eq!(fit.len(), 3);
    let xs: Vec<f64> = fit.iter().map(|r| r.fleet_size as f64 / r.total_km).collect();
    let ys: Vec<f64> = fit.iter().map(|r| r.us_gco2_per_km).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let a = sxy / sxx;
    let p = my - a * mx;
    assert!(a > 0.0 && p >= 0.0, "A={a} p={p}");
    let model = EmissionModel { per_vehicle_day_g: a, per_battery_km_day_g: 0.0, per_km_g: p, ..EmissionModel::us_average() };
    for r in rows.iter().filter(|r| r.strategy == "CC" && r.battery_km == 50.0) {
        let g = impact::gco2_per_km(&model, r.fleet_size, r.battery_km, ChargeKind::Plug, r.total_km).unwrap();
        let err = g / r.us_gco2_per_km - 1.0;
        assert!(err.abs() <= 0.15, "{r:?}: predicted {g}");
    }
}

#[test]
fn bundled_coefficients_track_every_published_intensity() {
    for r in rows() {
        for (model, published) in
            [(EmissionModel::us_average(), r.us_gco2_per_km), (EmissionModel::renewable(), r.renewable_gco2_per_km)]
        {
            let g = impact::gco2_per_km(&model, r.fleet_size, r.battery_km, kind(&r), r.total_km).unwrap();
            assert!((g / published - 1.0).abs() < 0.01, "{r:?}: {g} vs {published}");
        }
    }
}

#[test]
fn intensity_falls_with_distance_when_fixed_costs_exist() {
    let m = EmissionModel::us_average();
    let mut last = f64::INFINITY;
    for km in [100.0, 500.0, 1000.0, 5000.0] {
        let g = impact::gco2_per_km(&m, 50, 35.0, ChargeKind::Plug, km).unwrap();
        assert!(g < last);
        last = g;
    }
    let flat = EmissionModel { per_vehicle_day_g: 0.0, per_battery_km_day_g: 0.0, ..m };
    let a = impact::gco2_per_km(&flat, 50, 35.0, ChargeKind::Swap, 10.0).unwrap();
    let b = impact::gco2_per_km(&flat, 50, 35.0, ChargeKind::Swap, 9_999.0).unwrap();
    assert!((a - b).abs() < 1e-12 * a, "{a} vs {b}");
}
