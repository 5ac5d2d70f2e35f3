//! Batch experiments: minimum fleet search and scenario grids.

use fleetsim_core::engine::BatchOptions;
use fleetsim_core::impact::{self, Baseline, EmissionModel};
use fleetsim_core::{service_level_met, EngineError, MetricsReport, RunOutput, ScenarioConfig, ScenarioKind, Simulation};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::Inputs;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid fleet range {min}..={max} step {step}")]
    InvalidRange { min: usize, max: usize, step: usize },
    #[error("no fleet up to {max} met the service level; best was {best_pct:.2} % on time with {best_fleet} vehicles")]
    NotFound { max: usize, best_fleet: usize, best_pct: f64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Runs one batch simulation with the stations set up for the scenario.
pub fn run(config: &ScenarioConfig, inputs: &Inputs) -> Result<RunOutput, EngineError> {
    run_with(config, inputs, BatchOptions::default())
}

pub fn run_with(config: &ScenarioConfig, inputs: &Inputs, opts: BatchOptions) -> Result<RunOutput, EngineError> {
    let sim =
        Simulation::new(config.clone(), inputs.network.clone(), inputs.stations_for(config.scenario), inputs.orders.clone())?;
    sim.run_batch_with(opts)
}

/// Whether `fleet` vehicles meet the service level. Runs that stall or hit
/// the horizon count as failures; the second value is the on-time share.
pub fn meets_service_level(base: &ScenarioConfig, inputs: &Inputs, fleet: usize) -> Result<(bool, f64), EngineError> {
    let mut cfg = base.clone();
    cfg.fleet_size = fleet;
    match run_with(&cfg, inputs, BatchOptions { stop_when_failed: true }) {
        Ok(out) => Ok((!out.aborted && service_level_met(&out.report), out.report.pct_under_40min)),
        Err(EngineError::Stalled { .. } | EngineError::Horizon { .. }) => Ok((false, 0.0)),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinFleet {
    pub fleet_size: usize,
    /// `(fleet, on-time %)` for every size tried, ascending.
    pub tried: Vec<(usize, f64)>,
}

/// Smallest fleet on `min, min+step, ...` up to `max` that meets the
/// service level, scanning upward and stopping at the first success.
pub fn find_min_fleet(base: &ScenarioConfig, inputs: &Inputs, min: usize, max: usize, step: usize) -> Result<MinFleet, SweepError> {
    if min == 0 || min > max || step == 0 {
        return Err(SweepError::InvalidRange { min, max, step });
    }
    let mut tried = Vec::new();
    for fleet in (min..=max).step_by(step) {
        let (ok, pct) = meets_service_level(base, inputs, fleet)?;
        tried.push((fleet, pct));
        tracing::debug!(scenario = base.scenario.label(), fleet, pct, ok, "min-fleet probe");
        if ok {
            return Ok(MinFleet { fleet_size: fleet, tried });
        }
    }
    let (best_fleet, best_pct) = tried.iter().copied().fold((min, f64::NEG_INFINITY), |b, t| if t.1 > b.1 { t } else { b });
    Err(SweepError::NotFound { max, best_fleet, best_pct })
}

/// Emission columns of a result row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpactColumns {
    pub gco2_per_km: f64,
    pub red_vs_ice_pct: f64,
    pub red_vs_bev_renewable_pct: f64,
}

/// Car rows use the baseline intensities; lightweight fleets use the
/// models, the US mix against combustion cars and renewables against
/// renewable-charged cars.
pub fn impact_columns(
    config: &ScenarioConfig,
    report: &MetricsReport,
    us: &EmissionModel,
    renewable: &EmissionModel,
) -> Result<ImpactColumns, impact::ImpactError> {
    let km = report.total_km;
    let (us_g, ren_g) = match config.scenario {
        ScenarioKind::Ice => (Baseline::ICE.gco2_per_km, Baseline::ICE.gco2_per_km),
        ScenarioKind::Bev => (Baseline::BEV_US.gco2_per_km, Baseline::BEV_RENEWABLE.gco2_per_km),
        _ => {
            let g = |m| impact::gco2_per_km(m, report.num_vehicles, config.spec.range_km, config.spec.charge_kind, km);
            (g(us)?, g(renewable)?)
        }
    };
    Ok(ImpactColumns {
        gco2_per_km: us_g,
        red_vs_ice_pct: impact::reduction_vs(us_g, km, &Baseline::ICE)?,
        red_vs_bev_renewable_pct: impact::reduction_vs(ren_g, km, &Baseline::BEV_RENEWABLE)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub config: ScenarioConfig,
    pub result: Result<(MetricsReport, Option<ImpactColumns>), String>,
}

/// Runs every config on `threads` workers (all cores when `None`). Rows come
/// back in input order; a failed run fills only its own row's error.
pub fn run_grid(
    configs: &[ScenarioConfig],
    inputs: &Inputs,
    us: &EmissionModel,
    renewable: &EmissionModel,
    threads: Option<usize>,
) -> Result<Vec<GridRow>, SweepError> {
    let one = |c: &ScenarioConfig| GridRow {
        config: c.clone(),
        result: run(c, inputs).map_err(|e| e.to_string()).map(|out| {
            let imp = impact_columns(c, &out.report, us, renewable).ok();
            (out.report, imp)
        }),
    };
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| SweepError::Pool(e.to_string()))?;
    Ok(pool.install(|| configs.par_iter().map(one).collect()))
}

pub const GRID_KEY_COLUMNS: [&str; 5] = ["scenario", "fleet_size", "battery_km", "speed_kmh", "seed"];
pub const GRID_IMPACT_COLUMNS: [&str; 3] = ["gco2_per_km", "red_vs_ice_pct", "red_vs_bev_renewable_pct"];

pub fn grid_csv(rows: &[GridRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = GRID_KEY_COLUMNS.to_vec();
    header.extend(MetricsReport::CSV_COLUMNS);
    header.extend(GRID_IMPACT_COLUMNS);
    header.push("error");
    w.write_record(&header)?;
    for r in rows {
        let c = &r.config;
        let mut rec = vec![
            c.scenario.label().to_string(),
            c.fleet_size.to_string(),
            c.spec.range_km.to_string(),
            c.spec.speed_kmh.to_string(),
            c.seed.to_string(),
        ];
        match &r.result {
            Ok((rep, imp)) => {
                rec.extend(rep.scalar_values().iter().map(|v| v.to_string()));
                match imp {
                    Some(i) => rec.extend([i.gco2_per_km, i.red_vs_ice_pct, i.red_vs_bev_renewable_pct].map(|v| v.to_string())),
                    None => rec.extend(["", "", ""].map(String::from)),
                }
                rec.push(String::new());
            }
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), MetricsReport::CSV_COLUMNS.len() + 3));
                rec.push(e.clone());
            }
        }
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8"))
}

/// Percent change of each fleet size relative to the CC entry, as in a
/// strategy comparison table. `None` when there is no CC entry.
pub fn deltas_vs_cc(fleets: &[(ScenarioKind, usize)]) -> Vec<Option<f64>> {
    let cc = fleets.iter().find(|(k, _)| *k == ScenarioKind::Cc).map(|&(_, f)| f as f64);
    fleets.iter().map(|&(_, f)| cc.map(|cc| 100.0 * (f as f64 - cc) / cc)).collect()
}

/// The battery × speed study grid for one strategy.
pub fn study_grid(scenario: ScenarioKind, fleet: usize, batteries: &[f64], speeds: &[f64], seed: u64) -> Vec<ScenarioConfig> {
    batteries
        .iter()
        .flat_map(|&b| speeds.iter().map(move |&s| ScenarioConfig::slav(scenario, fleet, b, s).with_seed(seed)))
        .collect()
}

pub const STUDY_BATTERIES_KM: [f64; 3] = [35.0, 50.0, 65.0];
pub const STUDY_SPEEDS_KMH: [f64; 3] = [8.0, 11.0, 14.0];
