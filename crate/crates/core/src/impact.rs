//! Life-cycle CO₂ intensity of a fleet and reductions against car baselines.
//!
//! Daily emissions are a fixed share per vehicle, a share proportional to
//! installed battery capacity (doubled when batteries are swapped, since each
//! vehicle needs a spare), and a per-kilometre term for energy use. The
//! coefficients are illustrative defaults fitted to published fleet results;
//! load calibrated values for anything quantitative.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fleet::ChargeKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridMix {
    UsAverage,
    Renewable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionModel {
    pub grid: GridMix,
    /// Vehicle body and use-phase overheads, g CO₂ per vehicle per day.
    pub per_vehicle_day_g: f64,
    /// Battery manufacture, g CO₂ per km of range per vehicle per day.
    pub per_battery_km_day_g: f64,
    /// Electricity, g CO₂ per km driven.
    pub per_km_g: f64,
}

impl EmissionModel {
    pub fn us_average() -> Self {
        Self { grid: GridMix::UsAverage, per_vehicle_day_g: 638.275, per_battery_km_day_g: 1.35292, per_km_g: 13.2906 }
    }

    pub fn renewable() -> Self {
        Self { grid: GridMix::Renewable, per_vehicle_day_g: 638.487, per_battery_km_day_g: 1.35261, per_km_g: 4.40100 }
    }

    pub fn for_grid(grid: GridMix) -> Self {
        match grid {
            GridMix::UsAverage => Self::us_average(),
            GridMix::Renewable => Self::renewable(),
        }
    }
}

/// A car fleet to compare against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub gco2_per_km: f64,
    pub fleet_km: f64,
}

impl Baseline {
    pub const ICE: Baseline = Baseline { gco2_per_km: 161.97, fleet_km: 10_090.0 };
    pub const BEV_US: Baseline = Baseline { gco2_per_km: 107.53, fleet_km: 8_682.0 };
    pub const BEV_RENEWABLE: Baseline = Baseline { gco2_per_km: 53.85, fleet_km: 8_682.0 };

    pub fn daily_g(&self) -> f64 {
        self.gco2_per_km * self.fleet_km
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ImpactError {
    #[error("fleet drove no distance")]
    ZeroDistance,
    #[error("inputs must be positive and finite")]
    NonPositiveInput,
}

/// Batteries held per vehicle.
pub fn battery_multiplier(kind: ChargeKind) -> f64 {
    match kind {
        ChargeKind::Plug => 1.0,
        ChargeKind::Swap => 2.0,
    }
}

/// Fleet-level intensity in g CO₂ per km for one day of operation.
pub fn gco2_per_km(
    model: &EmissionModel,
    fleet_size: usize,
    range_km: f64,
    kind: ChargeKind,
    total_km: f64,
) -> Result<f64, ImpactError> {
    if !(total_km > 0.0) || !total_km.is_finite() {
        return Err(ImpactError::ZeroDistance);
    }
    if !(range_km > 0.0) || !range_km.is_finite() {
        return Err(ImpactError::NonPositiveInput);
    }
    let per_vehicle = model.per_vehicle_day_g + battery_multiplier(kind) * model.per_battery_km_day_g * range_km;
    Ok((fleet_size as f64 * per_vehicle + model.per_km_g * total_km) / total_km)
}

/// Percent reduction in daily fleet emissions relative to a baseline.
pub fn reduction_vs(gco2_per_km: f64, fleet_km: f64, baseline: &Baseline) -> Result<f64, ImpactError> {
    let ok = |x: f64| x > 0.0 && x.is_finite();
    if !ok(gco2_per_km) || !ok(fleet_km) || !ok(baseline.gco2_per_km) || !ok(baseline.fleet_km) {
        return Err(ImpactError::NonPositiveInput);
    }
    Ok(100.0 * (1.0 - gco2_per_km * fleet_km / baseline.daily_g()))
}
