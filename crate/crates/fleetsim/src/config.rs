//! Scenario files: TOML mirroring [`ScenarioConfig`], plus the input files a
//! run needs. Input paths are relative to the scenario file; any input left
//! out falls back to the bundled desk scenario.
//!
//! ```toml
//! scenario = "FC"
//! fleet_size = 20
//! battery_km = 50
//! speed_kmh = 11
//! seed = 1
//! network = "grid.txt"
//! stations = "stations.csv"
//! orders = "orders.csv"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use fleetsim_core::impact::EmissionModel;
use fleetsim_core::{
    desk, ChargeKind, DispatchKind, DispatchPolicy, Order, RoadNetwork, RunMode, ScenarioConfig, ScenarioKind, Station,
};
use serde::{Deserialize, Serialize};

use crate::io::{self, IoError};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub scenario: Option<String>,
    pub fleet_size: Option<usize>,
    pub battery_km: Option<f64>,
    pub speed_kmh: Option<f64>,
    pub seed: Option<u64>,
    pub tick_s: Option<f64>,
    /// `batch` or `live`.
    pub mode: Option<String>,
    pub live_drop_after_s: Option<f64>,
    pub max_sim_s: Option<f64>,
    pub stall_after_s: Option<f64>,
    pub min_level_frac: Option<f64>,
    pub full_recharge_s: Option<f64>,
    pub swap_s: Option<f64>,
    pub night_window_start_s: Option<f64>,
    pub night_window_end_s: Option<f64>,
    pub night_trigger_frac: Option<f64>,
    /// `nearest` or `strategic`.
    pub dispatch: Option<String>,
    pub candidate_count: Option<usize>,
    pub battery_exponent: Option<f64>,
    pub network: Option<PathBuf>,
    pub stations: Option<PathBuf>,
    pub orders: Option<PathBuf>,
    /// Generate orders from a profile file instead of reading them.
    pub profile: Option<PathBuf>,
    pub order_count: Option<usize>,
    pub demand_seed: Option<u64>,
    pub coefficients_us: Option<PathBuf>,
    pub coefficients_renewable: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("unknown {what} `{value}`")]
    Unknown { what: &'static str, value: String },
    #[error("{0}")]
    Invalid(String),
}

impl From<toml::de::Error> for ConfigError {
    fn from(e: toml::de::Error) -> Self {
        ConfigError::Io(IoError::Toml(e))
    }
}

/// The files a run consumes, shared between the runs of a sweep.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub network: Arc<RoadNetwork>,
    pub stations: Vec<Station>,
    pub orders: Vec<Order>,
}

impl Inputs {
    pub fn desk() -> Self {
        Self { network: Arc::new(desk::network()), stations: desk::stations(ChargeKind::Plug), orders: desk::orders() }
    }

    /// Stations with their charging kind set for `scenario`.
    pub fn stations_for(&self, scenario: ScenarioKind) -> Vec<Station> {
        let kind = scenario.strategy().station_kind();
        self.stations.iter().map(|s| Station::new(s.id, s.node, s.capacity, kind)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ScenarioConfig,
    pub inputs: Inputs,
    pub us: EmissionModel,
    pub renewable: EmissionModel,
}

pub fn parse_scenario(s: &str) -> Result<ScenarioKind, ConfigError> {
    ScenarioKind::parse(s).ok_or_else(|| ConfigError::Unknown { what: "scenario", value: s.into() })
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Builds the run configuration. Unset fields take the scenario defaults.
    pub fn to_config(&self) -> Result<ScenarioConfig, ConfigError> {
        let kind = match &self.scenario {
            Some(s) => parse_scenario(s)?,
            None => ScenarioKind::Cc,
        };
        let mut c = ScenarioConfig::new(kind, self.fleet_size.unwrap_or(20));
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut c.spec.range_km, self.battery_km);
        set(&mut c.spec.speed_kmh, self.speed_kmh);
        set(&mut c.spec.min_level_frac, self.min_level_frac);
        set(&mut c.spec.full_recharge_s, self.full_recharge_s);
        set(&mut c.spec.swap_s, self.swap_s);
        set(&mut c.tick_s, self.tick_s);
        set(&mut c.live_drop_after_s, self.live_drop_after_s);
        set(&mut c.max_sim_s, self.max_sim_s);
        set(&mut c.stall_after_s, self.stall_after_s);
        set(&mut c.strategy.night_window_s.0, self.night_window_start_s);
        set(&mut c.strategy.night_window_s.1, self.night_window_end_s);
        set(&mut c.strategy.night_trigger_frac, self.night_trigger_frac);
        c.seed = self.seed.unwrap_or(0);
        if let Some(m) = &self.mode {
            c.mode = match m.to_ascii_lowercase().as_str() {
                "batch" => RunMode::Batch,
                "live" => RunMode::Live,
                _ => return Err(ConfigError::Unknown { what: "mode", value: m.clone() }),
            };
        }
        if let Some(d) = &self.dispatch {
            let kind = match d.to_ascii_lowercase().as_str() {
                "nearest" => DispatchKind::Nearest,
                "strategic" => DispatchKind::Strategic,
                _ => return Err(ConfigError::Unknown { what: "dispatch policy", value: d.clone() }),
            };
            c.dispatch = DispatchPolicy { kind, ..c.dispatch };
        }
        if let Some(k) = self.candidate_count {
            c.dispatch.candidate_count = k;
        }
        set(&mut c.dispatch.battery_exponent, self.battery_exponent);
        c.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(c)
    }

    /// Reads the referenced input files, resolving paths against `base`.
    pub fn load_inputs(&self, base: &Path) -> Result<Inputs, ConfigError> {
        let path = |p: &PathBuf| base.join(p);
        let network = match &self.network {
            Some(p) => io::parse_network(&io::read_file(&path(p))?)?,
            None => desk::network(),
        };
        let stations = match &self.stations {
            Some(p) => io::parse_stations(&io::read_file(&path(p))?, ChargeKind::Plug)?,
            None => desk::stations(ChargeKind::Plug),
        };
        let orders = match (&self.orders, &self.profile) {
            (Some(_), Some(_)) => return Err(ConfigError::Invalid("give either orders or profile, not both".into())),
            (Some(p), None) => io::parse_orders(&io::read_file(&path(p))?, &network)?,
            (None, Some(p)) => {
                let profile = io::parse_profile(&io::read_file(&path(p))?, self.order_count.unwrap_or(desk::ORDER_COUNT))?;
                profile.check_nodes(&network).map_err(IoError::from)?;
                fleetsim_core::demand::generate_synthetic(&profile, self.demand_seed.unwrap_or(desk::ORDER_SEED))
                    .map_err(IoError::from)?
            }
            (None, None) => desk::orders(),
        };
        Ok(Inputs { network: Arc::new(network), stations, orders })
    }

    pub fn load_models(&self, base: &Path) -> Result<(EmissionModel, EmissionModel), ConfigError> {
        let load = |p: &Option<PathBuf>, default: EmissionModel| -> Result<EmissionModel, ConfigError> {
            match p {
                Some(p) => Ok(io::parse_coefficients(&io::read_file(&base.join(p))?)?),
                None => Ok(default),
            }
        };
        Ok((load(&self.coefficients_us, EmissionModel::us_average())?, load(&self.coefficients_renewable, EmissionModel::renewable())?))
    }
}

/// Loads a scenario file and everything it references.
pub fn load(path: &Path) -> Result<Loaded, ConfigError> {
    let file = ScenarioFile::parse(&io::read_file(path)?)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let (us, renewable) = file.load_models(base)?;
    Ok(Loaded { config: file.to_config()?, inputs: file.load_inputs(base)?, us, renewable })
}

/// The bundled desk scenario with default settings.
pub fn desk_default() -> Loaded {
    Loaded {
        config: ScenarioConfig::new(ScenarioKind::Cc, 20),
        inputs: Inputs::desk(),
        us: EmissionModel::us_average(),
        renewable: EmissionModel::renewable(),
    }
}

/// Writes the desk scenario as standalone files (`network.txt`,
/// `stations.csv`, `orders.csv`, `profile.txt`, `scenario.toml`).
pub fn export_desk(dir: &Path) -> Result<(), IoError> {
    std::fs::create_dir_all(dir)?;
    let write = |name: &str, text: String| -> Result<(), IoError> {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|source| IoError::File { path: p, source })
    };
    write("network.txt", io::write_network(&desk::network()))?;
    write("stations.csv", io::write_stations(&desk::stations(ChargeKind::Plug))?)?;
    write("orders.csv", io::write_orders(&desk::orders())?)?;
    write("profile.txt", io::write_profile(&desk::profile()))?;
    write(
        "scenario.toml",
        "scenario = \"CC\"\nfleet_size = 20\nbattery_km = 50\nspeed_kmh = 11\nseed = 1\n\
         network = \"network.txt\"\nstations = \"stations.csv\"\norders = \"orders.csv\"\n"
            .into(),
    )?;
    Ok(())
}
