use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fleetsim::config::{self, parse_scenario, Loaded};
use fleetsim::session::{self, Session, SessionHandle};
use fleetsim::sweep::{self, SweepError};
use fleetsim::{io, server};
use fleetsim_core::ScenarioConfig;

#[derive(Parser)]
#[command(name = "fleetsim", version, about = "Delivery-fleet simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Scenario file (TOML); the bundled desk scenario when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ICE, BEV, CC, NC, SD or FC.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    fleet: Option<usize>,
    #[arg(long)]
    battery_km: Option<f64>,
    #[arg(long)]
    speed_kmh: Option<f64>,
    /// Charging strategy for lightweight fleets; same as `--scenario`.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write results as CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one batch simulation and print its report.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Write the event trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Print the report as JSON instead of CSV.
        #[arg(long)]
        json: bool,
    },
    /// Find the smallest fleet that meets the service level.
    Minfleet {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 10)]
        min: usize,
        #[arg(long, default_value_t = 300)]
        max: usize,
        #[arg(long, default_value_t = 10)]
        step: usize,
    },
    /// Run the battery x speed grid for one or more strategies.
    Grid {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated scenarios; defaults to the one in the config.
        #[arg(long, value_delimiter = ',')]
        scenarios: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = sweep::STUDY_BATTERIES_KM)]
        batteries: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = sweep::STUDY_SPEEDS_KMH)]
        speeds: Vec<f64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Host a live session.
    Serve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Write the bundled desk scenario files into a directory.
    ExportDesk { dir: PathBuf },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Io(#[from] io::IoError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Engine(#[from] fleetsim_core::EngineError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Other(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.into())
    }
}

fn load(args: &RunArgs) -> Result<Loaded, CliError> {
    let mut loaded = match &args.config {
        Some(p) => config::load(p)?,
        None => config::desk_default(),
    };
    let scenario = args.scenario.as_ref().or(args.strategy.as_ref());
    let c = &mut loaded.config;
    if let Some(s) = scenario {
        let kind = parse_scenario(s)?;
        if kind != c.scenario {
            let mut next = ScenarioConfig::new(kind, c.fleet_size);
            next.seed = c.seed;
            next.tick_s = c.tick_s;
            if !kind.is_car() && !c.scenario.is_car() {
                next.spec.range_km = c.spec.range_km;
                next.spec.speed_kmh = c.spec.speed_kmh;
            }
            *c = next;
        }
    }
    if let Some(n) = args.fleet {
        c.fleet_size = n;
    }
    if let Some(b) = args.battery_km {
        c.spec.range_km = b;
    }
    if let Some(v) = args.speed_kmh {
        c.spec.speed_kmh = v;
    }
    if let Some(s) = args.seed {
        c.seed = s;
    }
    c.validate().map_err(|e| CliError::Other(e.to_string()))?;
    Ok(loaded)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Io(io::IoError::File { path: p.clone(), source })),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { run, trace, json } => {
            let l = load(&run)?;
            let out = sweep::run(&l.config, &l.inputs)?;
            if let Some(p) = trace {
                let f = std::fs::File::create(&p)?;
                io::write_trace(&out.trace, std::io::BufWriter::new(f))?;
            }
            let text = if json { io::report_json(&out.report)? + "\n" } else { io::report_csv(&out.report) };
            emit(&run.out, &text)
        }
        Command::Minfleet { run, min, max, step } => {
            let l = load(&run)?;
            let found = sweep::find_min_fleet(&l.config, &l.inputs, min, max, step)?;
            let mut text = String::from("fleet_size,pct_under_40min\n");
            for (f, p) in &found.tried {
                text.push_str(&format!("{f},{p}\n"));
            }
            eprintln!("minimum fleet for {}: {}", l.config.scenario.label(), found.fleet_size);
            emit(&run.out, &text)
        }
        Command::Grid { run, scenarios, batteries, speeds, threads } => {
            let l = load(&run)?;
            let kinds = if scenarios.is_empty() {
                vec![l.config.scenario]
            } else {
                scenarios.iter().map(|s| parse_scenario(s)).collect::<Result<Vec<_>, _>>()?
            };
            let mut configs = Vec::new();
            for k in kinds {
                for mut c in sweep::study_grid(k, l.config.fleet_size, &batteries, &speeds, l.config.seed) {
                    c.tick_s = l.config.tick_s;
                    configs.push(c);
                }
            }
            let rows = sweep::run_grid(&configs, &l.inputs, &l.us, &l.renewable, threads)?;
            emit(&run.out, &sweep::grid_csv(&rows)?)
        }
        Command::Serve { run, port } => {
            let mut l = load(&run)?;
            if run.config.is_none() && run.fleet.is_none() {
                l.config.fleet_size = session::FLEET_RANGE.0;
            }
            let addr = server::bind_address(port).map_err(|e| CliError::Other(format!("{}: {e}", server::BIND_ENV)))?;
            let session = Session::new(l.config, &l.inputs, l.us)?;
            let handle = SessionHandle::spawn(session, l.inputs);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                server::serve(listener, handle).await
            })?;
            Ok(())
        }
        Command::ExportDesk { dir } => Ok(config::export_desk(&dir)?),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Sweep(SweepError::NotFound { .. }) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
