//! Text file formats: road networks, stations, orders, demand profiles,
//! emission coefficients, reports and traces.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use fleetsim_core::demand::{ingest_orders, DemandError, OrderRow};
use fleetsim_core::impact::{EmissionModel, GridMix};
use fleetsim_core::network::NetworkError;
use fleetsim_core::{
    ChargeKind, DemandProfile, Edge, MetricsReport, Node, NodeId, Order, RoadNetwork, Station, StationId, Trace,
    TraceEvent,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File { path: path.to_owned(), source })
}

fn parse_err(line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse { line, msg: msg.into() }
}

fn field<T: std::str::FromStr>(line: usize, what: &str, s: &str) -> Result<T, IoError> {
    s.trim().parse().map_err(|_| parse_err(line, format!("bad {what} `{}`", s.trim())))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Parses `N,<id>,<x_m>,<y_m>` and `E,<id>,<from>,<to>,<length_m>,<0|1>` records.
pub fn parse_network(text: &str) -> Result<RoadNetwork, IoError> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for (line, rec) in records(text) {
        let f: Vec<&str> = rec.split(',').collect();
        match f[0].trim() {
            "N" if f.len() == 4 => nodes.push(Node {
                id: NodeId(field(line, "node id", f[1])?),
                x_m: field(line, "x", f[2])?,
                y_m: field(line, "y", f[3])?,
            }),
            "E" if f.len() == 6 => {
                let bidirectional = match f[5].trim() {
                    "0" => false,
                    "1" => true,
                    other => return Err(parse_err(line, format!("bad bidirectional flag `{other}`"))),
                };
                edges.push(Edge {
                    id: field(line, "edge id", f[1])?,
                    from: NodeId(field(line, "from node", f[2])?),
                    to: NodeId(field(line, "to node", f[3])?),
                    length_m: field(line, "length", f[4])?,
                    bidirectional,
                });
            }
            _ => return Err(parse_err(line, format!("malformed record `{rec}`"))),
        }
    }
    Ok(RoadNetwork::new(nodes, edges)?)
}

pub fn write_network(net: &RoadNetwork) -> String {
    let mut out = String::new();
    for n in net.nodes() {
        out.push_str(&format!("N,{},{},{}\n", n.id, n.x_m, n.y_m));
    }
    for e in net.edges() {
        out.push_str(&format!("E,{},{},{},{},{}\n", e.id, e.from, e.to, e.length_m, u8::from(e.bidirectional)));
    }
    out
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct StationRow {
    station_id: u32,
    node: u32,
    capacity: usize,
}

/// Stations CSV `station_id,node,capacity`. The charging kind comes from the
/// scenario, so it is not part of the file.
pub fn parse_stations(text: &str, kind: ChargeKind) -> Result<Vec<Station>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: StationRow = row?;
        out.push(Station::new(StationId(r.station_id), NodeId(r.node), r.capacity, kind));
    }
    Ok(out)
}

pub fn write_stations(stations: &[Station]) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in stations {
        w.serialize(StationRow { station_id: s.id.0, node: s.node.0, capacity: s.capacity })?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct OrderCsvRow {
    order_id: u32,
    placed_at_s: f64,
    restaurant_node: u32,
    destination_node: u32,
}

/// Orders CSV `order_id,placed_at_s,restaurant_node,destination_node`.
pub fn parse_orders(text: &str, net: &RoadNetwork) -> Result<Vec<Order>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        let r: OrderCsvRow = row?;
        rows.push(OrderRow {
            order_id: r.order_id,
            placed_at_s: r.placed_at_s,
            restaurant: NodeId(r.restaurant_node),
            destination: NodeId(r.destination_node),
        });
    }
    Ok(ingest_orders(&rows, net)?)
}

pub fn write_orders(orders: &[Order]) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for o in orders {
        w.serialize(OrderCsvRow {
            order_id: o.id.0,
            placed_at_s: o.placed_at_s,
            restaurant_node: o.restaurant.0,
            destination_node: o.destination.0,
        })?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8"))
}

/// Profile file: the bin width, then one weight per line, then
/// `node,restaurant_w,dest_w` rows. The order count is supplied separately.
pub fn parse_profile(text: &str, total_orders: usize) -> Result<DemandProfile, IoError> {
    let mut lines = records(text);
    let (line, first) = lines.next().ok_or_else(|| parse_err(1, "empty profile"))?;
    let bin_width_s = field(line, "bin width", first)?;
    let mut bin_weights = Vec::new();
    let mut spatial_weights = std::collections::BTreeMap::new();
    for (line, rec) in lines {
        let f: Vec<&str> = rec.split(',').collect();
        match f.len() {
            1 if spatial_weights.is_empty() => bin_weights.push(field(line, "bin weight", f[0])?),
            3 => {
                let node = NodeId(field(line, "node", f[0])?);
                let w = (field(line, "restaurant weight", f[1])?, field(line, "destination weight", f[2])?);
                if spatial_weights.insert(node, w).is_some() {
                    return Err(parse_err(line, format!("node {node} listed twice")));
                }
            }
            _ => return Err(parse_err(line, format!("malformed profile record `{rec}`"))),
        }
    }
    let p = DemandProfile { bin_width_s, bin_weights, total_orders, spatial_weights };
    p.validate()?;
    Ok(p)
}

pub fn write_profile(p: &DemandProfile) -> String {
    let mut out = format!("{}\n", p.bin_width_s);
    for w in &p.bin_weights {
        out.push_str(&format!("{w}\n"));
    }
    for (n, (r, d)) in &p.spatial_weights {
        out.push_str(&format!("{n},{r},{d}\n"));
    }
    out
}

/// Coefficient file: `key = value` lines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientFile {
    pub grid: GridMix,
    pub per_vehicle_day_g: f64,
    pub per_battery_km_day_g: f64,
    pub per_km_g: f64,
}

pub fn parse_coefficients(text: &str) -> Result<EmissionModel, IoError> {
    let c: CoefficientFile = toml::from_str(text)?;
    Ok(EmissionModel {
        grid: c.grid,
        per_vehicle_day_g: c.per_vehicle_day_g,
        per_battery_km_day_g: c.per_battery_km_day_g,
        per_km_g: c.per_km_g,
    })
}

/// One CSV header plus one row of report scalars.
pub fn report_csv(report: &MetricsReport) -> String {
    let header = MetricsReport::CSV_COLUMNS.join(",");
    let row: Vec<String> = report.scalar_values().iter().map(|v| v.to_string()).collect();
    format!("{header}\n{}\n", row.join(","))
}

pub fn report_json(report: &MetricsReport) -> Result<String, IoError> {
    Ok(serde_json::to_string_pretty(report)?)
}

/// Trace CSV `t_s,entity,from,to`. Entities are `vehicle:<id>` and
/// `order:<id>`; additions, removals and controls use `-` for the missing side.
pub fn write_trace<W: Write>(trace: &Trace, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_s", "entity", "from", "to"])?;
    for r in &trace.records {
        let t = r.t_s.to_string();
        let (entity, from, to) = match &r.event {
            TraceEvent::VehicleAdded { vehicle, node } => (format!("vehicle:{vehicle}"), "-".into(), format!("Idle@{node}")),
            TraceEvent::VehicleRemoved { vehicle, state } => (format!("vehicle:{vehicle}"), state.label().into(), "-".into()),
            TraceEvent::Vehicle { vehicle, from, to, .. } => (format!("vehicle:{vehicle}"), from.label().into(), to.label().into()),
            TraceEvent::OrderPlaced { order } => (format!("order:{order}"), "-".into(), "Waiting".into()),
            TraceEvent::Order { order, from, to } => (format!("order:{order}"), from.label().into(), to.label().into()),
            TraceEvent::Odometer { .. } => continue,
            TraceEvent::Control { label } => ("control".into(), "-".into(), label.clone()),
        };
        w.write_record([t, entity, from, to])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_all<R: Read>(mut r: R) -> Result<String, IoError> {
    let mut s = String::new();
    r.read_to_string(&mut s)?;
    Ok(s)
}
