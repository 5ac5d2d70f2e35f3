//! The bundled synthetic desk scenario: a 10 × 10 street grid, four charging
//! stations, and a day of 500 orders with lunch and dinner peaks.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::charging::{Station, StationId};
use crate::demand::{generate_synthetic, DemandProfile, Order};
use crate::fleet::ChargeKind;
use crate::network::{Edge, Node, NodeId, RoadNetwork};

pub const GRID_SIDE: u32 = 10;
pub const BLOCK_M: f64 = 250.0;
pub const ORDER_COUNT: usize = 500;
pub const STATION_CAPACITY: usize = 3;
/// Seed of the bundled order set.
pub const ORDER_SEED: u64 = 2024;
pub const BIN_WIDTH_S: f64 = 450.0;

pub fn node_id(row: u32, col: u32) -> NodeId {
    NodeId(row * GRID_SIDE + col + 1)
}

pub fn network() -> RoadNetwork {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for r in 0..GRID_SIDE {
        for c in 0..GRID_SIDE {
            nodes.push(Node { id: node_id(r, c), x_m: c as f64 * BLOCK_M, y_m: r as f64 * BLOCK_M });
            let mut link = |to: NodeId| {
                let id = edges.len() as u32 + 1;
                edges.push(Edge { id, from: node_id(r, c), to, length_m: BLOCK_M, bidirectional: true });
            };
            if c + 1 < GRID_SIDE {
                link(node_id(r, c + 1));
            }
            if r + 1 < GRID_SIDE {
                link(node_id(r + 1, c));
            }
        }
    }
    RoadNetwork::new(nodes, edges).expect("desk grid is valid")
}

pub fn stations(kind: ChargeKind) -> Vec<Station> {
    [(2, 2), (2, 7), (7, 2), (7, 7)]
        .into_iter()
        .enumerate()
        .map(|(i, (r, c))| Station::new(StationId(i as u32 + 1), node_id(r, c), STATION_CAPACITY, kind))
        .collect()
}

fn bump(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    libm::exp(-0.5 * z * z)
}

/// Order intensity over the day in 450 s bins: quiet overnight, a lunch
/// peak around 12:15 and a larger dinner peak around 18:45.
pub fn bin_weights() -> Vec<f64> {
    let bins = (crate::DAY_S / BIN_WIDTH_S) as usize;
    (0..bins)
        .map(|b| {
            let h = (b as f64 + 0.5) * BIN_WIDTH_S / 3600.0;
            let base = if (2.0..5.0).contains(&h) { 0.01 } else { 0.06 };
            base + 0.25 * bump(h, 8.5, 1.0) + 0.9 * bump(h, 12.25, 1.1) + 1.2 * bump(h, 18.75, 1.4) + 0.2 * bump(h, 22.5, 1.0)
        })
        .collect()
}

/// Restaurants cluster downtown (grid centre); destinations spread across
/// the grid with a mild central bias.
pub fn profile() -> DemandProfile {
    let centre = (GRID_SIDE as f64 - 1.0) / 2.0;
    let mut spatial_weights = BTreeMap::new();
    for r in 0..GRID_SIDE {
        for c in 0..GRID_SIDE {
            let d = libm::hypot(r as f64 - centre, c as f64 - centre);
            spatial_weights.insert(node_id(r, c), (bump(d, 0.0, 1.8), 0.5 + bump(d, 0.0, 3.5)));
        }
    }
    DemandProfile { bin_width_s: BIN_WIDTH_S, bin_weights: bin_weights(), total_orders: ORDER_COUNT, spatial_weights }
}

/// The bundled order set.
pub fn orders() -> Vec<Order> {
    generate_synthetic(&profile(), ORDER_SEED).expect("desk profile is valid")
}
