//! Food-delivery orders: validation of ingested rows and a seeded synthetic
//! generator driven by a time-of-day profile and per-node spatial weights.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fleet::VehicleId;
use crate::network::{NodeId, RoadNetwork};

const MAX_PAIR_RETRIES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrderId(pub u32);

impl core::fmt::Display for OrderId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OrderState {
    Waiting,
    Assigned,
    InTransit,
    Delivered,
    Dropped,
}

impl OrderState {
    pub fn label(self) -> &'static str {
        match self {
            OrderState::Waiting => "Waiting",
            OrderState::Assigned => "Assigned",
            OrderState::InTransit => "InTransit",
            OrderState::Delivered => "Delivered",
            OrderState::Dropped => "Dropped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub id: OrderId,
    pub placed_at_s: f64,
    pub restaurant: NodeId,
    pub destination: NodeId,
    pub state: OrderState,
    pub assigned_at_s: Option<f64>,
    pub picked_up_at_s: Option<f64>,
    pub delivered_at_s: Option<f64>,
    pub vehicle: Option<VehicleId>,
}

impl Order {
    pub fn new(id: OrderId, placed_at_s: f64, restaurant: NodeId, destination: NodeId) -> Self {
        Self {
            id,
            placed_at_s,
            restaurant,
            destination,
            state: OrderState::Waiting,
            assigned_at_s: None,
            picked_up_at_s: None,
            delivered_at_s: None,
            vehicle: None,
        }
    }

    /// Placement-to-delivery time, once delivered.
    pub fn wait_s(&self) -> Option<f64> {
        self.delivered_at_s.map(|t| t - self.placed_at_s)
    }
}

/// One raw row of an orders file, before validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderRow {
    pub order_id: u32,
    pub placed_at_s: f64,
    pub restaurant: NodeId,
    pub destination: NodeId,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DemandError {
    #[error("row {row}: unknown node {node}")]
    UnknownNode { row: usize, node: NodeId },
    #[error("row {row}: restaurant and destination are the same node")]
    SameOriginDestination { row: usize },
    #[error("row {row}: placement time is negative or not finite")]
    NegativeTime { row: usize },
    #[error("row {row}: duplicate order id {id}")]
    DuplicateId { row: usize, id: u32 },
    #[error("degenerate demand profile: {0}")]
    DegenerateProfile(&'static str),
    #[error("could not draw distinct restaurant and destination after {0} attempts")]
    PairRejection(usize),
}

/// Validates file rows and returns orders sorted by placement time.
///
/// Row numbers in errors are 1-based data rows. Ties in placement time keep
/// order-id order.
pub fn ingest_orders(rows: &[OrderRow], net: &RoadNetwork) -> Result<Vec<Order>, DemandError> {
    let mut seen = BTreeMap::new();
    let mut orders = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let row = i + 1;
        if !(r.placed_at_s >= 0.0) || !r.placed_at_s.is_finite() {
            return Err(DemandError::NegativeTime { row });
        }
        for node in [r.restaurant, r.destination] {
            if !net.contains(node) {
                return Err(DemandError::UnknownNode { row, node });
            }
        }
        if r.restaurant == r.destination {
            return Err(DemandError::SameOriginDestination { row });
        }
        if seen.insert(r.order_id, row).is_some() {
            return Err(DemandError::DuplicateId { row, id: r.order_id });
        }
        orders.push(Order::new(OrderId(r.order_id), r.placed_at_s, r.restaurant, r.destination));
    }
    sort_orders(&mut orders);
    Ok(orders)
}

pub(crate) fn sort_orders(orders: &mut [Order]) {
    orders.sort_by(|a, b| a.placed_at_s.total_cmp(&b.placed_at_s).then(a.id.cmp(&b.id)));
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    pub bin_width_s: f64,
    pub bin_weights: Vec<f64>,
    pub total_orders: usize,
    /// node → (restaurant weight, destination weight)
    pub spatial_weights: BTreeMap<NodeId, (f64, f64)>,
}

impl DemandProfile {
    pub fn validate(&self) -> Result<(), DemandError> {
        if !(self.bin_width_s > 0.0) || !self.bin_width_s.is_finite() {
            return Err(DemandError::DegenerateProfile("bin width must be positive"));
        }
        let valid = |w: f64| w >= 0.0 && w.is_finite();
        if !self.bin_weights.iter().all(|&w| valid(w)) {
            return Err(DemandError::DegenerateProfile("bin weights must be finite and non-negative"));
        }
        if !self.bin_weights.iter().any(|&w| w > 0.0) {
            return Err(DemandError::DegenerateProfile("all bin weights are zero"));
        }
        if !self.spatial_weights.values().all(|&(r, d)| valid(r) && valid(d)) {
            return Err(DemandError::DegenerateProfile("spatial weights must be finite and non-negative"));
        }
        if !self.spatial_weights.values().any(|&(r, _)| r > 0.0) {
            return Err(DemandError::DegenerateProfile("no node has a positive restaurant weight"));
        }
        if !self.spatial_weights.values().any(|&(_, d)| d > 0.0) {
            return Err(DemandError::DegenerateProfile("no node has a positive destination weight"));
        }
        Ok(())
    }

    /// Checks that every weighted node exists in `net`.
    pub fn check_nodes(&self, net: &RoadNetwork) -> Result<(), DemandError> {
        for (row, node) in self.spatial_weights.keys().enumerate() {
            if !net.contains(*node) {
                return Err(DemandError::UnknownNode { row: row + 1, node: *node });
            }
        }
        Ok(())
    }
}

/// Draws `profile.total_orders` orders.
///
/// Each order independently picks a bin with probability proportional to its
/// weight (so bin counts are multinomial), a uniform time inside the bin, and
/// restaurant/destination nodes from the spatial weights, redrawing the pair
/// while they coincide. Ids follow placement order.
pub fn generate_synthetic(profile: &DemandProfile, seed: u64) -> Result<Vec<Order>, DemandError> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);

    let bins = WeightedIndex::new(&profile.bin_weights)
        .map_err(|_| DemandError::DegenerateProfile("bin weights"))?;
    let nodes: Vec<NodeId> = profile.spatial_weights.keys().copied().collect();
    let rest_w: Vec<f64> = profile.spatial_weights.values().map(|w| w.0).collect();
    let dest_w: Vec<f64> = profile.spatial_weights.values().map(|w| w.1).collect();
    let rest = WeightedIndex::new(&rest_w).map_err(|_| DemandError::DegenerateProfile("restaurant weights"))?;
    let dest = WeightedIndex::new(&dest_w).map_err(|_| DemandError::DegenerateProfile("destination weights"))?;

    let mut drawn = Vec::with_capacity(profile.total_orders);
    for _ in 0..profile.total_orders {
        let bin = bins.sample(&mut rng);
        let t = (bin as f64 + rng.random::<f64>()) * profile.bin_width_s;
        let mut attempts = 0;
        let (r, d) = loop {
            let r = nodes[rest.sample(&mut rng)];
            let d = nodes[dest.sample(&mut rng)];
            if r != d {
                break (r, d);
            }
            attempts += 1;
            if attempts >= MAX_PAIR_RETRIES {
                return Err(DemandError::PairRejection(MAX_PAIR_RETRIES));
            }
        };
        drawn.push((t, r, d));
    }
    drawn.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(drawn
        .into_iter()
        .enumerate()
        .map(|(i, (t, r, d))| Order::new(OrderId(i as u32), t, r, d))
        .collect())
}
