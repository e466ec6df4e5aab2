//! Earliest-arrival routing over a contact plan.
//!
//! Endpoints are named region-first: `Bundle://region:entity`, e.g.
//! `Bundle://mars.int.ltp:rover_1`. Routing is late-binding: until a bundle
//! reaches its destination region it is routed toward *any* node of that
//! region; only a node inside the region resolves the entity to a terminal
//! node via the region's static entity table (a node's own name always
//! resolves to itself).
//!
//! The route search is Dijkstra over nodes in the queue-free contact-graph
//! model. Traversing contact `c` from a node reached at time `a` costs
//!
//! ```text
//! tx_start   = max(a, c.start)            (must lie inside the window)
//! completion = tx_start + size / c.rate   (must not pass c.end)
//! arrival    = completion + c.owlt(tx_start)
//! ```
//!
//! Arrival times are strictly increasing along a path, so Dijkstra is exact.
//! Ties on arrival break on the lexicographic node sequence of the path,
//! making route selection fully deterministic.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, BTreeMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contactplan::{Contact, ContactPlan, NodeId, NodeTable};

// ---------------------------------------------------------------- endpoints

/// A region-qualified endpoint name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EndpointId {
    pub region: String,
    pub entity: String,
}

impl EndpointId {
    pub fn new(region: impl Into<String>, entity: impl Into<String>) -> Self {
        EndpointId {
            region: region.into(),
            entity: entity.into(),
        }
    }
}

impl fmt::Display for EndpointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bundle://{}:{}", self.region, self.entity)
    }
}

impl FromStr for EndpointId {
    type Err = RoutingError;

    /// Accepts `Bundle://region:entity` or bare `region:entity`. The region
    /// may not contain `:`; the entity may not be empty.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rest = s
            .strip_prefix("Bundle://")
            .or_else(|| s.strip_prefix("bundle://"))
            .unwrap_or(s);
        let (region, entity) = rest
            .split_once(':')
            .ok_or_else(|| RoutingError::BadEndpoint(s.to_string()))?;
        if region.is_empty() || entity.is_empty() || entity.contains(':') {
            return Err(RoutingError::BadEndpoint(s.to_string()));
        }
        Ok(EndpointId::new(region, entity))
    }
}

/// Static per-region entity tables: region -> entity -> terminal node.
pub type EntityTable = BTreeMap<String, BTreeMap<String, NodeId>>;

/// Resolves `entity` within `region` to its terminal node.
///
/// Explicit table entries win; otherwise an entity named exactly like a
/// node of the region resolves to that node.
pub fn resolve_entity(
    region: &str,
    entity: &str,
    table: &EntityTable,
    nodes: &NodeTable,
) -> Result<NodeId, RoutingError> {
    if let Some(node) = table.get(region).and_then(|m| m.get(entity)) {
        return Ok(node.clone());
    }
    let id = NodeId::new(entity);
    if let Some(node) = nodes.get(&id) {
        if node.region == region {
            return Ok(id);
        }
    }
    Err(RoutingError::UnknownEntity {
        region: region.to_string(),
        entity: entity.to_string(),
    })
}

#[derive(Debug, Error, PartialEq)]
pub enum RoutingError {
    #[error("malformed endpoint \"{0}\" (expected Bundle://region:entity)")]
    BadEndpoint(String),
    #[error("no entity \"{entity}\" in region \"{region}\"")]
    UnknownEntity { region: String, entity: String },
}

// ------------------------------------------------------------------- routes

/// A feasible contact path with its earliest arrival time.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    /// Contacts in traversal order.
    pub hops: Vec<Contact>,
    /// Node sequence, source first, destination last.
    pub path: Vec<NodeId>,
    /// Completion-of-reception time at the final node.
    pub arrival_s: f64,
}

impl Route {
    pub fn next_hop_contact(&self) -> &Contact {
        &self.hops[0]
    }

    pub fn next_hop(&self) -> &NodeId {
        &self.hops[0].to
    }
}

/// Arrival time at `c.to` when departing a node reached at `arrival_s`,
/// or `None` when the window cannot carry the bundle.
pub fn arrival_via(c: &Contact, arrival_s: f64, size_bits: u64) -> Option<f64> {
    if arrival_s >= c.end_s {
        return None;
    }
    let tx_start = arrival_s.max(c.start_s);
    let completion = tx_start + size_bits as f64 / c.rate_bps;
    if completion > c.end_s {
        return None;
    }
    Some(completion + c.owlt_at(tx_start))
}

/// Earliest-arrival route from `source` to any node of `dest_region`.
pub fn best_route(
    plan: &ContactPlan,
    nodes: &NodeTable,
    source: &NodeId,
    dest_region: &str,
    t_now_s: f64,
    size_bits: u64,
) -> Option<Route> {
    search(plan, nodes, source, t_now_s, size_bits, &|n: &NodeId| {
        nodes.get(n).is_some_and(|node| node.region == dest_region)
    })
}

/// Earliest-arrival route from `source` to one specific node; used for
/// intra-region forwarding after entity resolution.
pub fn best_route_to_node(
    plan: &ContactPlan,
    nodes: &NodeTable,
    source: &NodeId,
    target: &NodeId,
    t_now_s: f64,
    size_bits: u64,
) -> Option<Route> {
    search(plan, nodes, source, t_now_s, size_bits, &|n: &NodeId| {
        n == target
    })
}

struct QueueEntry {
    arrival_s: f64,
    path: Vec<NodeId>,
    hops: Vec<usize>,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.arrival_s == other.arrival_s && self.path == other.path
    }
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap via reversal: earliest arrival first, then the
        // lexicographically smallest node sequence.
        other
            .arrival_s
            .total_cmp(&self.arrival_s)
            .then_with(|| other.path.cmp(&self.path))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn search(
    plan: &ContactPlan,
    nodes: &NodeTable,
    source: &NodeId,
    t_now_s: f64,
    size_bits: u64,
    is_goal: &dyn Fn(&NodeId) -> bool,
) -> Option<Route> {
    assert!(size_bits > 0, "routing requires a positive bundle size");
    debug_assert!(
        !is_goal(source),
        "routing from a node that already satisfies the goal"
    );

    let mut best: BTreeMap<NodeId, (f64, Vec<NodeId>)> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    best.insert(source.clone(), (t_now_s, vec![source.clone()]));
    heap.push(QueueEntry {
        arrival_s: t_now_s,
        path: vec![source.clone()],
        hops: Vec::new(),
    });

    while let Some(entry) = heap.pop() {
        let at = entry.path.last().unwrap().clone();
        if let Some((b_arr, b_path)) = best.get(&at) {
            if (entry.arrival_s, &entry.path) != (*b_arr, b_path) {
                continue; // superseded by a better label
            }
        }
        if is_goal(&at) {
            return Some(Route {
                hops: entry
                    .hops
                    .iter()
                    .map(|&i| plan.contacts()[i].clone())
                    .collect(),
                path: entry.path,
                arrival_s: entry.arrival_s,
            });
        }
        for (idx, c) in plan.contacts().iter().enumerate() {
            if c.from != at || !nodes.contains_key(&c.to) {
                continue;
            }
            let Some(arrival) = arrival_via(c, entry.arrival_s, size_bits) else {
                continue;
            };
            let mut path = entry.path.clone();
            path.push(c.to.clone());
            let improved = match best.get(&c.to) {
                None => true,
                Some((b_arr, b_path)) => {
                    arrival < *b_arr || (arrival == *b_arr && path < *b_path)
                }
            };
            if improved {
                best.insert(c.to.clone(), (arrival, path.clone()));
                let mut hops = entry.hops.clone();
                hops.push(idx);
                heap.push(QueueEntry {
                    arrival_s: arrival,
                    path,
                    hops,
                });
            }
        }
    }
    None
}

// --------------------------------------------------------------------- tests
