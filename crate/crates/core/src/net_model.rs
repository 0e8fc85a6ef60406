//! Physical sensor network: uniform deployment in a square region, unit-disk
//! radio neighborhoods, planar bearings, and greedy geographic forwarding.
//!
//! A [`Network`] is immutable once a trial starts. Everything the detection
//! protocols mutate lives in per-round state owned by the round runners.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::adversary::Behavior;

/// Two locations closer than this are the same place.
pub const LOCATION_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("a network needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("region side must be positive and finite, got {0}")]
    InvalidSide(f64),
    #[error("either a positive radio range or a target degree >= 1 is required")]
    InvalidRange,
    #[error("bearing between coincident points is undefined")]
    CoincidentPoints,
    #[error("location ({x}, {y}) lies outside the deployment region [0, {side}]^2")]
    OutsideRegion { x: f64, y: f64, side: f64 },
    #[error("no physical node with index {0}")]
    UnknownNode(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub const fn new(x: f64, y: f64) -> Self {
        Location { x, y }
    }

    pub fn distance(&self, other: &Location) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn distance_sq(&self, other: &Location) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    /// True when the two points are within [`LOCATION_EPSILON`] of each other.
    pub fn coincides(&self, other: &Location) -> bool {
        self.distance(other) <= LOCATION_EPSILON
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3})", self.x, self.y)
    }
}

/// Identity of a sensor node. Clones carry the identity of the node they were
/// copied from, so one `NodeId` can map to several physical nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{:016x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalNode {
    pub index: usize,
    pub identity: NodeId,
    pub location: Location,
    pub is_clone: bool,
    pub behavior: Behavior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentConfig {
    pub n: usize,
    pub side: f64,
    pub radio_range: Option<f64>,
    /// Overrides `radio_range` when present.
    pub target_degree: Option<f64>,
    pub seed: u64,
}

impl DeploymentConfig {
    pub fn with_range(n: usize, side: f64, radio_range: f64, seed: u64) -> Self {
        DeploymentConfig {
            n,
            side,
            radio_range: Some(radio_range),
            target_degree: None,
            seed,
        }
    }

    pub fn with_degree(n: usize, side: f64, target_degree: f64, seed: u64) -> Self {
        DeploymentConfig {
            n,
            side,
            radio_range: None,
            target_degree: Some(target_degree),
            seed,
        }
    }

    /// Radio range actually used. A target degree `d` maps to
    /// `side * sqrt(d / (pi * n))`, the range giving expected degree `d` under
    /// uniform density (border effects ignored).
    pub fn effective_range(&self) -> Result<f64, NetError> {
        if self.n < 2 {
            return Err(NetError::TooFewNodes(self.n));
        }
        if !(self.side.is_finite() && self.side > 0.0) {
            return Err(NetError::InvalidSide(self.side));
        }
        match (self.target_degree, self.radio_range) {
            (Some(d), _) if d.is_finite() && d >= 1.0 => {
                Ok(self.side * (d / (PI * self.n as f64)).sqrt())
            }
            (Some(_), _) => Err(NetError::InvalidRange),
            (None, Some(r)) if r.is_finite() && r > 0.0 => Ok(r),
            _ => Err(NetError::InvalidRange),
        }
    }

    /// Expected degree ignoring border effects.
    pub fn expected_degree(&self) -> Result<f64, NetError> {
        let r = self.effective_range()?;
        Ok(PI * r * r * self.n as f64 / (self.side * self.side))
    }
}

/// Deployed topology. Adjacency is kept as physical indices sorted ascending;
/// [`Network::neighbor_list`] yields the `(NodeId, Location)` view nodes
/// actually exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    side: f64,
    radio_range: f64,
    nodes: Vec<PhysicalNode>,
    neighbors: Vec<Vec<usize>>,
    by_identity: BTreeMap<NodeId, Vec<usize>>,
}

impl Network {
    /// Builds a network from explicit placements. Every node starts honest.
    pub fn from_placements(
        side: f64,
        radio_range: f64,
        placements: &[(NodeId, Location)],
    ) -> Result<Self, NetError> {
        if !(side.is_finite() && side > 0.0) {
            return Err(NetError::InvalidSide(side));
        }
        if !(radio_range.is_finite() && radio_range > 0.0) {
            return Err(NetError::InvalidRange);
        }
        let mut net = Network {
            side,
            radio_range,
            nodes: Vec::with_capacity(placements.len()),
            neighbors: Vec::new(),
            by_identity: BTreeMap::new(),
        };
        for &(id, loc) in placements {
            net.check_inside(loc)?;
            let index = net.nodes.len();
            net.nodes.push(PhysicalNode {
                index,
                identity: id,
                location: loc,
                is_clone: false,
                behavior: Behavior::Honest,
            });
            net.by_identity.entry(id).or_default().push(index);
        }
        net.recompute_adjacency();
        Ok(net)
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn radio_range(&self) -> f64 {
        self.radio_range
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[PhysicalNode] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &PhysicalNode {
        &self.nodes[index]
    }

    pub fn get(&self, index: usize) -> Result<&PhysicalNode, NetError> {
        self.nodes.get(index).ok_or(NetError::UnknownNode(index))
    }

    pub fn neighbors(&self, index: usize) -> &[usize] {
        &self.neighbors[index]
    }

    pub fn degree(&self, index: usize) -> usize {
        self.neighbors[index].len()
    }

    pub fn mean_degree(&self) -> f64 {
        let total: usize = self.neighbors.iter().map(Vec::len).sum();
        total as f64 / self.nodes.len().max(1) as f64
    }

    /// `(NodeId, Location)` of every radio neighbor, in physical index order.
    pub fn neighbor_list(&self, index: usize) -> Vec<(NodeId, Location)> {
        self.neighbors[index]
            .iter()
            .map(|&j| (self.nodes[j].identity, self.nodes[j].location))
            .collect()
    }

    /// Distinct identities in ascending order.
    pub fn identities(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.by_identity.keys().copied()
    }

    /// Physical nodes carrying `id`, ascending by index.
    pub fn replicas(&self, id: NodeId) -> &[usize] {
        self.by_identity.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Identities held by two or more physical nodes.
    pub fn cloned_identities(&self) -> Vec<NodeId> {
        self.by_identity
            .iter()
            .filter(|(_, v)| v.len() >= 2)
            .map(|(id, _)| *id)
            .collect()
    }

    /// The replica of `id` geographically nearest to `from`; ties go to the
    /// lowest physical index.
    pub fn nearest_replica(&self, id: NodeId, from: Location) -> Option<usize> {
        self.replicas(id).iter().copied().min_by(|&a, &b| {
            let da = self.nodes[a].location.distance_sq(&from);
            let db = self.nodes[b].location.distance_sq(&from);
            da.total_cmp(&db).then(a.cmp(&b))
        })
    }

    pub fn contains(&self, loc: Location) -> bool {
        loc.is_finite() && (0.0..=self.side).contains(&loc.x) && (0.0..=self.side).contains(&loc.y)
    }

    fn check_inside(&self, loc: Location) -> Result<(), NetError> {
        if self.contains(loc) {
            Ok(())
        } else {
            Err(NetError::OutsideRegion {
                x: loc.x,
                y: loc.y,
                side: self.side,
            })
        }
    }

    /// Adds a physical node and refreshes adjacency. Returns its index.
    pub(crate) fn push_node(
        &mut self,
        identity: NodeId,
        location: Location,
        is_clone: bool,
        behavior: Behavior,
    ) -> Result<usize, NetError> {
        self.check_inside(location)?;
        let index = self.nodes.len();
        self.nodes.push(PhysicalNode {
            index,
            identity,
            location,
            is_clone,
            behavior,
        });
        self.by_identity.entry(identity).or_default().push(index);
        self.recompute_adjacency();
        Ok(index)
    }

    pub(crate) fn node_mut(&mut self, index: usize) -> &mut PhysicalNode {
        &mut self.nodes[index]
    }

    fn recompute_adjacency(&mut self) {
        let n = self.nodes.len();
        let r = self.radio_range;
        let r_sq = r * r;
        // Bucket grid with cell edge >= range, so neighbors live in the 3x3 block.
        let cells = ((self.side / r).floor() as usize).clamp(1, 512);
        let cell_edge = self.side / cells as f64;
        let cell_of = |loc: &Location| -> (usize, usize) {
            let cx = ((loc.x / cell_edge) as usize).min(cells - 1);
            let cy = ((loc.y / cell_edge) as usize).min(cells - 1);
            (cx, cy)
        };
        let mut grid: Vec<Vec<usize>> = vec![Vec::new(); cells * cells];
        for node in &self.nodes {
            let (cx, cy) = cell_of(&node.location);
            grid[cy * cells + cx].push(node.index);
        }
        let mut neighbors = vec![Vec::new(); n];
        for node in &self.nodes {
            let (cx, cy) = cell_of(&node.location);
            let list: &mut Vec<usize> = &mut neighbors[node.index];
            for gy in cy.saturating_sub(1)..=(cy + 1).min(cells - 1) {
                for gx in cx.saturating_sub(1)..=(cx + 1).min(cells - 1) {
                    for &j in &grid[gy * cells + gx] {
                        if j != node.index
                            && node.location.distance_sq(&self.nodes[j].location) <= r_sq
                        {
                            list.push(j);
                        }
                    }
                }
            }
            list.sort_unstable();
        }
        self.neighbors = neighbors;
    }
}

/// Places `cfg.n` nodes uniformly at random in `[0, side]^2` with distinct
/// random identities. Deterministic in `cfg.seed`.
pub fn deploy_network(cfg: &DeploymentConfig) -> Result<Network, NetError> {
    let range = cfg.effective_range()?;
    let expected = cfg.expected_degree()?;
    if expected < 1.0 {
        log::warn!(
            "expected node degree {expected:.3} is below 1; the network will be mostly disconnected"
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seen = HashSet::with_capacity(cfg.n);
    let mut placements = Vec::with_capacity(cfg.n);
    while placements.len() < cfg.n {
        let id = NodeId(rng.gen());
        if !seen.insert(id) {
            continue;
        }
        let loc = Location::new(rng.gen_range(0.0..=cfg.side), rng.gen_range(0.0..=cfg.side));
        placements.push((id, loc));
    }
    Network::from_placements(cfg.side, range, &placements)
}

/// Bearing of `to - from`, in `(-pi, pi]`.
pub fn direction(from: Location, to: Location) -> Result<f64, NetError> {
    if from.coincides(&to) {
        return Err(NetError::CoincidentPoints);
    }
    Ok(wrap_angle((to.y - from.y).atan2(to.x - from.x)))
}

/// `a - b` wrapped into `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

fn wrap_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RouteOutcome {
    Delivered,
    /// Stuck at a local minimum: no neighbor is strictly closer to the target.
    VoidRegion,
    /// No path exists (shortest-path transport only).
    Unreachable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoRoute {
    /// Physical nodes visited, starting with the source.
    pub path: Vec<usize>,
    pub outcome: RouteOutcome,
}

impl GeoRoute {
    pub fn hops(&self) -> usize {
        self.path.len() - 1
    }

    pub fn delivered(&self) -> bool {
        self.outcome == RouteOutcome::Delivered
    }

    pub fn last(&self) -> usize {
        *self.path.last().expect("route path is never empty")
    }
}

/// Greedy geographic forwarding toward `dst_loc`: each hop goes to the
/// neighbor strictly closest to the target (lowest index on ties).
pub fn greedy_geo_route(
    net: &Network,
    src: usize,
    dst_loc: Location,
) -> Result<GeoRoute, NetError> {
    net.get(src)?;
    let mut path = vec![src];
    let mut current = src;
    loop {
        let here = net.nodes[current].location;
        if here.coincides(&dst_loc) {
            return Ok(GeoRoute {
                path,
                outcome: RouteOutcome::Delivered,
            });
        }
        let here_sq = here.distance_sq(&dst_loc);
        let mut best: Option<(f64, usize)> = None;
        for &j in &net.neighbors[current] {
            let d = net.nodes[j].location.distance_sq(&dst_loc);
            if d < here_sq && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, j));
            }
        }
        match best {
            Some((_, next)) => {
                path.push(next);
                current = next;
            }
            None => {
                return Ok(GeoRoute {
                    path,
                    outcome: RouteOutcome::VoidRegion,
                })
            }
        }
    }
}

/// Hop-count shortest paths over the radio graph, with one BFS per
/// destination computed on demand and kept. Serves as a loss-free reference
/// transport; it is not what the protocols use by default.
#[derive(Debug, Default)]
pub struct ShortestPaths {
    to: HashMap<usize, Vec<u32>>,
}

impl ShortestPaths {
    pub fn new() -> Self {
        Self::default()
    }

    fn distances(&mut self, net: &Network, dst: usize) -> &[u32] {
        self.to.entry(dst).or_insert_with(|| {
            let mut dist = vec![u32::MAX; net.len()];
            let mut queue = VecDeque::from([dst]);
            dist[dst] = 0;
            while let Some(u) = queue.pop_front() {
                for &v in net.neighbors(u) {
                    if dist[v] == u32::MAX {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            dist
        })
    }

    /// A shortest path from `src` to `dst`, stepping to the lowest-index
    /// neighbor one hop closer each time.
    pub fn route(&mut self, net: &Network, src: usize, dst: usize) -> Result<GeoRoute, NetError> {
        net.get(src)?;
        net.get(dst)?;
        let dist = self.distances(net, dst);
        if dist[src] == u32::MAX {
            return Ok(GeoRoute {
                path: vec![src],
                outcome: RouteOutcome::Unreachable,
            });
        }
        let mut path = vec![src];
        let mut at = src;
        while at != dst {
            at = *net
                .neighbors(at)
                .iter()
                .find(|&&v| dist[v] + 1 == dist[at])
                .expect("BFS distances are consistent");
            path.push(at);
        }
        Ok(GeoRoute {
            path,
            outcome: RouteOutcome::Delivered,
        })
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn shortest_paths_never_beat_by_greedy() {
        let net = deploy_network(&DeploymentConfig::with_degree(300, 1000.0, 10.0, 4)).unwrap();
        let mut sp = ShortestPaths::new();
        for (a, b) in [(0usize, 1usize), (5, 200), (17, 299), (42, 42)] {
            let greedy = greedy_geo_route(&net, a, net.node(b).location).unwrap();
            let short = sp.route(&net, a, b).unwrap();
            if greedy.delivered() {
                assert!(short.delivered());
                assert!(short.hops() <= greedy.hops());
            }
            if short.delivered() {
                assert_eq!(short.last(), b);
                for w in short.path.windows(2) {
                    assert!(net.neighbors(w[0]).contains(&w[1]));
                }
            }
        }
    }

    use super::*;

    fn line_of_three() -> Network {
        Network::from_placements(
            10.0,
            1.0,
            &[
                (NodeId(1), Location::new(0.0, 0.0)),
                (NodeId(2), Location::new(1.0, 0.0)),
                (NodeId(3), Location::new(2.0, 0.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn two_nodes_within_range_are_adjacent() {
        let net = deploy_network(&DeploymentConfig::with_range(2, 1.0, 2.0, 7)).unwrap();
        assert_eq!(net.neighbors(0), &[1]);
        assert_eq!(net.neighbors(1), &[0]);
    }

    #[test]
    fn rejects_single_node_and_bad_range() {
        assert_eq!(
            deploy_network(&DeploymentConfig::with_range(1, 1.0, 2.0, 7)),
            Err(NetError::TooFewNodes(1))
        );
        assert_eq!(
            deploy_network(&DeploymentConfig::with_range(5, 1.0, 0.0, 7)),
            Err(NetError::InvalidRange)
        );
        assert_eq!(
            deploy_network(&DeploymentConfig::with_degree(5, 1.0, 0.5, 7)),
            Err(NetError::InvalidRange)
        );
    }

    #[test]
    fn deployment_is_deterministic() {
        let cfg = DeploymentConfig::with_degree(300, 1000.0, 10.0, 42);
        assert_eq!(deploy_network(&cfg).unwrap(), deploy_network(&cfg).unwrap());
        let other = DeploymentConfig { seed: 43, ..cfg };
        assert_ne!(deploy_network(&other).unwrap().nodes()[0].location, {
            deploy_network(&DeploymentConfig::with_degree(300, 1000.0, 10.0, 42))
                .unwrap()
                .nodes()[0]
                .location
        });
    }

    #[test]
    fn target_degree_sets_range() {
        let cfg = DeploymentConfig::with_degree(1000, 1000.0, 10.0, 1);
        let r = cfg.effective_range().unwrap();
        assert!((r - 1000.0 * (10.0 / (PI * 1000.0)).sqrt()).abs() < 1e-12);
        assert!((cfg.expected_degree().unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn bearings() {
        let o = Location::new(0.0, 0.0);
        assert_eq!(direction(o, Location::new(1.0, 0.0)).unwrap(), 0.0);
        assert!((direction(o, Location::new(0.0, 1.0)).unwrap() - PI / 2.0).abs() < 1e-15);
        assert_eq!(direction(o, Location::new(-1.0, 0.0)).unwrap(), PI);
        assert_eq!(direction(o, Location::new(-1.0, -0.0)).unwrap(), PI);
        assert_eq!(direction(o, o), Err(NetError::CoincidentPoints));
        assert!((angle_diff(PI - 0.1, -PI + 0.1) + 0.2).abs() < 1e-12);
        assert!((angle_diff(-PI + 0.1, PI - 0.1) - 0.2).abs() < 1e-12);
        assert_eq!(angle_diff(PI, -PI), 0.0);
    }

    #[test]
    fn route_to_self_is_empty() {
        let net = line_of_three();
        let route = greedy_geo_route(&net, 1, Location::new(1.0, 0.0)).unwrap();
        assert_eq!(route.path, vec![1]);
        assert_eq!(route.hops(), 0);
        assert!(route.delivered());
    }

    #[test]
    fn forced_chain() {
        let net = line_of_three();
        let route = greedy_geo_route(&net, 0, Location::new(2.0, 0.0)).unwrap();
        assert_eq!(route.path, vec![0, 1, 2]);
        assert!(route.delivered());
    }

    #[test]
    fn local_minimum_is_void_region() {
        // 0 -- 1 and 2 far away: route from 0 toward 2 stalls at 1.
        let net = Network::from_placements(
            10.0,
            1.0,
            &[
                (NodeId(1), Location::new(0.0, 0.0)),
                (NodeId(2), Location::new(1.0, 0.0)),
                (NodeId(3), Location::new(5.0, 0.0)),
            ],
        )
        .unwrap();
        let route = greedy_geo_route(&net, 0, Location::new(5.0, 0.0)).unwrap();
        assert_eq!(route.path, vec![0, 1]);
        assert_eq!(route.outcome, RouteOutcome::VoidRegion);
        assert_eq!(
            greedy_geo_route(&net, 9, Location::new(5.0, 0.0)),
            Err(NetError::UnknownNode(9))
        );
    }

    #[test]
    fn placements_outside_region_rejected() {
        let err = Network::from_placements(1.0, 0.5, &[(NodeId(1), Location::new(1.5, 0.0))]);
        assert!(matches!(err, Err(NetError::OutsideRegion { .. })));
    }

    #[test]
    fn neighbor_list_carries_true_locations() {
        let net = line_of_three();
        assert_eq!(
            net.neighbor_list(1),
            vec![
                (NodeId(1), Location::new(0.0, 0.0)),
                (NodeId(3), Location::new(2.0, 0.0))
            ]
        );
    }
}
