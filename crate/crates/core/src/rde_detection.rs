//! Randomly directed exploration.
//!
//! Every observer signs its neighbor list and sends it down `r` lines, each
//! starting at a random neighbor. Receivers compare the carried list with
//! their own, then pass the message on roughly straight ahead until its ttl
//! runs out or no neighbor lies in the forward target zone (a border).
//! Intermediate nodes keep nothing but their own list and the identities they
//! have already reported.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::adversary::{apply_behavior, Action, MessageContext};
use crate::dht_detection::{
    activate_round, choose_initiator, finish_evidence, make_action_message, DhtError,
};
use crate::evidence::Evidence;
use crate::identity::{verify, CanonicalEncoder, Signature, SigningKey};
use crate::net_model::{angle_diff, direction, Location, Network, NodeId, LOCATION_EPSILON};
use crate::report::{LineEnd, LineTrace, Protocol, RdeStats, ReplicaReach, RoundReport};

pub const DEFAULT_TARGET_HALF_ANGLE: f64 = PI / 2.0;
pub const DEFAULT_PRIORITY_HALF_ANGLE: f64 = PI / 6.0;

#[derive(Debug, Error, PartialEq)]
pub enum RdeError {
    #[error("zone angles must satisfy 0 < theta_p < theta_t <= pi, got theta_p={priority} theta_t={target}")]
    InvalidZones { target: f64, priority: f64 },
    #[error("ttl must be at least 1")]
    ZeroTtl,
    #[error("claims per observer must be at least 1")]
    ZeroClaims,
    #[error(transparent)]
    Activation(#[from] DhtError),
}

/// `(id, location)` pairs sorted by id, one entry per id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborList {
    entries: Vec<(NodeId, Location)>,
}

impl NeighborList {
    /// Sorts by id. When an id appears twice (two replicas in range) the
    /// entry nearest to `own` is kept.
    pub fn from_entries(own: Location, mut entries: Vec<(NodeId, Location)>) -> Self {
        entries.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then(a.1.distance(&own).total_cmp(&b.1.distance(&own)))
        });
        entries.dedup_by_key(|e| e.0);
        NeighborList { entries }
    }

    pub fn of_node(net: &Network, index: usize) -> Self {
        Self::from_entries(net.node(index).location, net.neighbor_list(index))
    }

    pub fn entries(&self) -> &[(NodeId, Location)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: NodeId) -> Option<Location> {
        self.entries
            .binary_search_by_key(&id, |e| e.0)
            .ok()
            .map(|k| self.entries[k].1)
    }
}

/// `M_a`: an observer's signed location and neighbor list. Only `ttl` may
/// change in flight, so it is left out of the signature.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimRde {
    pub ttl: u32,
    pub observer: NodeId,
    pub observer_loc: Location,
    pub neighbors: NeighborList,
    pub nonce: u64,
    pub sig: Signature,
}

impl ClaimRde {
    pub fn signing_bytes(
        observer: NodeId,
        observer_loc: Location,
        neighbors: &NeighborList,
        nonce: u64,
    ) -> Vec<u8> {
        let mut enc = CanonicalEncoder::new();
        enc.put_id(observer)
            .put_location(observer_loc)
            .put_len(neighbors.len());
        for &(id, loc) in neighbors.entries() {
            enc.put_id(id).put_location(loc);
        }
        enc.put_u64(nonce);
        enc.into_bytes()
    }

    pub fn new_signed(
        key: &SigningKey,
        observer_loc: Location,
        neighbors: NeighborList,
        nonce: u64,
        ttl: u32,
    ) -> Self {
        let observer = key.identity();
        let sig = key.sign(&Self::signing_bytes(
            observer,
            observer_loc,
            &neighbors,
            nonce,
        ));
        ClaimRde {
            ttl,
            observer,
            observer_loc,
            neighbors,
            nonce,
            sig,
        }
    }

    pub fn for_node(net: &Network, index: usize, nonce: u64, ttl: u32) -> Self {
        let node = net.node(index);
        Self::new_signed(
            &SigningKey::issue(node.identity),
            node.location,
            NeighborList::of_node(net, index),
            nonce,
            ttl,
        )
    }

    /// Where this claim places `id`: the observer itself or a listed neighbor.
    pub fn view(&self, id: NodeId) -> Option<Location> {
        if id == self.observer {
            Some(self.observer_loc)
        } else {
            self.neighbors.get(id)
        }
    }

    pub fn verify(&self) -> bool {
        verify(
            &Self::signing_bytes(
                self.observer,
                self.observer_loc,
                &self.neighbors,
                self.nonce,
            ),
            &self.sig,
            self.observer,
        )
    }

    pub fn tamper(&mut self) {
        self.observer_loc.x += 1.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZoneConfig {
    pub target_half_angle: f64,
    pub priority_half_angle: f64,
    pub ttl: u32,
    pub claims_per_observer: usize,
}

impl ZoneConfig {
    /// Default zones, `ttl = ceil(sqrt(n))` and one claim per observer.
    pub fn for_nodes(n: usize) -> Self {
        ZoneConfig {
            target_half_angle: DEFAULT_TARGET_HALF_ANGLE,
            priority_half_angle: DEFAULT_PRIORITY_HALF_ANGLE,
            ttl: default_ttl(n),
            claims_per_observer: 1,
        }
    }

    pub fn validate(&self) -> Result<(), RdeError> {
        let (t, p) = (self.target_half_angle, self.priority_half_angle);
        if !(p > 0.0 && p < t && t <= PI) {
            return Err(RdeError::InvalidZones {
                target: t,
                priority: p,
            });
        }
        if self.ttl == 0 {
            return Err(RdeError::ZeroTtl);
        }
        if self.claims_per_observer == 0 {
            return Err(RdeError::ZeroClaims);
        }
        Ok(())
    }
}

pub fn default_ttl(n: usize) -> u32 {
    let mut t = (n as f64).sqrt().ceil() as u32;
    // Guard against float rounding on perfect squares.
    while (t as u64).pow(2) < n as u64 {
        t += 1;
    }
    while t > 1 && ((t - 1) as u64).pow(2) >= n as u64 {
        t -= 1;
    }
    t.max(1)
}

/// `r` copies of the observer's claim, each addressed to a uniformly drawn
/// neighbor. Isolated observers send nothing.
pub fn make_claims_rde<R: Rng>(
    net: &Network,
    observer: usize,
    zone: &ZoneConfig,
    nonce: u64,
    rng: &mut R,
) -> Vec<(ClaimRde, usize)> {
    let neighbors = net.neighbors(observer);
    if neighbors.is_empty() {
        return Vec::new();
    }
    let claim = ClaimRde::for_node(net, observer, nonce, zone.ttl);
    (0..zone.claims_per_observer)
        .map(|_| (claim.clone(), neighbors[rng.gen_range(0..neighbors.len())]))
        .collect()
}

/// Identities placed by both `mine` and `msg` at locations more than `eps`
/// apart, ascending.
pub fn conflicting_identities(mine: &ClaimRde, msg: &ClaimRde, eps: f64) -> Vec<NodeId> {
    let mut ids: BTreeSet<NodeId> = msg.neighbors.entries().iter().map(|e| e.0).collect();
    ids.insert(msg.observer);
    ids.into_iter()
        .filter(|&id| match (mine.view(id), msg.view(id)) {
            (Some(a), Some(b)) => a.distance(&b) > eps,
            _ => false,
        })
        .collect()
}

/// One evidence per conflicting identity.
pub fn compare_neighbor_lists(mine: &ClaimRde, msg: &ClaimRde, eps: f64) -> Vec<Evidence> {
    conflicting_identities(mine, msg, eps)
        .into_iter()
        .map(|cloned| Evidence::Rde {
            message: msg.clone(),
            witness_claim: mine.clone(),
            cloned,
        })
        .collect()
}

/// Next hop for a message that reached `current` from `previous`, or `None`
/// at a border.
pub fn get_next_node<R: Rng>(
    net: &Network,
    previous: usize,
    current: usize,
    zone: &ZoneConfig,
    rng: &mut R,
) -> Option<usize> {
    let here = net.node(current).location;
    let ideal = direction(net.node(previous).location, here).ok()?;
    let mut target: Vec<(usize, f64)> = Vec::new();
    for &j in net.neighbors(current) {
        if j == previous {
            continue;
        }
        let Ok(bearing) = direction(here, net.node(j).location) else {
            continue;
        };
        let delta = angle_diff(bearing, ideal).abs();
        if delta <= zone.target_half_angle {
            target.push((j, delta));
        }
    }
    if target.is_empty() {
        return None;
    }
    let priority: Vec<(usize, f64)> = target
        .iter()
        .filter(|c| c.1 <= zone.priority_half_angle)
        .map(|&(j, d)| (j, zone.priority_half_angle - d))
        .collect();
    if let Ok(dist) = WeightedIndex::new(priority.iter().map(|c| c.1)) {
        return Some(priority[dist.sample(rng)].0);
    }
    target
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|c| c.0)
}

/// What a node holds during a round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RdeNodeState {
    /// Own signed neighbor-list claim; `None` for nodes that do not inspect.
    pub own_claim: Option<ClaimRde>,
    /// Identities this node has already produced evidence against.
    pub evidence_seen: BTreeSet<NodeId>,
}

impl RdeNodeState {
    pub fn neighbor_entries(&self) -> usize {
        self.own_claim.as_ref().map_or(0, |c| c.neighbors.len())
    }

    /// Protocol state entries held right now.
    pub fn entries(&self) -> usize {
        self.neighbor_entries() + self.evidence_seen.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RdeStep {
    Forward(usize),
    Discard(LineEnd),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdeDecision {
    /// Whether this node verified and compared the message.
    pub inspected: bool,
    /// Conflicts found, before evidence dedup.
    pub conflicts: Vec<NodeId>,
    /// New evidence to broadcast.
    pub evidence: Vec<Evidence>,
    pub step: RdeStep,
}

/// Handles `msg` arriving at `current` from `previous`: verify, compare,
/// decrement ttl, pick the next hop. Adversarial receivers act per their
/// behavior and never inspect.
pub fn rde_process_message<R: Rng>(
    net: &Network,
    state: &mut RdeNodeState,
    previous: usize,
    current: usize,
    msg: &mut ClaimRde,
    zone: &ZoneConfig,
    rng: &mut R,
) -> RdeDecision {
    let node = net.node(current);
    let mut decision = RdeDecision {
        inspected: false,
        conflicts: Vec::new(),
        evidence: Vec::new(),
        step: RdeStep::Discard(LineEnd::Dropped),
    };
    match apply_behavior(node.behavior, MessageContext::Relay) {
        Action::Drop => return decision,
        Action::Modify => msg.tamper(),
        Action::Forward => {}
    }
    if let (true, Some(mine)) = (node.behavior.is_honest(), &state.own_claim) {
        if !msg.verify() {
            decision.step = RdeStep::Discard(LineEnd::BadSignature);
            return decision;
        }
        decision.inspected = true;
        decision.conflicts = conflicting_identities(mine, msg, LOCATION_EPSILON);
        for ev in compare_neighbor_lists(mine, msg, LOCATION_EPSILON) {
            if state.evidence_seen.insert(ev.cloned_identity()) {
                decision.evidence.push(ev);
            }
        }
    }
    msg.ttl = msg.ttl.saturating_sub(1);
    decision.step = if msg.ttl == 0 {
        RdeStep::Discard(LineEnd::TtlExpired)
    } else {
        match get_next_node(net, previous, current, zone, rng) {
            Some(next) => RdeStep::Forward(next),
            None => RdeStep::Discard(LineEnd::Border),
        }
    };
    decision
}

struct Line {
    msg: ClaimRde,
    previous: usize,
    at: usize,
    trace: usize,
}

/// Full exploration round followed by the evidence flood.
pub fn run_rde_round<R: Rng>(
    net: &Network,
    zone: &ZoneConfig,
    nonce: u64,
    rng: &mut R,
) -> Result<RoundReport, RdeError> {
    zone.validate()?;
    let initiator = choose_initiator(net)?;
    let action = make_action_message(
        &SigningKey::issue(net.node(initiator).identity),
        nonce,
        rng.gen(),
        nonce,
    );
    let activation = activate_round(net, initiator, &action);

    let mut states: Vec<RdeNodeState> = (0..net.len())
        .map(|i| RdeNodeState {
            own_claim: (net.node(i).behavior.is_honest() && activation.accepted[i])
                .then(|| ClaimRde::for_node(net, i, nonce, zone.ttl)),
            evidence_seen: BTreeSet::new(),
        })
        .collect();
    let mut peak: Vec<usize> = states.iter().map(RdeNodeState::entries).collect();
    let mut messages_sent = vec![0u64; net.len()];
    let mut traces: Vec<LineTrace> = Vec::new();
    let mut evidence: Vec<(usize, Evidence)> = Vec::new();

    let mut frontier = Vec::new();
    for (observer, sent) in messages_sent.iter_mut().enumerate() {
        if !activation.accepted[observer] || !net.node(observer).behavior.emits_claims() {
            continue;
        }
        for (msg, first) in make_claims_rde(net, observer, zone, nonce, rng) {
            *sent += 1;
            traces.push(LineTrace {
                path: vec![observer, first],
                inspected: Vec::new(),
                end: LineEnd::TtlExpired,
                conflicts: Vec::new(),
                reach: 0,
            });
            frontier.push(Line {
                msg,
                previous: observer,
                at: first,
                trace: traces.len() - 1,
            });
        }
    }

    while !frontier.is_empty() {
        let mut next_frontier = Vec::with_capacity(frontier.len());
        for mut line in frontier {
            let d = rde_process_message(
                net,
                &mut states[line.at],
                line.previous,
                line.at,
                &mut line.msg,
                zone,
                rng,
            );
            peak[line.at] = peak[line.at].max(states[line.at].entries());
            let trace = &mut traces[line.trace];
            if d.inspected {
                trace.inspected.push(line.at);
            }
            for id in d.conflicts {
                if !trace.conflicts.contains(&id) {
                    trace.conflicts.push(id);
                }
            }
            evidence.extend(d.evidence.into_iter().map(|ev| (line.at, ev)));
            match d.step {
                RdeStep::Forward(next) => {
                    messages_sent[line.at] += 1;
                    trace.path.push(next);
                    line.previous = line.at;
                    line.at = next;
                    next_frontier.push(line);
                }
                RdeStep::Discard(end) => trace.end = end,
            }
        }
        frontier = next_frontier;
    }

    for trace in &mut traces {
        trace.reach = footprint(net, &trace.inspected).len();
    }
    let replicas = replica_reach(net, &traces);

    let mut report = RoundReport::empty(Protocol::Rde, net.len());
    report.action_messages = activation.messages;
    finish_evidence(net, &mut report, evidence);
    report.messages_sent = messages_sent;
    report.storage = (0..net.len())
        .map(|i| NeighborList::of_node(net, i).len())
        .collect();
    report.claims_dropped = traces
        .iter()
        .filter(|t| matches!(t.end, LineEnd::Dropped | LineEnd::BadSignature))
        .count();
    report.rde = Some(RdeStats {
        lines: traces,
        replicas,
        ttl: zone.ttl,
        neighbor_entries: states.iter().map(RdeNodeState::neighbor_entries).collect(),
        evidence_entries: states.iter().map(|s| s.evidence_seen.len()).collect(),
        peak_state_entries: peak,
    });
    Ok(report)
}

/// Inspectors plus every node within radio range of one.
fn footprint(net: &Network, inspectors: &[usize]) -> BTreeSet<usize> {
    let mut set = BTreeSet::new();
    for &i in inspectors {
        set.insert(i);
        set.extend(net.neighbors(i).iter().copied());
    }
    set
}

/// For each replica of each cloned identity: the lines whose claim places the
/// identity at that replica, the joint footprint of their inspectors, and
/// whether any of them exposed the identity.
fn replica_reach(net: &Network, traces: &[LineTrace]) -> Vec<ReplicaReach> {
    let cloned = net.cloned_identities();
    if cloned.is_empty() {
        return Vec::new();
    }
    // Lines grouped by the replica whose location their claim carries.
    let mut carried: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, t) in traces.iter().enumerate() {
        let observer = t.path[0];
        let list = NeighborList::of_node(net, observer);
        let observer_node = net.node(observer);
        for &id in &cloned {
            let loc = if id == observer_node.identity {
                Some(observer_node.location)
            } else {
                list.get(id)
            };
            let Some(loc) = loc else { continue };
            if let Some(&r) = net
                .replicas(id)
                .iter()
                .find(|&&r| net.node(r).location.coincides(&loc))
            {
                carried.entry(r).or_default().push(k);
            }
        }
    }
    let mut out = Vec::new();
    for &id in &cloned {
        for &replica in net.replicas(id) {
            let lines = carried.get(&replica).map(Vec::as_slice).unwrap_or(&[]);
            let inspectors: Vec<usize> = lines
                .iter()
                .flat_map(|&k| traces[k].inspected.iter().copied())
                .collect();
            out.push(ReplicaReach {
                identity: id,
                replica,
                lines: lines.len(),
                reach: footprint(net, &inspectors).len(),
                caught_twin: lines.iter().any(|&k| traces[k].conflicts.contains(&id)),
            });
        }
    }
    out
}
