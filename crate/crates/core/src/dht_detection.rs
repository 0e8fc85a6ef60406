//! DHT-based clone detection.
//!
//! A round runs in three stages: the initiator floods a signed action message,
//! every observer emits signed claims about its neighbors, and each claim is
//! routed through the Chord overlay to the owner of `H(seed || examinee)`.
//! The owner and any of its `g` predecessors that the claim passes through
//! inspect it against their cache table. Two claims placing one examinee at
//! different locations make the inspector a witness.
//!
//! Each overlay hop is carried physically by greedy geographic forwarding,
//! and every physical transmission is charged to the sender.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::adversary::{apply_behavior, Action, MessageContext};
use crate::chord_overlay::{Overlay, OverlayHop};
use crate::evidence::{flood_evidence, Evidence};
use crate::identity::{detection_key, verify, CanonicalEncoder, RingPoint, Signature, SigningKey};
use crate::net_model::{
    greedy_geo_route, Location, Network, NodeId, ShortestPaths, LOCATION_EPSILON,
};
use crate::report::{ClaimOutcome, ClaimTrace, DhtStats, Protocol, RoundReport};

/// Default successor-list size.
pub const DEFAULT_SUCCESSORS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum DhtError {
    #[error("claiming probability must lie in (0, 1], got {0}")]
    InvalidClaimProbability(f64),
    #[error("forced claim count must be at least 1")]
    ZeroForcedClaims,
    #[error("network has no honest node to act as initiator")]
    NoInitiator,
}

// ---------------------------------------------------------------------------
// Round activation

/// `M_ACT`: nonce, seed and action time, signed by the initiator.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionMessage {
    pub nonce: u64,
    pub seed: u64,
    pub time: u64,
    pub sig: Signature,
}

impl ActionMessage {
    pub fn signing_bytes(nonce: u64, seed: u64, time: u64) -> Vec<u8> {
        let mut enc = CanonicalEncoder::new();
        enc.put_u64(nonce).put_u64(seed).put_u64(time);
        enc.into_bytes()
    }

    pub fn verify(&self, initiator: NodeId) -> bool {
        verify(
            &Self::signing_bytes(self.nonce, self.seed, self.time),
            &self.sig,
            initiator,
        )
    }
}

pub fn make_action_message(
    initiator: &SigningKey,
    nonce: u64,
    seed: u64,
    time: u64,
) -> ActionMessage {
    ActionMessage {
        nonce,
        seed,
        time,
        sig: initiator.sign(&ActionMessage::signing_bytes(nonce, seed, time)),
    }
}

/// What a node remembers between rounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeRoundState {
    pub initiator: NodeId,
    pub nonce: u64,
    pub seed: Option<u64>,
}

impl NodeRoundState {
    pub fn new(initiator: NodeId) -> Self {
        NodeRoundState {
            initiator,
            nonce: 0,
            seed: None,
        }
    }
}

/// Accepts iff the initiator's signature verifies and the nonce is fresh.
/// Acceptance stores the nonce and seed.
pub fn validate_action(state: &mut NodeRoundState, msg: &ActionMessage) -> bool {
    if msg.nonce <= state.nonce || !msg.verify(state.initiator) {
        return false;
    }
    state.nonce = msg.nonce;
    state.seed = Some(msg.seed);
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub initiator: usize,
    pub accepted: Vec<bool>,
    /// Action-message flood transmissions.
    pub messages: usize,
}

/// The honest node nearest to the centre of the region.
pub fn choose_initiator(net: &Network) -> Result<usize, DhtError> {
    let centre = Location::new(net.side() / 2.0, net.side() / 2.0);
    net.nodes()
        .iter()
        .filter(|n| n.behavior.is_honest())
        .min_by(|a, b| {
            a.location
                .distance(&centre)
                .total_cmp(&b.location.distance(&centre))
                .then(a.index.cmp(&b.index))
        })
        .map(|n| n.index)
        .ok_or(DhtError::NoInitiator)
}

/// Floods `msg` from the initiator. Each node validates once and, on
/// acceptance, rebroadcasts once. Activation is not subject to adversarial
/// interference.
pub fn activate_round(net: &Network, initiator: usize, msg: &ActionMessage) -> Activation {
    let initiator_id = net.node(initiator).identity;
    let mut states: Vec<NodeRoundState> = (0..net.len())
        .map(|_| NodeRoundState::new(initiator_id))
        .collect();
    let mut accepted = vec![false; net.len()];
    let mut heard = vec![false; net.len()];
    let mut queue = VecDeque::new();
    let mut messages = 0;
    heard[initiator] = true;
    if validate_action(&mut states[initiator], msg) {
        accepted[initiator] = true;
        queue.push_back(initiator);
    }
    while let Some(u) = queue.pop_front() {
        messages += 1;
        for &v in net.neighbors(u) {
            if heard[v] {
                continue;
            }
            heard[v] = true;
            if validate_action(&mut states[v], msg) {
                accepted[v] = true;
                queue.push_back(v);
            }
        }
    }
    Activation {
        initiator,
        accepted,
        messages,
    }
}

// ---------------------------------------------------------------------------
// Claims and inspection

/// `M_ab`: observer `a` vouches that examinee `b` sits at `examinee_loc`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimDht {
    pub examinee: NodeId,
    pub examinee_loc: Location,
    pub observer: NodeId,
    pub observer_loc: Location,
    pub nonce: u64,
    pub sig: Signature,
}

impl ClaimDht {
    /// `examinee || examinee_loc || observer || observer_loc || nonce`.
    pub fn signing_bytes(
        examinee: NodeId,
        examinee_loc: Location,
        observer: NodeId,
        observer_loc: Location,
        nonce: u64,
    ) -> Vec<u8> {
        let mut enc = CanonicalEncoder::new();
        enc.put_id(examinee)
            .put_location(examinee_loc)
            .put_id(observer)
            .put_location(observer_loc)
            .put_u64(nonce);
        enc.into_bytes()
    }

    pub fn new_signed(
        key: &SigningKey,
        observer_loc: Location,
        examinee: NodeId,
        examinee_loc: Location,
        nonce: u64,
    ) -> Self {
        let observer = key.identity();
        let sig = key.sign(&Self::signing_bytes(
            examinee,
            examinee_loc,
            observer,
            observer_loc,
            nonce,
        ));
        ClaimDht {
            examinee,
            examinee_loc,
            observer,
            observer_loc,
            nonce,
            sig,
        }
    }

    pub fn verify(&self) -> bool {
        verify(
            &Self::signing_bytes(
                self.examinee,
                self.examinee_loc,
                self.observer,
                self.observer_loc,
                self.nonce,
            ),
            &self.sig,
            self.observer,
        )
    }

    /// Adversarial payload modification.
    pub fn tamper(&mut self) {
        self.examinee_loc.x += 1.0;
    }
}

/// One examinee's record in an inspector's cache table.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub examinee_loc: Location,
    pub observer: NodeId,
    pub nonce: u64,
    claim: ClaimDht,
}

impl CacheEntry {
    pub fn claim(&self) -> &ClaimDht {
        &self.claim
    }
}

/// Records keyed by examinee: at most one per examinee. Cleared every round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CacheTable {
    entries: BTreeMap<NodeId, CacheEntry>,
}

impl CacheTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, examinee: NodeId) -> Option<&CacheEntry> {
        self.entries.get(&examinee)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Inspection {
    /// Signature did not verify; the claim is dropped silently.
    Discarded,
    Buffered,
    Duplicate,
    CloneFound(Evidence),
}

pub fn inspect(cache: &mut CacheTable, claim: &ClaimDht, witness: NodeId) -> Inspection {
    if !claim.verify() {
        return Inspection::Discarded;
    }
    match cache.entries.get(&claim.examinee) {
        None => {
            cache.entries.insert(
                claim.examinee,
                CacheEntry {
                    examinee_loc: claim.examinee_loc,
                    observer: claim.observer,
                    nonce: claim.nonce,
                    claim: claim.clone(),
                },
            );
            Inspection::Buffered
        }
        Some(entry) if entry.examinee_loc.distance(&claim.examinee_loc) <= LOCATION_EPSILON => {
            Inspection::Duplicate
        }
        Some(entry) => Inspection::CloneFound(Evidence::Dht {
            stored: entry.claim.clone(),
            incoming: claim.clone(),
            witness,
        }),
    }
}

/// How many claims each examinee receives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ClaimPlan {
    /// Every observer claims each neighbor independently with probability `p_c`.
    Probabilistic,
    /// Every physical node is claimed about exactly `m` times, by the `m`
    /// nearest claim-emitting nodes not sharing its identity.
    Exact(usize),
}

/// Physical carrier for each overlay hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Transport {
    /// Greedy geographic forwarding; a local minimum loses the claim.
    Greedy,
    /// Hop-count shortest path. Loss-free reference for isolating transport
    /// loss from protocol behavior.
    ShortestPath,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DhtRoundConfig {
    pub p_c: f64,
    pub g: usize,
    pub bits: u32,
    pub seed: u64,
    pub nonce: u64,
    pub plan: ClaimPlan,
    pub transport: Transport,
}

impl Default for DhtRoundConfig {
    fn default() -> Self {
        DhtRoundConfig {
            p_c: 1.0,
            g: DEFAULT_SUCCESSORS,
            bits: crate::identity::DEFAULT_RING_BITS,
            seed: 0,
            nonce: 1,
            plan: ClaimPlan::Probabilistic,
            transport: Transport::Greedy,
        }
    }
}

impl DhtRoundConfig {
    pub fn validate(&self) -> Result<(), DhtError> {
        if !(self.p_c > 0.0 && self.p_c <= 1.0) {
            return Err(DhtError::InvalidClaimProbability(self.p_c));
        }
        if self.plan == ClaimPlan::Exact(0) {
            return Err(DhtError::ZeroForcedClaims);
        }
        Ok(())
    }
}

/// Claims by `observer` about each radio neighbor, each emitted with
/// probability `p_c`. Nodes that do not emit claims return nothing.
pub fn make_claims_dht<R: Rng>(
    net: &Network,
    observer: usize,
    cfg: &DhtRoundConfig,
    rng: &mut R,
) -> Vec<ClaimDht> {
    let node = net.node(observer);
    if !node.behavior.emits_claims() {
        return Vec::new();
    }
    let key = SigningKey::issue(node.identity);
    let mut claims = Vec::new();
    for &j in net.neighbors(observer) {
        if rng.gen_bool(cfg.p_c) {
            let examinee = net.node(j);
            claims.push(ClaimDht::new_signed(
                &key,
                node.location,
                examinee.identity,
                examinee.location,
                cfg.nonce,
            ));
        }
    }
    claims
}

/// Observers for [`ClaimPlan::Exact`]: the `m` nearest emitting nodes that do
/// not carry the examinee's identity.
fn forced_observers(net: &Network, examinee: usize, m: usize) -> Vec<usize> {
    let target = net.node(examinee);
    let mut candidates: Vec<(f64, usize)> = net
        .nodes()
        .iter()
        .filter(|n| n.identity != target.identity && n.behavior.emits_claims())
        .map(|n| (n.location.distance(&target.location), n.index))
        .collect();
    let m = m.min(candidates.len());
    if m < candidates.len() {
        candidates.select_nth_unstable_by(m, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        candidates.truncate(m);
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    candidates.into_iter().map(|(_, i)| i).collect()
}

// ---------------------------------------------------------------------------
// Routing

#[derive(Debug, Clone)]
struct InFlight {
    claim: ClaimDht,
    key: RingPoint,
    at: usize,
    trace: usize,
    at_origin: bool,
}

/// Mutable state of one DHT round.
struct DhtRound<'a> {
    net: &'a Network,
    overlay: &'a Overlay,
    transport: Transport,
    paths: ShortestPaths,
    caches: Vec<CacheTable>,
    messages_sent: Vec<u64>,
    traces: Vec<ClaimTrace>,
    evidence: Vec<(usize, Evidence)>,
    witnessed: BTreeSet<(NodeId, usize)>,
    transport_failures: usize,
    dropped: usize,
}

impl<'a> DhtRound<'a> {
    fn new(net: &'a Network, overlay: &'a Overlay, transport: Transport) -> Self {
        DhtRound {
            net,
            overlay,
            transport,
            paths: ShortestPaths::new(),
            caches: vec![CacheTable::default(); net.len()],
            messages_sent: vec![0; net.len()],
            traces: Vec::new(),
            evidence: Vec::new(),
            witnessed: BTreeSet::new(),
            transport_failures: 0,
            dropped: 0,
        }
    }

    fn launch(&mut self, observer: usize, claim: ClaimDht, seed: u64) -> InFlight {
        let key = detection_key(seed, claim.examinee, self.overlay.space());
        self.traces.push(ClaimTrace {
            examinee: claim.examinee,
            observer,
            key,
            overlay_hops: 0,
            physical_hops: 0,
            inspectors: Vec::new(),
            destination: None,
            outcome: ClaimOutcome::Delivered,
        });
        InFlight {
            claim,
            key,
            at: observer,
            trace: self.traces.len() - 1,
            at_origin: true,
        }
    }

    fn finish(&mut self, trace: usize, outcome: ClaimOutcome) -> Option<InFlight> {
        self.traces[trace].outcome = outcome;
        match outcome {
            ClaimOutcome::Dropped | ClaimOutcome::Stranded => self.dropped += 1,
            ClaimOutcome::TransportFailure => self.transport_failures += 1,
            ClaimOutcome::Delivered => {}
        }
        None
    }

    /// Processes the claim at its current node: one overlay decision, then
    /// the physical transport of that hop.
    fn advance(&mut self, mut msg: InFlight) -> Option<InFlight> {
        let node = self.net.node(msg.at);
        let hop = match self.overlay.next_hop(node.identity, msg.key) {
            Ok(hop) => hop,
            Err(_) => return self.finish(msg.trace, ClaimOutcome::Stranded),
        };
        let action = if msg.at_origin {
            Action::Forward
        } else {
            let ctx = match hop {
                OverlayHop::Destination => MessageContext::Inspect,
                _ => MessageContext::Relay,
            };
            apply_behavior(node.behavior, ctx)
        };
        match action {
            Action::Drop => return self.finish(msg.trace, ClaimOutcome::Dropped),
            Action::Modify => msg.claim.tamper(),
            Action::Forward => {
                let inspects =
                    matches!(hop, OverlayHop::Destination | OverlayHop::PreDestination(_));
                if inspects && node.behavior.is_honest() {
                    self.traces[msg.trace].inspectors.push(msg.at);
                    let outcome = inspect(&mut self.caches[msg.at], &msg.claim, node.identity);
                    if let Inspection::CloneFound(ev) = outcome {
                        if self.witnessed.insert((ev.cloned_identity(), msg.at)) {
                            self.evidence.push((msg.at, ev));
                        }
                    }
                }
            }
        }

        let next = match hop {
            OverlayHop::Destination => {
                self.traces[msg.trace].destination = Some(node.identity);
                return self.finish(msg.trace, ClaimOutcome::Delivered);
            }
            OverlayHop::PreDestination(next) | OverlayHop::Next(next) => next,
        };
        let limit = self.overlay.finger_count() + self.overlay.g() + 2;
        if self.traces[msg.trace].overlay_hops >= limit {
            log::error!("claim for key {} exceeded {limit} overlay hops", msg.key);
            return self.finish(msg.trace, ClaimOutcome::Stranded);
        }
        let target = match self.net.nearest_replica(next, node.location) {
            Some(t) => t,
            None => return self.finish(msg.trace, ClaimOutcome::Stranded),
        };
        let route = match self.transport {
            Transport::Greedy => greedy_geo_route(self.net, msg.at, self.net.node(target).location),
            Transport::ShortestPath => self.paths.route(self.net, msg.at, target),
        }
        .expect("current node index is valid");
        for &sender in &route.path[..route.path.len() - 1] {
            self.messages_sent[sender] += 1;
        }
        let trace = &mut self.traces[msg.trace];
        trace.overlay_hops += 1;
        trace.physical_hops += route.hops();
        if !route.delivered() {
            return self.finish(msg.trace, ClaimOutcome::TransportFailure);
        }
        msg.at = route.last();
        msg.at_origin = false;
        Some(msg)
    }

    /// Runs every launched claim to completion, one overlay hop per step,
    /// processing each step in creation order.
    fn run(&mut self, mut frontier: Vec<InFlight>) {
        while !frontier.is_empty() {
            let mut next = Vec::with_capacity(frontier.len());
            for msg in frontier {
                if let Some(m) = self.advance(msg) {
                    next.push(m);
                }
            }
            frontier = next;
        }
    }
}

/// Routes a single claim from `observer` through an otherwise idle network.
pub fn route_claim(
    net: &Network,
    overlay: &Overlay,
    observer: usize,
    claim: ClaimDht,
    seed: u64,
) -> ClaimTrace {
    let mut round = DhtRound::new(net, overlay, Transport::Greedy);
    let first = round.launch(observer, claim, seed);
    round.run(vec![first]);
    round.traces.pop().expect("one claim was launched")
}

/// Full detection round: activation, claiming, routing with inspection, then
/// evidence flooding.
pub fn run_dht_round<R: Rng>(
    net: &Network,
    overlay: &Overlay,
    cfg: &DhtRoundConfig,
    rng: &mut R,
) -> Result<RoundReport, DhtError> {
    cfg.validate()?;
    let initiator = choose_initiator(net)?;
    let action = make_action_message(
        &SigningKey::issue(net.node(initiator).identity),
        cfg.nonce,
        cfg.seed,
        cfg.nonce,
    );
    let activation = activate_round(net, initiator, &action);

    let mut round = DhtRound::new(net, overlay, cfg.transport);
    let mut frontier = Vec::new();
    match cfg.plan {
        ClaimPlan::Probabilistic => {
            for observer in 0..net.len() {
                if !activation.accepted[observer] {
                    continue;
                }
                for claim in make_claims_dht(net, observer, cfg, rng) {
                    frontier.push(round.launch(observer, claim, action.seed));
                }
            }
        }
        ClaimPlan::Exact(m) => {
            for examinee in 0..net.len() {
                let target = net.node(examinee);
                for observer in forced_observers(net, examinee, m) {
                    if !activation.accepted[observer] {
                        continue;
                    }
                    let obs = net.node(observer);
                    let claim = ClaimDht::new_signed(
                        &SigningKey::issue(obs.identity),
                        obs.location,
                        target.identity,
                        target.location,
                        cfg.nonce,
                    );
                    frontier.push(round.launch(observer, claim, action.seed));
                }
            }
        }
    }
    round.run(frontier);

    let mut report = RoundReport::empty(Protocol::Dht, net.len());
    report.action_messages = activation.messages;
    finish_evidence(net, &mut report, std::mem::take(&mut round.evidence));
    report.messages_sent = round.messages_sent;
    report.storage = round.caches.iter().map(CacheTable::len).collect();
    report.transport_failures = round.transport_failures;
    report.claims_dropped = round.dropped;
    report.dht = Some(DhtStats {
        traces: round.traces,
        finger_count: overlay.finger_count(),
        g: overlay.g(),
        ring_size: overlay.len(),
    });
    Ok(report)
}

/// Records witnesses and floods each accused identity's evidence.
pub(crate) fn finish_evidence(
    net: &Network,
    report: &mut RoundReport,
    evidence: Vec<(usize, Evidence)>,
) {
    let mut by_identity: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    for (k, (witness, ev)) in evidence.iter().enumerate() {
        report
            .witnesses
            .entry(ev.cloned_identity())
            .or_default()
            .insert(*witness);
        by_identity.entry(ev.cloned_identity()).or_default().push(k);
    }
    for (id, ks) in by_identity {
        let mut origins: Vec<(usize, &Evidence)> = ks
            .iter()
            .map(|&k| (evidence[k].0, &evidence[k].1))
            .collect();
        origins.sort_by_key(|(w, _)| *w);
        let flood = flood_evidence(net, &origins);
        report.evidence_messages += flood.messages;
        report.revocations.insert(id, flood.revoked.len());
    }
    report.evidence = evidence;
}
