//! Clone evidence and its network-wide flood.
//!
//! Evidence is self-certifying: it carries two validly signed statements that
//! place one identity at two distinct locations, so the witness does not sign
//! it and every receiver re-checks it independently.

use std::collections::{BTreeSet, VecDeque};

use crate::dht_detection::ClaimDht;
use crate::net_model::{Network, NodeId, LOCATION_EPSILON};
use crate::rde_detection::ClaimRde;

#[derive(Debug, Clone, PartialEq)]
pub enum Evidence {
    /// Two claiming messages about the same examinee with different locations.
    Dht {
        stored: ClaimDht,
        incoming: ClaimDht,
        witness: NodeId,
    },
    /// A traveling claim and the witness's own signed neighbor-list claim that
    /// disagree on where `cloned` is.
    Rde {
        message: ClaimRde,
        witness_claim: ClaimRde,
        cloned: NodeId,
    },
}

impl Evidence {
    /// The identity the evidence accuses.
    pub fn cloned_identity(&self) -> NodeId {
        match self {
            Evidence::Dht { stored, .. } => stored.examinee,
            Evidence::Rde { cloned, .. } => *cloned,
        }
    }

    pub fn witness(&self) -> NodeId {
        match self {
            Evidence::Dht { witness, .. } => *witness,
            Evidence::Rde { witness_claim, .. } => witness_claim.observer,
        }
    }

    /// Both signatures verify and the two statements really conflict.
    pub fn verify(&self) -> bool {
        match self {
            Evidence::Dht {
                stored, incoming, ..
            } => {
                stored.examinee == incoming.examinee
                    && stored.examinee_loc.distance(&incoming.examinee_loc) > LOCATION_EPSILON
                    && stored.verify()
                    && incoming.verify()
            }
            Evidence::Rde {
                message,
                witness_claim,
                cloned,
            } => {
                let conflict = match (message.view(*cloned), witness_claim.view(*cloned)) {
                    (Some(a), Some(b)) => a.distance(&b) > LOCATION_EPSILON,
                    _ => false,
                };
                conflict && message.verify() && witness_claim.verify()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevocationReport {
    pub identity: NodeId,
    /// Honest physical nodes that verified the evidence and revoked the identity.
    pub revoked: BTreeSet<usize>,
    /// Flood transmissions, at most one per physical node.
    pub messages: usize,
}

/// Floods `evidence` from a single witness.
pub fn broadcast_evidence(net: &Network, witness: usize, evidence: &Evidence) -> RevocationReport {
    flood_evidence(net, &[(witness, evidence)])
}

/// Multi-source flood with duplicate suppression. Every origin transmits
/// once; an honest receiver verifies what it hears, revokes the identity and
/// rebroadcasts once. Adversarial nodes neither accept nor relay. All
/// evidences must accuse the same identity.
pub fn flood_evidence(net: &Network, origins: &[(usize, &Evidence)]) -> RevocationReport {
    let identity = origins
        .first()
        .map(|(_, e)| e.cloned_identity())
        .expect("flood needs at least one origin");
    debug_assert!(origins.iter().all(|(_, e)| e.cloned_identity() == identity));

    let n = net.len();
    // Per node: which origin's evidence it holds, if any.
    let mut holding: Vec<Option<usize>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut revoked = BTreeSet::new();
    let mut queue = VecDeque::new();
    let mut messages = 0;

    let accepts = |i: usize| {
        let node = net.node(i);
        node.behavior.is_honest() && node.identity != identity
    };

    for (k, &(origin, evidence)) in origins.iter().enumerate() {
        if seen[origin] {
            continue;
        }
        seen[origin] = true;
        holding[origin] = Some(k);
        messages += 1;
        queue.push_back(origin);
        if accepts(origin) && evidence.verify() {
            revoked.insert(origin);
        }
    }

    while let Some(u) = queue.pop_front() {
        let evidence = origins[holding[u].expect("queued nodes hold evidence")].1;
        for &v in net.neighbors(u) {
            if seen[v] || !accepts(v) {
                continue;
            }
            seen[v] = true;
            if evidence.verify() {
                holding[v] = holding[u];
                revoked.insert(v);
                messages += 1;
                queue.push_back(v);
            }
        }
    }

    RevocationReport {
        identity,
        revoked,
        messages,
    }
}
