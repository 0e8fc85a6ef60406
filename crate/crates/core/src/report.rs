//! Per-round measurements shared by both protocols.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::evidence::Evidence;
use crate::identity::RingPoint;
use crate::net_model::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Protocol {
    Dht,
    Rde,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Dht => "dht",
            Protocol::Rde => "rde",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClaimOutcome {
    /// Reached the key's owner.
    Delivered,
    Dropped,
    TransportFailure,
    /// Routing reached a node with no overlay tables.
    Stranded,
}

/// Life of one DHT claiming message.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimTrace {
    pub examinee: NodeId,
    pub observer: usize,
    pub key: RingPoint,
    /// Overlay hops attempted (a hop that failed in transport still counts).
    pub overlay_hops: usize,
    pub physical_hops: usize,
    /// Physical nodes that ran inspection, in visiting order.
    pub inspectors: Vec<usize>,
    /// Identity at which the message settled, when delivered.
    pub destination: Option<NodeId>,
    pub outcome: ClaimOutcome,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DhtStats {
    pub traces: Vec<ClaimTrace>,
    /// `ceil(log2(ring size))`.
    pub finger_count: usize,
    pub g: usize,
    pub ring_size: usize,
}

impl DhtStats {
    pub fn claims(&self) -> usize {
        self.traces.len()
    }

    pub fn overlay_hops(&self) -> usize {
        self.traces.iter().map(|t| t.overlay_hops).sum()
    }

    pub fn physical_hops(&self) -> usize {
        self.traces.iter().map(|t| t.physical_hops).sum()
    }

    /// Inspections by the owner's predecessors (every inspector other than
    /// the final destination).
    pub fn predecessor_receipts(&self) -> usize {
        self.traces
            .iter()
            .map(|t| match t.outcome {
                ClaimOutcome::Delivered => t.inspectors.len().saturating_sub(1),
                _ => t.inspectors.len(),
            })
            .sum()
    }

    /// Empirical probability that a given predecessor of the owner receives a
    /// given claim.
    pub fn predecessor_receipt_probability(&self) -> f64 {
        if self.traces.is_empty() || self.g == 0 {
            return 0.0;
        }
        self.predecessor_receipts() as f64 / (self.traces.len() * self.g) as f64
    }

    /// Mean number of claims per distinct examinee identity.
    pub fn claims_per_examinee(&self) -> f64 {
        let examinees: BTreeSet<NodeId> = self.traces.iter().map(|t| t.examinee).collect();
        if examinees.is_empty() {
            0.0
        } else {
            self.traces.len() as f64 / examinees.len() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LineEnd {
    TtlExpired,
    /// No neighbor inside the target zone.
    Border,
    Dropped,
    BadSignature,
}

/// One exploration line of the RDE protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct LineTrace {
    /// Observer followed by every receiver, in order.
    pub path: Vec<usize>,
    /// Receivers that verified and compared the claim.
    pub inspected: Vec<usize>,
    pub end: LineEnd,
    /// Identities whose location an inspector on this line found in conflict,
    /// before any evidence dedup.
    pub conflicts: Vec<NodeId>,
    /// Distinct physical nodes within radio range of an inspecting receiver
    /// (the receivers themselves included).
    pub reach: usize,
}

impl LineTrace {
    pub fn messages(&self) -> usize {
        self.path.len() - 1
    }
}

/// Reach of the lines carrying one replica's location, and whether they
/// exposed a twin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReplicaReach {
    pub identity: NodeId,
    pub replica: usize,
    pub lines: usize,
    pub reach: usize,
    pub caught_twin: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RdeStats {
    pub lines: Vec<LineTrace>,
    pub replicas: Vec<ReplicaReach>,
    pub ttl: u32,
    /// Per node: neighbor-list entries held during the round.
    pub neighbor_entries: Vec<usize>,
    /// Per node: evidence dedup entries at the end of the round.
    pub evidence_entries: Vec<usize>,
    /// Per node: peak protocol-state entries observed while processing.
    pub peak_state_entries: Vec<usize>,
}

impl RdeStats {
    pub fn border_discards(&self) -> usize {
        self.lines
            .iter()
            .filter(|l| l.end == LineEnd::Border)
            .count()
    }

    pub fn mean_reach(&self) -> f64 {
        if self.lines.is_empty() {
            0.0
        } else {
            self.lines.iter().map(|l| l.reach).sum::<usize>() as f64 / self.lines.len() as f64
        }
    }

    /// Per node: state entries beyond the neighbor list and evidence dedup.
    pub fn claim_buffer_entries(&self) -> Vec<usize> {
        self.peak_state_entries
            .iter()
            .zip(self.neighbor_entries.iter().zip(&self.evidence_entries))
            .map(|(&peak, (&nl, &ev))| peak.saturating_sub(nl + ev))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub protocol: Protocol,
    /// Claim-transport transmissions per physical node.
    pub messages_sent: Vec<u64>,
    pub action_messages: usize,
    pub evidence_messages: usize,
    /// Per physical node: DHT cache entries, or RDE neighbor-list length.
    pub storage: Vec<usize>,
    /// Physical witnesses per accused identity.
    pub witnesses: BTreeMap<NodeId, BTreeSet<usize>>,
    /// Every evidence produced, with the producing physical node.
    pub evidence: Vec<(usize, Evidence)>,
    /// Honest nodes that revoked each identity.
    pub revocations: BTreeMap<NodeId, usize>,
    pub transport_failures: usize,
    pub claims_dropped: usize,
    pub dht: Option<DhtStats>,
    pub rde: Option<RdeStats>,
}

impl RoundReport {
    pub(crate) fn empty(protocol: Protocol, nodes: usize) -> Self {
        RoundReport {
            protocol,
            messages_sent: vec![0; nodes],
            action_messages: 0,
            evidence_messages: 0,
            storage: vec![0; nodes],
            witnesses: BTreeMap::new(),
            evidence: Vec::new(),
            revocations: BTreeMap::new(),
            transport_failures: 0,
            claims_dropped: 0,
            dht: None,
            rde: None,
        }
    }

    pub fn total_messages(&self) -> u64 {
        self.messages_sent.iter().sum()
    }

    pub fn messages_per_node(&self) -> f64 {
        self.total_messages() as f64 / self.messages_sent.len().max(1) as f64
    }

    pub fn detected_identities(&self) -> Vec<NodeId> {
        self.witnesses.keys().copied().collect()
    }

    pub fn witness_count(&self, id: NodeId) -> usize {
        self.witnesses.get(&id).map_or(0, BTreeSet::len)
    }

    pub fn total_revocations(&self) -> usize {
        self.revocations.values().sum()
    }
}
