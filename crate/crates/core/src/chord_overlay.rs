//! Chord ring tables and key routing.
//!
//! Tables are computed from the globally sorted ring rather than through a
//! join/stabilize exchange. Each participating identity owns the arc
//! `(predecessor, self]`.

use std::collections::HashMap;

use thiserror::Error;

use crate::identity::{chord_coordinate, RingPoint, RingSpace};
use crate::net_model::{Location, Network, NodeId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OverlayError {
    #[error("successor list size g must be at least 1")]
    EmptySuccessorList,
    #[error("successor list size {g} needs more than {participants} participants")]
    RingTooSmall { g: usize, participants: usize },
    #[error("identities {a} and {b} hash to the same ring point {point}")]
    PointCollision {
        a: NodeId,
        b: NodeId,
        point: RingPoint,
    },
    #[error("{0} does not participate in the overlay")]
    NotParticipating(NodeId),
    #[error("route for key {key} did not settle within {limit} hops")]
    RoutingLoop { key: RingPoint, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingEntry {
    pub id: NodeId,
    pub point: RingPoint,
    /// Location of the identity's first physical node.
    pub location: Location,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlayTables {
    pub me: RingEntry,
    pub predecessor: RingEntry,
    /// `successors[i]` is the (i+1)-th clockwise successor.
    pub successors: Vec<RingEntry>,
    /// `fingers[j-1]` is the first participant at or after `me + 2^(b-j)`.
    pub fingers: Vec<RingEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlayHop {
    /// The key lies in `(predecessor, self]`.
    Destination,
    /// The owner is one of our successors; inspect, then hand over.
    PreDestination(NodeId),
    Next(NodeId),
}

impl OverlayHop {
    pub fn target(self) -> Option<NodeId> {
        match self {
            OverlayHop::Destination => None,
            OverlayHop::PreDestination(id) | OverlayHop::Next(id) => Some(id),
        }
    }
}

/// One routing decision for `key` at the node owning `tables`.
pub fn next_overlay_hop(tables: &OverlayTables, space: &RingSpace, key: RingPoint) -> OverlayHop {
    let me = tables.me.point;
    if space.in_interval(key, tables.predecessor.point, me) {
        return OverlayHop::Destination;
    }
    for succ in &tables.successors {
        if space.in_interval(key, me, succ.point) {
            return OverlayHop::PreDestination(succ.id);
        }
    }
    for (j, finger) in tables.fingers.iter().enumerate() {
        let step = space.pow2(space.bits() - (j as u32 + 1));
        if space.in_interval(key, space.add(me, step), me) {
            return OverlayHop::Next(finger.id);
        }
    }
    OverlayHop::Next(
        tables
            .successors
            .last()
            .expect("tables always carry at least one successor")
            .id,
    )
}

/// Owner by linear scan: the participant whose point is the first at or
/// clockwise after `key`.
pub fn owner_oracle(ring: &[(RingPoint, NodeId)], space: &RingSpace, key: RingPoint) -> NodeId {
    ring.iter()
        .min_by_key(|(p, id)| (space.distance(key, *p), *id))
        .map(|(_, id)| *id)
        .expect("owner_oracle needs at least one participant")
}

/// `ceil(log2(count))`, zero for a single participant.
pub fn finger_count(count: usize) -> usize {
    if count <= 1 {
        0
    } else {
        (usize::BITS - (count - 1).leading_zeros()) as usize
    }
}

#[derive(Debug, Clone)]
pub struct Overlay {
    space: RingSpace,
    g: usize,
    ring: Vec<RingEntry>,
    tables: Vec<OverlayTables>,
    position: HashMap<NodeId, usize>,
}

/// Path of one key lookup through the overlay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlayRoute {
    /// Identities visited, starting with the source.
    pub visited: Vec<NodeId>,
    /// Identities that inspected the message (pre-destinations, then the owner).
    pub inspectors: Vec<NodeId>,
}

impl OverlayRoute {
    pub fn hops(&self) -> usize {
        self.visited.len() - 1
    }

    pub fn destination(&self) -> NodeId {
        *self.visited.last().expect("route is never empty")
    }
}

/// Overlay over every identity that joins the ring: all legitimate identities,
/// plus cloned identities whose replicas participate. One ring entry per
/// identity regardless of how many physical replicas carry it.
pub fn build_overlay(net: &Network, space: RingSpace, g: usize) -> Result<Overlay, OverlayError> {
    let entries = net
        .identities()
        .filter(|&id| {
            net.replicas(id)
                .iter()
                .all(|&i| net.node(i).behavior.joins_overlay())
        })
        .map(|id| RingEntry {
            id,
            point: chord_coordinate(id, &space),
            location: net.node(net.replicas(id)[0]).location,
        })
        .collect();
    Overlay::from_entries(space, g, entries)
}

impl Overlay {
    pub fn from_entries(
        space: RingSpace,
        g: usize,
        mut ring: Vec<RingEntry>,
    ) -> Result<Self, OverlayError> {
        if g == 0 {
            return Err(OverlayError::EmptySuccessorList);
        }
        let count = ring.len();
        if g >= count {
            return Err(OverlayError::RingTooSmall {
                g,
                participants: count,
            });
        }
        ring.sort_by_key(|e| (e.point, e.id));
        for pair in ring.windows(2) {
            if pair[0].point == pair[1].point {
                return Err(OverlayError::PointCollision {
                    a: pair[0].id,
                    b: pair[1].id,
                    point: pair[0].point,
                });
            }
        }
        let t = finger_count(count);
        let successor_of = |p: RingPoint| -> RingEntry {
            let i = ring.partition_point(|e| e.point < p);
            ring[if i == count { 0 } else { i }]
        };
        let tables = (0..count)
            .map(|i| {
                let me = ring[i];
                OverlayTables {
                    me,
                    predecessor: ring[(i + count - 1) % count],
                    successors: (1..=g).map(|k| ring[(i + k) % count]).collect(),
                    fingers: (1..=t)
                        .map(|j| {
                            successor_of(space.add(me.point, space.pow2(space.bits() - j as u32)))
                        })
                        .collect(),
                }
            })
            .collect();
        let position = ring.iter().enumerate().map(|(i, e)| (e.id, i)).collect();
        Ok(Overlay {
            space,
            g,
            ring,
            tables,
            position,
        })
    }

    pub fn space(&self) -> &RingSpace {
        &self.space
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn finger_count(&self) -> usize {
        finger_count(self.ring.len())
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    /// Participants sorted by ring point.
    pub fn ring(&self) -> &[RingEntry] {
        &self.ring
    }

    pub fn points(&self) -> Vec<(RingPoint, NodeId)> {
        self.ring.iter().map(|e| (e.point, e.id)).collect()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.position.contains_key(&id)
    }

    pub fn tables(&self, id: NodeId) -> Result<&OverlayTables, OverlayError> {
        self.position
            .get(&id)
            .map(|&i| &self.tables[i])
            .ok_or(OverlayError::NotParticipating(id))
    }

    pub fn next_hop(&self, at: NodeId, key: RingPoint) -> Result<OverlayHop, OverlayError> {
        Ok(next_overlay_hop(self.tables(at)?, &self.space, key))
    }

    /// Owner of `key` by binary search over the sorted ring.
    pub fn owner(&self, key: RingPoint) -> NodeId {
        let i = self.ring.partition_point(|e| e.point < key);
        self.ring[if i == self.ring.len() { 0 } else { i }].id
    }

    /// The `g` identities immediately preceding `id` on the ring, nearest first.
    pub fn predecessors(&self, id: NodeId) -> Result<Vec<NodeId>, OverlayError> {
        let i = *self
            .position
            .get(&id)
            .ok_or(OverlayError::NotParticipating(id))?;
        let n = self.ring.len();
        Ok((1..=self.g)
            .map(|k| self.ring[(i + n - k) % n].id)
            .collect())
    }

    /// Iterates [`next_overlay_hop`] from `start` until the owner is reached.
    pub fn route(&self, start: NodeId, key: RingPoint) -> Result<OverlayRoute, OverlayError> {
        let limit = self.finger_count() + self.g + 2;
        let mut visited = vec![start];
        let mut inspectors = Vec::new();
        let mut at = start;
        loop {
            match self.next_hop(at, key)? {
                OverlayHop::Destination => {
                    inspectors.push(at);
                    return Ok(OverlayRoute {
                        visited,
                        inspectors,
                    });
                }
                OverlayHop::PreDestination(next) => {
                    inspectors.push(at);
                    at = next;
                }
                OverlayHop::Next(next) => at = next,
            }
            visited.push(at);
            if visited.len() > limit + 1 {
                return Err(OverlayError::RoutingLoop { key, limit });
            }
        }
    }
}
