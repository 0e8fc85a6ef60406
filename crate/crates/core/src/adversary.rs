//! Clone injection and per-node misbehavior.
//!
//! The adversary captures victim identities, deploys extra physical replicas
//! carrying the stolen identity and keys, and turns a fraction of the
//! remaining nodes into message droppers (or modifiers).

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::net_model::{Location, NetError, Network, NodeId};

/// How a cloned identity treats the detection protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CloneBehavior {
    /// Replicas send truthful claims about their neighbors and join the ring.
    Participating,
    /// Replicas send no claims and stay out of the ring. They still relay.
    NonParticipating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Behavior {
    Honest,
    /// Silently discards every detection message it would relay or inspect.
    Dropper,
    /// Corrupts every detection message it relays.
    Modifier,
    /// A physical node carrying a captured identity.
    Clone(CloneBehavior),
}

impl Behavior {
    pub fn is_honest(self) -> bool {
        self == Behavior::Honest
    }

    /// Whether the node originates claiming messages.
    pub fn emits_claims(self) -> bool {
        matches!(
            self,
            Behavior::Honest | Behavior::Clone(CloneBehavior::Participating)
        )
    }

    /// Whether the node's identity takes a place on the overlay ring.
    pub fn joins_overlay(self) -> bool {
        self != Behavior::Clone(CloneBehavior::NonParticipating)
    }
}

/// Processing point at which a node handles a detection message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageContext {
    Relay,
    Inspect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Forward,
    Drop,
    Modify,
}

/// Droppers drop deterministically. Modifiers corrupt relayed payloads (the
/// next verifier discards them) and drop anything they would inspect. Clones
/// relay; they never inspect, which callers gate on [`Behavior::is_honest`].
pub fn apply_behavior(behavior: Behavior, ctx: MessageContext) -> Action {
    match (behavior, ctx) {
        (Behavior::Honest, _) | (Behavior::Clone(_), _) => Action::Forward,
        (Behavior::Dropper, _) => Action::Drop,
        (Behavior::Modifier, MessageContext::Relay) => Action::Modify,
        (Behavior::Modifier, MessageContext::Inspect) => Action::Drop,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Placement {
    UniformRandom,
    /// `replicas_per_identity` locations per cloned identity. The first picks
    /// the victim (legitimate node nearest to it); the rest host new replicas.
    Fixed(Vec<Location>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversaryConfig {
    pub cloned_identities: usize,
    pub replicas_per_identity: usize,
    pub placement: Placement,
    pub dropper_fraction: f64,
    pub clone_behavior: CloneBehavior,
    pub modify_enabled: bool,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        AdversaryConfig {
            cloned_identities: 0,
            replicas_per_identity: 2,
            placement: Placement::UniformRandom,
            dropper_fraction: 0.0,
            clone_behavior: CloneBehavior::NonParticipating,
            modify_enabled: false,
        }
    }
}

impl AdversaryConfig {
    pub fn clones(count: usize) -> Self {
        AdversaryConfig {
            cloned_identities: count,
            ..Self::default()
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AdversaryError {
    #[error("cannot clone {requested} identities out of {available} legitimate nodes")]
    TooManyClones { requested: usize, available: usize },
    #[error("replicas per identity must be at least 2, got {0}")]
    TooFewReplicas(usize),
    #[error("dropper fraction must lie in [0, 1], got {0}")]
    InvalidDropperFraction(f64),
    #[error("fixed placement needs {needed} locations, got {given}")]
    PlacementCount { needed: usize, given: usize },
    #[error("fixed replica location {0} is within radio range of its twin")]
    PlacementTooClose(Location),
    #[error("could not place a replica away from its twins after {0} attempts")]
    PlacementExhausted(usize),
    #[error(transparent)]
    Net(#[from] NetError),
}

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

impl AdversaryConfig {
    pub fn validate(&self) -> Result<(), AdversaryError> {
        if self.replicas_per_identity < 2 {
            return Err(AdversaryError::TooFewReplicas(self.replicas_per_identity));
        }
        if !(0.0..=1.0).contains(&self.dropper_fraction) {
            return Err(AdversaryError::InvalidDropperFraction(
                self.dropper_fraction,
            ));
        }
        if let Placement::Fixed(locs) = &self.placement {
            let needed = self.cloned_identities * self.replicas_per_identity;
            if locs.len() != needed {
                return Err(AdversaryError::PlacementCount {
                    needed,
                    given: locs.len(),
                });
            }
        }
        Ok(())
    }
}

/// Adds replicas for `cfg.cloned_identities` victims. Every physical node
/// carrying a victim identity (the captured original included) is marked as
/// a clone under the adversary's control.
pub fn inject_clones<R: Rng>(
    net: &Network,
    cfg: &AdversaryConfig,
    rng: &mut R,
) -> Result<Network, AdversaryError> {
    cfg.validate()?;
    let mut out = net.clone();
    if cfg.cloned_identities == 0 {
        return Ok(out);
    }
    let legit: Vec<usize> = net
        .nodes()
        .iter()
        .filter(|node| !node.is_clone && node.behavior.is_honest())
        .map(|node| node.index)
        .collect();
    if cfg.cloned_identities > legit.len() {
        return Err(AdversaryError::TooManyClones {
            requested: cfg.cloned_identities,
            available: legit.len(),
        });
    }
    let clone_behavior = Behavior::Clone(cfg.clone_behavior);
    let victims: Vec<usize> = match &cfg.placement {
        Placement::UniformRandom => legit
            .choose_multiple(rng, cfg.cloned_identities)
            .copied()
            .collect(),
        Placement::Fixed(locs) => {
            let mut chosen = Vec::new();
            for anchor in locs.chunks(cfg.replicas_per_identity).map(|c| c[0]) {
                let victim = legit
                    .iter()
                    .copied()
                    .filter(|i| !chosen.contains(i))
                    .min_by(|&a, &b| {
                        let da = net.node(a).location.distance(&anchor);
                        let db = net.node(b).location.distance(&anchor);
                        da.total_cmp(&db).then(a.cmp(&b))
                    })
                    .ok_or(AdversaryError::TooManyClones {
                        requested: cfg.cloned_identities,
                        available: legit.len(),
                    })?;
                chosen.push(victim);
            }
            chosen
        }
    };

    let range = net.radio_range();
    for (k, &victim) in victims.iter().enumerate() {
        let identity = net.node(victim).identity;
        {
            let node = out.node_mut(victim);
            node.is_clone = true;
            node.behavior = clone_behavior;
        }
        let mut twins = vec![net.node(victim).location];
        for r in 1..cfg.replicas_per_identity {
            let loc = match &cfg.placement {
                Placement::Fixed(locs) => {
                    let loc = locs[k * cfg.replicas_per_identity + r];
                    if twins.iter().any(|t| t.distance(&loc) <= range) {
                        return Err(AdversaryError::PlacementTooClose(loc));
                    }
                    loc
                }
                Placement::UniformRandom => {
                    let mut attempt = 0;
                    loop {
                        let loc = Location::new(
                            rng.gen_range(0.0..=net.side()),
                            rng.gen_range(0.0..=net.side()),
                        );
                        if twins.iter().all(|t| t.distance(&loc) > range) {
                            break loc;
                        }
                        attempt += 1;
                        if attempt == 1 {
                            log::warn!(
                                "replica of {identity} landed within radio range of its twin; re-placing"
                            );
                        }
                        if attempt >= MAX_PLACEMENT_ATTEMPTS {
                            return Err(AdversaryError::PlacementExhausted(attempt));
                        }
                    }
                }
            };
            out.push_node(identity, loc, true, clone_behavior)?;
            twins.push(loc);
        }
    }
    Ok(out)
}

/// Turns `round(dropper_fraction * n)` legitimate nodes, chosen uniformly,
/// into droppers (or modifiers when `modify_enabled`).
pub fn assign_droppers<R: Rng>(
    net: &mut Network,
    cfg: &AdversaryConfig,
    rng: &mut R,
) -> Result<Vec<usize>, AdversaryError> {
    cfg.validate()?;
    let candidates: Vec<usize> = net
        .nodes()
        .iter()
        .filter(|node| !node.is_clone && node.behavior.is_honest())
        .map(|node| node.index)
        .collect();
    let count = ((cfg.dropper_fraction * net.len() as f64).round() as usize).min(candidates.len());
    let behavior = if cfg.modify_enabled {
        Behavior::Modifier
    } else {
        Behavior::Dropper
    };
    let mut chosen: Vec<usize> = candidates.choose_multiple(rng, count).copied().collect();
    chosen.sort_unstable();
    for &i in &chosen {
        net.node_mut(i).behavior = behavior;
    }
    Ok(chosen)
}

/// Clone injection followed by dropper assignment.
pub fn apply_adversary<R: Rng>(
    net: &Network,
    cfg: &AdversaryConfig,
    rng: &mut R,
) -> Result<Network, AdversaryError> {
    let mut out = inject_clones(net, cfg, rng)?;
    assign_droppers(&mut out, cfg, rng)?;
    Ok(out)
}

/// Identity whose replicas are all known to the adversary.
pub fn is_captured(net: &Network, id: NodeId) -> bool {
    net.replicas(id).iter().any(|&i| net.node(i).is_clone)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net_model::{deploy_network, DeploymentConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base() -> Network {
        deploy_network(&DeploymentConfig::with_degree(200, 1000.0, 10.0, 3)).unwrap()
    }

    #[test]
    fn zero_clones_is_identity() {
        let net = base();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = inject_clones(&net, &AdversaryConfig::default(), &mut rng).unwrap();
        assert_eq!(out, net);
    }

    #[test]
    fn one_identity_two_replicas() {
        let net = base();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = inject_clones(&net, &AdversaryConfig::clones(1), &mut rng).unwrap();
        assert_eq!(out.len(), net.len() + 1);
        let cloned = out.cloned_identities();
        assert_eq!(cloned.len(), 1);
        let replicas = out.replicas(cloned[0]);
        assert_eq!(replicas.len(), 2);
        for &i in replicas {
            assert!(out.node(i).is_clone);
            assert_eq!(
                out.node(i).behavior,
                Behavior::Clone(CloneBehavior::NonParticipating)
            );
        }
        let (a, b) = (
            out.node(replicas[0]).location,
            out.node(replicas[1]).location,
        );
        assert!(a.distance(&b) > out.radio_range());
    }

    #[test]
    fn fixed_corners() {
        let net = base();
        let cfg = AdversaryConfig {
            placement: Placement::Fixed(vec![
                Location::new(0.0, 0.0),
                Location::new(1000.0, 1000.0),
            ]),
            ..AdversaryConfig::clones(1)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = inject_clones(&net, &cfg, &mut rng).unwrap();
        let id = out.cloned_identities()[0];
        let r = out.replicas(id);
        assert_eq!(out.node(r[1]).location, Location::new(1000.0, 1000.0));
        assert!(out.node(r[0]).location.distance(&out.node(r[1]).location) > out.radio_range());
    }

    #[test]
    fn rejects_bad_configs() {
        let net = base();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let outside = AdversaryConfig {
            placement: Placement::Fixed(vec![Location::new(0.0, 0.0), Location::new(2000.0, 0.0)]),
            ..AdversaryConfig::clones(1)
        };
        assert!(matches!(
            inject_clones(&net, &outside, &mut rng),
            Err(AdversaryError::Net(NetError::OutsideRegion { .. }))
        ));
        let close = AdversaryConfig {
            placement: Placement::Fixed(vec![Location::new(0.0, 0.0), Location::new(0.0, 0.0)]),
            ..AdversaryConfig::clones(1)
        };
        assert!(matches!(
            inject_clones(&net, &close, &mut rng),
            Err(AdversaryError::PlacementTooClose(_))
        ));
        assert!(matches!(
            inject_clones(&net, &AdversaryConfig::clones(500), &mut rng),
            Err(AdversaryError::TooManyClones { .. })
        ));
        let one_replica = AdversaryConfig {
            replicas_per_identity: 1,
            ..AdversaryConfig::clones(1)
        };
        assert_eq!(
            inject_clones(&net, &one_replica, &mut rng),
            Err(AdversaryError::TooFewReplicas(1))
        );
    }

    #[test]
    fn droppers_avoid_clones() {
        let net = base();
        let cfg = AdversaryConfig {
            dropper_fraction: 0.1,
            ..AdversaryConfig::clones(2)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out = apply_adversary(&net, &cfg, &mut rng).unwrap();
        let droppers: Vec<_> = out
            .nodes()
            .iter()
            .filter(|n| n.behavior == Behavior::Dropper)
            .collect();
        assert_eq!(droppers.len(), (0.1 * out.len() as f64).round() as usize);
        assert!(droppers.iter().all(|n| !n.is_clone));
    }

    #[test]
    fn behaviors() {
        use MessageContext::*;
        assert_eq!(apply_behavior(Behavior::Honest, Relay), Action::Forward);
        assert_eq!(apply_behavior(Behavior::Honest, Inspect), Action::Forward);
        assert_eq!(apply_behavior(Behavior::Dropper, Relay), Action::Drop);
        assert_eq!(apply_behavior(Behavior::Dropper, Inspect), Action::Drop);
        assert_eq!(apply_behavior(Behavior::Modifier, Relay), Action::Modify);
        assert_eq!(
            apply_behavior(Behavior::Clone(CloneBehavior::NonParticipating), Relay),
            Action::Forward
        );
        assert!(!Behavior::Clone(CloneBehavior::NonParticipating).emits_claims());
        assert!(Behavior::Clone(CloneBehavior::Participating).emits_claims());
        assert!(!Behavior::Dropper.emits_claims());
    }
}
