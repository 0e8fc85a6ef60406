//! Simulation of clone detection in static wireless sensor networks.
//!
//! Nodes are scattered over a square and talk over unit-disk links. Two
//! distributed detectors are provided: one routes location claims over a
//! Chord overlay to a pseudo-randomly chosen inspector, the other sends signed
//! neighbor lists along roughly straight random lines. [`harness`] runs
//! seeded Monte-Carlo experiments over both and compares the measurements
//! with their closed-form predictions.

pub mod adversary;
pub mod chord_overlay;
pub mod dht_detection;
pub mod evidence;
pub mod harness;
pub mod identity;
pub mod net_model;
pub mod rde_detection;
pub mod report;

pub use adversary::{AdversaryConfig, Behavior, CloneBehavior};
pub use chord_overlay::{build_overlay, Overlay};
pub use dht_detection::{run_dht_round, ClaimPlan, DhtRoundConfig};
pub use evidence::Evidence;
pub use identity::RingSpace;
pub use net_model::{deploy_network, DeploymentConfig, Location, Network, NodeId};
pub use rde_detection::{run_rde_round, ZoneConfig};
pub use report::{Protocol, RoundReport};
