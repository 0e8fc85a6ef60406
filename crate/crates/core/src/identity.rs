//! Ring coordinates, detection keys and simulated signatures.
//!
//! All hashing goes through SHA-256 so that ring placement and keys are
//! identical on every platform. Signatures are keyed SHA-256 tags; a tag can
//! only be produced by a holder of the identity's [`SigningKey`].
//!
//! Canonical encodings are built with [`CanonicalEncoder`]: fields in a fixed
//! order, integers as fixed-width big-endian, reals as IEEE-754 bit patterns
//! (big-endian), lists prefixed by a big-endian `u32` length.

use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::net_model::{Location, NodeId};

/// Name of the pinned hash, echoed into experiment output.
pub const HASH_FUNCTION: &str = "sha256";

pub const DEFAULT_RING_BITS: u32 = 64;

const SIGNATURE_LEN: usize = 16;
const KEY_DOMAIN: &[u8] = b"clonesim/identity-key/v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdentityError {
    #[error("ring bit-width must be within 1..=64, got {0}")]
    InvalidBits(u32),
}

/// A point on the ring `[0, 2^bits)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RingPoint(pub u64);

impl fmt::Display for RingPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Modular arithmetic on a `bits`-wide ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RingSpace {
    bits: u32,
}

impl RingSpace {
    pub fn new(bits: u32) -> Result<Self, IdentityError> {
        if (1..=64).contains(&bits) {
            Ok(RingSpace { bits })
        } else {
            Err(IdentityError::InvalidBits(bits))
        }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    fn mask(&self) -> u64 {
        if self.bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.bits) - 1
        }
    }

    pub fn point(&self, value: u64) -> RingPoint {
        RingPoint(value & self.mask())
    }

    /// `2^k mod 2^bits`, for `k < bits`.
    pub fn pow2(&self, k: u32) -> u64 {
        debug_assert!(k < self.bits);
        1u64 << k
    }

    pub fn add(&self, p: RingPoint, delta: u64) -> RingPoint {
        self.point(p.0.wrapping_add(delta))
    }

    /// Clockwise distance from `from` to `to`.
    pub fn distance(&self, from: RingPoint, to: RingPoint) -> u64 {
        to.0.wrapping_sub(from.0) & self.mask()
    }

    /// Membership in the half-open arc `(start, end]`. `(a, a]` is the whole ring.
    pub fn in_interval(&self, x: RingPoint, start: RingPoint, end: RingPoint) -> bool {
        if start == end {
            return true;
        }
        let dx = self.distance(start, x);
        dx != 0 && dx <= self.distance(start, end)
    }

    /// Keeps the top `bits` bits of a 64-bit digest prefix.
    fn truncate(&self, digest: u64) -> RingPoint {
        RingPoint(digest >> (64 - self.bits))
    }
}

impl Default for RingSpace {
    fn default() -> Self {
        RingSpace {
            bits: DEFAULT_RING_BITS,
        }
    }
}

fn digest_prefix(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
}

/// Ring coordinate of an identity; the identity itself stands in for the
/// hardware address that gets hashed.
pub fn chord_coordinate(id: NodeId, space: &RingSpace) -> RingPoint {
    space.truncate(digest_prefix(&id.0.to_be_bytes()))
}

/// `H(seed || examinee)` truncated to the ring. Independent of the observer,
/// so every claim about one examinee in one round lands on the same key.
pub fn detection_key(seed: u64, examinee: NodeId, space: &RingSpace) -> RingPoint {
    let mut enc = CanonicalEncoder::new();
    enc.put_u64(seed).put_id(examinee);
    space.truncate(digest_prefix(enc.as_bytes()))
}

/// Builder for canonical byte encodings of signed messages.
#[derive(Debug, Default, Clone)]
pub struct CanonicalEncoder {
    buf: Vec<u8>,
}

impl CanonicalEncoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn put_u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn put_f64(&mut self, v: f64) -> &mut Self {
        self.put_u64(v.to_bits())
    }

    pub fn put_id(&mut self, id: NodeId) -> &mut Self {
        self.put_u64(id.0)
    }

    pub fn put_location(&mut self, loc: Location) -> &mut Self {
        self.put_f64(loc.x).put_f64(loc.y)
    }

    pub fn put_len(&mut self, len: usize) -> &mut Self {
        self.put_u32(u32::try_from(len).expect("list too long for canonical encoding"))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.buf
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

/// Signing capability for one identity. Only physical nodes that hold (or
/// have stolen) an identity's key can produce tags that verify under it.
#[derive(Clone)]
pub struct SigningKey {
    id: NodeId,
    secret: [u8; 32],
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigningKey")
            .field("id", &self.id)
            .finish_non_exhaustive()
    }
}

impl SigningKey {
    /// Key issued to `id` at deployment time.
    pub fn issue(id: NodeId) -> Self {
        SigningKey {
            id,
            secret: derive_secret(id),
        }
    }

    pub fn identity(&self) -> NodeId {
        self.id
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        Signature {
            tag: tag(&self.secret, msg),
            signer: self.id,
        }
    }
}

fn derive_secret(id: NodeId) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(KEY_DOMAIN);
    h.update(id.0.to_be_bytes());
    h.finalize().into()
}

fn tag(secret: &[u8; 32], msg: &[u8]) -> [u8; SIGNATURE_LEN] {
    let mut h = Sha256::new();
    h.update(secret);
    h.update(msg);
    let digest = h.finalize();
    digest[..SIGNATURE_LEN]
        .try_into()
        .expect("digest long enough")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature {
    pub tag: [u8; SIGNATURE_LEN],
    pub signer: NodeId,
}

pub fn sign(msg: &[u8], key: &SigningKey) -> Signature {
    key.sign(msg)
}

/// True iff `sig` was produced over exactly `msg` by `claimed_signer`.
pub fn verify(msg: &[u8], sig: &Signature, claimed_signer: NodeId) -> bool {
    sig.signer == claimed_signer && sig.tag == tag(&derive_secret(claimed_signer), msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn coordinates_are_deterministic() {
        let space = RingSpace::default();
        assert_eq!(
            chord_coordinate(NodeId(77), &space),
            chord_coordinate(NodeId(77), &space)
        );
        let small = RingSpace::new(16).unwrap();
        assert!(chord_coordinate(NodeId(77), &small).0 < 1 << 16);
        // Truncation keeps the top bits of the same digest.
        assert_eq!(
            chord_coordinate(NodeId(77), &small).0,
            chord_coordinate(NodeId(77), &space).0 >> 48
        );
    }

    #[test]
    fn no_collisions_among_a_thousand_ids() {
        let space = RingSpace::default();
        let points: HashSet<_> = (0..1000u64)
            .map(|i| chord_coordinate(NodeId(i), &space))
            .collect();
        assert_eq!(points.len(), 1000);
    }

    #[test]
    fn detection_keys() {
        let space = RingSpace::default();
        let k = detection_key(5, NodeId(9), &space);
        assert_eq!(k, detection_key(5, NodeId(9), &space));
        assert_ne!(k, detection_key(6, NodeId(9), &space));
        assert_ne!(k, detection_key(5, NodeId(10), &space));
    }

    #[test]
    fn sign_verify() {
        let key = SigningKey::issue(NodeId(3));
        let msg = b"examinee at (1,2)".to_vec();
        let sig = key.sign(&msg);
        assert!(verify(&msg, &sig, NodeId(3)));
        let mut altered = msg.clone();
        altered[0] ^= 1;
        assert!(!verify(&altered, &sig, NodeId(3)));
        assert!(!verify(&msg, &sig, NodeId(4)));
        // A key for another identity cannot impersonate id 3.
        let forged = SigningKey::issue(NodeId(4)).sign(&msg);
        assert!(!verify(
            &msg,
            &Signature {
                signer: NodeId(3),
                ..forged
            },
            NodeId(3)
        ));
    }

    #[test]
    fn interval_conventions() {
        let space = RingSpace::new(16).unwrap();
        let top = (1u64 << 16) - 2;
        assert!(space.in_interval(RingPoint(1), RingPoint(top), RingPoint(3)));
        assert!(space.in_interval(RingPoint(3), RingPoint(top), RingPoint(3)));
        assert!(!space.in_interval(RingPoint(top), RingPoint(top), RingPoint(3)));
        assert!(!space.in_interval(RingPoint(4), RingPoint(top), RingPoint(3)));
        assert!(space.in_interval(RingPoint(12345), RingPoint(9), RingPoint(9)));
        assert_eq!(RingSpace::new(0), Err(IdentityError::InvalidBits(0)));
        assert_eq!(RingSpace::new(65), Err(IdentityError::InvalidBits(65)));
    }

    #[test]
    fn canonical_encoding_layout() {
        let mut enc = CanonicalEncoder::new();
        enc.put_id(NodeId(1))
            .put_location(Location::new(1.0, -2.0))
            .put_len(3);
        let bytes = enc.into_bytes();
        assert_eq!(bytes.len(), 8 + 16 + 4);
        assert_eq!(&bytes[..8], &[0, 0, 0, 0, 0, 0, 0, 1]);
        assert_eq!(&bytes[8..16], &1.0f64.to_bits().to_be_bytes());
        assert_eq!(&bytes[24..], &[0, 0, 0, 3]);
    }

    proptest! {
        #[test]
        fn interval_matches_enumeration(bits in 3u32..8, x in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
            let space = RingSpace::new(bits).unwrap();
            let (x, a, b) = (space.point(x), space.point(a), space.point(b));
            // Walk clockwise from a (exclusive) to b (inclusive).
            let mut members = HashSet::new();
            let mut p = a;
            loop {
                p = space.add(p, 1);
                members.insert(p);
                if p == b { break; }
            }
            prop_assert_eq!(space.in_interval(x, a, b), members.contains(&x));
        }

        #[test]
        fn distance_inverts_add(bits in 1u32..=64, p in any::<u64>(), d in any::<u64>()) {
            let space = RingSpace::new(bits).unwrap();
            let p = space.point(p);
            let d = space.point(d).0;
            prop_assert_eq!(space.distance(p, space.add(p, d)), d);
        }
    }
}
