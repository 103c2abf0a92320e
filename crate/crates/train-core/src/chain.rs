//! One-way SHA-256 hash chains and delayed-disclosure chain renewal.
//!
//! A chain of length `m` grows from a secret root `x0` by repeated
//! hashing: `H(x0) = x1, ..., H(x_{m-1}) = x_m`. The final link `x_m`
//! (the anchor) is public and provisioned into every device; the verifier
//! keeps the root and discloses links in descending index order, one per
//! attestation round. A device holding `(hash_cur, ind_cur)` accepts a
//! candidate link `x_j` exactly when `j < ind_cur` and hashing the
//! candidate `ind_cur - j` times reproduces `hash_cur`, which also
//! resynchronizes a device that missed rounds.
//!
//! Renewal announces a successor chain inside a normal round: the
//! announcement carries the new anchor and a MAC over it keyed with a
//! link that is still undisclosed and will become public `k + 1` rounds
//! later, so devices can authenticate the announcement retroactively.

use alloc::vec::Vec;
use core::fmt;

use sha2::{Digest, Sha256};

use crate::mac;

/// SHA-256 output, the unit of chain links and protocol digests.
pub type Hash = [u8; 32];

pub const HASH_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainError {
    /// A length or index parameter is outside the valid range.
    InvalidParameter,
    /// The chain has no undisclosed links left for the requested use.
    ChainDepleted,
}

impl fmt::Display for ChainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainError::InvalidParameter => write!(f, "invalid chain parameter"),
            ChainError::ChainDepleted => write!(f, "hash chain depleted"),
        }
    }
}

impl core::error::Error for ChainError {}

pub fn sha256(data: &[u8]) -> Hash {
    let mut h = Sha256::new();
    h.update(data);
    h.finalize().into()
}

/// Applies `H` to a 32-byte value `steps` times. `steps = 0` is identity.
pub fn hash_iter(start: &Hash, steps: u32) -> Hash {
    let mut cur = *start;
    for _ in 0..steps {
        cur = sha256(&cur);
    }
    cur
}

/// A fully evaluated hash chain. `link(0)` is the secret root, `link(m)`
/// the public anchor.
#[derive(Clone, PartialEq, Eq)]
pub struct HashChain {
    links: Vec<Hash>,
}

impl fmt::Debug for HashChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HashChain")
            .field("length_m", &self.length_m())
            .finish_non_exhaustive()
    }
}

impl HashChain {
    /// Generates the chain by iterating SHA-256 from the root, `m >= 1`.
    pub fn generate(root: Hash, m: u32) -> Result<Self, ChainError> {
        if m == 0 {
            return Err(ChainError::InvalidParameter);
        }
        let mut links = Vec::with_capacity(m as usize + 1);
        links.push(root);
        for i in 0..m as usize {
            links.push(sha256(&links[i]));
        }
        Ok(HashChain { links })
    }

    /// Rebuilds a chain from stored links (root first, anchor last),
    /// verifying every adjacency.
    pub fn from_links(links: Vec<Hash>) -> Result<Self, ChainError> {
        if links.len() < 2 {
            return Err(ChainError::InvalidParameter);
        }
        for i in 1..links.len() {
            if links[i] != sha256(&links[i - 1]) {
                return Err(ChainError::InvalidParameter);
            }
        }
        Ok(HashChain { links })
    }

    pub fn length_m(&self) -> u32 {
        (self.links.len() - 1) as u32
    }

    pub fn root(&self) -> &Hash {
        &self.links[0]
    }

    pub fn anchor(&self) -> &Hash {
        &self.links[self.links.len() - 1]
    }

    /// Link at `index`, `0..=m`.
    pub fn link(&self, index: u32) -> Result<&Hash, ChainError> {
        self.links
            .get(index as usize)
            .ok_or(ChainError::InvalidParameter)
    }

    pub fn links(&self) -> &[Hash] {
        &self.links
    }
}

/// A device's view of the active chain: the most recently accepted link
/// and its index. Starts at the anchor `(x_m, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainPosition {
    pub hash_cur: Hash,
    pub ind_cur: u32,
}

impl ChainPosition {
    pub fn at_anchor(chain: &HashChain) -> Self {
        ChainPosition {
            hash_cur: *chain.anchor(),
            ind_cur: chain.length_m(),
        }
    }
}

/// Candidate acceptance check. Accepts exactly when the candidate index
/// is strictly below the current one (equal indices are replays) and
/// `H^(ind_cur - cand_index)(candidate) = hash_cur`. Never mutates the
/// position; callers adopt the candidate on success.
pub fn verify_link(candidate: &Hash, cand_index: u32, position: &ChainPosition) -> bool {
    if cand_index >= position.ind_cur {
        return false;
    }
    hash_iter(candidate, position.ind_cur - cand_index) == position.hash_cur
}

/// Announcement of a successor chain, carried inside an attestation
/// request and verifiable once the keying link is disclosed `k + 1`
/// rounds later.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenewalPayload {
    pub new_chain_anchor: Hash,
    pub auth: Hash,
    pub switch_margin_k: u32,
}

/// Builds the renewal announcement for the round that discloses
/// `current_index`. The MAC key is `link(current_index - k - 1)`, the
/// link that becomes public `k + 1` rounds later.
pub fn build_renewal(
    old_chain: &HashChain,
    current_index: u32,
    new_anchor: &Hash,
    k: u32,
) -> Result<RenewalPayload, ChainError> {
    let key_index = current_index
        .checked_sub(k + 1)
        .ok_or(ChainError::ChainDepleted)?;
    let key = old_chain.link(key_index)?;
    Ok(RenewalPayload {
        new_chain_anchor: *new_anchor,
        auth: mac::mac(key, &[new_anchor]),
        switch_margin_k: k,
    })
}

/// Retroactive verification of a stored announcement against the now
/// disclosed keying link.
pub fn verify_renewal(payload: &RenewalPayload, revealed_key_link: &Hash) -> bool {
    mac::mac(revealed_key_link, &[&payload.new_chain_anchor]) == payload.auth
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h32(s: &str) -> Hash {
        let v = hex::decode(s).unwrap();
        let mut out = [0u8; 32];
        out.copy_from_slice(&v);
        out
    }

    // Anchors precomputed with an independent SHA-256 implementation.
    #[test]
    fn generate_matches_reference_values() {
        let chain = HashChain::generate([0u8; 32], 2).unwrap();
        assert_eq!(
            chain.link(1).unwrap(),
            &h32("66687aadf862bd776c8fc18b8e9f8e20089714856ee233b3902a591d0d5f2925")
        );
        assert_eq!(
            chain.anchor(),
            &h32("2b32db6c2c0a6235fb1397e8225ea85e0f0e6e8c7b126d0016ccbde0e667151e")
        );

        let chain = HashChain::generate([0x42u8; 32], 5).unwrap();
        let expected = [
            "425ed4e4a36b30ea21b90e21c712c649e8214c29b7eaf68089d1039c6e55384c",
            "dcae1cc6a3b16bb08367e58b9ea83625c93972989445b731719a7518be2780b7",
            "3606410cf023e19a8eee617b649b29f53eda720609f4623a93b0e81397a15ea9",
            "5b97ccf802c7ac2463c127b28dbeed405d40cdea5e36910ed40f56573302957f",
            "0b8be38fcdf7e0686478f1e671994a63b79b32ffdca6df4e8d883b7ebcf795fc",
        ];
        for (i, want) in expected.iter().enumerate() {
            assert_eq!(chain.link(i as u32 + 1).unwrap(), &h32(want));
        }
        assert_eq!(chain.anchor(), &h32(expected[4]));
        assert_eq!(chain.length_m(), 5);
    }

    #[test]
    fn zero_length_is_invalid() {
        assert_eq!(
            HashChain::generate([1u8; 32], 0).unwrap_err(),
            ChainError::InvalidParameter
        );
    }

    #[test]
    fn links_are_pairwise_distinct_smoke() {
        let chain = HashChain::generate([9u8; 32], 64).unwrap();
        for i in 0..chain.links().len() {
            for j in (i + 1)..chain.links().len() {
                assert_ne!(chain.links()[i], chain.links()[j]);
            }
        }
    }

    // Exhaustive acceptance table against brute-force re-hashing for a
    // small chain: accept exactly below the current index.
    #[test]
    fn verify_link_exhaustive_small() {
        let m = 16;
        let chain = HashChain::generate([0xA5u8; 32], m).unwrap();
        for i in 1..=m {
            let pos = ChainPosition {
                hash_cur: *chain.link(i).unwrap(),
                ind_cur: i,
            };
            for j in 0..=m {
                let cand = chain.link(j).unwrap();
                let accepted = verify_link(cand, j, &pos);
                let mut expect = j < i;
                if expect {
                    // brute force: hash forward j -> i
                    let mut v = *cand;
                    for _ in 0..(i - j) {
                        v = sha256(&v);
                    }
                    expect = v == *chain.link(i).unwrap();
                }
                assert_eq!(accepted, expect, "i={i} j={j}");
            }
        }
    }

    #[test]
    fn equal_index_replay_rejected() {
        let chain = HashChain::generate([3u8; 32], 8).unwrap();
        let pos = ChainPosition {
            hash_cur: *chain.link(5).unwrap(),
            ind_cur: 5,
        };
        assert!(!verify_link(chain.link(5).unwrap(), 5, &pos));
        assert!(verify_link(chain.link(4).unwrap(), 4, &pos));
    }

    #[test]
    fn resync_across_skipped_indices() {
        let chain = HashChain::generate([7u8; 32], 10).unwrap();
        let pos = ChainPosition::at_anchor(&chain);
        // x7 offered against (x10, 10): H^3 must close the gap.
        assert!(verify_link(chain.link(7).unwrap(), 7, &pos));
        // A link from a different chain at the same index must fail.
        let other = HashChain::generate([8u8; 32], 10).unwrap();
        assert!(!verify_link(other.link(7).unwrap(), 7, &pos));
    }

    #[test]
    fn renewal_roundtrip_and_reference_value() {
        let old = HashChain::generate([0x42u8; 32], 5).unwrap();
        let new_anchor = [0xAAu8; 32];
        // k = 0 announced at index 1: keyed by the root.
        let p = build_renewal(&old, 1, &new_anchor, 0).unwrap();
        assert_eq!(
            p.auth,
            h32("d6d507adc4bf1e1d92d0a3b721b495019b471f3b282ed712dd638460376b5759")
        );
        assert!(verify_renewal(&p, old.link(0).unwrap()));
        assert!(!verify_renewal(&p, old.link(1).unwrap()));

        // k = 2 announced at the anchor index: keyed by x_{m-3}.
        let p2 = build_renewal(&old, 5, &new_anchor, 2).unwrap();
        assert_eq!(
            p2.auth,
            mac::mac(old.link(2).unwrap(), &[&new_anchor[..]])
        );
    }

    #[test]
    fn renewal_needs_unreleased_key_link() {
        let old = HashChain::generate([1u8; 32], 4).unwrap();
        assert_eq!(
            build_renewal(&old, 2, &[0u8; 32], 2).unwrap_err(),
            ChainError::ChainDepleted
        );
        // current_index - k - 1 = 0 is the root and still fine.
        assert!(build_renewal(&old, 3, &[0u8; 32], 2).is_ok());
    }

    #[test]
    fn tampered_renewal_fields_fail() {
        let old = HashChain::generate([6u8; 32], 6).unwrap();
        let p = build_renewal(&old, 3, &[0xEEu8; 32], 1).unwrap();
        let key = old.link(1).unwrap();
        assert!(verify_renewal(&p, key));
        let mut bad = p;
        bad.new_chain_anchor[0] ^= 1;
        assert!(!verify_renewal(&bad, key));
        let mut bad = p;
        bad.auth[31] ^= 0x80;
        assert!(!verify_renewal(&bad, key));
    }
}
