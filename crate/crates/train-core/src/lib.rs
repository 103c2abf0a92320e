//! Network attestation over one-way hash chains, with two scheduling
//! variants: an RTC build that attests at an absolute wall-clock instant,
//! and a clockless build that derives an attestation delay from the
//! device's distance to the network edge and a monotonic secure timer.
//!
//! The crate also carries a deterministic discrete-event simulator that
//! runs the protocol over line, star, and tree topologies, a scripted
//! message-level adversary, and the measurement code for the
//! time-of-check-to-time-of-use window across devices.
//!
//! Everything here is `no_std` + `alloc`; file formats, JSON, and the
//! command-line front end live in the companion `train` binary crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod adversary;
pub mod chain;
pub mod clock;
pub mod engine;
pub mod mac;
pub mod metrics;
pub mod prover;
pub mod scenario;
pub mod topology;
pub mod trace;
pub mod verifier;
pub mod wire;
