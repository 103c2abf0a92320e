//! HMAC-SHA-256 message authentication with length-prefixed field framing.
//!
//! All protocol MACs run over a canonical encoding of their input fields:
//! each field is prefixed with its length as a 4-byte big-endian integer
//! and the prefixed fields are concatenated. The framing keeps distinct
//! field vectors from colliding (`[b"ab", b"c"]` never MACs like
//! `[b"abc"]`), which matters because report fields vary in count
//! between device backends.

use hmac::{Hmac, Mac};
use sha2::Sha256;

use alloc::vec::Vec;

/// Per-device symmetric key shared with the verifier.
pub type DeviceKey = [u8; 32];

/// Raw HMAC-SHA-256 over a single byte string, no framing.
pub fn hmac_sha256(key: &[u8], data: &[u8]) -> [u8; 32] {
    let mut m = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("hmac accepts any key length");
    m.update(data);
    m.finalize().into_bytes().into()
}

/// Protocol MAC: HMAC-SHA-256 over length-prefixed fields.
pub fn mac(key: &[u8], fields: &[&[u8]]) -> [u8; 32] {
    let mut m = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("hmac accepts any key length");
    for f in fields {
        m.update(&(f.len() as u32).to_be_bytes());
        m.update(f);
    }
    m.finalize().into_bytes().into()
}

/// Framed input bytes for [`mac`], exposed for tests and documentation.
pub fn frame_fields(fields: &[&[u8]]) -> Vec<u8> {
    let mut out = Vec::new();
    for f in fields {
        out.extend_from_slice(&(f.len() as u32).to_be_bytes());
        out.extend_from_slice(f);
    }
    out
}
