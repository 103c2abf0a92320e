//! Attestation message types and their binary wire format.
//!
//! Layout: 1 type byte (0x01 request, 0x02 report), 1 flags byte, then
//! the fields in declaration order with big-endian integers. Flags:
//! bit 0 = clockless variant (height fields present), bit 1 = renewal
//! payload appended, bit 2 = local measurement (LMT) field present.
//! The same framing doubles as the on-disk trace record payload, so
//! `decode` must reject anything that is not the exact image of
//! `encode`.

use alloc::vec::Vec;
use core::fmt;

use crate::chain::{Hash, RenewalPayload, HASH_LEN};
use crate::mac;

pub const MSG_REQUEST: u8 = 0x01;
pub const MSG_REPORT: u8 = 0x02;

const FLAG_VARIANT_B: u8 = 0b001;
const FLAG_RENEWAL: u8 = 0b010;
const FLAG_LMT: u8 = 0b100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireError {
    /// Truncated input, trailing bytes, or flag bits that contradict the
    /// message body.
    Malformed,
    /// First byte names no known message type.
    UnknownType,
}

impl fmt::Display for WireError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WireError::Malformed => write!(f, "malformed message"),
            WireError::UnknownType => write!(f, "unknown message type"),
        }
    }
}

impl core::error::Error for WireError {}

/// Scheduling variant: `A` attests at an absolute RTC instant, `B`
/// derives a relative wait from the height fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantKind {
    A,
    B,
}

/// Height fields carried only by variant-B requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Heights {
    pub height_cur: u32,
    pub height_net: u32,
}

/// Attestation request, flooded down the spanning tree. Each forwarder
/// rewrites `id_snd` to its own id (and increments `height_cur` in
/// variant B) before rebroadcasting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttRequest {
    pub id_snd: u32,
    pub hash_new: Hash,
    pub hash_ind_new: u32,
    pub t_attest: u64,
    /// Present exactly for variant B.
    pub heights: Option<Heights>,
    pub renewal: Option<RenewalPayload>,
}

impl AttRequest {
    pub fn variant(&self) -> VariantKind {
        if self.heights.is_some() {
            VariantKind::B
        } else {
            VariantKind::A
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut flags = 0u8;
        if self.heights.is_some() {
            flags |= FLAG_VARIANT_B;
        }
        if self.renewal.is_some() {
            flags |= FLAG_RENEWAL;
        }
        let mut out = Vec::with_capacity(126);
        out.push(MSG_REQUEST);
        out.push(flags);
        out.extend_from_slice(&self.id_snd.to_be_bytes());
        out.extend_from_slice(&self.hash_new);
        out.extend_from_slice(&self.hash_ind_new.to_be_bytes());
        out.extend_from_slice(&self.t_attest.to_be_bytes());
        if let Some(h) = &self.heights {
            out.extend_from_slice(&h.height_cur.to_be_bytes());
            out.extend_from_slice(&h.height_net.to_be_bytes());
        }
        if let Some(r) = &self.renewal {
            out.extend_from_slice(&r.new_chain_anchor);
            out.extend_from_slice(&r.auth);
            out.extend_from_slice(&r.switch_margin_k.to_be_bytes());
        }
        out
    }
}

/// Attestation report, unicast hop by hop toward the verifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttReport {
    pub id_dev: u32,
    pub id_par: u32,
    pub t_attest_prime: u64,
    pub hash_new: Hash,
    /// Present exactly when the device runs the measurement backend that
    /// reports a local measurement value.
    pub lmt_dev: Option<Hash>,
    pub auth_report: Hash,
}

impl AttReport {
    pub fn encode(&self) -> Vec<u8> {
        let mut flags = 0u8;
        if self.lmt_dev.is_some() {
            flags |= FLAG_LMT;
        }
        let mut out = Vec::with_capacity(114);
        out.push(MSG_REPORT);
        out.push(flags);
        out.extend_from_slice(&self.id_dev.to_be_bytes());
        out.extend_from_slice(&self.id_par.to_be_bytes());
        out.extend_from_slice(&self.t_attest_prime.to_be_bytes());
        out.extend_from_slice(&self.hash_new);
        if let Some(l) = &self.lmt_dev {
            out.extend_from_slice(l);
        }
        out.extend_from_slice(&self.auth_report);
        out
    }
}

/// Report authenticator: MAC over parent id, local attestation time, the
/// round's disclosed chain link, and the measurement value when present.
pub fn report_auth(
    key: &mac::DeviceKey,
    id_par: u32,
    t_attest_prime: u64,
    hash_new: &Hash,
    lmt_dev: Option<&Hash>,
) -> Hash {
    let id_be = id_par.to_be_bytes();
    let t_be = t_attest_prime.to_be_bytes();
    match lmt_dev {
        Some(l) => mac::mac(key, &[&id_be, &t_be, hash_new, l]),
        None => mac::mac(key, &[&id_be, &t_be, hash_new]),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Request(AttRequest),
    Report(AttReport),
}

impl Message {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Message::Request(r) => r.encode(),
            Message::Report(r) => r.encode(),
        }
    }
}

/// Cheap classification by leading byte, used for dispatch and by the
/// adversary's match rules. Does not validate the body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsgClass {
    Request,
    Report,
    Other,
}

pub fn classify(bytes: &[u8]) -> MsgClass {
    match bytes.first() {
        Some(&MSG_REQUEST) => MsgClass::Request,
        Some(&MSG_REPORT) => MsgClass::Report,
        _ => MsgClass::Other,
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let end = self.pos.checked_add(n).ok_or(WireError::Malformed)?;
        if end > self.buf.len() {
            return Err(WireError::Malformed);
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn hash(&mut self) -> Result<Hash, WireError> {
        Ok(self.take(HASH_LEN)?.try_into().unwrap())
    }

    fn finish(&self) -> Result<(), WireError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(WireError::Malformed)
        }
    }
}

/// Strict decoder: succeeds exactly on images of `encode`.
pub fn decode(bytes: &[u8]) -> Result<Message, WireError> {
    if bytes.is_empty() {
        return Err(WireError::Malformed);
    }
    match bytes[0] {
        MSG_REQUEST => decode_request(bytes).map(Message::Request),
        MSG_REPORT => decode_report(bytes).map(Message::Report),
        _ => Err(WireError::UnknownType),
    }
}

fn decode_request(bytes: &[u8]) -> Result<AttRequest, WireError> {
    if bytes.len() < 2 {
        return Err(WireError::Malformed);
    }
    let flags = bytes[1];
    if flags & !(FLAG_VARIANT_B | FLAG_RENEWAL) != 0 {
        return Err(WireError::Malformed);
    }
    let mut r = Reader { buf: bytes, pos: 2 };
    let id_snd = r.u32()?;
    let hash_new = r.hash()?;
    let hash_ind_new = r.u32()?;
    let t_attest = r.u64()?;
    let heights = if flags & FLAG_VARIANT_B != 0 {
        Some(Heights {
            height_cur: r.u32()?,
            height_net: r.u32()?,
        })
    } else {
        None
    };
    let renewal = if flags & FLAG_RENEWAL != 0 {
        Some(RenewalPayload {
            new_chain_anchor: r.hash()?,
            auth: r.hash()?,
            switch_margin_k: r.u32()?,
        })
    } else {
        None
    };
    r.finish()?;
    Ok(AttRequest {
        id_snd,
        hash_new,
        hash_ind_new,
        t_attest,
        heights,
        renewal,
    })
}

fn decode_report(bytes: &[u8]) -> Result<AttReport, WireError> {
    if bytes.len() < 2 {
        return Err(WireError::Malformed);
    }
    let flags = bytes[1];
    if flags & !FLAG_LMT != 0 {
        return Err(WireError::Malformed);
    }
    let mut r = Reader { buf: bytes, pos: 2 };
    let id_dev = r.u32()?;
    let id_par = r.u32()?;
    let t_attest_prime = r.u64()?;
    let hash_new = r.hash()?;
    let lmt_dev = if flags & FLAG_LMT != 0 {
        Some(r.hash()?)
    } else {
        None
    };
    let auth_report = r.hash()?;
    r.finish()?;
    Ok(AttReport {
        id_dev,
        id_par,
        t_attest_prime,
        hash_new,
        lmt_dev,
        auth_report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn rand_hash(rng: &mut ChaCha12Rng) -> Hash {
        let mut h = [0u8; 32];
        rng.fill_bytes(&mut h);
        h
    }

    fn rand_request(rng: &mut ChaCha12Rng) -> AttRequest {
        AttRequest {
            id_snd: rng.next_u32(),
            hash_new: rand_hash(rng),
            hash_ind_new: rng.next_u32(),
            t_attest: rng.next_u64(),
            heights: if rng.next_u32() % 2 == 0 {
                Some(Heights {
                    height_cur: rng.next_u32(),
                    height_net: rng.next_u32(),
                })
            } else {
                None
            },
            renewal: if rng.next_u32() % 2 == 0 {
                Some(RenewalPayload {
                    new_chain_anchor: rand_hash(rng),
                    auth: rand_hash(rng),
                    switch_margin_k: rng.next_u32(),
                })
            } else {
                None
            },
        }
    }

    fn rand_report(rng: &mut ChaCha12Rng) -> AttReport {
        AttReport {
            id_dev: rng.next_u32(),
            id_par: rng.next_u32(),
            t_attest_prime: rng.next_u64(),
            hash_new: rand_hash(rng),
            lmt_dev: if rng.next_u32() % 2 == 0 {
                Some(rand_hash(rng))
            } else {
                None
            },
            auth_report: rand_hash(rng),
        }
    }

    #[test]
    fn minimal_variant_a_request_is_50_bytes() {
        let req = AttRequest {
            id_snd: 0,
            hash_new: [0u8; 32],
            hash_ind_new: 0,
            t_attest: 0,
            heights: None,
            renewal: None,
        };
        let enc = req.encode();
        assert_eq!(enc.len(), 50);
        assert_eq!(enc[0], 0x01);
        assert_eq!(enc[1], 0x00);
        assert!(enc[2..].iter().all(|&b| b == 0));
    }

    #[test]
    fn variant_b_adds_exactly_eight_bytes() {
        let mut req = AttRequest {
            id_snd: 7,
            hash_new: [9u8; 32],
            hash_ind_new: 3,
            t_attest: 145000,
            heights: None,
            renewal: None,
        };
        let a_len = req.encode().len();
        req.heights = Some(Heights {
            height_cur: 0,
            height_net: 10,
        });
        assert_eq!(req.encode().len(), a_len + 8);
    }

    #[test]
    fn report_sizes() {
        let mut rep = AttReport {
            id_dev: 1,
            id_par: 0,
            t_attest_prime: 5,
            hash_new: [1u8; 32],
            lmt_dev: None,
            auth_report: [2u8; 32],
        };
        assert_eq!(rep.encode().len(), 82);
        rep.lmt_dev = Some([3u8; 32]);
        assert_eq!(rep.encode().len(), 114);
    }

    #[test]
    fn roundtrip_random_messages() {
        let mut rng = ChaCha12Rng::seed_from_u64(0xC0DEC);
        for i in 0..10_000 {
            let msg = if i % 2 == 0 {
                Message::Request(rand_request(&mut rng))
            } else {
                Message::Report(rand_report(&mut rng))
            };
            let enc = msg.encode();
            assert_eq!(decode(&enc).unwrap(), msg);
            // Truncating by one byte must be malformed, never a panic.
            assert_eq!(
                decode(&enc[..enc.len() - 1]).unwrap_err(),
                WireError::Malformed
            );
            // So must one trailing garbage byte.
            let mut longer = enc.clone();
            longer.push(0x55);
            assert_eq!(decode(&longer).unwrap_err(), WireError::Malformed);
        }
    }

    #[test]
    fn unknown_type_and_empty() {
        assert_eq!(decode(&[0x7f; 12]).unwrap_err(), WireError::UnknownType);
        assert_eq!(decode(&[]).unwrap_err(), WireError::Malformed);
        assert_eq!(classify(&[]), MsgClass::Other);
        assert_eq!(classify(&[0x01]), MsgClass::Request);
        assert_eq!(classify(&[0x02, 0xff]), MsgClass::Report);
        assert_eq!(classify(&[0x03]), MsgClass::Other);
    }

    #[test]
    fn report_auth_reference_value() {
        // Key 0x0b*32, id_par 0, t' 145000, hash_new = H(0^32), no lmt;
        // expected tag precomputed independently.
        let key = [0x0bu8; 32];
        let hash_new: Hash = {
            let v = hex::decode("66687aadf862bd776c8fc18b8e9f8e20089714856ee233b3902a591d0d5f2925")
                .unwrap();
            v.try_into().unwrap()
        };
        let tag = report_auth(&key, 0, 145000, &hash_new, None);
        assert_eq!(
            hex::encode(tag),
            "5daceb71ca0ea86bd79b3b2a0af6556c2f6a1d3fcada190c6219a0b3b68dcbb3"
        );
    }

    #[test]
    fn report_auth_distinguishes_lmt_presence() {
        let key = [5u8; 32];
        let h = [6u8; 32];
        assert_ne!(
            report_auth(&key, 1, 2, &h, None),
            report_auth(&key, 1, 2, &h, Some(&[0u8; 32]))
        );
    }
}
