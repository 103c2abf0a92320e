//! Scripted in-network adversary.
//!
//! The attacker sits on the links: it sees every frame in transit and
//! may drop, delay, alter, replay, or inject traffic, but it holds no
//! device keys and cannot compute undisclosed chain links. A script is
//! an ordered rule list; each transmission is offered to the rules in
//! order and the first match with remaining budget decides its fate.
//! Injections are scheduled independently of any transmission.

use alloc::vec::Vec;

use crate::wire::{decode, Message, MsgClass};

/// Transmission attributes a rule can match on. `None` matches
/// anything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchSpec {
    pub from: Option<u32>,
    pub to: Option<u32>,
    pub class: Option<MsgClass>,
    /// Zero-based ordinal of the attestation instance.
    pub instance: Option<u64>,
    /// For reports: the originating device id.
    pub report_dev: Option<u32>,
}

impl MatchSpec {
    pub fn any() -> Self {
        Self::default()
    }

    fn matches(&self, ctx: &TxContext) -> bool {
        self.from.is_none_or(|v| v == ctx.from)
            && self.to.is_none_or(|v| v == ctx.to)
            && self.class.is_none_or(|v| v == ctx.class)
            && self.instance.is_none_or(|v| v == ctx.instance)
            && self.report_dev.is_none_or(|v| Some(v) == ctx.report_dev)
    }
}

/// What the simulation knows about a transmission when the adversary
/// inspects it.
#[derive(Debug, Clone, Copy)]
pub struct TxContext {
    pub from: u32,
    pub to: u32,
    pub instance: u64,
    pub class: MsgClass,
    pub report_dev: Option<u32>,
}

/// In-flight alterations. Structured variants decode, rewrite one
/// field, and re-encode; if the bytes do not decode or the variant does
/// not apply to the message kind, the frame passes unchanged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mutation {
    /// Flip bits of one byte at a fixed offset of the encoded frame.
    RawXor { offset: usize, mask: u8 },
    SetRequestIdSnd(u32),
    SetRequestTAttest(u64),
    AddRequestTAttestUs(i64),
    XorRequestHashNew(u8),
    XorRenewalAnchor(u8),
    XorRenewalAuth(u8),
    StripRenewal,
    SetHeights { height_cur: u32, height_net: u32 },
    SetReportTPrime(u64),
    XorReportHashNew(u8),
    XorReportAuth(u8),
    XorReportLmt(u8),
    SetReportIdPar(u32),
}

impl Mutation {
    pub fn apply(&self, bytes: &[u8]) -> Vec<u8> {
        if let Mutation::RawXor { offset, mask } = self {
            let mut out = bytes.to_vec();
            if let Some(b) = out.get_mut(*offset) {
                *b ^= mask;
            }
            return out;
        }
        let Ok(msg) = decode(bytes) else {
            return bytes.to_vec();
        };
        match (msg, self) {
            (Message::Request(mut req), m) => {
                match m {
                    Mutation::SetRequestIdSnd(v) => req.id_snd = *v,
                    Mutation::SetRequestTAttest(v) => req.t_attest = *v,
                    Mutation::AddRequestTAttestUs(d) => {
                        req.t_attest = req.t_attest.saturating_add_signed(*d)
                    }
                    Mutation::XorRequestHashNew(x) => req.hash_new[0] ^= x,
                    Mutation::XorRenewalAnchor(x) => {
                        if let Some(r) = &mut req.renewal {
                            r.new_chain_anchor[0] ^= x;
                        }
                    }
                    Mutation::XorRenewalAuth(x) => {
                        if let Some(r) = &mut req.renewal {
                            r.auth[0] ^= x;
                        }
                    }
                    Mutation::StripRenewal => req.renewal = None,
                    Mutation::SetHeights {
                        height_cur,
                        height_net,
                    } => {
                        if let Some(h) = &mut req.heights {
                            h.height_cur = *height_cur;
                            h.height_net = *height_net;
                        }
                    }
                    _ => return bytes.to_vec(),
                }
                req.encode()
            }
            (Message::Report(mut rep), m) => {
                match m {
                    Mutation::SetReportTPrime(v) => rep.t_attest_prime = *v,
                    Mutation::XorReportHashNew(x) => rep.hash_new[0] ^= x,
                    Mutation::XorReportAuth(x) => rep.auth_report[0] ^= x,
                    Mutation::XorReportLmt(x) => {
                        if let Some(l) = &mut rep.lmt_dev {
                            l[0] ^= x;
                        }
                    }
                    Mutation::SetReportIdPar(v) => rep.id_par = *v,
                    _ => return bytes.to_vec(),
                }
                rep.encode()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleAction {
    Drop,
    DelayUs(u64),
    Modify(Mutation),
    /// Let the frame through and deliver a copy on the same link at
    /// this absolute time.
    ReplayAt(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub match_spec: MatchSpec,
    pub action: RuleAction,
    /// How many transmissions this rule may affect; `None` is
    /// unlimited.
    pub budget: Option<u32>,
}

/// Traffic the adversary fabricates from whole cloth, delivered
/// directly to `to` without occupying any link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Injection {
    pub at_us: u64,
    pub from: u32,
    pub to: u32,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Drop,
    DelayUs(u64),
    Replace(Vec<u8>),
    /// Pass now, replay a copy at the given absolute time.
    ReplayAt(u64),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdversaryScript {
    pub rules: Vec<Rule>,
    pub injections: Vec<Injection>,
}

impl AdversaryScript {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty() && self.injections.is_empty()
    }

    /// Offer one transmission to the script.
    pub fn apply(&mut self, ctx: &TxContext, bytes: &[u8]) -> Verdict {
        for rule in &mut self.rules {
            if rule.budget == Some(0) || !rule.match_spec.matches(ctx) {
                continue;
            }
            if let Some(b) = &mut rule.budget {
                *b -= 1;
            }
            return match &rule.action {
                RuleAction::Drop => Verdict::Drop,
                RuleAction::DelayUs(d) => Verdict::DelayUs(*d),
                RuleAction::Modify(m) => Verdict::Replace(m.apply(bytes)),
                RuleAction::ReplayAt(at) => Verdict::ReplayAt(*at),
            };
        }
        Verdict::Pass
    }
}
