//! Prover-side protocol state machine.
//!
//! A prover is a pure event-driven machine: requests, timer fires, and
//! child reports go in, actions (rebroadcasts, reports, timer arms) come
//! out. It never touches a clock directly; timers are armed by target
//! reading and the engine converts those to true time through the
//! device's clock model, so the same machine serves both the absolute
//! and the clockless scheduling variants.
//!
//! Chain tracking holds the active position plus at most one candidate
//! chain from an authenticated renewal. Verification tries the active
//! chain first, so a verifier that probes the candidate chain and then
//! reverts loses nothing. The candidate is promoted once a second
//! request verifies against it.

use alloc::vec::Vec;

use crate::chain::{hash_iter, verify_link, verify_renewal, ChainPosition, Hash, RenewalPayload};
use crate::mac::DeviceKey;
use crate::wire::{report_auth, AttReport, AttRequest, Heights, VariantKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProverPhase {
    Idle,
    /// Transient while an incoming request is being checked.
    Verify,
    WaitAttest,
    /// Transient while the measurement and report are produced.
    Attest,
    WaitReports,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimerKind {
    Attest,
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerTarget {
    /// Fire when the device RTC shows this absolute reading.
    RtcReading(u64),
    /// Fire once this much locally measured time has elapsed.
    ElapsedFromNow(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProverAction {
    /// Rebroadcast the request to all children.
    Broadcast(Vec<u8>),
    /// Emit the device's own report toward its parent. The MAC cost is
    /// charged by the engine before the bytes reach the wire.
    SendReport { to: u32, bytes: Vec<u8> },
    SetTimer {
        kind: TimerKind,
        target: TimerTarget,
        epoch: u64,
    },
}

#[derive(Debug, Clone)]
pub struct ProverConfig {
    pub id: u32,
    pub parent: u32,
    pub has_children: bool,
    pub variant: VariantKind,
    pub key: DeviceKey,
    /// Local measurement value appended to reports, when the backend
    /// reports one.
    pub lmt: Option<Hash>,
    /// Length every deployed chain is generated with; fixes the index
    /// of a renewal anchor.
    pub chain_m: u32,
    pub anchor: Hash,
    pub t_request_us: u64,
    pub t_hash_us: u64,
    /// How long to keep relaying descendant reports after attesting.
    pub forward_window_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Track {
    Primary,
    Candidate,
}

#[derive(Debug, Clone)]
struct PendingRenewal {
    payload: RenewalPayload,
    /// Chain index whose disclosure keys the payload MAC.
    key_index: u32,
    track: Track,
}

#[derive(Debug)]
pub struct Prover {
    cfg: ProverConfig,
    phase: ProverPhase,
    epoch: u64,
    primary: ChainPosition,
    candidate: Option<ChainPosition>,
    candidate_accepts: u32,
    pending: Option<PendingRenewal>,
    verified_anchor: Option<Hash>,
    adopted_hash_new: Hash,
    /// Parent identity taken from the sender field of the last accepted
    /// request; reports are addressed and attributed to it.
    parent_cur: u32,
}

enum Resolved {
    Primary,
    Candidate,
    NewCandidate,
}

impl Prover {
    pub fn new(cfg: ProverConfig) -> Self {
        let primary = ChainPosition {
            hash_cur: cfg.anchor,
            ind_cur: cfg.chain_m,
        };
        let parent_cur = cfg.parent;
        Prover {
            cfg,
            phase: ProverPhase::Idle,
            epoch: 0,
            primary,
            candidate: None,
            candidate_accepts: 0,
            pending: None,
            verified_anchor: None,
            adopted_hash_new: [0u8; 32],
            parent_cur,
        }
    }

    pub fn id(&self) -> u32 {
        self.cfg.id
    }

    pub fn phase(&self) -> ProverPhase {
        self.phase
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn position(&self) -> &ChainPosition {
        &self.primary
    }

    pub fn on_new_chain(&self) -> bool {
        self.candidate_accepts > 0 || self.candidate.is_some()
    }

    fn resolve(&self, req: &AttRequest) -> Option<Resolved> {
        if req.variant() != self.cfg.variant {
            return None;
        }
        if verify_link(&req.hash_new, req.hash_ind_new, &self.primary) {
            return Some(Resolved::Primary);
        }
        if let Some(c) = &self.candidate {
            if verify_link(&req.hash_new, req.hash_ind_new, c) {
                return Some(Resolved::Candidate);
            }
        }
        if let Some(a) = &self.verified_anchor {
            let fresh = ChainPosition {
                hash_cur: *a,
                ind_cur: self.cfg.chain_m,
            };
            if verify_link(&req.hash_new, req.hash_ind_new, &fresh) {
                return Some(Resolved::NewCandidate);
            }
        }
        None
    }

    /// Process a request delivered to this device. Hash verification
    /// cost is already charged by the caller.
    pub fn handle_request(&mut self, req: &AttRequest) -> Vec<ProverAction> {
        let entry_phase = self.phase;
        self.phase = ProverPhase::Verify;
        let Some(resolved) = self.resolve(req) else {
            self.phase = entry_phase;
            return Vec::new();
        };

        let new_pos = ChainPosition {
            hash_cur: req.hash_new,
            ind_cur: req.hash_ind_new,
        };
        let track = match resolved {
            Resolved::Primary => {
                self.primary = new_pos;
                Track::Primary
            }
            Resolved::Candidate => {
                self.candidate = Some(new_pos);
                self.candidate_accepts += 1;
                Track::Candidate
            }
            Resolved::NewCandidate => {
                self.candidate = Some(new_pos);
                self.candidate_accepts = 1;
                Track::Candidate
            }
        };

        if track == Track::Candidate && self.candidate_accepts >= 2 {
            self.primary = self.candidate.take().unwrap();
            self.candidate_accepts = 0;
            self.verified_anchor = None;
            match self.pending.take() {
                Some(mut p) if p.track == Track::Candidate => {
                    p.track = Track::Primary;
                    self.pending = Some(p);
                }
                _ => {}
            }
        }
        let track = if self.candidate.is_none() && track == Track::Candidate {
            Track::Primary
        } else {
            track
        };

        if let Some(p) = &self.pending {
            if p.track == track && req.hash_ind_new <= p.key_index {
                let key = hash_iter(&req.hash_new, p.key_index - req.hash_ind_new);
                if verify_renewal(&p.payload, &key) {
                    self.verified_anchor = Some(p.payload.new_chain_anchor);
                }
                self.pending = None;
            }
        }

        if let Some(payload) = &req.renewal {
            if let Some(key_index) = req
                .hash_ind_new
                .checked_sub(payload.switch_margin_k + 1)
            {
                self.pending = Some(PendingRenewal {
                    payload: payload.clone(),
                    key_index,
                    track,
                });
            }
        }

        self.adopted_hash_new = req.hash_new;
        self.parent_cur = req.id_snd;
        self.epoch += 1;
        let mut actions = Vec::with_capacity(2);

        if self.cfg.has_children {
            let rebroadcast = AttRequest {
                id_snd: self.cfg.id,
                heights: req.heights.map(|h| Heights {
                    height_cur: h.height_cur + 1,
                    height_net: h.height_net,
                }),
                ..req.clone()
            };
            actions.push(ProverAction::Broadcast(rebroadcast.encode()));
        }

        let target = match self.cfg.variant {
            VariantKind::A => TimerTarget::RtcReading(req.t_attest),
            VariantKind::B => {
                let h = req.heights.expect("resolve checked variant");
                let hops = h.height_net.saturating_sub(h.height_cur) as u64;
                let wait = hops * (self.cfg.t_request_us + self.cfg.t_hash_us);
                TimerTarget::ElapsedFromNow(wait)
            }
        };
        actions.push(ProverAction::SetTimer {
            kind: TimerKind::Attest,
            target,
            epoch: self.epoch,
        });
        self.phase = ProverPhase::WaitAttest;
        actions
    }

    /// Attest timer fired. `reading_us` is the local clock value at the
    /// fire instant (absolute reading for RTC devices, elapsed reading
    /// for timer devices) and becomes the reported attestation time.
    pub fn on_attest_timer(&mut self, epoch: u64, reading_us: u64) -> Vec<ProverAction> {
        if epoch != self.epoch || self.phase != ProverPhase::WaitAttest {
            return Vec::new();
        }
        self.phase = ProverPhase::Attest;
        let auth = report_auth(
            &self.cfg.key,
            self.parent_cur,
            reading_us,
            &self.adopted_hash_new,
            self.cfg.lmt.as_ref(),
        );
        let report = AttReport {
            id_dev: self.cfg.id,
            id_par: self.parent_cur,
            t_attest_prime: reading_us,
            hash_new: self.adopted_hash_new,
            lmt_dev: self.cfg.lmt,
            auth_report: auth,
        };
        let mut actions = Vec::with_capacity(2);
        actions.push(ProverAction::SendReport {
            to: self.parent_cur,
            bytes: report.encode(),
        });
        if self.cfg.has_children {
            self.phase = ProverPhase::WaitReports;
            actions.push(ProverAction::SetTimer {
                kind: TimerKind::Forward,
                target: TimerTarget::ElapsedFromNow(self.cfg.forward_window_us),
                epoch: self.epoch,
            });
        } else {
            self.phase = ProverPhase::Idle;
        }
        actions
    }

    /// A report arrived from a neighbor. Returns the relay target while
    /// the forwarding window is open; the bytes pass through verbatim.
    pub fn on_report(&self) -> Option<u32> {
        if self.phase == ProverPhase::WaitReports {
            Some(self.parent_cur)
        } else {
            None
        }
    }

    pub fn on_forward_timer(&mut self, epoch: u64) {
        if epoch == self.epoch && self.phase == ProverPhase::WaitReports {
            self.phase = ProverPhase::Idle;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_renewal, HashChain};
    use crate::wire::{decode, Message};

    fn chain(m: u32) -> HashChain {
        HashChain::generate([0x42; 32], m).unwrap()
    }

    fn cfg(variant: VariantKind, chain: &HashChain, has_children: bool) -> ProverConfig {
        ProverConfig {
            id: 2,
            parent: 1,
            has_children,
            variant,
            key: [7u8; 32],
            lmt: None,
            chain_m: chain.length_m(),
            anchor: *chain.anchor(),
            t_request_us: 5000,
            t_hash_us: 13000,
            forward_window_us: 70000,
        }
    }

    fn request_at(chain: &HashChain, index: u32, t_attest: u64) -> AttRequest {
        AttRequest {
            id_snd: 1,
            hash_new: *chain.link(index).unwrap(),
            hash_ind_new: index,
            t_attest,
            heights: None,
            renewal: None,
        }
    }

    #[test]
    fn accepts_and_rebroadcasts_next_link() {
        let c = chain(4);
        let mut p = Prover::new(cfg(VariantKind::A, &c, true));
        let req = request_at(&c, 3, 145_000);
        let actions = p.handle_request(&req);
        assert_eq!(p.phase(), ProverPhase::WaitAttest);
        assert_eq!(p.position().ind_cur, 3);
        assert_eq!(actions.len(), 2);
        match &actions[0] {
            ProverAction::Broadcast(bytes) => {
                let Message::Request(fwd) = decode(bytes).unwrap() else {
                    panic!("expected request");
                };
                assert_eq!(fwd.id_snd, 2);
                assert_eq!(fwd.hash_new, req.hash_new);
                assert_eq!(fwd.t_attest, 145_000);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(
            actions[1],
            ProverAction::SetTimer {
                kind: TimerKind::Attest,
                target: TimerTarget::RtcReading(145_000),
                epoch: 1,
            }
        );
    }

    #[test]
    fn replay_of_current_index_is_rejected() {
        let c = chain(4);
        let mut p = Prover::new(cfg(VariantKind::A, &c, false));
        let req = request_at(&c, 3, 145_000);
        assert!(!p.handle_request(&req).is_empty());
        let epoch = p.epoch();
        assert!(p.handle_request(&req).is_empty());
        assert_eq!(p.epoch(), epoch);
        assert_eq!(p.phase(), ProverPhase::WaitAttest);
    }

    #[test]
    fn resyncs_across_missed_instances() {
        let c = chain(8);
        let mut p = Prover::new(cfg(VariantKind::A, &c, false));
        assert!(!p.handle_request(&request_at(&c, 7, 1000)).is_empty());
        assert!(!p.handle_request(&request_at(&c, 3, 2000)).is_empty());
        assert_eq!(p.position().ind_cur, 3);
        assert!(p.handle_request(&request_at(&c, 5, 3000)).is_empty());
    }

    #[test]
    fn variant_b_waits_by_remaining_height() {
        let c = chain(4);
        let mut p = Prover::new(cfg(VariantKind::B, &c, true));
        let mut req = request_at(&c, 3, 0);
        req.heights = Some(Heights {
            height_cur: 3,
            height_net: 10,
        });
        let actions = p.handle_request(&req);
        assert_eq!(
            actions[1],
            ProverAction::SetTimer {
                kind: TimerKind::Attest,
                target: TimerTarget::ElapsedFromNow(7 * 18_000),
                epoch: 1,
            }
        );
        match &actions[0] {
            ProverAction::Broadcast(bytes) => {
                let Message::Request(fwd) = decode(bytes).unwrap() else {
                    panic!("expected request");
                };
                assert_eq!(
                    fwd.heights,
                    Some(Heights {
                        height_cur: 4,
                        height_net: 10
                    })
                );
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn variant_mismatch_is_rejected() {
        let c = chain(4);
        let mut a = Prover::new(cfg(VariantKind::A, &c, false));
        let mut req = request_at(&c, 3, 1000);
        req.heights = Some(Heights {
            height_cur: 0,
            height_net: 1,
        });
        assert!(a.handle_request(&req).is_empty());
        let mut b = Prover::new(cfg(VariantKind::B, &c, false));
        assert!(b.handle_request(&request_at(&c, 3, 1000)).is_empty());
    }

    #[test]
    fn attest_emits_authentic_report_then_forwards() {
        let c = chain(4);
        let mut p = Prover::new(cfg(VariantKind::A, &c, true));
        p.handle_request(&request_at(&c, 3, 145_000));
        let actions = p.on_attest_timer(p.epoch(), 145_000);
        assert_eq!(p.phase(), ProverPhase::WaitReports);
        let ProverAction::SendReport { to, bytes } = &actions[0] else {
            panic!("expected report");
        };
        assert_eq!(*to, 1);
        let Message::Report(rep) = decode(bytes).unwrap() else {
            panic!("expected report");
        };
        assert_eq!(rep.id_dev, 2);
        assert_eq!(rep.t_attest_prime, 145_000);
        assert_eq!(rep.hash_new, *c.link(3).unwrap());
        assert_eq!(
            rep.auth_report,
            report_auth(&[7u8; 32], 1, 145_000, c.link(3).unwrap(), None)
        );
        assert!(matches!(
            actions[1],
            ProverAction::SetTimer {
                kind: TimerKind::Forward,
                ..
            }
        ));

        assert_eq!(p.on_report(), Some(1));
        p.on_forward_timer(p.epoch());
        assert_eq!(p.phase(), ProverPhase::Idle);
        assert_eq!(p.on_report(), None);
    }

    #[test]
    fn leaf_returns_to_idle_after_attest() {
        let c = chain(4);
        let mut p = Prover::new(cfg(VariantKind::A, &c, false));
        p.handle_request(&request_at(&c, 3, 1000));
        let actions = p.on_attest_timer(p.epoch(), 1000);
        assert_eq!(actions.len(), 1);
        assert_eq!(p.phase(), ProverPhase::Idle);
    }

    #[test]
    fn stale_timer_epoch_is_ignored() {
        let c = chain(8);
        let mut p = Prover::new(cfg(VariantKind::A, &c, false));
        p.handle_request(&request_at(&c, 7, 1000));
        let old_epoch = p.epoch();
        p.handle_request(&request_at(&c, 6, 2000));
        assert!(p.on_attest_timer(old_epoch, 1000).is_empty());
        assert_eq!(p.phase(), ProverPhase::WaitAttest);
        assert!(!p.on_attest_timer(p.epoch(), 2000).is_empty());
    }

    #[test]
    fn renewal_key_reveal_enables_new_chain() {
        let old = chain(7);
        let new = HashChain::generate([0x99; 32], 7).unwrap();
        let k = 2;
        let announce_at = 6;
        let payload = build_renewal(&old, announce_at, new.anchor(), k).unwrap();
        let mut p = Prover::new(cfg(VariantKind::A, &old, false));

        let mut req = request_at(&old, announce_at, 1000);
        req.renewal = Some(payload);
        assert!(!p.handle_request(&req).is_empty());
        assert!(!p.on_new_chain());

        assert!(!p.handle_request(&request_at(&old, 5, 2000)).is_empty());
        assert!(!p.handle_request(&request_at(&old, 4, 3000)).is_empty());
        // Key instance: index 3 = announce - k - 1.
        assert!(!p.handle_request(&request_at(&old, 3, 4000)).is_empty());

        // Probe on the new chain verifies against the announced anchor.
        assert!(!p.handle_request(&request_at(&new, 6, 5000)).is_empty());
        assert!(p.on_new_chain());
        assert_eq!(p.position().ind_cur, 3);

        // Second new-chain accept promotes it to the active chain.
        assert!(!p.handle_request(&request_at(&new, 5, 6000)).is_empty());
        assert_eq!(p.position().ind_cur, 5);
        assert_eq!(p.position().hash_cur, *new.link(5).unwrap());
    }

    #[test]
    fn probe_then_revert_keeps_old_chain_serviceable() {
        let old = chain(7);
        let new = HashChain::generate([0x99; 32], 7).unwrap();
        let payload = build_renewal(&old, 6, new.anchor(), 2).unwrap();
        let mut p = Prover::new(cfg(VariantKind::A, &old, false));

        let mut req = request_at(&old, 6, 1000);
        req.renewal = Some(payload);
        p.handle_request(&req);
        p.handle_request(&request_at(&old, 5, 2000));
        p.handle_request(&request_at(&old, 4, 3000));
        p.handle_request(&request_at(&old, 3, 4000));
        assert!(!p.handle_request(&request_at(&new, 6, 5000)).is_empty());

        // Verifier reverts: the remaining margin of the old chain still
        // verifies against the untouched active position.
        assert!(!p.handle_request(&request_at(&old, 2, 6000)).is_empty());
        assert!(!p.handle_request(&request_at(&old, 1, 7000)).is_empty());
        assert_eq!(p.position().ind_cur, 1);
    }

    #[test]
    fn tampered_renewal_payload_is_dropped_at_key_reveal() {
        let old = chain(7);
        let new = HashChain::generate([0x99; 32], 7).unwrap();
        let mut payload = build_renewal(&old, 6, new.anchor(), 2).unwrap();
        payload.new_chain_anchor[0] ^= 1;
        let mut p = Prover::new(cfg(VariantKind::A, &old, false));

        let mut req = request_at(&old, 6, 1000);
        req.renewal = Some(payload);
        p.handle_request(&req);
        p.handle_request(&request_at(&old, 5, 2000));
        p.handle_request(&request_at(&old, 4, 3000));
        p.handle_request(&request_at(&old, 3, 4000));

        // Neither the tampered anchor nor the genuine one is usable.
        assert!(p.handle_request(&request_at(&new, 6, 5000)).is_empty());
        assert!(!p.on_new_chain());
        assert!(!p.handle_request(&request_at(&old, 2, 6000)).is_empty());
    }

    #[test]
    fn newer_announcement_overwrites_pending() {
        let old = chain(9);
        let first = HashChain::generate([0x99; 32], 9).unwrap();
        let second = HashChain::generate([0xAB; 32], 9).unwrap();
        let mut p = Prover::new(cfg(VariantKind::A, &old, false));

        let mut req = request_at(&old, 8, 1000);
        req.renewal = Some(build_renewal(&old, 8, first.anchor(), 2).unwrap());
        p.handle_request(&req);

        let mut req = request_at(&old, 7, 2000);
        req.renewal = Some(build_renewal(&old, 7, second.anchor(), 2).unwrap());
        p.handle_request(&req);

        // Key index of the superseded announcement does nothing.
        p.handle_request(&request_at(&old, 5, 3000));
        assert!(p.handle_request(&request_at(&first, 8, 4000)).is_empty());

        // Key index of the latest announcement verifies it.
        p.handle_request(&request_at(&old, 4, 5000));
        assert!(!p.handle_request(&request_at(&second, 8, 6000)).is_empty());
    }

    #[test]
    fn key_reveal_via_lower_index_still_verifies() {
        // The exact key instance can be missed; any later accepted index
        // at or below it reconstructs the key by hashing forward.
        let old = chain(9);
        let new = HashChain::generate([0x99; 32], 9).unwrap();
        let mut p = Prover::new(cfg(VariantKind::A, &old, false));
        let mut req = request_at(&old, 8, 1000);
        req.renewal = Some(build_renewal(&old, 8, new.anchor(), 2).unwrap());
        p.handle_request(&req);
        // Key index is 5; jump straight to 3.
        p.handle_request(&request_at(&old, 3, 2000));
        assert!(!p.handle_request(&request_at(&new, 8, 3000)).is_empty());
    }
}
