//! Verifier-side protocol logic.
//!
//! The verifier owns the hash chain, issues one request per attestation
//! instance, checks incoming reports against its device registry, and
//! partitions the network into attested, failed, and silent devices at
//! the instance timeout.
//!
//! Chain renewal is driven from here. An announcement piggybacks a new
//! anchor on a regular request, authenticated with a chain link that
//! stays secret for `k + 1` more instances. After the keying link is
//! disclosed the verifier sends a single probe instance on the new
//! chain: full participation commits the switch, anything less reverts
//! to the old chain, whose remaining `k` links keep the network
//! serviceable while the operator investigates.

use alloc::vec;
use alloc::vec::Vec;

use crate::chain::{build_renewal, Hash, HashChain};
use crate::mac::DeviceKey;
use crate::wire::{report_auth, AttReport, AttRequest, Heights, VariantKind};

/// Instance timeout: full request descent and report ascent for `n`
/// devices plus one MAC computation and scheduling slack.
pub fn compute_timeout(
    n: u32,
    t_request_us: u64,
    t_hash_us: u64,
    t_report_us: u64,
    t_mac_us: u64,
    t_slack_us: u64,
) -> u64 {
    n as u64 * (t_request_us + t_hash_us + t_report_us) + t_mac_us + t_slack_us
}

/// Absolute attestation instant for RTC scheduling: deep enough in the
/// future for the request to cross the whole network.
pub fn compute_attest_time(
    height_net: u32,
    t_request_us: u64,
    t_hash_us: u64,
    t_slack_us: u64,
    now_us: u64,
) -> u64 {
    height_net as u64 * (t_request_us + t_hash_us) + t_slack_us + now_us
}

/// Relative wait a clockless device applies: remaining request descent
/// time below its own position.
pub fn compute_attest_wait(
    height_net: u32,
    height_cur: u32,
    t_request_us: u64,
    t_hash_us: u64,
) -> u64 {
    height_net.saturating_sub(height_cur) as u64 * (t_request_us + t_hash_us)
}

#[derive(Debug, Clone)]
pub struct DeviceRecord {
    pub key: DeviceKey,
    /// Reference measurement value the device must report, when the
    /// deployment uses measurement reporting.
    pub lmt: Option<Hash>,
    /// Hop distance from the verifier, ground truth from the topology.
    pub height: u32,
}

/// Registered devices, indexed by id starting at 1.
#[derive(Debug, Clone)]
pub struct Registry {
    devices: Vec<DeviceRecord>,
}

impl Registry {
    pub fn new(devices: Vec<DeviceRecord>) -> Self {
        Registry { devices }
    }

    pub fn len(&self) -> u32 {
        self.devices.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn device(&self, id: u32) -> Option<&DeviceRecord> {
        if id == 0 {
            return None;
        }
        self.devices.get(id as usize - 1)
    }
}

/// Outcome partition of one instance. The three sets are disjoint and
/// together cover every registered device.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TallySets {
    pub attest: Vec<u32>,
    pub fail: Vec<u32>,
    pub norep: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportVerdict {
    /// Authentic, fresh, and on time.
    Accepted,
    /// Authentic but stale, mistimed, or carrying a wrong measurement.
    Failed,
    /// Unattributable or irrelevant; leaves no trace in the tally.
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ReportStatus {
    None,
    Attest,
    Fail,
}

#[derive(Debug, Clone)]
pub struct RenewalPlanCfg {
    /// Margin of old-chain instances that stay usable after the keying
    /// link is disclosed.
    pub k: u32,
    /// Chain index whose instance carries the announcement.
    pub announce_index: u32,
    /// Root of the replacement chain.
    pub next_root: Hash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RenewalState {
    Idle,
    Announced { key_index: u32, clean: bool },
    ProbeNext,
    Probing,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenewalEvent {
    /// This instance carried the new-chain announcement.
    Announced,
    /// Keying link disclosed with a fully responsive window; the next
    /// instance probes the new chain.
    ProbeScheduled,
    /// Some device was unresponsive between announcement and key
    /// disclosure; the switch is abandoned without a probe.
    WindowFailed,
    /// Probe fully attested; the new chain is now active.
    Confirmed,
    /// Probe incomplete; reverted to the old chain.
    Reverted,
}

#[derive(Debug, Clone)]
pub struct VerifierConfig {
    pub variant: VariantKind,
    pub height_net: u32,
    pub t_request_us: u64,
    pub t_hash_us: u64,
    pub t_report_us: u64,
    pub t_mac_us: u64,
    pub t_slack_us: u64,
    /// Accepted deviation between a reported attestation time and its
    /// expected value.
    pub sync_tolerance_us: u64,
    pub renewal: Option<RenewalPlanCfg>,
}

/// Everything the simulation needs to know about an issued instance.
#[derive(Debug, Clone, Copy)]
pub struct InstanceMeta {
    pub index: u32,
    pub t_attest_us: u64,
    pub timeout_at_us: u64,
    pub on_new_chain: bool,
    pub announces_renewal: bool,
}

#[derive(Debug, Clone)]
pub struct TallyOutcome {
    pub index: u32,
    pub on_new_chain: bool,
    pub sets: TallySets,
    pub renewal: Option<RenewalEvent>,
}

#[derive(Debug)]
struct PendingInstance {
    index: u32,
    on_new_chain: bool,
    revealed_hash: Hash,
    t_attest_us: u64,
    timeout_at_us: u64,
    status: Vec<ReportStatus>,
    /// Devices whose slot is still `None`.
    unclassified: u32,
}

#[derive(Debug)]
pub struct Verifier {
    cfg: VerifierConfig,
    registry: Registry,
    chain: HashChain,
    next_chain: Option<HashChain>,
    ind_next: u32,
    renewal: RenewalState,
    pending: Option<PendingInstance>,
    switched: bool,
    exhausted: bool,
}

impl Verifier {
    pub fn new(cfg: VerifierConfig, registry: Registry, chain: HashChain) -> Self {
        let ind_next = chain.length_m() - 1;
        Verifier {
            cfg,
            registry,
            chain,
            next_chain: None,
            ind_next,
            renewal: RenewalState::Idle,
            pending: None,
            switched: false,
            exhausted: false,
        }
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    /// True once the active chain is the renewed one.
    pub fn on_new_chain(&self) -> bool {
        self.switched
    }

    pub fn pending_timeout_us(&self) -> Option<u64> {
        self.pending.as_ref().map(|p| p.timeout_at_us)
    }

    /// Start an attestation instance. Returns the request to flood and
    /// the instance bookkeeping, or nothing once the chain is spent.
    pub fn initiate(&mut self, now_us: u64) -> Option<(AttRequest, InstanceMeta)> {
        debug_assert!(self.pending.is_none(), "instance already running");
        if self.exhausted {
            return None;
        }

        let probe = self.renewal == RenewalState::ProbeNext;
        let (index, on_new_chain) = if probe {
            self.renewal = RenewalState::Probing;
            (self.next_chain.as_ref().unwrap().length_m() - 1, true)
        } else {
            // The root link doubles as renewal key material, so it is
            // only ever disclosed as an announced keying instance.
            let key_instance_zero = matches!(
                self.renewal,
                RenewalState::Announced { key_index: 0, .. }
            );
            if self.ind_next == 0 && !key_instance_zero {
                self.exhausted = true;
                return None;
            }
            let index = self.ind_next;
            self.ind_next = self.ind_next.saturating_sub(1);
            (index, self.switched)
        };

        let mut announces = false;
        let mut renewal_payload = None;
        if !probe && !self.switched {
            if let Some(plan) = &self.cfg.renewal {
                if self.renewal == RenewalState::Idle && index == plan.announce_index {
                    let m = self.chain.length_m();
                    let next = HashChain::generate(plan.next_root, m)
                        .expect("renewal chain length validated");
                    let payload = build_renewal(&self.chain, index, next.anchor(), plan.k)
                        .expect("announce index validated against margin");
                    self.next_chain = Some(next);
                    self.renewal = RenewalState::Announced {
                        key_index: index - plan.k - 1,
                        clean: true,
                    };
                    renewal_payload = Some(payload);
                    announces = true;
                }
            }
        }

        let source = if on_new_chain && !self.switched {
            self.next_chain.as_ref().unwrap()
        } else {
            &self.chain
        };
        let revealed_hash = *source.link(index).expect("index below chain length");

        let (t_attest, heights) = match self.cfg.variant {
            VariantKind::A => (
                compute_attest_time(
                    self.cfg.height_net,
                    self.cfg.t_request_us,
                    self.cfg.t_hash_us,
                    self.cfg.t_slack_us,
                    now_us,
                ),
                None,
            ),
            VariantKind::B => (
                0,
                Some(Heights {
                    height_cur: 0,
                    height_net: self.cfg.height_net,
                }),
            ),
        };

        let request = AttRequest {
            id_snd: 0,
            hash_new: revealed_hash,
            hash_ind_new: index,
            t_attest,
            heights,
            renewal: renewal_payload,
        };
        let timeout_at = now_us
            + compute_timeout(
                self.registry.len(),
                self.cfg.t_request_us,
                self.cfg.t_hash_us,
                self.cfg.t_report_us,
                self.cfg.t_mac_us,
                self.cfg.t_slack_us,
            );
        let meta = InstanceMeta {
            index,
            t_attest_us: t_attest,
            timeout_at_us: timeout_at,
            on_new_chain,
            announces_renewal: announces,
        };
        self.pending = Some(PendingInstance {
            index,
            on_new_chain,
            revealed_hash,
            t_attest_us: t_attest,
            timeout_at_us: timeout_at,
            status: vec![ReportStatus::None; self.registry.len() as usize + 1],
            unclassified: self.registry.len(),
        });
        Some((request, meta))
    }

    /// Check one received report against the running instance.
    pub fn on_report(&mut self, report: &AttReport, now_us: u64) -> ReportVerdict {
        let Some(pending) = &mut self.pending else {
            return ReportVerdict::Ignored;
        };
        if now_us >= pending.timeout_at_us {
            return ReportVerdict::Ignored;
        }
        let Some(device) = self.registry.device(report.id_dev) else {
            return ReportVerdict::Ignored;
        };
        let slot = report.id_dev as usize;
        if pending.status[slot] != ReportStatus::None {
            return ReportVerdict::Ignored;
        }
        let expected_auth = report_auth(
            &device.key,
            report.id_par,
            report.t_attest_prime,
            &report.hash_new,
            report.lmt_dev.as_ref(),
        );
        if expected_auth != report.auth_report {
            return ReportVerdict::Ignored;
        }

        if report.hash_new != pending.revealed_hash {
            // A stale or fabricated chain link: the report answers some
            // other instance and must not touch this tally.
            return ReportVerdict::Ignored;
        }
        let expected_t = match self.cfg.variant {
            VariantKind::A => pending.t_attest_us,
            VariantKind::B => compute_attest_wait(
                self.cfg.height_net,
                device.height - 1,
                self.cfg.t_request_us,
                self.cfg.t_hash_us,
            ),
        };
        let on_time = report.t_attest_prime.abs_diff(expected_t) <= self.cfg.sync_tolerance_us;
        let measurement_ok = report.lmt_dev == device.lmt;

        pending.unclassified -= 1;
        if on_time && measurement_ok {
            pending.status[slot] = ReportStatus::Attest;
            ReportVerdict::Accepted
        } else {
            pending.status[slot] = ReportStatus::Fail;
            ReportVerdict::Failed
        }
    }

    /// Every registered device has a classified report for the running
    /// instance; the tally needs no further waiting.
    pub fn all_reported(&self) -> bool {
        self.pending.as_ref().is_some_and(|p| p.unclassified == 0)
    }

    /// Close the running instance at its timeout and classify every
    /// device. Advances the renewal plan.
    pub fn tally(&mut self) -> TallyOutcome {
        let pending = self.pending.take().expect("no instance to tally");
        let mut sets = TallySets::default();
        for id in 1..=self.registry.len() {
            match pending.status[id as usize] {
                ReportStatus::None => sets.norep.push(id),
                ReportStatus::Attest => sets.attest.push(id),
                ReportStatus::Fail => sets.fail.push(id),
            }
        }
        let all_attest = sets.attest.len() as u32 == self.registry.len();

        let mut event = None;
        match self.renewal {
            RenewalState::Announced { key_index, clean } => {
                let clean = clean && all_attest;
                if pending.index == key_index {
                    if clean {
                        self.renewal = RenewalState::ProbeNext;
                        event = Some(RenewalEvent::ProbeScheduled);
                    } else {
                        self.renewal = RenewalState::Done;
                        self.next_chain = None;
                        event = Some(RenewalEvent::WindowFailed);
                    }
                } else {
                    self.renewal = RenewalState::Announced { key_index, clean };
                }
            }
            RenewalState::Probing => {
                if all_attest {
                    self.chain = self.next_chain.take().unwrap();
                    self.ind_next = self.chain.length_m() - 2;
                    self.switched = true;
                    self.renewal = RenewalState::Done;
                    event = Some(RenewalEvent::Confirmed);
                } else {
                    self.next_chain = None;
                    self.renewal = RenewalState::Done;
                    event = Some(RenewalEvent::Reverted);
                }
            }
            _ => {}
        }
        if event.is_none() && pending.index > 0 {
            if let Some(plan) = &self.cfg.renewal {
                if pending.index == plan.announce_index
                    && matches!(self.renewal, RenewalState::Announced { .. })
                {
                    event = Some(RenewalEvent::Announced);
                }
            }
        }

        TallyOutcome {
            index: pending.index,
            on_new_chain: pending.on_new_chain,
            sets,
            renewal: event,
        }
    }
}
