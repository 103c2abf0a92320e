//! Deterministic discrete-event simulation of attestation rounds.
//!
//! Events are ordered by time with a monotone sequence number as the
//! tie breaker, so a scenario value determines the run bit for bit.
//! Links are point-to-point and half-duplex per direction: each
//! directed link serializes frames in FIFO order at the configured
//! bandwidth, then adds propagation latency. Requests fan out along
//! tree children; reports climb parent by parent, forwarded verbatim.
//!
//! Cost model: link verification time is charged between a request's
//! arrival and its processing, measurement plus MAC time between the
//! attest instant and the report entering the wire. The attest reading
//! is sampled at the fire instant, before those costs.

use alloc::collections::BinaryHeap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::adversary::{AdversaryScript, TxContext, Verdict};
use crate::chain::HashChain;
use crate::prover::{Prover, ProverAction, ProverConfig, TimerKind, TimerTarget};
use crate::scenario::{NodeClock, Scenario, ScenarioError};
use crate::topology::{Topology, VERIFIER_ID};
use crate::trace::{effective_full, Trace, TraceEvent};
use crate::verifier::{
    DeviceRecord, InstanceMeta, Registry, RenewalEvent, RenewalPlanCfg, ReportVerdict, TallySets,
    Verifier, VerifierConfig,
};
use crate::wire::{classify, decode, Message, MsgClass};

#[derive(Debug)]
enum EventKind {
    Initiate,
    Deliver { from: u32, to: u32, bytes: Arc<Vec<u8>> },
    InjectFire { from: u32, to: u32, bytes: Arc<Vec<u8>> },
    ProcessRequest { id: u32, bytes: Arc<Vec<u8>> },
    AttestFire { id: u32, epoch: u64 },
    ForwardFire { id: u32, epoch: u64 },
    EmitReport { id: u32, to: u32, bytes: Arc<Vec<u8>> },
    Tally { ordinal: u64 },
}

struct Event {
    at_us: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.at_us == other.at_us && self.seq == other.seq
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at_us
            .cmp(&self.at_us)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Per-device observations for one instance. All times are true
/// simulation time except the claimed reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeInstanceRecord {
    /// When the device finished verifying the request; the instant a
    /// wait-free scheme would attest.
    pub request_done_us: Option<u64>,
    /// When the attest timer fired.
    pub attest_true_us: Option<u64>,
    /// The local reading reported as the attestation time.
    pub attest_reading_us: Option<u64>,
    /// When the verifier accepted the device's report.
    pub accept_true_us: Option<u64>,
    /// False for devices configured as compromised.
    pub benign: bool,
}

impl Default for NodeInstanceRecord {
    fn default() -> Self {
        NodeInstanceRecord {
            request_done_us: None,
            attest_true_us: None,
            attest_reading_us: None,
            accept_true_us: None,
            benign: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceOutcome {
    pub ordinal: u64,
    pub initiate_us: u64,
    pub index: u32,
    pub on_new_chain: bool,
    /// Absolute attest target for RTC scheduling; zero under the
    /// clockless variant.
    pub t_attest_us: u64,
    pub tally_us: u64,
    pub sets: TallySets,
    pub renewal: Option<RenewalEvent>,
    /// Indexed by device id; slot 0 is unused.
    pub per_node: Vec<NodeInstanceRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    pub instances: Vec<InstanceOutcome>,
    pub trace: Trace,
    /// The chain ran out before the requested instance count.
    pub exhausted: bool,
    /// The run ended with the renewed chain active.
    pub switched_chain: bool,
}

pub fn run(scenario: &Scenario) -> Result<RunOutput, ScenarioError> {
    scenario.validate()?;
    Ok(Sim::new(scenario).run())
}

struct Recorders {
    request_done: Vec<Option<u64>>,
    attest_true: Vec<Option<u64>>,
    attest_reading: Vec<Option<u64>>,
    accept_true: Vec<Option<u64>>,
    benign: Vec<bool>,
}

impl Recorders {
    fn new(n_nodes: usize) -> Self {
        Recorders {
            request_done: vec![None; n_nodes],
            attest_true: vec![None; n_nodes],
            attest_reading: vec![None; n_nodes],
            accept_true: vec![None; n_nodes],
            benign: vec![true; n_nodes],
        }
    }

    fn reset(&mut self) {
        self.request_done.fill(None);
        self.attest_true.fill(None);
        self.attest_reading.fill(None);
        self.accept_true.fill(None);
    }

    fn snapshot(&self) -> Vec<NodeInstanceRecord> {
        (0..self.request_done.len())
            .map(|i| NodeInstanceRecord {
                request_done_us: self.request_done[i],
                attest_true_us: self.attest_true[i],
                attest_reading_us: self.attest_reading[i],
                accept_true_us: self.accept_true[i],
                benign: self.benign[i],
            })
            .collect()
    }
}

enum Flow {
    Continue,
    Stop,
}

struct Sim<'a> {
    sc: &'a Scenario,
    topo: Topology,
    verifier: Verifier,
    provers: Vec<Prover>,
    clocks: Vec<NodeClock>,
    timer_zero_us: Vec<u64>,
    up_busy_us: Vec<u64>,
    down_busy_us: Vec<u64>,
    heap: BinaryHeap<Event>,
    seq: u64,
    script: AdversaryScript,
    jitter_rng: Option<ChaCha12Rng>,
    cur_meta: Option<InstanceMeta>,
    cur_initiate_us: u64,
    rec: Recorders,
    outcomes: Vec<InstanceOutcome>,
    trace: Trace,
    drain_margin_us: u64,
    exhausted: bool,
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario) -> Self {
        let topo = Topology::build(sc.topology, sc.n_provers).expect("validated");
        let height_net = topo.height_net();
        let n_nodes = topo.node_count() as usize;

        let registry = Registry::new(
            (1..=sc.n_provers)
                .map(|id| DeviceRecord {
                    key: sc.device_key(id),
                    lmt: sc.device_lmt(id),
                    height: topo.height(id),
                })
                .collect(),
        );
        let chain = HashChain::generate(sc.chain_root(0), sc.chain_m).expect("validated");
        let verifier = Verifier::new(
            VerifierConfig {
                variant: sc.variant,
                height_net,
                t_request_us: sc.timing.t_request_us,
                t_hash_us: sc.timing.t_hash_us,
                t_report_us: sc.timing.t_report_us,
                t_mac_us: sc.timing.t_mac_us,
                t_slack_us: sc.timing.t_slack_us,
                sync_tolerance_us: sc.sync_tolerance_us,
                renewal: sc.renewal.as_ref().map(|r| RenewalPlanCfg {
                    k: r.k,
                    announce_index: r.announce_index,
                    next_root: sc.chain_root(1),
                }),
            },
            registry,
            chain.clone(),
        );

        let provers = (1..=sc.n_provers)
            .map(|id| {
                Prover::new(ProverConfig {
                    id,
                    parent: topo.parent(id),
                    has_children: !topo.children(id).is_empty(),
                    variant: sc.variant,
                    key: sc.device_key(id),
                    // The registry keeps the registered reference; a
                    // compromised device measures its altered software.
                    lmt: if sc.is_compromised(id) {
                        sc.device_lmt_tampered(id)
                    } else {
                        sc.device_lmt(id)
                    },
                    chain_m: sc.chain_m,
                    anchor: *chain.anchor(),
                    t_request_us: sc.timing.t_request_us,
                    t_hash_us: sc.timing.t_hash_us,
                    forward_window_us: sc.forward_window_us(topo.height(id), height_net),
                })
            })
            .collect();

        let jitter_rng = (sc.link.jitter_us > 0)
            .then(|| ChaCha12Rng::seed_from_u64(sc.jitter_seed()));
        let drain_margin_us =
            sc.max_forward_window_us(height_net) + sc.timing.t_mac_us + sc.inter_instance_gap_us + 1;
        let trace = Trace::new(effective_full(sc.trace, topo.node_count()));
        let mut rec = Recorders::new(n_nodes);
        for &id in &sc.compromised {
            rec.benign[id as usize] = false;
        }

        Sim {
            sc,
            verifier,
            provers,
            clocks: sc.draw_clocks(),
            timer_zero_us: vec![0; n_nodes],
            up_busy_us: vec![0; n_nodes],
            down_busy_us: vec![0; n_nodes],
            heap: BinaryHeap::new(),
            seq: 0,
            script: sc.adversary.clone(),
            jitter_rng,
            cur_meta: None,
            cur_initiate_us: 0,
            rec,
            outcomes: Vec::with_capacity(sc.instances as usize),
            trace,
            drain_margin_us,
            exhausted: false,
            topo,
        }
    }

    fn push(&mut self, at_us: u64, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Event {
            at_us,
            seq: self.seq,
            kind,
        });
    }

    fn run(mut self) -> RunOutput {
        for inj in self.script.injections.clone() {
            self.push(
                inj.at_us,
                EventKind::InjectFire {
                    from: inj.from,
                    to: inj.to,
                    bytes: Arc::new(inj.bytes),
                },
            );
        }
        self.push(0, EventKind::Initiate);

        while let Some(ev) = self.heap.pop() {
            let flow = match ev.kind {
                EventKind::Initiate => self.on_initiate(ev.at_us),
                EventKind::Deliver { from, to, bytes } => {
                    self.on_deliver(ev.at_us, from, to, bytes)
                }
                EventKind::InjectFire { from, to, bytes } => {
                    self.trace.push(
                        ev.at_us,
                        self.seq,
                        TraceEvent::Inject {
                            from,
                            to,
                            class: classify(&bytes),
                        },
                    );
                    self.on_deliver(ev.at_us, from, to, bytes)
                }
                EventKind::ProcessRequest { id, bytes } => {
                    self.on_process_request(ev.at_us, id, &bytes)
                }
                EventKind::AttestFire { id, epoch } => self.on_attest_fire(ev.at_us, id, epoch),
                EventKind::ForwardFire { id, epoch } => {
                    self.provers[id as usize - 1].on_forward_timer(epoch);
                    Flow::Continue
                }
                EventKind::EmitReport { id, to, bytes } => {
                    self.transmit(ev.at_us, id, to, bytes);
                    Flow::Continue
                }
                EventKind::Tally { ordinal } => self.on_tally(ev.at_us, ordinal),
            };
            if matches!(flow, Flow::Stop) {
                break;
            }
        }

        RunOutput {
            instances: self.outcomes,
            trace: self.trace,
            exhausted: self.exhausted,
            switched_chain: self.verifier.on_new_chain(),
        }
    }

    fn on_initiate(&mut self, now: u64) -> Flow {
        let Some((request, meta)) = self.verifier.initiate(now) else {
            self.exhausted = true;
            return Flow::Stop;
        };
        self.rec.reset();
        self.cur_initiate_us = now;
        self.trace.push(
            now,
            self.seq,
            TraceEvent::Initiate {
                ordinal: self.outcomes.len() as u64,
                index: meta.index,
                t_attest_us: meta.t_attest_us,
            },
        );
        self.cur_meta = Some(meta);
        let bytes = Arc::new(request.encode());
        self.fan_out(now, VERIFIER_ID, bytes);
        self.push(
            meta.timeout_at_us,
            EventKind::Tally {
                ordinal: self.outcomes.len() as u64,
            },
        );
        Flow::Continue
    }

    fn frame_us(&self, len: usize) -> u64 {
        len as u64 * 8 * 1_000_000 / self.sc.link.bandwidth_bps
    }

    /// Send one frame to every child of `from`. Children hold
    /// contiguous ids in every built shape, so iterating the id range
    /// avoids holding a borrow on the topology across transmit calls.
    fn fan_out(&mut self, now: u64, from: u32, bytes: Arc<Vec<u8>>) {
        let children = self.topo.children(from);
        let (first, last) = match (children.first(), children.last()) {
            (Some(&f), Some(&l)) => (f, l),
            _ => return,
        };
        for child in first..=last {
            self.transmit(now, from, child, bytes.clone());
        }
    }

    /// Hand a frame to the directed link `from -> to`, applying the
    /// adversary script, FIFO serialization, latency, and jitter.
    fn transmit(&mut self, now: u64, from: u32, to: u32, bytes: Arc<Vec<u8>>) {
        let n = self.clocks.len();
        let in_range = from != to && (from as usize) < n && (to as usize) < n;
        let up = in_range && self.topo.parent(from) == to;
        let down = in_range && self.topo.parent(to) == from;
        if !up && !down {
            self.trace
                .push(now, self.seq, TraceEvent::Undeliverable { from, to });
            return;
        }
        let mut bytes = bytes;
        let mut extra_delay = 0;
        if !self.script.is_empty() {
            let class = classify(&bytes);
            let report_dev = (class == MsgClass::Report && bytes.len() >= 6)
                .then(|| u32::from_be_bytes(bytes[2..6].try_into().unwrap()));
            let ctx = TxContext {
                from,
                to,
                instance: self.outcomes.len() as u64,
                class,
                report_dev,
            };
            match self.script.apply(&ctx, &bytes) {
                Verdict::Pass => {}
                Verdict::Drop => {
                    self.trace
                        .push(now, self.seq, TraceEvent::AdversaryDrop { from, to });
                    return;
                }
                Verdict::DelayUs(d) => {
                    self.trace.push(
                        now,
                        self.seq,
                        TraceEvent::AdversaryDelay {
                            from,
                            to,
                            delay_us: d,
                        },
                    );
                    extra_delay = d;
                }
                Verdict::Replace(altered) => {
                    self.trace
                        .push(now, self.seq, TraceEvent::AdversaryTamper { from, to });
                    bytes = Arc::new(altered);
                }
                Verdict::ReplayAt(at) => {
                    // A copy cannot land before the original was seen.
                    let at = at.max(now);
                    self.trace
                        .push(now, self.seq, TraceEvent::AdversaryReplay { from, to, at_us: at });
                    self.push(
                        at,
                        EventKind::Deliver {
                            from,
                            to,
                            bytes: bytes.clone(),
                        },
                    );
                }
            }
        }

        let frame = self.frame_us(bytes.len());
        let busy = if up {
            &mut self.up_busy_us[from as usize]
        } else {
            &mut self.down_busy_us[to as usize]
        };
        let start = now.max(*busy);
        *busy = start + frame;
        let jitter = match &mut self.jitter_rng {
            Some(rng) => rng.next_u64() % (self.sc.link.jitter_us + 1),
            None => 0,
        };
        let deliver_at = start + frame + self.sc.link.latency_us + jitter + extra_delay;
        self.trace.push(
            now,
            self.seq,
            TraceEvent::Transmit {
                from,
                to,
                deliver_at_us: deliver_at,
                bytes: bytes.clone(),
            },
        );
        self.push(deliver_at, EventKind::Deliver { from, to, bytes });
    }

    fn on_deliver(&mut self, now: u64, from: u32, to: u32, bytes: Arc<Vec<u8>>) -> Flow {
        if to == VERIFIER_ID {
            if classify(&bytes) == MsgClass::Report {
                if let Ok(Message::Report(report)) = decode(&bytes) {
                    let verdict = self.verifier.on_report(&report, now);
                    self.trace.push(
                        now,
                        self.seq,
                        TraceEvent::ReportChecked {
                            id_dev: report.id_dev,
                            verdict,
                        },
                    );
                    if verdict == ReportVerdict::Accepted {
                        if let Some(slot) = self.rec.accept_true.get_mut(report.id_dev as usize) {
                            *slot = Some(now);
                        }
                    }
                    // Every device classified: nothing more can change
                    // this instance, so close it out now.
                    if verdict != ReportVerdict::Ignored && self.verifier.all_reported() {
                        self.push(
                            now,
                            EventKind::Tally {
                                ordinal: self.outcomes.len() as u64,
                            },
                        );
                    }
                }
            }
            return Flow::Continue;
        }
        if to as usize >= self.clocks.len() {
            return Flow::Continue;
        }
        match classify(&bytes) {
            MsgClass::Request => {
                self.push(
                    now + self.sc.timing.t_hash_us,
                    EventKind::ProcessRequest { id: to, bytes },
                );
            }
            MsgClass::Report => {
                // Devices relay only traffic climbing out of their own
                // subtree; anything else would bounce between a
                // misdirected device and its neighbor forever.
                let from_child =
                    (from as usize) < self.clocks.len() && self.topo.parent(from) == to;
                if from_child {
                    if let Some(target) = self.provers[to as usize - 1].on_report() {
                        self.transmit(now, to, target, bytes);
                    }
                }
            }
            MsgClass::Other => {}
        }
        Flow::Continue
    }

    fn on_process_request(&mut self, now: u64, id: u32, bytes: &[u8]) -> Flow {
        let Ok(Message::Request(request)) = decode(bytes) else {
            return Flow::Continue;
        };
        let actions = self.provers[id as usize - 1].handle_request(&request);
        let accepted = !actions.is_empty();
        self.trace
            .push(now, self.seq, TraceEvent::RequestProcessed { id, accepted });
        if accepted {
            self.rec.request_done[id as usize] = Some(now);
        }
        self.apply_actions(now, id, actions);
        Flow::Continue
    }

    fn on_attest_fire(&mut self, now: u64, id: u32, epoch: u64) -> Flow {
        let reading = match self.clocks[id as usize] {
            NodeClock::Rtc(rtc) => rtc.reading(now),
            NodeClock::Timer(t) => t.elapsed_reading(now - self.timer_zero_us[id as usize]),
        };
        let actions = self.provers[id as usize - 1].on_attest_timer(epoch, reading);
        if !actions.is_empty() {
            self.rec.attest_true[id as usize] = Some(now);
            self.rec.attest_reading[id as usize] = Some(reading);
            self.trace.push(
                now,
                self.seq,
                TraceEvent::Attest {
                    id,
                    reading_us: reading,
                },
            );
        }
        self.apply_actions(now, id, actions);
        Flow::Continue
    }

    fn apply_actions(&mut self, now: u64, id: u32, actions: Vec<ProverAction>) {
        for action in actions {
            match action {
                ProverAction::Broadcast(bytes) => {
                    self.fan_out(now, id, Arc::new(bytes));
                }
                ProverAction::SendReport { to, bytes } => {
                    self.push(
                        now + self.sc.timing.t_mac_us,
                        EventKind::EmitReport {
                            id,
                            to,
                            bytes: Arc::new(bytes),
                        },
                    );
                }
                ProverAction::SetTimer {
                    kind,
                    target,
                    epoch,
                } => {
                    let fire_at = match target {
                        TimerTarget::RtcReading(r) => match self.clocks[id as usize] {
                            NodeClock::Rtc(rtc) => now.max(rtc.true_time_for_reading(r)),
                            NodeClock::Timer(_) => now,
                        },
                        TimerTarget::ElapsedFromNow(w) => {
                            if kind == TimerKind::Attest {
                                self.timer_zero_us[id as usize] = now;
                            }
                            now + match self.clocks[id as usize] {
                                NodeClock::Rtc(_) => w,
                                NodeClock::Timer(t) => t.true_elapsed_for_reading(w),
                            }
                        }
                    };
                    let kind = match kind {
                        TimerKind::Attest => EventKind::AttestFire { id, epoch },
                        TimerKind::Forward => EventKind::ForwardFire { id, epoch },
                    };
                    self.push(fire_at, kind);
                }
            }
        }
    }

    fn on_tally(&mut self, now: u64, ordinal: u64) -> Flow {
        // An early close leaves the timeout event behind; it arrives
        // here with a superseded ordinal and must do nothing.
        if ordinal != self.outcomes.len() as u64 {
            return Flow::Continue;
        }
        let Some(meta) = self.cur_meta.take() else {
            return Flow::Continue;
        };
        let outcome = self.verifier.tally();
        self.trace.push(
            now,
            self.seq,
            TraceEvent::Tally {
                ordinal: self.outcomes.len() as u64,
                attest: outcome.sets.attest.len() as u32,
                fail: outcome.sets.fail.len() as u32,
                norep: outcome.sets.norep.len() as u32,
            },
        );
        if let Some(event) = outcome.renewal {
            self.trace.push(now, self.seq, TraceEvent::Renewal { event });
        }
        self.outcomes.push(InstanceOutcome {
            ordinal: self.outcomes.len() as u64,
            initiate_us: self.cur_initiate_us,
            index: outcome.index,
            on_new_chain: outcome.on_new_chain,
            t_attest_us: meta.t_attest_us,
            tally_us: now,
            sets: outcome.sets,
            renewal: outcome.renewal,
            per_node: self.rec.snapshot(),
        });
        if self.outcomes.len() as u32 >= self.sc.instances {
            return Flow::Stop;
        }
        self.push(now + self.drain_margin_us, EventKind::Initiate);
        Flow::Continue
    }
}
