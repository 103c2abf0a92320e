//! Complete description of one simulation run.
//!
//! Everything random is derived from the single `seed`: device keys,
//! measurement references, chain roots, per-device clock error, and
//! link jitter each get an independent deterministic stream, so a
//! scenario value fully determines the run.

use alloc::vec::Vec;
use core::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::adversary::AdversaryScript;
use crate::chain::{sha256, Hash};
use crate::clock::{Rtc, SecureTimer};
use crate::mac::{frame_fields, DeviceKey};
use crate::topology::{Topology, TopologyError, TopologyKind};
use crate::trace::TraceMode;
use crate::wire::VariantKind;

/// Protocol timing constants, all in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timing {
    /// Budget for one request hop (transmission plus propagation).
    pub t_request_us: u64,
    /// Chain link verification cost on a device.
    pub t_hash_us: u64,
    /// Budget for one report hop.
    pub t_report_us: u64,
    /// Measurement plus report MAC cost on a device.
    pub t_mac_us: u64,
    /// Scheduling slack.
    pub t_slack_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkParams {
    pub bandwidth_bps: u64,
    pub latency_us: u64,
    /// Extra per-frame delay drawn uniformly from `0..=jitter_us`.
    pub jitter_us: u64,
}

/// Per-device clock error ranges; each device draws uniformly from the
/// closed interval that applies to its variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockSpread {
    /// RTC offset range in microseconds.
    pub rtc_offset_us: (i64, i64),
    /// Timer rate error range in parts per million.
    pub drift_ppm: (i32, i32),
}

impl ClockSpread {
    pub fn none() -> Self {
        ClockSpread {
            rtc_offset_us: (0, 0),
            drift_ppm: (0, 0),
        }
    }

    pub fn symmetric_offset(max_us: i64) -> Self {
        ClockSpread {
            rtc_offset_us: (-max_us, max_us),
            drift_ppm: (0, 0),
        }
    }

    pub fn symmetric_drift(max_ppm: i32) -> Self {
        ClockSpread {
            rtc_offset_us: (0, 0),
            drift_ppm: (-max_ppm, max_ppm),
        }
    }
}

/// Whether devices append a measurement value to their reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementMode {
    /// Reports carry only the timing evidence.
    Unreported,
    /// Reports carry a measurement checked against a per-device
    /// reference.
    Referenced,
}

/// How long a device keeps relaying descendant reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardTimerMode {
    /// Uniform worst-case window for every device.
    MaxDelay,
    /// Window shrinks with the device's depth, bounding it by the
    /// deepest possible subtree below.
    HeightScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenewalScenario {
    pub k: u32,
    pub announce_index: u32,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: TopologyKind,
    pub n_provers: u32,
    pub variant: VariantKind,
    pub chain_m: u32,
    pub seed: u64,
    pub instances: u32,
    pub timing: Timing,
    pub link: LinkParams,
    /// Accepted deviation between reported and expected attestation
    /// times; by convention the scheduling slack.
    pub sync_tolerance_us: u64,
    pub clock: ClockSpread,
    pub measurement: MeasurementMode,
    /// Devices whose software no longer matches the registered
    /// reference measurement.
    pub compromised: Vec<u32>,
    pub renewal: Option<RenewalScenario>,
    pub forward_timer: ForwardTimerMode,
    pub trace: TraceMode,
    pub inter_instance_gap_us: u64,
    pub adversary: AdversaryScript,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            topology: TopologyKind::Star,
            n_provers: 10,
            variant: VariantKind::A,
            chain_m: 1024,
            seed: 1,
            instances: 1,
            timing: Timing {
                t_request_us: 5_000,
                t_hash_us: 13_000,
                t_report_us: 4_000,
                t_mac_us: 29_500,
                t_slack_us: 5_000,
            },
            link: LinkParams {
                bandwidth_bps: 250_000,
                latency_us: 0,
                jitter_us: 0,
            },
            sync_tolerance_us: 5_000,
            clock: ClockSpread::none(),
            measurement: MeasurementMode::Unreported,
            compromised: Vec::new(),
            renewal: None,
            forward_timer: ForwardTimerMode::MaxDelay,
            trace: TraceMode::Auto,
            inter_instance_gap_us: 10_000,
            adversary: AdversaryScript::empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    Topology(TopologyError),
    ChainTooShort(u32),
    ZeroBandwidth,
    ClockBoundsReversed,
    DriftOutOfRange(i32),
    CompromisedOutOfRange(u32),
    ZeroInstances,
    RenewalMarginTooWide { k: u32, announce_index: u32 },
    RenewalAnnounceBeyondChain { announce_index: u32, chain_m: u32 },
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Topology(e) => write!(f, "{e}"),
            ScenarioError::ChainTooShort(m) => {
                write!(f, "chain length {m} too short, need at least 2 links")
            }
            ScenarioError::ZeroBandwidth => write!(f, "link bandwidth must be positive"),
            ScenarioError::ClockBoundsReversed => {
                write!(f, "clock error range has lower bound above upper bound")
            }
            ScenarioError::DriftOutOfRange(p) => {
                write!(f, "drift bound {p} ppm outside (-1000000, 1000000)")
            }
            ScenarioError::CompromisedOutOfRange(id) => {
                write!(f, "compromised id {id} is not a device of this network")
            }
            ScenarioError::ZeroInstances => write!(f, "need at least one instance"),
            ScenarioError::RenewalMarginTooWide { k, announce_index } => write!(
                f,
                "renewal margin {k} leaves no keying link below announce index {announce_index}"
            ),
            ScenarioError::RenewalAnnounceBeyondChain {
                announce_index,
                chain_m,
            } => write!(
                f,
                "announce index {announce_index} beyond last usable link of a {chain_m}-link chain"
            ),
        }
    }
}

impl core::error::Error for ScenarioError {}

/// Per-device clock instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClock {
    Rtc(Rtc),
    Timer(SecureTimer),
}

fn derive(seed: u64, label: &[u8], counter: u32) -> Hash {
    let framed = frame_fields(&[&seed.to_be_bytes(), label, &counter.to_be_bytes()]);
    sha256(&framed)
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        Topology::build(self.topology, self.n_provers).map_err(ScenarioError::Topology)?;
        if self.chain_m < 2 {
            return Err(ScenarioError::ChainTooShort(self.chain_m));
        }
        if self.link.bandwidth_bps == 0 {
            return Err(ScenarioError::ZeroBandwidth);
        }
        let (off_lo, off_hi) = self.clock.rtc_offset_us;
        let (drift_lo, drift_hi) = self.clock.drift_ppm;
        if off_lo > off_hi || drift_lo > drift_hi {
            return Err(ScenarioError::ClockBoundsReversed);
        }
        for ppm in [drift_lo, drift_hi] {
            if ppm.unsigned_abs() >= 1_000_000 {
                return Err(ScenarioError::DriftOutOfRange(ppm));
            }
        }
        for &id in &self.compromised {
            if id == 0 || id > self.n_provers {
                return Err(ScenarioError::CompromisedOutOfRange(id));
            }
        }
        if self.instances == 0 {
            return Err(ScenarioError::ZeroInstances);
        }
        if let Some(r) = &self.renewal {
            if r.announce_index < r.k + 1 {
                return Err(ScenarioError::RenewalMarginTooWide {
                    k: r.k,
                    announce_index: r.announce_index,
                });
            }
            if r.announce_index > self.chain_m - 1 {
                return Err(ScenarioError::RenewalAnnounceBeyondChain {
                    announce_index: r.announce_index,
                    chain_m: self.chain_m,
                });
            }
        }
        Ok(())
    }

    /// Root of chain generation `g` (0 is the initial chain, 1 the
    /// renewal chain).
    pub fn chain_root(&self, generation: u32) -> Hash {
        derive(self.seed, b"chain-root", generation)
    }

    pub fn device_key(&self, id: u32) -> DeviceKey {
        derive(self.seed, b"device-key", id)
    }

    pub fn device_lmt(&self, id: u32) -> Option<Hash> {
        match self.measurement {
            MeasurementMode::Unreported => None,
            MeasurementMode::Referenced => Some(derive(self.seed, b"measurement", id)),
        }
    }

    /// What a compromised device actually measures: software changed,
    /// so the value diverges from the registered reference.
    pub fn device_lmt_tampered(&self, id: u32) -> Option<Hash> {
        match self.measurement {
            MeasurementMode::Unreported => None,
            MeasurementMode::Referenced => Some(derive(self.seed, b"measurement-tampered", id)),
        }
    }

    pub fn is_compromised(&self, id: u32) -> bool {
        self.compromised.contains(&id)
    }

    /// Seed for the link jitter stream.
    pub fn jitter_seed(&self) -> u64 {
        let h = derive(self.seed, b"jitter", 0);
        u64::from_be_bytes(h[..8].try_into().unwrap())
    }

    /// Per-device clocks, drawn in device id order. Index 0 is the
    /// verifier's error-free clock.
    pub fn draw_clocks(&self) -> Vec<NodeClock> {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        let mut clocks = Vec::with_capacity(self.n_provers as usize + 1);
        clocks.push(match self.variant {
            VariantKind::A => NodeClock::Rtc(Rtc { offset_us: 0 }),
            VariantKind::B => NodeClock::Timer(SecureTimer { drift_ppm: 0 }),
        });
        for _ in 1..=self.n_provers {
            let draw = rng.next_u64();
            clocks.push(match self.variant {
                VariantKind::A => NodeClock::Rtc(Rtc {
                    offset_us: uniform_in(draw, self.clock.rtc_offset_us),
                }),
                VariantKind::B => {
                    let (lo, hi) = self.clock.drift_ppm;
                    NodeClock::Timer(SecureTimer {
                        drift_ppm: uniform_in(draw, (lo as i64, hi as i64)) as i32,
                    })
                }
            });
        }
        clocks
    }

    /// Report forwarding window for a device at `height`.
    pub fn forward_window_us(&self, height: u32, height_net: u32) -> u64 {
        let t = &self.timing;
        let hops = match self.forward_timer {
            ForwardTimerMode::MaxDelay => self.n_provers as u64,
            ForwardTimerMode::HeightScaled => height_net.saturating_sub(height) as u64 + 1,
        };
        t.t_mac_us + hops * self.t_report_or_min() + t.t_slack_us
    }

    /// Upper bound of `forward_window_us` over all devices.
    pub fn max_forward_window_us(&self, height_net: u32) -> u64 {
        self.forward_window_us(1, height_net)
            .max(self.forward_window_us(height_net, height_net))
    }

    fn t_report_or_min(&self) -> u64 {
        self.timing.t_report_us.max(1)
    }
}

fn uniform_in(draw: u64, (lo, hi): (i64, i64)) -> i64 {
    if lo >= hi {
        return lo;
    }
    let span = (hi as i128 - lo as i128 + 1) as u128;
    (lo as i128 + (draw as u128 % span) as i128) as i64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_is_valid() {
        assert_eq!(Scenario::default().validate(), Ok(()));
    }

    #[test]
    fn validation_catches_bad_parameters() {
        let mut s = Scenario::default();
        s.chain_m = 1;
        assert_eq!(s.validate(), Err(ScenarioError::ChainTooShort(1)));

        let mut s = Scenario::default();
        s.link.bandwidth_bps = 0;
        assert_eq!(s.validate(), Err(ScenarioError::ZeroBandwidth));

        let mut s = Scenario::default();
        s.topology = TopologyKind::Tree { degree: 1 };
        assert!(matches!(s.validate(), Err(ScenarioError::Topology(_))));

        let mut s = Scenario::default();
        s.clock.rtc_offset_us = (5, -5);
        assert_eq!(s.validate(), Err(ScenarioError::ClockBoundsReversed));

        let mut s = Scenario::default();
        s.clock.drift_ppm = (-1_000_000, 0);
        assert_eq!(s.validate(), Err(ScenarioError::DriftOutOfRange(-1_000_000)));

        let mut s = Scenario::default();
        s.compromised = alloc::vec![3, 11];
        assert_eq!(s.validate(), Err(ScenarioError::CompromisedOutOfRange(11)));
        s.compromised = alloc::vec![3, 10];
        assert_eq!(s.validate(), Ok(()));

        let mut s = Scenario::default();
        s.renewal = Some(RenewalScenario {
            k: 5,
            announce_index: 5,
        });
        assert!(matches!(
            s.validate(),
            Err(ScenarioError::RenewalMarginTooWide { .. })
        ));

        let mut s = Scenario::default();
        s.renewal = Some(RenewalScenario {
            k: 0,
            announce_index: 1024,
        });
        assert!(matches!(
            s.validate(),
            Err(ScenarioError::RenewalAnnounceBeyondChain { .. })
        ));
    }

    #[test]
    fn derivations_are_deterministic_and_distinct() {
        let s = Scenario::default();
        assert_eq!(s.device_key(3), s.device_key(3));
        assert_ne!(s.device_key(3), s.device_key(4));
        assert_ne!(s.device_key(3), s.chain_root(0)[..]);
        assert_ne!(s.chain_root(0), s.chain_root(1));
        let mut other = Scenario::default();
        other.seed = 2;
        assert_ne!(s.device_key(3), other.device_key(3));
        assert_eq!(s.device_lmt(1), None);
        assert_eq!(s.device_lmt_tampered(1), None);
        let mut m = Scenario::default();
        m.measurement = MeasurementMode::Referenced;
        assert!(m.device_lmt(1).is_some());
        assert_ne!(m.device_lmt(1), m.device_lmt(2));
        assert_ne!(m.device_lmt_tampered(1), m.device_lmt(1));
        assert_eq!(m.device_lmt_tampered(1), m.device_lmt_tampered(1));
    }

    #[test]
    fn clock_draws_are_bounded_and_id_ordered() {
        let mut s = Scenario::default();
        s.n_provers = 50;
        s.clock = ClockSpread::symmetric_offset(40);
        let clocks = s.draw_clocks();
        assert_eq!(clocks.len(), 51);
        assert_eq!(clocks[0], NodeClock::Rtc(Rtc { offset_us: 0 }));
        let mut seen_nonzero = false;
        for c in &clocks[1..] {
            let NodeClock::Rtc(rtc) = c else {
                panic!("variant A draws RTCs");
            };
            assert!(rtc.offset_us.abs() <= 40);
            seen_nonzero |= rtc.offset_us != 0;
        }
        assert!(seen_nonzero);
        assert_eq!(clocks, s.draw_clocks());

        s.variant = VariantKind::B;
        s.clock = ClockSpread::symmetric_drift(100);
        for c in &s.draw_clocks()[1..] {
            let NodeClock::Timer(t) = c else {
                panic!("variant B draws timers");
            };
            assert!(t.drift_ppm.abs() <= 100);
        }
    }

    #[test]
    fn asymmetric_clock_ranges_stay_inside_their_bounds() {
        let mut s = Scenario::default();
        s.n_provers = 80;
        s.clock.rtc_offset_us = (10, 25);
        for c in &s.draw_clocks()[1..] {
            let NodeClock::Rtc(rtc) = c else {
                panic!("variant A draws RTCs");
            };
            assert!((10..=25).contains(&rtc.offset_us));
        }

        s.variant = VariantKind::B;
        s.clock = ClockSpread {
            rtc_offset_us: (0, 0),
            drift_ppm: (-70, -70),
        };
        for c in &s.draw_clocks()[1..] {
            let NodeClock::Timer(t) = c else {
                panic!("variant B draws timers");
            };
            assert_eq!(t.drift_ppm, -70);
        }
    }

    #[test]
    fn forward_window_modes() {
        let s = Scenario::default();
        // Uniform: covers every device's report budget.
        assert_eq!(s.forward_window_us(1, 1), 29_500 + 10 * 4_000 + 5_000);
        let mut hs = Scenario::default();
        hs.forward_timer = ForwardTimerMode::HeightScaled;
        hs.n_provers = 100;
        // Depth 3 of a height-10 network: 8 hops' worth.
        assert_eq!(hs.forward_window_us(3, 10), 29_500 + 8 * 4_000 + 5_000);
        assert!(hs.max_forward_window_us(10) >= hs.forward_window_us(5, 10));
    }
}
