//! Event trace of a simulation run.
//!
//! Full tracing records every protocol-relevant event including the
//! verbatim frame bytes, which is exact but heavy; summary runs skip
//! the record stream and rely on the per-instance outcome tables. The
//! automatic mode picks full tracing for networks small enough that
//! nobody will mind the volume.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::verifier::{RenewalEvent, ReportVerdict};
use crate::wire::MsgClass;

/// Largest network that still gets full tracing under `Auto`.
pub const AUTO_FULL_TRACE_MAX_NODES: u32 = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceMode {
    Auto,
    Full,
    Summary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    Initiate {
        ordinal: u64,
        index: u32,
        t_attest_us: u64,
    },
    /// A frame entered a link; `deliver_at_us` is when it will arrive.
    Transmit {
        from: u32,
        to: u32,
        deliver_at_us: u64,
        bytes: Arc<Vec<u8>>,
    },
    AdversaryDrop {
        from: u32,
        to: u32,
    },
    AdversaryDelay {
        from: u32,
        to: u32,
        delay_us: u64,
    },
    AdversaryTamper {
        from: u32,
        to: u32,
    },
    AdversaryReplay {
        from: u32,
        to: u32,
        at_us: u64,
    },
    Inject {
        from: u32,
        to: u32,
        class: MsgClass,
    },
    /// A frame addressed across a non-existent link; it goes nowhere.
    Undeliverable {
        from: u32,
        to: u32,
    },
    RequestProcessed {
        id: u32,
        accepted: bool,
    },
    Attest {
        id: u32,
        reading_us: u64,
    },
    ReportChecked {
        id_dev: u32,
        verdict: ReportVerdict,
    },
    Tally {
        ordinal: u64,
        attest: u32,
        fail: u32,
        norep: u32,
    },
    Renewal {
        event: RenewalEvent,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub at_us: u64,
    pub seq: u64,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    enabled: bool,
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(enabled: bool) -> Self {
        Trace {
            enabled,
            records: Vec::new(),
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    #[inline]
    pub fn push(&mut self, at_us: u64, seq: u64, event: TraceEvent) {
        if self.enabled {
            self.records.push(TraceRecord { at_us, seq, event });
        }
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }
}

/// Resolve the effective mode for a network of `n_nodes`.
pub fn effective_full(mode: TraceMode, n_nodes: u32) -> bool {
    match mode {
        TraceMode::Full => true,
        TraceMode::Summary => false,
        TraceMode::Auto => n_nodes <= AUTO_FULL_TRACE_MAX_NODES,
    }
}
