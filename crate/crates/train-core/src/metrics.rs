//! Derived measurements over simulation outcomes.

use alloc::collections::BTreeMap;
use alloc::string::String;
use core::fmt::Write;

use crate::engine::InstanceOutcome;
use crate::topology::TopologyKind;
use crate::verifier::TallySets;

/// Spread between the earliest and latest true attest instants, the
/// window an attacker has to show different states to different
/// checks. Devices that never attested are excluded, as are
/// compromised ones: their timing says nothing about the guarantee
/// honest devices get.
pub fn toctou_sa_us(inst: &InstanceOutcome) -> Option<u64> {
    spread(
        inst.per_node
            .iter()
            .filter(|r| r.benign)
            .filter_map(|r| r.attest_true_us),
    )
}

/// Spread a wait-free scheme would exhibit: each device attests the
/// moment it finishes verifying the request.
pub fn toctou_strawman_us(inst: &InstanceOutcome) -> Option<u64> {
    spread(
        inst.per_node
            .iter()
            .filter(|r| r.benign)
            .filter_map(|r| r.request_done_us),
    )
}

fn spread(iter: impl Iterator<Item = u64>) -> Option<u64> {
    let mut min = u64::MAX;
    let mut max = 0;
    let mut seen = false;
    for v in iter {
        seen = true;
        min = min.min(v);
        max = max.max(v);
    }
    seen.then(|| max - min)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMetrics {
    pub toctou_sa_us: Option<u64>,
    /// Initiation to tally, the full cost of the instance.
    pub total_runtime_us: u64,
    pub tally: TallySets,
    /// True attest instant of every device that fired, keyed by id.
    pub per_node_attest_times: BTreeMap<u32, u64>,
}

pub fn instance_metrics(inst: &InstanceOutcome) -> InstanceMetrics {
    InstanceMetrics {
        toctou_sa_us: toctou_sa_us(inst),
        total_runtime_us: inst.tally_us - inst.initiate_us,
        tally: inst.sets.clone(),
        per_node_attest_times: inst
            .per_node
            .iter()
            .enumerate()
            .filter_map(|(id, r)| r.attest_true_us.map(|t| (id as u32, t)))
            .collect(),
    }
}

/// One sweep sample: a topology point and the measurements taken there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepRow {
    pub kind: TopologyKind,
    pub n_provers: u32,
    pub height_net: u32,
    pub total_runtime_us: u64,
    pub toctou_sa_us: u64,
    pub attest: u32,
    pub fail: u32,
    pub norep: u32,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("kind,d,n,height_net,total_runtime_us,toctou_sa_us,attest,fail,norep\n");
    for r in rows {
        let (kind, d) = match r.kind {
            TopologyKind::Line => ("line", 0),
            TopologyKind::Star => ("star", 0),
            TopologyKind::Tree { degree } => ("tree", degree),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            kind,
            d,
            r.n_provers,
            r.height_net,
            r.total_runtime_us,
            r.toctou_sa_us,
            r.attest,
            r.fail,
            r.norep
        )
        .expect("write to string");
    }
    out
}
