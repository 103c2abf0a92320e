//! JSON result lines, one object per line so downstream tooling can
//! stream them.

use std::collections::BTreeMap;

use serde::Serialize;
use train_core::engine::InstanceOutcome;
use train_core::metrics::{instance_metrics, toctou_sa_us};

#[derive(Serialize)]
struct TallyLine<'a> {
    attest: &'a [u32],
    fail: &'a [u32],
    norep: &'a [u32],
    t_attest: u64,
    toctou_sa_us: u64,
}

/// The instance verdict: the three tally sets, the scheduled
/// attestation instant, and the measured attestation spread.
pub fn tally_line(inst: &InstanceOutcome) -> String {
    serde_json::to_string(&TallyLine {
        attest: &inst.sets.attest,
        fail: &inst.sets.fail,
        norep: &inst.sets.norep,
        t_attest: inst.t_attest_us,
        toctou_sa_us: toctou_sa_us(inst).unwrap_or(0),
    })
    .expect("tally serializes")
}

#[derive(Serialize)]
struct TallySetsLine<'a> {
    attest: &'a [u32],
    fail: &'a [u32],
    norep: &'a [u32],
}

#[derive(Serialize)]
struct MetricsLine<'a> {
    toctou_sa_us: u64,
    total_runtime_us: u64,
    tally: TallySetsLine<'a>,
    per_node_attest_times: &'a BTreeMap<u32, u64>,
}

/// The instance measurements: spread, initiate-to-tally runtime, the
/// tally sets, and every device's true attestation instant.
pub fn metrics_line(inst: &InstanceOutcome) -> String {
    let m = instance_metrics(inst);
    serde_json::to_string(&MetricsLine {
        toctou_sa_us: m.toctou_sa_us.unwrap_or(0),
        total_runtime_us: m.total_runtime_us,
        tally: TallySetsLine {
            attest: &m.tally.attest,
            fail: &m.tally.fail,
            norep: &m.tally.norep,
        },
        per_node_attest_times: &m.per_node_attest_times,
    })
    .expect("metrics serializes")
}

#[cfg(test)]
mod tests {
    use train_core::engine::run;
    use train_core::scenario::Scenario;

    use super::*;

    #[test]
    fn default_run_lines_are_stable_json() {
        let out = run(&Scenario::default()).unwrap();
        let inst = &out.instances[0];
        let tally: serde_json::Value = serde_json::from_str(&tally_line(inst)).unwrap();
        assert_eq!(tally["attest"].as_array().unwrap().len(), 10);
        assert_eq!(tally["fail"].as_array().unwrap().len(), 0);
        assert_eq!(tally["norep"].as_array().unwrap().len(), 0);
        assert_eq!(tally["t_attest"], 23_000);
        assert_eq!(tally["toctou_sa_us"], 0);

        let metrics: serde_json::Value = serde_json::from_str(&metrics_line(inst)).unwrap();
        assert_eq!(metrics["total_runtime_us"], 55_124);
        assert_eq!(metrics["per_node_attest_times"]["1"], 23_000);
        assert_eq!(metrics["per_node_attest_times"]["10"], 23_000);
        assert_eq!(metrics["tally"]["attest"].as_array().unwrap().len(), 10);
    }
}
