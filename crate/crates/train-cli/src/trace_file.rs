//! On-disk run record: every transmitted frame verbatim, plus a JSON
//! sidecar with each device's reported and true attestation instants.
//!
//! Binary layout, repeated per frame: a big-endian u32 byte count,
//! then that many payload bytes. The payload is the transmit instant
//! (u64), the sender and receiver ids (u32 each), and the frame
//! exactly as it entered the link.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use train_core::engine::RunOutput;
use train_core::trace::TraceEvent;

/// The sidecar sits next to the binary file under the same name plus
/// a `.json` suffix.
pub fn sidecar_path(trace_path: &Path) -> PathBuf {
    let mut name = trace_path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".json");
    trace_path.with_file_name(name)
}

pub fn frames_binary(out: &RunOutput) -> Vec<u8> {
    let mut bin = Vec::new();
    for rec in out.trace.records() {
        if let TraceEvent::Transmit {
            from, to, bytes, ..
        } = &rec.event
        {
            let len = 16 + bytes.len();
            bin.extend_from_slice(&(len as u32).to_be_bytes());
            bin.extend_from_slice(&rec.at_us.to_be_bytes());
            bin.extend_from_slice(&from.to_be_bytes());
            bin.extend_from_slice(&to.to_be_bytes());
            bin.extend_from_slice(bytes);
        }
    }
    bin
}

#[derive(Serialize)]
struct SidecarInstance {
    ordinal: u64,
    index: u32,
    t_attest_prime_us: BTreeMap<u32, u64>,
    attest_true_us: BTreeMap<u32, u64>,
}

#[derive(Serialize)]
struct Sidecar {
    instances: Vec<SidecarInstance>,
}

pub fn sidecar_json(out: &RunOutput) -> String {
    let instances = out
        .instances
        .iter()
        .map(|inst| SidecarInstance {
            ordinal: inst.ordinal,
            index: inst.index,
            t_attest_prime_us: inst
                .per_node
                .iter()
                .enumerate()
                .filter_map(|(id, r)| r.attest_reading_us.map(|v| (id as u32, v)))
                .collect(),
            attest_true_us: inst
                .per_node
                .iter()
                .enumerate()
                .filter_map(|(id, r)| r.attest_true_us.map(|v| (id as u32, v)))
                .collect(),
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&Sidecar { instances }).expect("sidecar serializes");
    text.push('\n');
    text
}

pub fn write(trace_path: &Path, out: &RunOutput) -> io::Result<()> {
    std::fs::write(trace_path, frames_binary(out))?;
    std::fs::write(sidecar_path(trace_path), sidecar_json(out))
}

#[cfg(test)]
mod tests {
    use train_core::engine::run;
    use train_core::scenario::Scenario;
    use train_core::wire::{classify, MsgClass};

    use super::*;

    #[test]
    fn binary_records_parse_back_into_frames() {
        let out = run(&Scenario::default()).unwrap();
        let bin = frames_binary(&out);
        assert!(!bin.is_empty());
        let mut pos = 0;
        let mut frames = 0;
        let mut last_at = 0u64;
        while pos < bin.len() {
            let len = u32::from_be_bytes(bin[pos..pos + 4].try_into().unwrap()) as usize;
            let payload = &bin[pos + 4..pos + 4 + len];
            let at = u64::from_be_bytes(payload[..8].try_into().unwrap());
            assert!(at >= last_at, "records must stay time ordered");
            last_at = at;
            assert_ne!(classify(&payload[16..]), MsgClass::Other);
            pos += 4 + len;
            frames += 1;
        }
        assert_eq!(pos, bin.len());
        // Ten request copies down, ten reports up.
        assert_eq!(frames, 20);
    }

    #[test]
    fn sidecar_lists_every_device_once() {
        let out = run(&Scenario::default()).unwrap();
        let json: serde_json::Value = serde_json::from_str(&sidecar_json(&out)).unwrap();
        let inst = &json["instances"][0];
        assert_eq!(inst["ordinal"], 0);
        assert_eq!(inst["index"], 1_023);
        let prime = inst["t_attest_prime_us"].as_object().unwrap();
        assert_eq!(prime.len(), 10);
        assert_eq!(prime["7"], 23_000);
        assert_eq!(inst["attest_true_us"]["7"], 23_000);
    }

    #[test]
    fn sidecar_path_appends_json() {
        assert_eq!(
            sidecar_path(Path::new("/tmp/run.trace")),
            PathBuf::from("/tmp/run.trace.json")
        );
    }
}
