//! JSON scenario configuration.
//!
//! One document describes a complete run. Every field is optional;
//! omitted fields fall back to a ten-device star on variant A with the
//! measured per-operation times, error-free clocks, the CASU backend,
//! no adversary, a 1024-link chain with a renewal margin of two, one
//! instance, and seed 1.
//!
//! ```json
//! {
//!   "variant": "A",
//!   "topology": {"kind": "tree", "degree": 2, "n": 1000},
//!   "timing": {"t_request_us": 5000, "t_hash_us": 13000,
//!              "t_report_us": 4000, "t_mac_us": 29500,
//!              "t_slack_us": 5000},
//!   "clock": {"rtc_offset_us": [-40, 40]},
//!   "backend": "CASU",
//!   "compromised": [3],
//!   "adversary": [{"match": {"class": "report", "report_dev": 2},
//!                  "action": "drop", "budget": 1}],
//!   "instances": 1,
//!   "chain_m": 1024,
//!   "renewal_k": 2,
//!   "seed": 1
//! }
//! ```

use std::fmt;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use train_core::adversary::{Injection, MatchSpec, Mutation, Rule, RuleAction};
use train_core::scenario::{MeasurementMode, RenewalScenario, Scenario};
use train_core::topology::TopologyKind;
use train_core::wire::{AttRequest, Heights, MsgClass, VariantKind};

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    /// Parse failures; the inner error carries line, column, and the
    /// offending field name.
    Json(serde_json::Error),
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "{e}"),
            ConfigError::Json(e) => write!(f, "{e}"),
            ConfigError::Invalid(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    variant: Option<VariantName>,
    topology: Option<TopologyDoc>,
    timing: Option<TimingDoc>,
    clock: Option<ClockDoc>,
    backend: Option<BackendName>,
    compromised: Option<Vec<u32>>,
    adversary: Option<Vec<AdversaryEntry>>,
    instances: Option<u32>,
    chain_m: Option<u32>,
    renewal_k: Option<u32>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
enum VariantName {
    A,
    B,
}

#[derive(Debug, Clone, Copy, Deserialize)]
enum BackendName {
    RATA,
    CASU,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDoc {
    kind: Option<KindName>,
    degree: Option<u32>,
    n: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindName {
    Line,
    Star,
    Tree,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimingDoc {
    t_request_us: Option<u64>,
    t_hash_us: Option<u64>,
    t_report_us: Option<u64>,
    t_mac_us: Option<u64>,
    t_slack_us: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClockDoc {
    rtc_offset_us: Option<[i64; 2]>,
    drift_ppm: Option<[i32; 2]>,
}

/// One element of the adversary array: either a rule over in-transit
/// frames (`match`/`action`/`budget`) or a fabricated frame
/// (`inject`).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdversaryEntry {
    #[serde(rename = "match")]
    match_spec: Option<MatchDoc>,
    action: Option<ActionDoc>,
    budget: Option<u32>,
    inject: Option<InjectDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatchDoc {
    from: Option<u32>,
    to: Option<u32>,
    class: Option<ClassName>,
    instance: Option<u64>,
    report_dev: Option<u32>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ClassName {
    Request,
    Report,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ActionDoc {
    Drop,
    DelayUs(u64),
    ReplayAtUs(u64),
    Modify(MutationDoc),
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum MutationDoc {
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

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InjectDoc {
    at_us: u64,
    from: u32,
    to: u32,
    bytes_hex: String,
}

/// Reads and validates a configuration file.
pub fn load(path: &Path) -> Result<Scenario, ConfigError> {
    let text = fs::read_to_string(path).map_err(ConfigError::Io)?;
    from_str(&text)
}

/// Parses and validates a configuration document.
pub fn from_str(text: &str) -> Result<Scenario, ConfigError> {
    let doc: ConfigDoc = serde_json::from_str(text).map_err(ConfigError::Json)?;
    let sc = scenario_from_doc(doc)?;
    sc.validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(sc)
}

fn scenario_from_doc(doc: ConfigDoc) -> Result<Scenario, ConfigError> {
    let mut sc = Scenario::default();
    if let Some(v) = doc.variant {
        sc.variant = match v {
            VariantName::A => VariantKind::A,
            VariantName::B => VariantKind::B,
        };
    }
    if let Some(t) = &doc.topology {
        let kind = t.kind.unwrap_or(KindName::Star);
        if t.degree.is_some() && kind != KindName::Tree {
            return Err(ConfigError::Invalid(
                "topology.degree applies only to kind \"tree\"".into(),
            ));
        }
        sc.topology = match kind {
            KindName::Line => TopologyKind::Line,
            KindName::Star => TopologyKind::Star,
            KindName::Tree => TopologyKind::Tree {
                degree: t.degree.unwrap_or(2),
            },
        };
        if let Some(n) = t.n {
            sc.n_provers = n;
        }
    }
    if let Some(t) = &doc.timing {
        if let Some(v) = t.t_request_us {
            sc.timing.t_request_us = v;
        }
        if let Some(v) = t.t_hash_us {
            sc.timing.t_hash_us = v;
        }
        if let Some(v) = t.t_report_us {
            sc.timing.t_report_us = v;
        }
        if let Some(v) = t.t_mac_us {
            sc.timing.t_mac_us = v;
        }
        if let Some(v) = t.t_slack_us {
            sc.timing.t_slack_us = v;
        }
    }
    // The accepted attestation-time deviation tracks the scheduling
    // slack; the document has no separate knob for it.
    sc.sync_tolerance_us = sc.timing.t_slack_us;
    if let Some(c) = &doc.clock {
        if let Some([lo, hi]) = c.rtc_offset_us {
            sc.clock.rtc_offset_us = (lo, hi);
        }
        if let Some([lo, hi]) = c.drift_ppm {
            sc.clock.drift_ppm = (lo, hi);
        }
    }
    if let Some(b) = doc.backend {
        sc.measurement = match b {
            BackendName::RATA => MeasurementMode::Referenced,
            BackendName::CASU => MeasurementMode::Unreported,
        };
    }
    if let Some(c) = doc.compromised {
        sc.compromised = c;
    }
    if let Some(i) = doc.instances {
        sc.instances = i;
    }
    if let Some(m) = doc.chain_m {
        sc.chain_m = m;
    }
    if let Some(s) = doc.seed {
        sc.seed = s;
    }
    sc.renewal = Some(renewal_plan(doc.renewal_k.unwrap_or(2), sc.chain_m)?);
    if let Some(entries) = doc.adversary {
        for (i, entry) in entries.into_iter().enumerate() {
            convert_adversary_entry(&mut sc, i, entry)?;
        }
    }
    Ok(sc)
}

/// Schedules the announcement so that after the keying link is
/// disclosed `k + 1` instances later, `k` usable links remain below
/// it, clamped to the first instance on short chains.
fn renewal_plan(k: u32, chain_m: u32) -> Result<RenewalScenario, ConfigError> {
    if (chain_m as u64) < k as u64 + 2 {
        return Err(ConfigError::Invalid(format!(
            "renewal_k {k} does not fit a chain of {chain_m} links (needs at least {})",
            k as u64 + 2
        )));
    }
    let schedule: u64 = if k == 0 { 1 } else { 2 * k as u64 + 2 };
    Ok(RenewalScenario {
        k,
        announce_index: schedule.min(chain_m as u64 - 1) as u32,
    })
}

fn convert_adversary_entry(
    sc: &mut Scenario,
    i: usize,
    entry: AdversaryEntry,
) -> Result<(), ConfigError> {
    match (entry.inject, entry.action) {
        (Some(inject), None) => {
            if entry.match_spec.is_some() || entry.budget.is_some() {
                return Err(ConfigError::Invalid(format!(
                    "adversary[{i}]: inject takes no match or budget"
                )));
            }
            let bytes = hex::decode(&inject.bytes_hex).map_err(|_| {
                ConfigError::Invalid(format!("adversary[{i}].inject.bytes_hex is not hex"))
            })?;
            sc.adversary.injections.push(Injection {
                at_us: inject.at_us,
                from: inject.from,
                to: inject.to,
                bytes,
            });
        }
        (None, Some(action)) => {
            sc.adversary.rules.push(Rule {
                match_spec: entry.match_spec.map_or_else(MatchSpec::any, convert_match),
                action: convert_action(action),
                budget: entry.budget,
            });
        }
        (Some(_), Some(_)) => {
            return Err(ConfigError::Invalid(format!(
                "adversary[{i}]: rule fields and inject are mutually exclusive"
            )));
        }
        (None, None) => {
            return Err(ConfigError::Invalid(format!(
                "adversary[{i}]: needs an action or an inject"
            )));
        }
    }
    Ok(())
}

fn convert_match(doc: MatchDoc) -> MatchSpec {
    MatchSpec {
        from: doc.from,
        to: doc.to,
        class: doc.class.map(|c| match c {
            ClassName::Request => MsgClass::Request,
            ClassName::Report => MsgClass::Report,
        }),
        instance: doc.instance,
        report_dev: doc.report_dev,
    }
}

fn convert_action(doc: ActionDoc) -> RuleAction {
    match doc {
        ActionDoc::Drop => RuleAction::Drop,
        ActionDoc::DelayUs(d) => RuleAction::DelayUs(d),
        ActionDoc::ReplayAtUs(t) => RuleAction::ReplayAt(t),
        ActionDoc::Modify(m) => RuleAction::Modify(convert_mutation(m)),
    }
}

fn convert_mutation(doc: MutationDoc) -> Mutation {
    match doc {
        MutationDoc::RawXor { offset, mask } => Mutation::RawXor { offset, mask },
        MutationDoc::SetRequestIdSnd(v) => Mutation::SetRequestIdSnd(v),
        MutationDoc::SetRequestTAttest(v) => Mutation::SetRequestTAttest(v),
        MutationDoc::AddRequestTAttestUs(v) => Mutation::AddRequestTAttestUs(v),
        MutationDoc::XorRequestHashNew(v) => Mutation::XorRequestHashNew(v),
        MutationDoc::XorRenewalAnchor(v) => Mutation::XorRenewalAnchor(v),
        MutationDoc::XorRenewalAuth(v) => Mutation::XorRenewalAuth(v),
        MutationDoc::StripRenewal => Mutation::StripRenewal,
        MutationDoc::SetHeights {
            height_cur,
            height_net,
        } => Mutation::SetHeights {
            height_cur,
            height_net,
        },
        MutationDoc::SetReportTPrime(v) => Mutation::SetReportTPrime(v),
        MutationDoc::XorReportHashNew(v) => Mutation::XorReportHashNew(v),
        MutationDoc::XorReportAuth(v) => Mutation::XorReportAuth(v),
        MutationDoc::XorReportLmt(v) => Mutation::XorReportLmt(v),
        MutationDoc::SetReportIdPar(v) => Mutation::SetReportIdPar(v),
    }
}

/// Replaces the scenario seed with the `TRAIN_SEED` environment value
/// when one is set.
pub fn apply_seed_override(sc: &mut Scenario, value: Option<&str>) -> Result<(), ConfigError> {
    if let Some(v) = value {
        sc.seed = v.trim().parse().map_err(|_| {
            ConfigError::Invalid(format!("TRAIN_SEED must be an unsigned integer, got {v:?}"))
        })?;
    }
    Ok(())
}

/// A request hop costs its frame time plus the link latency before the
/// receiver can even start verifying; a t_request budget below that
/// lets the attestation instant arrive before deep devices hear the
/// request. Returns the warning text when the budget is short.
pub fn timing_warning(sc: &Scenario) -> Option<String> {
    let probe = AttRequest {
        id_snd: 0,
        hash_new: [0; 32],
        hash_ind_new: 1,
        t_attest: 0,
        heights: (sc.variant == VariantKind::B).then_some(Heights {
            height_cur: 0,
            height_net: 1,
        }),
        renewal: None,
    };
    let frame_us = probe.encode().len() as u64 * 8 * 1_000_000 / sc.link.bandwidth_bps;
    let per_hop = frame_us + sc.link.latency_us;
    (sc.timing.t_request_us < per_hop).then(|| {
        format!(
            "t_request_us {} is below the per-hop request cost of {} us \
             ({} us frame + {} us latency); deep devices may be scheduled \
             to attest before the request reaches them",
            sc.timing.t_request_us, per_hop, frame_us, sc.link.latency_us
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use train_core::scenario::Timing;

    #[test]
    fn empty_document_is_the_default_scenario() {
        let sc = from_str("{}").unwrap();
        assert_eq!(sc.topology, TopologyKind::Star);
        assert_eq!(sc.n_provers, 10);
        assert_eq!(sc.variant, VariantKind::A);
        assert_eq!(
            sc.timing,
            Timing {
                t_request_us: 5_000,
                t_hash_us: 13_000,
                t_report_us: 4_000,
                t_mac_us: 29_500,
                t_slack_us: 5_000,
            }
        );
        assert_eq!(sc.measurement, MeasurementMode::Unreported);
        assert_eq!(sc.instances, 1);
        assert_eq!(sc.chain_m, 1_024);
        assert_eq!(sc.seed, 1);
        assert_eq!(
            sc.renewal,
            Some(RenewalScenario {
                k: 2,
                announce_index: 6
            })
        );
        assert!(sc.adversary.is_empty());
        assert_eq!(sc.clock.rtc_offset_us, (0, 0));
        assert_eq!(sc.clock.drift_ppm, (0, 0));
    }

    #[test]
    fn every_field_maps_onto_the_scenario() {
        let sc = from_str(
            r#"{
                "variant": "B",
                "topology": {"kind": "tree", "degree": 3, "n": 40},
                "timing": {"t_request_us": 2000, "t_slack_us": 7000},
                "clock": {"drift_ppm": [-100, 100]},
                "backend": "RATA",
                "compromised": [4, 9],
                "instances": 3,
                "chain_m": 64,
                "renewal_k": 1,
                "seed": 77
            }"#,
        )
        .unwrap();
        assert_eq!(sc.variant, VariantKind::B);
        assert_eq!(sc.topology, TopologyKind::Tree { degree: 3 });
        assert_eq!(sc.n_provers, 40);
        assert_eq!(sc.timing.t_request_us, 2_000);
        assert_eq!(sc.timing.t_hash_us, 13_000);
        assert_eq!(sc.timing.t_slack_us, 7_000);
        assert_eq!(sc.sync_tolerance_us, 7_000);
        assert_eq!(sc.clock.drift_ppm, (-100, 100));
        assert_eq!(sc.measurement, MeasurementMode::Referenced);
        assert_eq!(sc.compromised, vec![4, 9]);
        assert_eq!(sc.instances, 3);
        assert_eq!(sc.chain_m, 64);
        assert_eq!(sc.seed, 77);
        assert_eq!(
            sc.renewal,
            Some(RenewalScenario {
                k: 1,
                announce_index: 4
            })
        );
    }

    #[test]
    fn adversary_rules_and_injections_convert() {
        let sc = from_str(
            r#"{
                "topology": {"kind": "line", "n": 3},
                "adversary": [
                    {"match": {"from": 1, "to": 2, "class": "request", "instance": 0},
                     "action": {"modify": {"add_request_t_attest_us": -20000}},
                     "budget": 1},
                    {"match": {"class": "report", "report_dev": 3}, "action": "drop"},
                    {"action": {"delay_us": 500}},
                    {"inject": {"at_us": 9, "from": 1, "to": 2, "bytes_hex": "0201"}}
                ]
            }"#,
        )
        .unwrap();
        assert_eq!(sc.adversary.rules.len(), 3);
        let first = &sc.adversary.rules[0];
        assert_eq!(first.match_spec.from, Some(1));
        assert_eq!(first.match_spec.class, Some(MsgClass::Request));
        assert_eq!(
            first.action,
            RuleAction::Modify(Mutation::AddRequestTAttestUs(-20_000))
        );
        assert_eq!(first.budget, Some(1));
        assert_eq!(sc.adversary.rules[1].match_spec.report_dev, Some(3));
        assert_eq!(sc.adversary.rules[1].action, RuleAction::Drop);
        assert_eq!(sc.adversary.rules[2].match_spec, MatchSpec::any());
        assert_eq!(sc.adversary.injections.len(), 1);
        assert_eq!(sc.adversary.injections[0].bytes, vec![0x02, 0x01]);
    }

    #[test]
    fn unknown_fields_and_bad_values_are_rejected() {
        assert!(matches!(
            from_str(r#"{"bogus": 1}"#),
            Err(ConfigError::Json(_))
        ));
        assert!(matches!(
            from_str(r#"{"topology": {"kind": "ring"}}"#),
            Err(ConfigError::Json(_))
        ));
        assert!(matches!(
            from_str(r#"{"backend": "casu"}"#),
            Err(ConfigError::Json(_))
        ));
        assert!(matches!(
            from_str(r#"{"topology": {"kind": "star", "degree": 2}}"#),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            from_str(r#"{"adversary": [{"budget": 1}]}"#),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            from_str(r#"{"clock": {"rtc_offset_us": [50, -50]}}"#),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            from_str(r#"{"chain_m": 3}"#),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn renewal_announcement_clamps_to_short_chains() {
        assert_eq!(
            renewal_plan(0, 1_024).unwrap(),
            RenewalScenario {
                k: 0,
                announce_index: 1
            }
        );
        assert_eq!(
            renewal_plan(2, 8).unwrap(),
            RenewalScenario {
                k: 2,
                announce_index: 6
            }
        );
        assert_eq!(
            renewal_plan(2, 5).unwrap(),
            RenewalScenario {
                k: 2,
                announce_index: 4
            }
        );
        assert!(renewal_plan(2, 3).is_err());
    }

    #[test]
    fn seed_override_parses_or_rejects() {
        let mut sc = Scenario::default();
        apply_seed_override(&mut sc, None).unwrap();
        assert_eq!(sc.seed, 1);
        apply_seed_override(&mut sc, Some("42")).unwrap();
        assert_eq!(sc.seed, 42);
        assert!(apply_seed_override(&mut sc, Some("not-a-number")).is_err());
    }

    #[test]
    fn short_request_budget_warns() {
        let mut sc = Scenario::default();
        assert!(timing_warning(&sc).is_none());
        // A 50-byte request at 250 kbps occupies the link for 1600 us.
        sc.timing.t_request_us = 1_599;
        assert!(timing_warning(&sc).is_some());
        sc.timing.t_request_us = 1_600;
        assert!(timing_warning(&sc).is_none());
        sc.variant = VariantKind::B;
        // The height fields widen the frame to 58 bytes.
        sc.timing.t_request_us = 1_855;
        assert!(timing_warning(&sc).is_some());
    }
}
