//! Report behaviour on the default configuration and on deliberately
//! broken ones.

use std::collections::BTreeSet;

use meshsim::bench::experiment::{default_suite, run_suite, ExperimentResult};
use meshsim::bench::reference::reference_table;
use meshsim::bench::report::{Report, Verdict};
use meshsim::config::MachineConfig;

fn suite(cfg: &MachineConfig) -> Vec<ExperimentResult> {
    run_suite(&default_suite(false), cfg)
        .into_iter()
        .collect::<Result<_, _>>()
        .unwrap()
}

fn failing(r: &Report) -> BTreeSet<String> {
    r.failures().filter(|c| c.entry.mandatory).map(|c| c.entry.id.clone()).collect()
}

#[test]
fn default_suite_lists_every_mandatory_check_and_passes() {
    let rep = Report::build(&suite(&MachineConfig::default()));
    let listed: BTreeSet<_> = rep.checks.iter().map(|c| c.entry.id.clone()).collect();
    for e in reference_table() {
        // The large off-chip sizes are optional and left out of the default suite.
        if e.mandatory {
            assert!(listed.contains(&e.id), "{} missing from report", e.id);
        }
    }
    assert!(rep.passed(), "{}", rep.to_text());
    assert!(rep.checks.iter().all(|c| c.verdict != Verdict::Skipped));
}

#[test]
fn corrupted_stencil_loop_cost_flags_only_stencil_checks() {
    let mut cfg = MachineConfig::default();
    cfg.cost_models.stencil.loop_penalty_cycles += 100.0;
    let rep = Report::build(&suite(&cfg));
    let bad = failing(&rep);
    for id in ["stencil.no_comm", "stencil.halo", "stencil.single_core"] {
        assert!(bad.contains(id), "{id} not flagged\n{}", rep.to_text());
    }
    // Scaling runs use the stencil too; nothing else may move.
    assert!(
        bad.iter().all(|id| id.starts_with("stencil.") || id.starts_with("scaling.")),
        "{}",
        rep.to_text()
    );
    assert!(!rep.passed());
}

#[test]
fn corrupted_link_overhead_flags_only_link_checks() {
    let mut cfg = MachineConfig::default();
    cfg.elink.transaction_overhead_factor *= 2.0;
    let rep = Report::build(&suite(&cfg));
    let bad = failing(&rep);
    assert!(bad.contains("elink.single_writer"));
    for id in &bad {
        assert!(
            id.starts_with("elink.") || id.starts_with("matmul.offchip") || id == "matmul.compute_transfer_ratio",
            "unexpected failure {id}\n{}",
            rep.to_text()
        );
    }
}

#[test]
fn corrupted_hop_latency_flags_latency_checks() {
    let mut cfg = MachineConfig::default();
    cfg.timing.hop_latency_cycles *= 10.0;
    let rep = Report::build(&suite(&cfg));
    let bad = failing(&rep);
    assert!(bad.contains("latency.0_0-7_7"));
    assert!(bad.iter().all(|id| id.starts_with("latency.")), "{}", rep.to_text());
}

#[test]
fn parallel_and_sequential_suites_serialize_identically() {
    use meshsim::bench::experiment::run_suite_seq;
    use meshsim::bench::output::results_json;
    let cfg = MachineConfig::default();
    let seq: Vec<ExperimentResult> = run_suite_seq(&default_suite(false), &cfg)
        .into_iter()
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(results_json(&suite(&cfg)).unwrap(), results_json(&seq).unwrap());
}
