//! Acceptance run: one PASS/FAIL line per criterion, with context lines below it.
//!
//! Runs without the libtest harness so the lines are printed as each criterion
//! finishes. Criterion verdicts are reported, not asserted; the process fails
//! only if the evaluation machinery itself breaks.

use kflow::harness::criteria::{evaluate, ALL};

fn main() {
    let mut broken = Vec::new();
    let mut passed = 0;
    for id in ALL {
        let outcome = evaluate(id);
        println!("{}", outcome.line());
        for line in &outcome.info {
            println!("    info: {line}");
        }
        if outcome.id != id || !outcome.runtime_s.is_finite() || (!outcome.pass && outcome.summary.is_empty()) {
            broken.push(id);
        }
        if outcome.pass {
            passed += 1;
        }
    }
    println!("acceptance: {passed}/{} criteria pass", ALL.len());
    if !broken.is_empty() {
        eprintln!("evaluation produced malformed outcomes for criteria {broken:?}");
        std::process::exit(1);
    }
}
