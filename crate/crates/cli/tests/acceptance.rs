//! Acceptance suite: one numbered pass/fail line per criterion, with the
//! observed values and elapsed time. Criteria 1–6 are the fast checks;
//! 7–9 share one set of reference trainings (five seeds, three modes
//! each); 10 trains the shipped survival sweep. Run with `--nocapture`
//! to see the report on success.

use std::time::Instant;

use stochdepth_cli::accept::{
    check_gradient_signal, check_runtime_savings, check_sweep_table, check_test_error,
    run_reference_bundle,
};
use stochdepth_cli::check::{
    check_depth_statistics, check_ensemble_oracle, check_full_survival_equivalence,
    check_gradients, check_identity_on_drop, check_negative_control, check_schedule_math,
    CheckOutcome,
};

struct Line {
    label: String,
    outcome: CheckOutcome,
    secs: f64,
    budget_secs: f64,
}

fn timed(label: &str, budget_secs: f64, f: impl FnOnce() -> CheckOutcome) -> Line {
    let t = Instant::now();
    let outcome = f();
    Line {
        label: label.to_string(),
        outcome,
        secs: t.elapsed().as_secs_f64(),
        budget_secs,
    }
}

#[test]
fn acceptance() {
    let mut lines = Vec::new();

    lines.push(timed(" 1", 120.0, check_gradients));
    lines.push(timed("1b", 120.0, check_negative_control));
    lines.push(timed(" 2", 1.0, check_schedule_math));
    lines.push(timed(" 3", 1.0, check_identity_on_drop));
    lines.push(timed(" 4", 60.0, check_full_survival_equivalence));
    lines.push(timed(" 5", 60.0, check_ensemble_oracle));
    lines.push(timed(" 6", 10.0, check_depth_statistics));

    // Criteria 7–9 evaluate the same fifteen trainings, so the bundle
    // time counts against every one of their budgets.
    let t = Instant::now();
    let bundle = run_reference_bundle();
    let bundle_secs = t.elapsed().as_secs_f64();
    match bundle {
        Ok(bundle) => {
            lines.push(timed(" 7", 600.0 - bundle_secs, || {
                check_runtime_savings(&bundle)
            }));
            lines.push(timed(" 8", 1800.0 - bundle_secs, || check_test_error(&bundle)));
            lines.push(timed(" 9", 1800.0 - bundle_secs, || {
                check_gradient_signal(&bundle)
            }));
            lines.push(timed("10", 2700.0, || check_sweep_table(&bundle)));
        }
        Err(e) => {
            let detail = format!("reference bundle failed: {e}");
            for label in [" 7", " 8", " 9", "10"] {
                lines.push(Line {
                    label: label.to_string(),
                    outcome: CheckOutcome {
                        name: "reference bundle".to_string(),
                        passed: false,
                        detail: detail.clone(),
                    },
                    secs: 0.0,
                    budget_secs: f64::INFINITY,
                });
            }
        }
    }

    println!();
    println!("reference trainings: {bundle_secs:.1} s (shared by criteria 7-9)");
    let mut failures = Vec::new();
    for l in &lines {
        let tag = if l.outcome.passed { "PASS" } else { "FAIL" };
        println!(
            "{} {tag}  {} — {} [{:.1} s]",
            l.label, l.outcome.name, l.outcome.detail, l.secs
        );
        if !l.outcome.passed {
            failures.push(format!("{} {}: {}", l.label, l.outcome.name, l.outcome.detail));
        }
        if l.secs > l.budget_secs {
            failures.push(format!(
                "{} {} exceeded its time budget: {:.1} s > {:.1} s",
                l.label, l.outcome.name, l.secs, l.budget_secs
            ));
        }
    }
    assert!(
        failures.is_empty(),
        "acceptance failures:\n{}",
        failures.join("\n")
    );
}
