//! One line per acceptance criterion; exits non-zero if any criterion fails.

mod basics;
mod operators;
mod solver;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

/// Collects named sub-checks into one outcome.
#[derive(Default)]
pub struct Checks {
    items: Vec<(String, bool)>,
}

impl Checks {
    pub fn add(&mut self, name: impl Into<String>, ok: bool) {
        self.items.push((name.into(), ok));
    }

    pub fn outcome(self) -> Outcome {
        let failed: Vec<_> = self.items.iter().filter(|(_, ok)| !ok).map(|(n, _)| n.as_str()).collect();
        let all: Vec<_> = self.items.iter().map(|(n, _)| n.as_str()).collect();
        if failed.is_empty() {
            Outcome::new(true, all.join("; "))
        } else {
            Outcome::new(false, format!("failed: {}", failed.join("; ")))
        }
    }
}

type Criterion = (u32, &'static str, f64, fn() -> Outcome);

const CRITERIA: [Criterion; 9] = [
    (1, "evolution matrices", 10.0, basics::evolution_matrices),
    (2, "wake condition", 30.0, basics::wake_condition),
    (3, "kernel suite", 120.0, basics::kernel_suite),
    (4, "potential bounds", 300.0, basics::potential_bounds),
    (5, "forcing suite", 60.0, basics::forcing_suite),
    (6, "duhamel operators", 600.0, operators::duhamel_suite),
    (7, "picard iteration", 2700.0, solver::picard_suite),
    (8, "pointwise decay", 1800.0, solver::decay_suite),
    (9, "determinism", 600.0, solver::determinism),
];

fn main() {
    // `cargo test -- <filter>` runs only the criteria whose number or name matches
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (n, name, budget, run) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str()) || *f == n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                Outcome::new(false, format!("panicked: {}", msg.unwrap_or_default()))
            });
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs <= budget;
        let pass = outcome.pass && in_time;
        failures += usize::from(!pass);
        let time_note = if in_time { String::new() } else { " (over budget)".to_string() };
        println!(
            "criterion {n} ({name}): {} — {} [{secs:.1} s of {budget:.0} s{time_note}]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
