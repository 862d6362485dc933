//! Reporting for the acceptance checks: one line per criterion, written
//! straight to stderr so it shows whether or not the harness captures output.

use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl Outcome {
    /// Passed and within its time budget.
    pub fn ok(&self) -> bool {
        self.passed && self.elapsed <= self.budget
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.ok() { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict} {}: {} [{:.2?}",
            self.name, self.detail, self.elapsed
        )?;
        if self.elapsed > self.budget {
            write!(f, ", over the {:?} budget", self.budget)?;
        }
        f.write_str("]")
    }
}

/// Starts the report on a fresh line, since the harness may have left its
/// own `test name ...` prefix unterminated.
pub fn header() {
    let _ = writeln!(std::io::stderr(), "\nacceptance criteria:");
}

/// Runs `check` and times it. `Ok` and `Err` carry the detail text for a
/// pass and a failure.
pub fn measure(
    name: &'static str,
    budget: Duration,
    check: impl FnOnce() -> Result<String, String>,
) -> Outcome {
    let start = Instant::now();
    let result = check();
    let elapsed = start.elapsed();
    let (passed, detail) = match result {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    Outcome {
        name,
        passed,
        detail,
        elapsed,
        budget,
    }
}

/// [`measure`], then report the line.
pub fn run(
    name: &'static str,
    budget: Duration,
    check: impl FnOnce() -> Result<String, String>,
) -> Outcome {
    let outcome = measure(name, budget, check);
    let _ = writeln!(std::io::stderr(), "{outcome}");
    outcome
}

fn tally(outcomes: &[Outcome]) -> Result<(), String> {
    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|o| !o.ok())
        .map(|o| o.name)
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(format!("failed: {}", failed.join(", ")))
    }
}

/// Final tally; `Err` lists the failed criteria.
pub fn summarize(outcomes: &[Outcome]) -> Result<(), String> {
    let passed = outcomes.iter().filter(|o| o.ok()).count();
    let _ = writeln!(
        std::io::stderr(),
        "acceptance: {passed} of {} criteria passed",
        outcomes.len()
    );
    tally(outcomes)
}
