//! Bookkeeping for the acceptance run: each criterion prints one
//! `criterion N: PASS|FAIL ...` line and the process fails if any did.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u32,
    pub title: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Default)]
pub struct Suite {
    outcomes: Vec<Outcome>,
}

impl Suite {
    /// `check` returns whether the criterion holds plus a one-line detail.
    /// A panic counts as a failure.
    pub fn criterion(&mut self, id: u32, title: &str, check: impl FnOnce() -> (bool, String)) {
        let start = Instant::now();
        let (passed, detail) = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(p) => {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                (false, format!("panicked: {msg}"))
            }
        };
        let seconds = start.elapsed().as_secs_f64();
        println!(
            "criterion {id}: {} {title}: {detail} [{seconds:.2} s]",
            if passed { "PASS" } else { "FAIL" }
        );
        self.outcomes.push(Outcome {
            id,
            title: title.to_string(),
            passed,
            detail,
            seconds,
        });
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn finish(self) -> ExitCode {
        let failed: Vec<u32> = self.outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
        println!(
            "acceptance: {} passed, {} failed{}",
            self.outcomes.len() - failed.len(),
            failed.len(),
            if failed.is_empty() { String::new() } else { format!(" ({failed:?})") }
        );
        if failed.is_empty() {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        }
    }
}
