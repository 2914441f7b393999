//! Pass/fail bookkeeping for the acceptance suite.

use std::time::Duration;

/// Criteria that are run and reported but do not fail the suite.
/// Each entry is explained in the decisions ledger.
pub const KNOWN_GAPS: &[&str] = &["acceleration", "handover"];

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Outcome {
    pub fn line(&self) -> String {
        let tag = match (self.passed, KNOWN_GAPS.contains(&self.name)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known gap)",
            (false, false) => "FAIL",
        };
        format!("{tag:<16} {:<30} {} [{:.1}s]", self.name, self.detail, self.elapsed.as_secs_f64())
    }
}

/// True when every failure is a known gap.
pub fn suite_ok(outcomes: &[Outcome]) -> bool {
    outcomes.iter().all(|o| o.passed || KNOWN_GAPS.contains(&o.name))
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn known_gaps_do_not_fail_the_suite() {
        let o = |name, passed| Outcome {
            name,
            passed,
            detail: String::new(),
            elapsed: Duration::ZERO,
        };
        assert!(suite_ok(&[o("handover", false), o("invariants", true)]));
        assert!(!suite_ok(&[o("invariants", false)]));
    }
}
