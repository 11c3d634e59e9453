//! Machine-readable verdicts.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Outcome of one check. A `Pass` always carries a strictly positive margin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub check: String,
    pub verdict: Verdict,
    pub margin: f64,
    pub resolution: usize,
    pub params: Map<String, Value>,
    pub notes: Vec<String>,
    pub elapsed_ms: f64,
}

impl Certificate {
    /// Pass iff `margin > 0`.
    pub fn from_margin(check: &str, margin: f64, resolution: usize) -> Self {
        let verdict = if margin > 0.0 { Verdict::Pass } else { Verdict::Fail };
        Certificate {
            check: check.to_string(),
            verdict,
            margin,
            resolution,
            params: Map::new(),
            notes: Vec::new(),
            elapsed_ms: 0.0,
        }
    }

    pub fn inconclusive(check: &str, margin: f64, resolution: usize, why: &str) -> Self {
        let mut c = Self::from_margin(check, margin, resolution);
        c.verdict = Verdict::Inconclusive;
        c.notes.push(why.to_string());
        c
    }

    /// Forces a failing verdict, keeping the margin non-positive.
    pub fn fail(mut self, why: &str) -> Self {
        self.verdict = Verdict::Fail;
        if self.margin > 0.0 {
            self.margin = -self.margin;
        }
        self.notes.push(why.to_string());
        self
    }

    pub fn param(mut self, key: &str, v: impl Serialize) -> Self {
        self.params.insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
        self
    }

    pub fn note(mut self, s: impl Into<String>) -> Self {
        self.notes.push(s.into());
        self
    }

    pub fn timed(mut self, start: Instant) -> Self {
        self.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Combines sub-results: fail dominates, then inconclusive.
    pub fn worst(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
        let mut out = Verdict::Pass;
        for v in verdicts {
            match (out, v) {
                (_, Verdict::Fail) => out = Verdict::Fail,
                (Verdict::Pass, Verdict::Inconclusive) => out = Verdict::Inconclusive,
                _ => {}
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_needs_positive_margin() {
        assert!(Certificate::from_margin("x", 1e-12, 1).passed());
        assert!(!Certificate::from_margin("x", 0.0, 1).passed());
        let f = Certificate::from_margin("x", 0.5, 1).fail("forced");
        assert!(f.margin < 0.0 && f.verdict == Verdict::Fail);
        assert_eq!(Certificate::worst([Verdict::Pass, Verdict::Inconclusive]), Verdict::Inconclusive);
        assert_eq!(Certificate::worst([Verdict::Fail, Verdict::Inconclusive]), Verdict::Fail);
    }

    #[test]
    fn serializes_lowercase_verdict() {
        let c = Certificate::from_margin("volume", 1.0, 8).param("sigma", 5.0);
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"verdict\":\"pass\"") && s.contains("\"sigma\":5.0"));
    }
}
