//! Structured key-value run report. Keys are emitted in insertion order,
//! values via plain Display, so identical runs render identical reports;
//! only keys ending in `.seconds` carry wall-clock noise.

use std::fmt::Display;

/// Ordered key-value document with unique keys.
#[derive(Debug, Default)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one entry. Keys must be unique; a duplicate is a driver bug.
    pub fn put(&mut self, key: impl Into<String>, value: impl Display) {
        let key = key.into();
        assert!(
            !self.lines.iter().any(|(k, _)| *k == key),
            "duplicate report key {key}"
        );
        self.lines.push((key, value.to_string()));
    }

    /// Stage timing entry; excluded from reproducibility comparisons.
    pub fn seconds(&mut self, stage: &str, secs: f64) {
        self.put(format!("stage.{stage}.seconds"), format!("{secs:.3}"));
    }

    /// Records one named check outcome (with detail when non-empty).
    pub fn check(&mut self, name: &str, pass: bool, detail: &str) {
        self.put(format!("check.{name}"), if pass { "pass" } else { "fail" });
        if !detail.is_empty() {
            self.put(format!("check.{name}.detail"), detail);
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.lines {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }
}
