//! Plain-text run reports: `[section]` headers and `key = value` lines.
//! Numeric claims carry a sibling `key.tol` line.

use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Default)]
pub struct Report {
    sections: Vec<(String, Vec<(String, String)>)>,
}

/// Full-precision, platform-independent float formatting.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.15e}")
    }
}

impl Report {
    pub fn new(task: &str) -> Self {
        let mut r = Self::default();
        r.section("run");
        r.text("version", env!("CARGO_PKG_VERSION"));
        r.text("task", task);
        r
    }

    pub fn section(&mut self, name: &str) -> &mut Self {
        if self.sections.last().map(|s| s.0.as_str()) != Some(name) {
            self.sections.push((name.to_string(), Vec::new()));
        }
        self
    }

    fn push(&mut self, key: String, value: String) {
        if self.sections.is_empty() {
            self.section("run");
        }
        self.sections.last_mut().expect("a section exists").1.push((key, value));
    }

    pub fn text(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.push(key.to_string(), value.to_string());
        self
    }

    pub fn num(&mut self, key: &str, v: f64) -> &mut Self {
        self.push(key.to_string(), fmt_f64(v));
        self
    }

    /// A value together with the tolerance it was computed or checked to.
    pub fn claim(&mut self, key: &str, v: f64, tol: f64) -> &mut Self {
        self.num(key, v);
        self.push(format!("{key}.tol"), format!("{tol:e}"));
        self
    }

    pub fn flag(&mut self, key: &str, b: bool) -> &mut Self {
        self.push(key.to_string(), b.to_string());
        self
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .iter()
            .filter(|s| s.0 == section)
            .flat_map(|s| s.1.iter())
            .find(|kv| kv.0 == key)
            .map(|kv| kv.1.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, (name, entries)) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "[{name}]");
            for (k, v) in entries {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.render())
    }
}

/// Outcome of one asserted quantity in a reproduction run.
#[derive(Debug, Clone)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Report {
    pub fn assertions(&mut self, list: &[Assertion]) {
        self.section("assertions");
        for a in list {
            self.text(&a.name, format!("{} ; {}", if a.passed { "pass" } else { "fail" }, a.detail));
        }
    }
}
