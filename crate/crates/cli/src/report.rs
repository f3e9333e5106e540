//! Structured text reports: `key = value` lines followed by `[section]` CSV tables.

use cpqr::harness::fmt_f64;

#[derive(Default)]
pub struct Report {
    text: String,
}

impl Report {
    pub fn new(title: &str) -> Self {
        Self { text: format!("# {title}\n") }
    }

    pub fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        self.text.push_str(&format!("{key} = {value}\n"));
    }

    pub fn num(&mut self, key: &str, value: f64) {
        self.kv(key, fmt_f64(value));
    }

    pub fn opt(&mut self, key: &str, value: Option<f64>) {
        self.kv(key, value.map_or("NA".to_string(), fmt_f64));
    }

    /// Embeds a CSV table; `body` must already end with a newline.
    pub fn table(&mut self, name: &str, body: &str) {
        self.text.push_str(&format!("\n[{name}]\n{body}"));
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map_or("NA".to_string(), fmt_f64)
}

/// Active set rendered as `;`-separated 0-based indices into `(beta, delta)`.
pub fn indices(set: &[usize]) -> String {
    set.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(";")
}
