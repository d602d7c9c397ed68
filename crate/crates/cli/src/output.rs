use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use crate::args::Format;

/// A table plus the metadata written ahead of it.
pub struct Artifact {
    pub command: &'static str,
    pub config: Value,
    pub seed: u64,
    pub tails: Vec<(String, f64)>,
    pub summary: Vec<(String, Value)>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

impl Artifact {
    pub fn new(command: &'static str, config: Value, seed: u64) -> Self {
        Self { command, config, seed, tails: Vec::new(), summary: Vec::new(), columns: Vec::new(), rows: Vec::new() }
    }

    pub fn tail(&mut self, name: &str, v: f64) {
        self.tails.push((name.to_string(), v));
    }

    pub fn note(&mut self, name: &str, v: impl Into<Value>) {
        self.summary.push((name.to_string(), v.into()));
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.csv(),
            Format::Json => self.json(),
        }
    }

    fn csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# qcs {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# command: {}", self.command);
        let _ = writeln!(s, "# config: {}", self.config);
        let _ = writeln!(s, "# seed: {}", self.seed);
        for (k, v) in &self.tails {
            let _ = writeln!(s, "# tail_bound {k}: {}", cell(&json!(v)));
        }
        for (k, v) in &self.summary {
            let _ = writeln!(s, "# {k}: {}", cell(v));
        }
        if !self.columns.is_empty() {
            let _ = writeln!(s, "{}", self.columns.join(","));
            for r in &self.rows {
                let cells: Vec<String> = r.iter().map(cell).collect();
                let _ = writeln!(s, "{}", cells.join(","));
            }
        }
        s
    }

    fn json(&self) -> String {
        let tails: Map<String, Value> = self.tails.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        let summary: Map<String, Value> = self.summary.iter().cloned().collect();
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Object(self.columns.iter().map(|c| c.to_string()).zip(r.iter().cloned()).collect()))
            .collect();
        let v = json!({
            "tool": "qcs",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "tail_bounds": tails,
            "summary": summary,
            "rows": rows,
        });
        let mut s = serde_json::to_string_pretty(&v).expect("artifact serializes");
        s.push('\n');
        s
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "nan".into(),
        other => other.to_string(),
    }
}
