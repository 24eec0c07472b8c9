use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
}

/// Flat scalar results, declared checks and diagnostics of one run.
#[derive(Debug, Default)]
pub struct Report {
    scalars: BTreeMap<String, Value>,
    checks: Vec<Check>,
    diagnostics: Vec<String>,
}

impl Report {
    pub fn num(&mut self, key: impl Into<String>, v: f64) {
        self.scalars.insert(key.into(), json_f64(v));
    }

    pub fn opt(&mut self, key: impl Into<String>, v: Option<f64>) {
        self.scalars.insert(key.into(), v.map_or(Value::Null, json_f64));
    }

    pub fn text(&mut self, key: impl Into<String>, v: impl Into<String>) {
        self.scalars.insert(key.into(), Value::String(v.into()));
    }

    pub fn flag(&mut self, key: impl Into<String>, v: bool) {
        self.scalars.insert(key.into(), Value::Bool(v));
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool, measured: f64, expected: f64, tolerance: f64) {
        self.checks.push(Check {
            name: name.into(),
            pass,
            measured,
            expected,
            tolerance,
        });
    }

    /// Records a module error and a failing `<analysis>.completed` check.
    pub fn failure(&mut self, analysis: &str, err: impl std::fmt::Display) {
        self.diagnostics.push(format!("{}: {}", analysis, err));
        self.check(format!("{}.completed", analysis), false, f64::NAN, f64::NAN, 0.0);
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        self.diagnostics.push(msg.into());
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn checks(&self) -> &[Check] {
        &self.checks
    }

    pub fn to_json(&self, timestamp: u64) -> String {
        let mut m = Map::new();
        for (k, v) in &self.scalars {
            m.insert(k.clone(), v.clone());
        }
        let checks: Vec<Value> = self
            .checks
            .iter()
            .map(|c| {
                let mut o = Map::new();
                o.insert("name".into(), Value::String(c.name.clone()));
                o.insert("pass".into(), Value::Bool(c.pass));
                o.insert("measured".into(), json_f64(c.measured));
                o.insert("expected".into(), json_f64(c.expected));
                o.insert("tolerance".into(), json_f64(c.tolerance));
                Value::Object(o)
            })
            .collect();
        m.insert("checks".into(), Value::Array(checks));
        m.insert(
            "diagnostics".into(),
            Value::Array(self.diagnostics.iter().map(|d| Value::String(d.clone())).collect()),
        );
        m.insert("all_pass".into(), Value::Bool(self.all_pass()));
        m.insert("timestamp".into(), Value::from(timestamp));
        let mut s = serde_json::to_string_pretty(&Value::Object(m)).expect("serializable");
        s.push('\n');
        s
    }
}

/// Non-finite values become `null`.
fn json_f64(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

/// Output directory writer.
pub struct Out {
    dir: PathBuf,
}

impl Out {
    pub fn new(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Out { dir: dir.to_path_buf() })
    }

    pub fn write(&self, name: &str, body: &str) -> io::Result<()> {
        fs::write(self.dir.join(name), body)
    }
}

/// CSV float with 17 significant digits.
pub fn g17(v: f64) -> String {
    format!("{:.16e}", v)
}
