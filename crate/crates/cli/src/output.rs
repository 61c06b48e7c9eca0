//! Plot-ready CSV and JSON emission with reproducible formatting.

use rankscope::error::Result;
use rankscope::io::write_atomic;
use std::path::Path;

/// 17 significant digits: round-trips any f64 exactly.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        let mut buf = String::new();
        buf.push_str(header);
        buf.push('\n');
        Csv { buf }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.buf.as_bytes())
    }
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}
