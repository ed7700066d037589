//! Output files. Each one opens with the same provenance header: tool
//! version, seed and the hash of the effective configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context as _, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Context;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn header(ctx: &Context, command: &str) -> Value {
    json!({
        "tool": "evcs",
        "version": VERSION,
        "command": command,
        "seed": ctx.cfg.run.seed,
        "config_sha256": ctx.hash,
    })
}

/// CSV with `#` comment lines carrying the header.
pub struct Csv {
    inner: csv::Writer<BufWriter<File>>,
}

impl Csv {
    pub fn create(ctx: &Context, command: &str, path: &Path, columns: &[&str]) -> Result<Self> {
        let mut w = create(path)?;
        writeln!(w, "# evcs {VERSION}")?;
        writeln!(w, "# command {command}")?;
        writeln!(w, "# seed {}", ctx.cfg.run.seed)?;
        writeln!(w, "# config-sha256 {}", ctx.hash)?;
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(columns)?;
        Ok(Self { inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// JSON-lines; the first line is `{"header": ...}`.
pub struct Lines {
    inner: BufWriter<File>,
}

impl Lines {
    pub fn create(ctx: &Context, command: &str, path: &Path) -> Result<Self> {
        let mut inner = create(path)?;
        serde_json::to_writer(&mut inner, &json!({ "header": header(ctx, command) }))?;
        inner.write_all(b"\n")?;
        Ok(Self { inner })
    }

    pub fn line(&mut self, v: &impl Serialize) -> Result<()> {
        serde_json::to_writer(&mut self.inner, v)?;
        self.inner.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// A JSON document: `body` with a `header` field added in front.
pub fn write_json(ctx: &Context, command: &str, path: &Path, body: &impl Serialize) -> Result<()> {
    let mut doc = serde_json::Map::new();
    doc.insert("header".into(), header(ctx, command));
    match serde_json::to_value(body)? {
        Value::Object(m) => doc.extend(m),
        other => {
            doc.insert("body".into(), other);
        }
    }
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &Value::Object(doc))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Fixed-precision rendering so files stay diffable.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.6}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
