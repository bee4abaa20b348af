//! Report emission in the requested formats. Every file carries the
//! manifest digest: a trailing line in text, a top-level field in JSON and a
//! leading `#` comment in CSV.

use std::path::Path;

use anyhow::{Context, Result};
use factcons::corpus::format::write_atomic;
use factcons::report::{render_text, Format, Table};
use serde::Serialize;

use crate::manifest::Manifest;

pub struct Report<'a, T: Serialize> {
    /// File stem for the text and JSON outputs.
    pub base: &'a str,
    pub tables: Vec<Table>,
    /// Lines appended after the tables in text output.
    pub notes: Vec<String>,
    pub data: &'a T,
}

pub fn text(tables: &[Table], notes: &[String], digest: &str) -> String {
    let mut out = render_text(tables);
    if !notes.is_empty() {
        out.push('\n');
        for n in notes {
            out.push_str(n);
            out.push('\n');
        }
    }
    out.push_str(&format!("\nmanifest {digest}\n"));
    out
}

pub fn json<T: Serialize>(data: &T, tables: &[Table], digest: &str) -> Result<String> {
    let v = serde_json::json!({
        "manifest_digest": digest,
        "report": data,
        "tables": tables,
    });
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn csv(table: &Table, digest: &str) -> String {
    format!("# manifest {digest}\n{}", table.to_csv())
}

/// Writes one artifact atomically and records its checksum.
pub fn artifact(dir: &Path, name: &str, bytes: &[u8], manifest: &mut Manifest) -> Result<()> {
    let path = dir.join(name);
    write_atomic(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    manifest.artifact(name, bytes);
    Ok(())
}

/// Writes the report under `out` (or prints it when `out` is absent).
/// Text output is echoed to stdout either way.
pub fn emit<T: Serialize>(report: &Report<T>, formats: &[Format], out: Option<&Path>, manifest: &mut Manifest) -> Result<()> {
    let digest = manifest.manifest_digest.clone();
    let Some(dir) = out else {
        match formats.first() {
            Some(Format::Json) => print!("{}", json(report.data, &report.tables, &digest)?),
            Some(Format::Csv) => {
                for t in &report.tables {
                    print!("{}", csv(t, &digest));
                }
            }
            _ => print!("{}", text(&report.tables, &report.notes, &digest)),
        }
        return Ok(());
    };
    for f in formats {
        match f {
            Format::Text => {
                let s = text(&report.tables, &report.notes, &digest);
                print!("{s}");
                artifact(dir, &format!("{}.txt", report.base), s.as_bytes(), manifest)?;
            }
            Format::Json => {
                let s = json(report.data, &report.tables, &digest)?;
                artifact(dir, &format!("{}.json", report.base), s.as_bytes(), manifest)?;
            }
            Format::Csv => {
                for t in &report.tables {
                    artifact(dir, &format!("{}.csv", t.name), csv(t, &digest).as_bytes(), manifest)?;
                }
            }
        }
    }
    Ok(())
}
