//! Versioned output files, written through a temporary file and a rename.

use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

/// Version of every CSV and JSON schema written by the CLI.
pub const OUTPUT_FORMAT_VERSION: u32 = 1;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    let mut file = File::create(tmp).with_context(|| format!("creating {}", tmp.display()))?;
    file.write_all(bytes)?;
    file.sync_all()?;
    fs::rename(tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

/// CSV preceded by `# mfdcf-format:` and `# config:` comment lines.
pub fn csv_bytes(config: &Value, header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut out = format!("# mfdcf-format: {OUTPUT_FORMAT_VERSION}\n# config: {config}\n").into_bytes();
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    drop(w);
    Ok(out)
}

pub fn write_csv(path: &Path, config: &Value, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_atomic(path, &csv_bytes(config, header, rows)?)
}

/// Pretty JSON object holding `format_version`, `kind`, `config` and the
/// fields of `payload`.
pub fn json_bytes<T: Serialize>(kind: &str, config: &Value, payload: &T) -> Result<Vec<u8>> {
    let mut doc = json!({ "format_version": OUTPUT_FORMAT_VERSION, "kind": kind, "config": config });
    match serde_json::to_value(payload)? {
        Value::Object(fields) => doc.as_object_mut().expect("object").extend(fields),
        other => {
            doc["data"] = other;
        }
    }
    let mut bytes = serde_json::to_vec_pretty(&doc)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_json<T: Serialize>(path: &Path, kind: &str, config: &Value, payload: &T) -> Result<()> {
    write_atomic(path, &json_bytes(kind, config, payload)?)
}

/// Skips the comment header of a CSV written by [`csv_bytes`].
pub fn read_csv_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut rd = csv::Reader::from_reader(body.as_bytes());
    let header = rd.headers()?.iter().map(str::to_string).collect();
    let rows = rd.records().map(|r| r.map(|r| r.iter().map(str::to_string).collect())).collect::<Result<_, _>>()?;
    Ok((header, rows))
}
