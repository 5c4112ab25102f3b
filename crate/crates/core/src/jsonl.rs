//! JSON Lines helpers shared by every file format in the crate.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Returns true for a `{"header": {...}}` line.
pub fn is_header(line: &str) -> bool {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(map)) => map.len() == 1 && map.contains_key("header"),
        _ => false,
    }
}

/// Reads one record per non-blank line. A leading header line is skipped and
/// returned separately. Line numbers in errors are 1-based.
pub fn read_with_header<T: DeserializeOwned>(
    reader: impl BufRead,
) -> Result<(Option<Value>, Vec<T>), JsonlError> {
    let mut header = None;
    let mut records = Vec::new();
    let mut seen_content = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if !seen_content && is_header(&line) {
            let mut v: Value = serde_json::from_str(&line)?;
            header = v.get_mut("header").map(Value::take);
            seen_content = true;
            continue;
        }
        seen_content = true;
        let record = serde_json::from_str(&line).map_err(|source| JsonlError::Parse {
            line: i + 1,
            source,
        })?;
        records.push(record);
    }
    Ok((header, records))
}

pub fn read<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, JsonlError> {
    read_with_header(reader).map(|(_, records)| records)
}

#[derive(Serialize)]
struct HeaderLine<'a, T> {
    header: &'a T,
}

/// Writes `{"header": ...}` keeping the header's own field order.
pub fn write_header<T: Serialize>(mut writer: impl Write, header: &T) -> Result<(), JsonlError> {
    serde_json::to_writer(&mut writer, &HeaderLine { header })?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn write<'a, T: Serialize + 'a>(
    mut writer: impl Write,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<(), JsonlError> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
