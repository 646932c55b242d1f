use std::fs;
use std::io::Write;

use ndna_core::report::{csv_table, fmt_f64};
use ndna_core::Result;
use serde_json::Value;

use crate::{Format, Sink};

/// Writes `text` to the sink's file or to standard output.
pub fn emit(sink: &Sink, text: &str) -> Result<()> {
    match &sink.out {
        Some(path) => fs::write(path, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

/// Report in the sink's format: sorted-key JSON, or `key,value` rows with
/// dotted paths for CSV.
pub fn render(sink: &Sink, report: &Value) -> String {
    match sink.format {
        Format::Json => serde_json::to_string_pretty(report).expect("values always serialize"),
        Format::Csv => {
            let mut rows = Vec::new();
            flatten("", report, &mut rows);
            csv_table(&["key", "value"], rows.into_iter().map(|(k, v)| vec![k, v]))
        }
    }
}

fn flatten(prefix: &str, value: &Value, rows: &mut Vec<(String, String)>) {
    let join = |key: &str| {
        if prefix.is_empty() {
            key.to_string()
        } else {
            format!("{prefix}.{key}")
        }
    };
    match value {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(&join(k), v, rows)),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(&join(&i.to_string()), v, rows)),
        Value::Null => rows.push((prefix.to_string(), String::new())),
        Value::Number(n) => {
            let text = n.as_f64().filter(|_| n.is_f64()).map_or_else(|| n.to_string(), fmt_f64);
            rows.push((prefix.to_string(), text));
        }
        Value::String(s) => rows.push((prefix.to_string(), quote(s))),
        Value::Bool(b) => rows.push((prefix.to_string(), b.to_string())),
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
