//! Serialization helpers shared by reports.

use serde::Serialize;

use crate::error::{Error, Result};

/// Pretty JSON with object keys in sorted order.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Format(e.to_string()))?;
    serde_json::to_string_pretty(&v).map_err(|e| Error::Format(e.to_string()))
}

/// Shortest representation that reads back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Header line plus one line per row, comma separated.
pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn keys_sorted_and_floats_round_trip() {
        let mut m = HashMap::new();
        m.insert("zeta", 0.1 + 0.2);
        m.insert("alpha", 1.0 / 3.0);
        let s = to_json(&m).unwrap();
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
        let back: HashMap<String, f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back["zeta"], 0.1 + 0.2);
        assert_eq!(fmt_f64(0.1 + 0.2).parse::<f64>().unwrap(), 0.1 + 0.2);
        assert_eq!(fmt_opt(None), "");
    }
}
