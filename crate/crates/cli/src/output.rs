//! CSV and JSON writers. Floats are written with 17 significant digits.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use imcf_core::{Grid, State, TimeSeriesRecord, SERIES_COLUMNS};
use serde::Serialize;
use serde_json::Value;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON number carrying 17 significant digits; non-finite values become
/// strings.
pub fn json_f64(x: f64) -> Value {
    if x.is_finite() {
        serde_json::from_str(&fmt_f64(x)).expect("formatted float is valid JSON")
    } else {
        Value::String(x.to_string())
    }
}

/// Serializes `value` and rewrites every float with [`json_f64`].
pub fn to_json<T: Serialize>(value: &T) -> Result<Value> {
    Ok(precise(serde_json::to_value(value)?))
}

fn precise(v: Value) -> Value {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => {
            n.as_f64().map(json_f64).unwrap_or(Value::Number(n))
        }
        Value::Array(items) => Value::Array(items.into_iter().map(precise).collect()),
        Value::Object(map) => {
            Value::Object(map.into_iter().map(|(k, v)| (k, precise(v))).collect())
        }
        other => other,
    }
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_series(path: &Path, series: &[TimeSeriesRecord]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(SERIES_COLUMNS)?;
    for r in series {
        w.write_record(r.values().iter().map(|x| fmt_f64(*x)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_state(path: &Path, grid: &Grid, state: &State) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["chi", "u"])?;
    for (chi, u) in grid.nodes().iter().zip(&state.u) {
        w.write_record([fmt_f64(*chi), fmt_f64(*u)])?;
    }
    w.into_inner().map_err(|e| e.into_error())?.flush()?;
    Ok(())
}

/// Columns of a numeric CSV table keyed by header name.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: BTreeMap<String, Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .with_context(|| format!("opening {}", path.display()))?;
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if headers.iter().all(|h| h.is_empty()) {
            bail!("{} has no header", path.display());
        }
        let mut columns: BTreeMap<String, Vec<f64>> =
            headers.iter().map(|h| (h.clone(), Vec::new())).collect();
        let mut rows = 0;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (h, field) in headers.iter().zip(rec.iter()) {
                let x: f64 = field
                    .parse()
                    .with_context(|| format!("row {}: {h} = {field:?} is not a number", i + 1))?;
                columns.get_mut(h).expect("header column").push(x);
            }
            rows += 1;
        }
        if rows == 0 {
            bail!("{} has no data rows", path.display());
        }
        Ok(Self { columns })
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        match self.columns.get(name) {
            Some(c) => Ok(c),
            None => bail!("missing column {name:?}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        let x = 0.1_f64 + 0.2;
        let s = fmt_f64(x);
        assert_eq!(s, "3.0000000000000004e-1");
        assert_eq!(s.parse::<f64>().unwrap(), x);
        assert_eq!(json_f64(x).to_string(), s);
        assert_eq!(json_f64(f64::INFINITY), Value::String("inf".into()));
        let v = to_json(&serde_json::json!({"a": [1.5, 2], "b": {"c": 1e-300}})).unwrap();
        assert_eq!(v["a"][0].to_string(), "1.5000000000000000e+0");
        assert_eq!(v["a"][1].to_string(), "2");
        assert_eq!(v["b"]["c"].as_f64(), Some(1e-300));
    }
}
