//! Canonical JSON encoding for result reports.
//!
//! Reports are compared byte for byte across runs, so the encoding must be
//! deterministic and lossless: object keys are sorted, every float is
//! written with 17 significant digits (enough to round-trip any f64
//! exactly), and integers pass through untouched. The renderer walks a
//! `serde_json::Value`, whose maps are already key-sorted, and formats
//! numbers itself; `serde_json`'s own float output trims digits.

use crate::error::{Error, Result};
use serde::Serialize;
use serde_json::Value;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

/// Serializes `value` to pretty-printed canonical JSON.
///
/// JSON cannot represent NaN or infinity (serde turns them into `null`),
/// so report types must keep their floats finite; every residual and norm
/// in this crate is.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let raw = serde_json::to_value(value)
        .map_err(|e| Error::ConfigInvalid(format!("cannot serialize report: {e}")))?;
    let mut out = String::new();
    render(&raw, 0, &mut out)?;
    out.push('\n');
    Ok(out)
}

fn render(value: &Value, depth: usize, out: &mut String) -> Result<()> {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                let _ = write!(out, "{n}");
            } else {
                let f = n.as_f64().ok_or_else(|| {
                    Error::ConfigInvalid(format!("unrepresentable number in report: {n}"))
                })?;
                let _ = write!(out, "{f:.16e}");
            }
        }
        Value::String(s) => {
            // serde_json handles escaping; strings alone cannot fail.
            let quoted = serde_json::to_string(s)
                .map_err(|e| Error::ConfigInvalid(format!("cannot render string: {e}")))?;
            out.push_str(&quoted);
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
            } else {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    indent(depth + 1, out);
                    render(item, depth + 1, out)?;
                }
                out.push('\n');
                indent(depth, out);
                out.push(']');
            }
        }
        Value::Object(fields) => {
            if fields.is_empty() {
                out.push_str("{}");
            } else {
                out.push('{');
                for (i, (key, val)) in fields.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    indent(depth + 1, out);
                    let quoted = serde_json::to_string(key)
                        .map_err(|e| Error::ConfigInvalid(format!("cannot render key: {e}")))?;
                    out.push_str(&quoted);
                    out.push_str(": ");
                    render(val, depth + 1, out)?;
                }
                out.push('\n');
                indent(depth, out);
                out.push('}');
            }
        }
    }
    Ok(())
}

fn indent(depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

/// Writes through a sibling temp file and renames into place, so readers
/// never observe a half-written report.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Serialize;

    #[derive(Serialize)]
    struct Demo {
        zeta: f64,
        alpha: f64,
        count: usize,
        items: Vec<f64>,
        name: Option<String>,
    }

    #[test]
    fn floats_carry_seventeen_digits_and_keys_sort() {
        let d = Demo {
            zeta: 0.1,
            alpha: 2.0 * std::f64::consts::PI,
            count: 3,
            items: vec![1.0, -0.5],
            name: None,
        };
        let text = to_canonical_json(&d).unwrap();
        assert!(text.contains("6.2831853071795862e0"), "{text}");
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
        assert!(text.contains("\"count\": 3"), "{text}");
        assert!(text.contains("\"name\": null"), "{text}");
        let alpha_at = text.find("alpha").unwrap();
        let zeta_at = text.find("zeta").unwrap();
        assert!(alpha_at < zeta_at);
    }

    #[test]
    fn rendering_is_deterministic_and_roundtrips() {
        let d = Demo {
            zeta: 1.0 / 3.0,
            alpha: -1.2345678901234567e-10,
            count: 0,
            items: vec![f64::MIN_POSITIVE, 1e300],
            name: Some("π ≈ \"3\"".into()),
        };
        let a = to_canonical_json(&d).unwrap();
        let b = to_canonical_json(&d).unwrap();
        assert_eq!(a, b);
        let back: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(back["zeta"].as_f64().unwrap(), 1.0 / 3.0);
        assert_eq!(back["alpha"].as_f64().unwrap(), -1.2345678901234567e-10);
        assert_eq!(back["items"][0].as_f64().unwrap(), f64::MIN_POSITIVE);
        assert_eq!(back["items"][1].as_f64().unwrap(), 1e300);
        assert_eq!(back["name"].as_str().unwrap(), "π ≈ \"3\"");
    }

    #[test]
    fn whole_floats_stay_floats() {
        let v = serde_json::json!({ "ratio": 2.0, "count": 2 });
        let text = to_canonical_json(&v).unwrap();
        assert!(text.contains("\"ratio\": 2.0000000000000000e0"), "{text}");
        assert!(text.contains("\"count\": 2"), "{text}");
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        write_atomic(&path, "first").unwrap();
        write_atomic(&path, "second").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");
        assert!(!path.with_extension("json.tmp").exists());
    }
}
