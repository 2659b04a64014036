//! Canonical JSON encoding used for signing, hashing and storage.
//!
//! Objects have their keys sorted by byte order, there is no insignificant
//! whitespace, every string (keys included) is NFC-normalized and numbers must
//! be integers. The encoder does not rely on `serde_json`'s map ordering, so it
//! is stable whichever map backend is compiled in.

use serde::Serialize;
use serde_json::Value;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, thiserror::Error)]
pub enum CanonicalError {
    #[error("value cannot be represented as JSON: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("non-integer number {0} has no canonical form")]
    NonInteger(String),
}

/// Encode any serializable value canonically.
pub fn to_canonical_vec<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    let value = serde_json::to_value(value)?;
    let mut out = Vec::with_capacity(128);
    write_value(&value, &mut out)?;
    Ok(out)
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    // the writer only ever emits UTF-8
    to_canonical_vec(value).map(|bytes| String::from_utf8(bytes).expect("canonical JSON is UTF-8"))
}

fn write_value(value: &Value, out: &mut Vec<u8>) -> Result<(), CanonicalError> {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => {
            if n.is_u64() || n.is_i64() {
                out.extend_from_slice(n.to_string().as_bytes());
            } else {
                return Err(CanonicalError::NonInteger(n.to_string()));
            }
        }
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out)?;
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(String, &Value)> =
                map.iter().map(|(k, v)| (k.nfc().collect(), v)).collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            out.push(b'{');
            for (i, (key, item)) in entries.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(key, out);
                out.push(b':');
                write_value(item, out)?;
            }
            out.push(b'}');
        }
    }
    Ok(())
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    let normalized: String = s.nfc().collect();
    // serde_json's string escaping is the minimal JSON escaping we want
    let escaped = serde_json::to_string(&normalized).expect("string serialization is infallible");
    out.extend_from_slice(escaped.as_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_sorted_without_whitespace() {
        let v = json!({"b": 1, "a": [true, null, "x"], "c": {"z": 0, "y": -3}});
        assert_eq!(
            to_canonical_string(&v).unwrap(),
            r#"{"a":[true,null,"x"],"b":1,"c":{"y":-3,"z":0}}"#
        );
    }

    #[test]
    fn strings_are_nfc_normalized() {
        let decomposed = json!({"k": "e\u{301}"});
        let composed = json!({"k": "\u{e9}"});
        assert_eq!(
            to_canonical_vec(&decomposed).unwrap(),
            to_canonical_vec(&composed).unwrap()
        );
    }

    #[test]
    fn floats_rejected() {
        assert!(matches!(
            to_canonical_vec(&json!({"x": 1.5})),
            Err(CanonicalError::NonInteger(_))
        ));
    }

    #[test]
    fn control_characters_escaped() {
        assert_eq!(
            to_canonical_string(&json!("a\nb\"")).unwrap(),
            r#""a\nb\"""#
        );
    }
}
