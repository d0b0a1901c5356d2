//! Canonical JSON interchange:
//! `{"version":1,"frames":T,"joints":V,"dims":d,"label":int|null,"data":[[[x,y,z],...],...]}`

use serde::Serialize;
use serde_json::Value;

use super::{SkeletonError, SkeletonSequence};
use crate::canonical::{self, FloatFormat};

#[derive(Serialize)]
struct Record<'a> {
    version: u32,
    frames: usize,
    joints: usize,
    dims: usize,
    label: Option<usize>,
    data: &'a [Vec<Vec<f64>>],
}

pub fn write_canonical(seq: &SkeletonSequence, fmt: FloatFormat) -> String {
    let nested = seq.to_nested();
    let rec = Record {
        version: 1,
        frames: seq.frames(),
        joints: seq.joints(),
        dims: seq.dims(),
        label: seq.label,
        data: &nested,
    };
    canonical::to_string(&rec, fmt).expect("finite tensor always serializes")
}

pub fn read_canonical(src: &str) -> Result<SkeletonSequence, SkeletonError> {
    let value: Value = serde_json::from_str(src).map_err(|e| violation("", e.to_string()))?;
    read_canonical_value(&value)
}

fn violation(path: &str, reason: impl Into<String>) -> SkeletonError {
    SkeletonError::SchemaViolation {
        path: if path.is_empty() {
            "/".into()
        } else {
            path.into()
        },
        reason: reason.into(),
    }
}

fn count(
    obj: &serde_json::Map<String, Value>,
    key: &str,
    min: u64,
) -> Result<usize, SkeletonError> {
    let path = format!("/{key}");
    let v = obj.get(key).ok_or_else(|| violation(&path, "missing"))?;
    match v.as_u64() {
        Some(n) if n >= min => Ok(n as usize),
        _ => Err(violation(&path, format!("expected integer >= {min}"))),
    }
}

fn array<'a>(v: &'a Value, path: &str, len: usize) -> Result<&'a Vec<Value>, SkeletonError> {
    let items = v
        .as_array()
        .ok_or_else(|| violation(path, "expected array"))?;
    if items.len() != len {
        return Err(violation(
            path,
            format!("expected {len} elements, found {}", items.len()),
        ));
    }
    Ok(items)
}

pub fn read_canonical_value(value: &Value) -> Result<SkeletonSequence, SkeletonError> {
    let obj = value
        .as_object()
        .ok_or_else(|| violation("", "expected object"))?;
    match obj.get("version").and_then(Value::as_u64) {
        Some(1) => {}
        Some(_) => return Err(violation("/version", "unsupported version")),
        None => return Err(violation("/version", "missing or not an integer")),
    }
    let frames = count(obj, "frames", 1)?;
    let joints = count(obj, "joints", 2)?;
    let dims = count(obj, "dims", 1)?;
    let label = match obj.get("label") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .ok_or_else(|| violation("/label", "expected non-negative integer or null"))?
                as usize,
        ),
    };

    let data_v = obj
        .get("data")
        .ok_or_else(|| violation("/data", "missing"))?;
    let mut data = Vec::with_capacity(frames * joints * dims);
    for (t, frame) in array(data_v, "/data", frames)?.iter().enumerate() {
        let fp = format!("/data/{t}");
        for (v, point) in array(frame, &fp, joints)?.iter().enumerate() {
            let pp = format!("{fp}/{v}");
            for (k, x) in array(point, &pp, dims)?.iter().enumerate() {
                match x.as_f64() {
                    Some(x) if x.is_finite() => data.push(x),
                    _ => return Err(violation(&format!("{pp}/{k}"), "expected finite number")),
                }
            }
        }
    }
    Ok(SkeletonSequence::new(frames, joints, dims, data)?.with_label(label))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_joint() -> SkeletonSequence {
        SkeletonSequence::new(1, 2, 3, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn round_trip_fixture() {
        let s = two_joint().with_label(Some(4));
        let text = write_canonical(&s, FloatFormat::Full);
        let back = read_canonical(&text).unwrap();
        assert_eq!(back.data(), s.data());
        assert_eq!(back.label, Some(4));
    }

    #[test]
    fn missing_frames_key() {
        let src = r#"{"version":1,"joints":2,"dims":3,"label":null,"data":[]}"#;
        match read_canonical(src) {
            Err(SkeletonError::SchemaViolation { path, .. }) => assert_eq!(path, "/frames"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nested_path_is_reported() {
        let src = r#"{"version":1,"frames":1,"joints":2,"dims":3,"label":null,
                      "data":[[[0,0,0],[1,"x",0]]]}"#;
        match read_canonical(src) {
            Err(SkeletonError::SchemaViolation { path, .. }) => assert_eq!(path, "/data/0/1/1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_version() {
        let src = r#"{"version":2,"frames":1,"joints":2,"dims":1,"data":[[[0],[1]]]}"#;
        assert!(matches!(
            read_canonical(src),
            Err(SkeletonError::SchemaViolation { ref path, .. }) if path == "/version"
        ));
    }

    #[test]
    fn sig9_output_is_rounded() {
        let s = SkeletonSequence::new(1, 2, 1, vec![1.0 / 3.0, 2.0]).unwrap();
        let text = write_canonical(&s, FloatFormat::Sig9);
        assert!(text.contains("0.333333333"));
        assert!(!text.contains("0.3333333333"));
    }
}
