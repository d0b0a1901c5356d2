//! Canonical JSON output: sorted object keys and a fixed float policy, so
//! identical values always serialize to identical bytes.

use serde::Serialize;
use serde_json::{Number, Value};

/// How floating-point numbers are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FloatFormat {
    /// Shortest text that parses back to the same `f64` bits.
    Full,
    /// Rounded to 9 significant decimal digits.
    #[default]
    Sig9,
}

/// Rounds `x` to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    let s = format!("{:.*e}", digits.saturating_sub(1), x);
    s.parse().unwrap_or(x)
}

/// Serializes `value` to a canonical JSON string (compact, trailing newline).
pub fn to_string<T: Serialize + ?Sized>(value: &T, fmt: FloatFormat) -> serde_json::Result<String> {
    let mut v = serde_json::to_value(value)?;
    if fmt == FloatFormat::Sig9 {
        round_floats(&mut v);
    }
    let mut s = serde_json::to_string(&v)?;
    s.push('\n');
    Ok(s)
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n
                .as_f64()
                .map(|x| round_sig(x, 9))
                .and_then(Number::from_f64)
            {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounds_to_nine_digits() {
        assert_eq!(round_sig(1234.567891234, 9), 1234.56789);
        assert_eq!(round_sig(-1.0e-20 / 3.0, 9), -3.33333333e-21);
        assert_eq!(round_sig(0.0, 9), 0.0);
    }

    #[test]
    fn keys_are_sorted_and_output_is_stable() {
        let v = json!({"zeta": 1, "alpha": [0.1, 2.0 / 3.0]});
        let a = to_string(&v, FloatFormat::Sig9).unwrap();
        assert_eq!(a, "{\"alpha\":[0.1,0.666666667],\"zeta\":1}\n");
        assert_eq!(a, to_string(&v, FloatFormat::Sig9).unwrap());
    }

    #[test]
    fn full_precision_round_trips() {
        let x = 2.0_f64 / 3.0;
        let s = to_string(&vec![x], FloatFormat::Full).unwrap();
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back[0].to_bits(), x.to_bits());
    }
}
