//! Deterministic JSON output: fixed key order (struct order), floats
//! printed with 17 significant digits so identical runs emit byte-identical
//! files.

use serde::Serialize;
use serde_json::ser::Formatter;
use std::io;

/// Format a float with 17 significant digits, JSON-compatible.
pub fn fmt_f64(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        // integral values stay readable and exact
        format!("{:.1}", v)
    } else {
        format!("{:.16e}", v)
    }
}

struct SigDigits;

impl Formatter for SigDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serialize with deterministic float formatting.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigits);
    value.serialize(&mut ser).expect("json serialization cannot fail for crate types");
    String::from_utf8(out).expect("serde_json emits utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Serialize;

    #[derive(Serialize)]
    struct Demo {
        b: f64,
        a: f64,
    }

    #[test]
    fn key_order_is_struct_order_and_floats_are_17_digits() {
        let s = to_json_string(&Demo { b: 2.0 / 3.0, a: 1.0 });
        assert_eq!(s, "{\"b\":6.6666666666666663e-1,\"a\":1.0}");
    }

    #[test]
    fn byte_identical_across_calls() {
        let d = Demo { b: std::f64::consts::PI, a: -0.1 };
        assert_eq!(to_json_string(&d), to_json_string(&d));
    }
}
