//! Canonical JSON and number formatting shared by every artifact writer.
//!
//! Reports, models, traces and manifests must be byte-identical across runs
//! and thread counts, so all of them funnel through [`to_canonical_json`]:
//! object keys are sorted (via `serde_json::Value`, whose map is a BTreeMap),
//! floats are printed with [`fmt_real`]'s fixed 17-significant-digit
//! scientific form, and the document ends with a single newline.
//!
//! Non-finite floats cannot be represented in JSON; `serde_json` turns them
//! into `null` during `to_value`, and that is the documented encoding here
//! (an infinite VIF in an elimination trace serializes as `null`).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::{Error, Result};

/// Render a real number with 17 significant digits in scientific notation.
///
/// 17 digits pin down every finite `f64` uniquely, so `fmt_real` followed by
/// `str::parse::<f64>()` restores the original bit pattern. Non-finite
/// values use the spellings Rust's float parser accepts (`NaN`, `inf`,
/// `-inf`); a NaN round-trips to the canonical quiet NaN.
pub fn fmt_real(value: f64) -> String {
    if value.is_nan() {
        "NaN".to_string()
    } else if value == f64::INFINITY {
        "inf".to_string()
    } else if value == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{value:.16e}")
    }
}

struct RealFormatter;

impl serde_json::ser::Formatter for RealFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize to canonical JSON: sorted keys, compact separators, floats via
/// [`fmt_real`]'s notation, trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let tree = serde_json::to_value(value).map_err(|e| Error::Malformed {
        what: "json document".to_string(),
        detail: e.to_string(),
    })?;
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, RealFormatter);
    tree.serialize(&mut ser).map_err(|e| Error::Malformed {
        what: "json document".to_string(),
        detail: e.to_string(),
    })?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Write canonical JSON to `path`.
pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = to_canonical_json(value)?;
    let file = File::create(path).map_err(|e| Error::Unwritable {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::Unwritable {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted_and_floats_canonical() {
        let doc = json!({"zeta": 1.5, "alpha": {"b": 2, "a": 0.1}});
        let text = to_canonical_json(&doc).unwrap();
        assert_eq!(
            text,
            "{\"alpha\":{\"a\":1.0000000000000001e-1,\"b\":2},\"zeta\":1.5000000000000000e0}\n"
        );
    }

    #[test]
    fn non_finite_becomes_null() {
        let doc = json!({ "vif": f64::INFINITY });
        assert_eq!(to_canonical_json(&doc).unwrap(), "{\"vif\":null}\n");
    }

    #[test]
    fn special_values_have_fixed_spellings() {
        assert_eq!(fmt_real(f64::NAN), "NaN");
        assert_eq!(fmt_real(f64::INFINITY), "inf");
        assert_eq!(fmt_real(f64::NEG_INFINITY), "-inf");
        assert!("NaN".parse::<f64>().unwrap().is_nan());
        assert_eq!("-inf".parse::<f64>().unwrap(), f64::NEG_INFINITY);
    }

    proptest! {
        #[test]
        fn fmt_real_round_trips_exactly(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            let back: f64 = fmt_real(v).parse().unwrap();
            prop_assert_eq!(back.to_bits(), v.to_bits());
        }
    }
}
