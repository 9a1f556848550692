//! Deterministic report output: JSON with sorted keys and 17 significant
//! digits per float, CSV tables, and whitespace-separated `.dat` files for
//! gnuplot.

use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter};

use crate::error::Result;

/// Pretty JSON formatter that prints every float as `{:.16e}`.
struct FixedFloat<'a> {
    inner: serde_json::ser::PrettyFormatter<'a>,
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.inner.$name(w $(, $arg)*)
        })*
    };
}

impl Formatter for FixedFloat<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            // JSON has no encoding for non-finite numbers.
            CompactFormatter.write_null(w)
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        end_object_key();
        begin_object_value();
        end_object_value();
    }
}

/// Serializes with sorted object keys and fixed float formatting.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    // Going through `Value` sorts keys (serde_json maps are ordered).
    let value = serde_json::to_value(value)?;
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut out,
        FixedFloat {
            inner: serde_json::ser::PrettyFormatter::with_indent(b"  "),
        },
    );
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

/// Numeric table with named columns.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Table {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.iter().map(|v| fmt_float(*v)).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_dat(&self) -> String {
        let mut s = format!("# {}\n", self.columns.join(" "));
        for row in &self.rows {
            s.push_str(&row.iter().map(|v| fmt_float(*v)).collect::<Vec<_>>().join(" "));
            s.push('\n');
        }
        s
    }
}

/// Integers print without exponent; everything else with 17 significant
/// digits.
pub fn fmt_float(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn json_is_sorted_and_fixed() {
        let mut m = HashMap::new();
        m.insert("zeta", 0.1);
        m.insert("alpha", 1.0 / 3.0);
        let s = to_json_string(&m).unwrap();
        let a = s.find("alpha").unwrap();
        let z = s.find("zeta").unwrap();
        assert!(a < z);
        assert!(s.contains("3.3333333333333331e-1"));
        assert!(s.contains("1.0000000000000001e-1"));
        let back: HashMap<String, f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back["alpha"], 1.0 / 3.0);
    }

    #[test]
    fn empty_table_has_header_only() {
        let t = Table::new(["k", "error"]);
        assert_eq!(t.to_csv(), "k,error\n");
        assert_eq!(t.to_dat(), "# k error\n");
    }
}
