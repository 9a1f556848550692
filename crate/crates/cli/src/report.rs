use std::path::Path;

use hfact_core::io::{self, Table};
use serde_json::Value;

use crate::config::Format;

/// Output of one subcommand: a JSON summary, CSV tables and `.dat` series.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub name: String,
    pub summary: Value,
    pub tables: Vec<(String, Table)>,
    pub series: Vec<(String, Table)>,
}

impl Report {
    pub fn new(name: &str, summary: Value) -> Report {
        Report {
            name: name.to_string(),
            summary,
            tables: Vec::new(),
            series: Vec::new(),
        }
    }

    pub fn table(mut self, stem: &str, t: Table) -> Report {
        self.tables.push((stem.to_string(), t));
        self
    }

    pub fn series(mut self, stem: &str, t: Table) -> Report {
        self.series.push((stem.to_string(), t));
        self
    }
}

/// Writes `<name>.json`, `<stem>.csv` and `<stem>.dat` files into `dir`.
/// Output is byte-identical for identical reports.
pub fn emit_report(report: &Report, dir: &Path, formats: &[Format]) -> hfact_core::Result<()> {
    std::fs::create_dir_all(dir)?;
    if formats.contains(&Format::Json) {
        io::write_json(&dir.join(format!("{}.json", report.name)), &report.summary)?;
    }
    if formats.contains(&Format::Csv) {
        for (stem, t) in &report.tables {
            std::fs::write(dir.join(format!("{stem}.csv")), t.to_csv())?;
        }
    }
    if formats.contains(&Format::Dat) {
        for (stem, t) in &report.series {
            std::fs::write(dir.join(format!("{stem}.dat")), t.to_dat())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_writes_valid_files() {
        let dir = tempfile::tempdir().unwrap();
        let r = Report::new("empty", serde_json::json!({}))
            .table("rows", Table::new(["k", "error"]))
            .series("decay", Table::new(["k", "error"]));
        emit_report(&r, dir.path(), &[Format::Json, Format::Csv, Format::Dat]).unwrap();
        let json = std::fs::read_to_string(dir.path().join("empty.json")).unwrap();
        assert_eq!(serde_json::from_str::<Value>(&json).unwrap(), serde_json::json!({}));
        assert_eq!(std::fs::read_to_string(dir.path().join("rows.csv")).unwrap(), "k,error\n");
        assert_eq!(std::fs::read_to_string(dir.path().join("decay.dat")).unwrap(), "# k error\n");
    }

    #[test]
    fn output_is_byte_identical() {
        let mut t = Table::new(["x", "y"]);
        t.push(vec![0.1, 1.0 / 3.0]);
        let r = Report::new("r", serde_json::json!({"b": 0.1, "a": [1.5, 2.0]})).table("t", t);
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        emit_report(&r, d1.path(), &[Format::Json, Format::Csv]).unwrap();
        emit_report(&r, d2.path(), &[Format::Json, Format::Csv]).unwrap();
        for f in ["r.json", "t.csv"] {
            assert_eq!(
                std::fs::read(d1.path().join(f)).unwrap(),
                std::fs::read(d2.path().join(f)).unwrap()
            );
        }
    }
}
