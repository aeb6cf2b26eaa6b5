//! JSON reports, CSV series and 16-bit PGM images written into one output
//! directory.

use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

pub const SCHEMA: &str = "ionlink-report/1";

/// Where a number comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Taken from the published design or measurement.
    Published,
    /// Produced by this run.
    Computed,
    /// Chosen where no published value exists.
    Assumed,
}

impl From<crate::budget::Provenance> for Provenance {
    fn from(p: crate::budget::Provenance) -> Self {
        match p {
            crate::budget::Provenance::Measured => Provenance::Published,
            crate::budget::Provenance::Computed => Provenance::Computed,
            crate::budget::Provenance::Assumed => Provenance::Assumed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Scalar(f64),
    List(Vec<f64>),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantity {
    pub name: String,
    pub value: Value,
    pub unit: String,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Quantity {
    pub fn new(name: &str, value: f64, unit: &str, provenance: Provenance) -> Self {
        Self {
            name: name.into(),
            value: Value::Scalar(value),
            unit: unit.into(),
            provenance,
            uncertainty: None,
            note: None,
        }
    }

    pub fn list(name: &str, values: Vec<f64>, unit: &str, provenance: Provenance) -> Self {
        Self {
            value: Value::List(values),
            ..Self::new(name, 0.0, unit, provenance)
        }
    }

    pub fn text(name: &str, value: &str, provenance: Provenance) -> Self {
        Self {
            value: Value::Text(value.into()),
            ..Self::new(name, 0.0, "", provenance)
        }
    }

    pub fn pm(mut self, uncertainty: f64) -> Self {
        self.uncertainty = Some(uncertainty);
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
    pub provenance: Provenance,
}

/// Suggested rendering of a CSV series; drawing is left to external tools.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotSpec {
    pub kind: String,
    pub x: String,
    pub y: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_by: Option<String>,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Artifact {
    /// File name relative to the output directory.
    pub file: String,
    pub format: String,
    pub description: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<Column>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plot: Option<PlotSpec>,
}

/// One acceptance check as it appears in a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub id: u32,
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub unit: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema: String,
    pub command: String,
    pub seed: u64,
    pub tolerance_scale: f64,
    /// Config file as given on the command line, or `default`.
    pub config: String,
    pub quantities: Vec<Quantity>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<Artifact>,
}

impl Report {
    pub fn new(command: &str, seed: u64, tolerance_scale: f64, config: &str) -> Self {
        Self {
            schema: SCHEMA.into(),
            command: command.into(),
            seed,
            tolerance_scale,
            config: config.into(),
            quantities: Vec::new(),
            checks: Vec::new(),
            warnings: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn push(&mut self, q: Quantity) {
        self.quantities.push(q);
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        self.warnings.push(w.into());
    }

    pub fn quantity(&self, name: &str) -> Option<&Quantity> {
        self.quantities.iter().find(|q| q.name == name)
    }
}

/// A column-oriented table with units for every column.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[(&str, &str)], provenance: Provenance) -> Self {
        Self {
            columns: columns
                .iter()
                .map(|(n, u)| Column {
                    name: (*n).into(),
                    unit: (*u).into(),
                    provenance,
                })
                .collect(),
            rows: Vec::new(),
        }
    }

    pub fn row_f64(&mut self, values: &[f64]) {
        self.rows.push(values.iter().map(|v| fmt_f64(*v)).collect());
    }

    pub fn row(&mut self, values: Vec<String>) {
        self.rows.push(values);
    }
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Output directory guard: every write goes through a plain file name
/// inside `root`.
#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::Io(format!("cannot create `{}`: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> Result<PathBuf> {
        let p = Path::new(name);
        let plain = p.components().count() == 1 && matches!(p.components().next(), Some(Component::Normal(_)));
        if !plain {
            return Err(Error::Io(format!("refusing to write `{name}` outside the output directory")));
        }
        Ok(self.root.join(p))
    }

    fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(name)?;
        fs::write(&p, bytes).map_err(|e| Error::Io(format!("cannot write `{}`: {e}", p.display())))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
        s.push('\n');
        self.write_bytes(name, s.as_bytes())
    }

    /// Write `table` and register it in `report`.
    pub fn write_csv(
        &self,
        report: &mut Report,
        name: &str,
        description: &str,
        table: &Table,
        plot: Option<PlotSpec>,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(table.columns.iter().map(|c| c.name.as_str())).map_err(io)?;
        for r in &table.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        self.write_bytes(name, &bytes)?;
        report.artifacts.push(Artifact {
            file: name.into(),
            format: "csv".into(),
            description: description.into(),
            columns: table.columns.clone(),
            plot,
        });
        Ok(())
    }

    /// Write a 16-bit binary PGM scaled so the maximum maps to 65535.
    pub fn write_pgm(&self, report: &mut Report, name: &str, description: &str, width: usize, values: &[f64]) -> Result<()> {
        self.write_bytes(name, &pgm16(width, values)?)?;
        report.artifacts.push(Artifact {
            file: name.into(),
            format: "pgm".into(),
            description: description.into(),
            columns: Vec::new(),
            plot: None,
        });
        Ok(())
    }
}

/// Encode a row-major image (first row at the top) as binary 16-bit PGM.
pub fn pgm16(width: usize, values: &[f64]) -> Result<Vec<u8>> {
    if width == 0 || values.len() % width != 0 {
        return Err(Error::InvalidParameter(format!("{} values do not fill rows of {width}", values.len())));
    }
    let height = values.len() / width;
    let max = values.iter().copied().fold(0.0f64, f64::max);
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for v in values {
        let s = if max > 0.0 { (v.max(0.0) / max * 65535.0).round() as u16 } else { 0 };
        out.extend_from_slice(&s.to_be_bytes());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_dir_rejects_escapes() {
        let dir = tempfile::tempdir().unwrap();
        let o = OutDir::create(dir.path()).unwrap();
        assert!(o.path("a.json").is_ok());
        for bad in ["../a.json", "/tmp/a.json", "sub/a.json", "..", ""] {
            assert!(o.path(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn pgm_header_and_scaling() {
        let b = pgm16(2, &[0.0, 1.0, 0.5, 2.0]).unwrap();
        let header = b"P5\n2 2\n65535\n";
        assert_eq!(&b[..header.len()], header);
        let px: Vec<u16> = b[header.len()..].chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
        assert_eq!(px, vec![0, 32768, 16384, 65535]);
        assert!(pgm16(3, &[1.0; 4]).is_err());
    }

    #[test]
    fn csv_round_trips_floats() {
        let dir = tempfile::tempdir().unwrap();
        let o = OutDir::create(dir.path()).unwrap();
        let mut r = Report::new("t", 1, 1.0, "default");
        let mut t = Table::new(&[("x", "um"), ("y", "1")], Provenance::Computed);
        t.row_f64(&[0.1, 1.0 / 3.0]);
        o.write_csv(&mut r, "t.csv", "test", &t, None).unwrap();
        let mut rd = csv::Reader::from_path(dir.path().join("t.csv")).unwrap();
        let rec = rd.records().next().unwrap().unwrap();
        assert_eq!(rec[1].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(r.artifacts[0].columns[0].unit, "um");
    }
}
