//! CSV ingestion and export. Header row required; empty fields are NA.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::tabular::schema::{ColumnSpec, Kind, Schema};
use crate::tabular::table::{Cell, Table};

/// Columns with at most this many distinct integral values are categorical.
pub const CATEGORICAL_MAX_LEVELS: usize = 20;

struct RawCsv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_raw(bytes: &[u8]) -> Result<RawCsv> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Malformed("empty CSV: no header row".into()));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { .. } => Error::Malformed(format!("ragged CSV row: {e}")),
            _ => Error::Csv(e),
        })?;
        rows.push(record.iter().map(|f| f.trim().to_string()).collect());
    }
    Ok(RawCsv { header, rows })
}

fn parse_number(field: &str) -> Option<f64> {
    field.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Guesses each column's kind from its text.
///
/// A column is categorical when any non-empty field fails to parse as a
/// finite number, or when it has at most [`CATEGORICAL_MAX_LEVELS`] distinct
/// values that are all integral.
pub fn infer_schema(bytes: &[u8]) -> Result<Schema> {
    let raw = read_raw(bytes)?;
    let columns = raw
        .header
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let fields = raw.rows.iter().map(|r| r[j].as_str()).filter(|f| !f.is_empty());
            let mut numeric = true;
            let mut integral = true;
            let mut distinct = BTreeSet::new();
            for f in fields {
                match parse_number(f) {
                    Some(v) => {
                        integral &= v.fract() == 0.0;
                        if distinct.len() <= CATEGORICAL_MAX_LEVELS {
                            distinct.insert(f);
                        }
                    }
                    None => {
                        numeric = false;
                        break;
                    }
                }
            }
            let categorical = !numeric || (integral && distinct.len() <= CATEGORICAL_MAX_LEVELS);
            if categorical {
                ColumnSpec::categorical(name.clone(), Vec::new())
            } else {
                ColumnSpec::continuous(name.clone())
            }
        })
        .collect();
    Schema::new(columns)
}

/// Parses CSV bytes against `schema` (matched by header name).
pub fn read_table(bytes: &[u8], schema: &Schema) -> Result<Table> {
    let raw = read_raw(bytes)?;
    let order: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| {
            raw.header
                .iter()
                .position(|h| *h == c.name)
                .ok_or_else(|| Error::Schema(format!("column {:?} missing from CSV header", c.name)))
        })
        .collect::<Result<_>>()?;

    let rows = raw
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            order
                .iter()
                .zip(&schema.columns)
                .map(|(&j, col)| {
                    let field = r[j].as_str();
                    if field.is_empty() {
                        return Ok(Cell::Na);
                    }
                    match col.kind {
                        Kind::Continuous => parse_number(field).map(Cell::Number).ok_or_else(|| {
                            Error::Malformed(format!("row {i}, column {:?}: {field:?} is not a number", col.name))
                        }),
                        Kind::Categorical => Ok(Cell::Category(field.to_string())),
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Table::new(schema.clone(), rows)
}

/// Infers a schema (or uses `schema_override`) and parses the table.
pub fn load_table(bytes: &[u8], schema_override: Option<&Schema>) -> Result<Table> {
    match schema_override {
        Some(s) => read_table(bytes, s),
        None => read_table(bytes, &infer_schema(bytes)?),
    }
}

pub fn write_table(table: &Table) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(table.schema().names())?;
    for row in table.rows() {
        writer.write_record(row.iter().map(|c| c.to_string()))?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infers_kinds() {
        let csv = b"s,x,b\na,1.5,0\nb,2.7,1\na,,0\n";
        let schema = infer_schema(csv).unwrap();
        let kinds: Vec<Kind> = schema.columns.iter().map(|c| c.kind).collect();
        assert_eq!(kinds, vec![Kind::Categorical, Kind::Continuous, Kind::Categorical]);
        let table = read_table(csv, &schema).unwrap();
        assert_eq!(table.cell(2, 1), &Cell::Na);
        assert_eq!(table.cell(1, 0), &Cell::Category("b".into()));
    }

    #[test]
    fn many_integers_stay_continuous() {
        let mut csv = String::from("n\n");
        for i in 0..25 {
            csv.push_str(&format!("{i}\n"));
        }
        assert_eq!(infer_schema(csv.as_bytes()).unwrap().columns[0].kind, Kind::Continuous);
    }

    #[test]
    fn ragged_and_empty_rejected() {
        assert!(matches!(infer_schema(b"a,b\n1,2\n3\n"), Err(Error::Malformed(_))));
        assert!(infer_schema(b"").is_err());
    }

    #[test]
    fn write_then_read_is_identity() {
        let csv = b"s,x\na,1.5\n,0.1\nb,\n";
        let table = load_table(csv, None).unwrap();
        let out = write_table(&table).unwrap();
        assert_eq!(load_table(&out, Some(table.schema())).unwrap(), table);
        assert_eq!(out, csv.to_vec());
    }
}
