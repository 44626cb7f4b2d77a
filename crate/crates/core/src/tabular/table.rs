use std::fmt;

use crate::error::{Error, Result};
use crate::tabular::schema::{Kind, Schema};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Number(f64),
    Category(String),
    Na,
}

impl Cell {
    pub fn is_na(&self) -> bool {
        matches!(self, Cell::Na)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_category(&self) -> Option<&str> {
        match self {
            Cell::Category(c) => Some(c),
            _ => None,
        }
    }
}

impl fmt::Display for Cell {
    /// CSV field text: shortest round-tripping decimal for numbers, empty for NA.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Number(v) => write!(f, "{v}"),
            Cell::Category(c) => f.write_str(c),
            Cell::Na => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    schema: Schema,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(schema: Schema, rows: Vec<Vec<Cell>>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::Malformed(format!(
                    "row {i} has {} cells, schema has {} columns",
                    row.len(),
                    schema.len()
                )));
            }
            for (cell, col) in row.iter().zip(&schema.columns) {
                let ok = match (cell, col.kind) {
                    (Cell::Na, _) => true,
                    (Cell::Number(v), Kind::Continuous) => v.is_finite(),
                    (Cell::Category(_), Kind::Categorical) => true,
                    _ => false,
                };
                if !ok {
                    return Err(Error::Malformed(format!(
                        "row {i}, column {:?}: cell {cell:?} does not fit kind {:?}",
                        col.name, col.kind
                    )));
                }
            }
        }
        Ok(Self { schema, rows })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.rows[row][col]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = &Cell> + '_ {
        self.rows.iter().map(move |r| &r[col])
    }

    /// Observed numeric values of a continuous column.
    pub fn numbers(&self, col: usize) -> Vec<f64> {
        self.column(col).filter_map(Cell::as_number).collect()
    }

    /// Observed labels of a categorical column.
    pub fn categories(&self, col: usize) -> Vec<&str> {
        self.column(col).filter_map(Cell::as_category).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.rows.iter().flatten().all(|c| !c.is_na())
    }

    pub fn na_count(&self) -> usize {
        self.rows.iter().flatten().filter(|c| c.is_na()).count()
    }

    /// Copy of this table carrying `schema` instead (same layout required).
    pub fn with_schema(&self, schema: Schema) -> Result<Self> {
        if !self.schema.same_layout(&schema) {
            return Err(Error::Schema("schema layout differs from table".into()));
        }
        Ok(Self {
            schema,
            rows: self.rows.clone(),
        })
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn into_rows(self) -> Vec<Vec<Cell>> {
        self.rows
    }
}
