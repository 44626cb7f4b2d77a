use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Continuous,
    Categorical,
}

/// Per-column encoder state.
///
/// Continuous columns carry the min/max fitted over observed cells;
/// categorical columns carry their vocabulary. The reserved NA slot is not
/// stored in `categories` but always follows them in the encoded block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl ColumnSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: Kind::Continuous,
            range: None,
            categories: Vec::new(),
        }
    }

    pub fn categorical(name: impl Into<String>, categories: Vec<String>) -> Self {
        Self {
            name: name.into(),
            kind: Kind::Categorical,
            range: None,
            categories,
        }
    }

    pub fn is_continuous(&self) -> bool {
        self.kind == Kind::Continuous
    }

    /// Width of this column once encoded.
    pub fn encoded_width(&self) -> usize {
        match self.kind {
            Kind::Continuous => 1,
            Kind::Categorical => self.categories.len() + 1,
        }
    }

    pub fn category_index(&self, value: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == value)
    }

    pub fn is_fitted(&self) -> bool {
        match self.kind {
            Kind::Continuous => self.range.is_some(),
            Kind::Categorical => !self.categories.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let mut names: Vec<&str> = columns.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Schema(format!("duplicate column name {:?}", w[0])));
        }
        for col in &columns {
            let mut cats = col.categories.clone();
            cats.sort_unstable();
            let before = cats.len();
            cats.dedup();
            if cats.len() != before {
                return Err(Error::Schema(format!("duplicate categories in column {:?}", col.name)));
            }
            if let Some((lo, hi)) = col.range {
                if !(lo <= hi) {
                    return Err(Error::Schema(format!("column {:?} has min > max", col.name)));
                }
            }
        }
        Ok(Self { columns })
    }

    /// Parses a JSON override file: an array of `{name, kind, categories?}`.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let columns: Vec<ColumnSpec> = serde_json::from_slice(bytes)?;
        Self::new(columns)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn is_fitted(&self) -> bool {
        self.columns.iter().all(ColumnSpec::is_fitted)
    }

    pub fn encoded_width(&self) -> usize {
        self.columns.iter().map(ColumnSpec::encoded_width).sum()
    }

    /// Encoded index span of every raw column.
    pub fn spans(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.columns
            .iter()
            .map(|c| {
                let span = start..start + c.encoded_width();
                start = span.end;
                span
            })
            .collect()
    }

    /// Same names and kinds, ignoring fitted state.
    pub fn same_layout(&self, other: &Schema) -> bool {
        self.columns.len() == other.columns.len()
            && self
                .columns
                .iter()
                .zip(&other.columns)
                .all(|(a, b)| a.name == b.name && a.kind == b.kind)
    }
}
