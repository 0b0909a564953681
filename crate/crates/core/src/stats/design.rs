//! Observation tables and model design specifications.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::StatsError;

pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Column-oriented observation table with equal-length columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Frame {
    columns: BTreeMap<String, Column>,
    n_rows: Option<usize>,
}

impl Frame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows.unwrap_or(0)
    }

    pub fn insert(&mut self, name: impl Into<String>, column: Column) -> Result<(), StatsError> {
        let name = name.into();
        match self.n_rows {
            Some(n) if n != column.len() => {
                return Err(StatsError::ColumnLength { column: name, expected: n, found: column.len() })
            }
            _ => self.n_rows = Some(column.len()),
        }
        self.columns.insert(name, column);
        Ok(())
    }

    pub fn with_numeric(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self, StatsError> {
        self.insert(name, Column::Numeric(values))?;
        Ok(self)
    }

    pub fn with_categorical<S: Into<String>>(
        mut self,
        name: impl Into<String>,
        values: impl IntoIterator<Item = S>,
    ) -> Result<Self, StatsError> {
        self.insert(name, Column::Categorical(values.into_iter().map(Into::into).collect()))?;
        Ok(self)
    }

    pub fn column(&self, name: &str) -> Result<&Column, StatsError> {
        self.columns.get(name).ok_or_else(|| StatsError::MissingColumn(name.to_string()))
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64], StatsError> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            Column::Categorical(_) => Err(StatsError::ColumnType { column: name.to_string(), expected: "numeric" }),
        }
    }

    pub fn categorical(&self, name: &str) -> Result<&[String], StatsError> {
        match self.column(name)? {
            Column::Categorical(v) => Ok(v),
            Column::Numeric(_) => Err(StatsError::ColumnType { column: name.to_string(), expected: "categorical" }),
        }
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    Continuous {
        name: String,
        center: bool,
    },
    /// Reference-coded indicators; the reference defaults to the first level
    /// in lexicographic order.
    Categorical {
        name: String,
        reference: Option<String>,
    },
}

impl Term {
    pub fn continuous(name: impl Into<String>) -> Self {
        Term::Continuous { name: name.into(), center: true }
    }

    pub fn raw(name: impl Into<String>) -> Self {
        Term::Continuous { name: name.into(), center: false }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        Term::Categorical { name: name.into(), reference: None }
    }

    pub fn categorical_ref(name: impl Into<String>, reference: impl Into<String>) -> Self {
        Term::Categorical { name: name.into(), reference: Some(reference.into()) }
    }

    pub fn name(&self) -> &str {
        match self {
            Term::Continuous { name, .. } | Term::Categorical { name, .. } => name,
        }
    }
}

/// Response, terms and the table they are evaluated on. Cloning shares the table.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub response: String,
    pub terms: Vec<Term>,
    pub frame: Arc<Frame>,
}

impl DesignSpec {
    pub fn new(response: impl Into<String>, terms: Vec<Term>, frame: impl Into<Arc<Frame>>) -> Self {
        Self { response: response.into(), terms, frame: frame.into() }
    }

    pub fn term_names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.name().to_string()).collect()
    }

    pub fn with_terms(&self, terms: Vec<Term>) -> Self {
        Self { response: self.response.clone(), terms, frame: Arc::clone(&self.frame) }
    }

    pub fn n(&self) -> usize {
        self.frame.n_rows()
    }

    pub fn prepare(&self) -> Result<DesignMatrix, StatsError> {
        DesignMatrix::build(self)
    }
}

/// Numeric design: intercept first, then term columns in term order.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub column_names: Vec<String>,
    /// Index into the spec's terms for each column; `None` for the intercept.
    pub column_terms: Vec<Option<usize>>,
}

impl DesignMatrix {
    fn build(spec: &DesignSpec) -> Result<Self, StatsError> {
        let frame = &spec.frame;
        let n = frame.n_rows();
        let y = frame.numeric(&spec.response)?;
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite { column: spec.response.clone(), row: i });
        }

        let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
        let mut names = vec![INTERCEPT.to_string()];
        let mut terms = vec![None];
        for (ti, term) in spec.terms.iter().enumerate() {
            match term {
                Term::Continuous { name, center } => {
                    let v = frame.numeric(name)?;
                    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                        return Err(StatsError::NonFinite { column: name.clone(), row: i });
                    }
                    let shift = if *center && n > 0 { v.iter().sum::<f64>() / n as f64 } else { 0.0 };
                    cols.push(v.iter().map(|x| x - shift).collect());
                    names.push(name.clone());
                    terms.push(Some(ti));
                }
                Term::Categorical { name, reference } => {
                    let v = frame.categorical(name)?;
                    let levels: BTreeSet<&str> = v.iter().map(String::as_str).collect();
                    let reference = match reference {
                        Some(r) if levels.contains(r.as_str()) || levels.is_empty() => r.as_str(),
                        Some(r) => return Err(StatsError::UnknownReference { column: name.clone(), level: r.clone() }),
                        None => levels.first().copied().unwrap_or(""),
                    };
                    for level in levels.iter().filter(|l| **l != reference) {
                        cols.push(v.iter().map(|x| f64::from(u8::from(x == level))).collect());
                        names.push(format!("{name}:{level}"));
                        terms.push(Some(ti));
                    }
                }
            }
        }
        let p = cols.len();
        let x = DMatrix::from_fn(n, p, |i, j| cols[j][i]);
        Ok(Self { x, y: DVector::from_column_slice(y), column_names: names, column_terms: terms })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}
