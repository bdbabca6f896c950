//! Column-oriented numeric CSV datasets.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}, column {column:?}: {value:?} is not a number")]
    NotNumeric { row: usize, column: String, value: String },
    #[error("row {row}, column {column:?}: {value} is not an integer")]
    NotInteger { row: usize, column: String, value: f64 },
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("dataset has no rows")]
    Empty,
}

/// First cell of a column that failed to parse: row and raw text.
type BadCell = (usize, String);

/// Numeric columns keyed by header name, all of the same length. A column
/// with a non-numeric cell is only an error once something asks for it, so
/// unused text columns can ride along.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    columns: BTreeMap<String, Result<Vec<f64>, BadCell>>,
    rows: usize,
}

impl Dataset {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, DatasetError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut columns: Vec<Result<Vec<f64>, BadCell>> = vec![Ok(Vec::new()); headers.len()];
        let mut rows = 0;
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            for (column, field) in columns.iter_mut().zip(record.iter()) {
                if let Ok(values) = column {
                    match field.parse::<f64>() {
                        Ok(x) => values.push(x),
                        Err(_) => *column = Err((i + 1, field.to_string())),
                    }
                }
            }
            rows += 1;
        }
        Ok(Dataset {
            columns: headers.into_iter().zip(columns).collect(),
            rows,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn from_columns(columns: impl IntoIterator<Item = (String, Vec<f64>)>) -> Self {
        let columns: BTreeMap<_, _> = columns.into_iter().map(|(k, v)| (k, Ok(v))).collect();
        let rows = columns.values().flatten().map(Vec::len).max().unwrap_or(0);
        Dataset { columns, rows }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn column(&self, name: &str) -> Result<&[f64], DatasetError> {
        match self.columns.get(name) {
            None => Err(DatasetError::MissingColumn(name.to_string())),
            Some(Ok(values)) => Ok(values),
            Some(Err((row, value))) => Err(DatasetError::NotNumeric {
                row: *row,
                column: name.to_string(),
                value: value.clone(),
            }),
        }
    }

    /// Column values that must all be integers.
    pub fn integer_column(&self, name: &str) -> Result<Vec<i64>, DatasetError> {
        self.column(name)?
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if x.fract() == 0.0 && x.is_finite() {
                    Ok(x as i64)
                } else {
                    Err(DatasetError::NotInteger {
                        row: i + 1,
                        column: name.to_string(),
                        value: x,
                    })
                }
            })
            .collect()
    }

    /// Checks that every required column exists and the dataset is non-empty.
    /// Returns the names of the columns that will be ignored.
    pub fn check_schema(&self, required: &[&str]) -> Result<Vec<String>, DatasetError> {
        for name in required {
            self.column(name)?;
        }
        if self.rows == 0 {
            return Err(DatasetError::Empty);
        }
        Ok(self
            .names()
            .filter(|n| !required.contains(n))
            .map(str::to_string)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_checks_schema() {
        let d = Dataset::from_reader("K, y,extra\n45,18,1\n45,17,2\n".as_bytes()).unwrap();
        assert_eq!(d.rows(), 2);
        assert_eq!(d.column("y").unwrap(), &[18.0, 17.0]);
        assert_eq!(d.integer_column("K").unwrap(), vec![45, 45]);
        assert_eq!(d.check_schema(&["K", "y"]).unwrap(), vec!["extra".to_string()]);
        let err = d.check_schema(&["K", "n"]).unwrap_err();
        assert!(err.to_string().contains("\"n\""), "{err}");
    }

    #[test]
    fn rejects_bad_values() {
        let d = Dataset::from_reader("y,name\n1,a\nabc,b\n".as_bytes()).unwrap();
        assert!(matches!(d.column("y"), Err(DatasetError::NotNumeric { row: 2, .. })));
        assert_eq!(d.check_schema(&[]).unwrap(), vec!["name".to_string(), "y".to_string()]);
        let d = Dataset::from_reader("K\n1.5\n".as_bytes()).unwrap();
        assert!(matches!(d.integer_column("K"), Err(DatasetError::NotInteger { .. })));
        let d = Dataset::from_reader("K\n".as_bytes()).unwrap();
        assert!(matches!(d.check_schema(&["K"]), Err(DatasetError::Empty)));
    }
}
