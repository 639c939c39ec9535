//! CSV ingestion.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ssem::Dataset;

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub feature_names: Vec<String>,
    /// Distinct label values in first-appearance order; class `c` is
    /// `class_names[c]`.
    pub class_names: Vec<String>,
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

/// Reads a headed CSV. Every column other than the label column and the
/// ignored ones is a numeric feature. Empty or `NA` label cells mark
/// unlabeled rows; row numbers in errors are 1-based data rows.
pub fn load_dataset(path: &Path, label_column: Option<&str>, ignore_columns: &[String]) -> Result<LoadedData> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    read_dataset(&mut reader, label_column, ignore_columns)
}

pub fn read_dataset<R: std::io::Read>(
    reader: &mut csv::Reader<R>,
    label_column: Option<&str>,
    ignore_columns: &[String],
) -> Result<LoadedData> {
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::InvalidInput(format!("label column `{name}` not found")))?,
        ),
        None => None,
    };
    for name in ignore_columns {
        if !headers.contains(name) {
            return Err(Error::InvalidInput(format!("ignored column `{name}` not found")));
        }
    }
    let features: Vec<usize> = (0..headers.len())
        .filter(|&j| Some(j) != label_idx && !ignore_columns.contains(&headers[j]))
        .collect();
    if features.is_empty() {
        return Err(Error::InvalidInput("no feature columns".into()));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        for &j in &features {
            let cell = record.get(j).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: headers[j].clone(),
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: headers[j].clone(),
                    message: format!("`{cell}` is not finite"),
                });
            }
            values.push(v);
        }
        labels.push(label_idx.and_then(|j| {
            let cell = record.get(j).unwrap_or("").trim();
            if is_missing(cell) {
                return None;
            }
            Some(match class_names.iter().position(|c| c == cell) {
                Some(c) => c,
                None => {
                    class_names.push(cell.to_string());
                    class_names.len() - 1
                }
            })
        }));
    }
    let x = DMatrix::from_row_slice(labels.len(), features.len(), &values);
    let classes = class_names.len();
    Ok(LoadedData {
        dataset: Dataset::with_class_map(x, labels, (0..classes).collect())?,
        feature_names: features.iter().map(|&j| headers[j].clone()).collect(),
        class_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, label: Option<&str>) -> Result<LoadedData> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        read_dataset(&mut r, label, &[])
    }

    #[test]
    fn no_label_column() {
        let d = read("a,b\n1,2\n3,4\n5,6\n7,8\n", None).unwrap();
        assert_eq!(d.dataset.n_unlabeled(), 4);
        assert_eq!(d.dataset.n_classes(), 0);
        assert_eq!(d.feature_names, ["a", "b"]);
        assert_eq!(d.dataset.x()[(2, 1)], 6.0);
    }

    #[test]
    fn labels_in_first_appearance_order() {
        let d = read("x,lab\n1,b\n2,b\n3,\n4,a\n5,NA\n", Some("lab")).unwrap();
        assert_eq!(d.class_names, ["b", "a"]);
        assert_eq!(d.dataset.labels(), &[Some(0), Some(0), None, Some(1), None]);
        assert_eq!(d.dataset.n_unlabeled(), 2);
        assert_eq!(d.dataset.dim(), 1);
    }

    #[test]
    fn bad_cell_reports_position() {
        match read("x,y\n1,2\n3,oops\n", None) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "y");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(read("x\n1\n", Some("missing")).is_err());
    }

    #[test]
    fn ignored_columns_are_dropped() {
        let mut r = csv::Reader::from_reader("id,x,y\n7,1,2\n8,3,4\n".as_bytes());
        let d = read_dataset(&mut r, None, &["id".to_string()]).unwrap();
        assert_eq!(d.feature_names, ["x", "y"]);
    }
}
