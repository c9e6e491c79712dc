//! Dense feature matrix with row provenance and CSV round-tripping.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FeatureError;
use super::schema::{schema_fingerprint, Mode};

/// Provenance of one row: which lesion, which patient, which frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub lesion_id: String,
    pub patient_id: String,
    pub frame_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub mode: Mode,
    pub columns: Vec<String>,
    /// Row-major values, `rows.len() * columns.len()` long.
    pub values: Vec<f64>,
    pub target: Vec<f64>,
    pub rows: Vec<RowKey>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.columns.len();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.row(i)[j]).collect()
    }

    pub fn fingerprint(&self) -> String {
        schema_fingerprint(self.mode, &self.columns)
    }

    /// Projection onto a named column subset, in the order given.
    pub fn select_columns(&self, names: &[String]) -> Result<FeatureMatrix, FeatureError> {
        let indices: Vec<usize> = names
            .iter()
            .map(|n| {
                self.column_index(n).ok_or_else(|| FeatureError::UnknownColumn(n.clone()))
            })
            .collect::<Result<_, _>>()?;
        let mut values = Vec::with_capacity(self.n_rows() * indices.len());
        for i in 0..self.n_rows() {
            let row = self.row(i);
            values.extend(indices.iter().map(|&j| row[j]));
        }
        Ok(FeatureMatrix {
            mode: self.mode,
            columns: names.to_vec(),
            values,
            target: self.target.clone(),
            rows: self.rows.clone(),
        })
    }

    pub fn subset_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let c = self.columns.len();
        let mut values = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            mode: self.mode,
            columns: self.columns.clone(),
            values,
            target: indices.iter().map(|&i| self.target[i]).collect(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Row indices belonging to each distinct lesion, in first-seen order.
    pub fn rows_by_lesion(&self) -> Vec<(String, Vec<usize>)> {
        let mut order: Vec<String> = Vec::new();
        let mut map: std::collections::HashMap<String, Vec<usize>> = std::collections::HashMap::new();
        for (i, key) in self.rows.iter().enumerate() {
            if !map.contains_key(&key.lesion_id) {
                order.push(key.lesion_id.clone());
            }
            map.entry(key.lesion_id.clone()).or_default().push(i);
        }
        order.into_iter().map(|id| { let rows = map.remove(&id).expect("present"); (id, rows) }).collect()
    }

    /// CSV layout: feature columns, then `target,lesion_id,patient_id,frame_index`.
    pub fn write_csv(&self, path: &Path) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| FeatureError::Csv(path.display().to_string(), e.to_string()))?;
        let mut header: Vec<String> = self.columns.clone();
        header.extend(
            ["target", "lesion_id", "patient_id", "frame_index"].map(String::from),
        );
        let fail = |e: csv::Error| FeatureError::Csv(path.display().to_string(), e.to_string());
        w.write_record(&header).map_err(fail)?;
        for i in 0..self.n_rows() {
            let mut record: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            record.push(self.target[i].to_string());
            record.push(self.rows[i].lesion_id.clone());
            record.push(self.rows[i].patient_id.clone());
            record.push(self.rows[i].frame_index.to_string());
            w.write_record(&record).map_err(fail)?;
        }
        w.flush().map_err(|e| FeatureError::Csv(path.display().to_string(), e.to_string()))?;
        Ok(())
    }

    pub fn read_csv(path: &Path, mode: Mode) -> Result<FeatureMatrix, FeatureError> {
        let fail = |e: String| FeatureError::Csv(path.display().to_string(), e);
        let mut r = csv::Reader::from_path(path).map_err(|e| fail(e.to_string()))?;
        let header: Vec<String> =
            r.headers().map_err(|e| fail(e.to_string()))?.iter().map(String::from).collect();
        if header.len() < 5 || header[header.len() - 4..] != ["target", "lesion_id", "patient_id", "frame_index"]
        {
            return Err(fail("trailing columns must be target,lesion_id,patient_id,frame_index".into()));
        }
        let n_cols = header.len() - 4;
        let columns = header[..n_cols].to_vec();
        let mut values = Vec::new();
        let mut target = Vec::new();
        let mut rows = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record.map_err(|e| fail(e.to_string()))?;
            if record.len() != header.len() {
                return Err(fail(format!("row {line}: {} fields, expected {}", record.len(), header.len())));
            }
            for v in record.iter().take(n_cols) {
                values.push(v.parse::<f64>().map_err(|_| fail(format!("row {line}: bad value {v}")))?);
            }
            target.push(
                record[n_cols]
                    .parse::<f64>()
                    .map_err(|_| fail(format!("row {line}: bad target {}", &record[n_cols])))?,
            );
            rows.push(RowKey {
                lesion_id: record[n_cols + 1].to_string(),
                patient_id: record[n_cols + 2].to_string(),
                frame_index: record[n_cols + 3]
                    .parse()
                    .map_err(|_| fail(format!("row {line}: bad frame_index")))?,
            });
        }
        Ok(FeatureMatrix { mode, columns, values, target, rows })
    }
}
