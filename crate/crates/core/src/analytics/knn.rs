//! Exact Euclidean nearest-neighbor index. No approximation: every query is
//! a full scan, with ties broken by id.

use crate::error::{Error, Result};
use crate::io::EmbeddingFile;

pub struct KnnIndex {
    pub dim: usize,
    ids: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl KnnIndex {
    pub fn new(entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::data("knn: empty index"));
        }
        let dim = entries[0].1.len();
        let mut ids = Vec::with_capacity(entries.len());
        let mut rows = Vec::with_capacity(entries.len());
        for (id, row) in entries {
            if row.len() != dim {
                return Err(Error::shape(format!(
                    "knn: vector for {id:?} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            ids.push(id);
            rows.push(row);
        }
        Ok(KnnIndex { dim, ids, rows })
    }

    pub fn from_embedding_file(file: &EmbeddingFile) -> Result<Self> {
        Self::new(
            file.entries
                .iter()
                .map(|(id, v)| (id.clone(), v.iter().map(|&x| x as f64).collect()))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// k nearest ids by Euclidean distance, ascending; equal distances are
    /// ordered by id.
    pub fn knn(&self, query: &[f64], k: usize) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(Error::config("knn: k must be positive"));
        }
        if k > self.ids.len() {
            return Err(Error::config(format!(
                "knn: k {} exceeds index size {}",
                k,
                self.ids.len()
            )));
        }
        if query.len() != self.dim {
            return Err(Error::shape(format!(
                "knn: query has {} entries, expected {}",
                query.len(),
                self.dim
            )));
        }
        let mut scored: Vec<(f64, &str)> = self
            .rows
            .iter()
            .zip(&self.ids)
            .map(|(row, id)| {
                let d: f64 = row
                    .iter()
                    .zip(query)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d.sqrt(), id.as_str())
            })
            .collect();
        if scored.iter().any(|(d, _)| !d.is_finite()) {
            return Err(Error::numeric("knn: non-finite distance"));
        }
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(b.1)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(d, id)| (id.to_string(), d))
            .collect())
    }
}
