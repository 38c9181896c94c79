use crate::catalog::ProductRecord;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Sparse vector with a fixed nominal dimension; entries sorted by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn zero(dim: usize) -> Self {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }
}

/// Token subset with IDF weights; the basis for both the decoding target and
/// the sparse baseline representation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TfidfModel {
    /// retained tokens in index order
    pub tokens: Vec<String>,
    /// idf weight per retained token
    pub idf: Vec<f64>,
    /// nominal output dimension (>= tokens.len())
    pub dim: usize,
    index: BTreeMap<String, usize>,
}

impl TfidfModel {
    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }
}

/// Retain the top-`dim` tokens by document frequency among those with
/// df >= min_df; idf(t) = ln((1+N)/(1+df(t))) + 1.
pub fn build_tfidf(records: &[ProductRecord], dim: usize, min_df: usize) -> Result<TfidfModel> {
    if dim < 1 {
        return Err(Error::config("build_tfidf: dim must be >= 1"));
    }
    let n_docs = records.len();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for rec in records {
        let mut seen: Vec<&str> = Vec::new();
        for tok in &rec.tokens {
            if !seen.contains(&tok.as_str()) {
                seen.push(tok);
                *df.entry(tok).or_insert(0) += 1;
            }
        }
    }
    let mut kept: Vec<(&str, usize)> = df.into_iter().filter(|&(_, d)| d >= min_df).collect();
    if kept.is_empty() {
        return Err(Error::data(format!(
            "build_tfidf: no token reaches min_df {min_df}"
        )));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    kept.truncate(dim);

    let mut tokens = Vec::with_capacity(kept.len());
    let mut idf = Vec::with_capacity(kept.len());
    let mut index = BTreeMap::new();
    for (i, (tok, d)) in kept.into_iter().enumerate() {
        tokens.push(tok.to_string());
        idf.push(((1.0 + n_docs as f64) / (1.0 + d as f64)).ln() + 1.0);
        index.insert(tok.to_string(), i);
    }
    Ok(TfidfModel {
        tokens,
        idf,
        dim,
        index,
    })
}

/// TF-IDF vector of a token list: raw term counts times idf, L2-normalized
/// when nonzero. All-OOV input yields the zero vector.
pub fn tfidf_vector(model: &TfidfModel, tokens: &[String]) -> SparseVector {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for tok in tokens {
        if let Some(i) = model.index_of(tok) {
            *counts.entry(i).or_insert(0.0) += 1.0;
        }
    }
    let mut entries: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(i, tf)| (i, tf * model.idf[i]))
        .collect();
    let norm: f64 = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, v) in entries.iter_mut() {
            *v /= norm;
        }
    }
    SparseVector {
        dim: model.dim,
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::tokenize;
    use std::collections::BTreeMap as Map;

    fn rec(id: &str, title: &str) -> ProductRecord {
        ProductRecord {
            id: id.to_string(),
            group: 0,
            title: title.to_string(),
            tokens: tokenize(title),
            labels: Map::new(),
        }
    }

    fn three_docs() -> Vec<ProductRecord> {
        vec![rec("1", "a b"), rec("2", "a c"), rec("3", "a")]
    }

    #[test]
    fn idf_hand_computation() {
        let model = build_tfidf(&three_docs(), 5, 1).unwrap();
        // df(a)=3 -> idf = ln(4/4)+1 = 1.0
        let ia = model.index_of("a").unwrap();
        assert!((model.idf[ia] - 1.0).abs() < 1e-12);
        let ib = model.index_of("b").unwrap();
        let expected_b = (4.0f64 / 2.0).ln() + 1.0;
        assert!((model.idf[ib] - expected_b).abs() < 1e-12);
    }

    #[test]
    fn top_one_by_df() {
        let model = build_tfidf(&three_docs(), 1, 1).unwrap();
        assert_eq!(model.tokens, vec!["a"]);
    }

    #[test]
    fn no_survivor_is_an_error() {
        assert!(build_tfidf(&three_docs(), 5, 10).is_err());
    }

    #[test]
    fn all_oov_gives_zero_vector() {
        let model = build_tfidf(&three_docs(), 5, 1).unwrap();
        let v = tfidf_vector(&model, &["zzz".to_string()]);
        assert!(v.entries.is_empty());
    }

    #[test]
    fn single_token_is_unit_one_hot() {
        let model = build_tfidf(&three_docs(), 5, 1).unwrap();
        let v = tfidf_vector(&model, &["b".to_string()]);
        assert_eq!(v.entries.len(), 1);
        assert!((v.l2_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_counts_match_hand_oracle() {
        let model = build_tfidf(&three_docs(), 5, 1).unwrap();
        let toks: Vec<String> = ["a", "a", "b"].iter().map(|s| s.to_string()).collect();
        let v = tfidf_vector(&model, &toks);
        // hand oracle: raw (2*idf_a, 1*idf_b), then normalize
        let ia = model.index_of("a").unwrap();
        let ib = model.index_of("b").unwrap();
        let ra = 2.0 * model.idf[ia];
        let rb = 1.0 * model.idf[ib];
        let norm = (ra * ra + rb * rb).sqrt();
        let dense = v.to_dense();
        assert!((dense[ia] - ra / norm).abs() < 1e-12);
        assert!((dense[ib] - rb / norm).abs() < 1e-12);
        assert!((v.l2_norm() - 1.0).abs() < 1e-9);
    }
}
