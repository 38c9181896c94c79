//! Unseen-population split: hold out test products whose titles overlap too
//! much with any training title.

use crate::catalog::ProductRecord;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// Overlap of a test title with a training title: shared distinct tokens
/// divided by the test title's distinct-token count.
pub fn title_overlap(test_tokens: &BTreeSet<&str>, train_tokens: &BTreeSet<&str>) -> f64 {
    if test_tokens.is_empty() {
        return 0.0;
    }
    let shared = test_tokens.intersection(train_tokens).count();
    shared as f64 / test_tokens.len() as f64
}

/// Shuffle, split by `train_fraction`, then drop every test record whose
/// maximum title overlap with any training record exceeds `t_h`.
pub fn unseen_split(
    records: &[ProductRecord],
    train_fraction: f64,
    t_h: f64,
    seed: u64,
) -> Result<(Vec<ProductRecord>, Vec<ProductRecord>)> {
    if !(0.0 < t_h && t_h <= 1.0) {
        return Err(Error::config(format!("unseen_split: t_h {t_h} outside (0,1]")));
    }
    if !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(Error::config(format!(
            "unseen_split: train_fraction {train_fraction} outside (0,1)"
        )));
    }
    if records.len() < 2 {
        return Err(Error::data("unseen_split: need at least two records"));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = ((records.len() as f64 * train_fraction).round() as usize)
        .clamp(1, records.len() - 1);
    let train: Vec<ProductRecord> = order[..n_train].iter().map(|&i| records[i].clone()).collect();
    let candidates: Vec<&ProductRecord> = order[n_train..].iter().map(|&i| &records[i]).collect();

    let train_sets: Vec<BTreeSet<&str>> = train
        .iter()
        .map(|r| r.tokens.iter().map(String::as_str).collect())
        .collect();
    let mut test = Vec::new();
    for rec in candidates {
        let toks: BTreeSet<&str> = rec.tokens.iter().map(String::as_str).collect();
        let max_overlap = train_sets
            .iter()
            .map(|ts| title_overlap(&toks, ts))
            .fold(0.0f64, f64::max);
        if max_overlap <= t_h {
            test.push(rec.clone());
        }
    }
    if test.is_empty() {
        return Err(Error::data(format!(
            "unseen_split: no test records survive t_h = {t_h}"
        )));
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::tokenize;
    use std::collections::BTreeMap;

    fn rec(id: &str, title: &str) -> ProductRecord {
        ProductRecord {
            id: id.to_string(),
            group: 0,
            title: title.to_string(),
            tokens: tokenize(title),
            labels: BTreeMap::new(),
        }
    }

    #[test]
    fn identical_titles_are_filtered() {
        let records: Vec<ProductRecord> = (0..20)
            .map(|i| {
                if i % 2 == 0 {
                    rec(&format!("p{i}"), "red plastic lamp")
                } else {
                    rec(&format!("p{i}"), &format!("unique{} token{} word{}", i, i, i))
                }
            })
            .collect();
        let (train, test) = unseen_split(&records, 0.5, 0.2, 7).unwrap();
        let train_has_lamp = train.iter().any(|r| r.title == "red plastic lamp");
        assert!(train_has_lamp);
        assert!(test.iter().all(|r| r.title != "red plastic lamp"));
    }

    #[test]
    fn disjoint_titles_are_retained() {
        let records: Vec<ProductRecord> = (0..10)
            .map(|i| rec(&format!("p{i}"), &format!("alpha{i} beta{i} gamma{i}")))
            .collect();
        let (train, test) = unseen_split(&records, 0.5, 0.2, 1).unwrap();
        assert_eq!(train.len() + test.len(), 10);
        assert_eq!(test.len(), 5);
    }

    #[test]
    fn retained_records_verified_by_independent_pass() {
        let vocab = ["red", "blue", "lamp", "chair", "steel", "oak", "mini", "grand"];
        let records: Vec<ProductRecord> = (0..60)
            .map(|i| {
                let a = vocab[i % vocab.len()];
                let b = vocab[(i * 3 + 1) % vocab.len()];
                rec(&format!("p{i:02}"), &format!("{a} {b} item{}", i % 7))
            })
            .collect();
        let t_h = 0.7;
        let (train, test) = unseen_split(&records, 0.6, t_h, 3).unwrap();
        for t in &test {
            let t_set: BTreeSet<&str> = t.tokens.iter().map(String::as_str).collect();
            for tr in &train {
                let tr_set: BTreeSet<&str> = tr.tokens.iter().map(String::as_str).collect();
                let shared = t_set.intersection(&tr_set).count() as f64;
                assert!(
                    shared / t_set.len() as f64 <= t_h,
                    "record {} overlaps {} too much",
                    t.id,
                    tr.id
                );
            }
        }
    }

    #[test]
    fn empty_survivors_reported() {
        let records: Vec<ProductRecord> =
            (0..10).map(|i| rec(&format!("p{i}"), "same title here")).collect();
        assert!(unseen_split(&records, 0.5, 0.2, 1).is_err());
    }

    #[test]
    fn parameter_bounds_checked() {
        let records = vec![rec("a", "x y"), rec("b", "z w")];
        assert!(unseen_split(&records, 0.5, 0.0, 1).is_err());
        assert!(unseen_split(&records, 0.5, 1.5, 1).is_err());
        assert!(unseen_split(&records, 0.0, 0.2, 1).is_err());
        assert!(unseen_split(&records, 1.0, 0.2, 1).is_err());
    }

    #[test]
    fn overlap_is_normalized_by_test_title() {
        let test: BTreeSet<&str> = ["a", "b"].into_iter().collect();
        let train: BTreeSet<&str> = ["a", "c", "d", "e", "f"].into_iter().collect();
        assert_eq!(title_overlap(&test, &train), 0.5);
        assert_eq!(title_overlap(&BTreeSet::new(), &train), 0.0);
    }
}
