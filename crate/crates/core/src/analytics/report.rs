//! Evaluation report rows and seeded k-fold assignment.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub task: String,
    pub representation: String,
    pub classifier: String,
    pub fold: usize,
    pub metric: String,
    pub value: f64,
}

/// CSV with header `task,representation,classifier,fold,metric,value`.
pub fn write_eval_csv<W: Write>(mut out: W, rows: &[EvalRow]) -> Result<()> {
    writeln!(out, "task,representation,classifier,fold,metric,value")?;
    for r in rows {
        for field in [&r.task, &r.representation, &r.classifier, &r.metric] {
            if field.contains(',') || field.contains('\n') {
                return Err(Error::data(format!("csv field needs quoting: {field:?}")));
            }
        }
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.task, r.representation, r.classifier, r.fold, r.metric, r.value
        )?;
    }
    Ok(())
}

/// Deterministic k-fold assignment: shuffled indices cut into k nearly equal
/// chunks.
pub fn kfold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::config("kfold: need at least 2 folds"));
    }
    if n < folds {
        return Err(Error::data(format!("kfold: {n} examples for {folds} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut out = vec![Vec::new(); folds];
    for (i, idx) in order.into_iter().enumerate() {
        out[i % folds].push(idx);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout_is_fixed() {
        let rows = vec![EvalRow {
            task: "color".to_string(),
            representation: "mrnet".to_string(),
            classifier: "logreg".to_string(),
            fold: 2,
            metric: "auc".to_string(),
            value: 0.875,
        }];
        let mut buf = Vec::new();
        write_eval_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "task,representation,classifier,fold,metric,value\ncolor,mrnet,logreg,2,auc,0.875\n"
        );
    }

    #[test]
    fn folds_partition_the_index_range() {
        let folds = kfold_indices(23, 5, 9).unwrap();
        assert_eq!(folds.len(), 5);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        for f in &folds {
            assert!(f.len() == 4 || f.len() == 5);
        }
    }

    #[test]
    fn folds_are_seeded() {
        assert_eq!(kfold_indices(30, 5, 1).unwrap(), kfold_indices(30, 5, 1).unwrap());
        assert_ne!(kfold_indices(30, 5, 1).unwrap(), kfold_indices(30, 5, 2).unwrap());
    }

    #[test]
    fn bad_fold_parameters_rejected() {
        assert!(kfold_indices(10, 1, 1).is_err());
        assert!(kfold_indices(3, 5, 1).is_err());
    }
}
