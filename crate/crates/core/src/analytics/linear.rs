//! Logistic regression by full-batch gradient descent and the rank-based
//! AUC statistic.

use crate::error::{Error, Result};
use crate::numerics::sigmoid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    pub l2: f64,
    pub lr: f64,
    pub epochs: usize,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            l2: 1e-3,
            lr: 0.5,
            epochs: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogRegModel {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LogRegModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.b + self.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.decision(x) > 0.0
    }
}

/// Mean cross-entropy plus l2/2 * ||w||^2 (bias unregularized).
pub fn logreg_loss(model: &LogRegModel, x: &[Vec<f64>], y: &[bool], l2: f64) -> f64 {
    let mut total = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let z = model.decision(xi);
        // log(1 + e^{-z}) computed stably
        let softplus = if z > 0.0 {
            (-z).exp().ln_1p()
        } else {
            -z + z.exp().ln_1p()
        };
        total += if yi { softplus } else { softplus + z };
    }
    let reg: f64 = model.w.iter().map(|w| w * w).sum::<f64>() * l2 / 2.0;
    total / x.len() as f64 + reg
}

pub fn train_logreg(x: &[Vec<f64>], y: &[bool], cfg: &LogRegConfig) -> Result<LogRegModel> {
    if x.len() != y.len() {
        return Err(Error::shape(format!(
            "logreg: {} rows vs {} labels",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::data("logreg: need at least two examples"));
    }
    let pos = y.iter().filter(|&&v| v).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::data("logreg: both classes must be present"));
    }
    let dim = x[0].len();
    for (i, row) in x.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::shape(format!(
                "logreg: row {i} has {} entries, expected {dim}",
                row.len()
            )));
        }
    }
    let n = x.len() as f64;
    let mut model = LogRegModel {
        w: vec![0.0; dim],
        b: 0.0,
    };
    for _ in 0..cfg.epochs {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for (xi, &yi) in x.iter().zip(y) {
            let p = model.score(xi);
            let err = (p - if yi { 1.0 } else { 0.0 }) / n;
            for (g, v) in gw.iter_mut().zip(xi) {
                *g += err * v;
            }
            gb += err;
        }
        for (g, w) in gw.iter_mut().zip(&model.w) {
            *g += cfg.l2 * w;
        }
        for (w, g) in model.w.iter_mut().zip(&gw) {
            *w -= cfg.lr * g;
        }
        model.b -= cfg.lr * gb;
        if !model.b.is_finite() {
            return Err(Error::numeric("logreg: diverged"));
        }
    }
    Ok(model)
}

/// Mann-Whitney AUC: ties contribute 0.5 via average ranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "auc: {} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&v| v).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::data("auc: both classes must be present"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::numeric("auc: non-finite score"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based average rank over the tie block
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}
