//! Compact random forest: bootstrap per tree, greedy Gini splits over a
//! random feature subset, importance by normalized total impurity decrease.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    /// features considered per split; None means sqrt(d)
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 50,
            max_depth: 8,
            features_per_split: None,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        dist: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf_dist(&self, x: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { dist } => return dist,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForestModel {
    pub n_classes: usize,
    pub dim: usize,
    pub importance: Vec<f64>,
    trees: Vec<Tree>,
}

impl ForestModel {
    /// Mean leaf class distribution across trees.
    pub fn predict_dist(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::shape(format!(
                "forest: input has {} entries, expected {}",
                x.len(),
                self.dim
            )));
        }
        let mut out = vec![0.0; self.n_classes];
        for tree in &self.trees {
            for (o, d) in out.iter_mut().zip(tree.leaf_dist(x)) {
                *o += d / self.trees.len() as f64;
            }
        }
        Ok(out)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let dist = self.predict_dist(x)?;
        Ok(dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then_with(|| b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap())
    }

    /// Probability of the positive class for binary problems.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_dist(x)?.get(1).copied().unwrap_or(0.0))
    }
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total == 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>()
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    max_depth: usize,
    features_per_split: usize,
    root_size: f64,
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

impl<'a> TreeBuilder<'a> {
    fn build(&mut self, indices: &[usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let mut counts = vec![0.0; self.n_classes];
        for &i in indices {
            counts[self.y[i]] += 1.0;
        }
        let n = indices.len() as f64;
        let node_gini = gini(&counts, n);
        let make_leaf = |counts: &[f64]| Node::Leaf {
            dist: counts.iter().map(|c| c / n).collect(),
        };
        if depth >= self.max_depth || node_gini == 0.0 || indices.len() < 2 {
            self.nodes.push(make_leaf(&counts));
            return self.nodes.len() - 1;
        }

        let dim = self.x[0].len();
        let mut candidates: Vec<usize> = (0..dim).collect();
        for i in 0..self.features_per_split.min(dim) {
            let j = rng.gen_range(i..dim);
            candidates.swap(i, j);
        }
        let candidates = &candidates[..self.features_per_split.min(dim)];

        let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
        for &f in candidates {
            let mut order: Vec<usize> = indices.to_vec();
            order.sort_by(|&a, &b| self.x[a][f].partial_cmp(&self.x[b][f]).unwrap());
            let mut left = vec![0.0; self.n_classes];
            let mut right = counts.clone();
            for w in 0..order.len() - 1 {
                let i = order[w];
                left[self.y[i]] += 1.0;
                right[self.y[i]] -= 1.0;
                let v = self.x[i][f];
                let next = self.x[order[w + 1]][f];
                if v == next {
                    continue;
                }
                let nl = (w + 1) as f64;
                let nr = n - nl;
                let gain = node_gini - (nl / n) * gini(&left, nl) - (nr / n) * gini(&right, nr);
                if gain > 1e-12 && best.map_or(true, |(bg, _, _)| gain > bg) {
                    best = Some((gain, f, (v + next) / 2.0));
                }
            }
        }

        let Some((gain, feature, threshold)) = best else {
            self.nodes.push(make_leaf(&counts));
            return self.nodes.len() - 1;
        };
        self.importance[feature] += gain * n / self.root_size;
        let (li, ri): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.x[i][feature] <= threshold);
        // placeholder is patched once both subtrees exist
        self.nodes.push(Node::Leaf { dist: vec![] });
        let at = self.nodes.len() - 1;
        let left = self.build(&li, depth + 1, rng);
        let right = self.build(&ri, depth + 1, rng);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

pub fn train_rf(x: &[Vec<f64>], y: &[usize], cfg: &ForestConfig) -> Result<ForestModel> {
    if x.is_empty() {
        return Err(Error::data("forest: empty training set"));
    }
    if x.len() != y.len() {
        return Err(Error::shape(format!(
            "forest: {} rows vs {} labels",
            x.len(),
            y.len()
        )));
    }
    let dim = x[0].len();
    for (i, row) in x.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::shape(format!(
                "forest: row {i} has {} entries, expected {dim}",
                row.len()
            )));
        }
    }
    if cfg.trees == 0 {
        return Err(Error::config("forest: need at least one tree"));
    }
    let n_classes = y.iter().max().unwrap() + 1;
    let features_per_split = cfg
        .features_per_split
        .unwrap_or_else(|| (dim as f64).sqrt().round().max(1.0) as usize)
        .min(dim)
        .max(1);

    let mut trees = Vec::with_capacity(cfg.trees);
    let mut importance = vec![0.0; dim];
    for t in 0..cfg.trees {
        // per-tree seed derived from the master seed, so tree order is fixed
        let mut rng =
            ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(t as u64 + 1)));
        let sample: Vec<usize> = (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect();
        let mut builder = TreeBuilder {
            x,
            y,
            n_classes,
            max_depth: cfg.max_depth,
            features_per_split,
            root_size: sample.len() as f64,
            nodes: Vec::new(),
            importance: vec![0.0; dim],
        };
        builder.build(&sample, 0, &mut rng);
        for (acc, v) in importance.iter_mut().zip(&builder.importance) {
            *acc += v;
        }
        trees.push(Tree {
            nodes: builder.nodes,
        });
    }
    let total: f64 = importance.iter().sum();
    if total > 0.0 {
        for v in &mut importance {
            *v /= total;
        }
    }
    Ok(ForestModel {
        n_classes,
        dim,
        importance,
        trees,
    })
}

/// Top quartile cutoff: a quarter of the features, at least one.
pub fn top_quartile(n_features: usize) -> usize {
    (n_features / 4).max(1)
}

/// Train `runs` forests on random subsets of the data and return the
/// features ranked in the top quartile by importance in every run.
pub fn importance_overlap(
    x: &[Vec<f64>],
    y: &[usize],
    runs: usize,
    cfg: &ForestConfig,
) -> Result<Vec<usize>> {
    if runs < 2 {
        return Err(Error::config("importance_overlap: need at least 2 runs"));
    }
    if x.is_empty() {
        return Err(Error::data("importance_overlap: empty data"));
    }
    let dim = x[0].len();
    let keep = top_quartile(dim);
    let subset = (x.len() / 2).max(2);
    let mut stable: Option<BTreeSet<usize>> = None;
    for run in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(run as u64 * 7919));
        let mut picked_x = Vec::with_capacity(subset);
        let mut picked_y = Vec::with_capacity(subset);
        for _ in 0..subset {
            let i = rng.gen_range(0..x.len());
            picked_x.push(x[i].clone());
            picked_y.push(y[i]);
        }
        let run_cfg = ForestConfig {
            seed: cfg.seed.wrapping_add(run as u64 + 1),
            ..cfg.clone()
        };
        let model = train_rf(&picked_x, &picked_y, &run_cfg)?;
        let mut ranked: Vec<usize> = (0..dim).collect();
        ranked.sort_by(|&a, &b| {
            model.importance[b]
                .partial_cmp(&model.importance[a])
                .unwrap()
                .then_with(|| a.cmp(&b))
        });
        let top: BTreeSet<usize> = ranked.into_iter().take(keep).collect();
        stable = Some(match stable {
            None => top,
            Some(prev) => prev.intersection(&top).copied().collect(),
        });
    }
    Ok(stable.unwrap().into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signal_data(n: usize, noise_features: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let mut row: Vec<f64> = (0..noise_features + 1)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            row[0] = rng.gen_range(-1.0..1.0);
            y.push((row[0] > 0.0) as usize);
            x.push(row);
        }
        (x, y)
    }

    #[test]
    fn signal_feature_gets_maximum_importance() {
        for seed in 0..5 {
            let (x, y) = signal_data(300, 15, seed);
            let cfg = ForestConfig {
                trees: 25,
                max_depth: 4,
                seed,
                ..Default::default()
            };
            let model = train_rf(&x, &y, &cfg).unwrap();
            let best = model
                .importance
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(best, 0, "seed {seed}: importances {:?}", model.importance);
        }
    }

    #[test]
    fn importance_sums_to_one_when_splits_exist() {
        let (x, y) = signal_data(200, 7, 9);
        let model = train_rf(&x, &y, &ForestConfig::default()).unwrap();
        let total: f64 = model.importance.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(model.importance.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn constant_labels_give_uniform_prediction_and_zero_importance() {
        let (x, _) = signal_data(50, 3, 10);
        let y = vec![0usize; x.len()];
        let model = train_rf(&x, &y, &ForestConfig::default()).unwrap();
        assert!(model.importance.iter().all(|&v| v == 0.0));
        for row in &x {
            assert_eq!(model.predict(row).unwrap(), 0);
            let dist = model.predict_dist(row).unwrap();
            assert_eq!(dist.len(), 1);
            assert!((dist[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn depth_one_tree_matches_hand_rule() {
        // single clean threshold at 0 on feature 0
        let x: Vec<Vec<f64>> = (-5..5).map(|v| vec![v as f64 + 0.5]).collect();
        let y: Vec<usize> = x.iter().map(|v| (v[0] > 0.0) as usize).collect();
        let cfg = ForestConfig {
            trees: 1,
            max_depth: 1,
            features_per_split: Some(1),
            seed: 3,
        };
        let model = train_rf(&x, &y, &cfg).unwrap();
        for v in [-3.0, -0.2, 0.2, 4.0] {
            assert_eq!(model.predict(&[v]).unwrap(), (v > 0.0) as usize, "at {v}");
        }
    }

    #[test]
    fn empty_data_rejected() {
        assert!(train_rf(&[], &[], &ForestConfig::default()).is_err());
    }

    #[test]
    fn stable_set_contains_the_signal_feature() {
        let (x, y) = signal_data(400, 15, 11);
        let cfg = ForestConfig {
            trees: 20,
            max_depth: 4,
            seed: 11,
            ..Default::default()
        };
        let stable = importance_overlap(&x, &y, 5, &cfg).unwrap();
        assert!(stable.contains(&0), "stable set {stable:?}");
    }

    #[test]
    fn pure_noise_stable_set_is_tiny() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let dim = 40;
        let x: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<usize> = (0..300).map(|_| rng.gen_range(0..2)).collect();
        let cfg = ForestConfig {
            trees: 15,
            max_depth: 3,
            seed: 13,
            ..Default::default()
        };
        let stable = importance_overlap(&x, &y, 5, &cfg).unwrap();
        // expectation is about dim * (1/4)^5; anything under 5% of features
        assert!(
            stable.len() < dim / 20 + 1,
            "stable set too large: {stable:?}"
        );
    }

    #[test]
    fn quartile_boundary_matches_256_to_64() {
        assert_eq!(top_quartile(256), 64);
        assert_eq!(top_quartile(3), 1);
    }

    #[test]
    fn forest_is_deterministic_under_seed() {
        let (x, y) = signal_data(100, 4, 14);
        let cfg = ForestConfig {
            trees: 8,
            max_depth: 4,
            seed: 14,
            ..Default::default()
        };
        let m1 = train_rf(&x, &y, &cfg).unwrap();
        let m2 = train_rf(&x, &y, &cfg).unwrap();
        assert_eq!(m1.importance, m2.importance);
        for row in x.iter().take(10) {
            assert_eq!(m1.predict_dist(row).unwrap(), m2.predict_dist(row).unwrap());
        }
    }
}
