//! CART random forest with Gini splits.
//!
//! Rows are put into a canonical order before sampling, and tree `t` draws
//! its bootstrap and feature subsets from a ChaCha stream keyed by
//! `(seed, t)`. A tree therefore depends only on the seed, its index and
//! the multiset of training rows, and trees can be grown in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_training_set, ClassId, LikelihoodVector, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_DIM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub mtry: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: 16,
            min_leaf: 5,
            mtry: (FEATURE_DIM as f64).sqrt().ceil() as usize,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// `x[feature] <= threshold` goes to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { counts: [u32; NUM_CLASSES] },
}

/// Flat node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput("tree without nodes".into()));
        }
        for n in &nodes {
            match n {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= FEATURE_DIM
                        || !threshold.is_finite()
                        || *left >= nodes.len()
                        || *right >= nodes.len()
                    {
                        return Err(Error::InvalidInput(format!("malformed split {n:?}")));
                    }
                }
                Node::Leaf { counts } => {
                    if counts.iter().all(|&c| c == 0) {
                        return Err(Error::InvalidInput("empty leaf".into()));
                    }
                }
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_counts(&self, x: &[f64]) -> &[u32; NUM_CLASSES] {
        let mut at = 0;
        // bounded walk: a malformed cycle cannot hang prediction
        for _ in 0..=self.nodes.len() {
            match &self.nodes[at] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
        panic!("tree walk did not reach a leaf");
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<Tree>,
}

impl ForestModel {
    pub fn from_trees(trees: Vec<Tree>) -> Self {
        Self { trees }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Mean over trees of the leaf class frequencies.
    pub fn predict_proba(&self, feature: &FeatureVector) -> Result<LikelihoodVector> {
        if self.trees.is_empty() {
            return Err(Error::Untrained);
        }
        let x = feature.as_slice();
        let mut acc = [0.0; NUM_CLASSES];
        for tree in &self.trees {
            let counts = tree.leaf_counts(x);
            let total: u32 = counts.iter().sum();
            for (a, &c) in acc.iter_mut().zip(counts) {
                *a += f64::from(c) / f64::from(total);
            }
        }
        let t = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= t);
        Ok(LikelihoodVector::normalized(acc))
    }
}

/// Gini impurity `1 − Σ p_k²` of a count vector; 0 for an empty vector.
pub fn gini(counts: &[u32]) -> f64 {
    let total: u32 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = f64::from(total);
    1.0 - counts.iter().map(|&c| (f64::from(c) / t).powi(2)).sum::<f64>()
}

struct Grower<'a> {
    rows: &'a [&'a [f64]],
    labels: &'a [usize],
    config: &'a ForestConfig,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn counts(&self, sample: &[usize]) -> [u32; NUM_CLASSES] {
        let mut c = [0u32; NUM_CLASSES];
        for &i in sample {
            c[self.labels[i]] += 1;
        }
        c
    }

    fn grow(&mut self, sample: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&sample);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });
        let parent = gini(&counts);
        if depth >= self.config.max_depth
            || sample.len() < 2 * self.config.min_leaf
            || parent == 0.0
        {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&sample, &counts, parent) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = sample
            .into_iter()
            .partition(|&i| self.rows[i][feature] <= threshold);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left: l,
            right: r,
        };
        id
    }

    fn best_split(
        &mut self,
        sample: &[usize],
        counts: &[u32; NUM_CLASSES],
        parent: f64,
    ) -> Option<(usize, f64)> {
        let mtry = self.config.mtry.clamp(1, FEATURE_DIM);
        // partial Fisher-Yates over feature indices
        let mut feats: Vec<usize> = (0..FEATURE_DIM).collect();
        for i in 0..mtry {
            let j = self.rng.random_range(i..FEATURE_DIM);
            feats.swap(i, j);
        }
        let n = sample.len();
        let min_leaf = self.config.min_leaf.max(1);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = sample.to_vec();
        for &f in &feats[..mtry] {
            order.sort_by(|&a, &b| self.rows[a][f].total_cmp(&self.rows[b][f]).then(a.cmp(&b)));
            let mut left = [0u32; NUM_CLASSES];
            let mut right = *counts;
            for pos in 0..n - 1 {
                let i = order[pos];
                left[self.labels[i]] += 1;
                right[self.labels[i]] -= 1;
                let nl = pos + 1;
                let (v, next) = (self.rows[i][f], self.rows[order[pos + 1]][f]);
                if v == next || nl < min_leaf || n - nl < min_leaf {
                    continue;
                }
                let score = (nl as f64 * gini(&left) + (n - nl) as f64 * gini(&right)) / n as f64;
                if best.is_none_or(|(s, _, _)| score < s) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some((score, f, threshold));
                }
            }
        }
        best.filter(|(s, _, _)| *s < parent).map(|(_, f, t)| (f, t))
    }
}

fn canonical_order(features: &[FeatureVector], labels: &[ClassId]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..features.len()).collect();
    idx.sort_by(|&a, &b| {
        labels[a].cmp(&labels[b]).then_with(|| {
            let (x, y) = (features[a].as_slice(), features[b].as_slice());
            x.iter()
                .zip(y)
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    idx
}

pub fn train_forest(
    features: &[FeatureVector],
    labels: &[ClassId],
    config: &ForestConfig,
) -> Result<ForestModel> {
    check_training_set(features, labels)?;
    if config.trees == 0 || config.max_depth == 0 || config.min_leaf == 0 || config.mtry == 0 {
        return Err(Error::InvalidParameter(format!("bad forest config {config:?}")));
    }
    let order = canonical_order(features, labels);
    let rows: Vec<&[f64]> = order.iter().map(|&i| features[i].as_slice()).collect();
    let ys: Vec<usize> = order.iter().map(|&i| labels[i].index()).collect();
    let n = rows.len();

    let trees = (0..config.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut grower = Grower {
                rows: &rows,
                labels: &ys,
                config,
                rng,
                nodes: Vec::new(),
            };
            grower.grow(sample, 0);
            Tree { nodes: grower.nodes }
        })
        .collect();
    Ok(ForestModel { trees })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{accuracy, clusters};
    use super::super::Classifier;
    use super::*;
    use rand::seq::SliceRandom;

    fn class(i: usize) -> ClassId {
        ClassId::new(i).unwrap()
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[5, 5]), 0.5);
        assert_eq!(gini(&[10, 0]), 0.0);
        assert_eq!(gini(&[]), 0.0);
    }

    #[test]
    fn stump_picks_perfect_feature() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..40 {
            let mut v: Vec<f64> = (0..FEATURE_DIM).map(|j| ((i * 31 + j * 17) % 11) as f64).collect();
            v[123] = if i % 2 == 0 { 1.0 } else { 0.0 };
            xs.push(FeatureVector::new(v).unwrap());
            ys.push(class(if i % 2 == 0 { 0 } else { 6 }));
        }
        let cfg = ForestConfig {
            trees: 1,
            max_depth: 1,
            min_leaf: 1,
            mtry: FEATURE_DIM,
            seed: 3,
        };
        let model = train_forest(&xs, &ys, &cfg).unwrap();
        match &model.trees()[0].nodes()[0] {
            Node::Split { feature, .. } => assert_eq!(*feature, 123),
            other => panic!("root is {other:?}"),
        }
    }

    #[test]
    fn eight_clusters_generalize() {
        let (xs, ys) = clusters(100, 1);
        let (tx, ty) = clusters(125, 2);
        let model = Classifier::Forest(train_forest(&xs, &ys, &ForestConfig::default()).unwrap());
        let acc = accuracy(&model, &tx, &ty);
        assert!(acc >= 0.99, "held-out accuracy {acc}");
    }

    #[test]
    fn identical_stumps_average_to_one_stump() {
        let mut left = [0u32; NUM_CLASSES];
        left[1] = 3;
        left[2] = 1;
        let mut right = [0u32; NUM_CLASSES];
        right[7] = 5;
        let stump = Tree::new(vec![
            Node::Split {
                feature: 4,
                threshold: 0.5,
                left: 1,
                right: 2,
            },
            Node::Leaf { counts: left },
            Node::Leaf { counts: right },
        ])
        .unwrap();
        let forest = ForestModel::from_trees(vec![stump; 7]);
        let p = forest.predict_proba(&FeatureVector::zeros()).unwrap();
        let mut expected = [0.0; NUM_CLASSES];
        expected[1] = 0.75;
        expected[2] = 0.25;
        for (a, b) in p.values().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_forest_is_untrained() {
        let forest = ForestModel::from_trees(Vec::new());
        assert!(matches!(
            forest.predict_proba(&FeatureVector::zeros()),
            Err(Error::Untrained)
        ));
    }

    #[test]
    fn invariant_to_row_order() {
        let (xs, ys) = clusters(12, 4);
        let cfg = ForestConfig {
            trees: 10,
            ..ForestConfig::default()
        };
        let base = train_forest(&xs, &ys, &cfg).unwrap();
        assert_eq!(base, train_forest(&xs, &ys, &cfg).unwrap());
        // duplicate every row, then shuffle; compare with the duplicated set
        // in its original order
        let mut dup: Vec<(FeatureVector, ClassId)> =
            xs.iter().cloned().zip(ys.iter().copied()).collect();
        dup.extend(xs.iter().cloned().zip(ys.iter().copied()));
        let (dx, dy): (Vec<_>, Vec<_>) = dup.iter().cloned().unzip();
        let reference = train_forest(&dx, &dy, &cfg).unwrap();
        dup.shuffle(&mut ChaCha8Rng::seed_from_u64(99));
        let (sx, sy): (Vec<_>, Vec<_>) = dup.into_iter().unzip();
        assert_eq!(reference, train_forest(&sx, &sy, &cfg).unwrap());
    }
}
