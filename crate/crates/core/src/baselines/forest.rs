use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::BaselineError;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or cannot be split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// `None` uses round(sqrt(d)).
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 100, max_depth: None, min_leaf: 1, features_per_split: None, bootstrap: true, seed: 0 }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.n_trees == 0 {
            return Err(BaselineError::InvalidConfig("n_trees must be at least 1"));
        }
        if self.min_leaf == 0 {
            return Err(BaselineError::InvalidConfig("min_leaf must be at least 1"));
        }
        if self.features_per_split == Some(0) {
            return Err(BaselineError::InvalidConfig("features_per_split must be at least 1"));
        }
        Ok(())
    }

    pub fn features_for(&self, dim: usize) -> usize {
        self.features_per_split.unwrap_or_else(|| math::round(math::sqrt(dim as f64)) as usize).clamp(1, dim.max(1))
    }
}

/// A node of a tree stored in pre-order; a split's left child is the next node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    /// Samples with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, right: usize },
    /// `[P(label false), P(label true)]`.
    Leaf { probs: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    /// Validates child links and feature indices of a pre-order node list.
    pub fn from_nodes(nodes: Vec<TreeNode>, n_features: usize) -> Result<Self, BaselineError> {
        if nodes.is_empty() {
            return Err(BaselineError::MalformedTree("empty tree"));
        }
        // Each subtree must be exactly contiguous; walk it to check.
        fn walk(nodes: &[TreeNode], i: usize, n_features: usize) -> Result<usize, BaselineError> {
            let mut stack = vec![i];
            let mut next = i;
            while let Some(j) = stack.pop() {
                if j != next || j >= nodes.len() {
                    return Err(BaselineError::MalformedTree("children out of pre-order"));
                }
                next += 1;
                match nodes[j] {
                    TreeNode::Split { feature, right, threshold } => {
                        if feature >= n_features || !threshold.is_finite() {
                            return Err(BaselineError::MalformedTree("bad split"));
                        }
                        stack.push(right);
                        stack.push(j + 1);
                    }
                    TreeNode::Leaf { probs } => {
                        if !(probs[0] >= 0.0 && probs[1] >= 0.0 && (probs[0] + probs[1] - 1.0).abs() < 1e-9) {
                            return Err(BaselineError::MalformedTree("leaf probabilities"));
                        }
                    }
                }
            }
            Ok(next)
        }
        if walk(&nodes, 0, n_features)? != nodes.len() {
            return Err(BaselineError::MalformedTree("unreachable nodes"));
        }
        Ok(Tree { nodes })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            best = best.max(d);
            if let TreeNode::Split { right, .. } = self.nodes[i] {
                stack.push((i + 1, d + 1));
                stack.push((right, d + 1));
            }
        }
        best
    }

    /// Probability of label `true`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Split { feature, threshold, right } => {
                    i = if x[feature] <= threshold { i + 1 } else { right };
                }
                TreeNode::Leaf { probs } => return probs[1],
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    n_features: usize,
    trees: Vec<Tree>,
}

impl Forest {
    pub fn from_trees(n_features: usize, trees: Vec<Tree>) -> Result<Self, BaselineError> {
        if trees.is_empty() {
            return Err(BaselineError::InvalidConfig("a forest needs at least one tree"));
        }
        Ok(Forest { n_features, trees })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }
}

fn gini(pos: f64, n: f64) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    let p = pos / n;
    2.0 * p * (1.0 - p)
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// Lowest weighted child Gini over thresholds of one feature.
fn best_threshold(
    samples: &[(Vec<f64>, bool)],
    idx: &[usize],
    feature: usize,
    min_leaf: usize,
    buf: &mut Vec<(f64, bool)>,
) -> Option<(f64, f64)> {
    buf.clear();
    buf.extend(idx.iter().map(|&i| (samples[i].0[feature], samples[i].1)));
    buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let n = buf.len();
    let total_pos = buf.iter().filter(|s| s.1).count() as f64;
    let mut left_pos = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        left_pos += buf[i].1 as u8 as f64;
        if buf[i].0 == buf[i + 1].0 {
            continue;
        }
        let nl = (i + 1) as f64;
        let nr = (n - i - 1) as f64;
        if (i + 1) < min_leaf || (n - i - 1) < min_leaf {
            continue;
        }
        let score = nl * gini(left_pos, nl) + nr * gini(total_pos - left_pos, nr);
        if best.is_none_or(|(s, _)| score < s) {
            let mid = 0.5 * (buf[i].0 + buf[i + 1].0);
            // Guard against the midpoint rounding onto the upper value.
            let t = if mid < buf[i + 1].0 { mid } else { buf[i].0 };
            best = Some((score, t));
        }
    }
    best
}

/// Grows one tree. Tree `t` draws from a generator seeded with `seed + t`.
pub fn rf_train_tree(samples: &[(Vec<f64>, bool)], config: &ForestConfig, tree_index: usize) -> Result<Tree, BaselineError> {
    config.validate()?;
    let dim = check_samples(samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(tree_index as u64));
    let n = samples.len();
    let root: Vec<usize> =
        if config.bootstrap { (0..n).map(|_| rng.random_range(0..n)).collect() } else { (0..n).collect() };
    let m = config.features_for(dim);
    let mut features: Vec<usize> = (0..dim).collect();
    let mut buf = Vec::new();

    // (sample indices, depth, parent to patch with this node's index)
    let mut stack: Vec<(Vec<usize>, usize, Option<usize>)> = vec![(root, 0, None)];
    let mut nodes: Vec<TreeNode> = Vec::new();
    while let Some((idx, depth, parent)) = stack.pop() {
        let me = nodes.len();
        if let Some(p) = parent {
            if let TreeNode::Split { right, .. } = &mut nodes[p] {
                *right = me;
            }
        }
        let pos = idx.iter().filter(|&&i| samples[i].1).count();
        let count = idx.len();
        let leaf = TreeNode::Leaf { probs: [(count - pos) as f64 / count as f64, pos as f64 / count as f64] };
        let can_split = pos != 0 && pos != count && count >= 2 * config.min_leaf && config.max_depth.is_none_or(|d| depth < d);
        if !can_split {
            nodes.push(leaf);
            continue;
        }
        // Draw the candidate subset; if none of it splits, keep drawing
        // from the remaining features.
        features.shuffle(&mut rng);
        let mut best: Option<BestSplit> = None;
        for (k, &f) in features.iter().enumerate() {
            if k >= m && best.is_some() {
                break;
            }
            if let Some((score, threshold)) = best_threshold(samples, &idx, f, config.min_leaf, &mut buf) {
                if best.as_ref().is_none_or(|b| score < b.score) {
                    best = Some(BestSplit { feature: f, threshold, score });
                }
            }
        }
        let Some(split) = best else {
            nodes.push(leaf);
            continue;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| samples[i].0[split.feature] <= split.threshold);
        nodes.push(TreeNode::Split { feature: split.feature, threshold: split.threshold, right: usize::MAX });
        stack.push((right, depth + 1, Some(me)));
        stack.push((left, depth + 1, None));
    }
    Ok(Tree { nodes })
}

fn check_samples(samples: &[(Vec<f64>, bool)]) -> Result<usize, BaselineError> {
    let first = samples.first().ok_or(BaselineError::EmptySamples)?;
    let dim = first.0.len();
    for (x, _) in samples {
        if x.len() != dim {
            return Err(BaselineError::DimensionMismatch { expected: dim, got: x.len() });
        }
    }
    Ok(dim)
}

/// Bagged CART trees with Gini splits, grown one after another.
pub fn rf_train(samples: &[(Vec<f64>, bool)], config: &ForestConfig) -> Result<Forest, BaselineError> {
    let dim = check_samples(samples)?;
    let trees = (0..config.n_trees).map(|t| rf_train_tree(samples, config, t)).collect::<Result<Vec<_>, _>>()?;
    Forest::from_trees(dim, trees)
}

/// Mean over trees of the leaf probability of label `true`.
pub fn rf_predict(forest: &Forest, x: &[f64]) -> Result<f64, BaselineError> {
    if x.len() != forest.n_features {
        return Err(BaselineError::DimensionMismatch { expected: forest.n_features, got: x.len() });
    }
    let s: f64 = forest.trees.iter().map(|t| t.predict(x)).sum();
    Ok(s / forest.trees.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor_data(n: usize, seed: u64) -> Vec<(Vec<f64>, bool)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let a: f64 = rng.random();
                let b: f64 = rng.random();
                (vec![a, b, rng.random()], (a > 0.5) ^ (b > 0.5))
            })
            .collect()
    }

    #[test]
    fn gini_of_pure_node_is_zero() {
        assert_eq!(gini(0.0, 5.0), 0.0);
        assert_eq!(gini(5.0, 5.0), 0.0);
        assert_eq!(gini(2.0, 4.0), 0.5);
    }

    #[test]
    fn single_sample_gives_single_leaf() {
        let f = rf_train(&[(vec![1.0, 2.0], true)], &ForestConfig { n_trees: 3, ..Default::default() }).unwrap();
        for t in f.trees() {
            assert_eq!(t.nodes(), &[TreeNode::Leaf { probs: [0.0, 1.0] }]);
        }
        assert_eq!(rf_predict(&f, &[0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn unlimited_depth_memorizes() {
        let data = xor_data(300, 1);
        let cfg = ForestConfig { n_trees: 1, bootstrap: false, ..Default::default() };
        let f = rf_train(&data, &cfg).unwrap();
        for (x, y) in &data {
            assert_eq!(rf_predict(&f, x).unwrap() > 0.5, *y);
        }
    }

    #[test]
    fn forest_learns_xor() {
        let train = xor_data(1000, 2);
        let test = xor_data(500, 3);
        let f = rf_train(&train, &ForestConfig { n_trees: 25, seed: 4, ..Default::default() }).unwrap();
        let acc = test.iter().filter(|(x, y)| (rf_predict(&f, x).unwrap() > 0.5) == *y).count() as f64 / 500.0;
        assert!(acc > 0.9, "{acc}");
    }

    #[test]
    fn depth_limit_is_respected() {
        let data = xor_data(200, 5);
        let f = rf_train(&data, &ForestConfig { n_trees: 5, max_depth: Some(2), ..Default::default() }).unwrap();
        assert!(f.trees().iter().all(|t| t.depth() <= 2));
    }

    #[test]
    fn deterministic_and_order_invariant_without_bootstrap() {
        let data = xor_data(200, 6);
        let cfg = ForestConfig { n_trees: 4, bootstrap: false, seed: 7, ..Default::default() };
        let a = rf_train(&data, &cfg).unwrap();
        assert_eq!(a, rf_train(&data, &cfg).unwrap());
        let mut rev = data.clone();
        rev.reverse();
        assert_eq!(a, rf_train(&rev, &cfg).unwrap());
    }

    #[test]
    fn errors() {
        assert_eq!(rf_train(&[], &ForestConfig::default()).unwrap_err(), BaselineError::EmptySamples);
        let bad = [(vec![1.0], true), (vec![1.0, 2.0], false)];
        assert!(matches!(rf_train(&bad, &ForestConfig::default()), Err(BaselineError::DimensionMismatch { .. })));
        let f = rf_train(&[(vec![1.0], true)], &ForestConfig { n_trees: 1, ..Default::default() }).unwrap();
        assert!(matches!(rf_predict(&f, &[1.0, 2.0]), Err(BaselineError::DimensionMismatch { .. })));
    }

    #[test]
    fn identical_stumps_average_to_stump() {
        let stump = Tree::from_nodes(
            vec![
                TreeNode::Split { feature: 0, threshold: 0.5, right: 2 },
                TreeNode::Leaf { probs: [0.25, 0.75] },
                TreeNode::Leaf { probs: [0.875, 0.125] },
            ],
            1,
        )
        .unwrap();
        let f = Forest::from_trees(1, vec![stump.clone(), stump.clone(), stump]).unwrap();
        assert_eq!(rf_predict(&f, &[0.0]).unwrap(), 0.75);
        assert_eq!(rf_predict(&f, &[1.0]).unwrap(), 0.125);
    }

    #[test]
    fn malformed_trees_are_rejected() {
        let leaf = TreeNode::Leaf { probs: [0.5, 0.5] };
        assert!(Tree::from_nodes(vec![TreeNode::Split { feature: 0, threshold: 0.0, right: 5 }, leaf, leaf], 1).is_err());
        assert!(Tree::from_nodes(vec![TreeNode::Split { feature: 3, threshold: 0.0, right: 2 }, leaf, leaf], 1).is_err());
        assert!(Tree::from_nodes(vec![leaf, leaf], 1).is_err());
        assert!(Tree::from_nodes(vec![TreeNode::Leaf { probs: [0.5, 0.6] }], 1).is_err());
    }
}
