//! Variance-reduction regression trees and a bagged ensemble.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub min_leaf: usize,
    pub max_depth: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { min_leaf: 5, max_depth: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub root: Node,
}

impl TreeModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(node: &Node) -> usize {
            match node {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }
}

/// Best split of `idx` on one feature via prefix sums over the sorted order.
/// Returns (threshold, sse_reduction) for the best valid cut, if any.
fn best_cut_on_feature(
    rows: &[&[f64]],
    y: &[f64],
    idx: &[usize],
    feature: usize,
    min_leaf: usize,
) -> Option<(f64, f64)> {
    let mut order: Vec<usize> = idx.to_vec();
    order.sort_by(|&a, &b| {
        rows[a][feature].partial_cmp(&rows[b][feature]).unwrap().then(a.cmp(&b))
    });
    let n = order.len();
    let total_sum: f64 = order.iter().map(|&i| y[i]).sum();
    let mut left_sum = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for cut in 1..n {
        left_sum += y[order[cut - 1]];
        let a = rows[order[cut - 1]][feature];
        let b = rows[order[cut]][feature];
        if a == b {
            continue; // no threshold separates equal values
        }
        if cut < min_leaf || n - cut < min_leaf {
            continue;
        }
        // SSE reduction = sum_l^2/n_l + sum_r^2/n_r - sum^2/n (constant terms
        // cancel), maximized over cuts.
        let right_sum = total_sum - left_sum;
        let gain = left_sum * left_sum / cut as f64
            + right_sum * right_sum / (n - cut) as f64
            - total_sum * total_sum / n as f64;
        let threshold = (a + b) / 2.0;
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((threshold, gain));
        }
    }
    best
}

fn grow(
    rows: &[&[f64]],
    y: &[f64],
    idx: &[usize],
    depth: usize,
    params: &TreeParams,
) -> Node {
    let n = idx.len();
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
    if depth >= params.max_depth || n < 2 * params.min_leaf {
        return Node::Leaf { value: mean };
    }
    let p = rows[idx[0]].len();
    // First feature index wins exact gain ties, then the smaller threshold
    // (ascending scan within a feature keeps the first best cut).
    let mut best: Option<(usize, f64, f64)> = None;
    for feature in 0..p {
        if let Some((threshold, gain)) = best_cut_on_feature(rows, y, idx, feature, params.min_leaf)
        {
            if best.is_none_or(|(_, _, g)| gain > g) {
                best = Some((feature, threshold, gain));
            }
        }
    }
    let Some((feature, threshold, gain)) = best else {
        return Node::Leaf { value: mean };
    };
    if gain <= 1e-12 {
        return Node::Leaf { value: mean };
    }
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
        idx.iter().partition(|&&i| rows[i][feature] <= threshold);
    Node::Split {
        feature,
        threshold,
        left: Box::new(grow(rows, y, &left_idx, depth + 1, params)),
        right: Box::new(grow(rows, y, &right_idx, depth + 1, params)),
    }
}

pub fn fit_tree(rows: &[&[f64]], y: &[f64], params: &TreeParams) -> Result<TreeModel, LearnError> {
    if rows.len() < params.min_leaf {
        return Err(LearnError::TooFewRows { needed: params.min_leaf, got: rows.len() });
    }
    let idx: Vec<usize> = (0..rows.len()).collect();
    Ok(TreeModel { root: grow(rows, y, &idx, 0, params) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggedModel {
    pub trees: Vec<TreeModel>,
    /// Per-tree bootstrap seeds derived from the master seed.
    pub seeds: Vec<u64>,
}

impl BaggedModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

pub fn fit_bagged(
    rows: &[&[f64]],
    y: &[f64],
    params: &TreeParams,
    n_trees: usize,
    seed: u64,
) -> Result<BaggedModel, LearnError> {
    if rows.len() < params.min_leaf {
        return Err(LearnError::TooFewRows { needed: params.min_leaf, got: rows.len() });
    }
    // Sub-seeds come from the master alone, so parallel scheduling cannot
    // change which bootstrap a tree sees.
    let mut master = ChaCha20Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..n_trees).map(|_| master.gen()).collect();
    let n = rows.len();
    use rayon::prelude::*;
    let trees: Vec<TreeModel> = seeds
        .par_iter()
        .map(|&tree_seed| {
            let mut rng = ChaCha20Rng::seed_from_u64(tree_seed);
            let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let boot_rows: Vec<&[f64]> = sample.iter().map(|&i| rows[i]).collect();
            let boot_y: Vec<f64> = sample.iter().map(|&i| y[i]).collect();
            let idx: Vec<usize> = (0..n).collect();
            TreeModel { root: grow(&boot_rows, &boot_y, &idx, 0, params) }
        })
        .collect();
    Ok(BaggedModel { trees, seeds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_step(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let xs: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
        let y = xs.iter().map(|r| if r[0] > 0.5 { 1.0 } else { 0.0 }).collect();
        (xs, y)
    }

    #[test]
    fn small_sample_yields_single_leaf_mean() {
        let xs: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let rows: Vec<&[f64]> = xs.iter().map(|r| r.as_slice()).collect();
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        // 8 rows < 2 * min_leaf, so no split is allowed.
        let t = fit_tree(&rows, &y, &TreeParams::default()).unwrap();
        assert_eq!(t.depth(), 0);
        assert_eq!(t.predict_row(&[0.0]), 4.5);
        assert_eq!(t.predict_row(&[100.0]), 4.5);
    }

    #[test]
    fn step_function_recovered_exactly() {
        let (xs, y) = toy_step(40);
        let rows: Vec<&[f64]> = xs.iter().map(|r| r.as_slice()).collect();
        let t = fit_tree(&rows, &y, &TreeParams::default()).unwrap();
        for (row, want) in xs.iter().zip(&y) {
            assert_eq!(t.predict_row(row), *want);
        }
    }

    #[test]
    fn depth_limit_is_respected() {
        let xs: Vec<Vec<f64>> = (0..400).map(|i| vec![i as f64]).collect();
        let rows: Vec<&[f64]> = xs.iter().map(|r| r.as_slice()).collect();
        let y: Vec<f64> = (0..400).map(|i| (i as f64).sin()).collect();
        let params = TreeParams { min_leaf: 1, max_depth: 4 };
        let t = fit_tree(&rows, &y, &params).unwrap();
        assert!(t.depth() <= 4);
    }

    #[test]
    fn constant_target_makes_bagged_equal_single_tree() {
        let xs: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let rows: Vec<&[f64]> = xs.iter().map(|r| r.as_slice()).collect();
        let y = vec![2.5; 30];
        let single = fit_tree(&rows, &y, &TreeParams::default()).unwrap();
        let bag = fit_bagged(&rows, &y, &TreeParams::default(), 100, 9).unwrap();
        for probe in [-1.0, 3.0, 50.0] {
            assert_eq!(bag.predict_row(&[probe]), single.predict_row(&[probe]));
            assert_eq!(bag.predict_row(&[probe]), 2.5);
        }
    }

    #[test]
    fn bagging_is_seed_deterministic() {
        let (xs, y) = toy_step(60);
        let rows: Vec<&[f64]> = xs.iter().map(|r| r.as_slice()).collect();
        let a = fit_bagged(&rows, &y, &TreeParams::default(), 25, 7).unwrap();
        let b = fit_bagged(&rows, &y, &TreeParams::default(), 25, 7).unwrap();
        assert_eq!(a, b);
        let c = fit_bagged(&rows, &y, &TreeParams::default(), 25, 8).unwrap();
        assert_ne!(a.seeds, c.seeds);
    }

    #[test]
    fn split_tie_takes_first_feature() {
        // Both features are identical copies; the split must use feature 0.
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, i as f64]).collect();
        let rows: Vec<&[f64]> = xs.iter().map(|r| r.as_slice()).collect();
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 0.0 } else { 1.0 }).collect();
        let t = fit_tree(&rows, &y, &TreeParams::default()).unwrap();
        match &t.root {
            Node::Split { feature, .. } => assert_eq!(*feature, 0),
            Node::Leaf { .. } => panic!("expected a split"),
        }
    }
}
