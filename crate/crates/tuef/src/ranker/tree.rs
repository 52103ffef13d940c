//! Histogram-based regression trees grown leaf-wise with Newton leaf values.

use serde::{Deserialize, Serialize};

use crate::par;

/// Guard against division by a zero Hessian sum; small enough to never flip
/// the Newton step's sign.
const HESS_EPS: f64 = 1e-9;

pub const MAX_BINS: usize = 255;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        /// Values `<= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { value } => *value,
            Node::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    /// Index of the leaf node `x` falls into.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { .. } => return idx,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

/// Quantile feature binning shared by all trees of one training run.
/// `value <= thresholds[f][b]` ⇔ the value falls in bin `<= b`, so a split
/// at bin `b` serializes as the plain threshold `thresholds[f][b]`.
#[derive(Debug, Clone)]
pub struct Binner {
    pub thresholds: Vec<Vec<f64>>,
}

impl Binner {
    /// Fit bins per feature over the training matrix (row-major samples).
    pub fn fit(samples: &[Vec<f64>], n_features: usize) -> Binner {
        let thresholds = par::map_range(n_features, |f| {
            let mut values: Vec<f64> = samples.iter().map(|row| row[f]).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            values.dedup();
            if values.len() <= 1 {
                return Vec::new();
            }
            if values.len() <= MAX_BINS {
                // Cut between consecutive distinct values.
                return values.windows(2).map(|w| w[0]).collect();
            }
            let mut cuts = Vec::with_capacity(MAX_BINS - 1);
            for i in 1..MAX_BINS {
                let pos = i * values.len() / MAX_BINS;
                cuts.push(values[pos - 1]);
            }
            cuts.dedup();
            cuts
        });
        Binner { thresholds }
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.thresholds[feature].len() + 1
    }

    pub fn bin(&self, feature: usize, value: f64) -> u8 {
        let cuts = &self.thresholds[feature];
        // Binary search: first cut >= value.
        let mut lo = 0usize;
        let mut hi = cuts.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if value <= cuts[mid] {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo as u8
    }

    /// Bin the whole matrix column-major: `binned[f][sample]`.
    pub fn bin_matrix(&self, samples: &[Vec<f64>]) -> Vec<Vec<u8>> {
        par::map_range(self.thresholds.len(), |f| {
            samples.iter().map(|row| self.bin(f, row[f])).collect()
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GrowParams {
    pub num_leaves: usize,
    pub max_depth: usize,
    pub min_data_in_leaf: usize,
}

#[derive(Debug, Clone)]
struct SplitInfo {
    feature: usize,
    bin: u8,
    gain: f64,
}

struct OpenLeaf {
    node: usize,
    samples: Vec<u32>,
    depth: usize,
    grad_sum: f64,
    hess_sum: f64,
    split: Option<SplitInfo>,
}

pub struct GrownTree {
    pub tree: Tree,
    /// Leaf node index of every training sample.
    pub sample_leaf: Vec<usize>,
    /// Split gain accumulated per feature.
    pub feature_gain: Vec<f64>,
}

fn leaf_value(grad_sum: f64, hess_sum: f64) -> f64 {
    grad_sum / (hess_sum + HESS_EPS)
}

fn score(grad_sum: f64, hess_sum: f64) -> f64 {
    grad_sum * grad_sum / (hess_sum + HESS_EPS)
}

/// Best split of one leaf: maximal gain over all (feature, bin) cuts that
/// leave at least `min_data` samples on each side. Ties prefer the lower
/// feature index, then the lower bin.
fn best_split(
    samples: &[u32],
    binned: &[Vec<u8>],
    grad: &[f64],
    hess: &[f64],
    binner: &Binner,
    min_data: usize,
    grad_sum: f64,
    hess_sum: f64,
) -> Option<SplitInfo> {
    let n_features = binned.len();
    let parent_score = score(grad_sum, hess_sum);
    let candidates: Vec<Option<SplitInfo>> = par::map_range(n_features, |f| {
        let n_bins = binner.n_bins(f);
        if n_bins <= 1 {
            return None;
        }
        let mut hist_grad = vec![0.0f64; n_bins];
        let mut hist_hess = vec![0.0f64; n_bins];
        let mut hist_count = vec![0usize; n_bins];
        let column = &binned[f];
        for &s in samples {
            let b = column[s as usize] as usize;
            hist_grad[b] += grad[s as usize];
            hist_hess[b] += hess[s as usize];
            hist_count[b] += 1;
        }
        let total = samples.len();
        let mut left_grad = 0.0;
        let mut left_hess = 0.0;
        let mut left_count = 0usize;
        let mut best: Option<SplitInfo> = None;
        for b in 0..n_bins - 1 {
            left_grad += hist_grad[b];
            left_hess += hist_hess[b];
            left_count += hist_count[b];
            let right_count = total - left_count;
            if left_count < min_data || right_count < min_data {
                continue;
            }
            let gain = score(left_grad, left_hess)
                + score(grad_sum - left_grad, hess_sum - left_hess)
                - parent_score;
            let better = match &best {
                None => gain > 0.0,
                Some(s) => gain > s.gain,
            };
            if better {
                best = Some(SplitInfo {
                    feature: f,
                    bin: b as u8,
                    gain,
                });
            }
        }
        best
    });
    candidates
        .into_iter()
        .flatten()
        .max_by(|a, b| {
            a.gain
                .partial_cmp(&b.gain)
                .unwrap()
                .then(b.feature.cmp(&a.feature))
                .then(b.bin.cmp(&a.bin))
        })
}

/// Grow one tree on the binned training matrix, leaf-wise best-first.
pub fn grow_tree(
    binned: &[Vec<u8>],
    binner: &Binner,
    grad: &[f64],
    hess: &[f64],
    params: &GrowParams,
) -> GrownTree {
    let n_samples = grad.len();
    let n_features = binned.len();
    let mut feature_gain = vec![0.0; n_features];

    let all: Vec<u32> = (0..n_samples as u32).collect();
    let grad_sum: f64 = grad.iter().sum();
    let hess_sum: f64 = hess.iter().sum();

    let mut nodes = vec![Node::Leaf {
        value: leaf_value(grad_sum, hess_sum),
    }];
    let mut open = vec![OpenLeaf {
        node: 0,
        split: best_split(
            &all,
            binned,
            grad,
            hess,
            binner,
            params.min_data_in_leaf,
            grad_sum,
            hess_sum,
        ),
        samples: all,
        depth: 0,
        grad_sum,
        hess_sum,
    }];
    let mut n_leaves = 1;

    while n_leaves < params.num_leaves {
        // Pick the openable leaf with the best gain (first wins ties).
        let mut best_idx: Option<usize> = None;
        for (i, leaf) in open.iter().enumerate() {
            if let Some(split) = &leaf.split {
                let better = match best_idx {
                    None => true,
                    Some(j) => split.gain > open[j].split.as_ref().unwrap().gain,
                };
                if better {
                    best_idx = Some(i);
                }
            }
        }
        let Some(idx) = best_idx else {
            break;
        };
        let leaf = open.swap_remove(idx);
        let split = leaf.split.unwrap();
        feature_gain[split.feature] += split.gain;

        let column = &binned[split.feature];
        let (left_samples, right_samples): (Vec<u32>, Vec<u32>) = leaf
            .samples
            .iter()
            .partition(|&&s| column[s as usize] <= split.bin);

        let stats = |subset: &[u32]| -> (f64, f64) {
            let g = subset.iter().map(|&s| grad[s as usize]).sum();
            let h = subset.iter().map(|&s| hess[s as usize]).sum();
            (g, h)
        };
        let (lg, lh) = stats(&left_samples);
        let (rg, rh) = (leaf.grad_sum - lg, leaf.hess_sum - lh);

        let left_node = nodes.len();
        let right_node = nodes.len() + 1;
        nodes.push(Node::Leaf {
            value: leaf_value(lg, lh),
        });
        nodes.push(Node::Leaf {
            value: leaf_value(rg, rh),
        });
        nodes[leaf.node] = Node::Split {
            feature: split.feature,
            threshold: binner.thresholds[split.feature][split.bin as usize],
            left: left_node,
            right: right_node,
        };
        n_leaves += 1;

        let child_depth = leaf.depth + 1;
        for (node, samples, g, h) in [
            (left_node, left_samples, lg, lh),
            (right_node, right_samples, rg, rh),
        ] {
            let split = if child_depth < params.max_depth {
                best_split(
                    &samples,
                    binned,
                    grad,
                    hess,
                    binner,
                    params.min_data_in_leaf,
                    g,
                    h,
                )
            } else {
                None
            };
            open.push(OpenLeaf {
                node,
                samples,
                depth: child_depth,
                grad_sum: g,
                hess_sum: h,
                split,
            });
        }
    }

    // Sample → leaf assignment from the surviving open leaves.
    let mut sample_leaf = vec![0usize; n_samples];
    for leaf in &open {
        for &s in &leaf.samples {
            sample_leaf[s as usize] = leaf.node;
        }
    }
    if open.is_empty() {
        // Root never split.
        sample_leaf.fill(0);
    }

    GrownTree {
        tree: Tree { nodes },
        sample_leaf,
        feature_gain,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn binner_maps_values_to_ordered_bins() {
        let samples = matrix(&[&[1.0], &[2.0], &[3.0], &[2.0]]);
        let binner = Binner::fit(&samples, 1);
        assert_eq!(binner.n_bins(0), 3);
        let b1 = binner.bin(0, 1.0);
        let b2 = binner.bin(0, 2.0);
        let b3 = binner.bin(0, 3.0);
        assert!(b1 < b2 && b2 < b3);
        // Split at bin b ⇔ value <= thresholds[b].
        assert!(binner.thresholds[0][b1 as usize] >= 1.0);
    }

    #[test]
    fn constant_feature_has_single_bin() {
        let samples = matrix(&[&[5.0], &[5.0], &[5.0]]);
        let binner = Binner::fit(&samples, 1);
        assert_eq!(binner.n_bins(0), 1);
    }

    #[test]
    fn stump_separates_by_gradient_sign() {
        // Feature 0 separates positives (grad +1) from negatives (grad −1).
        let samples = matrix(&[&[1.0], &[1.0], &[0.0], &[0.0]]);
        let grad = vec![1.0, 1.0, -1.0, -1.0];
        let hess = vec![0.5, 0.5, 0.5, 0.5];
        let binner = Binner::fit(&samples, 1);
        let binned = binner.bin_matrix(&samples);
        let grown = grow_tree(
            &binned,
            &binner,
            &grad,
            &hess,
            &GrowParams {
                num_leaves: 2,
                max_depth: 4,
                min_data_in_leaf: 1,
            },
        );
        assert_eq!(grown.tree.num_leaves(), 2);
        assert!(grown.tree.predict(&[1.0]) > 0.0);
        assert!(grown.tree.predict(&[0.0]) < 0.0);
        // sample_leaf agrees with fresh traversal
        for (i, row) in samples.iter().enumerate() {
            assert_eq!(grown.sample_leaf[i], grown.tree.leaf_index(row));
        }
        assert!(grown.feature_gain[0] > 0.0);
    }

    #[test]
    fn min_data_blocks_unbalanced_split() {
        let samples = matrix(&[&[1.0], &[0.0], &[0.0], &[0.0]]);
        let grad = vec![1.0, -1.0, -1.0, -1.0];
        let hess = vec![0.5; 4];
        let binner = Binner::fit(&samples, 1);
        let binned = binner.bin_matrix(&samples);
        let grown = grow_tree(
            &binned,
            &binner,
            &grad,
            &hess,
            &GrowParams {
                num_leaves: 4,
                max_depth: 6,
                min_data_in_leaf: 2,
            },
        );
        // A 1-vs-3 cut violates min_data_in_leaf = 2.
        assert_eq!(grown.tree.num_leaves(), 1);
    }

    #[test]
    fn leaf_values_are_newton_steps() {
        let samples = matrix(&[&[1.0], &[0.0]]);
        let grad = vec![0.8, -0.4];
        let hess = vec![0.2, 0.1];
        let binner = Binner::fit(&samples, 1);
        let binned = binner.bin_matrix(&samples);
        let grown = grow_tree(
            &binned,
            &binner,
            &grad,
            &hess,
            &GrowParams {
                num_leaves: 2,
                max_depth: 4,
                min_data_in_leaf: 1,
            },
        );
        assert!((grown.tree.predict(&[1.0]) - 0.8 / (0.2 + 1e-9)).abs() < 1e-6);
        assert!((grown.tree.predict(&[0.0]) - (-0.4) / (0.1 + 1e-9)).abs() < 1e-6);
    }

    #[test]
    fn depth_cap_limits_tree() {
        // 4 distinct values on one feature; depth cap 1 allows only a stump.
        let samples = matrix(&[&[0.0], &[1.0], &[2.0], &[3.0]]);
        let grad = vec![-2.0, -1.0, 1.0, 2.0];
        let hess = vec![0.5; 4];
        let binner = Binner::fit(&samples, 1);
        let binned = binner.bin_matrix(&samples);
        let grown = grow_tree(
            &binned,
            &binner,
            &grad,
            &hess,
            &GrowParams {
                num_leaves: 8,
                max_depth: 1,
                min_data_in_leaf: 1,
            },
        );
        assert_eq!(grown.tree.num_leaves(), 2);
    }
}
