//! Quantile regression forests.
//!
//! Trees are grown CART-style on bootstrap resamples by variance reduction.
//! Each leaf keeps every (resampled) response that reached it, sorted, so the
//! forest can answer conditional mean, quantile and CDF queries. A query
//! point's conditional law puts weight `1 / (trees · |leaf|)` on each response
//! of each leaf it lands in.

use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use super::{check_dim, ConditionalModel, ConditionalSample};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};

/// Forest hyperparameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForestConfig {
    pub trees: usize,
    /// Minimum number of (resampled) rows in each child of a split.
    pub min_leaf: usize,
    /// Features tried per split; `None` means `⌈d / 3⌉`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            min_leaf: 20,
            max_features: None,
            bootstrap: true,
        }
    }
}

impl ForestConfig {
    fn features_per_split(&self, dim: usize) -> usize {
        self.max_features.unwrap_or(dim.div_ceil(3)).clamp(1, dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        mean: f64,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, x: &[f64]) -> (f64, &[f64]) {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { mean, values } => return (*mean, values),
            }
        }
    }

    fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// A fitted quantile regression forest.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuantileForest {
    dim: usize,
    trees: Vec<Tree>,
}

struct Builder<'a> {
    data: &'a LabeledDataset,
    min_leaf: usize,
    features_per_split: usize,
    nodes: Vec<Node>,
    scratch: Vec<(f64, f64)>,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let mut values: Vec<f64> = idx.iter().map(|&i| self.data.response(i)).collect();
        values.sort_unstable_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        self.nodes.push(Node::Leaf { mean, values });
        self.nodes.len() - 1
    }

    fn grow(&mut self, idx: &mut [usize], rng: &mut StreamRng) -> usize {
        let m = idx.len();
        if m < 2 * self.min_leaf || m < 2 {
            return self.leaf(idx);
        }
        let mean = idx.iter().map(|&i| self.data.response(i)).sum::<f64>() / m as f64;
        let total_ss: f64 = idx
            .iter()
            .map(|&i| {
                let d = self.data.response(i) - mean;
                d * d
            })
            .sum();
        if total_ss <= 0.0 {
            return self.leaf(idx);
        }

        let mut features = index::sample(rng, self.data.dim(), self.features_per_split).into_vec();
        features.sort_unstable();

        // (gain, feature, threshold); strict improvement keeps the lowest
        // feature index and then the lowest threshold on ties
        let mut best: Option<(f64, usize, f64)> = None;
        for &f in &features {
            self.scratch.clear();
            self.scratch
                .extend(idx.iter().map(|&i| (self.data.row(i)[f], self.data.response(i) - mean)));
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for i in 1..m {
                left_sum += self.scratch[i - 1].1;
                if i < self.min_leaf || m - i < self.min_leaf {
                    continue;
                }
                let (lo, hi) = (self.scratch[i - 1].0, self.scratch[i].0);
                if lo >= hi {
                    continue;
                }
                // centered responses sum to zero, so this is the SSE reduction
                let gain = left_sum * left_sum * m as f64 / (i as f64 * (m - i) as f64);
                if best.is_none_or(|b| gain > b.0) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some((gain, f, threshold));
                }
            }
        }

        let Some((gain, feature, threshold)) = best else {
            return self.leaf(idx);
        };
        if gain <= 1e-12 * total_ss {
            return self.leaf(idx);
        }

        let mut split = 0;
        for j in 0..m {
            if self.data.row(idx[j])[feature] <= threshold {
                idx.swap(j, split);
                split += 1;
            }
        }
        let at = self.nodes.len();
        self.nodes.push(Node::Split {
            feature,
            threshold,
            left: 0,
            right: 0,
        });
        let (left_idx, right_idx) = idx.split_at_mut(split);
        let left = self.grow(left_idx, rng);
        let right = self.grow(right_idx, rng);
        if let Node::Split { left: l, right: r, .. } = &mut self.nodes[at] {
            *l = left;
            *r = right;
        }
        at
    }
}

impl QuantileForest {
    /// Fits `config.trees` trees; tree `t` draws from the stream
    /// `derive_seed(seed, [t])`, so the result depends only on
    /// `(train, config, seed)`.
    pub fn fit(train: &LabeledDataset, config: &ForestConfig, seed: u64) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if train.dim() == 0 {
            return Err(Error::NoFeatures);
        }
        if config.trees == 0 {
            return Err(Error::InvalidParameter {
                name: "trees",
                value: 0.0,
                expected: ">= 1",
            });
        }
        if config.min_leaf == 0 {
            return Err(Error::InvalidParameter {
                name: "min_leaf",
                value: 0.0,
                expected: ">= 1",
            });
        }
        let n = train.len();
        let mut builder = Builder {
            data: train,
            min_leaf: config.min_leaf,
            features_per_split: config.features_per_split(train.dim()),
            nodes: Vec::new(),
            scratch: Vec::with_capacity(n),
        };
        let mut trees = Vec::with_capacity(config.trees);
        for t in 0..config.trees {
            let mut rng = stream(seed, &[t as u64]);
            let mut idx: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            builder.nodes = Vec::new();
            builder.grow(&mut idx, &mut rng);
            trees.push(Tree {
                nodes: core::mem::take(&mut builder.nodes),
            });
        }
        Ok(Self {
            dim: train.dim(),
            trees,
        })
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn leaf_counts(&self) -> Vec<usize> {
        self.trees.iter().map(Tree::leaf_count).collect()
    }

    /// Sizes of the leaves that `x` falls into, one per tree.
    pub fn leaf_sizes(&self, x: &[f64]) -> Result<Vec<usize>> {
        check_dim(self.dim, x)?;
        Ok(self.trees.iter().map(|t| t.leaf(x).1.len()).collect())
    }
}

impl ConditionalModel for QuantileForest {
    fn dim(&self) -> usize {
        self.dim
    }

    fn conditional(&self, x: &[f64]) -> Result<ConditionalSample> {
        check_dim(self.dim, x)?;
        let leaves: Vec<&[f64]> = self.trees.iter().map(|t| t.leaf(x).1).collect();
        let mut pairs = Vec::with_capacity(leaves.iter().map(|l| l.len()).sum());
        let trees = self.trees.len() as f64;
        for leaf in leaves {
            let w = 1.0 / (trees * leaf.len() as f64);
            pairs.extend(leaf.iter().map(|&v| (v, w)));
        }
        Ok(ConditionalSample::from_weighted(pairs).expect("leaves are never empty"))
    }

    fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x)?;
        Ok(self.trees.iter().map(|t| t.leaf(x).0).sum::<f64>() / self.trees.len() as f64)
    }
}
