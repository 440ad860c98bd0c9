use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 12,
            min_leaf: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf(f64),
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

/// Flat CART tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(t, left as usize).max(walk(t, right as usize)),
            }
        }
        walk(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

struct Builder<'a> {
    data: &'a Dataset,
    params: &'a ForestParams,
    n_try: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn grow(&mut self, rows: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> u32 {
        let id = self.nodes.len() as u32;
        let y = &self.data.y;
        let n = rows.len() as f64;
        let sum: f64 = rows.iter().map(|&i| y[i]).sum();
        let leaf = Node::Leaf(sum / n);
        let pure = rows.iter().all(|&i| y[i] == y[rows[0]]);
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf || pure {
            self.nodes.push(leaf);
            return id;
        }

        let d = self.data.n_features();
        let base = sum * sum / n;
        let mut best: Option<(f64, usize, f64)> = None;
        for f in sample(rng, d, self.n_try).into_iter() {
            rows.sort_by(|&a, &b| self.data.x[a][f].total_cmp(&self.data.x[b][f]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for k in 0..rows.len() - 1 {
                left_sum += y[rows[k]];
                let n_left = k + 1;
                let n_right = rows.len() - n_left;
                if n_left < self.params.min_leaf || n_right < self.params.min_leaf {
                    continue;
                }
                let (xa, xb) = (self.data.x[rows[k]][f], self.data.x[rows[k + 1]][f]);
                if xa == xb {
                    continue;
                }
                let right_sum = sum - left_sum;
                let gain =
                    left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64 - base;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    let mid = 0.5 * (xa + xb);
                    let threshold = if mid < xb { mid } else { xa };
                    best = Some((gain, f, threshold));
                }
            }
        }
        let Some((gain, feature, threshold)) = best else {
            self.nodes.push(leaf);
            return id;
        };
        if !(gain > 1e-12 * base.abs().max(1e-300)) {
            self.nodes.push(leaf);
            return id;
        }

        self.nodes.push(leaf);
        let split = partition(rows, |i| self.data.x[i][feature] <= threshold);
        let (l, r) = rows.split_at_mut(split);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id as usize] = Node::Split {
            feature: feature as u32,
            threshold,
            left,
            right,
        };
        id
    }
}

fn partition(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut j = 0;
    for i in 0..rows.len() {
        if pred(rows[i]) {
            rows.swap(i, j);
            j += 1;
        }
    }
    j
}

/// Bootstrap-aggregated CART regression trees, each split drawn from
/// `ceil(sqrt(d))` random features. Tree `t` uses ChaCha stream `t` of
/// `seed`, so the forest does not depend on thread scheduling.
pub fn fit_rf(data: &Dataset, params: &ForestParams, seed: u64) -> Result<Forest> {
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(Error::InvalidParameter(
            "n_trees and min_leaf must be positive".into(),
        ));
    }
    let n = data.len();
    if n < params.min_leaf.max(1) {
        return Err(Error::TooFewRows {
            rows: n,
            folds: params.min_leaf,
        });
    }
    let d = data.n_features();
    if d == 0 {
        return Err(Error::InvalidParameter("dataset has no features".into()));
    }
    let n_try = ((d as f64).sqrt().ceil() as usize).clamp(1, d);
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut b = Builder {
                data,
                params,
                n_try,
                nodes: Vec::new(),
            };
            b.grow(&mut rows, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(Forest { n_features: d, trees })
}
