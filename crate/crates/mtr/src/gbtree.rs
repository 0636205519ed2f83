//! Single-output least-squares gradient boosting over small regression trees.
//!
//! Trees are grown best-first to an exact terminal-node budget: at each step
//! the leaf whose best split yields the largest SSE reduction is expanded.
//! Candidate thresholds are midpoints between consecutive distinct sorted
//! feature values; ties are broken by lowest feature index, then lowest
//! threshold, so fitting is fully deterministic.

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::util::mean;

/// Node of a [`RegressionTree`] arena. Children always follow their parent in
/// the arena, and the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

/// Binary regression tree; routing sends `x[feature] <= threshold` left.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<TreeNode>,
}

impl RegressionTree {
    /// Single-leaf tree with the given constant value.
    pub fn leaf(value: f64) -> RegressionTree {
        RegressionTree {
            nodes: vec![TreeNode::Leaf { value }],
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    /// Value of the leaf reached by threshold routing.
    pub fn predict(&self, x: ArrayView1<'_, f64>) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }
}

/// Gradient boosting hyperparameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GbmConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        GbmConfig {
            iterations: 100,
            learning_rate: 0.1,
            max_leaves: 4,
            min_leaf: 1,
            seed: 0,
        }
    }
}

impl GbmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Parameter(format!(
                "learning rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.max_leaves < 1 {
            return Err(Error::Parameter("max_leaves must be at least 1".into()));
        }
        if self.min_leaf < 1 {
            return Err(Error::Parameter("min_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

/// Fitted boosting model: `prediction = intercept + learning_rate * sum of
/// tree outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct GbmModel {
    pub intercept: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub trees: Vec<RegressionTree>,
}

impl GbmModel {
    pub fn predict(&self, x: ArrayView1<'_, f64>) -> f64 {
        let mut acc = self.intercept;
        for tree in &self.trees {
            acc += self.learning_rate * tree.predict(x);
        }
        acc
    }

    pub fn predict_batch(&self, x: &Array2<f64>) -> Vec<f64> {
        (0..x.nrows()).map(|i| self.predict(x.row(i))).collect()
    }
}

/// Best admissible split found for one leaf.
struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
    left_rows: Vec<u32>,
    right_rows: Vec<u32>,
}

/// A leaf still eligible for expansion during best-first growth.
struct LeafState {
    node: u32,
    rows: Vec<u32>,
    best: Option<BestSplit>,
}

/// Scans all (feature, midpoint) candidates for the rows of one leaf.
///
/// `sorted` holds, per feature, all training rows ordered by that feature;
/// `in_leaf` is a reusable mark buffer of global length.
fn find_best_split(
    x: &Array2<f64>,
    target: &[f64],
    rows: &[u32],
    sorted: &[Vec<u32>],
    in_leaf: &mut [bool],
    min_leaf: usize,
) -> Option<BestSplit> {
    let n = rows.len();
    if n < 2 * min_leaf || n < 2 {
        return None;
    }
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &r in rows {
        let t = target[r as usize];
        sum += t;
        sumsq += t * t;
        lo = lo.min(t);
        hi = hi.max(t);
    }
    if lo == hi {
        return None;
    }
    let parent_sse = (sumsq - sum * sum / n as f64).max(0.0);
    let gain_floor = 1e-12 * parent_sse;

    for &r in rows {
        in_leaf[r as usize] = true;
    }

    let mut best: Option<(f64, usize, f64)> = None;
    let mut vals: Vec<f64> = Vec::with_capacity(n);
    let mut tars: Vec<f64> = Vec::with_capacity(n);
    for (f, order) in sorted.iter().enumerate() {
        vals.clear();
        tars.clear();
        for &r in order {
            if in_leaf[r as usize] {
                vals.push(x[[r as usize, f]]);
                tars.push(target[r as usize]);
            }
        }
        let mut left_sum = 0.0;
        for i in 0..n - 1 {
            left_sum += tars[i];
            if vals[i] == vals[i + 1] {
                continue;
            }
            let n_left = i + 1;
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let right_sum = sum - left_sum;
            let gain = left_sum * left_sum / n_left as f64
                + right_sum * right_sum / n_right as f64
                - sum * sum / n as f64;
            if gain <= gain_floor || gain <= 0.0 {
                continue;
            }
            if best.is_none_or(|(g, _, _)| gain > g) {
                let threshold = vals[i] + (vals[i + 1] - vals[i]) / 2.0;
                best = Some((gain, f, threshold));
            }
        }
    }

    for &r in rows {
        in_leaf[r as usize] = false;
    }

    best.map(|(gain, feature, threshold)| {
        let mut left_rows = Vec::new();
        let mut right_rows = Vec::new();
        for &r in rows {
            if x[[r as usize, feature]] <= threshold {
                left_rows.push(r);
            } else {
                right_rows.push(r);
            }
        }
        BestSplit {
            gain,
            feature,
            threshold,
            left_rows,
            right_rows,
        }
    })
}

fn leaf_mean(target: &[f64], rows: &[u32]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().map(|&r| target[r as usize]).sum::<f64>() / rows.len() as f64
}

/// Best-first tree fit over the given rows; returns the tree and the fitted
/// value for every global row index in `rows`.
fn fit_tree_presorted(
    x: &Array2<f64>,
    target: &[f64],
    max_leaves: usize,
    min_leaf: usize,
    sorted: &[Vec<u32>],
    in_leaf: &mut [bool],
    fitted: &mut [f64],
) -> RegressionTree {
    let root_rows: Vec<u32> = (0..target.len() as u32).collect();

    let mut nodes = vec![TreeNode::Leaf {
        value: leaf_mean(target, &root_rows),
    }];
    let mut leaves = vec![LeafState {
        node: 0,
        best: if max_leaves > 1 {
            find_best_split(x, target, &root_rows, sorted, in_leaf, min_leaf)
        } else {
            None
        },
        rows: root_rows,
    }];
    let mut n_leaves = 1;

    while n_leaves < max_leaves {
        let mut chosen: Option<usize> = None;
        for (i, leaf) in leaves.iter().enumerate() {
            if let Some(best) = &leaf.best {
                let better = match chosen {
                    None => true,
                    Some(c) => best.gain > leaves[c].best.as_ref().unwrap().gain,
                };
                if better {
                    chosen = Some(i);
                }
            }
        }
        let Some(i) = chosen else { break };
        let leaf = leaves.remove(i);
        let split = leaf.best.unwrap();
        let left_node = nodes.len() as u32;
        let right_node = left_node + 1;
        nodes[leaf.node as usize] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: left_node,
            right: right_node,
        };
        nodes.push(TreeNode::Leaf {
            value: leaf_mean(target, &split.left_rows),
        });
        nodes.push(TreeNode::Leaf {
            value: leaf_mean(target, &split.right_rows),
        });
        let will_grow = n_leaves + 1 < max_leaves;
        for (node, rows) in [(left_node, split.left_rows), (right_node, split.right_rows)] {
            leaves.push(LeafState {
                node,
                best: if will_grow {
                    find_best_split(x, target, &rows, sorted, in_leaf, min_leaf)
                } else {
                    None
                },
                rows,
            });
        }
        n_leaves += 1;
    }

    for leaf in &leaves {
        let TreeNode::Leaf { value } = nodes[leaf.node as usize] else {
            unreachable!()
        };
        for &r in &leaf.rows {
            fitted[r as usize] = value;
        }
    }
    RegressionTree { nodes }
}

/// Per-feature row orderings, computed once and shared across boosting
/// iterations.
fn presort(x: &Array2<f64>) -> Vec<Vec<u32>> {
    (0..x.ncols())
        .map(|f| {
            let mut order: Vec<u32> = (0..x.nrows() as u32).collect();
            order.sort_by(|&a, &b| x[[a as usize, f]].total_cmp(&x[[b as usize, f]]));
            order
        })
        .collect()
}

/// Fits one regression tree with best-first growth to at most `max_leaves`
/// terminal nodes. Unsplittable data yields a single leaf at the target mean.
pub fn fit_regression_tree(
    x: &Array2<f64>,
    target: &[f64],
    max_leaves: usize,
    min_leaf: usize,
) -> RegressionTree {
    assert_eq!(x.nrows(), target.len(), "row count mismatch");
    assert!(x.nrows() >= 1, "tree fitted on empty data");
    assert!(max_leaves >= 1 && min_leaf >= 1);
    let sorted = presort(x);
    let mut in_leaf = vec![false; x.nrows()];
    let mut fitted = vec![0.0; x.nrows()];
    fit_tree_presorted(
        x,
        target,
        max_leaves,
        min_leaf,
        &sorted,
        &mut in_leaf,
        &mut fitted,
    )
}

/// Least-squares gradient boosting: intercept at mean(y), then `iterations`
/// trees each fitted to the current residuals and added with shrinkage.
/// Stops early only when the residuals are exactly zero.
pub fn fit_gbm(x: &Array2<f64>, y: &[f64], config: &GbmConfig) -> Result<GbmModel> {
    config.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "feature matrix has {} rows, target has {} values",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Dimension("cannot fit on an empty dataset".into()));
    }

    let intercept = mean(y);
    let mut residuals: Vec<f64> = y.iter().map(|v| v - intercept).collect();
    let sorted = presort(x);
    let mut in_leaf = vec![false; x.nrows()];
    let mut fitted = vec![0.0; x.nrows()];
    let mut trees = Vec::with_capacity(config.iterations);

    for _ in 0..config.iterations {
        if residuals.iter().all(|&r| r == 0.0) {
            break;
        }
        let tree = fit_tree_presorted(
            x,
            &residuals,
            config.max_leaves,
            config.min_leaf,
            &sorted,
            &mut in_leaf,
            &mut fitted,
        );
        for (r, f) in residuals.iter_mut().zip(fitted.iter()) {
            *r -= config.learning_rate * f;
        }
        trees.push(tree);
    }

    Ok(GbmModel {
        intercept,
        learning_rate: config.learning_rate,
        iterations: config.iterations,
        trees,
    })
}

const TEXT_MAGIC: &str = "gbm-text/1";

impl GbmModel {
    /// Serializes to the versioned `gbm-text/1` line format. Floats are
    /// written as shortest round-trip decimals, so reloading is bit-exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(TEXT_MAGIC);
        out.push('\n');
        out.push_str(&format!("intercept {}\n", self.intercept));
        out.push_str(&format!("learning_rate {}\n", self.learning_rate));
        out.push_str(&format!("iterations {}\n", self.iterations));
        out.push_str(&format!("trees {}\n", self.trees.len()));
        for tree in &self.trees {
            out.push_str(&format!("tree {}\n", tree.nodes.len()));
            for node in &tree.nodes {
                match node {
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => out.push_str(&format!("split {feature} {threshold} {left} {right}\n")),
                    TreeNode::Leaf { value } => out.push_str(&format!("leaf {value}\n")),
                }
            }
        }
        out
    }

    /// Parses the `gbm-text/1` format, validating structure and values.
    pub fn from_text(text: &str) -> Result<GbmModel> {
        let bad = |msg: String| Error::ModelFormat(msg);
        let mut lines = text.lines();
        let magic = lines.next().ok_or_else(|| bad("empty model file".into()))?;
        if magic.trim() != TEXT_MAGIC {
            return Err(bad(format!(
                "unsupported model format '{}', expected '{TEXT_MAGIC}'",
                magic.trim()
            )));
        }

        fn field<'a>(
            lines: &mut std::str::Lines<'a>,
            key: &str,
        ) -> Result<&'a str> {
            let line = lines
                .next()
                .ok_or_else(|| Error::ModelFormat(format!("missing '{key}' line")))?;
            let rest = line
                .strip_prefix(key)
                .ok_or_else(|| Error::ModelFormat(format!("expected '{key}', found '{line}'")))?;
            Ok(rest.trim())
        }
        fn parse_f64(s: &str, what: &str) -> Result<f64> {
            let v: f64 = s
                .parse()
                .map_err(|_| Error::ModelFormat(format!("invalid {what} '{s}'")))?;
            if !v.is_finite() {
                return Err(Error::ModelFormat(format!("non-finite {what} '{s}'")));
            }
            Ok(v)
        }
        fn parse_count(s: &str, what: &str) -> Result<usize> {
            s.parse()
                .map_err(|_| Error::ModelFormat(format!("invalid {what} '{s}'")))
        }

        let intercept = parse_f64(field(&mut lines, "intercept")?, "intercept")?;
        let learning_rate = parse_f64(field(&mut lines, "learning_rate")?, "learning rate")?;
        if !(learning_rate > 0.0 && learning_rate <= 1.0) {
            return Err(bad(format!("learning rate {learning_rate} outside (0, 1]")));
        }
        let iterations = parse_count(field(&mut lines, "iterations")?, "iteration count")?;
        let n_trees = parse_count(field(&mut lines, "trees")?, "tree count")?;
        if n_trees > iterations {
            return Err(bad(format!(
                "{n_trees} trees exceed {iterations} iterations"
            )));
        }

        let mut trees = Vec::with_capacity(n_trees);
        for t in 0..n_trees {
            let n_nodes = parse_count(field(&mut lines, "tree")?, "node count")?;
            if n_nodes == 0 || n_nodes % 2 == 0 {
                return Err(bad(format!(
                    "tree {t} has {n_nodes} nodes; a strict binary tree needs an odd, positive count"
                )));
            }
            let mut nodes = Vec::with_capacity(n_nodes);
            let mut referenced = vec![0usize; n_nodes];
            for i in 0..n_nodes {
                let line = lines
                    .next()
                    .ok_or_else(|| bad(format!("tree {t} truncated at node {i}")))?;
                let parts: Vec<&str> = line.split_whitespace().collect();
                match parts.as_slice() {
                    ["leaf", value] => nodes.push(TreeNode::Leaf {
                        value: parse_f64(value, "leaf value")?,
                    }),
                    ["split", feature, threshold, left, right] => {
                        let left = parse_count(left, "child index")?;
                        let right = parse_count(right, "child index")?;
                        for &child in &[left, right] {
                            if child <= i || child >= n_nodes {
                                return Err(bad(format!(
                                    "tree {t} node {i} references invalid child {child}"
                                )));
                            }
                            referenced[child] += 1;
                        }
                        nodes.push(TreeNode::Split {
                            feature: parse_count(feature, "feature index")?,
                            threshold: parse_f64(threshold, "threshold")?,
                            left: left as u32,
                            right: right as u32,
                        });
                    }
                    _ => return Err(bad(format!("unrecognized node line '{line}'"))),
                }
            }
            if referenced[0] != 0 || referenced[1..].iter().any(|&c| c != 1) {
                return Err(bad(format!(
                    "tree {t} nodes are not linked into a single tree"
                )));
            }
            trees.push(RegressionTree { nodes });
        }
        if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
            return Err(bad(format!("trailing content '{extra}'")));
        }
        Ok(GbmModel {
            intercept,
            learning_rate,
            iterations,
            trees,
        })
    }
}
