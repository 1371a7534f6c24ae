//! A small, fully deterministic random-forest regressor whose only job is
//! producing feature importances for the DCI disentanglement score.
//!
//! Randomness enters solely through seeded per-tree row bootstraps; every
//! split considers all features in a fixed order, so importances are
//! equivariant under feature permutation (up to exact ties, which have
//! measure zero for continuous codes).

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{DiscoError, Result};
use crate::rng::seed_stream;

#[derive(Debug, Clone, Copy)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { trees: 10, max_depth: 8, seed: 0 }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    idx = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Forest {
    trees: Vec<Tree>,
    importances: Array1<f64>,
}

impl Forest {
    /// Total squared-error reduction attributed to each feature, summed over
    /// all splits of all trees. Non-negative; not normalized.
    pub fn importances(&self) -> &Array1<f64> {
        &self.importances
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        sum / self.trees.len() as f64
    }
}

/// Fit a regression forest of `x` (rows = samples) against `y`.
pub fn fit_forest(x: &Array2<f64>, y: &Array1<f64>, cfg: &ForestConfig) -> Result<Forest> {
    let (rows, features) = x.dim();
    if rows != y.len() {
        return Err(DiscoError::Input(format!(
            "feature matrix has {rows} rows but target has {}",
            y.len()
        )));
    }
    if rows < 2 || features == 0 {
        return Err(DiscoError::Input("forest needs >= 2 rows and >= 1 feature".into()));
    }
    if cfg.trees == 0 || cfg.max_depth == 0 {
        return Err(DiscoError::Config("forest needs trees >= 1 and max_depth >= 1".into()));
    }
    let mut importances = Array1::zeros(features);
    let mut trees = Vec::with_capacity(cfg.trees);
    for t in 0..cfg.trees {
        let mut rng = seed_stream(cfg.seed, &format!("dci-forest-tree-{t}"));
        let sample: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..rows)).collect();
        let mut builder = TreeBuilder {
            x,
            y,
            max_depth: cfg.max_depth,
            nodes: Vec::new(),
            importances: &mut importances,
        };
        builder.build(sample, 0);
        trees.push(Tree { nodes: builder.nodes });
    }
    Ok(Forest { trees, importances })
}

struct TreeBuilder<'a> {
    x: &'a Array2<f64>,
    y: &'a Array1<f64>,
    max_depth: usize,
    nodes: Vec<Node>,
    importances: &'a mut Array1<f64>,
}

impl TreeBuilder<'_> {
    /// Build the subtree over `rows`; returns its node index.
    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64;
        let sse = rows.iter().map(|&r| (self.y[r] - mean).powi(2)).sum::<f64>();
        if depth >= self.max_depth || rows.len() < 4 || sse <= 1e-12 {
            self.nodes.push(Node::Leaf { value: mean });
            return self.nodes.len() - 1;
        }
        match self.best_split(&rows, sse) {
            None => {
                self.nodes.push(Node::Leaf { value: mean });
                self.nodes.len() - 1
            }
            Some((feature, threshold, gain)) => {
                self.importances[feature] += gain;
                let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
                for &r in &rows {
                    if self.x[[r, feature]] <= threshold {
                        left_rows.push(r);
                    } else {
                        right_rows.push(r);
                    }
                }
                // Reserve our slot before recursing so child indices are known.
                self.nodes.push(Node::Leaf { value: mean });
                let idx = self.nodes.len() - 1;
                let left = self.build(left_rows, depth + 1);
                let right = self.build(right_rows, depth + 1);
                self.nodes[idx] = Node::Split { feature, threshold, left, right };
                idx
            }
        }
    }

    /// Exhaustive best split over all features: maximize SSE reduction.
    /// Returns `(feature, threshold, gain)`; `None` when no split separates
    /// the rows.
    ///
    /// Distinct features routinely induce the *same* row partition at small
    /// nodes and therefore tie exactly on gain, so ties are broken by the
    /// split threshold — a quantity intrinsic to the feature's values — to
    /// keep the fit equivariant under feature permutation. The feature index
    /// itself is only the final fallback (reachable only for duplicated
    /// columns).
    fn best_split(&self, rows: &[usize], parent_sse: f64) -> Option<(usize, f64, f64)> {
        let features = self.x.dim().1;
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order: Vec<usize> = rows.to_vec();
        for f in 0..features {
            // Deterministic order: by value, then row index for exact ties.
            order.sort_by(|&a, &b| {
                self.x[[a, f]]
                    .partial_cmp(&self.x[[b, f]])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let total_sum: f64 = order.iter().map(|&r| self.y[r]).sum();
            let total_sq: f64 = order.iter().map(|&r| self.y[r] * self.y[r]).sum();
            let count = order.len() as f64;
            let mut left_sum = 0.0;
            let mut left_sq = 0.0;
            for i in 0..order.len() - 1 {
                let yr = self.y[order[i]];
                left_sum += yr;
                left_sq += yr * yr;
                let (va, vb) = (self.x[[order[i], f]], self.x[[order[i + 1], f]]);
                if va == vb {
                    continue;
                }
                let ln = (i + 1) as f64;
                let rn = count - ln;
                let left_sse = left_sq - left_sum * left_sum / ln;
                let right_sum = total_sum - left_sum;
                let right_sse = (total_sq - left_sq) - right_sum * right_sum / rn;
                let gain = parent_sse - left_sse - right_sse;
                if gain <= 1e-12 {
                    continue;
                }
                let threshold = 0.5 * (va + vb);
                let better = match best {
                    None => true,
                    Some((_, bt, bg)) => gain > bg || (gain == bg && threshold < bt),
                };
                if better {
                    best = Some((f, threshold, gain));
                }
            }
        }
        best
    }
}
